#pragma once
// Flat key = value run configs with a schema version and typed accessors, plus
// the run manifest (resolved config, input/artifact hashes, wall time) that
// makes every artifact replayable from the manifest alone.

#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sst/errors.hpp"
#include "sst/hash.hpp"
#include "sst/strutil.hpp"

namespace sst {

inline constexpr int kConfigSchemaVersion = 1;

namespace detail {

inline int64_t parse_int_value(const std::string& key, const std::string& value) {
    size_t used = 0;
    int64_t out = 0;
    try {
        out = std::stoll(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    expect(used == value.size() && !value.empty(), Errc::config_parse,
           "key '" + key + "': not an integer: '" + value + "'");
    return out;
}

inline double parse_double_value(const std::string& key, const std::string& value) {
    size_t used = 0;
    double out = 0;
    try {
        out = std::stod(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    expect(used == value.size() && !value.empty(), Errc::config_parse,
           "key '" + key + "': not a number: '" + value + "'");
    return out;
}

} // namespace detail

struct KvConfig {
    std::map<std::string, std::string> values; // schema_version lives outside
    int schema_version = kConfigSchemaVersion;

    bool has(const std::string& key) const { return values.count(key) != 0; }

    void set(const std::string& key, const std::string& value) { values[key] = value; }

    const std::string& get_string(const std::string& key) const {
        auto it = values.find(key);
        expect(it != values.end(), Errc::missing_key, "config key '" + key + "' is required");
        return it->second;
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values.find(key);
        return it == values.end() ? fallback : it->second;
    }

    int64_t get_int(const std::string& key) const {
        return detail::parse_int_value(key, get_string(key));
    }

    int64_t get_int(const std::string& key, int64_t fallback) const {
        return has(key) ? get_int(key) : fallback;
    }

    uint64_t get_u64(const std::string& key, uint64_t fallback) const {
        if (!has(key)) return fallback;
        int64_t v = get_int(key);
        expect(v >= 0, Errc::config_parse, "key '" + key + "': must be nonnegative");
        return static_cast<uint64_t>(v);
    }

    double get_double(const std::string& key) const {
        return detail::parse_double_value(key, get_string(key));
    }

    double get_double(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const std::string& v = get_string(key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        fail(Errc::config_parse, "key '" + key + "': not a bool: '" + v + "'");
    }

    // comma-separated nonnegative integers, e.g. "0,1000,5000"
    std::vector<uint64_t> get_u64_list(const std::string& key,
                                       const std::vector<uint64_t>& fallback) const {
        if (!has(key)) return fallback;
        std::vector<uint64_t> out;
        for (const auto& part : split(get_string(key), ',')) {
            std::string p(trim(part));
            int64_t v = detail::parse_int_value(key, p);
            expect(v >= 0, Errc::config_parse, "key '" + key + "': must be nonnegative");
            out.push_back(static_cast<uint64_t>(v));
        }
        expect(!out.empty(), Errc::config_parse, "key '" + key + "': empty list");
        return out;
    }

    // rejects any key outside the given set; the error names the intruder
    void require_known(const std::set<std::string>& allowed) const {
        for (const auto& [key, value] : values)
            expect(allowed.count(key) != 0, Errc::config_parse,
                   "unknown config key '" + key + "'");
    }

    // canonical text form: schema first, then keys in sorted order
    std::string canonical_text() const {
        std::ostringstream os;
        os << "schema_version = " << schema_version << "\n";
        for (const auto& [key, value] : values) os << key << " = " << value << "\n";
        return os.str();
    }
};

inline KvConfig parse_kv_config(const std::string& text, const std::string& source = "<config>") {
    KvConfig cfg;
    bool saw_schema = false;
    std::istringstream in(text);
    std::string raw;
    size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line(trim(raw));
        if (line.empty() || line.front() == '#') continue;
        size_t eq = line.find('=');
        expect(eq != std::string::npos, Errc::config_parse,
               source + ":" + std::to_string(lineno) + ": expected 'key = value'");
        std::string key(trim(line.substr(0, eq)));
        std::string value(trim(line.substr(eq + 1)));
        expect(!key.empty(), Errc::config_parse,
               source + ":" + std::to_string(lineno) + ": empty key");
        if (key == "schema_version") {
            expect(!saw_schema, Errc::config_parse, source + ": duplicate schema_version");
            saw_schema = true;
            int64_t v = detail::parse_int_value(key, value);
            expect(v == kConfigSchemaVersion, Errc::schema_mismatch,
                   source + ": schema_version " + std::to_string(v) + " != supported " +
                       std::to_string(kConfigSchemaVersion));
            cfg.schema_version = static_cast<int>(v);
            continue;
        }
        expect(cfg.values.count(key) == 0, Errc::config_parse,
               source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
        cfg.values[key] = value;
    }
    expect(saw_schema, Errc::config_parse, source + ": missing schema_version");
    return cfg;
}

inline KvConfig load_kv_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    expect(f.good(), Errc::missing_input, "config file not found: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_kv_config(text, path);
}

// seed precedence: explicit CLI override, then the config, then SST_LAB_SEED,
// then zero
inline uint64_t resolve_seed(const KvConfig& cfg, std::optional<uint64_t> cli_seed) {
    if (cli_seed) return *cli_seed;
    if (cfg.has("seed")) return cfg.get_u64("seed", 0);
    if (const char* env = std::getenv("SST_LAB_SEED")) {
        std::string v(env);
        if (!v.empty()) return static_cast<uint64_t>(detail::parse_int_value("SST_LAB_SEED", v));
    }
    return 0;
}

// --- run manifest -------------------------------------------------------------------------

struct Manifest {
    std::string subcommand;
    int schema_version = kConfigSchemaVersion;
    uint64_t seed = 0;
    std::map<std::string, std::string> config;          // resolved key -> value
    std::map<std::string, std::string> input_hashes;    // path -> content hash
    std::map<std::string, std::string> artifact_hashes; // path -> content hash
    double wall_time_s = 0;
};

inline void manifest_add_input(Manifest& m, const std::string& path) {
    m.input_hashes[path] = hex64(hash_file(path));
}

inline void manifest_add_artifact(Manifest& m, const std::string& path) {
    m.artifact_hashes[path] = hex64(hash_file(path));
}

// one hash standing for the whole artifact set; equal hashes mean every
// artifact matched byte for byte
inline std::string manifest_artifact_digest(const Manifest& m) {
    std::string acc;
    for (const auto& [path, hash] : m.artifact_hashes) acc += path + "=" + hash + "\n";
    return hex64(fnv1a64(acc));
}

inline void write_manifest(const std::string& path, const Manifest& m) {
    nlohmann::ordered_json j;
    j["schema_version"] = m.schema_version;
    j["subcommand"] = m.subcommand;
    j["seed"] = m.seed;
    j["config"] = m.config;
    j["inputs"] = m.input_hashes;
    j["artifacts"] = m.artifact_hashes;
    j["artifact_digest"] = manifest_artifact_digest(m);
    j["wall_time_s"] = m.wall_time_s;
    std::ofstream f(path, std::ios::binary);
    expect(f.good(), Errc::io_failure, "manifest: cannot open " + path);
    f << j.dump(2) << "\n";
    expect(f.good(), Errc::io_failure, "manifest: write failed for " + path);
}

inline Manifest read_manifest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    expect(f.good(), Errc::missing_input, "manifest not found: " + path);
    nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    expect(!j.is_discarded(), Errc::schema_mismatch, "manifest: invalid JSON in " + path);
    Manifest m;
    try {
        m.schema_version = j.at("schema_version").get<int>();
        m.subcommand = j.at("subcommand").get<std::string>();
        m.seed = j.at("seed").get<uint64_t>();
        m.config = j.at("config").get<std::map<std::string, std::string>>();
        m.input_hashes = j.at("inputs").get<std::map<std::string, std::string>>();
        m.artifact_hashes = j.at("artifacts").get<std::map<std::string, std::string>>();
        m.wall_time_s = j.at("wall_time_s").get<double>();
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::schema_mismatch, "manifest " + path + ": " + e.what());
    }
    return m;
}

} // namespace sst
