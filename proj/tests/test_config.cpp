#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>

#include "sst/config.hpp"
#include "sst/svgplot.hpp"

using namespace sst;

static Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::io_failure;
}

static std::string message_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

static std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

TEST_CASE("key-value configs parse with a schema gate", "[config]") {
    KvConfig cfg = parse_kv_config("# run config\n"
                                   "schema_version = 1\n"
                                   "\n"
                                   "epochs = 3\n"
                                   "lr_max=2e-3\n"
                                   "  out_name =  model.ckpt  \n");
    CHECK(cfg.schema_version == 1);
    CHECK(cfg.get_int("epochs") == 3);
    CHECK(cfg.get_double("lr_max") == 2e-3);
    CHECK(cfg.get_string("out_name") == "model.ckpt");
    CHECK(cfg.values.size() == 3);

    SECTION("rejections name the offender") {
        CHECK(code_of([] { parse_kv_config("epochs = 3\n"); }) == Errc::config_parse);
        CHECK(code_of([] { parse_kv_config("schema_version = 2\n"); }) == Errc::schema_mismatch);
        CHECK(code_of([] { parse_kv_config("schema_version = 1\nepochs\n"); }) ==
              Errc::config_parse);
        CHECK(code_of([] { parse_kv_config("schema_version = 1\n= 3\n"); }) == Errc::config_parse);
        CHECK(code_of([] { parse_kv_config("schema_version = 1\na = 1\na = 2\n"); }) ==
              Errc::config_parse);
        CHECK(message_of([] { parse_kv_config("schema_version = 1\na = 1\na = 2\n"); })
                  .find("'a'") != std::string::npos);
        CHECK(code_of([] {
                  parse_kv_config("schema_version = 1\nschema_version = 1\n");
              }) == Errc::config_parse);
    }

    SECTION("typed accessors validate and name their key") {
        CHECK(code_of([&] { cfg.get_string("absent"); }) == Errc::missing_key);
        CHECK(cfg.get_int("absent", 7) == 7);
        CHECK(cfg.get_double("absent", 0.5) == 0.5);
        CHECK(cfg.get_bool("absent", true));
        KvConfig bad = cfg;
        bad.set("epochs", "three");
        CHECK(code_of([&] { bad.get_int("epochs"); }) == Errc::config_parse);
        CHECK(message_of([&] { bad.get_int("epochs"); }).find("'epochs'") != std::string::npos);
        bad.set("flag", "maybe");
        CHECK(code_of([&] { bad.get_bool("flag", false); }) == Errc::config_parse);
        bad.set("flag", "true");
        CHECK(bad.get_bool("flag", false));
        bad.set("flag", "0");
        CHECK_FALSE(bad.get_bool("flag", true));
        bad.set("n", "-4");
        CHECK(code_of([&] { bad.get_u64("n", 0); }) == Errc::config_parse);
    }

    SECTION("integer lists split on commas") {
        KvConfig c = parse_kv_config("schema_version = 1\nsizes = 0, 1000 ,5000\n");
        CHECK(c.get_u64_list("sizes", {}) == std::vector<uint64_t>{0, 1000, 5000});
        CHECK(c.get_u64_list("absent", {7}) == std::vector<uint64_t>{7});
        c.set("sizes", "1,,2");
        CHECK(code_of([&] { c.get_u64_list("sizes", {}); }) == Errc::config_parse);
    }

    SECTION("unknown keys are rejected by name") {
        CHECK_NOTHROW(cfg.require_known({"epochs", "lr_max", "out_name"}));
        CHECK(code_of([&] { cfg.require_known({"epochs", "lr_max"}); }) == Errc::config_parse);
        CHECK(message_of([&] { cfg.require_known({"epochs"}); }).find("'lr_max'") !=
              std::string::npos);
    }

    SECTION("canonical text is sorted and stable") {
        CHECK(cfg.canonical_text() == "schema_version = 1\n"
                                      "epochs = 3\n"
                                      "lr_max = 2e-3\n"
                                      "out_name = model.ckpt\n");
    }

    SECTION("missing config file") {
        CHECK(code_of([] { load_kv_config("/nonexistent/sst.cfg"); }) == Errc::missing_input);
    }
}

TEST_CASE("seed precedence: flag, config, environment, zero", "[config]") {
    KvConfig with_seed = parse_kv_config("schema_version = 1\nseed = 11\n");
    KvConfig without = parse_kv_config("schema_version = 1\n");

    unsetenv("SST_LAB_SEED");
    CHECK(resolve_seed(with_seed, 99) == 99);
    CHECK(resolve_seed(with_seed, std::nullopt) == 11);
    CHECK(resolve_seed(without, std::nullopt) == 0);

    setenv("SST_LAB_SEED", "42", 1);
    CHECK(resolve_seed(without, std::nullopt) == 42);
    CHECK(resolve_seed(with_seed, std::nullopt) == 11); // config outranks env
    CHECK(resolve_seed(without, 7) == 7);
    unsetenv("SST_LAB_SEED");
}

TEST_CASE("manifests round-trip and digest the artifact set", "[config]") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "sst_manifest_test";
    fs::create_directories(dir);
    fs::path data = dir / "data.jsonl";
    std::ofstream(data) << "{\"id\":\"t\"}\n";

    Manifest m;
    m.subcommand = "gen-data";
    m.seed = 7;
    m.config = {{"count", "4"}, {"out_name", "data.jsonl"}};
    manifest_add_artifact(m, data.string());
    m.wall_time_s = 0.25;

    fs::path mp = dir / "manifest.json";
    write_manifest(mp.string(), m);
    Manifest back = read_manifest(mp.string());
    CHECK(back.subcommand == "gen-data");
    CHECK(back.seed == 7);
    CHECK(back.config == m.config);
    CHECK(back.artifact_hashes == m.artifact_hashes);
    CHECK(back.wall_time_s == 0.25);
    CHECK(manifest_artifact_digest(back) == manifest_artifact_digest(m));

    SECTION("digest moves with artifact bytes") {
        Manifest other = m;
        std::ofstream(data) << "{\"id\":\"changed\"}\n";
        other.artifact_hashes.clear();
        manifest_add_artifact(other, data.string());
        CHECK(manifest_artifact_digest(other) != manifest_artifact_digest(m));
    }

    SECTION("writing twice is byte-identical") {
        fs::path mp2 = dir / "manifest2.json";
        write_manifest(mp2.string(), m);
        CHECK(slurp(mp) == slurp(mp2));
    }

    CHECK(code_of([&] { read_manifest((dir / "missing.json").string()); }) ==
          Errc::missing_input);
    fs::remove_all(dir);
}

TEST_CASE("svg line plots are deterministic", "[config]") {
    namespace fs = std::filesystem;
    fs::path pa = fs::temp_directory_path() / "sst_plot_a.svg";
    fs::path pb = fs::temp_directory_path() / "sst_plot_b.svg";

    std::vector<PlotSeries> series = {
        {"easy", {{0, 0.8}, {1000, 0.6}, {5000, 0.4}}},
        {"hard", {{0, 0.8}, {1000, 0.85}}},
    };
    write_line_svg(pa.string(), "accuracy vs size", "train_size", "accuracy", series);
    std::string svg = slurp(pa);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
    CHECK(svg.find(">easy<") != std::string::npos);
    CHECK(svg.find(">hard<") != std::string::npos);
    CHECK(svg.find("accuracy vs size") != std::string::npos);

    write_line_svg(pb.string(), "accuracy vs size", "train_size", "accuracy", series);
    CHECK(slurp(pa) == slurp(pb));

    CHECK(code_of([&] { write_line_svg(pa.string(), "t", "x", "y", {}); }) ==
          Errc::empty_dataset);
    CHECK(code_of([&] {
              write_line_svg(pa.string(), "t", "x", "y", {{"s", {}}});
          }) == Errc::empty_dataset);
    fs::remove(pa);
    fs::remove(pb);
}
