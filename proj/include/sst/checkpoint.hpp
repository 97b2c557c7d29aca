#pragma once
// Binary model checkpoints. A file carries the architecture config, the
// element type, the training-step counter, parameters, optimizer moments,
// optional adapters, and a trailing content checksum, so a load either
// reproduces the saved state bitwise or fails loudly.

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "sst/hash.hpp"
#include "sst/model.hpp"

namespace sst {

namespace ckpt {

constexpr char kMagic[8] = {'S', 'S', 'T', 'C', 'K', 'P', 'T', '1'};

inline void put_bytes(std::string& buf, const void* p, size_t n) {
    buf.append(static_cast<const char*>(p), n);
}

template <typename T>
void put(std::string& buf, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    put_bytes(buf, &v, sizeof(v));
}

class Reader {
public:
    Reader(const std::string& bytes, std::string path)
        : bytes_(bytes), path_(std::move(path)) {}

    void read_bytes(void* out, size_t n) {
        expect(pos_ + n <= bytes_.size(), Errc::checksum_mismatch,
               "checkpoint truncated: " + path_);
        std::memcpy(out, bytes_.data() + pos_, n);
        pos_ += n;
    }

    template <typename T>
    T read() {
        static_assert(std::is_trivially_copyable_v<T>);
        T v;
        read_bytes(&v, sizeof(v));
        return v;
    }

    size_t pos() const { return pos_; }

private:
    const std::string& bytes_;
    std::string path_;
    size_t pos_ = 0;
};

template <typename Real>
void put_vec(std::string& buf, const std::vector<Real>& v) {
    put<uint64_t>(buf, v.size());
    put_bytes(buf, v.data(), v.size() * sizeof(Real));
}

template <typename Real>
void read_vec(Reader& r, std::vector<Real>& v, size_t expected) {
    uint64_t n = r.read<uint64_t>();
    expect(n == expected, Errc::version_mismatch, "checkpoint tensor size mismatch");
    v.resize(n);
    r.read_bytes(v.data(), n * sizeof(Real));
}

inline void put_config(std::string& buf, const ModelConfig& c) {
    put<int64_t>(buf, c.vocab_size);
    put<int64_t>(buf, c.d_model);
    put<int64_t>(buf, c.n_layers);
    put<int64_t>(buf, c.n_heads);
    put<int64_t>(buf, c.d_ff);
    put<int64_t>(buf, c.max_seq_len);
    put<uint64_t>(buf, c.rng_seed);
}

inline ModelConfig read_config(Reader& r) {
    ModelConfig c;
    c.vocab_size = static_cast<int>(r.read<int64_t>());
    c.d_model = static_cast<int>(r.read<int64_t>());
    c.n_layers = static_cast<int>(r.read<int64_t>());
    c.n_heads = static_cast<int>(r.read<int64_t>());
    c.d_ff = static_cast<int>(r.read<int64_t>());
    c.max_seq_len = static_cast<int>(r.read<int64_t>());
    c.rng_seed = r.read<uint64_t>();
    return c;
}

} // namespace ckpt

template <typename Real>
void save_checkpoint(const Model<Real>& m, const std::string& path,
                     const LoraAdapters<Real>* lora = nullptr) {
    std::string buf;
    ckpt::put_bytes(buf, ckpt::kMagic, sizeof(ckpt::kMagic));
    ckpt::put<uint32_t>(buf, static_cast<uint32_t>(sizeof(Real)));
    ckpt::put_config(buf, m.cfg);
    ckpt::put<int64_t>(buf, m.step);
    ckpt::put_vec(buf, m.params);
    ckpt::put_vec(buf, m.adam_m);
    ckpt::put_vec(buf, m.adam_v);
    ckpt::put<uint8_t>(buf, lora ? 1 : 0);
    if (lora) {
        ckpt::put<int64_t>(buf, lora->cfg.rank);
        ckpt::put<double>(buf, lora->cfg.alpha);
        ckpt::put<int64_t>(buf, lora->step);
        ckpt::put_vec(buf, lora->params);
        ckpt::put_vec(buf, lora->adam_m);
        ckpt::put_vec(buf, lora->adam_v);
    }
    uint64_t checksum = fnv1a64(buf.data(), buf.size());
    ckpt::put<uint64_t>(buf, checksum);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    expect(f.good(), Errc::io_failure, "save_checkpoint: cannot open " + path);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    expect(f.good(), Errc::io_failure, "save_checkpoint: write failed for " + path);
}

namespace ckpt {

// reads the whole file, verifies the trailer checksum, positions a Reader
// just past the magic, and hands back the verified payload
inline std::string read_verified(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    expect(f.good(), Errc::io_failure, "load_checkpoint: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    expect(bytes.size() >= sizeof(kMagic) + sizeof(uint64_t), Errc::checksum_mismatch,
           "checkpoint too short: " + path);
    uint64_t stored;
    std::memcpy(&stored, bytes.data() + bytes.size() - sizeof(uint64_t), sizeof(uint64_t));
    uint64_t actual = fnv1a64(bytes.data(), bytes.size() - sizeof(uint64_t));
    expect(stored == actual, Errc::checksum_mismatch, "checkpoint checksum mismatch: " + path);
    expect(std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) == 0, Errc::version_mismatch,
           "not a checkpoint file: " + path);
    bytes.resize(bytes.size() - sizeof(uint64_t));
    return bytes;
}

} // namespace ckpt

// loads into an existing state whose config must match the file exactly;
// returns true when the file also carried adapters (loaded into *lora if given)
template <typename Real>
bool load_checkpoint(Model<Real>& m, const std::string& path, LoraAdapters<Real>* lora = nullptr) {
    std::string bytes = ckpt::read_verified(path);
    ckpt::Reader r(bytes, path);
    char magic[sizeof(ckpt::kMagic)];
    r.read_bytes(magic, sizeof(magic));
    uint32_t elem = r.read<uint32_t>();
    expect(elem == sizeof(Real), Errc::version_mismatch,
           "checkpoint element width " + std::to_string(elem) + " != " +
               std::to_string(sizeof(Real)));
    ModelConfig stored = ckpt::read_config(r);
    expect(stored.same_shape(m.cfg), Errc::version_mismatch,
           "checkpoint architecture differs from the model being loaded");
    m.cfg = stored; // adopt the stored rng_seed for provenance
    m.step = r.read<int64_t>();
    ckpt::read_vec(r, m.params, param_count(m.cfg));
    ckpt::read_vec(r, m.adam_m, param_count(m.cfg));
    ckpt::read_vec(r, m.adam_v, param_count(m.cfg));
    m.remap();

    uint8_t has_lora = r.read<uint8_t>();
    if (has_lora) {
        LoraConfig lc;
        lc.rank = static_cast<int>(r.read<int64_t>());
        lc.alpha = r.read<double>();
        int64_t lstep = r.read<int64_t>();
        LoraAdapters<Real> fresh(m.cfg, lc, 0);
        fresh.step = lstep;
        size_t n = fresh.params.size();
        ckpt::read_vec(r, fresh.params, n);
        ckpt::read_vec(r, fresh.adam_m, n);
        ckpt::read_vec(r, fresh.adam_v, n);
        fresh.map_views(m.cfg);
        expect(lora != nullptr, Errc::version_mismatch,
               "checkpoint carries adapters but none were requested: " + path);
        *lora = std::move(fresh);
    } else if (lora) {
        fail(Errc::version_mismatch, "checkpoint has no adapters: " + path);
    }
    return has_lora != 0;
}

// constructs a model directly from the stored config (CLI convenience)
template <typename Real>
Model<Real> read_model(const std::string& path) {
    std::string bytes = ckpt::read_verified(path);
    ckpt::Reader r(bytes, path);
    char magic[sizeof(ckpt::kMagic)];
    r.read_bytes(magic, sizeof(magic));
    uint32_t elem = r.read<uint32_t>();
    expect(elem == sizeof(Real), Errc::version_mismatch,
           "checkpoint element width " + std::to_string(elem) + " != " +
               std::to_string(sizeof(Real)));
    ModelConfig stored = ckpt::read_config(r);
    Model<Real> m(stored);
    m.step = r.read<int64_t>();
    ckpt::read_vec(r, m.params, param_count(stored));
    ckpt::read_vec(r, m.adam_m, param_count(stored));
    ckpt::read_vec(r, m.adam_v, param_count(stored));
    m.remap();
    return m;
}

// peeks whether a checkpoint carries adapters without loading tensors
template <typename Real>
bool checkpoint_has_adapters(const std::string& path) {
    std::string bytes = ckpt::read_verified(path);
    ckpt::Reader r(bytes, path);
    char magic[sizeof(ckpt::kMagic)];
    r.read_bytes(magic, sizeof(magic));
    r.read<uint32_t>();
    ModelConfig stored = ckpt::read_config(r);
    r.read<int64_t>();
    size_t skip = 3 * (sizeof(uint64_t) + param_count(stored) * sizeof(Real));
    std::vector<char> sink(skip);
    r.read_bytes(sink.data(), skip);
    return r.read<uint8_t>() != 0;
}

} // namespace sst
