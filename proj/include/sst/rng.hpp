#pragma once
// Deterministic RNG utilities. All randomness in the lab flows through Rng so
// that a run is a pure function of (master seed, config). Independent streams
// are derived by hashing (purpose, index) into a child seed with splitmix64,
// which keeps parallel / reordered consumers from perturbing each other.

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "sst/errors.hpp"

namespace sst {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// order-independent seed derivation: child = mix(master, purpose, index)
inline uint64_t derive_seed(uint64_t master, std::string_view purpose, uint64_t index = 0) {
    uint64_t h = splitmix64(master);
    for (char c : purpose) h = splitmix64(h ^ static_cast<uint8_t>(c));
    return splitmix64(h ^ splitmix64(index));
}

class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), gen_(seed) {}

    uint64_t seed() const { return seed_; }

    uint64_t next_u64() { return gen_(); }

    // uniform in [0,1) with 53 random bits, matches the usual double mantissa trick
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // inclusive bounds; unbiased via masked rejection
    int64_t uniform_int(int64_t lo, int64_t hi) {
        expect(lo <= hi, Errc::step_out_of_range, "uniform_int: lo > hi");
        uint64_t range = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo);
        if (range == UINT64_MAX) return static_cast<int64_t>(gen_());
        uint64_t span = range + 1;
        uint64_t mask = ~0ull >> std::countl_zero(span | 1);
        for (;;) {
            uint64_t v = gen_() & mask;
            if (v < span) return lo + static_cast<int64_t>(v);
        }
    }

    // standard normal via Box-Muller, second value cached
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01(), u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // index sampled proportionally to probs (assumed nonnegative, summing ~1);
    // falls back to the last positive entry if rounding leaves the scan short
    size_t categorical(const std::vector<double>& probs) {
        expect(!probs.empty(), Errc::empty_group, "categorical: empty probs");
        double u = uniform01();
        double acc = 0.0;
        size_t last_pos = 0;
        for (size_t i = 0; i < probs.size(); ++i) {
            if (probs[i] > 0.0) last_pos = i;
            acc += probs[i];
            if (u < acc) return i;
        }
        return last_pos;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        // Fisher-Yates with our own bounded draw so the permutation is
        // implementation-independent (std::shuffle is not portable)
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

    // children depend only on (construction seed, purpose, index), never on
    // how much the parent has been consumed
    Rng child(std::string_view purpose, uint64_t index = 0) const {
        return Rng(derive_seed(seed_, purpose, index));
    }

private:
    uint64_t seed_;
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace sst
