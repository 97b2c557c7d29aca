#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <set>

#include "sst/sampler.hpp"

using namespace sst;

static Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::io_failure;
}

namespace {

ModelConfig micro_cfg() {
    ModelConfig c;
    c.vocab_size = 13;
    c.d_model = 16;
    c.n_layers = 2;
    c.n_heads = 2;
    c.d_ff = 32;
    c.max_seq_len = 12;
    c.rng_seed = 7;
    return c;
}

} // namespace

TEST_CASE("incremental decoding reproduces the full forward pass", "[sampler]") {
    ModelConfig cfg = micro_cfg();
    Model<double> m(cfg);
    std::vector<int> ids = {0, 5, 9, 3, 4, 11, 2, 8, 1};

    Activations<double> acts;
    forward(m, ids, acts);

    KvCache<double> cache(cfg);
    std::vector<double> step_logits;
    for (size_t t = 0; t < ids.size(); ++t) {
        forward_step(m, ids[t], cache, step_logits);
        for (int vcol = 0; vcol < cfg.vocab_size; ++vcol) {
            double full = acts.logits[t * static_cast<size_t>(cfg.vocab_size) + static_cast<size_t>(vcol)];
            REQUIRE(std::fabs(step_logits[static_cast<size_t>(vcol)] - full) < 1e-10);
        }
    }
    CHECK(cache.T == static_cast<int>(ids.size()));

    // again with nonzero adapters in the path
    LoraConfig lc;
    lc.rank = 3;
    lc.alpha = 6.0;
    LoraAdapters<double> lora(cfg, lc, 11);
    Rng r(2);
    for (auto& p : lora.params) p = 0.05 * r.normal();
    lora.map_views(cfg);

    forward(m, ids, acts, &lora);
    cache.reset();
    for (size_t t = 0; t < ids.size(); ++t) {
        forward_step(m, ids[t], cache, step_logits, &lora);
        for (int vcol = 0; vcol < cfg.vocab_size; ++vcol) {
            double full = acts.logits[t * static_cast<size_t>(cfg.vocab_size) + static_cast<size_t>(vcol)];
            REQUIRE(std::fabs(step_logits[static_cast<size_t>(vcol)] - full) < 1e-10);
        }
    }

    CHECK(code_of([&] {
              KvCache<double> tiny(cfg);
              std::vector<double> lg;
              for (int t = 0; t < cfg.max_seq_len + 1; ++t) forward_step(m, 1, tiny, lg);
          }) == Errc::sequence_too_long);
}

TEST_CASE("temperature zero is greedy and seed-independent", "[sampler]") {
    ModelConfig cfg = micro_cfg();
    Model<double> m(cfg);
    SampleConfig sc;
    sc.temperature = 0.0;
    sc.max_new_tokens = 8;
    sc.eos_id = -1; // untrained model: don't stop early

    sc.rng_seed = 1;
    auto a = sample(m, {0, 3}, sc);
    sc.rng_seed = 999;
    auto b = sample(m, {0, 3}, sc);
    CHECK(a == b);
    CHECK(a.size() == 8);

    // greedy step must equal the argmax of the step logits
    KvCache<double> cache(cfg);
    std::vector<double> lg;
    forward_step(m, 0, cache, lg);
    forward_step(m, 3, cache, lg);
    int argmax = static_cast<int>(std::max_element(lg.begin(), lg.end()) - lg.begin());
    CHECK(a[0] == argmax);
}

TEST_CASE("full-softmax sampling matches the distribution by chi-square", "[sampler]") {
    // fixed 13-symbol single-step distribution; 100k draws; dof = 12
    Rng init(77);
    std::vector<double> logits(13);
    for (auto& v : logits) v = init.normal();

    double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double denom = 0;
    for (size_t i = 0; i < p.size(); ++i) denom += (p[i] = std::exp(logits[i] - mx));
    for (auto& v : p) v /= denom;

    const int n = 100000;
    std::vector<int> counts(logits.size(), 0);
    Rng rng(123);
    for (int i = 0; i < n; ++i) ++counts[static_cast<size_t>(nucleus_pick(logits, 1.0, 1.0, rng))];

    double chi2 = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        double expected = n * p[i];
        REQUIRE(expected > 5.0); // classical validity condition for the test
        double d = counts[i] - expected;
        chi2 += d * d / expected;
    }
    // 99th percentile of chi-square with 12 degrees of freedom
    CHECK(chi2 < 26.217);
}

TEST_CASE("top-p keeps only the smallest sufficient prefix, renormalized", "[sampler]") {
    // probs 0.5/0.3/0.15/0.05; top_p=0.75 keeps {0,1} renormalized to 0.625/0.375
    std::vector<double> probs = {0.5, 0.3, 0.15, 0.05};
    std::vector<double> logits(probs.size());
    for (size_t i = 0; i < probs.size(); ++i) logits[i] = std::log(probs[i]);

    Rng rng(5);
    const int n = 20000;
    std::vector<int> counts(probs.size(), 0);
    for (int i = 0; i < n; ++i) ++counts[static_cast<size_t>(nucleus_pick(logits, 1.0, 0.75, rng))];
    CHECK(counts[2] == 0);
    CHECK(counts[3] == 0);
    double f0 = static_cast<double>(counts[0]) / n;
    CHECK(f0 == Catch::Approx(0.625).margin(0.015));

    // top_p small enough keeps exactly the single most likely token
    for (int i = 0; i < 100; ++i) CHECK(nucleus_pick(logits, 1.0, 0.4, rng) == 0);
}

TEST_CASE("sampling stops at eos, cap, and context edge", "[sampler]") {
    ModelConfig cfg = micro_cfg();
    Model<double> m(cfg);
    SampleConfig sc;

    sc.max_new_tokens = 0;
    CHECK(sample(m, {0}, sc).empty());

    // make the greedy first token the stop symbol: generation ends right there
    sc.temperature = 0.0;
    sc.max_new_tokens = 50;
    sc.eos_id = -1;
    auto greedy = sample(m, {0, 3}, sc);
    sc.eos_id = greedy[0];
    auto stopped = sample(m, {0, 3}, sc);
    REQUIRE(stopped.size() == 1);
    CHECK(stopped[0] == greedy[0]);

    // 12-token window, 5-token prompt: at most 8 new tokens (the last one is
    // chosen from the final in-window logits and never fed back)
    sc.temperature = 1.0;
    sc.eos_id = -1;
    sc.max_new_tokens = 100;
    sc.rng_seed = 3;
    auto capped = sample(m, {0, 1, 2, 3, 4}, sc);
    CHECK(capped.size() == static_cast<size_t>(cfg.max_seq_len) - 5 + 1);

    CHECK(code_of([&] {
              SampleConfig bad = sc;
              bad.temperature = -0.1;
              sample(m, {0}, bad);
          }) == Errc::config_parse);
    CHECK(code_of([&] {
              SampleConfig bad = sc;
              bad.top_p = 0.0;
              sample(m, {0}, bad);
          }) == Errc::config_parse);
    CHECK(code_of([&] {
              SampleConfig bad = sc;
              bad.top_p = 1.5;
              sample(m, {0}, bad);
          }) == Errc::config_parse);
    CHECK(code_of([&] { sample(m, {}, sc); }) == Errc::empty_group);
    CHECK(code_of([&] {
              std::vector<int> long_prompt(static_cast<size_t>(cfg.max_seq_len) + 1, 1);
              sample(m, long_prompt, sc);
          }) == Errc::sequence_too_long);
}

TEST_CASE("stochastic decoding is a pure function of the seed", "[sampler]") {
    ModelConfig cfg = micro_cfg();
    Model<double> m(cfg);
    SampleConfig sc;
    sc.temperature = 0.8;
    sc.top_p = 0.95;
    sc.max_new_tokens = 8;
    sc.eos_id = -1;

    sc.rng_seed = 42;
    auto a1 = sample(m, {0, 7}, sc);
    auto a2 = sample(m, {0, 7}, sc);
    CHECK(a1 == a2);

    sc.rng_seed = 43;
    auto b = sample(m, {0, 7}, sc);
    CHECK(a1 != b); // frozen check: these two seeds diverge on this model
}
