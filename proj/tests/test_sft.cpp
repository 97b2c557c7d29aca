#include <catch2/catch_amalgamated.hpp>

#include <functional>

#include "sst/sft.hpp"

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

std::vector<TaskInstance> easy_tasks(int n, uint64_t seed) {
    std::vector<TaskInstance> tasks;
    Rng rng(seed);
    for (int i = 0; i < n; ++i)
        tasks.push_back(generate_task(TaskFamily::chained_arithmetic, 1, rng.next_u64()));
    return tasks;
}

struct Fixture {
    std::vector<TaskInstance> tasks;
    Vocab vocab;
    SftDataset ds;

    Fixture(int n, uint64_t seed, SftAblation ab = SftAblation::full)
        : tasks(easy_tasks(n, seed)),
          vocab(Vocab::build(vocab_corpus(tasks))),
          ds(build_sft_dataset(vocab, tasks, DataMixConfig{}, 512, ab, seed)) {}

    ModelConfig model_cfg(int d_model = 32, int n_layers = 1) const {
        ModelConfig c;
        c.vocab_size = vocab.size();
        c.d_model = d_model;
        c.n_layers = n_layers;
        c.n_heads = 2;
        c.d_ff = d_model * 2;
        c.max_seq_len = 512;
        c.rng_seed = 5;
        return c;
    }
};

} // namespace

TEST_CASE("run length, schedule endpoints, and logging cadence", "[sft]") {
    Fixture fx(10, 21);
    Model<double> m(fx.model_cfg());

    SftRunConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    cfg.loss_cfg.w_initial = 3.0;
    cfg.rng_seed = 9;
    SftResult res = train_sft(m, fx.ds, cfg);

    REQUIRE(res.steps_run == 9); // 3 epochs x ceil(10/4)
    REQUIRE(res.log.size() == 9);
    CHECK(res.log.front().weight == 3.0);
    CHECK(res.log.back().weight == 1.0);
    for (size_t i = 1; i < res.log.size(); ++i) {
        double drop = res.log[i - 1].weight - res.log[i].weight;
        CHECK(drop == Catch::Approx((3.0 - 1.0) / 8.0).margin(1e-12));
    }
    CHECK(m.step == 9);

    // each logged row satisfies the loss identity
    for (const auto& r : res.log) {
        CHECK(std::isfinite(r.total));
        CHECK(r.total >= 0.0);
    }
}

TEST_CASE("unweighted ablation pins every logged weight to one", "[sft]") {
    Fixture fx(8, 22);
    Model<double> m(fx.model_cfg());
    SftRunConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.loss_cfg.w_initial = 3.0;
    cfg.ablation = SftAblation::chain_unweighted;
    SftResult res = train_sft(m, fx.ds, cfg);
    REQUIRE(!res.log.empty());
    for (const auto& r : res.log) CHECK(r.weight == 1.0);
}

TEST_CASE("training is a pure function of the seed", "[sft]") {
    Fixture fx(10, 23);
    SftRunConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.rng_seed = 77;

    Model<double> m1(fx.model_cfg());
    Model<double> m2(fx.model_cfg());
    auto r1 = train_sft(m1, fx.ds, cfg);
    auto r2 = train_sft(m2, fx.ds, cfg);
    CHECK(m1.params == m2.params); // bitwise
    REQUIRE(r1.log.size() == r2.log.size());
    for (size_t i = 0; i < r1.log.size(); ++i) CHECK(r1.log[i].total == r2.log[i].total);

    cfg.rng_seed = 78;
    Model<double> m3(fx.model_cfg());
    train_sft(m3, fx.ds, cfg);
    CHECK(m1.params != m3.params);
}

TEST_CASE("a batch of identical rows steps like a single example", "[sft]") {
    Fixture fx(4, 24);
    ModelConfig mc = fx.model_cfg();
    const TrainExample& ex = fx.ds.examples[0];

    SftDataset twice;
    twice.examples = {ex, ex};
    auto batches = make_batches(twice, 2, 0, 0);
    REQUIRE(batches.size() == 1);

    Model<double> ma(mc), mb(mc);
    TrainContext<double> ctx;
    auto lb = sft_batch_step(ma, batches[0], 2.0, true, ctx);

    mb.zero_grad();
    auto single = loss_and_grad(mb, ex.input_ids, ex.targets, ex.chain_mask, 2.0, ctx);
    CHECK(lb.total == Catch::Approx(static_cast<double>(single.total)).margin(1e-12));
    CHECK(lb.n_tokens == 2 * single.n_tokens);
    for (size_t i = 0; i < ma.grads.size(); ++i)
        CHECK(std::fabs(ma.grads[i] - mb.grads[i]) <= 1e-12 * std::max(1.0, std::fabs(mb.grads[i])));
}

TEST_CASE("adapter-only training freezes the base weights", "[sft]") {
    Fixture fx(8, 25);
    Model<double> m(fx.model_cfg());
    SftDataset gen = build_generator_dataset(fx.vocab, fx.tasks, 512);

    LoraConfig lc;
    LoraAdapters<double> lora(m.cfg, lc, 3);
    std::vector<double> base_before = m.params;
    std::vector<double> lora_before = lora.params;

    SftRunConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    train_sft(m, gen, cfg, &lora);

    CHECK(m.params == base_before); // bitwise frozen
    CHECK(lora.params != lora_before);
    CHECK(lora.step == 4);
    CHECK(m.step == 0);
}

TEST_CASE("oversized examples are rejected before training starts", "[sft]") {
    Fixture fx(6, 26);
    ModelConfig mc = fx.model_cfg();
    mc.max_seq_len = 32; // far below any real example
    Model<double> m(mc);
    SftRunConfig cfg;
    CHECK(code_of([&] { train_sft(m, fx.ds, cfg); }) == Errc::example_too_long);
    CHECK(code_of([&] {
              SftDataset empty;
              train_sft(m, empty, cfg);
          }) == Errc::empty_dataset);
}

TEST_CASE("a small model memorizes a tiny corpus", "[sft][slow]") {
    Fixture fx(8, 27);
    ModelConfig mc = fx.model_cfg(64, 2);
    Model<float> m(mc);

    SftRunConfig cfg;
    cfg.epochs = 600; // one full batch per epoch
    cfg.batch_size = 8;
    cfg.loss_cfg.w_initial = 3.0;
    cfg.optim.lr_max = 2e-3;
    cfg.optim.lr_min = 2e-4;
    cfg.rng_seed = 1;
    SftResult res = train_sft(m, fx.ds, cfg);

    double best = res.log.front().total;
    for (const auto& r : res.log) best = std::min(best, r.total);
    CHECK(res.log.front().total > 1.0);
    CHECK(best < 0.05);
}

TEST_CASE("no-chain training starves the chain symbols", "[sft][slow]") {
    Fixture fx(12, 28, SftAblation::no_chain);
    ModelConfig mc = fx.model_cfg(48, 1);
    Model<float> m(mc);

    SftRunConfig cfg;
    cfg.epochs = 120;
    cfg.batch_size = 6;
    cfg.ablation = SftAblation::no_chain;
    cfg.optim.lr_max = 1e-3;
    cfg.optim.lr_min = 1e-4;
    train_sft(m, fx.ds, cfg);

    // at the first solution position of every prompt, the chain delimiters
    // carry negligible probability: the model never saw them
    Activations<float> acts;
    for (const auto& ex : fx.ds.examples) {
        std::vector<int> prompt(ex.input_ids.begin(),
                                ex.input_ids.begin() + static_cast<std::ptrdiff_t>(ex.prompt_tokens));
        forward(m, prompt, acts);
        const float* row = acts.logits.data() + (acts.T - 1) * static_cast<size_t>(mc.vocab_size);
        double mx = row[0];
        for (int v = 1; v < mc.vocab_size; ++v) mx = std::max(mx, static_cast<double>(row[v]));
        double denom = 0;
        for (int v = 0; v < mc.vocab_size; ++v) denom += std::exp(row[v] - mx);
        double p_open = std::exp(row[kChainOpenId] - mx) / denom;
        double p_close = std::exp(row[kChainCloseId] - mx) / denom;
        CHECK(p_open < 0.01);
        CHECK(p_close < 0.01);
    }
}
