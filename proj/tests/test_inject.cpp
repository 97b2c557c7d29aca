#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "sst/inject.hpp"

using namespace sst;

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
    SftDataset pairs;

    Fixture(int n, uint64_t seed)
        : tasks(easy_tasks(n, seed)),
          vocab(Vocab::build(vocab_corpus(tasks))),
          pairs(build_generator_dataset(vocab, tasks, 512)) {}

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

TEST_CASE("generator training touches adapters and, only when enabled, embeddings", "[inject]") {
    Fixture fx(8, 301);

    GeneratorTrainConfig cfg;
    cfg.lora.rank = 4;
    cfg.lora.alpha = 8.0;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.rng_seed = 17;

    SECTION("adapter-only: the base is bitwise frozen") {
        Model<double> m(fx.model_cfg());
        std::vector<double> before = m.params;
        LoraAdapters<double> lora(m.cfg, cfg.lora, 23);
        std::vector<double> lora_before = lora.params;

        SftResult res = train_chain_generator(m, lora, fx.pairs, cfg);
        REQUIRE(res.steps_run == 4); // 2 epochs x ceil(8/4)
        CHECK(m.params == before);
        CHECK(m.step == 0);
        CHECK(lora.step == 4);
        CHECK(lora.params != lora_before);
        for (const auto& r : res.log) CHECK(r.weight == 1.0);
    }

    SECTION("with embeddings: only the wte/wpe prefix of the base moves") {
        cfg.train_embeddings = true;
        Model<double> m(fx.model_cfg());
        std::vector<double> before = m.params;
        LoraAdapters<double> lora(m.cfg, cfg.lora, 23);

        train_chain_generator(m, lora, fx.pairs, cfg);
        size_t emb_n = embedding_param_count(m.cfg);
        bool prefix_moved = false;
        for (size_t i = 0; i < emb_n; ++i)
            if (m.params[i] != before[i]) {
                prefix_moved = true;
                break;
            }
        CHECK(prefix_moved);
        for (size_t i = emb_n; i < m.params.size(); ++i) REQUIRE(m.params[i] == before[i]);
        CHECK(m.step == 4);
        CHECK(lora.step == 4);
    }

    SECTION("adapter shape must match the config") {
        Model<double> m(fx.model_cfg());
        LoraAdapters<double> lora(m.cfg, LoraConfig{2, 4.0}, 23);
        CHECK_THROWS_AS(train_chain_generator(m, lora, fx.pairs, cfg), Error);
    }
}

TEST_CASE("chain proposals are deterministic in the seed", "[inject]") {
    Fixture fx(4, 302);
    Model<double> gen(fx.model_cfg());
    ChainGenConfig gc;
    gc.max_new_tokens = 24;

    ChainProposal a = generate_chain(gen, nullptr, fx.vocab, fx.tasks[0].statement, gc, 42);
    ChainProposal b = generate_chain(gen, nullptr, fx.vocab, fx.tasks[0].statement, gc, 42);
    CHECK(a.ok == b.ok);
    CHECK(a.chain == b.chain);
    CHECK(a.raw == b.raw);

    // at temperature zero the seed is irrelevant
    gc.temperature = 0.0;
    ChainProposal c = generate_chain(gen, nullptr, fx.vocab, fx.tasks[0].statement, gc, 1);
    ChainProposal d = generate_chain(gen, nullptr, fx.vocab, fx.tasks[0].statement, gc, 999);
    CHECK(c.raw == d.raw);

    // one token can never carry a balanced chain block
    gc.max_new_tokens = 1;
    ChainProposal tiny = generate_chain(gen, nullptr, fx.vocab, fx.tasks[0].statement, gc, 7);
    CHECK_FALSE(tiny.ok);
    CHECK(tiny.chain.empty());
}

TEST_CASE("a failed proposal falls back to the bare prompt", "[inject]") {
    Fixture fx(4, 303);
    Model<double> solver(fx.model_cfg());
    ModelConfig gcfg = fx.model_cfg();
    gcfg.rng_seed = 6;
    Model<double> gen(gcfg);

    SampleConfig sc;
    sc.temperature = 0.0;
    sc.max_new_tokens = 24;
    sc.rng_seed = 12;
    ChainGenConfig gc;
    gc.max_new_tokens = 1; // guaranteed format failure

    InjectOutcome inj =
        solve_with_injection(solver, gen, nullptr, fx.vocab, fx.tasks[1].statement, sc, gc);
    InjectOutcome plain = solve_plain(solver, fx.vocab, fx.tasks[1].statement, sc);
    CHECK_FALSE(inj.injected);
    CHECK(inj.chain.empty());
    CHECK(inj.output_text == plain.output_text);
    CHECK(inj.output_tokens == plain.output_tokens);
    CHECK(inj.answer == plain.answer);
}

TEST_CASE("an injected chain reshapes the solver prompt and token accounting", "[inject]") {
    Fixture fx(4, 304);
    Model<double> solver(fx.model_cfg());
    std::string chain = "count items → add costs → compare";

    SampleConfig sc;
    sc.temperature = 0.0;
    sc.max_new_tokens = 16;
    sc.rng_seed = 5;
    InjectOutcome out = solve_with_chain(solver, fx.vocab, fx.tasks[2].statement, &chain, sc);
    CHECK(out.injected);
    CHECK(out.chain == chain);

    // the outcome must match a hand-built injected prompt sampled with the
    // derived per-role seed, minus any trailing eos
    SampleConfig manual = sc;
    manual.rng_seed = derive_seed(sc.rng_seed, "solve", 0);
    std::vector<int> cont =
        sample(solver, make_prompt_ids(fx.vocab, fx.tasks[2].statement, &chain), manual);
    size_t expect_tokens = cont.size();
    if (!cont.empty() && cont.back() == kEosId) --expect_tokens;
    CHECK(out.output_tokens == expect_tokens);
    CHECK(out.output_text ==
          fx.vocab.decode({cont.begin(), cont.begin() + static_cast<std::ptrdiff_t>(expect_tokens)}));

    // plain path differs from the injected one on a fresh model's stream only
    // through the prompt, and reports injected = false
    InjectOutcome plain = solve_plain(solver, fx.vocab, fx.tasks[2].statement, sc);
    CHECK_FALSE(plain.injected);
}

TEST_CASE("a trained generator emits well-formed chains", "[inject][slow]") {
    Fixture fx(20, 305);
    Model<double> gen(fx.model_cfg(48, 1));

    GeneratorTrainConfig cfg;
    cfg.lora.rank = 8;
    cfg.lora.alpha = 16.0;
    cfg.epochs = 100;
    cfg.batch_size = 4;
    cfg.train_embeddings = true;
    cfg.optim.lr_max = 2e-3;
    cfg.optim.lr_min = 1e-4;
    cfg.rng_seed = 19;
    LoraAdapters<double> lora(gen.cfg, cfg.lora, 31);

    SftResult res = train_chain_generator(gen, lora, fx.pairs, cfg);
    REQUIRE(res.log.back().total < res.log.front().total);

    ChainGenConfig gc;
    gc.temperature = 0.0;
    int ok = 0;
    for (const auto& t : fx.tasks) {
        ChainProposal p = generate_chain(gen, &lora, fx.vocab, t.statement, gc, 1);
        if (p.ok) ++ok;
    }
    INFO("parse rate " << ok << "/" << fx.tasks.size());
    CHECK(ok >= 19); // >= 95%
}

TEST_CASE("injection report format", "[inject]") {
    namespace fs = std::filesystem;
    fs::path path = fs::temp_directory_path() / "sst_injection_report.csv";

    std::vector<InjectionRecord> recs;
    recs.push_back({"task-1", true, true, 57, "a → b"});
    recs.push_back({"task-2", false, false, 140, ""});
    write_injection_report(path.string(), recs);

    std::ifstream f(path);
    std::string all((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    std::string expected = "problem_id,injected,correct,output_tokens,chain_text_hash\n"
                           "task-1,1,1,57," + hex64(fnv1a64("a → b")) + "\n"
                           "task-2,0,0,140," + hex64(fnv1a64("")) + "\n";
    CHECK(all == expected);
    fs::remove(path);
}
