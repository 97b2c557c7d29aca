#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <functional>

#include "sst/grpo.hpp"

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

std::vector<TaskInstance> tasks_of(TaskFamily fam, int level, int n, uint64_t seed) {
    std::vector<TaskInstance> tasks;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) tasks.push_back(generate_task(fam, level, rng.next_u64()));
    return tasks;
}

ModelConfig small_cfg(int vocab, int d_model = 32, int n_layers = 1) {
    ModelConfig c;
    c.vocab_size = vocab;
    c.d_model = d_model;
    c.n_layers = n_layers;
    c.n_heads = 2;
    c.d_ff = d_model * 2;
    c.max_seq_len = 512;
    c.rng_seed = 5;
    return c;
}

SftDataset plan_dataset(const Vocab& v, const std::vector<TaskInstance>& tasks) {
    SftDataset ds;
    for (const auto& t : tasks) ds.examples.push_back(build_example(v, t, PromptMode::plan));
    return ds;
}

} // namespace

TEST_CASE("fidelity measures ordered step overlap", "[grpo]") {
    CHECK(chain_fidelity("a → b → c", "a → b → c") == 1.0);
    CHECK(chain_fidelity("a → b → c", "a → c") == 2.0 / 3.0);
    CHECK(chain_fidelity("a → b", "x → y → z") == 0.0);

    // symmetric, and insensitive to spacing around the arrows
    CHECK(chain_fidelity("a → c", "a → b → c") == chain_fidelity("a → b → c", "a → c"));
    CHECK(chain_fidelity("a→b→c", "a → b →  c") == 1.0);

    // order matters: a reversed chain is not a perfect match
    CHECK(chain_fidelity("a → b → c", "c → b → a") < 1.0);

    CHECK(code_of([] { chain_fidelity("", "a → b"); }) == Errc::empty_chain);
    CHECK(code_of([] { chain_fidelity("a", "  "); }) == Errc::empty_chain);
    CHECK(code_of([] { chain_fidelity("→", "a"); }) == Errc::empty_chain);
}

TEST_CASE("reward grades the answer and the plan format separately", "[grpo]") {
    TaskInstance t = generate_task(TaskFamily::chained_arithmetic, 2, 77);
    std::string good =
        compose_trace(t.gold_chain, t.gold_steps, t.gold_answer, TraceLayout::chain_leading).text;
    std::string wrong_answer =
        compose_trace(t.gold_chain, t.gold_steps, t.gold_answer + "7", TraceLayout::chain_leading)
            .text;
    std::string trailing =
        compose_trace(t.gold_chain, t.gold_steps, t.gold_answer, TraceLayout::chain_trailing).text;

    CHECK(trace_reward(good, t.gold_answer) == 1.2);
    CHECK(trace_reward(wrong_answer, t.gold_answer) == 0.2);
    CHECK(trace_reward(trailing, t.gold_answer) == 1.0); // right answer, not plan-first
    CHECK(trace_reward("gibberish with no box", t.gold_answer) == 0.0);

    // malformed markup is graded answer-only
    std::string broken = "<chain>never closed \\boxed{" + t.gold_answer + "}";
    CHECK(trace_reward(broken, t.gold_answer) == 1.0);

    // two chains disqualify the format bonus even when the layout leads
    std::string doubled = "<think><chain>a → b</chain>x<chain>c</chain></think>\\boxed{" +
                          t.gold_answer + "}";
    CHECK(trace_reward(doubled, t.gold_answer) == 1.0);
}

TEST_CASE("group advantages normalize within the group", "[grpo]") {
    std::vector<double> adv = group_advantages({1.0, 1.0, 0.0, 0.0});
    REQUIRE(adv.size() == 4);
    CHECK(adv[0] == Catch::Approx(1.0).margin(1e-6));
    CHECK(adv[1] == Catch::Approx(1.0).margin(1e-6));
    CHECK(adv[2] == Catch::Approx(-1.0).margin(1e-6));
    CHECK(adv[3] == Catch::Approx(-1.0).margin(1e-6));

    SECTION("mean zero and unit spread whenever rewards vary") {
        Rng rng(4);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> r;
            for (int i = 0; i < 8; ++i) r.push_back(rng.uniform01() < 0.5 ? 0.0 : 1.2);
            std::vector<double> a = group_advantages(r);
            double sum = 0, sq = 0;
            for (double x : a) sum += x;
            CHECK(std::fabs(sum) < 1e-9);
            bool varies = false;
            for (double x : r) varies |= x != r.front();
            if (!varies) continue;
            double mean = 0;
            for (double x : a) mean += x;
            mean /= static_cast<double>(a.size());
            for (double x : a) sq += (x - mean) * (x - mean);
            CHECK(std::sqrt(sq / static_cast<double>(a.size())) == Catch::Approx(1.0).margin(1e-6));
        }
    }

    SECTION("constant groups degenerate to exact zeros") {
        for (double x : group_advantages({0.2, 0.2, 0.2, 0.2, 0.2})) CHECK(x == 0.0);
    }

    SECTION("shift and positive scaling leave advantages unchanged") {
        std::vector<double> base = group_advantages({0.0, 0.2, 1.0, 1.2});
        std::vector<double> shifted = group_advantages({5.0, 5.2, 6.0, 6.2});
        std::vector<double> scaled = group_advantages({0.0, 1.0, 5.0, 6.0});
        for (size_t i = 0; i < base.size(); ++i) {
            CHECK(shifted[i] == Catch::Approx(base[i]).margin(1e-9));
            CHECK(scaled[i] == Catch::Approx(base[i]).margin(1e-6));
        }
    }

    CHECK(code_of([] { group_advantages({1.0}); }) == Errc::empty_group);
}

TEST_CASE("clipped surrogate arithmetic and derivative", "[grpo]") {
    CHECK(clipped_surrogate(1.5, 1.0, 0.2) == 1.2);
    CHECK(clipped_surrogate(0.5, 1.0, 0.2) == 0.5);
    CHECK(clipped_surrogate(1.0, 0.7, 0.2) == 0.7);
    CHECK(clipped_surrogate(1.5, -1.0, 0.2) == -1.5); // pessimistic branch stays unclipped
    CHECK(clipped_surrogate(0.5, -1.0, 0.2) == -0.8);

    GrpoLossConfig lc; // eps 0.2, kl 0.02

    SECTION("token term components") {
        // ratio 1.5 with eps 0.2 counts as clipped; at A=+1, w=1 the surrogate is the bound
        TokenTerm t = surrogate_token_term(std::log(1.5) - 1.0, -1.0, -1.0, 1.0, 1.0, lc);
        CHECK(t.ratio == Catch::Approx(1.5).margin(1e-12));
        CHECK(t.clipped);
        CHECK(t.surrogate == Catch::Approx(1.2).margin(1e-12));
        // the min takes the clipped branch, so only the KL part drives the gradient
        CHECK(t.d_logp == Catch::Approx(lc.kl_coeff * (2.0 / 3.0 - 1.0)).margin(1e-12));

        // matched policies carry exactly zero KL
        TokenTerm same = surrogate_token_term(-1.3, -1.3, -1.3, 0.5, 2.0, lc);
        CHECK(same.kl == 0.0);
        CHECK(same.ratio == 1.0);
        CHECK_FALSE(same.clipped);
        CHECK(same.surrogate == Catch::Approx(1.0).margin(1e-12)); // 2.0 * min(0.5, 0.5)

        // diverging from the reference costs a positive KL
        CHECK(surrogate_token_term(-2.0, -2.0, -1.0, 0.0, 1.0, lc).kl > 0.0);
        CHECK(surrogate_token_term(-0.5, -0.5, -1.5, 0.0, 1.0, lc).kl > 0.0);
    }

    SECTION("derivative matches a central difference") {
        double h = 1e-6;
        for (double lp : {-2.0, -1.1, -0.4})
            for (double lpo : {-1.0, -0.7})
                for (double lpr : {-1.5, -0.9})
                    for (double adv : {-1.3, 0.8})
                        for (double w : {1.0, 2.5}) {
                            auto obj = [&](double x) {
                                return surrogate_token_term(x, lpo, lpr, adv, w, lc).objective;
                            };
                            double num = (obj(lp + h) - obj(lp - h)) / (2 * h);
                            double ana = surrogate_token_term(lp, lpo, lpr, adv, w, lc).d_logp;
                            INFO("lp=" << lp << " lpo=" << lpo << " lpr=" << lpr << " adv=" << adv
                                       << " w=" << w);
                            CHECK(num == Catch::Approx(ana).margin(1e-5));
                        }
    }

    SECTION("overflowing ratios abort") {
        CHECK(code_of([&] { surrogate_token_term(0.0, -2000.0, -1.0, 1.0, 1.0, lc); }) ==
              Errc::non_finite_ratio);
        CHECK(code_of([&] { surrogate_token_term(-2000.0, -1.0, 2000.0, 1.0, 1.0, lc); }) ==
              Errc::non_finite_ratio);
    }

    SECTION("completion chain mask mirrors the SFT convention") {
        std::vector<uint8_t> m =
            completion_chain_mask({7, kChainOpenId, 8, kChainCloseId, 9, kEosId});
        CHECK(m == std::vector<uint8_t>{0, 1, 1, 1, 0, 0});
        CHECK(completion_chain_mask({kChainOpenId, 8}) == std::vector<uint8_t>{1, 1});
        CHECK(completion_chain_mask({8, kChainCloseId}) == std::vector<uint8_t>{0, 1});
    }
}

TEST_CASE("a zero-signal update leaves the policy untouched", "[grpo]") {
    auto tasks = tasks_of(TaskFamily::chained_arithmetic, 1, 2, 401);
    Vocab v = Vocab::build(vocab_corpus(tasks));
    Model<double> policy(small_cfg(v.size()));
    Model<double> ref = clone_model(policy);
    std::vector<double> before = policy.params;

    GrpoConfig gc;
    gc.group_size = 3;
    gc.rollout.max_new_tokens = 16;
    gc.rng_seed = 31;
    TrainContext<double> ctx;
    std::vector<GroupRollout> groups;
    std::vector<GrpoTokenRecord> toks;
    GrpoStepStats st = grpo_step(policy, ref, v, tasks, gc, 1e-3, 0, ctx, &groups, &toks);

    // an untrained net earns no reward, so every group is constant: advantages
    // are zero, the reference equals the policy, and the whole gradient vanishes
    CHECK(st.mean_reward == 0.0);
    CHECK(st.mean_kl == 0.0);
    CHECK(st.clip_fraction == 0.0);
    CHECK(st.n_rollouts == 6);
    CHECK(policy.params == before);
    CHECK(policy.step == 1);

    REQUIRE(groups.size() == 2);
    size_t total = 0;
    for (const auto& g : groups) {
        REQUIRE(g.rollouts.size() == 3);
        double sum = 0;
        for (const auto& r : g.rollouts) {
            sum += r.advantage;
            CHECK(r.advantage == 0.0);
            total += r.completion.size();
            CHECK(r.logp_new.size() == r.completion.size());
            CHECK(r.logp_old == r.logp_new);
        }
        CHECK(std::fabs(sum) < 1e-9);
    }
    CHECK(st.n_tokens == total);
    REQUIRE(toks.size() == total);
    for (const auto& t : toks) {
        CHECK(t.ratio == 1.0);
        CHECK(t.surrogate == 0.0);
        CHECK(t.kl == 0.0);
    }

    SECTION("the step is deterministic under its seed") {
        Model<double> p2(small_cfg(v.size()));
        Model<double> r2 = clone_model(p2);
        TrainContext<double> ctx2;
        GrpoStepStats st2 = grpo_step(p2, r2, v, tasks, gc, 1e-3, 0, ctx2);
        CHECK(st2.mean_reward == st.mean_reward);
        CHECK(st2.n_tokens == st.n_tokens);
        CHECK(p2.params == policy.params);
    }

    SECTION("configuration is validated") {
        GrpoConfig bad = gc;
        bad.group_size = 1;
        CHECK(code_of([&] { grpo_step(policy, ref, v, tasks, bad, 1e-3, 0, ctx); }) ==
              Errc::config_parse);
        bad = gc;
        bad.epsilon = 0.0;
        CHECK(code_of([&] { grpo_step(policy, ref, v, tasks, bad, 1e-3, 0, ctx); }) ==
              Errc::config_parse);
        CHECK(code_of([&] { grpo_step(policy, ref, v, {}, gc, 1e-3, 0, ctx); }) ==
              Errc::empty_pool);
    }
}

TEST_CASE("mining flags what the solver cannot do", "[grpo]") {
    auto tasks = tasks_of(TaskFamily::chained_arithmetic, 1, 5, 402);
    Vocab v = Vocab::build(vocab_corpus(tasks));
    Model<double> m(small_cfg(v.size()));

    MiningConfig mc;
    mc.k_samples = 2;
    mc.threshold = 0.5;
    mc.sample_cfg.max_new_tokens = 24;
    mc.rng_seed = 77;

    auto mined = mine_hard(m, v, tasks, mc);
    REQUIRE(mined.size() == tasks.size());
    for (const auto& rec : mined) {
        CHECK(rec.solver_accuracy == 0.0); // untrained
        CHECK(rec.selected);
    }
    CHECK(selected_tasks(mined).size() == tasks.size());

    SECTION("threshold 1.0 selects everything; an impossible threshold selects nothing") {
        mc.threshold = 1.0;
        for (const auto& rec : mine_hard(m, v, tasks, mc)) CHECK(rec.selected);
        mc.threshold = -0.1;
        auto none = mine_hard(m, v, tasks, mc);
        for (const auto& rec : none) CHECK_FALSE(rec.selected);
        CHECK(code_of([&] { selected_tasks(none); }) == Errc::empty_pool);
    }

    SECTION("deterministic under the seed") {
        auto again = mine_hard(m, v, tasks, mc);
        for (size_t i = 0; i < mined.size(); ++i) {
            CHECK(again[i].solver_accuracy == mined[i].solver_accuracy);
            CHECK(again[i].selected == mined[i].selected);
        }
    }

    SECTION("report format") {
        namespace fs = std::filesystem;
        fs::path path = fs::temp_directory_path() / "sst_mining_report.csv";
        std::vector<MinedProblem> recs(2);
        recs[0].task.id = "t-1";
        recs[0].solver_accuracy = 0.25;
        recs[0].selected = true;
        recs[1].task.id = "t-2";
        recs[1].solver_accuracy = 1.0;
        recs[1].selected = false;
        write_mining_report(path.string(), recs);
        std::ifstream f(path);
        std::string all((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        CHECK(all == "task_id,accuracy,selected\nt-1,0.25,1\nt-2,1,0\n");
        fs::remove(path);
    }

    CHECK(code_of([&] { mine_hard(m, v, {}, mc); }) == Errc::empty_pool);
}

namespace {

// trained once and shared by every section re-entry; nothing below mutates it
struct ColdFixture {
    std::vector<TaskInstance> tasks = tasks_of(TaskFamily::chained_arithmetic, 1, 12, 403);
    Vocab v = Vocab::build(vocab_corpus(tasks));
    Model<double> gen{small_cfg(v.size(), 48)};
    LoraAdapters<double> lora;
    ColdStartConfig cc;
    ColdStartResult cold;

    ColdFixture() : lora(gen.cfg, LoraConfig{8, 16.0}, 31) {
        SftDataset pairs = build_generator_dataset(v, tasks, 512);
        GeneratorTrainConfig gtc;
        gtc.lora = LoraConfig{8, 16.0};
        gtc.epochs = 250;
        gtc.batch_size = 4;
        gtc.train_embeddings = true;
        gtc.optim.lr_max = 2e-3;
        gtc.optim.lr_min = 1e-4;
        gtc.rng_seed = 19;
        train_chain_generator(gen, lora, pairs, gtc);
        cc.corruption_rate = 0.0;
        cc.fidelity_threshold = 0.8;
        cc.chain_gen.temperature = 0.0;
        cc.rng_seed = 11;
        cold = build_cold_start(gen, &lora, v, tasks, cc);
    }
};

const ColdFixture& cold_fixture() {
    static ColdFixture f;
    return f;
}

} // namespace

TEST_CASE("cold start distills generator plans", "[grpo][slow]") {
    const auto& [tasks, v, gen, lora, cc, cold] = cold_fixture();
    CHECK(cold.stats.total == 12);
    CHECK(cold.stats.kept == cold.records.size());
    CHECK(cold.stats.kept >= 10); // the trained generator reproduces most chains
    CHECK(cold.stats.wrong_answer == 0);
    for (const auto& rec : cold.records) {
        CHECK(rec.fidelity >= 0.8);
        CHECK(rec.answer_correct);
        CHECK(rec.trace.layout == TraceLayout::chain_leading);
        CHECK(rec.task.gold_steps.find("Check: re-derive final value") != std::string::npos);
    }

    SECTION("yield accounting and determinism") {
        CHECK(cold.stats.kept + cold.stats.format_failed + cold.stats.low_fidelity +
                  cold.stats.wrong_answer ==
              cold.stats.total);
        ColdStartResult again = build_cold_start(gen, &lora, v, tasks, cc);
        CHECK(again.stats.kept == cold.stats.kept);
        REQUIRE(again.records.size() == cold.records.size());
        for (size_t i = 0; i < cold.records.size(); ++i)
            CHECK(again.records[i].task.gold_chain == cold.records[i].task.gold_chain);
    }

    SECTION("records round-trip through the dataset file") {
        namespace fs = std::filesystem;
        fs::path path = fs::temp_directory_path() / "sst_cold_start.jsonl";
        write_cold_start_jsonl(path.string(), cold.records);
        auto loaded = load_dataset(path.string());
        REQUIRE(loaded.size() == cold.records.size());
        CHECK(loaded[0].gold_chain == cold.records[0].task.gold_chain);
        CHECK(loaded[0].gold_steps == cold.records[0].task.gold_steps);
        std::ifstream f(path);
        std::string all((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        CHECK(all.find("\"fidelity\"") != std::string::npos);
        fs::remove(path);
    }

    SECTION("full corruption drops everything") {
        ColdStartConfig bad = cc;
        bad.corruption_rate = 1.0;
        ColdStartResult none = build_cold_start(gen, &lora, v, tasks, bad);
        CHECK(none.stats.kept == 0);
        CHECK(none.records.empty());
        CHECK(none.stats.wrong_answer > 0);
    }

    SECTION("stage 3 without RL equals a manual cold-start SFT") {
        SftRunConfig cold_sft;
        cold_sft.epochs = 2;
        cold_sft.batch_size = 4;
        cold_sft.loss_cfg.w_initial = 3.0;
        cold_sft.rng_seed = 5;

        GrpoConfig off;
        off.enabled = false;

        Model<double> a(small_cfg(v.size()));
        Stage3Result res = run_stage3(a, gen, &lora, v, tasks, cc, cold_sft, off);
        CHECK(res.curve.empty());
        CHECK(res.cold_stats.kept == cold.stats.kept);

        Model<double> b(small_cfg(v.size()));
        SftDataset manual = cold_start_dataset(v, cold.records, b.cfg.max_seq_len);
        train_sft(b, manual, cold_sft);
        CHECK(a.params == b.params);
    }

    SECTION("a short RL phase emits one curve row per step, starting KL-free") {
        SftRunConfig cold_sft;
        cold_sft.epochs = 1;
        cold_sft.batch_size = 4;
        cold_sft.rng_seed = 5;

        GrpoConfig on;
        on.group_size = 2;
        on.prompts_per_step = 2;
        on.n_steps = 2;
        on.rollout.max_new_tokens = 48;
        on.rng_seed = 13;

        Model<double> a(small_cfg(v.size()));
        Stage3Result res = run_stage3(a, gen, &lora, v, tasks, cc, cold_sft, on);
        REQUIRE(res.curve.size() == 2);
        CHECK(res.curve[0].step == 0);
        CHECK(res.curve[1].step == 1);
        CHECK(std::fabs(res.curve[0].mean_kl) <= 1e-9);
        for (const auto& row : res.curve) {
            CHECK(std::isfinite(row.mean_reward));
            CHECK(std::isfinite(row.mean_kl));
            CHECK(row.clip_fraction == 0.0); // single update per batch: ratios stay 1
        }
        CHECK(a.step == res.cold_log.steps_run + 2);
    }

    SECTION("stage 3 with an empty cold-start yield fails loudly") {
        ColdStartConfig bad = cc;
        bad.corruption_rate = 1.0;
        SftRunConfig cold_sft;
        GrpoConfig off;
        off.enabled = false;
        Model<double> a(small_cfg(v.size()));
        CHECK(code_of([&] { run_stage3(a, gen, &lora, v, tasks, bad, cold_sft, off); }) ==
              Errc::empty_pool);
    }
}

TEST_CASE("curve format", "[grpo]") {
    namespace fs = std::filesystem;
    fs::path path = fs::temp_directory_path() / "sst_grpo_curve.csv";
    std::vector<GrpoStepStats> curve(2);
    curve[0].step = 0;
    curve[0].mean_reward = 0.25;
    curve[0].mean_kl = 0.0;
    curve[0].clip_fraction = 0.0;
    curve[1].step = 1;
    curve[1].mean_reward = 0.5;
    curve[1].mean_kl = 0.125;
    curve[1].clip_fraction = 0.0;
    write_grpo_curve(path.string(), curve);
    std::ifstream f(path);
    std::string all((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    CHECK(all == "step,mean_reward,mean_kl,clip_fraction\n0,0.25,0,0\n1,0.5,0.125,0\n");
    fs::remove(path);
}

namespace {

struct SolverFixture {
    std::vector<TaskInstance> seen = tasks_of(TaskFamily::chained_arithmetic, 1, 6, 404);
    std::vector<TaskInstance> unseen = tasks_of(TaskFamily::linear_system, 4, 4, 405);
    std::vector<TaskInstance> pool;
    Vocab v;
    Model<double> solver;
    SftResult fit;

    SolverFixture()
        : pool([this] {
              std::vector<TaskInstance> p = seen;
              p.insert(p.end(), unseen.begin(), unseen.end());
              return p;
          }()),
          v(Vocab::build(vocab_corpus(pool))), solver(small_cfg(v.size(), 48)) {
        SftDataset ds = plan_dataset(v, seen);
        SftRunConfig cfg;
        cfg.epochs = 250;
        cfg.batch_size = 3;
        cfg.optim.lr_max = 2e-3;
        cfg.optim.lr_min = 2e-4;
        cfg.rng_seed = 8;
        fit = train_sft(solver, ds, cfg);
    }
};

const SolverFixture& solver_fixture() {
    static SolverFixture f;
    return f;
}

} // namespace

TEST_CASE("mining and updates on a trained solver", "[grpo][slow]") {
    const auto& [seen, unseen, pool, v, solver, fit] = solver_fixture();
    REQUIRE(fit.log.back().total < 0.1); // memorized the plan traces

    SECTION("selected problems skew hard") {
        MiningConfig mc;
        mc.k_samples = 2;
        mc.threshold = 0.5;
        mc.sample_cfg.temperature = 0.0;
        mc.sample_cfg.max_new_tokens = 400;
        mc.rng_seed = 9;
        auto mined = mine_hard(solver, v, pool, mc);

        double pool_diff = 0, sel_diff = 0;
        size_t n_sel = 0;
        for (const auto& rec : mined) {
            pool_diff += rec.task.difficulty;
            if (rec.selected) {
                sel_diff += rec.task.difficulty;
                ++n_sel;
            }
        }
        REQUIRE(n_sel > 0);
        REQUIRE(n_sel < mined.size()); // the memorized problems are not selected
        CHECK(sel_diff / static_cast<double>(n_sel) >
              pool_diff / static_cast<double>(mined.size()));

        // every unseen hard problem lands in the selection
        for (size_t i = seen.size(); i < mined.size(); ++i) CHECK(mined[i].selected);
        // a problem the solver always solves is not selected
        size_t solved = 0;
        for (size_t i = 0; i < seen.size(); ++i)
            if (mined[i].solver_accuracy == 1.0) {
                CHECK_FALSE(mined[i].selected);
                ++solved;
            }
        CHECK(solved > 0);
    }

    SECTION("policy updates earn reward and respect the surrogate bound") {
        Model<double> policy = clone_model(solver);
        Model<double> ref = clone_model(solver);
        GrpoConfig gc;
        gc.group_size = 4;
        gc.rollout.temperature = 0.8;
        gc.rollout.max_new_tokens = 400;
        gc.rng_seed = 21;
        TrainContext<double> ctx;
        std::vector<GrpoTokenRecord> toks;

        std::vector<TaskInstance> prompts(seen.begin(), seen.begin() + 3);
        GrpoStepStats st0 = grpo_step(policy, ref, v, prompts, gc, 3e-4, 0, ctx, nullptr, &toks);
        CHECK(st0.mean_reward > 0.5); // the memorizing solver earns reward
        CHECK(st0.mean_kl == 0.0);    // reference equals the pre-step policy
        GrpoStepStats st1 = grpo_step(policy, ref, v, prompts, gc, 3e-4, 1, ctx, nullptr, &toks);
        CHECK(st1.mean_kl >= 0.0);
        CHECK(std::isfinite(st1.mean_reward));
        CHECK(policy.step == fit.steps_run + 2);

        REQUIRE(toks.size() == st0.n_tokens + st1.n_tokens);
        for (const auto& t : toks) {
            CHECK(t.ratio == 1.0);
            CHECK(std::fabs(t.surrogate) <=
                  (1.0 + gc.epsilon) * std::fabs(t.advantage) * t.weight + 1e-12);
            CHECK(t.kl >= 0.0);
        }
    }
}
