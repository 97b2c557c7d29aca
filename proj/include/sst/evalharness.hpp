#pragma once
// Benchmark protocol: pass@1 over independent seeds with strict boxed-answer
// grading, per-problem token accounting, paired injection comparisons, and the
// accuracy-vs-dataset-size sweep for difficulty-graded fine-tuning.

#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sst/grpo.hpp"

namespace sst {

struct EvalRow {
    std::string problem_id;
    uint64_t seed = 0;
    bool correct = false;
    size_t output_tokens = 0;
};

struct EvalReport {
    std::string benchmark;
    std::vector<std::string> problem_ids;
    std::vector<uint64_t> seeds;
    std::vector<double> per_seed_accuracy;
    double mean = 0;
    double std_dev = 0;     // sample std over seeds (n-1)
    double mean_tokens = 0; // over every (problem, seed) row
    std::vector<EvalRow> rows; // seed-major, problems in benchmark order
    std::string config_hash;
};

inline double sample_stddev(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    double mean = 0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double sq = 0;
    for (double x : xs) sq += (x - mean) * (x - mean);
    return std::sqrt(sq / static_cast<double>(xs.size() - 1));
}

namespace detail {

// run one independent grading job per (seed, problem) pair; slots are disjoint
// so any worker count produces the same rows
inline void parallel_for(size_t total, int workers, const std::function<void(size_t)>& job) {
    int w = std::max(1, workers);
    if (w == 1 || total < 2) {
        for (size_t i = 0; i < total; ++i) job(i);
        return;
    }
    std::atomic<size_t> next{0};
    auto run = [&] {
        for (size_t i = next.fetch_add(1); i < total; i = next.fetch_add(1)) job(i);
    };
    std::vector<std::thread> threads;
    for (int t = 1; t < w; ++t) threads.emplace_back(run);
    run();
    for (auto& t : threads) t.join();
}

template <typename Real>
std::string eval_config_snapshot(const Model<Real>& m, std::string_view benchmark,
                                 const std::vector<uint64_t>& seeds, const SampleConfig& sc,
                                 std::string_view protocol) {
    std::ostringstream os;
    os << protocol << "|" << benchmark << "|v" << m.cfg.vocab_size << " d" << m.cfg.d_model << " l"
       << m.cfg.n_layers << " h" << m.cfg.n_heads << " f" << m.cfg.d_ff << " s"
       << m.cfg.max_seq_len << "|params "
       << hex64(fnv1a64(m.params.data(), m.params.size() * sizeof(Real))) << "|t" << sc.temperature
       << " p" << sc.top_p << " n" << sc.max_new_tokens << "|seeds";
    for (uint64_t s : seeds) os << " " << s;
    return os.str();
}

inline void finalize_report(EvalReport& rep, size_t n_problems) {
    size_t n_seeds = rep.seeds.size();
    double token_sum = 0;
    for (size_t s = 0; s < n_seeds; ++s) {
        size_t correct = 0;
        for (size_t i = 0; i < n_problems; ++i) {
            const EvalRow& row = rep.rows[s * n_problems + i];
            correct += row.correct ? 1u : 0u;
            token_sum += static_cast<double>(row.output_tokens);
        }
        rep.per_seed_accuracy.push_back(static_cast<double>(correct) /
                                        static_cast<double>(n_problems));
    }
    for (double a : rep.per_seed_accuracy) rep.mean += a;
    rep.mean /= static_cast<double>(n_seeds);
    rep.std_dev = sample_stddev(rep.per_seed_accuracy);
    rep.mean_tokens = token_sum / static_cast<double>(rep.rows.size());
}

} // namespace detail

// one completion per problem per seed, graded strictly on the boxed answer
template <typename Real>
EvalReport evaluate(const Model<Real>& m, const Vocab& v, const std::string& benchmark,
                    const std::vector<TaskInstance>& problems, const std::vector<uint64_t>& seeds,
                    const SampleConfig& sc, int workers = 1,
                    std::type_identity_t<const LoraAdapters<Real>*> lora = nullptr) {
    expect(!problems.empty(), Errc::empty_benchmark, "evaluate: no problems in " + benchmark);
    expect(!seeds.empty(), Errc::empty_benchmark, "evaluate: no seeds for " + benchmark);

    EvalReport rep;
    rep.benchmark = benchmark;
    rep.seeds = seeds;
    for (const auto& p : problems) rep.problem_ids.push_back(p.id);
    rep.config_hash = hex64(fnv1a64(detail::eval_config_snapshot(m, benchmark, seeds, sc, "plain")));
    rep.rows.resize(seeds.size() * problems.size());

    detail::parallel_for(rep.rows.size(), workers, [&](size_t j) {
        size_t s = j / problems.size(), i = j % problems.size();
        const TaskInstance& t = problems[i];
        SampleConfig run = sc;
        // keyed on the problem id, so reordering the benchmark cannot change
        // any completion
        run.rng_seed = derive_seed(seeds[s], t.id, 0);
        InjectOutcome out = solve_plain(m, v, t.statement, run, lora);
        EvalRow& row = rep.rows[j];
        row.problem_id = t.id;
        row.seed = seeds[s];
        row.correct = out.answer && answers_match(*out.answer, t.gold_answer);
        row.output_tokens = out.output_tokens;
    });
    detail::finalize_report(rep, problems.size());
    return rep;
}

// percent change in mean output tokens between two reports over the same
// benchmark; truncated (toward zero) to one decimal, matching the convention
// of the published -62.4% / +0.3% reference deltas
inline double token_delta(const EvalReport& a, const EvalReport& b) {
    expect(a.benchmark == b.benchmark, Errc::mismatched_benchmarks,
           "token_delta: " + a.benchmark + " vs " + b.benchmark);
    expect(a.problem_ids == b.problem_ids, Errc::mismatched_benchmarks,
           "token_delta: reports cover different problem sets");
    expect(a.mean_tokens > 0, Errc::empty_benchmark, "token_delta: baseline has no tokens");
    double pct = 100.0 * (b.mean_tokens - a.mean_tokens) / a.mean_tokens;
    return std::trunc(pct * 10.0) / 10.0;
}

// same-seed paired comparison: the "plain" arm and the "injected" arm share
// per-(seed, problem) seeds, so the only difference is the injected chain
template <typename Real> struct PairedEval {
    EvalReport plain;
    EvalReport injected;
    std::vector<InjectionRecord> records; // injected-arm bookkeeping, row-aligned
    double delta_pct = 0;                 // token_delta(plain, injected)
};

template <typename Real>
PairedEval<Real> evaluate_paired(const Model<Real>& solver, const Model<Real>& gen,
                                 std::type_identity_t<const LoraAdapters<Real>*> gen_adapters,
                                 const Vocab& v, const std::string& benchmark,
                                 const std::vector<TaskInstance>& problems,
                                 const std::vector<uint64_t>& seeds, const SampleConfig& sc,
                                 const ChainGenConfig& gc = {}, int workers = 1,
                                 std::type_identity_t<const LoraAdapters<Real>*> solver_lora =
                                     nullptr) {
    expect(!problems.empty(), Errc::empty_benchmark, "evaluate_paired: no problems");
    expect(!seeds.empty(), Errc::empty_benchmark, "evaluate_paired: no seeds");

    PairedEval<Real> out;
    for (EvalReport* rep : {&out.plain, &out.injected}) {
        rep->benchmark = benchmark;
        rep->seeds = seeds;
        for (const auto& p : problems) rep->problem_ids.push_back(p.id);
        rep->rows.resize(seeds.size() * problems.size());
    }
    out.plain.config_hash =
        hex64(fnv1a64(detail::eval_config_snapshot(solver, benchmark, seeds, sc, "plain")));
    out.injected.config_hash =
        hex64(fnv1a64(detail::eval_config_snapshot(solver, benchmark, seeds, sc, "injected")));
    out.records.resize(seeds.size() * problems.size());

    detail::parallel_for(out.plain.rows.size(), workers, [&](size_t j) {
        size_t s = j / problems.size(), i = j % problems.size();
        const TaskInstance& t = problems[i];
        SampleConfig run = sc;
        run.rng_seed = derive_seed(seeds[s], t.id, 0);

        InjectOutcome plain = solve_plain(solver, v, t.statement, run, solver_lora);
        out.plain.rows[j] = {t.id, seeds[s], plain.answer && answers_match(*plain.answer,
                                                                           t.gold_answer),
                             plain.output_tokens};

        InjectOutcome inj =
            solve_with_injection(solver, gen, gen_adapters, v, t.statement, run, gc, solver_lora);
        bool correct = inj.answer && answers_match(*inj.answer, t.gold_answer);
        out.injected.rows[j] = {t.id, seeds[s], correct, inj.output_tokens};
        out.records[j] = {t.id, inj.injected, correct, inj.output_tokens, inj.chain};
    });
    detail::finalize_report(out.plain, problems.size());
    detail::finalize_report(out.injected, problems.size());
    out.delta_pct = token_delta(out.plain, out.injected);
    return out;
}

inline void write_eval_csv(const std::string& path, const EvalReport& rep) {
    std::ofstream f(path, std::ios::trunc);
    expect(f.good(), Errc::io_failure, "eval report: cannot open " + path);
    f << "problem_id,seed,correct,output_tokens\n";
    for (const auto& r : rep.rows)
        f << r.problem_id << "," << r.seed << "," << (r.correct ? 1 : 0) << "," << r.output_tokens
          << "\n";
    expect(f.good(), Errc::io_failure, "eval report: write failed for " + path);
}

inline void write_eval_summary(const std::string& path, const std::vector<EvalReport>& reports) {
    std::ofstream f(path, std::ios::trunc);
    expect(f.good(), Errc::io_failure, "eval summary: cannot open " + path);
    f << "benchmark,mean,std,n_seeds,mean_tokens\n";
    for (const auto& r : reports)
        f << r.benchmark << "," << r.mean << "," << r.std_dev << "," << r.seeds.size() << ","
          << r.mean_tokens << "\n";
    expect(f.good(), Errc::io_failure, "eval summary: write failed for " + path);
}

// --- accuracy-vs-size sweep ---------------------------------------------------------------

struct SweepConfig {
    std::vector<size_t> sizes;   // ascending, first entry 0 (untrained baseline)
    std::vector<uint64_t> seeds; // one fine-tune + evaluation per (size, seed)
    SftRunConfig train;          // rng_seed is overridden per arm
    SampleConfig eval_sampling = {0.6, 0.95, 512, kEosId, 0};
    int workers = 1;

    void validate(size_t pool_size) const {
        expect(!sizes.empty() && sizes.front() == 0, Errc::config_parse,
               "sweep: sizes must start at 0");
        for (size_t i = 1; i < sizes.size(); ++i)
            expect(sizes[i] > sizes[i - 1], Errc::config_parse,
                   "sweep: sizes must strictly ascend");
        expect(sizes.back() <= pool_size, Errc::config_parse,
               "sweep: largest arm exceeds the training pool (" + std::to_string(pool_size) +
                   " examples)");
        expect(!seeds.empty(), Errc::config_parse, "sweep: needs at least one seed");
    }
};

struct SweepRow {
    size_t train_size = 0;
    uint64_t seed = 0;
    double accuracy = 0;
};

struct SweepResult {
    std::vector<SweepRow> rows;                       // size-major, then seed
    std::vector<std::pair<size_t, double>> mean_curve; // mean accuracy per size
};

// fine-tune a fresh copy of the base on the first `size` examples of a
// seed-shuffled pool, then grade it on the held-out benchmark (one completion
// per problem); size 0 is the untrained baseline
template <typename Real>
SweepResult scaling_sweep(const Model<Real>& base, const Vocab& v, const SftDataset& pool,
                          const std::vector<TaskInstance>& hard_bench, const SweepConfig& sc) {
    sc.validate(pool.examples.size());
    expect(!hard_bench.empty(), Errc::empty_benchmark, "sweep: empty held-out benchmark");

    SweepResult out;
    for (size_t size : sc.sizes) {
        double acc_sum = 0;
        for (uint64_t seed : sc.seeds) {
            Model<Real> arm = clone_model(base);
            if (size > 0) {
                std::vector<size_t> order(pool.examples.size());
                for (size_t i = 0; i < order.size(); ++i) order[i] = i;
                Rng(derive_seed(seed, "sweep_subset", size)).shuffle(order);
                SftDataset subset;
                for (size_t i = 0; i < size; ++i)
                    subset.examples.push_back(pool.examples[order[i]]);
                SftRunConfig cfg = sc.train;
                cfg.rng_seed = derive_seed(seed, "sweep_train", size);
                train_sft(arm, subset, cfg);
            }
            EvalReport rep = evaluate(arm, v, "hard_holdout", hard_bench,
                                      {derive_seed(seed, "sweep_eval", size)}, sc.eval_sampling,
                                      sc.workers);
            out.rows.push_back({size, seed, rep.mean});
            acc_sum += rep.mean;
        }
        out.mean_curve.emplace_back(size, acc_sum / static_cast<double>(sc.seeds.size()));
    }
    return out;
}

inline void write_sweep_csv(const std::string& path, const SweepResult& res) {
    std::ofstream f(path, std::ios::trunc);
    expect(f.good(), Errc::io_failure, "sweep report: cannot open " + path);
    f << "train_size,seed,accuracy\n";
    for (const auto& r : res.rows) f << r.train_size << "," << r.seed << "," << r.accuracy << "\n";
    expect(f.good(), Errc::io_failure, "sweep report: write failed for " + path);
}

} // namespace sst
