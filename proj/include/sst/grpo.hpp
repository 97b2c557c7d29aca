#pragma once
// Stage 3: hard-problem mining by rejection sampling, plan-first cold-start
// data with template-fidelity filtering, and group-relative policy updates
// (clipped ratio surrogate + per-token KL to a frozen reference) with chain
// tokens amplified by the same weight the SFT loss uses.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "sst/inject.hpp"

namespace sst {

// --- template fidelity ----------------------------------------------------------------

// split on the arrow alone (not the padded separator) so model-written chains
// with irregular spacing still compare step-by-step
inline std::vector<std::string> fidelity_steps(std::string_view chain) {
    constexpr std::string_view arrow = "\xE2\x86\x92"; // →
    std::vector<std::string> steps;
    size_t start = 0;
    while (start <= chain.size()) {
        size_t pos = chain.find(arrow, start);
        std::string_view part =
            pos == std::string_view::npos ? chain.substr(start) : chain.substr(start, pos - start);
        // normalize: trim and collapse internal whitespace runs
        std::string norm;
        for (char c : trim(part)) {
            bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r';
            if (ws && !norm.empty() && norm.back() == ' ') continue;
            norm.push_back(ws ? ' ' : c);
        }
        if (!norm.empty()) steps.push_back(std::move(norm));
        if (pos == std::string_view::npos) break;
        start = pos + arrow.size();
    }
    return steps;
}

// longest-common-subsequence similarity over normalized step sequences,
// scaled by the longer sequence; symmetric, 1.0 iff the sequences match
inline double chain_fidelity(std::string_view proposed, std::string_view reference) {
    std::vector<std::string> a = fidelity_steps(proposed);
    std::vector<std::string> b = fidelity_steps(reference);
    expect(!a.empty() && !b.empty(), Errc::empty_chain, "fidelity: chain without steps");
    size_t n = a.size(), m = b.size();
    std::vector<size_t> prev(m + 1, 0), cur(m + 1, 0);
    for (size_t i = 1; i <= n; ++i) {
        for (size_t j = 1; j <= m; ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return static_cast<double>(prev[m]) / static_cast<double>(std::max(n, m));
}

// --- reward ---------------------------------------------------------------------------

// +1.0 for a correct boxed answer, +0.2 for a strict plan-first format: the
// text parses and holds exactly one chain and one boxed span with the chain
// leading.  Malformed output is graded answer-only.
inline double trace_reward(std::string_view trace_text, std::string_view gold_answer) {
    double r = 0.0;
    if (output_answer_correct(trace_text, gold_answer)) r += 1.0;
    OutputAnalysis oa = analyze_output(trace_text);
    if (oa.format_ok && oa.trace.layout == TraceLayout::chain_leading &&
        oa.trace.spans_of(SpanKind::chain).size() == 1 &&
        oa.trace.spans_of(SpanKind::boxed).size() == 1)
        r += 0.2;
    return r;
}

// --- group normalization ----------------------------------------------------------------

// A_i = (r_i - mean) / (std + 1e-8) with the group (population) std; a
// constant-reward group degenerates to all-zero advantages
inline std::vector<double> group_advantages(const std::vector<double>& rewards) {
    expect(rewards.size() >= 2, Errc::empty_group, "advantages need a group of >= 2");
    bool constant = true;
    for (double r : rewards)
        if (r != rewards.front()) constant = false;
    if (constant) return std::vector<double>(rewards.size(), 0.0);
    double mean = 0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(rewards.size());
    double var = 0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(rewards.size());
    double std_dev = std::sqrt(var);
    std::vector<double> adv(rewards.size());
    for (size_t i = 0; i < rewards.size(); ++i)
        adv[i] = std_dev == 0.0 ? 0.0 : (rewards[i] - mean) / (std_dev + 1e-8);
    return adv;
}

// --- clipped surrogate ------------------------------------------------------------------

struct GrpoLossConfig {
    double epsilon = 0.2;
    double kl_coeff = 0.02;
};

inline double clipped_surrogate(double ratio, double adv, double eps) {
    double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * adv;
    return std::min(ratio * adv, clipped);
}

// one sampled token's contribution to the (maximized) objective and its
// derivative with respect to the new log-probability
struct TokenTerm {
    double surrogate = 0; // weight * min(ratio*A, clip(ratio)*A)
    double kl = 0;        // exp(d) - d - 1, d = logp_ref - logp_new (>= 0)
    double objective = 0; // surrogate - kl_coeff * kl
    double d_logp = 0;    // d objective / d logp_new
    double ratio = 1;
    bool clipped = false; // ratio left the [1-eps, 1+eps] band
};

inline TokenTerm surrogate_token_term(double logp_new, double logp_old, double logp_ref,
                                      double adv, double weight, const GrpoLossConfig& lc) {
    TokenTerm t;
    t.ratio = std::exp(logp_new - logp_old);
    expect(std::isfinite(t.ratio), Errc::non_finite_ratio,
           "token ratio exp(" + std::to_string(logp_new) + " - " + std::to_string(logp_old) +
               ") is not finite");
    double unclipped = t.ratio * adv;
    double clipped = std::clamp(t.ratio, 1.0 - lc.epsilon, 1.0 + lc.epsilon) * adv;
    t.clipped = t.ratio < 1.0 - lc.epsilon || t.ratio > 1.0 + lc.epsilon;
    t.surrogate = weight * std::min(unclipped, clipped);

    double d = logp_ref - logp_new;
    double ed = std::exp(d);
    expect(std::isfinite(ed), Errc::non_finite_ratio,
           "reference ratio exp(" + std::to_string(d) + ") is not finite");
    t.kl = ed - d - 1.0;

    t.objective = t.surrogate - lc.kl_coeff * t.kl;
    // the min gates the gradient: only the unclipped branch moves with logp
    double surr_grad = unclipped <= clipped ? weight * unclipped : 0.0;
    t.d_logp = surr_grad + lc.kl_coeff * (ed - 1.0);
    return t;
}

// --- rollouts and the policy update -----------------------------------------------------

struct Rollout {
    std::vector<int> completion;  // sampled ids; keeps the trailing eos when emitted
    std::string text;             // decoded completion, trailing eos stripped
    double reward = 0;
    double advantage = 0;
    std::vector<double> logp_new; // per completion token, filled during the update
    std::vector<double> logp_old;
};

struct GroupRollout {
    size_t task_index = 0; // position in the prompt batch
    std::vector<int> prompt;
    std::vector<Rollout> rollouts;
};

struct GrpoTokenRecord {
    double ratio = 1;
    double advantage = 0;
    double weight = 1;
    double surrogate = 0;
    double kl = 0;
};

struct GrpoStepStats {
    int64_t step = 0;
    double mean_reward = 0;
    double mean_kl = 0;
    double clip_fraction = 0;
    size_t n_tokens = 0;
    size_t n_rollouts = 0;
};

struct GrpoConfig {
    int group_size = 8; // G
    double epsilon = 0.2;
    double kl_coeff = 0.02;
    double chain_weight = 3.0; // held at the initial SFT weight for all RL steps
    size_t prompts_per_step = 4;
    int n_steps = 40;
    SampleConfig rollout = {1.0, 1.0, 160, kEosId, 0}; // on-policy sampling
    OptimConfig optim;
    uint64_t rng_seed = 0;
    bool enabled = true;

    void validate() const {
        expect(group_size >= 2, Errc::config_parse, "grpo: group_size must be >= 2");
        expect(epsilon > 0, Errc::config_parse, "grpo: epsilon must be positive");
        expect(kl_coeff >= 0, Errc::config_parse, "grpo: kl_coeff must be nonnegative");
        expect(chain_weight > 0, Errc::config_parse, "grpo: chain_weight must be positive");
        expect(prompts_per_step >= 1, Errc::config_parse, "grpo: prompts_per_step must be >= 1");
        expect(n_steps >= 0, Errc::config_parse, "grpo: n_steps must be >= 0");
    }
};

// per-token chain membership of a sampled completion: delimiters and the
// region between them count as chain, mirroring the SFT mask convention
inline std::vector<uint8_t> completion_chain_mask(const std::vector<int>& completion) {
    std::vector<uint8_t> mask(completion.size(), 0);
    bool in_chain = false;
    for (size_t i = 0; i < completion.size(); ++i) {
        if (completion[i] == kChainOpenId) {
            in_chain = true;
            mask[i] = 1;
        } else if (completion[i] == kChainCloseId) {
            in_chain = false;
            mask[i] = 1;
        } else if (in_chain) {
            mask[i] = 1;
        }
    }
    return mask;
}

// a reference policy is a deep copy with rewired views
template <typename Real> Model<Real> clone_model(const Model<Real>& src) {
    Model<Real> out(src.cfg);
    out.params = src.params;
    out.adam_m = src.adam_m;
    out.adam_v = src.adam_v;
    out.step = src.step;
    out.remap();
    return out;
}

namespace detail {

// log softmax pieces of one logits row, in double
template <typename Real>
inline void row_logsumexp(const Real* row, int vocab, double& max_out, double& lse_out) {
    double mx = static_cast<double>(row[0]);
    for (int j = 1; j < vocab; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double acc = 0;
    for (int j = 0; j < vocab; ++j) acc += std::exp(static_cast<double>(row[j]) - mx);
    max_out = mx;
    lse_out = mx + std::log(acc);
}

} // namespace detail

// One group-relative update: sample G completions per prompt from the current
// policy, normalize rewards within each group, and apply a single optimizer
// step of the clipped-ratio surrogate with per-token KL to the reference.
// Because the policy does not change between sampling and the update, every
// ratio is exactly 1 here; the clip machinery matters for its bound.
template <typename Real>
GrpoStepStats grpo_step(Model<Real>& policy, const Model<Real>& ref, const Vocab& v,
                        const std::vector<TaskInstance>& prompts, const GrpoConfig& gc,
                        double lr, int64_t step, TrainContext<Real>& ctx,
                        std::vector<GroupRollout>* rollout_log = nullptr,
                        std::vector<GrpoTokenRecord>* token_log = nullptr) {
    gc.validate();
    expect(!prompts.empty(), Errc::empty_pool, "grpo_step: empty prompt batch");
    expect(policy.cfg.same_shape(ref.cfg), Errc::shape_mismatch,
           "grpo_step: policy and reference disagree");

    // rollouts under the pre-update policy
    std::vector<GroupRollout> groups;
    size_t n_tokens = 0;
    for (size_t p = 0; p < prompts.size(); ++p) {
        GroupRollout gr;
        gr.task_index = p;
        gr.prompt = make_prompt_ids(v, prompts[p].statement);
        std::vector<double> rewards;
        for (int g = 0; g < gc.group_size; ++g) {
            SampleConfig sc = gc.rollout;
            uint64_t idx = (static_cast<uint64_t>(step) * prompts.size() + p) *
                               static_cast<uint64_t>(gc.group_size) +
                           static_cast<uint64_t>(g);
            sc.rng_seed = derive_seed(gc.rng_seed, "rollout", idx);
            Rollout r;
            r.completion = sample(policy, gr.prompt, sc);
            std::vector<int> visible = r.completion;
            if (!visible.empty() && visible.back() == kEosId) visible.pop_back();
            r.text = v.decode(visible);
            r.reward = trace_reward(r.text, prompts[p].gold_answer);
            rewards.push_back(r.reward);
            n_tokens += r.completion.size();
            gr.rollouts.push_back(std::move(r));
        }
        std::vector<double> adv = group_advantages(rewards);
        for (int g = 0; g < gc.group_size; ++g)
            gr.rollouts[static_cast<size_t>(g)].advantage = adv[static_cast<size_t>(g)];
        groups.push_back(std::move(gr));
    }
    expect(n_tokens > 0, Errc::empty_group, "grpo_step: rollouts carry no tokens");

    // gradient accumulation
    policy.zero_grad();
    GrpoLossConfig lc{gc.epsilon, gc.kl_coeff};
    Activations<Real> ref_acts;
    double sum_reward = 0, sum_kl = 0;
    size_t clipped = 0;
    int vocab = policy.cfg.vocab_size;
    for (auto& gr : groups) {
        for (auto& r : gr.rollouts) {
            sum_reward += r.reward;
            if (r.completion.empty()) continue;
            std::vector<int> ids = gr.prompt;
            ids.insert(ids.end(), r.completion.begin(), r.completion.end());
            ids.pop_back(); // inputs exclude the final token
            size_t T = ids.size();
            size_t P = gr.prompt.size();

            forward(ref, ids, ref_acts);
            forward(policy, ids, ctx.acts);
            ctx.scratch.resize(policy.cfg, static_cast<int>(T));
            std::fill(ctx.scratch.dlogits.begin(), ctx.scratch.dlogits.end(), Real(0));

            std::vector<uint8_t> chain_mask = completion_chain_mask(r.completion);
            for (size_t k = 0; k < r.completion.size(); ++k) {
                size_t row = P - 1 + k;
                int y = r.completion[k];
                const Real* logits = ctx.acts.logits.data() + row * static_cast<size_t>(vocab);
                const Real* ref_logits =
                    ref_acts.logits.data() + row * static_cast<size_t>(vocab);
                double mx, lse, ref_mx, ref_lse;
                detail::row_logsumexp(logits, vocab, mx, lse);
                detail::row_logsumexp(ref_logits, vocab, ref_mx, ref_lse);
                double logp_new = static_cast<double>(logits[y]) - lse;
                double logp_ref = static_cast<double>(ref_logits[y]) - ref_lse;
                double logp_old = logp_new; // one update per batch: the sampler was this policy
                double wt = chain_mask[k] ? gc.chain_weight : 1.0;

                TokenTerm tt =
                    surrogate_token_term(logp_new, logp_old, logp_ref, r.advantage, wt, lc);
                sum_kl += tt.kl;
                if (tt.clipped) ++clipped;
                r.logp_new.push_back(logp_new);
                r.logp_old.push_back(logp_old);
                if (token_log)
                    token_log->push_back({tt.ratio, r.advantage, wt, tt.surrogate, tt.kl});

                // loss = -(1/N) sum objective; chain through log-softmax
                double gscale = -tt.d_logp / static_cast<double>(n_tokens);
                Real* drow = ctx.scratch.dlogits.data() + row * static_cast<size_t>(vocab);
                for (int j = 0; j < vocab; ++j) {
                    double pj = std::exp(static_cast<double>(logits[j]) - lse);
                    double delta = j == y ? 1.0 : 0.0;
                    drow[j] = static_cast<Real>(gscale * (delta - pj));
                }
            }
            backward(policy, ids, ctx.acts, ctx.scratch);
        }
    }

    clip_gradients(policy.grads, gc.optim.grad_clip);
    adam_step(policy.params, policy.grads, policy.adam_m, policy.adam_v, policy.step + 1, lr,
              gc.optim);
    ++policy.step;

    GrpoStepStats st;
    st.step = step;
    st.n_tokens = n_tokens;
    st.n_rollouts = prompts.size() * static_cast<size_t>(gc.group_size);
    st.mean_reward = sum_reward / static_cast<double>(st.n_rollouts);
    st.mean_kl = sum_kl / static_cast<double>(n_tokens);
    st.clip_fraction = static_cast<double>(clipped) / static_cast<double>(n_tokens);
    if (rollout_log) *rollout_log = std::move(groups);
    return st;
}

// mean reward of G samples per problem without any update; the measuring stick
// for before/after comparisons
template <typename Real>
double evaluate_pool_reward(const Model<Real>& m, const Vocab& v,
                            const std::vector<TaskInstance>& pool, int group_size,
                            const SampleConfig& sc, uint64_t seed) {
    expect(!pool.empty(), Errc::empty_pool, "evaluate_pool_reward: empty pool");
    expect(group_size >= 1, Errc::config_parse, "evaluate_pool_reward: group_size must be >= 1");
    double sum = 0;
    for (size_t i = 0; i < pool.size(); ++i) {
        std::vector<int> prompt = make_prompt_ids(v, pool[i].statement);
        for (int g = 0; g < group_size; ++g) {
            SampleConfig run = sc;
            run.rng_seed = derive_seed(seed, "pool_reward",
                                       i * static_cast<size_t>(group_size) +
                                           static_cast<size_t>(g));
            std::vector<int> cont = sample(m, prompt, run);
            if (!cont.empty() && cont.back() == kEosId) cont.pop_back();
            sum += trace_reward(v.decode(cont), pool[i].gold_answer);
        }
    }
    return sum / (static_cast<double>(pool.size()) * static_cast<double>(group_size));
}

// --- hard-problem mining ----------------------------------------------------------------

struct MiningConfig {
    int k_samples = 4;
    double threshold = 0.5; // selected iff accuracy <= threshold
    SampleConfig sample_cfg = {0.6, 0.95, 256, kEosId, 0};
    uint64_t rng_seed = 0;
};

struct MinedProblem {
    TaskInstance task;
    double solver_accuracy = 0;
    bool selected = false;
};

template <typename Real>
std::vector<MinedProblem> mine_hard(const Model<Real>& solver, const Vocab& v,
                                    const std::vector<TaskInstance>& pool,
                                    const MiningConfig& cfg,
                                    const LoraAdapters<Real>* lora = nullptr) {
    expect(!pool.empty(), Errc::empty_pool, "mine_hard: empty pool");
    expect(cfg.k_samples >= 1, Errc::config_parse, "mine_hard: k_samples must be >= 1");
    std::vector<MinedProblem> out;
    for (size_t i = 0; i < pool.size(); ++i) {
        std::vector<int> prompt = make_prompt_ids(v, pool[i].statement);
        int correct = 0;
        for (int s = 0; s < cfg.k_samples; ++s) {
            SampleConfig sc = cfg.sample_cfg;
            sc.rng_seed = derive_seed(cfg.rng_seed, "mine",
                                      i * static_cast<size_t>(cfg.k_samples) +
                                          static_cast<size_t>(s));
            std::vector<int> cont = sample(solver, prompt, sc, lora);
            if (!cont.empty() && cont.back() == kEosId) cont.pop_back();
            if (output_answer_correct(v.decode(cont), pool[i].gold_answer)) ++correct;
        }
        MinedProblem mp;
        mp.task = pool[i];
        mp.solver_accuracy = static_cast<double>(correct) / static_cast<double>(cfg.k_samples);
        mp.selected = mp.solver_accuracy <= cfg.threshold;
        out.push_back(std::move(mp));
    }
    return out;
}

inline std::vector<TaskInstance> selected_tasks(const std::vector<MinedProblem>& mined) {
    std::vector<TaskInstance> out;
    for (const auto& m : mined)
        if (m.selected) out.push_back(m.task);
    expect(!out.empty(), Errc::empty_pool, "mining selected no problems");
    return out;
}

inline void write_mining_report(const std::string& path, const std::vector<MinedProblem>& mined) {
    std::ofstream f(path, std::ios::trunc);
    expect(f.good(), Errc::io_failure, "mining report: cannot open " + path);
    f << "task_id,accuracy,selected\n";
    for (const auto& m : mined)
        f << m.task.id << "," << m.solver_accuracy << "," << (m.selected ? 1 : 0) << "\n";
    expect(f.good(), Errc::io_failure, "mining report: write failed for " + path);
}

// --- cold start -------------------------------------------------------------------------

struct ColdStartConfig {
    double corruption_rate = 0.3;  // chance the solution writer botches the answer
    double fidelity_threshold = 0.8;
    ChainGenConfig chain_gen;
    uint64_t rng_seed = 0;
};

// a retained plan-first training record: the proposed chain leads, the worked
// steps plus a self-check follow, the boxed answer closes
struct ColdStartRecord {
    TaskInstance task; // gold_chain = proposed chain, gold_steps = steps + reflection
    AnnotatedTrace trace;
    double fidelity = 0;
    bool answer_correct = true;
};

struct ColdStartStats {
    size_t total = 0;
    size_t format_failed = 0;
    size_t low_fidelity = 0;
    size_t wrong_answer = 0;
    size_t kept = 0;

    double yield() const {
        return total == 0 ? 0.0 : static_cast<double>(kept) / static_cast<double>(total);
    }
};

struct ColdStartResult {
    std::vector<ColdStartRecord> records; // retained only
    ColdStartStats stats;
};

namespace detail {

// the "noisy annotator": usually writes the true answer, sometimes a wrong one
inline std::string corrupt_answer(std::string_view answer) { return std::string(answer) + "1"; }

} // namespace detail

// For each mined problem the generator proposes a chain; the task oracle
// writes the worked solution and a self-check.  Records are dropped for a
// failed proposal, low template fidelity, or a wrong written answer; drops are
// counted, never fatal.
template <typename Real>
ColdStartResult build_cold_start(const Model<Real>& gen,
                                 std::type_identity_t<const LoraAdapters<Real>*> adapters,
                                 const Vocab& v, const std::vector<TaskInstance>& mined,
                                 const ColdStartConfig& cfg) {
    expect(!mined.empty(), Errc::empty_pool, "build_cold_start: no mined problems");
    ColdStartResult out;
    out.stats.total = mined.size();
    for (size_t i = 0; i < mined.size(); ++i) {
        const TaskInstance& t = mined[i];
        ChainProposal p = generate_chain(gen, adapters, v, t.statement, cfg.chain_gen,
                                         derive_seed(cfg.rng_seed, "cold_chain", i));
        if (!p.ok) {
            ++out.stats.format_failed;
            continue;
        }
        double fid;
        try {
            fid = chain_fidelity(p.chain, t.gold_chain);
        } catch (const Error&) {
            ++out.stats.format_failed; // unusable proposal (e.g. no arrow steps)
            continue;
        }
        if (fid < cfg.fidelity_threshold) {
            ++out.stats.low_fidelity;
            continue;
        }

        bool corrupt =
            Rng(derive_seed(cfg.rng_seed, "corrupt", i)).uniform01() < cfg.corruption_rate;
        std::string written = corrupt ? detail::corrupt_answer(t.gold_answer) : t.gold_answer;
        if (!answers_match(written, t.gold_answer)) {
            ++out.stats.wrong_answer;
            continue;
        }

        ColdStartRecord rec;
        rec.task = t;
        rec.task.gold_chain = p.chain;
        rec.task.gold_steps = t.gold_steps + "\n" + self_reflection_line(written);
        rec.task.gold_answer = written;
        rec.fidelity = fid;
        rec.answer_correct = true;
        try {
            rec.trace = compose_trace(rec.task.gold_chain, rec.task.gold_steps,
                                      rec.task.gold_answer, TraceLayout::chain_leading);
        } catch (const Error&) {
            ++out.stats.format_failed; // proposal smuggled a delimiter
            continue;
        }
        out.records.push_back(std::move(rec));
        ++out.stats.kept;
    }
    return out;
}

inline SftDataset cold_start_dataset(const Vocab& v, const std::vector<ColdStartRecord>& records,
                                     int max_seq_len) {
    expect(!records.empty(), Errc::empty_pool, "cold_start_dataset: no retained records");
    SftDataset out;
    for (const auto& rec : records) {
        TrainExample ex = build_example(v, rec.task, PromptMode::plan);
        if (ex.input_ids.size() > static_cast<size_t>(max_seq_len)) {
            ++out.skipped_too_long;
            continue;
        }
        out.examples.push_back(std::move(ex));
    }
    expect(!out.examples.empty(), Errc::empty_dataset,
           "cold_start_dataset: every record exceeded max_seq_len");
    return out;
}

// task records plus the fidelity score, one JSON object per line
inline void write_cold_start_jsonl(const std::string& path,
                                   const std::vector<ColdStartRecord>& records) {
    std::ofstream f(path, std::ios::binary);
    expect(f.good(), Errc::io_failure, "cold start: cannot open " + path);
    for (const auto& rec : records) {
        nlohmann::ordered_json j = task_to_json(rec.task);
        j["fidelity"] = rec.fidelity;
        f << j.dump() << "\n";
    }
    expect(f.good(), Errc::io_failure, "cold start: write failed for " + path);
}

// --- stage orchestration ----------------------------------------------------------------

struct Stage3Result {
    ColdStartStats cold_stats;
    std::vector<ColdStartRecord> cold_records; // the retained cold-start set
    SftResult cold_log;
    std::vector<GrpoStepStats> curve; // empty when GRPO is disabled
};

inline void write_grpo_curve(const std::string& path, const std::vector<GrpoStepStats>& curve) {
    std::ofstream f(path, std::ios::trunc);
    expect(f.good(), Errc::io_failure, "grpo curve: cannot open " + path);
    f << "step,mean_reward,mean_kl,clip_fraction\n";
    for (const auto& s : curve)
        f << s.step << "," << s.mean_reward << "," << s.mean_kl << "," << s.clip_fraction << "\n";
    expect(f.good(), Errc::io_failure, "grpo curve: write failed for " + path);
}

// Cold-start SFT on generator-proposed plans, then group-relative RL over the
// mined pool against a reference frozen at the post-cold-start weights.  With
// RL disabled the run ends after the cold start and consumes zero rollouts.
template <typename Real>
Stage3Result run_stage3(Model<Real>& solver, const Model<Real>& gen,
                        std::type_identity_t<const LoraAdapters<Real>*> gen_adapters,
                        const Vocab& v, const std::vector<TaskInstance>& mined,
                        const ColdStartConfig& cold_cfg, const SftRunConfig& cold_sft,
                        const GrpoConfig& grpo_cfg,
                        std::vector<GrpoTokenRecord>* token_log = nullptr) {
    grpo_cfg.validate();
    Stage3Result out;

    ColdStartResult cold = build_cold_start(gen, gen_adapters, v, mined, cold_cfg);
    out.cold_stats = cold.stats;
    expect(!cold.records.empty(), Errc::empty_pool, "stage 3: cold start retained nothing");
    SftDataset ds = cold_start_dataset(v, cold.records, solver.cfg.max_seq_len);
    out.cold_records = std::move(cold.records);
    out.cold_log = train_sft(solver, ds, cold_sft);

    if (!grpo_cfg.enabled || grpo_cfg.n_steps == 0) return out;

    Model<Real> ref = clone_model(solver);
    TrainContext<Real> ctx;
    std::vector<size_t> order(mined.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int step = 0; step < grpo_cfg.n_steps; ++step) {
        Rng rng(derive_seed(grpo_cfg.rng_seed, "grpo_prompts", static_cast<uint64_t>(step)));
        rng.shuffle(order);
        std::vector<TaskInstance> batch;
        for (size_t i = 0; i < std::min(grpo_cfg.prompts_per_step, mined.size()); ++i)
            batch.push_back(mined[order[i]]);
        double lr = cosine_lr(step, std::max<int64_t>(1, grpo_cfg.n_steps - 1), grpo_cfg.optim);
        out.curve.push_back(
            grpo_step(solver, ref, v, batch, grpo_cfg, lr, step, ctx, nullptr, token_log));
    }
    return out;
}

} // namespace sst
