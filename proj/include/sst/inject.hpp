#pragma once
// Prompt-time chain injection: a small adapter-tuned generator proposes a
// <chain>...</chain> skeleton for a problem, and the solver answers with that
// skeleton prepended to its prompt.  Covers generator training (adapters plus,
// optionally, the embedding rows of the base), chain proposal with a strict
// format gate, the injected/plain solve paths, and the per-problem report.

#include <fstream>
#include <optional>
#include <type_traits>
#include <string>
#include <vector>

#include "sst/data.hpp"
#include "sst/hash.hpp"
#include "sst/sampler.hpp"
#include "sst/sft.hpp"
#include "sst/strutil.hpp"

namespace sst {

// --- generator training -------------------------------------------------------------

// wte and wpe sit at the front of the flat parameter buffer, so the trainable
// embedding slice is a contiguous prefix
inline size_t embedding_param_count(const ModelConfig& cfg) {
    return (static_cast<size_t>(cfg.vocab_size) + static_cast<size_t>(cfg.max_seq_len)) *
           static_cast<size_t>(cfg.d_model);
}

struct GeneratorTrainConfig {
    LoraConfig lora;          // rank/alpha of the adapters being trained
    int epochs = 1;
    size_t batch_size = 8;
    double chain_weight = 1.0; // generator targets are all chain; keep them uniform
    bool train_embeddings = false; // also update wte/wpe of the base
    OptimConfig optim;
    uint64_t rng_seed = 0;
    int log_every = 1;
};

// Adapter-only training loop over (problem -> chain) pairs.  The base stays
// frozen except, when enabled, its embedding rows; adapters and embeddings are
// clipped and bias-corrected as separate parameter groups.
template <typename Real>
SftResult train_chain_generator(Model<Real>& m, LoraAdapters<Real>& lora, const SftDataset& ds,
                                const GeneratorTrainConfig& cfg) {
    expect(!ds.examples.empty(), Errc::empty_dataset, "train_chain_generator: empty dataset");
    expect(cfg.epochs >= 1, Errc::config_parse, "train_chain_generator: epochs must be >= 1");
    expect(cfg.batch_size >= 1, Errc::config_parse,
           "train_chain_generator: batch_size must be >= 1");
    expect(cfg.chain_weight > 0, Errc::config_parse,
           "train_chain_generator: chain_weight must be positive");
    expect(lora.cfg.rank == cfg.lora.rank && lora.cfg.alpha == cfg.lora.alpha,
           Errc::shape_mismatch, "train_chain_generator: adapter shape disagrees with config");
    for (const auto& ex : ds.examples)
        expect(ex.input_ids.size() <= static_cast<size_t>(m.cfg.max_seq_len),
               Errc::example_too_long,
               "train_chain_generator: example " + ex.task_id + " exceeds context");

    size_t per_epoch = (ds.examples.size() + cfg.batch_size - 1) / cfg.batch_size;
    int64_t total_steps = static_cast<int64_t>(cfg.epochs) * static_cast<int64_t>(per_epoch);
    size_t emb_n = embedding_param_count(m.cfg);

    SftResult out;
    TrainContext<Real> ctx;
    int64_t t = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto batches = make_batches(ds, cfg.batch_size, cfg.rng_seed, static_cast<uint64_t>(epoch));
        for (const Batch& b : batches) {
            LossBreakdown<double> lb = sft_batch_step(m, b, static_cast<Real>(cfg.chain_weight),
                                                      true, ctx, &lora);
            double lr = cosine_lr(t, std::max<int64_t>(1, total_steps - 1), cfg.optim);

            clip_gradients(lora.grads, cfg.optim.grad_clip);
            adam_step(lora.params, lora.grads, lora.adam_m, lora.adam_v, lora.step + 1, lr,
                      cfg.optim);
            ++lora.step;
            if (cfg.train_embeddings) {
                clip_gradients(m.grads.data(), emb_n, cfg.optim.grad_clip);
                adam_step(m.params.data(), m.grads.data(), m.adam_m.data(), m.adam_v.data(),
                          emb_n, m.step + 1, lr, cfg.optim);
                ++m.step;
            }

            if (cfg.log_every <= 1 || t % cfg.log_every == 0 || t + 1 == total_steps)
                out.log.push_back({t, static_cast<double>(cfg.chain_weight), lb.total, lb.ce_plain,
                                   lb.ce_chain});
            ++t;
        }
    }
    lora.map_views(m.cfg);
    out.steps_run = t;
    return out;
}

// --- chain proposal -----------------------------------------------------------------

struct ChainGenConfig {
    double temperature = 0.4;
    double top_p = 1.0;
    int max_new_tokens = 96;
};

struct ChainProposal {
    bool ok = false;    // raw output parsed to exactly one nonempty chain block
    std::string chain;  // inner text, empty unless ok
    std::string raw;    // decoded continuation (eos stripped), kept for diagnostics
};

// Samples a continuation of the bare problem prompt and gates it on format:
// the output must parse and contain exactly one chain span with nonempty
// content.  A failed gate is a soft outcome, not an error.
template <typename Real>
ChainProposal generate_chain(const Model<Real>& gen,
                             std::type_identity_t<const LoraAdapters<Real>*> adapters,
                             const Vocab& v, std::string_view statement,
                             const ChainGenConfig& gc, uint64_t seed) {
    SampleConfig sc;
    sc.temperature = gc.temperature;
    sc.top_p = gc.top_p;
    sc.max_new_tokens = gc.max_new_tokens;
    sc.rng_seed = seed;
    std::vector<int> cont = sample(gen, make_prompt_ids(v, statement), sc, adapters);
    if (!cont.empty() && cont.back() == kEosId) cont.pop_back();

    ChainProposal p;
    p.raw = v.decode(cont);
    OutputAnalysis oa = analyze_output(p.raw);
    if (!oa.format_ok) return p;
    auto chains = oa.trace.spans_of(SpanKind::chain);
    if (chains.size() != 1) return p;
    std::string_view inner = std::string_view(p.raw).substr(
        chains[0].inner_start, chains[0].inner_end - chains[0].inner_start);
    inner = trim(inner);
    if (inner.empty()) return p;
    p.chain = std::string(inner);
    p.ok = true;
    return p;
}

// --- solving with and without an injected chain ---------------------------------------

struct InjectOutcome {
    bool injected = false;              // a chain was actually prepended
    std::string chain;                  // the injected chain text, empty otherwise
    std::string output_text;            // decoded continuation, trailing eos stripped
    std::optional<std::string> answer;  // boxed answer if one was emitted
    size_t output_tokens = 0;           // continuation length, trailing eos excluded
};

// One solver completion for a problem; `chain` may be null for the plain path.
// The sampling seed is derived from sc.rng_seed so injected and plain runs of
// the same problem share a stream.
template <typename Real>
InjectOutcome solve_with_chain(const Model<Real>& solver, const Vocab& v,
                               std::string_view statement, const std::string* chain,
                               const SampleConfig& sc,
                               const LoraAdapters<Real>* solver_lora = nullptr) {
    SampleConfig run = sc;
    run.rng_seed = derive_seed(sc.rng_seed, "solve", 0);
    std::vector<int> cont = sample(solver, make_prompt_ids(v, statement, chain), run, solver_lora);
    if (!cont.empty() && cont.back() == kEosId) cont.pop_back();

    InjectOutcome out;
    out.injected = chain != nullptr;
    if (chain) out.chain = *chain;
    out.output_tokens = cont.size();
    out.output_text = v.decode(cont);
    out.answer = try_extract_boxed_answer(out.output_text);
    return out;
}

template <typename Real>
InjectOutcome solve_plain(const Model<Real>& solver, const Vocab& v, std::string_view statement,
                          const SampleConfig& sc,
                          const LoraAdapters<Real>* solver_lora = nullptr) {
    return solve_with_chain(solver, v, statement, nullptr, sc, solver_lora);
}

// Full injected path: propose a chain, fall back to the bare prompt when the
// proposal fails the format gate.
template <typename Real>
InjectOutcome solve_with_injection(const Model<Real>& solver, const Model<Real>& gen,
                                   std::type_identity_t<const LoraAdapters<Real>*> gen_adapters,
                                   const Vocab& v, std::string_view statement,
                                   const SampleConfig& sc, const ChainGenConfig& gc = {},
                                   const LoraAdapters<Real>* solver_lora = nullptr) {
    ChainProposal p = generate_chain(gen, gen_adapters, v, statement, gc,
                                     derive_seed(sc.rng_seed, "chain_gen", 0));
    return solve_with_chain(solver, v, statement, p.ok ? &p.chain : nullptr, sc, solver_lora);
}

// --- report ---------------------------------------------------------------------------

struct InjectionRecord {
    std::string problem_id;
    bool injected = false;
    bool correct = false;
    size_t output_tokens = 0;
    std::string chain; // raw text; hashed in the report
};

inline void write_injection_report(const std::string& path,
                                   const std::vector<InjectionRecord>& records) {
    std::ofstream f(path, std::ios::trunc);
    expect(f.good(), Errc::io_failure, "injection report: cannot open " + path);
    f << "problem_id,injected,correct,output_tokens,chain_text_hash\n";
    for (const auto& r : records)
        f << r.problem_id << "," << (r.injected ? 1 : 0) << "," << (r.correct ? 1 : 0) << ","
          << r.output_tokens << "," << hex64(fnv1a64(r.chain)) << "\n";
    expect(f.good(), Errc::io_failure, "injection report: write failed for " + path);
}

} // namespace sst
