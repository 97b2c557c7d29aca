#pragma once
// Task records -> training examples. Builds the token streams, loss targets,
// and chain masks for the three prompt layouts the lab uses:
//   solve:    problem -> steps, trailing <chain>, boxed answer
//   injected: <chain> + problem -> steps, boxed answer (no chain re-emitted)
//   plan:     problem -> <think><chain>...</chain>steps</think>, boxed answer
// plus the (problem -> chain) pairs that train the chain generator, batching
// with epoch-keyed shuffles, and padded batch assembly.

#include <string>
#include <vector>

#include "sst/model.hpp"
#include "sst/taskgen.hpp"
#include "sst/vocab.hpp"

namespace sst {

enum class PromptMode { solve, injected, plan };
enum class SftAblation { full, no_chain, chain_unweighted };

inline const char* prompt_mode_name(PromptMode m) {
    switch (m) {
    case PromptMode::solve: return "solve";
    case PromptMode::injected: return "injected";
    case PromptMode::plan: return "plan";
    }
    return "?";
}

inline const char* ablation_name(SftAblation a) {
    switch (a) {
    case SftAblation::full: return "full";
    case SftAblation::no_chain: return "no_chain";
    case SftAblation::chain_unweighted: return "chain_unweighted";
    }
    return "?";
}

inline SftAblation ablation_from_name(std::string_view s) {
    if (s == "full") return SftAblation::full;
    if (s == "no_chain") return SftAblation::no_chain;
    if (s == "chain_unweighted") return SftAblation::chain_unweighted;
    fail(Errc::config_parse, "unknown ablation '" + std::string(s) + "'");
}

// fraction of each prompt layout in stage-1 data; solve dominates, a slice of
// injected teaches the solver to exploit a provided chain, a slice of plan
// keeps the plan-first layout in distribution for the cold start
struct DataMixConfig {
    double p_solve = 0.7;
    double p_injected = 0.2;
    double p_plan = 0.1;

    void validate() const {
        expect(p_solve >= 0 && p_injected >= 0 && p_plan >= 0, Errc::config_parse,
               "mode fractions must be nonnegative");
        double s = p_solve + p_injected + p_plan;
        expect(std::fabs(s - 1.0) < 1e-9, Errc::config_parse, "mode fractions must sum to 1");
    }
};

struct TrainExample {
    std::string task_id;
    int difficulty = 1;
    PromptMode mode = PromptMode::solve;
    std::vector<int> input_ids;      // bos + text, final token dropped
    std::vector<int> targets;        // next-token labels; prompt rows = kIgnoreTarget
    std::vector<uint8_t> chain_mask; // aligned with targets
    size_t prompt_tokens = 0;        // leading masked positions (incl. bos)
};

// prompt text ends with a newline so the solution boundary is a fixed symbol
inline std::string solver_prompt_text(std::string_view statement, const std::string* chain) {
    std::string p;
    if (chain) {
        p.append(kChainOpen).append(*chain).append(kChainClose);
    }
    p.append(statement);
    p.push_back('\n');
    return p;
}

inline std::vector<int> make_prompt_ids(const Vocab& v, std::string_view statement,
                                        const std::string* chain = nullptr) {
    std::vector<int> ids = {kBosId};
    std::vector<int> body = v.encode(solver_prompt_text(statement, chain));
    ids.insert(ids.end(), body.begin(), body.end());
    return ids;
}

namespace detail {

// assembles (full text, spans, prompt byte length) for one layout
struct ExampleText {
    std::string text;
    std::vector<MarkupSpan> spans;
    size_t prompt_bytes = 0;
};

inline ExampleText example_text(const TaskInstance& t, PromptMode mode, SftAblation ablation) {
    ExampleText out;
    bool keep_chain = ablation != SftAblation::no_chain;
    std::string prompt, body;
    switch (mode) {
    case PromptMode::solve: {
        prompt = solver_prompt_text(t.statement, nullptr);
        AnnotatedTrace trace =
            compose_trace(t.gold_chain, t.gold_steps, t.gold_answer, TraceLayout::chain_trailing);
        body = keep_chain ? trace.text : strip_chain(trace);
        break;
    }
    case PromptMode::injected: {
        expect(keep_chain, Errc::empty_chain, "injected layout requires chains");
        prompt = solver_prompt_text(t.statement, &t.gold_chain);
        body = t.gold_steps + std::string(kBoxedOpen) + t.gold_answer + "}";
        break;
    }
    case PromptMode::plan: {
        expect(keep_chain, Errc::empty_chain, "plan layout requires chains");
        prompt = solver_prompt_text(t.statement, nullptr);
        body = compose_trace(t.gold_chain, t.gold_steps, t.gold_answer, TraceLayout::chain_leading)
                   .text;
        break;
    }
    }
    out.text = prompt + body;
    out.spans = parse_markup(out.text).spans;
    out.prompt_bytes = prompt.size();
    return out;
}

// token stream -> shifted (inputs, targets) with prompt and padding masked out
inline TrainExample shift_into_example(const TokenizedText& toks, size_t prompt_bytes) {
    TrainExample ex;
    std::vector<int> stream = {kBosId};
    std::vector<uint8_t> stream_mask = {0};
    size_t prompt_tok = 1; // bos
    for (size_t i = 0; i < toks.ids.size(); ++i) {
        stream.push_back(toks.ids[i]);
        stream_mask.push_back(toks.chain_mask[i]);
        if (toks.byte_range[i].second <= prompt_bytes) ++prompt_tok;
    }
    stream.push_back(kEosId);
    stream_mask.push_back(0);

    size_t n = stream.size() - 1;
    ex.input_ids.assign(stream.begin(), stream.begin() + static_cast<std::ptrdiff_t>(n));
    ex.targets.resize(n);
    ex.chain_mask.resize(n);
    for (size_t i = 0; i < n; ++i) {
        bool in_prompt = i + 1 < prompt_tok; // target i predicts stream[i+1]
        ex.targets[i] = in_prompt ? kIgnoreTarget : stream[i + 1];
        ex.chain_mask[i] = in_prompt ? uint8_t{0} : stream_mask[i + 1];
    }
    ex.prompt_tokens = prompt_tok;
    return ex;
}

} // namespace detail

inline TrainExample build_example(const Vocab& v, const TaskInstance& t, PromptMode mode,
                                  SftAblation ablation = SftAblation::full) {
    detail::ExampleText et = detail::example_text(t, mode, ablation);
    TrainExample ex = detail::shift_into_example(v.encode_with_mask(et.text, et.spans),
                                                 et.prompt_bytes);
    ex.task_id = t.id;
    ex.difficulty = t.difficulty;
    ex.mode = mode;
    return ex;
}

// (problem -> <chain>...</chain>) pair for generator training; the whole chain
// block is both the target and the weighted region
inline TrainExample build_generator_example(const Vocab& v, const TaskInstance& t) {
    expect(!t.gold_chain.empty(), Errc::empty_chain, "generator example needs a chain: " + t.id);
    std::string prompt = solver_prompt_text(t.statement, nullptr);
    std::string text = prompt + std::string(kChainOpen) + t.gold_chain + std::string(kChainClose);
    TrainExample ex = detail::shift_into_example(
        v.encode_with_mask(text, parse_markup(text).spans), prompt.size());
    ex.task_id = t.id;
    ex.difficulty = t.difficulty;
    ex.mode = PromptMode::plan;
    return ex;
}

struct SftDataset {
    std::vector<TrainExample> examples;
    size_t skipped_too_long = 0;
};

// deterministic per-task layout assignment: cumulative thresholds over a
// seed-derived uniform draw
inline PromptMode pick_mode(const DataMixConfig& mix, uint64_t seed, uint64_t index) {
    double u = Rng(derive_seed(seed, "prompt_mode", index)).uniform01();
    if (u < mix.p_solve) return PromptMode::solve;
    if (u < mix.p_solve + mix.p_injected) return PromptMode::injected;
    return PromptMode::plan;
}

inline SftDataset build_sft_dataset(const Vocab& v, const std::vector<TaskInstance>& tasks,
                                    const DataMixConfig& mix, int max_seq_len,
                                    SftAblation ablation = SftAblation::full,
                                    uint64_t seed = 0) {
    mix.validate();
    expect(!tasks.empty(), Errc::empty_dataset, "build_sft_dataset: no tasks");
    SftDataset out;
    for (size_t i = 0; i < tasks.size(); ++i) {
        PromptMode mode = ablation == SftAblation::no_chain
                              ? PromptMode::solve
                              : pick_mode(mix, seed, i);
        TrainExample ex = build_example(v, tasks[i], mode, ablation);
        if (ex.input_ids.size() > static_cast<size_t>(max_seq_len)) {
            ++out.skipped_too_long;
            continue;
        }
        out.examples.push_back(std::move(ex));
    }
    expect(!out.examples.empty(), Errc::empty_dataset,
           "build_sft_dataset: every example exceeded max_seq_len");
    return out;
}

inline SftDataset build_generator_dataset(const Vocab& v, const std::vector<TaskInstance>& tasks,
                                          int max_seq_len) {
    expect(!tasks.empty(), Errc::empty_dataset, "build_generator_dataset: no tasks");
    SftDataset out;
    for (const auto& t : tasks) {
        TrainExample ex = build_generator_example(v, t);
        if (ex.input_ids.size() > static_cast<size_t>(max_seq_len)) {
            ++out.skipped_too_long;
            continue;
        }
        out.examples.push_back(std::move(ex));
    }
    expect(!out.examples.empty(), Errc::empty_dataset,
           "build_generator_dataset: every example exceeded max_seq_len");
    return out;
}

// --- batching ---------------------------------------------------------------------

struct Batch {
    size_t size = 0;  // rows
    size_t width = 0; // padded row length
    std::vector<int> input_ids;       // [size, width], pad = kPadId
    std::vector<int> targets;         // [size, width], pad = kIgnoreTarget
    std::vector<uint8_t> chain_mask;  // [size, width], pad = 0
    std::vector<size_t> lengths;      // true input lengths per row
    std::vector<size_t> example_idx;  // provenance into the dataset

    const int* row_inputs(size_t r) const { return input_ids.data() + r * width; }
    const int* row_targets(size_t r) const { return targets.data() + r * width; }
    const uint8_t* row_mask(size_t r) const { return chain_mask.data() + r * width; }

    // loss-bearing target count over the whole batch (the global normalizer)
    size_t loss_tokens() const {
        size_t n = 0;
        for (int t : targets)
            if (t != kIgnoreTarget) ++n;
        return n;
    }
};

// epoch-wise shuffle keyed by (seed, epoch); same key, same permutation
inline std::vector<Batch> make_batches(const SftDataset& ds, size_t batch_size, uint64_t seed,
                                       uint64_t epoch) {
    expect(batch_size >= 1, Errc::config_parse, "batch_size must be >= 1");
    expect(!ds.examples.empty(), Errc::empty_dataset, "make_batches: empty dataset");

    std::vector<size_t> perm(ds.examples.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    Rng rng(derive_seed(seed, "epoch_shuffle", epoch));
    rng.shuffle(perm);

    std::vector<Batch> out;
    for (size_t start = 0; start < perm.size(); start += batch_size) {
        size_t end = std::min(perm.size(), start + batch_size);
        Batch b;
        b.size = end - start;
        for (size_t i = start; i < end; ++i)
            b.width = std::max(b.width, ds.examples[perm[i]].input_ids.size());
        b.input_ids.assign(b.size * b.width, kPadId);
        b.targets.assign(b.size * b.width, kIgnoreTarget);
        b.chain_mask.assign(b.size * b.width, 0);
        for (size_t r = 0; r < b.size; ++r) {
            const TrainExample& ex = ds.examples[perm[start + r]];
            size_t n = ex.input_ids.size();
            std::copy(ex.input_ids.begin(), ex.input_ids.end(),
                      b.input_ids.begin() + static_cast<std::ptrdiff_t>(r * b.width));
            std::copy(ex.targets.begin(), ex.targets.end(),
                      b.targets.begin() + static_cast<std::ptrdiff_t>(r * b.width));
            std::copy(ex.chain_mask.begin(), ex.chain_mask.end(),
                      b.chain_mask.begin() + static_cast<std::ptrdiff_t>(r * b.width));
            b.lengths.push_back(n);
            b.example_idx.push_back(perm[start + r]);
        }
        out.push_back(std::move(b));
    }
    return out;
}

// the self-check appended to cold-start solutions; lives here because the
// vocab has to cover it before any stage-3 text exists
inline std::string self_reflection_line(std::string_view answer) {
    return std::string("Check: re-derive final value from the last step; it is ") +
           std::string(answer) + ".";
}

// the corpus a vocab must cover: every task string plus the non-special markup
// bytes and structural characters the lab emits
inline std::vector<std::string> vocab_corpus(const std::vector<TaskInstance>& tasks) {
    std::vector<std::string> docs;
    docs.emplace_back("\\boxed{}\n 0123456789+-*/=^().,:?");
    docs.push_back(self_reflection_line("0"));
    for (const auto& t : tasks) {
        docs.push_back(t.statement);
        docs.push_back(t.gold_chain);
        docs.push_back(t.gold_steps);
        docs.push_back(t.gold_answer);
    }
    return docs;
}

} // namespace sst
