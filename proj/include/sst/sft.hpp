#pragma once
// Stage-1 trainer: chain-weighted supervised fine-tuning with the linear
// weight decay, batch-global loss normalization, gradient accumulation over
// padded batches, and the no-chain / unweighted ablations. The same loop
// trains the chain generator when an adapter set is passed (base frozen).

#include <fstream>
#include <string>
#include <vector>

#include "sst/data.hpp"
#include "sst/model.hpp"

namespace sst {

struct SftRunConfig {
    int epochs = 1;
    size_t batch_size = 8;
    WeightedLossConfig loss_cfg;
    SftAblation ablation = SftAblation::full;
    OptimConfig optim;
    uint64_t rng_seed = 0;
    int log_every = 1; // record every k-th step (first and last always kept)
};

struct SftStepLog {
    int64_t step = 0;
    double weight = 1.0;
    double total = 0.0;
    double ce_plain = 0.0;
    double ce_chain = 0.0;
};

struct SftResult {
    std::vector<SftStepLog> log;
    int64_t steps_run = 0;
};

inline void write_loss_log(const std::string& path, const std::vector<SftStepLog>& log) {
    std::ofstream f(path, std::ios::trunc);
    expect(f.good(), Errc::io_failure, "loss log: cannot open " + path);
    f << "step,weight,total,ce_plain,ce_chain\n";
    for (const auto& r : log)
        f << r.step << "," << r.weight << "," << r.total << "," << r.ce_plain << ","
          << r.ce_chain << "\n";
    expect(f.good(), Errc::io_failure, "loss log: write failed for " + path);
}

// one accumulated update over a padded batch with the batch-global normalizer;
// returns the batch-level breakdown (sums over rows, one shared n_tokens)
template <typename Real>
LossBreakdown<double> sft_batch_step(Model<Real>& m, const Batch& b, Real w,
                                     bool weight_delimiters, TrainContext<Real>& ctx,
                                     LoraAdapters<Real>* lora = nullptr) {
    size_t n_batch = b.loss_tokens();
    expect(n_batch > 0, Errc::empty_group, "batch carries no loss-bearing tokens");

    m.zero_grad();
    if (lora) lora->zero_grad();

    LossBreakdown<double> agg;
    agg.weight_used = static_cast<double>(w);
    for (size_t r = 0; r < b.size; ++r) {
        std::vector<int> ids(b.row_inputs(r), b.row_inputs(r) + b.lengths[r]);
        std::vector<int> tg(b.row_targets(r), b.row_targets(r) + b.lengths[r]);
        std::vector<uint8_t> mk(b.row_mask(r), b.row_mask(r) + b.lengths[r]);
        // per-row losses normalize by the row count; rescale so the batch sums
        // to the global-normalizer objective
        Activations<Real>& acts = ctx.acts;
        forward(m, ids, acts, lora);
        LossBreakdown<Real> row = weighted_ce_loss(acts.logits.data(), acts.T, m.cfg.vocab_size,
                                                   tg, mk, w, weight_delimiters);
        Real scale = static_cast<Real>(row.n_tokens) / static_cast<Real>(n_batch);
        ctx.scratch.resize(m.cfg, acts.T);
        weighted_ce_backward(acts.logits.data(), acts.T, m.cfg.vocab_size, tg, mk, w,
                             ctx.scratch.dlogits.data(), weight_delimiters, scale);
        backward(m, ids, acts, ctx.scratch, lora);
        agg.ce_plain += static_cast<double>(row.ce_plain);
        agg.ce_chain += static_cast<double>(row.ce_chain);
    }
    agg.n_tokens = n_batch;
    agg.total = (agg.ce_plain + agg.weight_used * agg.ce_chain) / static_cast<double>(n_batch);
    expect(std::isfinite(agg.total), Errc::non_finite_loss, "batch loss is not finite");
    return agg;
}

template <typename Real>
SftResult train_sft(Model<Real>& m, const SftDataset& ds, const SftRunConfig& cfg,
                    LoraAdapters<Real>* lora = nullptr) {
    expect(!ds.examples.empty(), Errc::empty_dataset, "train_sft: empty dataset");
    expect(cfg.epochs >= 1, Errc::config_parse, "train_sft: epochs must be >= 1");
    expect(cfg.batch_size >= 1, Errc::config_parse, "train_sft: batch_size must be >= 1");
    cfg.loss_cfg.validate();
    for (const auto& ex : ds.examples)
        expect(ex.input_ids.size() <= static_cast<size_t>(m.cfg.max_seq_len),
               Errc::example_too_long, "train_sft: example " + ex.task_id + " exceeds context");

    size_t per_epoch = (ds.examples.size() + cfg.batch_size - 1) / cfg.batch_size;
    int64_t total_steps = static_cast<int64_t>(cfg.epochs) * static_cast<int64_t>(per_epoch);

    // schedule spans the run so logs start at w_initial and end exactly at 1
    WeightedLossConfig sched = cfg.loss_cfg;
    if (cfg.ablation == SftAblation::chain_unweighted) sched.w_initial = 1.0;
    sched.total_steps = std::max<int64_t>(1, total_steps - 1);

    SftResult out;
    TrainContext<Real> ctx;
    int64_t t = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto batches = make_batches(ds, cfg.batch_size, cfg.rng_seed, static_cast<uint64_t>(epoch));
        for (const Batch& b : batches) {
            double w = chain_weight(std::min(t, sched.total_steps), sched);
            LossBreakdown<double> lb;
            try {
                lb = sft_batch_step(m, b, static_cast<Real>(w), sched.weight_delimiters, ctx, lora);
            } catch (const Error& e) {
                if (e.code() == Errc::non_finite_loss)
                    fail(Errc::non_finite_loss,
                         std::string(e.what()) + " (aborted at step " + std::to_string(t) + ")");
                throw;
            }

            double lr = cosine_lr(t, std::max<int64_t>(1, total_steps - 1), cfg.optim);
            if (lora) {
                clip_gradients(lora->grads, cfg.optim.grad_clip);
                adam_step(lora->params, lora->grads, lora->adam_m, lora->adam_v, lora->step + 1,
                          lr, cfg.optim);
                ++lora->step;
            } else {
                clip_gradients(m.grads, cfg.optim.grad_clip);
                adam_step(m.params, m.grads, m.adam_m, m.adam_v, m.step + 1, lr, cfg.optim);
                ++m.step;
            }

            if (cfg.log_every <= 1 || t % cfg.log_every == 0 || t + 1 == total_steps)
                out.log.push_back({t, w, lb.total, lb.ce_plain, lb.ce_chain});
            ++t;
        }
    }
    if (lora) lora->map_views(m.cfg);
    out.steps_run = t;
    return out;
}

} // namespace sst
