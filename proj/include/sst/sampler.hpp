#pragma once
// Autoregressive decoding: a per-layer key/value cache for incremental
// single-token forward passes, nucleus (top-p) token selection, and the
// sampling loop used by generation, evaluation, and rollout collection.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "sst/model.hpp"
#include "sst/vocab.hpp"

namespace sst {

// rolling attention state: cached k/v rows per layer plus step scratch
template <typename Real>
struct KvCache {
    ModelConfig cfg;
    int T = 0; // tokens already fed
    std::vector<std::vector<Real>> k, v; // per layer, [max_seq_len, d_model]

    // single-step scratch buffers
    std::vector<Real> x, ln1x, ln2x, q, atty, attproj, fc, fc_act, mlpproj, lnf;
    std::vector<Real> scores;             // [max_seq_len]
    std::vector<Real> mean1, rstd1;       // layernorm stats for one row
    std::vector<Real> xa_scratch;         // adapter intermediate [rank]

    explicit KvCache(const ModelConfig& c) : cfg(c) {
        cfg.validate();
        size_t sd = static_cast<size_t>(cfg.max_seq_len) * static_cast<size_t>(cfg.d_model);
        k.assign(static_cast<size_t>(cfg.n_layers), std::vector<Real>(sd, Real(0)));
        v.assign(static_cast<size_t>(cfg.n_layers), std::vector<Real>(sd, Real(0)));
        size_t d = static_cast<size_t>(cfg.d_model);
        x.assign(d, Real(0));
        ln1x.assign(d, Real(0));
        ln2x.assign(d, Real(0));
        q.assign(d, Real(0));
        atty.assign(d, Real(0));
        attproj.assign(d, Real(0));
        fc.assign(static_cast<size_t>(cfg.d_ff), Real(0));
        fc_act.assign(static_cast<size_t>(cfg.d_ff), Real(0));
        mlpproj.assign(d, Real(0));
        lnf.assign(d, Real(0));
        scores.assign(static_cast<size_t>(cfg.max_seq_len), Real(0));
        mean1.assign(1, Real(0));
        rstd1.assign(1, Real(0));
    }

    void reset() { T = 0; }
};

// feed one token at position cache.T; logits for the next position land in
// `logits`. Must agree with the full forward pass row-for-row.
template <typename Real>
void forward_step(const Model<Real>& m, int token, KvCache<Real>& cache,
                  std::vector<Real>& logits, const LoraAdapters<Real>* lora = nullptr) {
    const ModelConfig& cfg = m.cfg;
    expect(cache.cfg.same_shape(cfg), Errc::shape_mismatch, "forward_step: cache/model mismatch");
    expect(cache.T < cfg.max_seq_len, Errc::sequence_too_long, "forward_step: cache full");
    expect(token >= 0 && token < cfg.vocab_size, Errc::out_of_vocab,
           "forward_step: token " + std::to_string(token));

    const int D = cfg.d_model, H = cfg.n_heads, F = cfg.d_ff;
    const int hs = cfg.head_dim();
    const int pos = cache.T;
    const Real att_scale = Real(1) / std::sqrt(static_cast<Real>(hs));
    const auto& W = m.p;

    for (int d = 0; d < D; ++d)
        cache.x[static_cast<size_t>(d)] =
            W.wte[static_cast<size_t>(token) * D + d] + W.wpe[static_cast<size_t>(pos) * D + d];

    for (int l = 0; l < cfg.n_layers; ++l) {
        const auto& L = W.layer[static_cast<size_t>(l)];
        Real* krow = cache.k[static_cast<size_t>(l)].data() + static_cast<size_t>(pos) * D;
        Real* vrow = cache.v[static_cast<size_t>(l)].data() + static_cast<size_t>(pos) * D;

        nn::layernorm_forward(cache.ln1x.data(), cache.mean1.data(), cache.rstd1.data(),
                              cache.x.data(), L.ln1_g, L.ln1_b, 1, D);
        nn::linear_forward(cache.q.data(), cache.ln1x.data(), L.wq, L.bq, 1, D, D);
        nn::linear_forward(krow, cache.ln1x.data(), L.wk, L.bk, 1, D, D);
        nn::linear_forward(vrow, cache.ln1x.data(), L.wv, L.bv, 1, D, D);
        if (lora) {
            const auto& A = lora->p[static_cast<size_t>(l)];
            Real s = lora->scaling();
            int r = lora->cfg.rank;
            nn::lora_forward(cache.q.data(), cache.ln1x.data(), A.q.a, A.q.b, s, 1, D, r,
                             cache.xa_scratch);
            nn::lora_forward(krow, cache.ln1x.data(), A.k.a, A.k.b, s, 1, D, r, cache.xa_scratch);
            nn::lora_forward(vrow, cache.ln1x.data(), A.v.a, A.v.b, s, 1, D, r, cache.xa_scratch);
        }

        for (int h = 0; h < H; ++h) {
            const Real* qh = cache.q.data() + static_cast<size_t>(h) * hs;
            const Real* kbase = cache.k[static_cast<size_t>(l)].data() + static_cast<size_t>(h) * hs;
            Real mx = std::numeric_limits<Real>::lowest();
            for (int t = 0; t <= pos; ++t) {
                Real s = 0;
                const Real* kt = kbase + static_cast<size_t>(t) * D;
                for (int d = 0; d < hs; ++d) s += qh[d] * kt[d];
                s *= att_scale;
                cache.scores[static_cast<size_t>(t)] = s;
                mx = std::max(mx, s);
            }
            Real denom = 0;
            for (int t = 0; t <= pos; ++t) {
                Real e = std::exp(cache.scores[static_cast<size_t>(t)] - mx);
                cache.scores[static_cast<size_t>(t)] = e;
                denom += e;
            }
            Real* ctx = cache.atty.data() + static_cast<size_t>(h) * hs;
            std::fill(ctx, ctx + hs, Real(0));
            const Real* vbase = cache.v[static_cast<size_t>(l)].data() + static_cast<size_t>(h) * hs;
            for (int t = 0; t <= pos; ++t) {
                Real p = cache.scores[static_cast<size_t>(t)] / denom;
                const Real* vt = vbase + static_cast<size_t>(t) * D;
                for (int d = 0; d < hs; ++d) ctx[d] += p * vt[d];
            }
        }

        nn::linear_forward(cache.attproj.data(), cache.atty.data(), L.wo, L.bo, 1, D, D);
        if (lora) {
            const auto& A = lora->p[static_cast<size_t>(l)];
            nn::lora_forward(cache.attproj.data(), cache.atty.data(), A.o.a, A.o.b,
                             lora->scaling(), 1, D, lora->cfg.rank, cache.xa_scratch);
        }
        for (int d = 0; d < D; ++d) cache.x[static_cast<size_t>(d)] += cache.attproj[static_cast<size_t>(d)];

        nn::layernorm_forward(cache.ln2x.data(), cache.mean1.data(), cache.rstd1.data(),
                              cache.x.data(), L.ln2_g, L.ln2_b, 1, D);
        nn::linear_forward(cache.fc.data(), cache.ln2x.data(), L.w_fc, L.b_fc, 1, D, F);
        for (int f = 0; f < F; ++f)
            cache.fc_act[static_cast<size_t>(f)] = nn::gelu(cache.fc[static_cast<size_t>(f)]);
        nn::linear_forward(cache.mlpproj.data(), cache.fc_act.data(), L.w_pr, L.b_pr, 1, F, D);
        for (int d = 0; d < D; ++d) cache.x[static_cast<size_t>(d)] += cache.mlpproj[static_cast<size_t>(d)];
    }

    nn::layernorm_forward(cache.lnf.data(), cache.mean1.data(), cache.rstd1.data(), cache.x.data(),
                          W.lnf_g, W.lnf_b, 1, D);
    logits.assign(static_cast<size_t>(cfg.vocab_size), Real(0));
    gemm(false, true, 1, cfg.vocab_size, D, Real(1), cache.lnf.data(), D, W.wte, D, Real(0),
         logits.data(), cfg.vocab_size);
    ++cache.T;
}

// one token from a single-step distribution: temperature 0 is argmax, else
// softmax at the given temperature restricted to the smallest probability-
// sorted prefix whose mass reaches top_p, renormalized
inline int nucleus_pick(const std::vector<double>& logits, double temperature, double top_p,
                        Rng& rng) {
    expect(!logits.empty(), Errc::empty_group, "nucleus_pick: no logits");
    expect(temperature >= 0.0, Errc::config_parse, "nucleus_pick: temperature < 0");
    expect(top_p > 0.0 && top_p <= 1.0, Errc::config_parse, "nucleus_pick: top_p out of (0,1]");

    const size_t V = logits.size();
    if (temperature == 0.0)
        return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());

    double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> probs(V);
    double denom = 0.0;
    for (size_t i = 0; i < V; ++i) {
        probs[i] = std::exp((logits[i] - mx) / temperature);
        denom += probs[i];
    }
    for (auto& p : probs) p /= denom;

    std::vector<size_t> order(V);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return probs[a] != probs[b] ? probs[a] > probs[b] : a < b;
    });

    double cum = 0.0;
    size_t keep = V;
    for (size_t i = 0; i < V; ++i) {
        cum += probs[order[i]];
        if (cum >= top_p - 1e-12) {
            keep = i + 1;
            break;
        }
    }

    double mass = 0.0;
    for (size_t i = 0; i < keep; ++i) mass += probs[order[i]];
    double u = rng.uniform01() * mass;
    double acc = 0.0;
    for (size_t i = 0; i < keep; ++i) {
        acc += probs[order[i]];
        if (u < acc) return static_cast<int>(order[i]);
    }
    return static_cast<int>(order[keep - 1]);
}

struct SampleConfig {
    double temperature = 0.6;
    double top_p = 0.95;
    int max_new_tokens = 256;
    int eos_id = kEosId;
    uint64_t rng_seed = 0;
};

// continuation tokens only (prompt excluded); stops at EOS, the new-token cap,
// or a full context window, and is a pure function of (model, prompt, config)
template <typename Real>
std::vector<int> sample(const Model<Real>& m, const std::vector<int>& prompt_ids,
                        const SampleConfig& sc, const LoraAdapters<Real>* lora = nullptr) {
    expect(sc.temperature >= 0.0, Errc::config_parse, "sample: temperature < 0");
    expect(sc.top_p > 0.0 && sc.top_p <= 1.0, Errc::config_parse, "sample: top_p out of (0,1]");
    expect(sc.max_new_tokens >= 0, Errc::config_parse, "sample: negative token cap");
    expect(!prompt_ids.empty(), Errc::empty_group, "sample: empty prompt");
    expect(prompt_ids.size() <= static_cast<size_t>(m.cfg.max_seq_len), Errc::sequence_too_long,
           "sample: prompt exceeds context window");

    Rng rng(sc.rng_seed);
    KvCache<Real> cache(m.cfg);
    std::vector<Real> logits;
    for (int tok : prompt_ids) forward_step(m, tok, cache, logits, lora);

    std::vector<int> out;
    std::vector<double> dl(logits.size());
    for (int n = 0; n < sc.max_new_tokens; ++n) {
        for (size_t i = 0; i < logits.size(); ++i) dl[i] = static_cast<double>(logits[i]);
        int next = nucleus_pick(dl, sc.temperature, sc.top_p, rng);
        out.push_back(next);
        if (next == sc.eos_id) break;
        if (cache.T >= m.cfg.max_seq_len) break; // context exhausted
        forward_step(m, next, cache, logits, lora);
    }
    return out;
}

} // namespace sst
