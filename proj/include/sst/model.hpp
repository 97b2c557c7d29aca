#pragma once
// Decoder-only transformer (pre-LN, tied embeddings, GELU MLP) with
// hand-written reverse-mode gradients, templated on the scalar type so tests
// run the exact same code in 64-bit while speed runs use 32-bit.
//
// Training loss: chain-weighted cross entropy
//     L = (1/N) * ( sum_{i not in chain} CE_i  +  w(t) * sum_{i in chain} CE_i )
// where N counts every loss-bearing target token and w(t) decays linearly
// from w_initial to 1 over total_steps.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sst/errors.hpp"
#include "sst/gemm.hpp"
#include "sst/rng.hpp"
#include "sst/vocab.hpp"

namespace sst {

struct ModelConfig {
    int vocab_size = 0;
    int d_model = 128;
    int n_layers = 4;
    int n_heads = 4;
    int d_ff = 512;
    int max_seq_len = 512;
    uint64_t rng_seed = 0;

    int head_dim() const { return d_model / n_heads; }
    void validate() const {
        expect(vocab_size > 0, Errc::shape_mismatch, "vocab_size must be positive");
        expect(d_model > 0 && n_layers > 0 && n_heads > 0 && d_ff > 0 && max_seq_len > 0,
               Errc::shape_mismatch, "model dimensions must be positive");
        expect(d_model % n_heads == 0, Errc::shape_mismatch,
               "d_model must be divisible by n_heads");
    }
    bool same_shape(const ModelConfig& o) const {
        return vocab_size == o.vocab_size && d_model == o.d_model && n_layers == o.n_layers &&
               n_heads == o.n_heads && d_ff == o.d_ff && max_seq_len == o.max_seq_len;
    }
};

// --- parameter layout -----------------------------------------------------------

template <class Real> struct LayerViews {
    Real *ln1_g, *ln1_b;
    Real *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo; // weights stored [out, in]
    Real *ln2_g, *ln2_b;
    Real *w_fc, *b_fc; // [d_ff, d_model], [d_ff]
    Real *w_pr, *b_pr; // [d_model, d_ff], [d_model]
};

template <class Real> struct ParamViews {
    Real* wte = nullptr; // [vocab, d_model], also the tied output head
    Real* wpe = nullptr; // [max_seq_len, d_model]
    std::vector<LayerViews<Real>> layer;
    Real *lnf_g = nullptr, *lnf_b = nullptr;
};

inline size_t param_count(const ModelConfig& c) {
    size_t D = static_cast<size_t>(c.d_model), F = static_cast<size_t>(c.d_ff);
    size_t per_layer = 4 * D * D + 2 * F * D + 9 * D + F;
    return static_cast<size_t>(c.vocab_size) * D + static_cast<size_t>(c.max_seq_len) * D +
           static_cast<size_t>(c.n_layers) * per_layer + 2 * D;
}

template <class Real> inline ParamViews<Real> map_param_views(Real* base, const ModelConfig& c) {
    size_t D = static_cast<size_t>(c.d_model), F = static_cast<size_t>(c.d_ff);
    ParamViews<Real> v;
    Real* p = base;
    auto take = [&](size_t n) {
        Real* r = p;
        p += n;
        return r;
    };
    v.wte = take(static_cast<size_t>(c.vocab_size) * D);
    v.wpe = take(static_cast<size_t>(c.max_seq_len) * D);
    v.layer.resize(static_cast<size_t>(c.n_layers));
    for (auto& l : v.layer) {
        l.ln1_g = take(D);
        l.ln1_b = take(D);
        l.wq = take(D * D);
        l.bq = take(D);
        l.wk = take(D * D);
        l.bk = take(D);
        l.wv = take(D * D);
        l.bv = take(D);
        l.wo = take(D * D);
        l.bo = take(D);
        l.ln2_g = take(D);
        l.ln2_b = take(D);
        l.w_fc = take(F * D);
        l.b_fc = take(F);
        l.w_pr = take(D * F);
        l.b_pr = take(D);
    }
    v.lnf_g = take(D);
    v.lnf_b = take(D);
    return v;
}

// human-readable name of the flat parameter index (finite-difference reports)
inline std::string param_label(const ModelConfig& c, size_t idx) {
    size_t D = static_cast<size_t>(c.d_model), F = static_cast<size_t>(c.d_ff);
    struct Seg {
        const char* name;
        size_t n;
    };
    std::vector<Seg> segs;
    segs.push_back({"wte", static_cast<size_t>(c.vocab_size) * D});
    segs.push_back({"wpe", static_cast<size_t>(c.max_seq_len) * D});
    static const char* kLayerNames[] = {"ln1_g", "ln1_b", "wq", "bq", "wk", "bk", "wv", "bv",
                                        "wo",    "bo",    "ln2_g", "ln2_b", "w_fc", "b_fc",
                                        "w_pr",  "b_pr"};
    const size_t layer_sizes[] = {D, D, D * D, D, D * D, D, D * D, D,
                                  D * D, D, D, D, F * D, F, D * F, D};
    for (int l = 0; l < c.n_layers; ++l)
        for (int s = 0; s < 16; ++s) segs.push_back({kLayerNames[s], layer_sizes[s]});
    segs.push_back({"lnf_g", D});
    segs.push_back({"lnf_b", D});
    size_t off = 0;
    int layer_counter = -2; // first two segments are global
    for (size_t s = 0; s < segs.size(); ++s) {
        if (s >= 2 && (s - 2) % 16 == 0) ++layer_counter;
        if (idx < off + segs[s].n) {
            std::string prefix = s >= 2 && s < segs.size() - 2
                                     ? "layer" + std::to_string((s - 2) / 16) + "."
                                     : "";
            return prefix + segs[s].name + "[" + std::to_string(idx - off) + "]";
        }
        off += segs[s].n;
    }
    return "out_of_range[" + std::to_string(idx) + "]";
}

// --- low-rank adapters ----------------------------------------------------------

struct LoraConfig {
    int rank = 8;
    double alpha = 16.0;
};

// adapters on the four attention projections of every layer; B starts at zero
// so a fresh adapter is an exact no-op
template <class Real> struct LoraAdapters {
    struct Target {
        Real* a = nullptr; // [rank, d_in]
        Real* b = nullptr; // [d_out, rank]
    };
    struct Layer {
        Target q, k, v, o;
    };

    LoraConfig cfg;
    int d_model = 0;
    std::vector<Real> params, grads, adam_m, adam_v;
    std::vector<Layer> p, g;
    int64_t step = 0;

    LoraAdapters() = default;
    LoraAdapters(const ModelConfig& mc, const LoraConfig& lc, uint64_t seed) : cfg(lc), d_model(mc.d_model) {
        expect(lc.rank >= 1, Errc::shape_mismatch, "lora rank must be >= 1");
        expect(lc.rank <= mc.d_model, Errc::shape_mismatch, "lora rank exceeds d_model");
        size_t per_target = 2 * static_cast<size_t>(lc.rank) * static_cast<size_t>(mc.d_model);
        size_t total = static_cast<size_t>(mc.n_layers) * 4 * per_target;
        params.assign(total, Real(0));
        grads.assign(total, Real(0));
        adam_m.assign(total, Real(0));
        adam_v.assign(total, Real(0));
        map_views(mc);
        Rng rng(seed);
        // A gaussian, B zero: standard init keeping the initial update at zero
        for (int l = 0; l < mc.n_layers; ++l) {
            for (Target* t : {&p[static_cast<size_t>(l)].q, &p[static_cast<size_t>(l)].k,
                              &p[static_cast<size_t>(l)].v, &p[static_cast<size_t>(l)].o}) {
                size_t n = static_cast<size_t>(lc.rank) * static_cast<size_t>(mc.d_model);
                for (size_t i = 0; i < n; ++i) t->a[i] = static_cast<Real>(rng.normal(0.0, 0.02));
            }
        }
    }

    LoraAdapters(const LoraAdapters&) = delete;
    LoraAdapters& operator=(const LoraAdapters&) = delete;
    LoraAdapters(LoraAdapters&&) noexcept = default;
    LoraAdapters& operator=(LoraAdapters&&) noexcept = default;

    LoraAdapters clone(const ModelConfig& mc) const {
        LoraAdapters out(mc, cfg, 0);
        out.params = params;
        out.grads = grads;
        out.adam_m = adam_m;
        out.adam_v = adam_v;
        out.step = step;
        out.map_views(mc);
        return out;
    }

    Real scaling() const { return static_cast<Real>(cfg.alpha / cfg.rank); }
    void zero_grad() { std::fill(grads.begin(), grads.end(), Real(0)); }

    void map_views(const ModelConfig& mc) {
        size_t rd = static_cast<size_t>(cfg.rank) * static_cast<size_t>(mc.d_model);
        auto map_one = [&](std::vector<Real>& buf, std::vector<Layer>& out) {
            out.resize(static_cast<size_t>(mc.n_layers));
            Real* ptr = buf.data();
            for (auto& lay : out) {
                for (Target* t : {&lay.q, &lay.k, &lay.v, &lay.o}) {
                    t->a = ptr;
                    ptr += rd;
                    t->b = ptr;
                    ptr += rd;
                }
            }
        };
        map_one(params, p);
        map_one(grads, g);
    }
};

// --- model state ----------------------------------------------------------------

template <class Real> struct Model {
    ModelConfig cfg;
    std::vector<Real> params, grads;
    ParamViews<Real> p, g;
    std::vector<Real> adam_m, adam_v;
    int64_t step = 0;

    explicit Model(const ModelConfig& c) : cfg(c) {
        cfg.validate();
        params.assign(param_count(cfg), Real(0));
        grads.assign(params.size(), Real(0));
        adam_m.assign(params.size(), Real(0));
        adam_v.assign(params.size(), Real(0));
        remap();
        init_weights();
    }

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) noexcept = default;
    Model& operator=(Model&&) noexcept = default;

    Model clone() const {
        Model out(cfg);
        out.params = params;
        out.grads = grads;
        out.adam_m = adam_m;
        out.adam_v = adam_v;
        out.step = step;
        out.remap();
        return out;
    }

    void remap() {
        p = map_param_views(params.data(), cfg);
        g = map_param_views(grads.data(), cfg);
    }

    void zero_grad() { std::fill(grads.begin(), grads.end(), Real(0)); }

    void init_weights() {
        Rng rng(cfg.rng_seed);
        size_t D = static_cast<size_t>(cfg.d_model), F = static_cast<size_t>(cfg.d_ff);
        auto gauss = [&](Real* w, size_t n) {
            for (size_t i = 0; i < n; ++i) w[i] = static_cast<Real>(rng.normal(0.0, 0.02));
        };
        auto ones = [](Real* w, size_t n) { std::fill(w, w + n, Real(1)); };
        gauss(p.wte, static_cast<size_t>(cfg.vocab_size) * D);
        gauss(p.wpe, static_cast<size_t>(cfg.max_seq_len) * D);
        for (auto& l : p.layer) {
            ones(l.ln1_g, D);
            gauss(l.wq, D * D);
            gauss(l.wk, D * D);
            gauss(l.wv, D * D);
            gauss(l.wo, D * D);
            ones(l.ln2_g, D);
            gauss(l.w_fc, F * D);
            gauss(l.w_pr, D * F);
        }
        ones(p.lnf_g, D);
    }
};

// --- forward pass ---------------------------------------------------------------

template <class Real> struct Activations {
    int T = 0;
    struct Layer {
        std::vector<Real> ln1, q, k, v, att, atty, attproj, res1;
        std::vector<Real> ln2, fc, fc_act, mlpproj, res2;
        std::vector<Real> ln1_mean, ln1_rstd, ln2_mean, ln2_rstd;
    };
    std::vector<Real> encoded;
    std::vector<Layer> layer;
    std::vector<Real> lnf, lnf_mean, lnf_rstd, logits;

    void resize(const ModelConfig& c, int t_len) {
        T = t_len;
        size_t T_ = static_cast<size_t>(t_len), D = static_cast<size_t>(c.d_model),
               F = static_cast<size_t>(c.d_ff), H = static_cast<size_t>(c.n_heads);
        encoded.assign(T_ * D, Real(0));
        layer.resize(static_cast<size_t>(c.n_layers));
        for (auto& l : layer) {
            for (auto* v :
                 {&l.ln1, &l.q, &l.k, &l.v, &l.atty, &l.attproj, &l.res1, &l.ln2, &l.mlpproj, &l.res2})
                v->assign(T_ * D, Real(0));
            l.att.assign(H * T_ * T_, Real(0));
            l.fc.assign(T_ * F, Real(0));
            l.fc_act.assign(T_ * F, Real(0));
            for (auto* v : {&l.ln1_mean, &l.ln1_rstd, &l.ln2_mean, &l.ln2_rstd})
                v->assign(T_, Real(0));
        }
        lnf.assign(T_ * D, Real(0));
        lnf_mean.assign(T_, Real(0));
        lnf_rstd.assign(T_, Real(0));
        logits.assign(T_ * static_cast<size_t>(c.vocab_size), Real(0));
    }
};

namespace nn {

constexpr double kLnEps = 1e-5;
constexpr double kGeluK = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluC = 0.044715;

template <class Real>
inline void layernorm_forward(Real* out, Real* mean, Real* rstd, const Real* x, const Real* g,
                              const Real* b, int T, int D) {
    for (int t = 0; t < T; ++t) {
        const Real* xr = x + static_cast<size_t>(t) * D;
        Real* yr = out + static_cast<size_t>(t) * D;
        Real mu = 0;
        for (int i = 0; i < D; ++i) mu += xr[i];
        mu /= static_cast<Real>(D);
        Real var = 0;
        for (int i = 0; i < D; ++i) {
            Real d = xr[i] - mu;
            var += d * d;
        }
        var /= static_cast<Real>(D);
        Real rs = Real(1) / std::sqrt(var + static_cast<Real>(kLnEps));
        for (int i = 0; i < D; ++i) yr[i] = (xr[i] - mu) * rs * g[i] + b[i];
        mean[t] = mu;
        rstd[t] = rs;
    }
}

// accumulates into dx, dg, db
template <class Real>
inline void layernorm_backward(Real* dx, Real* dg, Real* db, const Real* dout, const Real* x,
                               const Real* mean, const Real* rstd, const Real* g, int T, int D) {
    for (int t = 0; t < T; ++t) {
        const Real* dor = dout + static_cast<size_t>(t) * D;
        const Real* xr = x + static_cast<size_t>(t) * D;
        Real* dxr = dx + static_cast<size_t>(t) * D;
        Real mu = mean[t], rs = rstd[t];
        Real sum_dn = 0, sum_dnx = 0;
        for (int i = 0; i < D; ++i) {
            Real xhat = (xr[i] - mu) * rs;
            Real dn = dor[i] * g[i];
            sum_dn += dn;
            sum_dnx += dn * xhat;
        }
        sum_dn /= static_cast<Real>(D);
        sum_dnx /= static_cast<Real>(D);
        for (int i = 0; i < D; ++i) {
            Real xhat = (xr[i] - mu) * rs;
            Real dn = dor[i] * g[i];
            dxr[i] += (dn - sum_dn - xhat * sum_dnx) * rs;
            dg[i] += dor[i] * xhat;
            db[i] += dor[i];
        }
    }
}

template <class Real> inline Real gelu(Real x) {
    Real u = static_cast<Real>(kGeluK) * (x + static_cast<Real>(kGeluC) * x * x * x);
    return Real(0.5) * x * (Real(1) + std::tanh(u));
}

template <class Real> inline Real gelu_grad(Real x) {
    Real u = static_cast<Real>(kGeluK) * (x + static_cast<Real>(kGeluC) * x * x * x);
    Real th = std::tanh(u);
    Real du = static_cast<Real>(kGeluK) * (Real(1) + Real(3) * static_cast<Real>(kGeluC) * x * x);
    return Real(0.5) * (Real(1) + th) + Real(0.5) * x * (Real(1) - th * th) * du;
}

// y[T,dout] = x[T,din] @ W^T + b, W stored [dout, din]
template <class Real>
inline void linear_forward(Real* y, const Real* x, const Real* w, const Real* b, int T, int din,
                           int dout) {
    gemm(false, true, T, dout, din, Real(1), x, din, w, din, Real(0), y, dout);
    if (b)
        for (int t = 0; t < T; ++t)
            for (int j = 0; j < dout; ++j) y[static_cast<size_t>(t) * dout + j] += b[j];
}

// dx += dy @ W ; dW += dy^T @ x ; db += colsum(dy)
template <class Real>
inline void linear_backward(Real* dx, Real* dw, Real* db, const Real* dy, const Real* x,
                            const Real* w, int T, int din, int dout) {
    if (dx) gemm(false, false, T, din, dout, Real(1), dy, dout, w, din, Real(1), dx, din);
    gemm(true, false, dout, din, T, Real(1), dy, dout, x, din, Real(1), dw, din);
    if (db)
        for (int t = 0; t < T; ++t)
            for (int j = 0; j < dout; ++j) db[j] += dy[static_cast<size_t>(t) * dout + j];
}

// y += scale * (x @ A^T) @ B^T, the adapter contribution
template <class Real>
inline void lora_forward(Real* y, const Real* x, const Real* a, const Real* b, Real scale, int T,
                         int d, int rank, std::vector<Real>& xa_scratch) {
    xa_scratch.assign(static_cast<size_t>(T) * rank, Real(0));
    gemm(false, true, T, rank, d, Real(1), x, d, a, d, Real(0), xa_scratch.data(), rank);
    gemm(false, true, T, d, rank, scale, xa_scratch.data(), rank, b, rank, Real(1), y, d);
}

template <class Real>
inline void lora_backward(Real* dx, Real* da, Real* db, const Real* dy, const Real* x,
                          const Real* a, const Real* b, Real scale, int T, int d, int rank,
                          std::vector<Real>& xa_scratch, std::vector<Real>& dxa_scratch) {
    xa_scratch.assign(static_cast<size_t>(T) * rank, Real(0));
    gemm(false, true, T, rank, d, Real(1), x, d, a, d, Real(0), xa_scratch.data(), rank);
    gemm(true, false, d, rank, T, scale, dy, d, xa_scratch.data(), rank, Real(1), db, rank);
    dxa_scratch.assign(static_cast<size_t>(T) * rank, Real(0));
    gemm(false, false, T, rank, d, scale, dy, d, b, rank, Real(0), dxa_scratch.data(), rank);
    gemm(true, false, rank, d, T, Real(1), dxa_scratch.data(), rank, x, d, Real(1), da, d);
    if (dx) gemm(false, false, T, d, rank, Real(1), dxa_scratch.data(), rank, a, d, Real(1), dx, d);
}

} // namespace nn

template <class Real>
inline void forward(const Model<Real>& m, const std::vector<int>& ids, Activations<Real>& acts,
                    const LoraAdapters<Real>* lora = nullptr) {
    const ModelConfig& c = m.cfg;
    int T = static_cast<int>(ids.size());
    expect(T >= 1, Errc::length_mismatch, "forward needs at least one token");
    expect(T <= c.max_seq_len, Errc::sequence_too_long,
           "sequence length " + std::to_string(T) + " exceeds max_seq_len " +
               std::to_string(c.max_seq_len));
    int D = c.d_model, F = c.d_ff, H = c.n_heads, hs = c.head_dim(), V = c.vocab_size;
    Real att_scale = Real(1) / std::sqrt(static_cast<Real>(hs));
    acts.resize(c, T);

    for (int t = 0; t < T; ++t) {
        int id = ids[static_cast<size_t>(t)];
        expect(id >= 0 && id < V, Errc::out_of_vocab,
               "token id " + std::to_string(id) + " outside vocab");
        const Real* wte_row = m.p.wte + static_cast<size_t>(id) * D;
        const Real* wpe_row = m.p.wpe + static_cast<size_t>(t) * D;
        Real* out = acts.encoded.data() + static_cast<size_t>(t) * D;
        for (int i = 0; i < D; ++i) out[i] = wte_row[i] + wpe_row[i];
    }

    std::vector<Real> xa_scratch;
    const Real* x = acts.encoded.data();
    for (int l = 0; l < c.n_layers; ++l) {
        auto& A = acts.layer[static_cast<size_t>(l)];
        const auto& W = m.p.layer[static_cast<size_t>(l)];
        const typename LoraAdapters<Real>::Layer* lw =
            lora ? &lora->p[static_cast<size_t>(l)] : nullptr;

        nn::layernorm_forward(A.ln1.data(), A.ln1_mean.data(), A.ln1_rstd.data(), x, W.ln1_g,
                              W.ln1_b, T, D);
        nn::linear_forward(A.q.data(), A.ln1.data(), W.wq, W.bq, T, D, D);
        nn::linear_forward(A.k.data(), A.ln1.data(), W.wk, W.bk, T, D, D);
        nn::linear_forward(A.v.data(), A.ln1.data(), W.wv, W.bv, T, D, D);
        if (lw) {
            Real s = lora->scaling();
            nn::lora_forward(A.q.data(), A.ln1.data(), lw->q.a, lw->q.b, s, T, D, lora->cfg.rank,
                             xa_scratch);
            nn::lora_forward(A.k.data(), A.ln1.data(), lw->k.a, lw->k.b, s, T, D, lora->cfg.rank,
                             xa_scratch);
            nn::lora_forward(A.v.data(), A.ln1.data(), lw->v.a, lw->v.b, s, T, D, lora->cfg.rank,
                             xa_scratch);
        }

        for (int h = 0; h < H; ++h) {
            Real* probs = A.att.data() + static_cast<size_t>(h) * T * T;
            const Real* qh = A.q.data() + static_cast<size_t>(h) * hs;
            const Real* kh = A.k.data() + static_cast<size_t>(h) * hs;
            const Real* vh = A.v.data() + static_cast<size_t>(h) * hs;
            gemm(false, true, T, T, hs, att_scale, qh, D, kh, D, Real(0), probs, T);
            for (int t = 0; t < T; ++t) {
                Real* row = probs + static_cast<size_t>(t) * T;
                Real mx = row[0];
                for (int u = 1; u <= t; ++u) mx = std::max(mx, row[u]);
                Real denom = 0;
                for (int u = 0; u <= t; ++u) {
                    row[u] = std::exp(row[u] - mx);
                    denom += row[u];
                }
                for (int u = 0; u <= t; ++u) row[u] /= denom;
                for (int u = t + 1; u < T; ++u) row[u] = 0;
            }
            gemm(false, false, T, hs, T, Real(1), probs, T, vh, D, Real(0),
                 A.atty.data() + static_cast<size_t>(h) * hs, D);
        }

        nn::linear_forward(A.attproj.data(), A.atty.data(), W.wo, W.bo, T, D, D);
        if (lw)
            nn::lora_forward(A.attproj.data(), A.atty.data(), lw->o.a, lw->o.b, lora->scaling(), T,
                             D, lora->cfg.rank, xa_scratch);
        for (size_t i = 0; i < static_cast<size_t>(T) * D; ++i)
            A.res1[i] = x[i] + A.attproj[i];

        nn::layernorm_forward(A.ln2.data(), A.ln2_mean.data(), A.ln2_rstd.data(), A.res1.data(),
                              W.ln2_g, W.ln2_b, T, D);
        nn::linear_forward(A.fc.data(), A.ln2.data(), W.w_fc, W.b_fc, T, D, F);
        for (size_t i = 0; i < static_cast<size_t>(T) * F; ++i) A.fc_act[i] = nn::gelu(A.fc[i]);
        nn::linear_forward(A.mlpproj.data(), A.fc_act.data(), W.w_pr, W.b_pr, T, F, D);
        for (size_t i = 0; i < static_cast<size_t>(T) * D; ++i)
            A.res2[i] = A.res1[i] + A.mlpproj[i];

        x = A.res2.data();
    }

    nn::layernorm_forward(acts.lnf.data(), acts.lnf_mean.data(), acts.lnf_rstd.data(), x, m.p.lnf_g,
                          m.p.lnf_b, T, D);
    gemm(false, true, T, V, D, Real(1), acts.lnf.data(), D, m.p.wte, D, Real(0),
         acts.logits.data(), V);
}

// --- loss -----------------------------------------------------------------------

struct WeightedLossConfig {
    double w_initial = 3.0;
    int64_t total_steps = 1;
    bool weight_delimiters = true;

    void validate() const {
        expect(w_initial >= 1.0, Errc::config_parse, "w_initial must be >= 1");
        expect(total_steps >= 1, Errc::config_parse, "total_steps must be >= 1");
    }
};

// linear decay from w_initial at t=0 to exactly 1 at t=total_steps
inline double chain_weight(int64_t t, const WeightedLossConfig& cfg) {
    cfg.validate();
    expect(t >= 0 && t <= cfg.total_steps, Errc::step_out_of_range,
           "schedule step " + std::to_string(t) + " outside [0, " +
               std::to_string(cfg.total_steps) + "]");
    return cfg.w_initial -
           (cfg.w_initial - 1.0) * (static_cast<double>(t) / static_cast<double>(cfg.total_steps));
}

template <class Real> struct LossBreakdown {
    Real total = 0;    // the optimized scalar
    Real ce_plain = 0; // sum of CE over non-chain tokens
    Real ce_chain = 0; // sum of CE over chain tokens
    int64_t n_tokens = 0;
    Real weight_used = 1;
};

constexpr int kIgnoreTarget = -1;

// targets[i] == kIgnoreTarget marks prompt/padding positions that carry no loss
template <class Real>
inline LossBreakdown<Real> weighted_ce_loss(const Real* logits, int T, int V,
                                            const std::vector<int>& targets,
                                            const std::vector<uint8_t>& chain_mask, Real w,
                                            bool weight_delimiters = true) {
    expect(static_cast<int>(targets.size()) == T && static_cast<int>(chain_mask.size()) == T,
           Errc::length_mismatch, "targets/chain_mask must match logit rows");
    expect(w >= Real(0), Errc::config_parse, "chain weight must be non-negative");
    LossBreakdown<Real> out;
    out.weight_used = w;
    Real acc = 0;
    for (int t = 0; t < T; ++t) {
        int tgt = targets[static_cast<size_t>(t)];
        if (tgt == kIgnoreTarget) continue;
        expect(tgt >= 0 && tgt < V, Errc::out_of_vocab, "target id outside vocab");
        const Real* row = logits + static_cast<size_t>(t) * V;
        Real mx = row[0];
        for (int j = 1; j < V; ++j) mx = std::max(mx, row[j]);
        Real denom = 0;
        for (int j = 0; j < V; ++j) denom += std::exp(row[j] - mx);
        Real ce = std::log(denom) + mx - row[tgt];
        bool chain = chain_mask[static_cast<size_t>(t)] != 0;
        if (chain && !weight_delimiters && (tgt == kChainOpenId || tgt == kChainCloseId))
            chain = false;
        if (chain) out.ce_chain += ce;
        else out.ce_plain += ce;
        // single token-order accumulation so w = 1 reproduces the plain mean
        // cross entropy bit for bit
        acc += (chain ? w : Real(1)) * ce;
        ++out.n_tokens;
    }
    expect(out.n_tokens > 0, Errc::empty_group, "no loss-bearing tokens in batch");
    out.total = acc / static_cast<Real>(out.n_tokens);
    expect(std::isfinite(static_cast<double>(out.total)), Errc::non_finite_loss,
           "loss is not finite");
    return out;
}

// dlogits = d(total)/d(logits), scaled by grad_scale (for batch averaging)
template <class Real>
inline void weighted_ce_backward(const Real* logits, int T, int V, const std::vector<int>& targets,
                                 const std::vector<uint8_t>& chain_mask, Real w, Real* dlogits,
                                 bool weight_delimiters = true, Real grad_scale = Real(1)) {
    expect(static_cast<int>(targets.size()) == T && static_cast<int>(chain_mask.size()) == T,
           Errc::length_mismatch, "targets/chain_mask must match logit rows");
    int64_t n = 0;
    for (int t = 0; t < T; ++t)
        if (targets[static_cast<size_t>(t)] != kIgnoreTarget) ++n;
    expect(n > 0, Errc::empty_group, "no loss-bearing tokens in batch");
    for (int t = 0; t < T; ++t) {
        int tgt = targets[static_cast<size_t>(t)];
        Real* drow = dlogits + static_cast<size_t>(t) * V;
        if (tgt == kIgnoreTarget) {
            std::fill(drow, drow + V, Real(0));
            continue;
        }
        bool chain = chain_mask[static_cast<size_t>(t)] != 0;
        if (chain && !weight_delimiters && (tgt == kChainOpenId || tgt == kChainCloseId))
            chain = false;
        Real wt = (chain ? w : Real(1)) * grad_scale / static_cast<Real>(n);
        const Real* row = logits + static_cast<size_t>(t) * V;
        Real mx = row[0];
        for (int j = 1; j < V; ++j) mx = std::max(mx, row[j]);
        Real denom = 0;
        for (int j = 0; j < V; ++j) denom += std::exp(row[j] - mx);
        for (int j = 0; j < V; ++j) drow[j] = wt * (std::exp(row[j] - mx) / denom);
        drow[tgt] -= wt;
    }
}

// --- backward pass ---------------------------------------------------------------

template <class Real> struct BackwardScratch {
    std::vector<Real> dlogits, dx, dtmp, datty, dq, dk, dv, dprobs, dfc, dfc_act;

    void resize(const ModelConfig& c, int T) {
        size_t T_ = static_cast<size_t>(T), D = static_cast<size_t>(c.d_model),
               F = static_cast<size_t>(c.d_ff);
        dlogits.assign(T_ * static_cast<size_t>(c.vocab_size), Real(0));
        for (auto* v : {&dx, &dtmp, &datty, &dq, &dk, &dv}) v->assign(T_ * D, Real(0));
        dprobs.assign(T_ * T_, Real(0));
        dfc.assign(T_ * F, Real(0));
        dfc_act.assign(T_ * F, Real(0));
    }
};

// accumulates parameter gradients into m.grads (and adapter grads when given);
// scratch.dlogits must already hold d(loss)/d(logits)
template <class Real>
inline void backward(Model<Real>& m, const std::vector<int>& ids, const Activations<Real>& acts,
                     BackwardScratch<Real>& s, LoraAdapters<Real>* lora = nullptr) {
    const ModelConfig& c = m.cfg;
    int T = acts.T, D = c.d_model, F = c.d_ff, H = c.n_heads, hs = c.head_dim(), V = c.vocab_size;
    Real att_scale = Real(1) / std::sqrt(static_cast<Real>(hs));

    std::vector<Real> xa_scratch, dxa_scratch;

    // tied head: logits = lnf @ wte^T
    std::fill(s.dtmp.begin(), s.dtmp.end(), Real(0)); // dtmp = d lnf_out
    gemm(false, false, T, D, V, Real(1), s.dlogits.data(), V, m.p.wte, D, Real(0), s.dtmp.data(),
         D);
    gemm(true, false, V, D, T, Real(1), s.dlogits.data(), V, acts.lnf.data(), D, Real(1), m.g.wte,
         D);

    const Real* last_x =
        c.n_layers > 0 ? acts.layer[static_cast<size_t>(c.n_layers - 1)].res2.data()
                       : acts.encoded.data();
    std::fill(s.dx.begin(), s.dx.end(), Real(0));
    nn::layernorm_backward(s.dx.data(), m.g.lnf_g, m.g.lnf_b, s.dtmp.data(), last_x,
                           acts.lnf_mean.data(), acts.lnf_rstd.data(), m.p.lnf_g, T, D);

    for (int l = c.n_layers - 1; l >= 0; --l) {
        const auto& A = acts.layer[static_cast<size_t>(l)];
        const auto& W = m.p.layer[static_cast<size_t>(l)];
        auto& G = m.g.layer[static_cast<size_t>(l)];
        const typename LoraAdapters<Real>::Layer* lw =
            lora ? &lora->p[static_cast<size_t>(l)] : nullptr;
        typename LoraAdapters<Real>::Layer* lg = lora ? &lora->g[static_cast<size_t>(l)] : nullptr;
        const Real* input = l > 0 ? acts.layer[static_cast<size_t>(l - 1)].res2.data()
                                  : acts.encoded.data();

        // s.dx = d res2; residual: d mlpproj = s.dx, d res1 starts at s.dx
        // MLP branch
        std::fill(s.dfc_act.begin(), s.dfc_act.end(), Real(0));
        nn::linear_backward(s.dfc_act.data(), G.w_pr, G.b_pr, s.dx.data(), A.fc_act.data(), W.w_pr,
                            T, F, D);
        for (size_t i = 0; i < static_cast<size_t>(T) * F; ++i)
            s.dfc[i] = s.dfc_act[i] * nn::gelu_grad(A.fc[i]);
        std::fill(s.dtmp.begin(), s.dtmp.end(), Real(0)); // d ln2_out
        nn::linear_backward(s.dtmp.data(), G.w_fc, G.b_fc, s.dfc.data(), A.ln2.data(), W.w_fc, T,
                            D, F);
        // layernorm adds the MLP path into d res1 (already holding the residual path)
        nn::layernorm_backward(s.dx.data(), G.ln2_g, G.ln2_b, s.dtmp.data(), A.res1.data(),
                               A.ln2_mean.data(), A.ln2_rstd.data(), W.ln2_g, T, D);

        // attention branch: s.dx = d res1; d attproj = s.dx, d input starts at s.dx
        std::fill(s.datty.begin(), s.datty.end(), Real(0));
        nn::linear_backward(s.datty.data(), G.wo, G.bo, s.dx.data(), A.atty.data(), W.wo, T, D, D);
        if (lw)
            nn::lora_backward(s.datty.data(), lg->o.a, lg->o.b, s.dx.data(), A.atty.data(),
                              lw->o.a, lw->o.b, lora->scaling(), T, D, lora->cfg.rank, xa_scratch,
                              dxa_scratch);

        for (int h = 0; h < H; ++h) {
            const Real* probs = A.att.data() + static_cast<size_t>(h) * T * T;
            const Real* qh = A.q.data() + static_cast<size_t>(h) * hs;
            const Real* kh = A.k.data() + static_cast<size_t>(h) * hs;
            const Real* vh = A.v.data() + static_cast<size_t>(h) * hs;
            Real* dyh = s.datty.data() + static_cast<size_t>(h) * hs;
            // d probs, d v
            gemm(false, true, T, T, hs, Real(1), dyh, D, vh, D, Real(0), s.dprobs.data(), T);
            gemm(true, false, T, hs, T, Real(1), probs, T, dyh, D, Real(0),
                 s.dv.data() + static_cast<size_t>(h) * hs, D);
            // softmax backward, in place, causal
            for (int t = 0; t < T; ++t) {
                Real* dp = s.dprobs.data() + static_cast<size_t>(t) * T;
                const Real* pr = probs + static_cast<size_t>(t) * T;
                Real dot = 0;
                for (int u = 0; u <= t; ++u) dot += dp[u] * pr[u];
                for (int u = 0; u <= t; ++u) dp[u] = pr[u] * (dp[u] - dot);
                for (int u = t + 1; u < T; ++u) dp[u] = 0;
            }
            gemm(false, false, T, hs, T, att_scale, s.dprobs.data(), T, kh, D, Real(0),
                 s.dq.data() + static_cast<size_t>(h) * hs, D);
            gemm(true, false, T, hs, T, att_scale, s.dprobs.data(), T, qh, D, Real(0),
                 s.dk.data() + static_cast<size_t>(h) * hs, D);
        }

        std::fill(s.dtmp.begin(), s.dtmp.end(), Real(0)); // d ln1_out
        nn::linear_backward(s.dtmp.data(), G.wq, G.bq, s.dq.data(), A.ln1.data(), W.wq, T, D, D);
        nn::linear_backward(s.dtmp.data(), G.wk, G.bk, s.dk.data(), A.ln1.data(), W.wk, T, D, D);
        nn::linear_backward(s.dtmp.data(), G.wv, G.bv, s.dv.data(), A.ln1.data(), W.wv, T, D, D);
        if (lw) {
            Real sc = lora->scaling();
            nn::lora_backward(s.dtmp.data(), lg->q.a, lg->q.b, s.dq.data(), A.ln1.data(), lw->q.a,
                              lw->q.b, sc, T, D, lora->cfg.rank, xa_scratch, dxa_scratch);
            nn::lora_backward(s.dtmp.data(), lg->k.a, lg->k.b, s.dk.data(), A.ln1.data(), lw->k.a,
                              lw->k.b, sc, T, D, lora->cfg.rank, xa_scratch, dxa_scratch);
            nn::lora_backward(s.dtmp.data(), lg->v.a, lg->v.b, s.dv.data(), A.ln1.data(), lw->v.a,
                              lw->v.b, sc, T, D, lora->cfg.rank, xa_scratch, dxa_scratch);
        }
        // layernorm adds the attention path into d input (s.dx already holds
        // the residual path)
        nn::layernorm_backward(s.dx.data(), G.ln1_g, G.ln1_b, s.dtmp.data(), input,
                               A.ln1_mean.data(), A.ln1_rstd.data(), W.ln1_g, T, D);
    }

    // embeddings
    for (int t = 0; t < T; ++t) {
        const Real* dxr = s.dx.data() + static_cast<size_t>(t) * D;
        Real* dwte_row = m.g.wte + static_cast<size_t>(ids[static_cast<size_t>(t)]) * D;
        Real* dwpe_row = m.g.wpe + static_cast<size_t>(t) * D;
        for (int i = 0; i < D; ++i) {
            dwte_row[i] += dxr[i];
            dwpe_row[i] += dxr[i];
        }
    }
}

// --- optimizer -------------------------------------------------------------------

struct OptimConfig {
    double lr_max = 3e-4;
    double lr_min = 3e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double grad_clip = 1.0;
};

// half-cosine from lr_max at t=0 to lr_min at t=total_steps
inline double cosine_lr(int64_t t, int64_t total_steps, const OptimConfig& oc) {
    expect(total_steps >= 1, Errc::config_parse, "total_steps must be >= 1");
    expect(t >= 0 && t <= total_steps, Errc::step_out_of_range, "lr step outside schedule");
    double frac = static_cast<double>(t) / static_cast<double>(total_steps);
    return oc.lr_min + 0.5 * (oc.lr_max - oc.lr_min) * (1.0 + std::cos(frac * 3.14159265358979323846));
}

template <class Real> inline Real grad_norm(const std::vector<Real>& g) {
    double acc = 0;
    for (Real v : g) acc += static_cast<double>(v) * static_cast<double>(v);
    return static_cast<Real>(std::sqrt(acc));
}

// scales gradients so their global norm is at most clip; returns the pre-clip norm
template <class Real> inline Real clip_gradients(Real* g, size_t n, double clip) {
    double acc = 0;
    for (size_t i = 0; i < n; ++i) acc += static_cast<double>(g[i]) * static_cast<double>(g[i]);
    Real norm = static_cast<Real>(std::sqrt(acc));
    expect(std::isfinite(static_cast<double>(norm)), Errc::non_finite_loss,
           "gradient norm is not finite");
    if (static_cast<double>(norm) > clip && clip > 0) {
        Real scale = static_cast<Real>(clip / static_cast<double>(norm));
        for (size_t i = 0; i < n; ++i) g[i] *= scale;
    }
    return norm;
}

template <class Real> inline Real clip_gradients(std::vector<Real>& g, double clip) {
    return clip_gradients(g.data(), g.size(), clip);
}

// one Adam update over a raw range; t is the 1-based update count for bias correction
template <class Real>
inline void adam_step(Real* params, const Real* grads, Real* m, Real* v, size_t n, int64_t t,
                      double lr, const OptimConfig& oc) {
    expect(t >= 1, Errc::step_out_of_range, "adam step count is 1-based");
    double bc1 = 1.0 - std::pow(oc.beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(oc.beta2, static_cast<double>(t));
    for (size_t i = 0; i < n; ++i) {
        double gi = static_cast<double>(grads[i]);
        double mi = oc.beta1 * static_cast<double>(m[i]) + (1.0 - oc.beta1) * gi;
        double vi = oc.beta2 * static_cast<double>(v[i]) + (1.0 - oc.beta2) * gi * gi;
        m[i] = static_cast<Real>(mi);
        v[i] = static_cast<Real>(vi);
        double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + oc.eps);
        params[i] = static_cast<Real>(static_cast<double>(params[i]) - update);
    }
}

template <class Real>
inline void adam_step(std::vector<Real>& params, const std::vector<Real>& grads,
                      std::vector<Real>& m, std::vector<Real>& v, int64_t t, double lr,
                      const OptimConfig& oc) {
    expect(params.size() == grads.size() && params.size() == m.size() && params.size() == v.size(),
           Errc::length_mismatch, "optimizer buffers disagree");
    adam_step(params.data(), grads.data(), m.data(), v.data(), params.size(), t, lr, oc);
}

// --- convenience: one sequence forward+loss+backward ------------------------------

template <class Real> struct TrainContext {
    Activations<Real> acts;
    BackwardScratch<Real> scratch;
};

template <class Real>
inline LossBreakdown<Real> loss_and_grad(Model<Real>& m, const std::vector<int>& ids,
                                         const std::vector<int>& targets,
                                         const std::vector<uint8_t>& chain_mask, Real w,
                                         TrainContext<Real>& ctx,
                                         LoraAdapters<Real>* lora = nullptr,
                                         bool weight_delimiters = true,
                                         Real grad_scale = Real(1)) {
    forward(m, ids, ctx.acts, lora);
    int T = ctx.acts.T, V = m.cfg.vocab_size;
    auto lb = weighted_ce_loss(ctx.acts.logits.data(), T, V, targets, chain_mask, w,
                               weight_delimiters);
    ctx.scratch.resize(m.cfg, T);
    weighted_ce_backward(ctx.acts.logits.data(), T, V, targets, chain_mask, w,
                         ctx.scratch.dlogits.data(), weight_delimiters, grad_scale);
    backward(m, ids, ctx.acts, ctx.scratch, lora);
    return lb;
}

// merge adapters into the base weights: W += B·A·(alpha/r)
template <class Real>
inline void lora_merge(Model<Real>& m, const LoraAdapters<Real>& lora) {
    expect(lora.d_model == m.cfg.d_model &&
               static_cast<int>(lora.p.size()) == m.cfg.n_layers,
           Errc::shape_mismatch, "adapter shapes do not match the model");
    int D = m.cfg.d_model, r = lora.cfg.rank;
    Real s = lora.scaling();
    for (int l = 0; l < m.cfg.n_layers; ++l) {
        auto& W = m.p.layer[static_cast<size_t>(l)];
        const auto& L = lora.p[static_cast<size_t>(l)];
        Real* targets[4] = {W.wq, W.wk, W.wv, W.wo};
        const typename LoraAdapters<Real>::Target* srcs[4] = {&L.q, &L.k, &L.v, &L.o};
        for (int i = 0; i < 4; ++i)
            gemm(false, false, D, D, r, s, srcs[i]->b, r, srcs[i]->a, D, Real(1), targets[i], D);
    }
}

} // namespace sst
