#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "icth/cascade.hpp"
#include "icth/model.hpp"
#include "icth/tape.hpp"

namespace icth::nn {

using Embedding = std::vector<double>;

// Trigonometric temporal encoding (1-indexed components):
//   odd  i: cos(t / 1000^((i-1)/d_m))
//   even i: sin(t / 1000^(i/d_m))
inline std::vector<double> encode_time(double t, int d_m) {
    if (!(t >= 0.0)) throw std::invalid_argument("encode_time: t must be >= 0");
    if (d_m < 2 || d_m % 2 != 0) throw std::invalid_argument("encode_time: d_m must be even");
    std::vector<double> x(static_cast<std::size_t>(d_m));
    for (int i = 1; i <= d_m; ++i) {
        double expo = (i % 2 == 1) ? static_cast<double>(i - 1) / d_m : static_cast<double>(i) / d_m;
        double arg = t / std::pow(1000.0, expo);
        x[static_cast<std::size_t>(i - 1)] = (i % 2 == 1) ? std::cos(arg) : std::sin(arg);
    }
    return x;
}

// Tape ids of every backbone tensor, in for_each_tensor order.
struct BoundBackbone {
    std::vector<int> ids;
    std::vector<std::string> names;
    const ICTHWeights* weights = nullptr;

    int id_of(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return ids[i];
        throw std::logic_error("unbound tensor: " + name);
    }
};

inline BoundBackbone bind_backbone(Tape& tape, const ICTHWeights& w) {
    BoundBackbone b;
    b.weights = &w;
    for_each_tensor(const_cast<ICTHWeights&>(w), [&](const std::string& name, Mat& m) {
        b.names.push_back(name);
        b.ids.push_back(tape.leaf(m));
    });
    return b;
}

// Reads accumulated leaf gradients back into a gradient buffer.
inline void collect_gradients(Tape& tape, const BoundBackbone& b, ICTHWeights& grads) {
    std::size_t i = 0;
    for_each_tensor(grads, [&](const std::string&, Mat& m) {
        int id = b.ids[i++];
        if (tape.has_grad(id)) {
            const Mat& g = tape.grad(id);
            for (std::size_t e = 0; e < m.size(); ++e) m.a[e] += g.a[e];
        }
    });
}

namespace fwd_detail {

struct LayerIds {
    std::vector<int> wq, wk, wv;
    int wo, e, f, ff_w1, ff_b1, ff_w2, ff_b2;
};

inline LayerIds layer_ids(const BoundBackbone& b, int layer) {
    LayerIds ids;
    const std::string p = "layers." + std::to_string(layer) + ".";
    const auto& lw = b.weights->layers[static_cast<std::size_t>(layer)];
    for (std::size_t h = 0; h < lw.wq.size(); ++h) ids.wq.push_back(b.id_of(p + "wq." + std::to_string(h)));
    for (std::size_t h = 0; h < lw.wk.size(); ++h) ids.wk.push_back(b.id_of(p + "wk." + std::to_string(h)));
    for (std::size_t h = 0; h < lw.wv.size(); ++h) ids.wv.push_back(b.id_of(p + "wv." + std::to_string(h)));
    ids.wo = b.id_of(p + "wo");
    ids.e = b.id_of(p + "e");
    ids.f = b.id_of(p + "f");
    ids.ff_w1 = b.id_of(p + "ff_w1");
    ids.ff_b1 = b.id_of(p + "ff_b1");
    ids.ff_w2 = b.id_of(p + "ff_w2");
    ids.ff_b2 = b.id_of(p + "ff_b2");
    return ids;
}

// Slot r is attendable from position j once some position i <= j carries a
// structurally nonzero projection weight E[r, i]; with identity projections
// this is exactly the lower-triangular causal mask.
inline std::vector<std::uint8_t> visibility_mask(const Mat& e, int n, int k) {
    std::vector<std::uint8_t> vis(static_cast<std::size_t>(n) * k, 0);
    for (int r = 0; r < k; ++r) {
        bool seen = false;
        for (int j = 0; j < n; ++j) {
            seen = seen || e.at(r, j) != 0.0;
            vis[static_cast<std::size_t>(j) * k + r] = seen ? 1 : 0;
        }
    }
    return vis;
}

// sigmoid(tanh(log_input * ctx_w + ctx_b) * map_w + map_b), a 1 x d_m mask row
inline int mask_row(Tape& tape, const BoundBackbone& b, const std::string& prefix, double log_input) {
    int s = tape.constant(Mat(1, 1, log_input));
    int ctx = tape.tanh_(tape.add(tape.matmul(s, b.id_of(prefix + ".ctx_w")), b.id_of(prefix + ".ctx_b")));
    return tape.sigmoid(tape.add(tape.matmul(ctx, b.id_of(prefix + ".map_w")), b.id_of(prefix + ".map_b")));
}

} // namespace fwd_detail

// Temporal encodings, masked for censored intervals: X_i = X'_i .* m^d .* m^c.
// Point events keep the all-ones mask.
inline int build_input(Tape& tape, const BoundBackbone& b, const ICTHConfig& cfg,
                       const data::Cascade& cascade) {
    const int n = static_cast<int>(cascade.records.size());
    Mat enc(n, cfg.d_m, 0.0);
    for (int j = 0; j < n; ++j) {
        auto row = encode_time(cascade.records[static_cast<std::size_t>(j)].time, cfg.d_m);
        for (int i = 0; i < cfg.d_m; ++i) enc.at(j, i) = row[static_cast<std::size_t>(i)];
    }

    std::vector<std::pair<int, int>> mask_rows;
    for (int j = 0; j < n; ++j) {
        const auto& r = cascade.records[static_cast<std::size_t>(j)];
        if (!r.is_interval()) continue;
        if (!(r.duration > 0.0)) throw std::invalid_argument("encode_record: non-positive duration");
        int md = fwd_detail::mask_row(tape, b, "dur", std::log(r.duration));
        int mc = fwd_detail::mask_row(tape, b, "cnt", std::log1p(static_cast<double>(r.count)));
        mask_rows.emplace_back(j, tape.mul(md, mc));
    }
    int mask = tape.rows_overlay(Mat(n, cfg.d_m, 1.0), mask_rows);
    return tape.mul(tape.constant(std::move(enc)), mask);
}

struct ForwardNodes {
    int hidden = -1;  // n x d_m
    int preact = -1;  // n x 1, w^T h(t_j)
    int xi = -1;      // n x 1, softplus_beta(preact)
    std::vector<double> anchors;
    std::vector<double> seg_ends;  // anchor of the next record; horizon for the last
};

// Causal Linformer transformer stack per the standard block layout:
// post-norm residual blocks around multi-head attention and the ReLU
// feed-forward, intensity head on top.
inline ForwardNodes forward_cascade(Tape& tape, const BoundBackbone& b, const ICTHConfig& cfg,
                                    const data::Cascade& cascade) {
    cfg.check();
    const int n = static_cast<int>(cascade.records.size());
    if (n == 0) throw std::invalid_argument("forward: empty cascade");
    if (n > cfg.max_seq_len)
        throw std::invalid_argument("forward: sequence of length " + std::to_string(n) +
                                    " exceeds max_seq_len " + std::to_string(cfg.max_seq_len) +
                                    "; chunk the cascade into shorter pieces");

    int x = build_input(tape, b, cfg, cascade);
    const int kk = cfg.k();
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(cfg.d_k));

    for (int layer = 0; layer < cfg.n_layers; ++layer) {
        auto ids = fwd_detail::layer_ids(b, layer);
        auto vis = fwd_detail::visibility_mask(tape.val(ids.e), n, kk);

        std::vector<int> head_outs;
        for (int h = 0; h < cfg.n_heads; ++h) {
            int q = tape.matmul(x, ids.wq[static_cast<std::size_t>(h)]);
            int kmat = tape.matmul(x, ids.wk[static_cast<std::size_t>(h)]);
            int vmat = tape.matmul(x, ids.wv[static_cast<std::size_t>(h)]);

            // Prefix-truncated projections keep attention causal: slot r at
            // position j sees sum_{i<=j} E[r,i] K[i,:].
            std::vector<int> score_cols, value_cums;
            score_cols.reserve(static_cast<std::size_t>(kk));
            value_cums.reserve(static_cast<std::size_t>(kk));
            for (int r = 0; r < kk; ++r) {
                int e_row = tape.row_of(ids.e, r, n);
                int k_cum = tape.cumsum_rows(tape.scale_rows(kmat, e_row));
                score_cols.push_back(tape.scale(tape.rowwise_dot(q, k_cum), inv_sqrt_dk));
                int f_row = tape.row_of(ids.f, r, n);
                value_cums.push_back(tape.cumsum_rows(tape.scale_rows(vmat, f_row)));
            }
            int probs = tape.masked_softmax_rows(tape.hstack(score_cols), vis);
            std::vector<int> terms;
            terms.reserve(static_cast<std::size_t>(kk));
            for (int r = 0; r < kk; ++r)
                terms.push_back(tape.scale_rows(value_cums[static_cast<std::size_t>(r)], tape.col_of(probs, r)));
            head_outs.push_back(tape.add_n(terms));
        }

        int s = tape.matmul(cfg.n_heads > 1 ? tape.hstack(head_outs) : head_outs.front(), ids.wo);
        int a = tape.layer_norm_rows(tape.add(x, s));
        int ff = tape.add_rowvec(
            tape.matmul(tape.relu(tape.add_rowvec(tape.matmul(a, ids.ff_w1), ids.ff_b1)), ids.ff_w2),
            ids.ff_b2);
        x = tape.layer_norm_rows(tape.add(a, ff));
    }

    ForwardNodes out;
    out.hidden = x;
    out.preact = tape.matmul(x, b.id_of("head_w"));
    out.xi = tape.softplus_beta(out.preact, cfg.beta);
    out.anchors.reserve(static_cast<std::size_t>(n));
    for (const auto& r : cascade.records) out.anchors.push_back(r.time);
    out.seg_ends.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
        out.seg_ends[static_cast<std::size_t>(j)] =
            (j + 1 < n) ? out.anchors[static_cast<std::size_t>(j + 1)] : cascade.horizon;
    return out;
}

// Per-record compensator Xi(t_j, t_{j+1}) as an n x 1 node: trapezoid with
// integ_points sub-intervals of softplus_beta(preact_j + alpha * offset).
inline int compensator_per_record(Tape& tape, const BoundBackbone& b, const ICTHConfig& cfg,
                                  const ForwardNodes& f) {
    const int n = static_cast<int>(f.anchors.size());
    const int m = cfg.integ_points;
    Mat offsets(n, m + 1, 0.0);
    Mat weights(n, m + 1, 0.0);
    for (int j = 0; j < n; ++j) {
        double len = std::max(0.0, f.seg_ends[static_cast<std::size_t>(j)] - f.anchors[static_cast<std::size_t>(j)]);
        for (int q = 0; q <= m; ++q) {
            offsets.at(j, q) = len * q / m;
            weights.at(j, q) = (len / m) * ((q == 0 || q == m) ? 0.5 : 1.0);
        }
    }
    int trend = tape.const_times_scalar(std::move(offsets), b.id_of("alpha"));
    int vals = tape.softplus_beta(tape.add_colvec(trend, f.preact), cfg.beta);
    return tape.rowwise_weighted_sum(vals, std::move(weights));
}

// IC-TH log-likelihood of a canonical cascade:
//   sum_{censored} c_i log Xi_i + sum_{events} log xi(t_i) - sum_i Xi_i
inline int icth_loglik_node(Tape& tape, const BoundBackbone& b, const ICTHConfig& cfg,
                            const data::Cascade& cascade, const ForwardNodes& f) {
    const int n = static_cast<int>(cascade.records.size());
    int xi_int = compensator_per_record(tape, b, cfg, f);

    Mat event_sel(n, 1, 0.0), count_w(n, 1, 0.0), ones(n, 1, 1.0);
    for (int j = 0; j < n; ++j) {
        const auto& r = cascade.records[static_cast<std::size_t>(j)];
        if (r.is_event()) event_sel.at(j, 0) = 1.0;
        else count_w.at(j, 0) = static_cast<double>(r.count);
    }

    int ev_term = tape.sum_weighted(tape.log_(tape.clamp_min(f.xi, 1e-300)), std::move(event_sel));
    int ct_term = tape.sum_weighted(tape.log_(tape.clamp_min(xi_int, 1e-12)), std::move(count_w));
    int comp = tape.sum_weighted(xi_int, std::move(ones));
    return tape.sub(tape.add(ev_term, ct_term), comp);
}

inline void require_canonical(const data::Cascade& cascade, const char* who) {
    auto v = data::validate(cascade);
    if (!v.empty())
        throw std::invalid_argument(std::string(who) + ": cascade not canonical (" +
                                    data::violation_name(v.front().kind) + ": " + v.front().detail + ")");
}

inline double icth_loglik(const ICTHWeights& w, const ICTHConfig& cfg, const data::Cascade& cascade) {
    require_canonical(cascade, "icth_loglik");
    Tape tape;
    BoundBackbone b = bind_backbone(tape, w);
    ForwardNodes f = forward_cascade(tape, b, cfg, cascade);
    return tape.val(icth_loglik_node(tape, b, cfg, cascade, f)).a[0];
}

// Forward + backward; accumulates d loglik / d weights into `grads`,
// returns the log-likelihood.
inline double icth_loglik_grad(const ICTHWeights& w, const ICTHConfig& cfg, const data::Cascade& cascade,
                               ICTHWeights& grads) {
    require_canonical(cascade, "icth_loglik");
    Tape tape;
    BoundBackbone b = bind_backbone(tape, w);
    ForwardNodes f = forward_cascade(tape, b, cfg, cascade);
    int ll = icth_loglik_node(tape, b, cfg, cascade, f);
    tape.backward(ll);
    collect_gradients(tape, b, grads);
    return tape.val(ll).a[0];
}

// Event-only likelihood assembled by an independent code path (this is the
// Transformer Hawkes baseline IC-TH reduces to when no counts are present):
// sum_j log xi(t_j) - sum_j int_{t_j}^{t_{j+1}} xi.
inline double event_only_loglik(const ICTHWeights& w, const ICTHConfig& cfg, const data::Cascade& cascade) {
    if (!cascade.events_only()) throw std::invalid_argument("event_only_loglik: cascade has intervals");
    Tape tape;
    BoundBackbone b = bind_backbone(tape, w);
    ForwardNodes f = forward_cascade(tape, b, cfg, cascade);
    const Mat& preact = tape.val(f.preact);
    const double alpha = w.alpha.a[0];
    const double beta = cfg.beta;
    auto softplus = [&](double v) {
        double z = v / beta;
        return beta * (z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)));
    };
    double ll = 0.0;
    for (std::size_t j = 0; j < f.anchors.size(); ++j) {
        double p = preact.at(static_cast<int>(j), 0);
        ll += std::log(std::max(softplus(p), 1e-300));
        double len = f.seg_ends[j] - f.anchors[j];
        const int m = cfg.integ_points;
        double integral = 0.0;
        for (int q = 0; q <= m; ++q) {
            double weight = (q == 0 || q == m) ? 0.5 : 1.0;
            integral += weight * softplus(p + alpha * (len * q / m));
        }
        ll -= integral * len / m;
    }
    return ll;
}

// Intensity on the inter-record segment (t_j, t_{j+1}]; continuous in t and
// equal to xi(t_j+) as t -> t_j from above when alpha is finite.
inline double intensity_between(const ICTHWeights& w, const ICTHConfig& cfg, const data::Cascade& cascade,
                                double t) {
    Tape tape;
    BoundBackbone b = bind_backbone(tape, w);
    ForwardNodes f = forward_cascade(tape, b, cfg, cascade);
    if (!(t > f.anchors.front())) throw std::invalid_argument("intensity_between: t before first record");
    std::size_t j = 0;
    for (std::size_t i = 0; i < f.anchors.size(); ++i)
        if (f.anchors[i] < t) j = i;
    double p = tape.val(f.preact).at(static_cast<int>(j), 0) + w.alpha.a[0] * (t - f.anchors[j]);
    double z = p / cfg.beta;
    return cfg.beta * (z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)));
}

// Compensator Xi(a, b) over the per-segment quadrature mesh; computed as the
// difference of the cumulative integral of the piecewise-linear interpolant,
// so adjacent intervals add exactly.
inline double compensator(const ICTHWeights& w, const ICTHConfig& cfg, const data::Cascade& cascade,
                          double a, double bnd) {
    Tape tape;
    BoundBackbone bw = bind_backbone(tape, w);
    ForwardNodes f = forward_cascade(tape, bw, cfg, cascade);
    const double eps = data::tiling_eps(cascade.horizon);
    if (!(a >= f.anchors.front() - eps) || a > bnd || bnd > cascade.horizon + eps)
        throw std::invalid_argument("compensator: interval outside [first record, horizon]");

    const Mat& preact = tape.val(f.preact);
    const double alpha = w.alpha.a[0];
    const double beta = cfg.beta;
    const int m = cfg.integ_points;
    auto softplus = [&](double v) {
        double z = v / beta;
        return beta * (z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)));
    };

    // cumulative integral from the first anchor to x
    auto cum_at = [&](double x) {
        double acc = 0.0;
        for (std::size_t j = 0; j < f.anchors.size(); ++j) {
            double lo = f.anchors[j], hi = f.seg_ends[j];
            if (x <= lo || hi <= lo) {
                if (x <= lo) break;
                continue;
            }
            double p = preact.at(static_cast<int>(j), 0);
            double len = hi - lo;
            double upto = std::min(x, hi);
            double cell = len / m;
            for (int q = 0; q < m; ++q) {
                double c_lo = lo + cell * q;
                double c_hi = c_lo + cell;
                if (upto <= c_lo) break;
                double xa = softplus(p + alpha * (c_lo - lo));
                double xb = softplus(p + alpha * (c_hi - lo));
                if (upto >= c_hi) {
                    acc += 0.5 * cell * (xa + xb);
                } else {
                    double frac = upto - c_lo;
                    double xm = xa + (xb - xa) * (frac / cell);
                    acc += 0.5 * frac * (xa + xm);
                }
            }
            if (x <= hi) break;
        }
        return acc;
    };
    return cum_at(bnd) - cum_at(a);
}

inline int cascade_embedding_node(Tape& tape, const ForwardNodes& f) {
    const Mat& h = tape.val(f.hidden);
    return tape.matmul(tape.constant(Mat(1, h.rows, 1.0 / h.rows)), f.hidden);
}

// Mean of per-record hidden states.
inline Embedding cascade_embedding(const ICTHWeights& w, const ICTHConfig& cfg, const data::Cascade& cascade) {
    if (cascade.records.empty()) throw std::invalid_argument("cascade_embedding: empty cascade");
    Tape tape;
    BoundBackbone b = bind_backbone(tape, w);
    ForwardNodes f = forward_cascade(tape, b, cfg, cascade);
    return tape.val(cascade_embedding_node(tape, f)).a;
}

// Re-runs the forward pass and backpropagates a given d loss / d embedding
// into the weight gradient buffer (checkpointing boundary for training).
inline void cascade_embedding_backprop(const ICTHWeights& w, const ICTHConfig& cfg,
                                       const data::Cascade& cascade, const Embedding& d_embedding,
                                       ICTHWeights& grads) {
    Tape tape;
    BoundBackbone b = bind_backbone(tape, w);
    ForwardNodes f = forward_cascade(tape, b, cfg, cascade);
    int emb = cascade_embedding_node(tape, f);
    Mat seed(1, static_cast<int>(d_embedding.size()));
    seed.a = d_embedding;
    tape.backward_seeded(emb, seed);
    collect_gradients(tape, b, grads);
}

// Mean of cascade embeddings over a group (or any cascade subset).
inline Embedding mean_embedding(const std::vector<Embedding>& embs) {
    if (embs.empty()) throw std::invalid_argument("mean_embedding: empty set");
    Embedding out(embs.front().size(), 0.0);
    for (const auto& e : embs)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += e[i];
    for (double& v : out) v /= static_cast<double>(embs.size());
    return out;
}

inline Embedding group_embedding(const ICTHWeights& w, const ICTHConfig& cfg, const data::CascadeGroup& g) {
    if (g.cascades.empty()) throw std::invalid_argument("group_embedding: empty group");
    std::vector<Embedding> embs;
    embs.reserve(g.cascades.size());
    for (const auto& c : g.cascades) embs.push_back(cascade_embedding(w, cfg, c));
    return mean_embedding(embs);
}

// Values of encode_record for tests and tooling: the masked input row X_i.
inline std::vector<double> encode_record(const data::CascadeRecord& rec, const ICTHWeights& w,
                                         const ICTHConfig& cfg) {
    Tape tape;
    BoundBackbone b = bind_backbone(tape, w);
    data::Cascade c;
    c.horizon = std::max(rec.end(), 1.0);
    c.records.push_back(rec);
    return tape.val(build_input(tape, b, cfg, c)).a;
}

} // namespace icth::nn
