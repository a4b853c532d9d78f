#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "icth/cascade.hpp"
#include "icth/forward.hpp"
#include "icth/model.hpp"
#include "icth/tape.hpp"
#include "icth/util.hpp"

namespace icth::train {

using nn::Embedding;
using nn::Mat;

// ---- optimizer --------------------------------------------------------------

struct ParamRef {
    std::string name;
    Mat* param;
    Mat* grad;
};

template <typename W>
void collect_params(W& weights, W& grads, const std::string& prefix, std::vector<ParamRef>& out) {
    std::vector<Mat*> ps, gs;
    std::vector<std::string> names;
    for_each_tensor(weights, [&](const std::string& n, Mat& m) {
        names.push_back(prefix + n);
        ps.push_back(&m);
    });
    for_each_tensor(grads, [&](const std::string&, Mat& m) { gs.push_back(&m); });
    for (std::size_t i = 0; i < ps.size(); ++i) out.push_back({names[i], ps[i], gs[i]});
}

struct AdamState {
    std::map<std::string, Mat> m1, m2;
    long long t = 0;
};

// Descent step with global-norm gradient clipping.
inline void adam_step(const std::vector<ParamRef>& params, AdamState& st, double lr, double clip) {
    double sq = 0.0;
    for (const auto& p : params)
        for (double g : p.grad->a) sq += g * g;
    double scale = 1.0;
    double norm = std::sqrt(sq);
    if (clip > 0.0 && norm > clip) scale = clip / norm;

    ++st.t;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
    for (const auto& p : params) {
        Mat& m1 = st.m1.try_emplace(p.name, p.param->rows, p.param->cols, 0.0).first->second;
        Mat& m2 = st.m2.try_emplace(p.name, p.param->rows, p.param->cols, 0.0).first->second;
        for (std::size_t i = 0; i < p.param->size(); ++i) {
            double g = p.grad->a[i] * scale;
            m1.a[i] = b1 * m1.a[i] + (1 - b1) * g;
            m2.a[i] = b2 * m2.a[i] + (1 - b2) * g * g;
            p.param->a[i] -= lr * (m1.a[i] / c1) / (std::sqrt(m2.a[i] / c2) + eps);
        }
    }
}

template <typename W>
void zero_grads(W& grads) {
    for_each_tensor(grads, [](const std::string&, Mat& m) {
        for (double& x : m.a) x = 0.0;
    });
}

// ---- projection head --------------------------------------------------------

// Two fully connected layers with ReLU in between; maps the pooled half
// embedding h (1 x d_m) to z (1 x p) for the contrastive loss.
struct ProjectionHead {
    Mat w1, b1, w2, b2;
};

template <typename Fn>
void for_each_tensor(ProjectionHead& p, Fn&& fn) {
    fn("w1", p.w1);
    fn("b1", p.b1);
    fn("w2", p.w2);
    fn("b2", p.b2);
}

inline ProjectionHead init_projection(int d_m, int out_dim, std::uint64_t seed) {
    std::mt19937_64 rng = make_rng(seed, 0x9807);
    ProjectionHead p;
    p.w1 = nn::detail::xavier(d_m, d_m, rng);
    p.b1 = Mat(1, d_m, 0.0);
    p.w2 = nn::detail::xavier(d_m, out_dim, rng);
    p.b2 = Mat(1, out_dim, 0.0);
    return p;
}

struct BoundProjection {
    int w1, b1, w2, b2;
};

inline BoundProjection bind_projection(nn::Tape& tape, const ProjectionHead& p) {
    return {tape.leaf(p.w1), tape.leaf(p.b1), tape.leaf(p.w2), tape.leaf(p.b2)};
}

inline int project_node(nn::Tape& tape, const BoundProjection& bp, int h) {
    int hidden = tape.relu(tape.add(tape.matmul(h, bp.w1), bp.b1));
    return tape.add(tape.matmul(hidden, bp.w2), bp.b2);
}

// ---- pair construction (positive views from group halves) --------------------

struct GroupPair {
    std::size_t group_index;
    std::vector<std::size_t> half_a, half_b;  // disjoint, union = group, sizes differ by <= 1
};

struct PairingResult {
    std::vector<GroupPair> pairs;
    std::vector<std::string> warnings;  // singleton groups excluded
};

inline PairingResult make_pairs(const std::vector<data::CascadeGroup>& groups, std::uint64_t seed) {
    PairingResult res;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const std::size_t n = groups[gi].cascades.size();
        if (n < 2) {
            res.warnings.push_back("group " + groups[gi].group_id + " has fewer than 2 cascades; excluded");
            continue;
        }
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        std::mt19937_64 rng = make_rng(seed, 0x7a17 + gi);
        std::shuffle(idx.begin(), idx.end(), rng);
        GroupPair p;
        p.group_index = gi;
        const std::size_t a_size = (n + 1) / 2;
        p.half_a.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(a_size));
        p.half_b.assign(idx.begin() + static_cast<std::ptrdiff_t>(a_size), idx.end());
        res.pairs.push_back(std::move(p));
    }
    return res;
}

// ---- NT-Xent ------------------------------------------------------------------

// views come ordered [z_{1,1}, z_{1,2}, z_{2,1}, z_{2,2}, ...]: view 2i and
// 2i+1 are the positive pair. The denominator runs over every other view in
// the batch (positive included, self excluded); loss is the mean over all
// 2N anchors.
inline int ntxent_node(nn::Tape& tape, const std::vector<int>& views, double tau) {
    if (views.size() < 4 || views.size() % 2 != 0)
        throw std::invalid_argument("ntxent: need at least 2 groups (4 views)");
    if (!(tau > 0.0)) throw std::invalid_argument("ntxent: temperature must be > 0");
    const int v = static_cast<int>(views.size());
    for (int i = 0; i < v; ++i) {
        double sq = 0.0;
        for (double x : tape.val(views[static_cast<std::size_t>(i)]).a) sq += x * x;
        if (!(sq > 0.0)) throw std::invalid_argument("ntxent: zero-norm embedding");
    }

    int z = tape.vstack(views);
    int zn = tape.row_l2_normalize(z);
    int sims = tape.scale(tape.matmul_nt(zn, zn), 1.0 / tau);
    Mat diag(v, v, 0.0);
    for (int i = 0; i < v; ++i) diag.at(i, i) = -1e30;  // exclude self-similarity
    int masked = tape.add(sims, tape.constant(std::move(diag)));
    int logp = tape.log_softmax_rows(masked);

    Mat sel(v, v, 0.0);
    for (int i = 0; i < v; ++i) {
        int partner = (i % 2 == 0) ? i + 1 : i - 1;
        sel.at(i, partner) = -1.0 / v;
    }
    return tape.sum_weighted(logp, std::move(sel));
}

inline double ntxent_loss(const std::vector<Embedding>& views, double tau) {
    nn::Tape tape;
    std::vector<int> ids;
    ids.reserve(views.size());
    for (const auto& e : views) ids.push_back(tape.leaf(Mat::row_vector(e)));
    return tape.val(ntxent_node(tape, ids, tau)).a[0];
}

inline double cosine_similarity(const Embedding& a, const Embedding& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (!(na > 0.0) || !(nb > 0.0)) throw std::invalid_argument("cosine: zero-norm embedding");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// ---- contrastive pre-training --------------------------------------------------

struct ContrastiveConfig {
    double temperature = 0.5;
    int batch_groups = 8;   // N groups per NT-Xent batch
    int proj_dim = 0;       // 0 -> d_m / 2
    int epochs = 20;
    double learning_rate = 1e-3;
    double grad_clip = 5.0;
    // Decoupled decay of the backbone toward its initialization (L2-SP).
    // Short cascade groups make instance discrimination noisy; the anchor
    // keeps the encoder in a trust region of the temporal-encoding prior.
    double backbone_anchor_decay = 0.0;
    std::uint64_t seed = 0;
};

struct PretrainResult {
    std::vector<double> loss_curve;  // mean batch loss per epoch
    double initial_loss = 0.0;
    double best_loss = 0.0;
    std::size_t best_epoch = 0;
    std::vector<std::string> warnings;
};

namespace detail {

// dst += src over matching tensor layouts (fixed for_each_tensor order).
template <typename W>
void accumulate_weights(W& dst, const W& src) {
    std::vector<Mat*> d;
    std::vector<const Mat*> s;
    for_each_tensor(dst, [&](const std::string&, Mat& m) { d.push_back(&m); });
    for_each_tensor(const_cast<W&>(src), [&](const std::string&, Mat& m) { s.push_back(&m); });
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t e = 0; e < d[i]->size(); ++e) d[i]->a[e] += s[i]->a[e];
}

// Embeds every listed cascade (parallel), means per half, then runs the
// projection + NT-Xent tape. Gradients flow back through the checkpoint
// boundary: each cascade re-runs forward seeded with dLoss/dEmbedding.

inline double contrastive_batch(nn::ICTHWeights& w, ProjectionHead& proj, const nn::ICTHConfig& cfg,
                                const std::vector<data::CascadeGroup>& groups,
                                const std::vector<GroupPair>& batch, double tau,
                                nn::ICTHWeights* backbone_grads, ProjectionHead* proj_grads) {
    struct HalfRef {
        const std::vector<std::size_t>* idx;
        std::size_t group;
    };
    std::vector<HalfRef> halves;
    for (const auto& p : batch) {
        halves.push_back({&p.half_a, p.group_index});
        halves.push_back({&p.half_b, p.group_index});
    }

    // flat task list over cascades
    struct Task {
        const data::Cascade* cascade;
        std::size_t half;
    };
    std::vector<Task> tasks;
    for (std::size_t h = 0; h < halves.size(); ++h)
        for (std::size_t ci : *halves[h].idx)
            tasks.push_back({&groups[halves[h].group].cascades[ci], h});

    std::vector<Embedding> casc_emb(tasks.size());
    parallel_for(tasks.size(), [&](std::size_t i) {
        casc_emb[i] = nn::cascade_embedding(w, cfg, *tasks[i].cascade);
    });

    std::vector<Embedding> half_emb(halves.size(), Embedding(static_cast<std::size_t>(cfg.d_m), 0.0));
    std::vector<std::size_t> half_count(halves.size(), 0);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        for (std::size_t d = 0; d < half_emb[tasks[i].half].size(); ++d)
            half_emb[tasks[i].half][d] += casc_emb[i][d];
        half_count[tasks[i].half] += 1;
    }
    for (std::size_t h = 0; h < halves.size(); ++h)
        for (double& x : half_emb[h]) x /= static_cast<double>(half_count[h]);

    nn::Tape tape;
    BoundProjection bp = bind_projection(tape, proj);
    std::vector<int> h_leaves, z_nodes;
    for (const auto& he : half_emb) {
        int leaf = tape.leaf(Mat::row_vector(he));
        h_leaves.push_back(leaf);
        z_nodes.push_back(project_node(tape, bp, leaf));
    }
    int loss = ntxent_node(tape, z_nodes, tau);
    double loss_val = tape.val(loss).a[0];
    if (backbone_grads == nullptr) return loss_val;

    tape.backward(loss);
    auto add_grad = [&](Mat& dst, int id) {
        if (!tape.has_grad(id)) return;
        const Mat& g = tape.grad(id);
        for (std::size_t i = 0; i < dst.size(); ++i) dst.a[i] += g.a[i];
    };
    add_grad(proj_grads->w1, bp.w1);
    add_grad(proj_grads->b1, bp.b1);
    add_grad(proj_grads->w2, bp.w2);
    add_grad(proj_grads->b2, bp.b2);

    // per-cascade buffers so the reduction order is fixed regardless of threads
    std::vector<nn::ICTHWeights> buffers(tasks.size(), nn::zeros_like(w));
    parallel_for(tasks.size(), [&](std::size_t i) {
        std::size_t h = tasks[i].half;
        if (!tape.has_grad(h_leaves[h])) return;
        const Mat& gh = tape.grad(h_leaves[h]);
        Embedding d_emb(gh.a);
        for (double& x : d_emb) x /= static_cast<double>(half_count[h]);
        nn::cascade_embedding_backprop(w, cfg, *tasks[i].cascade, d_emb, buffers[i]);
    });
    for (auto& buf : buffers) accumulate_weights(*backbone_grads, buf);
    return loss_val;
}

} // namespace detail

// Contrastive pre-training over cascade groups; deterministic given the seed
// (fixed reduction order even with worker threads). Returns the best-loss
// checkpoint in (w, proj).
inline PretrainResult pretrain(nn::ICTHWeights& w, ProjectionHead& proj, const nn::ICTHConfig& cfg,
                               const std::vector<data::CascadeGroup>& groups_in, ContrastiveConfig cc) {
    if (cc.proj_dim <= 0) cc.proj_dim = std::max(1, cfg.d_m / 2);
    if (cc.batch_groups < 2) throw std::invalid_argument("pretrain: batch_groups must be >= 2");

    // clip long cascades once; the model contract rejects longer sequences
    std::vector<data::CascadeGroup> groups = groups_in;
    for (auto& g : groups)
        for (auto& c : g.cascades) c = data::clip_records(c, static_cast<std::size_t>(cfg.max_seq_len));

    PretrainResult res;
    nn::ICTHWeights best_w = w;
    ProjectionHead best_proj = proj;

    std::vector<Mat> anchor_tensors;
    if (cc.backbone_anchor_decay > 0.0)
        for_each_tensor(w, [&](const std::string&, Mat& m) { anchor_tensors.push_back(m); });

    AdamState adam;
    nn::ICTHWeights bgrads = nn::zeros_like(w);
    ProjectionHead pgrads = proj;
    zero_grads(pgrads);

    std::vector<ParamRef> params;
    collect_params(w, bgrads, "backbone.", params);
    collect_params(proj, pgrads, "proj.", params);

    // training-set loss of the untouched model, for the improvement contract
    {
        PairingResult pr0 = make_pairs(groups, mix_seed(cc.seed, 999));
        if (pr0.pairs.size() < 2) throw std::invalid_argument("pretrain: need at least 2 usable groups");
        res.initial_loss = detail::contrastive_batch(w, proj, cfg, groups, pr0.pairs, cc.temperature,
                                                     nullptr, nullptr);
        res.best_loss = res.initial_loss;
    }

    for (int epoch = 0; epoch < cc.epochs; ++epoch) {
        PairingResult pr = make_pairs(groups, mix_seed(cc.seed, 1000 + static_cast<std::uint64_t>(epoch)));
        if (epoch == 0) res.warnings = pr.warnings;
        if (pr.pairs.size() < 2) throw std::invalid_argument("pretrain: need at least 2 usable groups");

        std::mt19937_64 order_rng = make_rng(cc.seed, 2000 + static_cast<std::uint64_t>(epoch));
        std::shuffle(pr.pairs.begin(), pr.pairs.end(), order_rng);

        double epoch_loss = 0.0;
        int n_batches = 0;
        std::size_t pos = 0;
        while (pos < pr.pairs.size()) {
            std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(cc.batch_groups),
                                                     pr.pairs.size() - pos);
            if (pr.pairs.size() - pos - take == 1) take += 1;  // avoid a trailing singleton batch
            std::vector<GroupPair> batch(pr.pairs.begin() + static_cast<std::ptrdiff_t>(pos),
                                         pr.pairs.begin() + static_cast<std::ptrdiff_t>(pos + take));
            pos += take;
            if (batch.size() < 2) break;

            zero_grads(bgrads);
            zero_grads(pgrads);
            double loss = detail::contrastive_batch(w, proj, cfg, groups, batch, cc.temperature,
                                                    &bgrads, &pgrads);
            if (!std::isfinite(loss))
                throw std::runtime_error("pretrain: loss diverged (non-finite) at epoch " +
                                         std::to_string(epoch));
            adam_step(params, adam, cc.learning_rate, cc.grad_clip);
            if (cc.backbone_anchor_decay > 0.0) {
                const double rate = cc.learning_rate * cc.backbone_anchor_decay;
                std::size_t ai = 0;
                for_each_tensor(w, [&](const std::string&, Mat& m) {
                    const Mat& a = anchor_tensors[ai++];
                    for (std::size_t e = 0; e < m.size(); ++e) m.a[e] -= rate * (m.a[e] - a.a[e]);
                });
            }
            epoch_loss += loss;
            ++n_batches;
        }
        epoch_loss /= std::max(1, n_batches);
        res.loss_curve.push_back(epoch_loss);
        if (epoch_loss < res.best_loss) {
            res.best_loss = epoch_loss;
            res.best_epoch = static_cast<std::size_t>(epoch);
            best_w = w;
            best_proj = proj;
        }
    }

    w = best_w;
    proj = best_proj;
    return res;
}

} // namespace icth::train
