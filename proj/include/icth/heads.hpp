#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "icth/cascade.hpp"
#include "icth/forward.hpp"
#include "icth/train.hpp"

namespace icth::train {

struct ConfusionMatrix {
    int n_classes = 0;
    std::vector<std::int64_t> counts;  // row = true, col = predicted

    explicit ConfusionMatrix(int n = 0) : n_classes(n), counts(static_cast<std::size_t>(n) * n, 0) {}
    void add(int truth, int pred) { counts[static_cast<std::size_t>(truth) * n_classes + pred] += 1; }
    std::int64_t at(int truth, int pred) const {
        return counts[static_cast<std::size_t>(truth) * n_classes + pred];
    }
};

// Unweighted mean of per-class F1; a class with no true and no predicted
// samples contributes 0.
inline double macro_f1(const ConfusionMatrix& cm) {
    double total = 0.0;
    for (int c = 0; c < cm.n_classes; ++c) {
        std::int64_t tp = cm.at(c, c), row = 0, col = 0;
        for (int j = 0; j < cm.n_classes; ++j) {
            row += cm.at(c, j);
            col += cm.at(j, c);
        }
        double denom = static_cast<double>(row + col);
        total += denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
    }
    return total / cm.n_classes;
}

struct LinearHead {
    Mat w, b;
};

template <typename Fn>
void for_each_tensor(LinearHead& h, Fn&& fn) {
    fn("w", h.w);
    fn("b", h.b);
}

inline LinearHead init_linear_head(int in_dim, int out_dim, std::uint64_t seed) {
    std::mt19937_64 rng = make_rng(seed, 0x4ead);
    return {nn::detail::xavier(in_dim, out_dim, rng), Mat(1, out_dim, 0.0)};
}

// Cross-entropy of a linear softmax head over constant features; labels index
// rows of the selector.
inline int classify_loss_node(nn::Tape& tape, int features, int w, int b, const std::vector<int>& labels) {
    int logits = tape.add_rowvec(tape.matmul(features, w), b);
    int logp = tape.log_softmax_rows(logits);
    const Mat& lv = tape.val(logits);
    Mat sel(lv.rows, lv.cols, 0.0);
    for (int i = 0; i < lv.rows; ++i) sel.at(i, labels[static_cast<std::size_t>(i)]) = -1.0 / lv.rows;
    return tape.sum_weighted(logp, std::move(sel));
}

inline int mse_loss_node(nn::Tape& tape, int features, int w, int b, const std::vector<double>& targets) {
    int pred = tape.add_rowvec(tape.matmul(features, w), b);
    Mat t(static_cast<int>(targets.size()), 1, 0.0);
    for (std::size_t i = 0; i < targets.size(); ++i) t.at(static_cast<int>(i), 0) = targets[i];
    int diff = tape.sub(pred, tape.constant(std::move(t)));
    int sq = tape.mul(diff, diff);
    return tape.sum_weighted(sq, Mat(static_cast<int>(targets.size()), 1, 1.0 / targets.size()));
}

// ---- category classification -------------------------------------------------

struct ClassifyOptions {
    double train_fraction = 0.5;  // 50-50 train/test
    double val_fraction = 0.05;   // of the training groups
    int max_epochs = 600;
    int patience = 60;
    double learning_rate = 0.05;
    std::uint64_t split_seed = 0;
    std::uint64_t train_seed = 0;
    bool unfreeze = false;  // also update the backbone
    double backbone_lr = 1e-3;
};

struct ClassifyResult {
    std::vector<std::string> classes;
    double test_macro_f1 = 0.0;
    double train_macro_f1 = 0.0;
    ConfusionMatrix confusion{0};
    LinearHead head;
    // feature standardization fitted on the training groups; predictions use
    // softmax(((x - mean) / std) W + b)
    Embedding feature_mean, feature_std;
    std::vector<double> val_curve;
    std::vector<std::size_t> train_groups, val_groups, test_groups;  // indices into the input
};

namespace detail {

inline std::vector<Embedding> embed_groups(const nn::ICTHWeights& w, const nn::ICTHConfig& cfg,
                                           const std::vector<data::CascadeGroup>& groups) {
    std::vector<Embedding> out(groups.size());
    parallel_for(groups.size(), [&](std::size_t i) {
        std::vector<Embedding> casc(groups[i].cascades.size());
        for (std::size_t c = 0; c < casc.size(); ++c)
            casc[c] = nn::cascade_embedding(w, cfg, data::clip_records(groups[i].cascades[c],
                                                                       static_cast<std::size_t>(cfg.max_seq_len)));
        out[i] = nn::mean_embedding(casc);
    });
    return out;
}

inline Mat stack_embeddings(const std::vector<Embedding>& embs, const std::vector<std::size_t>& idx) {
    Mat m(static_cast<int>(idx.size()), static_cast<int>(embs.front().size()), 0.0);
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < embs[idx[i]].size(); ++j)
            m.at(static_cast<int>(i), static_cast<int>(j)) = embs[idx[i]][j];
    return m;
}

inline std::vector<int> predict_classes(const Mat& features, const LinearHead& head) {
    std::vector<int> preds(static_cast<std::size_t>(features.rows));
    for (int i = 0; i < features.rows; ++i) {
        int best = 0;
        double best_v = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < head.w.cols; ++c) {
            double v = head.b.at(0, c);
            for (int j = 0; j < features.cols; ++j) v += features.at(i, j) * head.w.at(j, c);
            if (v > best_v) {
                best_v = v;
                best = c;
            }
        }
        preds[static_cast<std::size_t>(i)] = best;
    }
    return preds;
}

} // namespace detail

// Trains a softmax head on group embeddings with a stratified 50-50 split and
// early stopping on validation macro-F1. The backbone is frozen by default;
// with opts.unfreeze the backbone weights are updated in place.
inline ClassifyResult finetune_classify(nn::ICTHWeights& weights, const nn::ICTHConfig& cfg,
                                        const std::vector<data::CascadeGroup>& groups,
                                        ClassifyOptions opts = {}) {
    ClassifyResult res;
    std::map<std::string, int> class_ids;
    for (const auto& g : groups) {
        if (!g.label) throw std::invalid_argument("finetune_classify: group " + g.group_id + " has no label");
        class_ids.emplace(*g.label, 0);
    }
    if (class_ids.size() < 2) throw std::invalid_argument("finetune_classify: need at least 2 classes");
    int next_id = 0;
    for (auto& [name, id] : class_ids) {
        id = next_id++;
        res.classes.push_back(name);
    }
    const int n_classes = next_id;

    std::vector<int> labels(groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) labels[i] = class_ids[*groups[i].label];

    // stratified split
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < groups.size(); ++i) by_class[labels[i]].push_back(i);
    std::mt19937_64 rng = make_rng(opts.split_seed, 0x51a7);
    for (auto& [cls, idx] : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        auto n_train = static_cast<std::size_t>(std::llround(opts.train_fraction * static_cast<double>(idx.size())));
        n_train = std::clamp<std::size_t>(n_train, 1, idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < n_train ? res.train_groups : res.test_groups).push_back(idx[i]);
    }
    std::sort(res.train_groups.begin(), res.train_groups.end());
    std::sort(res.test_groups.begin(), res.test_groups.end());

    for (int c = 0; c < n_classes; ++c) {
        bool in_train = false;
        for (std::size_t i : res.train_groups) in_train = in_train || labels[i] == c;
        if (!in_train)
            throw std::invalid_argument("finetune_classify: class " + res.classes[static_cast<std::size_t>(c)] +
                                        " absent from train split");
    }

    // validation groups: 5% of training, taken from classes that keep >= 1
    auto n_val = static_cast<std::size_t>(std::llround(opts.val_fraction * static_cast<double>(res.train_groups.size())));
    n_val = std::min<std::size_t>(std::max<std::size_t>(n_val, 1), res.train_groups.size() - 1);
    {
        std::map<int, int> train_per_class;
        for (std::size_t i : res.train_groups) train_per_class[labels[i]] += 1;
        std::vector<std::size_t> shuffled = res.train_groups;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        std::vector<std::size_t> keep;
        for (std::size_t i : shuffled) {
            if (res.val_groups.size() < n_val && train_per_class[labels[i]] > 1) {
                res.val_groups.push_back(i);
                train_per_class[labels[i]] -= 1;
            } else {
                keep.push_back(i);
            }
        }
        std::sort(keep.begin(), keep.end());
        std::sort(res.val_groups.begin(), res.val_groups.end());
        res.train_groups = std::move(keep);
    }

    std::vector<Embedding> embs = detail::embed_groups(weights, cfg, groups);
    std::vector<int> y_train, y_val, y_test;
    for (std::size_t i : res.train_groups) y_train.push_back(labels[i]);
    for (std::size_t i : res.val_groups) y_val.push_back(labels[i]);
    for (std::size_t i : res.test_groups) y_test.push_back(labels[i]);

    // Standardize features on the training groups; the raw embeddings carry a
    // large shared component that conditions the softmax problem poorly.
    auto fit_scaler = [&]() {
        res.feature_mean.assign(static_cast<std::size_t>(cfg.d_m), 0.0);
        res.feature_std.assign(static_cast<std::size_t>(cfg.d_m), 0.0);
        for (std::size_t i : res.train_groups)
            for (int d = 0; d < cfg.d_m; ++d) res.feature_mean[static_cast<std::size_t>(d)] += embs[i][static_cast<std::size_t>(d)];
        for (double& m : res.feature_mean) m /= static_cast<double>(res.train_groups.size());
        for (std::size_t i : res.train_groups)
            for (int d = 0; d < cfg.d_m; ++d) {
                double diff = embs[i][static_cast<std::size_t>(d)] - res.feature_mean[static_cast<std::size_t>(d)];
                res.feature_std[static_cast<std::size_t>(d)] += diff * diff;
            }
        for (double& s : res.feature_std) {
            s = std::sqrt(s / static_cast<double>(res.train_groups.size()));
            if (!(s > 1e-12)) s = 1.0;
        }
    };
    fit_scaler();
    auto standardized = [&](const std::vector<std::size_t>& idx) {
        Mat m = detail::stack_embeddings(embs, idx);
        for (int i = 0; i < m.rows; ++i)
            for (int j = 0; j < m.cols; ++j)
                m.at(i, j) = (m.at(i, j) - res.feature_mean[static_cast<std::size_t>(j)]) /
                             res.feature_std[static_cast<std::size_t>(j)];
        return m;
    };

    LinearHead head = init_linear_head(cfg.d_m, n_classes, opts.train_seed);
    LinearHead grads = head;
    zero_grads(grads);
    nn::ICTHWeights bgrads = nn::zeros_like(weights);
    std::vector<ParamRef> head_params, backbone_params;
    collect_params(head, grads, "head.", head_params);
    collect_params(weights, bgrads, "backbone.", backbone_params);
    AdamState adam_head, adam_backbone;

    auto eval_f1 = [&](const std::vector<std::size_t>& group_idx, const std::vector<int>& y) {
        if (y.empty()) return 0.0;
        ConfusionMatrix cm(n_classes);
        std::vector<int> preds = detail::predict_classes(standardized(group_idx), head);
        for (std::size_t i = 0; i < y.size(); ++i) cm.add(y[i], preds[i]);
        return macro_f1(cm);
    };

    LinearHead best_head = head;
    nn::ICTHWeights best_backbone = weights;
    double best_val = -1.0;
    double best_train_loss = std::numeric_limits<double>::infinity();
    int since_best = 0;
    for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
        Mat x_train = standardized(res.train_groups);

        zero_grads(grads);
        nn::Tape tape;
        int xf = opts.unfreeze ? tape.leaf(x_train) : tape.constant(x_train);
        int wn = tape.leaf(head.w), bn = tape.leaf(head.b);
        int loss = classify_loss_node(tape, xf, wn, bn, y_train);
        double train_loss = tape.val(loss).a[0];
        tape.backward(loss);
        if (tape.has_grad(wn))
            for (std::size_t i = 0; i < grads.w.size(); ++i) grads.w.a[i] += tape.grad(wn).a[i];
        if (tape.has_grad(bn))
            for (std::size_t i = 0; i < grads.b.size(); ++i) grads.b.a[i] += tape.grad(bn).a[i];
        adam_step(head_params, adam_head, opts.learning_rate, 5.0);

        if (opts.unfreeze && tape.has_grad(xf)) {
            zero_grads(bgrads);
            const Mat& gx = tape.grad(xf);
            for (std::size_t gi = 0; gi < res.train_groups.size(); ++gi) {
                const auto& grp = groups[res.train_groups[gi]];
                Embedding d_emb(static_cast<std::size_t>(cfg.d_m));
                for (int j = 0; j < cfg.d_m; ++j)
                    d_emb[static_cast<std::size_t>(j)] =
                        gx.at(static_cast<int>(gi), j) / res.feature_std[static_cast<std::size_t>(j)] /
                        static_cast<double>(grp.cascades.size());
                for (const auto& c : grp.cascades)
                    nn::cascade_embedding_backprop(
                        weights, cfg, data::clip_records(c, static_cast<std::size_t>(cfg.max_seq_len)),
                        d_emb, bgrads);
            }
            adam_step(backbone_params, adam_backbone, opts.backbone_lr, 5.0);
            embs = detail::embed_groups(weights, cfg, groups);
            fit_scaler();
        }

        // early stopping on validation macro-F1; ties (tiny validation sets
        // saturate fast) break toward the lower training loss
        double val_f1 = res.val_groups.empty() ? eval_f1(res.train_groups, y_train) : eval_f1(res.val_groups, y_val);
        res.val_curve.push_back(val_f1);
        bool improved = val_f1 > best_val + 1e-12 ||
                        (val_f1 >= best_val - 1e-12 && train_loss < best_train_loss - 1e-12);
        if (improved) {
            if (val_f1 > best_val) best_val = val_f1;
            best_train_loss = train_loss;
            best_head = head;
            if (opts.unfreeze) best_backbone = weights;
            since_best = 0;
        } else if (++since_best >= opts.patience) {
            break;
        }
    }
    head = best_head;
    if (opts.unfreeze) {
        weights = best_backbone;
        embs = detail::embed_groups(weights, cfg, groups);
        fit_scaler();
    }

    res.head = head;
    res.train_macro_f1 = eval_f1(res.train_groups, y_train);
    ConfusionMatrix cm(n_classes);
    std::vector<int> preds = detail::predict_classes(standardized(res.test_groups), head);
    for (std::size_t i = 0; i < y_test.size(); ++i) cm.add(y_test[i], preds[i]);
    res.confusion = cm;
    res.test_macro_f1 = macro_f1(cm);
    return res;
}

// ---- popularity prediction -----------------------------------------------------

struct PopularityOptions {
    double t_obs = 0.0;    // 0 -> 10% of each cascade's horizon
    double t_final = 0.0;  // 0 -> horizon
    double train_fraction = 0.5;
    int epochs = 400;
    double learning_rate = 0.05;
    std::uint64_t split_seed = 0;
    std::uint64_t train_seed = 0;
};

struct PopularityResult {
    std::vector<double> test_apes;
    double mean_ape = 0.0, median_ape = 0.0;
    double baseline_mean_ape = 0.0, baseline_median_ape = 0.0;  // train-median predictor
    LinearHead head;
    Embedding feature_mean, feature_std;  // train-set scaler
    std::vector<std::string> warnings;
};

inline double absolute_percentage_error(double predicted_final, double actual_final) {
    if (!(actual_final > 0.0)) throw std::invalid_argument("APE undefined for zero final count");
    return std::abs(predicted_final - actual_final) / actual_final;
}

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Predicts log(1 + remaining events after t_obs) from the embedding of the
// cascade truncated at t_obs; the log1p parameterization keeps predicted
// final counts non-negative.
inline PopularityResult finetune_popularity(const nn::ICTHWeights& weights, const nn::ICTHConfig& cfg,
                                            const std::vector<data::Cascade>& cascades,
                                            PopularityOptions opts = {}) {
    if (opts.t_obs > 0.0 && opts.t_final > 0.0 && !(opts.t_obs < opts.t_final))
        throw std::invalid_argument("finetune_popularity: t_obs must be < t_final");
    PopularityResult res;
    struct Sample {
        Embedding emb;
        double target;      // log1p(remaining)
        double n_obs, n_final;
    };
    std::vector<std::optional<Sample>> samples(cascades.size());
    std::vector<std::string> warn(cascades.size());
    parallel_for(cascades.size(), [&](std::size_t i) {
        const auto& c = cascades[i];
        double t_obs = opts.t_obs > 0.0 ? opts.t_obs : 0.1 * c.horizon;
        double n_final = static_cast<double>(
            (opts.t_final > 0.0 ? data::truncate(c, opts.t_final) : c).implied_count());
        if (!(n_final > 0.0)) {
            warn[i] = "cascade " + c.id + ": final count 0; excluded (APE undefined)";
            return;
        }
        data::Cascade obs = data::truncate(c, t_obs);
        if (obs.records.empty()) {
            warn[i] = "cascade " + c.id + ": no records before t_obs; excluded";
            return;
        }
        Sample s;
        s.n_obs = static_cast<double>(obs.implied_count());
        s.n_final = n_final;
        s.target = std::log1p(std::max(0.0, n_final - s.n_obs));
        s.emb = nn::cascade_embedding(weights, cfg,
                                      data::clip_records(obs, static_cast<std::size_t>(cfg.max_seq_len)));
        samples[i] = std::move(s);
    });
    std::vector<Sample> usable;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i]) usable.push_back(std::move(*samples[i]));
        else if (!warn[i].empty()) res.warnings.push_back(warn[i]);
    }
    if (usable.size() < 4) throw std::invalid_argument("finetune_popularity: fewer than 4 usable cascades");

    std::vector<std::size_t> idx(usable.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng = make_rng(opts.split_seed, 0x90b5);
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_train = static_cast<std::size_t>(std::llround(opts.train_fraction * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);

    res.feature_mean.assign(static_cast<std::size_t>(cfg.d_m), 0.0);
    res.feature_std.assign(static_cast<std::size_t>(cfg.d_m), 0.0);
    for (std::size_t i = 0; i < n_train; ++i)
        for (int j = 0; j < cfg.d_m; ++j)
            res.feature_mean[static_cast<std::size_t>(j)] += usable[idx[i]].emb[static_cast<std::size_t>(j)];
    for (double& m : res.feature_mean) m /= static_cast<double>(n_train);
    for (std::size_t i = 0; i < n_train; ++i)
        for (int j = 0; j < cfg.d_m; ++j) {
            double d = usable[idx[i]].emb[static_cast<std::size_t>(j)] - res.feature_mean[static_cast<std::size_t>(j)];
            res.feature_std[static_cast<std::size_t>(j)] += d * d;
        }
    for (double& s : res.feature_std) {
        s = std::sqrt(s / static_cast<double>(n_train));
        if (!(s > 1e-12)) s = 1.0;
    }
    auto scale_emb = [&](const Embedding& e, int j) {
        return (e[static_cast<std::size_t>(j)] - res.feature_mean[static_cast<std::size_t>(j)]) /
               res.feature_std[static_cast<std::size_t>(j)];
    };

    Mat x_train(static_cast<int>(n_train), cfg.d_m, 0.0);
    std::vector<double> y_train;
    for (std::size_t i = 0; i < n_train; ++i) {
        for (int j = 0; j < cfg.d_m; ++j) x_train.at(static_cast<int>(i), j) = scale_emb(usable[idx[i]].emb, j);
        y_train.push_back(usable[idx[i]].target);
    }

    LinearHead head = init_linear_head(cfg.d_m, 1, opts.train_seed);
    LinearHead grads = head;
    zero_grads(grads);
    std::vector<ParamRef> params;
    collect_params(head, grads, "pop.", params);
    AdamState adam;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        zero_grads(grads);
        nn::Tape tape;
        int xf = tape.constant(x_train);
        int wn = tape.leaf(head.w), bn = tape.leaf(head.b);
        int loss = mse_loss_node(tape, xf, wn, bn, y_train);
        tape.backward(loss);
        for (std::size_t i = 0; i < grads.w.size(); ++i) grads.w.a[i] += tape.grad(wn).a[i];
        for (std::size_t i = 0; i < grads.b.size(); ++i) grads.b.a[i] += tape.grad(bn).a[i];
        adam_step(params, adam, opts.learning_rate, 5.0);
    }
    res.head = head;

    std::vector<double> train_remaining;
    for (std::size_t i = 0; i < n_train; ++i)
        train_remaining.push_back(usable[idx[i]].n_final - usable[idx[i]].n_obs);
    const double median_remaining = median_of(train_remaining);

    std::vector<double> baseline_apes;
    for (std::size_t i = n_train; i < idx.size(); ++i) {
        const Sample& s = usable[idx[i]];
        double pred = head.b.at(0, 0);
        for (int j = 0; j < cfg.d_m; ++j) pred += scale_emb(s.emb, j) * head.w.at(j, 0);
        double predicted_final = s.n_obs + std::max(0.0, std::expm1(pred));
        res.test_apes.push_back(absolute_percentage_error(predicted_final, s.n_final));
        baseline_apes.push_back(absolute_percentage_error(s.n_obs + std::max(0.0, median_remaining), s.n_final));
    }
    double sum = 0.0, bsum = 0.0;
    for (double a : res.test_apes) sum += a;
    for (double a : baseline_apes) bsum += a;
    res.mean_ape = res.test_apes.empty() ? 0.0 : sum / static_cast<double>(res.test_apes.size());
    res.median_ape = median_of(res.test_apes);
    res.baseline_mean_ape = baseline_apes.empty() ? 0.0 : bsum / static_cast<double>(baseline_apes.size());
    res.baseline_median_ape = median_of(baseline_apes);
    return res;
}

} // namespace icth::train
