#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "icth/forward.hpp"
#include "icth/heads.hpp"
#include "icth/train.hpp"

namespace icth::train {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::vector<std::pair<std::string, double>> per_tensor;

    void note(const std::string& name, double err) {
        per_tensor.emplace_back(name, err);
        max_rel_err = std::max(max_rel_err, err);
    }
};

namespace detail {

inline double rel_err(double fd, double an) {
    return std::abs(fd - an) / std::max({1e-3, std::abs(fd), std::abs(an)});
}

// Central finite differences over every entry of every tensor reachable via
// for_each_tensor, against an analytic gradient of matching layout.
template <typename W>
void fd_check(W& weights, const W& analytic, const std::function<double()>& value, double step,
              GradCheckReport& report, const std::string& prefix) {
    std::vector<Mat*> ps;
    std::vector<std::string> names;
    for_each_tensor(weights, [&](const std::string& n, Mat& m) {
        names.push_back(n);
        ps.push_back(&m);
    });
    std::vector<const Mat*> gs;
    for_each_tensor(const_cast<W&>(analytic), [&](const std::string&, Mat& m) { gs.push_back(&m); });

    for (std::size_t ti = 0; ti < ps.size(); ++ti) {
        double worst = 0.0;
        for (std::size_t e = 0; e < ps[ti]->size(); ++e) {
            double saved = ps[ti]->a[e];
            ps[ti]->a[e] = saved + step;
            double up = value();
            ps[ti]->a[e] = saved - step;
            double down = value();
            ps[ti]->a[e] = saved;
            double fd = (up - down) / (2.0 * step);
            worst = std::max(worst, rel_err(fd, gs[ti]->a[e]));
        }
        report.note(prefix + names[ti], worst);
    }
}

} // namespace detail

inline GradCheckReport grad_check_icth(nn::ICTHWeights& w, const nn::ICTHConfig& cfg,
                                       const data::Cascade& cascade, double step = 1e-5) {
    nn::ICTHWeights analytic = nn::zeros_like(w);
    nn::icth_loglik_grad(w, cfg, cascade, analytic);
    GradCheckReport report;
    detail::fd_check(w, analytic,
                     [&]() { return nn::icth_loglik(w, cfg, cascade); }, step, report, "icth.");
    return report;
}

inline GradCheckReport grad_check_ntxent(ProjectionHead& proj, const std::vector<Embedding>& views,
                                         double tau, double step = 1e-5) {
    auto value = [&]() {
        nn::Tape tape;
        BoundProjection bp = bind_projection(tape, proj);
        std::vector<int> z;
        for (const auto& v : views) z.push_back(project_node(tape, bp, tape.constant(Mat::row_vector(v))));
        return tape.val(ntxent_node(tape, z, tau)).a[0];
    };
    ProjectionHead analytic = proj;
    zero_grads(analytic);
    {
        nn::Tape tape;
        BoundProjection bp = bind_projection(tape, proj);
        std::vector<int> z;
        for (const auto& v : views) z.push_back(project_node(tape, bp, tape.constant(Mat::row_vector(v))));
        tape.backward(ntxent_node(tape, z, tau));
        auto pull = [&](Mat& dst, int id) {
            if (!tape.has_grad(id)) return;
            for (std::size_t i = 0; i < dst.size(); ++i) dst.a[i] += tape.grad(id).a[i];
        };
        pull(analytic.w1, bp.w1);
        pull(analytic.b1, bp.b1);
        pull(analytic.w2, bp.w2);
        pull(analytic.b2, bp.b2);
    }
    GradCheckReport report;
    detail::fd_check(proj, analytic, value, step, report, "ntxent.");
    return report;
}

namespace detail {

inline GradCheckReport grad_check_linear_head(LinearHead& head, const Mat& features,
                                              const std::function<int(nn::Tape&, int, int, int)>& loss_builder,
                                              double step, const std::string& prefix) {
    auto value = [&]() {
        nn::Tape tape;
        int xf = tape.constant(features);
        int wn = tape.leaf(head.w), bn = tape.leaf(head.b);
        return tape.val(loss_builder(tape, xf, wn, bn)).a[0];
    };
    LinearHead analytic = head;
    zero_grads(analytic);
    {
        nn::Tape tape;
        int xf = tape.constant(features);
        int wn = tape.leaf(head.w), bn = tape.leaf(head.b);
        tape.backward(loss_builder(tape, xf, wn, bn));
        if (tape.has_grad(wn))
            for (std::size_t i = 0; i < analytic.w.size(); ++i) analytic.w.a[i] += tape.grad(wn).a[i];
        if (tape.has_grad(bn))
            for (std::size_t i = 0; i < analytic.b.size(); ++i) analytic.b.a[i] += tape.grad(bn).a[i];
    }
    GradCheckReport report;
    fd_check(head, analytic, value, step, report, prefix);
    return report;
}

} // namespace detail

inline GradCheckReport grad_check_classify(LinearHead& head, const Mat& features,
                                           const std::vector<int>& labels, double step = 1e-5) {
    return detail::grad_check_linear_head(
        head, features,
        [&](nn::Tape& t, int xf, int wn, int bn) { return classify_loss_node(t, xf, wn, bn, labels); },
        step, "classify.");
}

inline GradCheckReport grad_check_popularity(LinearHead& head, const Mat& features,
                                             const std::vector<double>& targets, double step = 1e-5) {
    return detail::grad_check_linear_head(
        head, features,
        [&](nn::Tape& t, int xf, int wn, int bn) { return mse_loss_node(t, xf, wn, bn, targets); },
        step, "popularity.");
}

struct TinyGradCheck {
    GradCheckReport icth, ntxent, classify, popularity;

    double max_rel_err() const {
        return std::max({icth.max_rel_err, ntxent.max_rel_err, classify.max_rel_err,
                         popularity.max_rel_err});
    }
};

// The full verification battery on a tiny double-precision model: IC-TH
// log-likelihood through the whole backbone, NT-Xent through the projection
// head, and both task heads.
inline TinyGradCheck run_tiny_gradcheck(std::uint64_t seed, double step = 1e-5) {
    nn::ICTHConfig cfg;
    cfg.d_m = 8;
    cfg.n_heads = 1;
    cfg.d_k = 4;
    cfg.d_v = 4;
    cfg.n_layers = 1;
    cfg.linformer_k = 4;
    cfg.max_seq_len = 8;
    cfg.integ_points = 4;

    nn::ICTHWeights w = nn::init_weights(cfg, seed);
    // dense projections so slot visibility cannot flip under perturbation
    std::mt19937_64 rng = make_rng(seed, 0xdead);
    std::normal_distribution<double> dist(0.0, 0.3);
    for (auto& lw : w.layers) {
        for (double& x : lw.e.a) x += dist(rng);
        for (double& x : lw.f.a) x += dist(rng);
    }

    // length-6 mixed sequence: count terms, zero-count interval, event terms
    data::Cascade cascade;
    cascade.horizon = 2.0;
    cascade.records = {
        data::CascadeRecord::interval(0.0, 0.5, 2), data::CascadeRecord::event(0.5),
        data::CascadeRecord::interval(0.5, 0.7, 0), data::CascadeRecord::event(1.2),
        data::CascadeRecord::interval(1.2, 0.8, 3), data::CascadeRecord::event(2.0)};

    TinyGradCheck out;
    out.icth = grad_check_icth(w, cfg, cascade, step);

    ProjectionHead proj = init_projection(cfg.d_m, cfg.d_m / 2, seed + 1);
    std::vector<Embedding> views;
    std::normal_distribution<double> emb_dist(0.0, 1.0);
    for (int v = 0; v < 4; ++v) {
        Embedding e(static_cast<std::size_t>(cfg.d_m));
        for (double& x : e) x = emb_dist(rng);
        views.push_back(std::move(e));
    }
    out.ntxent = grad_check_ntxent(proj, views, 0.5, step);

    const int n_samples = 6, n_classes = 3;
    Mat features(n_samples, cfg.d_m, 0.0);
    for (double& x : features.a) x = emb_dist(rng);
    std::vector<int> labels;
    for (int i = 0; i < n_samples; ++i) labels.push_back(i % n_classes);
    LinearHead chead = init_linear_head(cfg.d_m, n_classes, seed + 2);
    out.classify = grad_check_classify(chead, features, labels, step);

    std::vector<double> targets;
    for (int i = 0; i < n_samples; ++i) targets.push_back(emb_dist(rng));
    LinearHead phead = init_linear_head(cfg.d_m, 1, seed + 3);
    out.popularity = grad_check_popularity(phead, features, targets, step);
    return out;
}

} // namespace icth::train
