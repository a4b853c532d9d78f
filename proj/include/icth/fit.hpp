#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "icth/mbp.hpp"
#include "icth/parametric.hpp"
#include "icth/util.hpp"

namespace icth::models {

struct FitConfig {
    int max_iterations = 2000;
    double learning_rate = 0.05;
    double grad_tol = 1e-6;      // infinity norm, log-parameter space
    std::uint64_t seed = 0;      // init re-draws only
    double mbp_grid_step = 0.0;  // 0 -> horizon / 512
    MbpMode mbp_mode = MbpMode::Background;
};

struct FitResult {
    ParametricModel model;
    double final_ll = 0.0;
    int iterations = 0;
    bool converged = false;
    double grad_norm = 0.0;
};

namespace detail {

// Which parameters move. Parameters that are exactly 0 in the init stay 0:
// kappa = 0 is Poisson mode (theta unidentifiable, frozen too) and mu = 0 is
// reshare-cascade mode. N is taken from the init as-is.
struct FreeMask {
    bool mu = false, kappa = false, theta = false, c = false;

    static FreeMask from(const ParametricModel& init) {
        FreeMask f;
        f.mu = init.family != Family::HawkesN && init.mu > 0.0;
        f.kappa = init.kernel.kappa > 0.0;
        f.theta = f.kappa;
        f.c = f.kappa && init.kernel.kind == KernelKind::PowerLaw;
        return f;
    }

    std::vector<double> pack(const ParametricModel& m) const {
        std::vector<double> x;
        if (mu) x.push_back(std::log(m.mu));
        if (kappa) x.push_back(std::log(m.kernel.kappa));
        if (theta) x.push_back(std::log(m.kernel.theta));
        if (c) x.push_back(std::log(m.kernel.c));
        return x;
    }

    void unpack(const std::vector<double>& x, ParametricModel& m) const {
        std::size_t i = 0;
        if (mu) m.mu = std::exp(x[i++]);
        if (kappa) m.kernel.kappa = std::exp(x[i++]);
        if (theta) m.kernel.theta = std::exp(x[i++]);
        if (c) m.kernel.c = std::exp(x[i++]);
    }
};

struct Objective {
    double value = 0.0;
    std::vector<double> grad;  // log-space
};

inline Objective hawkes_objective(const ParametricModel& m, const std::vector<data::Cascade>& cascades,
                                  const FreeMask& mask) {
    std::vector<EventLoglikGrad> per(cascades.size());
    parallel_for(cascades.size(), [&](std::size_t i) { per[i] = event_loglik_grad(m, cascades[i]); });
    Objective obj;
    double d_mu = 0, d_kappa = 0, d_theta = 0, d_c = 0;
    for (const auto& g : per) {
        if (!g.finite) {
            obj.value = -std::numeric_limits<double>::infinity();
            return obj;
        }
        obj.value += g.value;
        d_mu += g.d_mu;
        d_kappa += g.d_kappa;
        d_theta += g.d_theta;
        d_c += g.d_c;
    }
    if (mask.mu) obj.grad.push_back(d_mu * m.mu);
    if (mask.kappa) obj.grad.push_back(d_kappa * m.kernel.kappa);
    if (mask.theta) obj.grad.push_back(d_theta * m.kernel.theta);
    if (mask.c) obj.grad.push_back(d_c * m.kernel.c);
    return obj;
}

inline double mbp_total_ll(const ParametricModel& m, const std::vector<data::Cascade>& cascades,
                           const FitConfig& cfg) {
    std::vector<double> per(cascades.size());
    parallel_for(cascades.size(), [&](std::size_t i) {
        MbpLoglikOptions opts;
        opts.grid_step = cfg.mbp_grid_step > 0.0 ? cfg.mbp_grid_step : cascades[i].horizon / 512.0;
        opts.mode = cfg.mbp_mode;
        per[i] = mbp_ic_loglik(m, cascades[i], opts);
    });
    double total = 0.0;
    for (double v : per) total += v;
    return total;
}

inline Objective mbp_objective(const ParametricModel& m, const std::vector<data::Cascade>& cascades,
                               const FreeMask& mask, const FitConfig& cfg) {
    Objective obj;
    obj.value = mbp_total_ll(m, cascades, cfg);
    if (!std::isfinite(obj.value)) return obj;
    // Central finite differences in log space; the Volterra solve makes the
    // analytic route disproportionate here.
    std::vector<double> x = mask.pack(m);
    const double h = 1e-5;
    for (std::size_t k = 0; k < x.size(); ++k) {
        ParametricModel mp = m, mm2 = m;
        std::vector<double> xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        mask.unpack(xp, mp);
        mask.unpack(xm, mm2);
        obj.grad.push_back((mbp_total_ll(mp, cascades, cfg) - mbp_total_ll(mm2, cascades, cfg)) / (2 * h));
    }
    return obj;
}

} // namespace detail

// Maximum-likelihood fit by Adam on log-transformed parameters. Reports the
// best iterate; converged means the log-space gradient infinity norm dropped
// below grad_tol within the iteration budget.
inline FitResult fit(const std::vector<data::Cascade>& cascades, Family family, ParametricModel init,
                     FitConfig cfg = {}) {
    if (cascades.empty()) throw std::invalid_argument("fit: need at least one cascade");
    init.family = family;
    init.check();
    for (const auto& c : cascades) {
        bool intervals = !c.events_only();
        if (family == Family::MBP && !intervals && c.n_events() > 0)
            throw std::invalid_argument("fit: MBP fits interval data; cascade " + c.id + " has events");
        if (family != Family::MBP && intervals)
            throw std::invalid_argument("fit: " + std::string(family_name(family)) +
                                        " fits event data; cascade " + c.id + " has intervals");
    }

    const detail::FreeMask mask = detail::FreeMask::from(init);
    auto evaluate = [&](const ParametricModel& m) {
        return family == Family::MBP ? detail::mbp_objective(m, cascades, mask, cfg)
                                     : detail::hawkes_objective(m, cascades, mask);
    };

    ParametricModel model = init;
    detail::Objective obj = evaluate(model);
    std::mt19937_64 rng = make_rng(cfg.seed, 0x0f17);
    std::normal_distribution<double> jitter(0.0, 0.5);
    int redraws = 0;
    while (!std::isfinite(obj.value)) {
        if (++redraws > 10) throw std::runtime_error("fit: log-likelihood non-finite after 10 init re-draws");
        std::vector<double> x = mask.pack(init);
        for (auto& xi : x) xi += jitter(rng);
        mask.unpack(x, model);
        obj = evaluate(model);
    }

    std::vector<double> x = mask.pack(model);
    const std::size_t dim = x.size();
    FitResult res;
    res.model = model;
    res.final_ll = obj.value;
    if (dim == 0) {  // everything frozen
        res.converged = true;
        return res;
    }

    std::vector<double> m1(dim, 0.0), m2(dim, 0.0);
    double best_ll = obj.value;
    std::vector<double> best_x = x;
    double lr = cfg.learning_rate;
    const double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;

    int it = 0;
    for (; it < cfg.max_iterations; ++it) {
        double gnorm = 0.0;
        for (double g : obj.grad) gnorm = std::max(gnorm, std::abs(g));
        res.grad_norm = gnorm;
        if (gnorm < cfg.grad_tol) {
            res.converged = true;
            break;
        }
        std::vector<double> x_prev = x;
        for (std::size_t k = 0; k < dim; ++k) {
            m1[k] = b1 * m1[k] + (1 - b1) * obj.grad[k];
            m2[k] = b2 * m2[k] + (1 - b2) * obj.grad[k] * obj.grad[k];
            double mhat = m1[k] / (1 - std::pow(b1, it + 1));
            double vhat = m2[k] / (1 - std::pow(b2, it + 1));
            x[k] += lr * mhat / (std::sqrt(vhat) + adam_eps);  // ascent
        }
        mask.unpack(x, model);
        detail::Objective next = evaluate(model);
        if (!std::isfinite(next.value)) {
            x = x_prev;
            mask.unpack(x, model);
            lr = std::max(lr * 0.5, 1e-6);
            continue;
        }
        obj = std::move(next);
        if (obj.value > best_ll) {
            best_ll = obj.value;
            best_x = x;
        }
    }

    mask.unpack(best_x, res.model);
    res.final_ll = best_ll;
    res.iterations = it;
    return res;
}

} // namespace icth::models
