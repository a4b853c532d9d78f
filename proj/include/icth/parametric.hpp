#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "icth/cascade.hpp"
#include "icth/kernels.hpp"
#include "icth/util.hpp"

namespace icth::models {

enum class Family { Hawkes, HawkesN, MBP };

inline const char* family_name(Family f) {
    switch (f) {
        case Family::Hawkes: return "hawkes";
        case Family::HawkesN: return "hawkesn";
        case Family::MBP: return "mbp";
    }
    return "?";
}

inline Family family_from_name(const std::string& s) {
    if (s == "hawkes") return Family::Hawkes;
    if (s == "hawkesn") return Family::HawkesN;
    if (s == "mbp") return Family::MBP;
    throw std::invalid_argument("unknown family: " + s);
}

struct ParametricModel {
    Family family = Family::Hawkes;
    Kernel kernel;
    double mu = 0.0;          // background intensity; 0 in reshare-cascade mode
    std::int64_t N = 0;       // population size, HawkesN only

    void check() const {
        kernel.check();
        if (!(mu >= 0.0) || !std::isfinite(mu)) throw std::invalid_argument("model: mu must be >= 0");
        if (family == Family::HawkesN && N < 1) throw std::invalid_argument("model: HawkesN needs N >= 1");
    }
};

// lambda(t) with the left-limit convention: an event at exactly t does not
// excite itself.
inline double intensity(const ParametricModel& m, std::span<const double> history, double t) {
    std::size_t n_before = 0;
    double excitation = 0.0;
    for (double ti : history) {
        if (!(ti < t)) break;  // history sorted
        ++n_before;
        excitation += kernel_value(m.kernel, t - ti);
    }
    switch (m.family) {
        case Family::Hawkes:
        case Family::MBP:  // the underlying Hawkes intensity; MBP's xi lives in mbp.hpp
            return m.mu + excitation;
        case Family::HawkesN: {
            auto nt = static_cast<std::int64_t>(n_before);
            if (nt > m.N) throw std::invalid_argument("intensity: HawkesN with N_t > N");
            if (nt == m.N) return 0.0;
            return (static_cast<double>(m.N - nt) / static_cast<double>(m.N)) * excitation;
        }
    }
    return 0.0;
}

struct SimulateOptions {
    bool immigrant_at_zero = false;   // reshare-cascade mode: seed event at t = 0
    std::size_t max_events = 100000;  // hard safety stop
    std::string id;
};

// Ogata thinning with the bound refreshed at every candidate; exact because
// both kernels are non-increasing, so lambda only decays between events.
inline data::Cascade simulate(const ParametricModel& m, double horizon, std::uint64_t seed,
                              SimulateOptions opts = {}) {
    m.check();
    if (!(horizon > 0.0)) throw std::invalid_argument("simulate: horizon must be > 0");
    if (m.family == Family::MBP) throw std::invalid_argument("simulate: use simulate_mbp for MBP");

    data::Cascade cascade;
    cascade.id = opts.id;
    cascade.horizon = horizon;

    std::vector<double> times;
    if (opts.immigrant_at_zero) times.push_back(0.0);

    std::mt19937_64 rng = make_rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    auto lambda_at = [&](double t) { return intensity(m, times, t); };
    auto lambda_after = [&](double t) {
        // right limit: includes an event at exactly t
        double excitation = 0.0;
        std::int64_t nt = 0;
        for (double ti : times) {
            if (ti > t) break;
            ++nt;
            excitation += kernel_value(m.kernel, t - ti);
        }
        if (m.family == Family::HawkesN) {
            if (nt >= m.N) return 0.0;
            return (static_cast<double>(m.N - nt) / static_cast<double>(m.N)) * excitation;
        }
        return m.mu + excitation;
    };

    double t = 0.0;
    double bound = lambda_after(0.0);
    while (times.size() < opts.max_events) {
        if (!(bound > 0.0)) break;
        double wait = -std::log(1.0 - unif(rng)) / bound;
        double cand = t + wait;
        if (cand > horizon) break;
        double lam = lambda_at(cand);
        if (unif(rng) * bound <= lam) {
            times.push_back(cand);
            t = cand;
            bound = lambda_after(cand);
        } else {
            t = cand;
            bound = lam;
        }
    }

    for (double ti : times) cascade.records.push_back(data::CascadeRecord::event(ti));
    return cascade;
}

struct LogLikResult {
    double value = -std::numeric_limits<double>::infinity();
    bool finite = false;
};

namespace detail {

// Segment factors (N - N_t)/N for HawkesN, 1 otherwise; events indexed 0..n-1.
inline double population_factor(const ParametricModel& m, std::size_t events_so_far) {
    if (m.family != Family::HawkesN) return 1.0;
    auto nt = static_cast<std::int64_t>(events_so_far);
    if (nt >= m.N) return 0.0;
    return static_cast<double>(m.N - nt) / static_cast<double>(m.N);
}

} // namespace detail

// Point-process log-likelihood sum_i log lambda(t_i) - int_0^T lambda.
// In reshare mode (mu == 0) the first event is the immigrant and its log term
// is conditioned away. A non-positive lambda at any counted event returns
// -inf with finite=false instead of throwing.
inline LogLikResult event_loglik(const ParametricModel& m, const data::Cascade& cascade) {
    m.check();
    if (!cascade.events_only()) throw std::invalid_argument("event_loglik: cascade must contain PointEvents only");
    if (m.family == Family::MBP) throw std::invalid_argument("event_loglik: MBP fits on intervals (mbp_ic_loglik)");
    const std::vector<double> t = cascade.event_times();
    const double T = cascade.horizon;
    if (m.family == Family::HawkesN && static_cast<std::int64_t>(t.size()) > m.N)
        throw std::invalid_argument("event_loglik: more events than the HawkesN population");

    LogLikResult res;
    double ll = 0.0;
    const std::size_t first = (m.mu == 0.0 && !t.empty()) ? 1 : 0;
    for (std::size_t i = first; i < t.size(); ++i) {
        double excitation = 0.0;
        for (std::size_t j = 0; j < i; ++j) excitation += kernel_value(m.kernel, t[i] - t[j]);
        double lam = (m.family == Family::HawkesN) ? detail::population_factor(m, i) * excitation
                                                   : m.mu + excitation;
        if (!(lam > 0.0)) return res;  // -inf, flagged
        ll += std::log(lam);
    }

    // Compensator in closed form via kernel_mass.
    double comp = 0.0;
    if (m.family == Family::HawkesN) {
        for (std::size_t j = 0; j < t.size(); ++j) {
            double seg_start = t[j];
            double seg_end = (j + 1 < t.size()) ? t[j + 1] : T;
            double f = detail::population_factor(m, j + 1);
            if (f == 0.0 || seg_end <= seg_start) continue;
            double mass = 0.0;
            for (std::size_t i = 0; i <= j; ++i)
                mass += kernel_mass(m.kernel, seg_start - t[i], seg_end - t[i]);
            comp += f * mass;
        }
    } else {
        comp = m.mu * T;
        for (double ti : t) comp += kernel_mass(m.kernel, 0.0, T - ti);
    }
    res.value = ll - comp;
    res.finite = std::isfinite(res.value);
    return res;
}

// Analytic gradient of event_loglik w.r.t. (mu, kappa, theta, c); used by fit.
struct EventLoglikGrad {
    double value = 0.0;
    bool finite = true;
    double d_mu = 0.0, d_kappa = 0.0, d_theta = 0.0, d_c = 0.0;
};

inline EventLoglikGrad event_loglik_grad(const ParametricModel& m, const data::Cascade& cascade) {
    const std::vector<double> t = cascade.event_times();
    const double T = cascade.horizon;
    EventLoglikGrad g;
    const std::size_t first = (m.mu == 0.0 && !t.empty()) ? 1 : 0;

    for (std::size_t i = first; i < t.size(); ++i) {
        double excitation = 0.0;
        KernelGrad kg_sum;
        for (std::size_t j = 0; j < i; ++j) {
            double tau = t[i] - t[j];
            excitation += kernel_value(m.kernel, tau);
            KernelGrad kg = kernel_value_grad(m.kernel, tau);
            kg_sum.d_kappa += kg.d_kappa;
            kg_sum.d_theta += kg.d_theta;
            kg_sum.d_c += kg.d_c;
        }
        double f = 1.0, lam;
        if (m.family == Family::HawkesN) {
            f = detail::population_factor(m, i);
            lam = f * excitation;
        } else {
            lam = m.mu + excitation;
        }
        if (!(lam > 0.0)) {
            g.finite = false;
            g.value = -std::numeric_limits<double>::infinity();
            return g;
        }
        g.value += std::log(lam);
        if (m.family != Family::HawkesN) g.d_mu += 1.0 / lam;
        g.d_kappa += f * kg_sum.d_kappa / lam;
        g.d_theta += f * kg_sum.d_theta / lam;
        g.d_c += f * kg_sum.d_c / lam;
    }

    if (m.family == Family::HawkesN) {
        for (std::size_t j = 0; j < t.size(); ++j) {
            double seg_start = t[j];
            double seg_end = (j + 1 < t.size()) ? t[j + 1] : T;
            double f = detail::population_factor(m, j + 1);
            if (f == 0.0 || seg_end <= seg_start) continue;
            for (std::size_t i = 0; i <= j; ++i) {
                g.value -= f * kernel_mass(m.kernel, seg_start - t[i], seg_end - t[i]);
                KernelGrad kg = kernel_mass_grad(m.kernel, seg_start - t[i], seg_end - t[i]);
                g.d_kappa -= f * kg.d_kappa;
                g.d_theta -= f * kg.d_theta;
                g.d_c -= f * kg.d_c;
            }
        }
    } else {
        g.value -= m.mu * T;
        g.d_mu -= T;
        for (double ti : t) {
            g.value -= kernel_mass(m.kernel, 0.0, T - ti);
            KernelGrad kg = kernel_mass_grad(m.kernel, 0.0, T - ti);
            g.d_kappa -= kg.d_kappa;
            g.d_theta -= kg.d_theta;
            g.d_c -= kg.d_c;
        }
    }
    return g;
}

} // namespace icth::models
