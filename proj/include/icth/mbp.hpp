#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "icth/cascade.hpp"
#include "icth/parametric.hpp"

namespace icth::models {

enum class MbpMode {
    Background,      // xi(t) = mu + int_0^t xi(tau) phi(t - tau) dtau
    ImmigrantAtZero  // source is the impulse response phi(t) of an event at 0
};

// xi sampled on a uniform grid, with the cumulative trapezoid integral so the
// compensator is an exact difference (additive to machine precision).
struct MbpGrid {
    double step = 0.0;
    double horizon = 0.0;
    std::vector<double> xi;
    std::vector<double> cum;  // integral of the linear interpolant from 0 to node n

    double node(std::size_t n) const { return static_cast<double>(n) * step; }
};

// Solves the Volterra equation by forward substitution with trapezoidal
// weights: xi_n = (source_n + h * (xi_0 phi_n / 2 + sum_{m=1}^{n-1} xi_m phi_{n-m}))
//                 / (1 - h phi_0 / 2).
inline MbpGrid mbp_xi(const ParametricModel& m, double grid_step, double horizon,
                      MbpMode mode = MbpMode::Background) {
    m.check();
    if (!(grid_step > 0.0)) throw std::invalid_argument("mbp_xi: grid_step must be > 0");
    if (!(horizon > 0.0)) throw std::invalid_argument("mbp_xi: horizon must be > 0");

    const auto n_nodes = static_cast<std::size_t>(std::ceil(horizon / grid_step)) + 1;
    MbpGrid grid;
    grid.step = grid_step;
    grid.horizon = static_cast<double>(n_nodes - 1) * grid_step;
    grid.xi.resize(n_nodes);

    std::vector<double> phi(n_nodes);
    for (std::size_t n = 0; n < n_nodes; ++n) phi[n] = kernel_value(m.kernel, grid.node(n));
    const double denom = 1.0 - 0.5 * grid_step * phi[0];
    if (!(denom > 0.0)) throw std::invalid_argument("mbp_xi: grid_step too large for this kernel");

    auto source = [&](std::size_t n) {
        return mode == MbpMode::Background ? m.mu : phi[n];
    };
    grid.xi[0] = source(0);
    for (std::size_t n = 1; n < n_nodes; ++n) {
        double conv = 0.5 * grid.xi[0] * phi[n];
        for (std::size_t mm = 1; mm < n; ++mm) conv += grid.xi[mm] * phi[n - mm];
        grid.xi[n] = (source(n) + grid_step * conv) / denom;
    }

    grid.cum.resize(n_nodes);
    grid.cum[0] = 0.0;
    for (std::size_t n = 1; n < n_nodes; ++n)
        grid.cum[n] = grid.cum[n - 1] + 0.5 * grid_step * (grid.xi[n - 1] + grid.xi[n]);
    return grid;
}

namespace detail {

// Integral of the piecewise-linear interpolant of xi from 0 to x.
inline double cum_at(const MbpGrid& g, double x) {
    if (x <= 0.0) return 0.0;
    auto idx = static_cast<std::size_t>(std::floor(x / g.step));
    if (idx >= g.xi.size() - 1) return g.cum.back();
    double frac = x - g.node(idx);
    double xi_x = g.xi[idx] + (g.xi[idx + 1] - g.xi[idx]) * (frac / g.step);
    return g.cum[idx] + 0.5 * frac * (g.xi[idx] + xi_x);
}

} // namespace detail

// Expected event count Xi(a, b) = int_a^b xi; exact difference of the
// cumulative integral, so Xi(a,b) + Xi(b,c) == Xi(a,c).
inline double mbp_compensator(const MbpGrid& grid, double a, double b) {
    const double eps = 1e-9 * (1.0 + grid.horizon);
    if (!(a >= -eps) || a > b || b > grid.horizon + eps)
        throw std::invalid_argument("mbp_compensator: interval outside grid");
    return detail::cum_at(grid, b) - detail::cum_at(grid, a);
}

// Samples the (deterministic-intensity) MBP as an inhomogeneous Poisson
// process by thinning against the piecewise-linear grid interpolant of xi,
// with a per-cell upper bound; exact w.r.t. the interpolant.
inline data::Cascade simulate_mbp(const ParametricModel& m, double horizon, std::uint64_t seed,
                                  double grid_step = 0.0, MbpMode mode = MbpMode::Background,
                                  std::string id = {}) {
    if (!(horizon > 0.0)) throw std::invalid_argument("simulate_mbp: horizon must be > 0");
    MbpGrid grid = mbp_xi(m, grid_step > 0.0 ? grid_step : horizon / 2048.0, horizon, mode);
    std::mt19937_64 rng = make_rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    data::Cascade cascade;
    cascade.id = std::move(id);
    cascade.horizon = horizon;
    for (std::size_t cell = 0; cell + 1 < grid.xi.size(); ++cell) {
        double lo = grid.node(cell);
        double hi = std::min(grid.node(cell + 1), horizon);
        if (hi <= lo) break;
        double bound = std::max(grid.xi[cell], grid.xi[cell + 1]);
        if (!(bound > 0.0)) continue;
        double t = lo;
        for (;;) {
            t += -std::log(1.0 - unif(rng)) / bound;
            if (t >= hi) break;
            double frac = (t - lo) / grid.step;
            double xi_t = grid.xi[cell] + (grid.xi[cell + 1] - grid.xi[cell]) * frac;
            if (unif(rng) * bound <= xi_t) cascade.records.push_back(data::CascadeRecord::event(t));
        }
    }
    return cascade;
}

struct MbpLoglikOptions {
    double grid_step = 0.0;  // 0 -> horizon / 2048
    MbpMode mode = MbpMode::Background;
};

// Interval-censored log-likelihood sum_i c_i log Xi_i - sum_i Xi_i over a
// cascade of censored intervals tiling [0, T].
inline double mbp_ic_loglik(const ParametricModel& m, const data::Cascade& cascade,
                            MbpLoglikOptions opts = {}) {
    m.check();
    const double eps = data::tiling_eps(cascade.horizon);
    double cursor = 0.0;
    if (cascade.records.empty()) throw std::invalid_argument("mbp_ic_loglik: empty cascade");
    for (const auto& r : cascade.records) {
        if (r.is_event()) throw std::invalid_argument("mbp_ic_loglik: PointEvents present; use event or IC-TH paths");
        if (std::abs(r.time - cursor) > eps)
            throw std::invalid_argument("mbp_ic_loglik: intervals must tile [0, T]");
        cursor = r.end();
    }
    if (std::abs(cursor - cascade.horizon) > eps)
        throw std::invalid_argument("mbp_ic_loglik: intervals must tile [0, T]");

    double step = opts.grid_step > 0.0 ? opts.grid_step : cascade.horizon / 2048.0;
    MbpGrid grid = mbp_xi(m, step, cascade.horizon, opts.mode);

    double ll = 0.0;
    for (const auto& r : cascade.records) {
        double xi_ab = mbp_compensator(grid, r.time, std::min(r.end(), grid.horizon));
        if (r.count > 0) ll += static_cast<double>(r.count) * std::log(std::max(xi_ab, 1e-12));
        ll -= xi_ab;
    }
    return ll;
}

} // namespace icth::models
