#include <catch2/catch.hpp>

#include <cmath>

#include "icth/fit.hpp"

using namespace icth;
using namespace icth::models;
using data::Cascade;
using data::CascadeRecord;

namespace {

ParametricModel hawkes_exp(double mu, double kappa, double theta) {
    ParametricModel m;
    m.family = Family::Hawkes;
    m.mu = mu;
    m.kernel = {KernelKind::Exponential, kappa, theta, 1.0};
    return m;
}

} // namespace

TEST_CASE("fit: Poisson rate recovers the closed-form MLE") {
    auto truth = hawkes_exp(1.0, 0.0, 1.0);
    std::vector<Cascade> cascades;
    std::size_t total_events = 0;
    for (int i = 0; i < 10; ++i) {
        cascades.push_back(simulate(truth, 10.0, 100 + i));
        total_events += cascades.back().n_events();
    }
    double analytic_mle = static_cast<double>(total_events) / 100.0;

    auto init = hawkes_exp(0.3, 0.0, 1.0);  // kappa frozen at 0 -> Poisson mode
    auto res = fit(cascades, Family::Hawkes, init);
    CHECK(res.model.kernel.kappa == 0.0);
    CHECK(res.model.mu == Approx(analytic_mle).epsilon(1e-4));
    CHECK(res.converged);
}

TEST_CASE("fit: exponential Hawkes recovery at reduced scale") {
    auto truth = hawkes_exp(0.0, 0.5, 1.0);
    SimulateOptions opts;
    opts.immigrant_at_zero = true;
    for (int trial = 0; trial < 2; ++trial) {
        std::vector<Cascade> cascades;
        for (int i = 0; i < 120; ++i)
            cascades.push_back(simulate(truth, 20.0, 10000 * (trial + 1) + i, opts));
        auto init = hawkes_exp(0.0, 0.2, 2.5);
        auto res = fit(cascades, Family::Hawkes, init);
        INFO("trial " << trial << " kappa " << res.model.kernel.kappa << " theta "
                      << res.model.kernel.theta);
        CHECK(std::abs(res.model.kernel.kappa - 0.5) / 0.5 < 0.25);
        CHECK(std::abs(res.model.kernel.theta - 1.0) / 1.0 < 0.35);

        // optimality: fitted likelihood at least the truth's likelihood
        double ll_true = 0.0;
        for (const auto& c : cascades) ll_true += event_loglik(truth, c).value;
        CHECK(res.final_ll >= ll_true - 1e-6);
    }
}

TEST_CASE("fit: HawkesN kernel recovery with the population held at init") {
    ParametricModel truth;
    truth.family = Family::HawkesN;
    truth.N = 40;
    truth.kernel = {KernelKind::Exponential, 0.6, 1.2, 1.0};
    SimulateOptions opts;
    opts.immigrant_at_zero = true;
    std::vector<Cascade> cascades;
    for (int i = 0; i < 150; ++i) cascades.push_back(simulate(truth, 25.0, 40000 + i, opts));

    ParametricModel init = truth;
    init.kernel.kappa = 0.3;
    init.kernel.theta = 2.0;
    auto res = fit(cascades, Family::HawkesN, init);
    CHECK(res.model.N == 40);
    CHECK(std::abs(res.model.kernel.kappa - 0.6) / 0.6 < 0.3);
    CHECK(std::abs(res.model.kernel.theta - 1.2) / 1.2 < 0.4);
}

TEST_CASE("fit: non-finite likelihood at init redraws, then errors") {
    // mu frozen at 0 with kappa frozen at 0 can never explain events after
    // the first; every redraw stays infeasible
    auto init = hawkes_exp(0.0, 0.0, 1.0);
    Cascade c;
    c.horizon = 3.0;
    c.records = {CascadeRecord::event(0.0), CascadeRecord::event(1.0)};
    CHECK_THROWS_AS(fit({c}, Family::Hawkes, init), std::runtime_error);
}

TEST_CASE("fit: family/data form mismatches are rejected") {
    Cascade intervals;
    intervals.horizon = 2.0;
    intervals.records = {CascadeRecord::interval(0.0, 2.0, 3)};
    CHECK_THROWS_AS(fit({intervals}, Family::Hawkes, hawkes_exp(1.0, 0.1, 1.0)), std::invalid_argument);

    Cascade events;
    events.horizon = 2.0;
    events.records = {CascadeRecord::event(0.5)};
    auto mbp_init = hawkes_exp(1.0, 0.1, 1.0);
    mbp_init.family = Family::MBP;
    CHECK_THROWS_AS(fit({events}, Family::MBP, mbp_init), std::invalid_argument);
}

TEST_CASE("fit: MBP background rate from interval counts") {
    // Poisson-mode MBP: counts over tiled intervals, kappa frozen at 0.
    std::vector<Cascade> cascades;
    std::mt19937_64 rng(55);
    const double mu_true = 1.4;
    for (int i = 0; i < 20; ++i) {
        Cascade c;
        c.horizon = 8.0;
        double cursor = 0.0;
        while (cursor < c.horizon - 1e-9) {
            double d = std::min(1.0, c.horizon - cursor);
            std::poisson_distribution<int> pois(mu_true * d);
            c.records.push_back(CascadeRecord::interval(cursor, d, pois(rng)));
            cursor += d;
        }
        cascades.push_back(std::move(c));
    }
    double total_count = 0.0, total_dur = 0.0;
    for (const auto& c : cascades)
        for (const auto& r : c.records) {
            total_count += static_cast<double>(r.count);
            total_dur += r.duration;
        }
    auto init = hawkes_exp(0.5, 0.0, 1.0);
    init.family = Family::MBP;
    FitConfig fc;
    fc.max_iterations = 800;
    auto res = fit(cascades, Family::MBP, init, fc);
    CHECK(res.model.mu == Approx(total_count / total_dur).epsilon(2e-3));
}
