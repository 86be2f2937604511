#include "switchstab/systems.hpp"

#include "catch2/catch_amalgamated.hpp"

#include <random>

using namespace switchstab;
using Catch::Approx;

namespace {

StabilityEnvelope synthetic(const std::function<double(std::size_t, std::size_t)>& cell) {
    StabilityEnvelope env;
    env.radius_bins = {0.5, 1.0, 2.0};
    for (int j = 0; j < 11; ++j) env.tau_grid.push_back(5.0 * j);
    env.trials_per_cell = 1;
    for (std::size_t b = 0; b < 3; ++b) {
        std::vector<double> row;
        for (std::size_t j = 0; j < env.tau_grid.size(); ++j) row.push_back(cell(b, j));
        env.beta_table.push_back(row);
    }
    env.early_table = env.beta_table;
    env.late_table = env.beta_table;
    return env;
}

SignalSource constant_source(ModeIndex m) {
    return [m](double t0, double t1, std::uint64_t) { return SwitchingSignal::constant(m, t0, t1); };
}

SignalSource class_source(const SignalClass& c) {
    return [c](double t0, double t1, std::uint64_t seed) { return c.generate(t0, t1, seed); };
}

}  // namespace

TEST_CASE("classification of synthetic envelopes", "[stability]") {
    const std::vector<double> edges{0.5, 1.0, 2.0};
    SECTION("geometric decay is GUAS-consistent") {
        const auto env = synthetic([&](std::size_t b, std::size_t j) { return edges[b] * std::pow(0.5, j); });
        const auto rep = classify(env);
        CHECK(rep.verdict == StabilityVerdict::guas_consistent);
        CHECK(rep.regularization_residual == 0.0);
        CHECK_FALSE(rep.radius_monotonicity_flag);
        for (double r : rep.tail_ratios) CHECK(r <= 0.05);
        CHECK(to_string(rep.verdict) == "GUAS-consistent");
    }
    SECTION("flat rows are US-only") {
        const auto env = synthetic([&](std::size_t b, std::size_t) { return edges[b]; });
        const auto rep = classify(env);
        CHECK(rep.verdict == StabilityVerdict::us_only);
        CHECK(rep.max_gain == Approx(1.0));
    }
    SECTION("an infinite cell is unstable evidence") {
        auto env = synthetic([&](std::size_t b, std::size_t j) { return edges[b] * std::pow(0.5, j); });
        env.beta_table[1][7] = std::numeric_limits<double>::infinity();
        CHECK(classify(env).verdict == StabilityVerdict::unstable_evidence);
    }
    SECTION("large gains are unstable evidence") {
        const auto env = synthetic([&](std::size_t b, std::size_t j) { return edges[b] * std::pow(10.0, j); });
        CHECK(classify(env).verdict == StabilityVerdict::unstable_evidence);
    }
    SECTION("zero rows count as decayed") {
        const auto env = synthetic([](std::size_t, std::size_t) { return 0.0; });
        const auto rep = classify(env);
        CHECK(rep.verdict == StabilityVerdict::guas_consistent);
        for (double r : rep.tail_ratios) CHECK(r == 0.0);
    }
    SECTION("regularization") {
        auto env = synthetic([&](std::size_t b, std::size_t j) { return edges[b] * std::pow(0.5, j); });
        env.beta_table[0][5] = 1.0;  // bump above the earlier columns
        env.beta_table[2][3] = 0.0;  // dip below the bin under it
        const auto reg = regularize(env);
        for (const auto& row : reg.beta_table) {
            for (std::size_t j = 1; j < row.size(); ++j) CHECK(row[j] <= row[j - 1]);
        }
        for (std::size_t j = 0; j < reg.cols(); ++j) {
            CHECK(reg.beta_table[0][j] <= reg.beta_table[1][j]);
            CHECK(reg.beta_table[1][j] <= reg.beta_table[2][j]);
        }
        CHECK(reg.regularization_residual > 0.05);
        CHECK(reg.radius_monotonicity_flag);
    }
    SECTION("invalid thresholds") {
        const auto env = synthetic([](std::size_t, std::size_t) { return 1.0; });
        CHECK_THROWS_AS(classify(env, {0.05, 0.0, 1e3}), ParameterError);
        CHECK_THROWS_AS(classify(StabilityEnvelope{}), InputError);
    }
}

TEST_CASE("envelope estimation", "[stability]") {
    const auto e = motivating(1.0);
    IntegratorConfig integ;
    integ.step = 1e-2;
    EnvelopeConfig cfg;
    cfg.horizon = 20.0;
    cfg.trials = 6;
    cfg.max_offset = 10.0;

    SECTION("conserved norm under mode 1 gives flat rows") {
        const auto env = estimate_envelope(e.system, constant_source(ModeIndex(1)), cfg, integ);
        REQUIRE(env.rows() == 3);
        CHECK(env.cols() == 5);
        for (std::size_t b = 0; b < 3; ++b) {
            CHECK(env.beta_table[b].front() <= env.radius_bins[b]);
            CHECK(env.beta_table[b].back() == Approx(env.beta_table[b].front()).epsilon(1e-6));
        }
        CHECK(classify(env).verdict == StabilityVerdict::us_only);
    }
    SECTION("zero bin") {
        EnvelopeConfig z = cfg;
        z.radius_bins = {0.0};
        const auto env = estimate_envelope(e.system, class_source(e.signal_class), z, integ);
        for (double v : env.beta_table.front()) CHECK(v == 0.0);
    }
    SECTION("reproducible and independent of the worker count") {
        const auto a = estimate_envelope(e.system, class_source(e.signal_class), cfg, integ);
        const auto b = estimate_envelope(e.system, class_source(e.signal_class), cfg, integ);
        EnvelopeConfig par = cfg;
        par.workers = 3;
        const auto c = estimate_envelope(e.system, class_source(e.signal_class), par, integ);
        CHECK(a.beta_table == b.beta_table);
        CHECK(a.beta_table == c.beta_table);
        CHECK(a.early_table == c.early_table);
        EnvelopeConfig other = cfg;
        other.seed = 2;
        CHECK(estimate_envelope(e.system, class_source(e.signal_class), other, integ).beta_table != a.beta_table);
    }
    SECTION("blow-ups become infinite cells") {
        SwitchedSystem grow;
        grow.name = "growth";
        grow.n = 1;
        grow.modes = 1;
        grow.f = [](double, const Vec& x, ModeIndex) -> Vec { return x; };
        grow.h = [](double, const Vec& x, ModeIndex) -> Vec { return x; };
        IntegratorConfig small = integ;
        small.divergence_bound = 100.0;
        EnvelopeConfig g = cfg;
        g.trials = 2;
        const auto env = estimate_envelope(grow, constant_source(ModeIndex(1)), g, small);
        CHECK(env.has_infinity());
        CHECK(env.blow_ups == 6);
        CHECK(classify(env).verdict == StabilityVerdict::unstable_evidence);
    }
    SECTION("invalid configuration") {
        EnvelopeConfig bad = cfg;
        bad.radius_bins = {1.0, 0.5};
        CHECK_THROWS_AS(estimate_envelope(e.system, class_source(e.signal_class), bad, integ), ParameterError);
        bad = cfg;
        bad.trials = 0;
        CHECK_THROWS_AS(estimate_envelope(e.system, class_source(e.signal_class), bad, integ), ParameterError);
    }
}

TEST_CASE("uniform stability check", "[stability]") {
    const std::vector<double> edges{0.01, 0.1, 0.5, 1.0, 2.0};
    SECTION("inverter envelope follows the sandwich bound") {
        InverterOptions o;
        o.L1 = 2.0;
        const auto e = inverter(o);
        const double ratio = std::sqrt(2.0 / 1.0);  // sqrt(lambda_M / lambda_m)
        std::mt19937_64 rng(4);
        std::uniform_real_distribution<double> r(0.002, 2.0);
        std::vector<Trajectory> ens;
        IntegratorConfig integ;
        integ.step = 1e-2;
        for (std::uint64_t k = 0; k < 20; ++k) {
            Vec dir = detail::random_direction(rng, 4);
            const double rad = k < 5 ? 0.005 : r(rng);
            const auto sigma = e.signal_class.generate(0.0, 40.0, k);
            ens.push_back(simulate(e.system, sigma, 0.0, rad * dir, 40.0, integ));
        }
        const auto rep = check_us(ens, edges, 0.02);
        CHECK(rep.pass);
        for (std::size_t b = 0; b < edges.size(); ++b) CHECK(rep.envelope[b] <= ratio * edges[b] + 1e-6);
        CHECK(rep.fitted_gain <= ratio + 1e-6);
        CHECK(rep.to_json()["pass"] == true);
    }
    SECTION("zero ensemble") {
        Trajectory z;
        z.times = {0.0, 1.0};
        z.states = {Vec::Zero(2), Vec::Zero(2)};
        const auto rep = check_us({z, z}, edges, 0.0);
        CHECK(rep.pass);
        for (double v : rep.envelope) CHECK(v == 0.0);
    }
    SECTION("exponential growth fails") {
        SwitchedSystem grow;
        grow.name = "growth";
        grow.n = 1;
        grow.modes = 1;
        grow.f = [](double, const Vec& x, ModeIndex) -> Vec { return x; };
        grow.h = [](double, const Vec& x, ModeIndex) -> Vec { return x; };
        const auto sigma = SwitchingSignal::constant(ModeIndex(1), 0.0, 6.0);
        std::vector<Trajectory> ens{simulate(grow, sigma, 0.0, Vec::Constant(1, 0.005), 6.0, {})};
        const auto rep = check_us(ens, edges, 0.02);
        CHECK_FALSE(rep.pass);
        CHECK(rep.envelope.front() > 1.0);
    }
    SECTION("input validation") {
        CHECK_THROWS_AS(check_us({}, edges, 0.1), InputError);
        Trajectory z;
        z.times = {0.0};
        z.states = {Vec::Zero(1)};
        CHECK_THROWS_AS(check_us({z}, {1.0, 0.5}, 0.1), ParameterError);
    }
}
