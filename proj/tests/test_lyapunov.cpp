#include "switchstab/systems.hpp"

#include "catch2/catch_amalgamated.hpp"

#include <random>

using namespace switchstab;
using Catch::Approx;

namespace {

Vec v2(double a, double b) { return detail::vec2(a, b); }

}  // namespace

TEST_CASE("sandwich bounds", "[lyapunov]") {
    const auto inv = inverter();
    const auto box = SampleBox::cube(4, 2.0);
    const auto rep = check_sandwich(inv.certificate, box, inv.covering, 7);
    CHECK(rep.pass);
    CHECK(rep.evaluated > 1000);

    auto shrunk = inv.certificate;
    shrunk.phi2 = detail::quadratic(0.25);  // lambda_M / 2
    const auto bad = check_sandwich(shrunk, box, inv.covering, 7);
    CHECK_FALSE(bad.pass);
    CHECK(bad.worst_margin < 0.0);

    for (const auto& id : registry_ids()) {
        const auto e = make_entry(id);
        for (int i = 1; i <= e.system.modes; ++i) {
            CHECK(e.certificate.V(0.7, Vec::Zero(e.system.n), ModeIndex(i)) == 0.0);
        }
        INFO(id);
        CHECK(check_sandwich(e.certificate, SampleBox::cube(e.system.n, 2.0), e.covering, e.system.n > 2 ? 5 : 21).pass);
    }
}

TEST_CASE("decrease along motivating trajectories", "[lyapunov]") {
    const auto e = motivating(1.0);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto sigma = e.signal_class.generate(0.0, 20.0, seed);
        const auto tr = simulate(e.system, sigma, 0.0, v2(0.8, -0.4), 20.0, {});
        const auto rep = check_decrease_along(e.certificate, tr, sigma);
        INFO("seed " << seed);
        CHECK(rep.pass());
        CHECK(rep.slope.slack > 0.0);
    }
    const auto flipped = motivating(1.0, {1.0, 0.2, ModeIndex(2)}, true);
    const auto sigma = flipped.signal_class.generate(0.0, 5.0, 1);
    const auto tr = simulate(flipped.system, sigma, 0.0, v2(0.8, -0.4), 5.0, {});
    const auto rep = check_decrease_along(flipped.certificate, tr, sigma);
    CHECK_FALSE(rep.pass());
    CHECK(rep.slope.violations > 0);
}

TEST_CASE("mode 3 of example 4 conserves V3", "[lyapunov]") {
    const auto e = example4();
    // Symbolic identity: grad V3 . f3 = (10a - 6b)(-3a + 5b) + (-6a + 10b)(-5a + 3b) = 0.
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(-3.0, 3.0);
    for (int k = 0; k < 200; ++k) {
        const Vec x = v2(d(rng), d(rng));
        const Vec g = e.certificate.grad(0.0, x, ModeIndex(3));
        CHECK(std::abs(g.dot(e.system.f(0.0, x, ModeIndex(3)))) <= 1e-10 * std::max(1.0, x.squaredNorm()));
    }
    CHECK(e.certificate.V(0.0, v2(1, 1), ModeIndex(3)) == Approx(4.0));

    const auto sigma = SwitchingSignal::constant(ModeIndex(3), 0.0, 0.2);
    const auto tr = simulate(e.system, sigma, 0.0, v2(-1.0, 0.2), 0.2, {});
    const auto rep = check_decrease_along(e.certificate, tr, sigma);
    CHECK(rep.pass());
    const double v0 = e.certificate.V(0.0, tr.states.front(), ModeIndex(3));
    for (std::size_t k = 0; k < tr.size(); ++k) {
        CHECK(e.certificate.V(tr.times[k], tr.states[k], ModeIndex(3)) == Approx(v0).epsilon(1e-9));
    }
}

TEST_CASE("decrease check input validation", "[lyapunov]") {
    const auto e = motivating(1.0);
    const auto sigma = SwitchingSignal::constant(ModeIndex(1), 0.0, 2.0);
    const auto tr = simulate(e.system, sigma, 0.0, v2(1, 0), 2.0, {});
    const auto other = SwitchingSignal::constant(ModeIndex(2), 0.0, 2.0);
    CHECK_THROWS_AS(check_decrease_along(e.certificate, tr, other), InputError);
    CHECK_THROWS_AS(check_decrease_along(e.certificate, tr, sigma.restricted(0.0, 1.0)), InputError);
}

TEST_CASE("revisit condition catches growth between visits", "[lyapunov]") {
    // V increases during mode 2 under the flipped system; the next mode-1 visit
    // then sits above its earlier value.
    const auto f = motivating(1.0, {1.0, 0.2, ModeIndex(2)}, true);
    SwitchingSignal s({0.0, 1.0, 3.0}, {ModeIndex(1), ModeIndex(2), ModeIndex(1)}, 4.0);
    const auto tr = simulate(f.system, s, 0.0, v2(1.0, 0.0), 4.0, {});
    const auto rep = check_decrease_along(f.certificate, tr, s);
    CHECK_FALSE(rep.revisit.pass);
}

TEST_CASE("integral bound", "[lyapunov]") {
    const auto e = motivating(1.0);
    auto params = *e.integral_bound;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto sigma = e.signal_class.generate(0.0, 30.0, seed);
        const Vec x0 = v2(0.9, 0.3);
        const auto tr = simulate(e.system, sigma, 0.0, x0, 30.0, {});
        params.M = e.certificate.V(0.0, x0, sigma(0.0));
        params.mu = 0.0;
        const auto rep = check_integral_bound(tr, sigma, e.system, params);
        INFO("seed " << seed);
        CHECK(rep.pass);
        CHECK(rep.worst_margin >= 0.0);
    }
    const auto sigma = SwitchingSignal::constant(ModeIndex(2), 0.0, 5.0);
    const auto tr = simulate(e.system, sigma, 0.0, v2(0.9, 0.3), 5.0, {});
    params.M = 0.0;
    CHECK_FALSE(check_integral_bound(tr, sigma, e.system, params).pass);

    const auto zero = simulate(e.system, sigma, 0.0, Vec::Zero(2), 5.0, {});
    const auto z = check_integral_bound(zero, sigma, e.system, params);
    CHECK(z.pass);
    CHECK(z.worst_margin == 0.0);

    params.M = -1.0;
    CHECK_THROWS_AS(check_integral_bound(tr, sigma, e.system, params), ParameterError);
}

TEST_CASE("certificate validation and gradients", "[lyapunov]") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> d;
    for (const auto& id : registry_ids()) {
        const auto e = make_entry(id);
        CHECK_NOTHROW(e.certificate.validate());
        std::vector<Vec> pts;
        for (int k = 0; k < 100; ++k) {
            Vec x(e.system.n);
            for (int j = 0; j < e.system.n; ++j) x[j] = d(rng);
            pts.push_back(x);
        }
        for (int i = 1; i <= e.system.modes; ++i) {
            INFO(id << " mode " << i);
            CHECK(gradient_consistency(e.certificate, pts, 0.3, ModeIndex(i)) <= 1e-5);
        }
    }
    LyapunovCertificate bad = motivating(1.0).certificate;
    bad.phi1 = [](double s) { return -s; };
    CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("reports serialize", "[lyapunov]") {
    const auto inv = inverter();
    const auto rep = check_sandwich(inv.certificate, SampleBox::cube(4, 1.0), inv.covering, 3);
    const auto j = rep.to_json();
    CHECK(j["check"] == "sandwich");
    CHECK(j["pass"] == true);
    CHECK(j.contains("worst_location"));
    CHECK(j.contains("slack"));
}
