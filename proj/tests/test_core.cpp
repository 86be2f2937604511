#include "switchstab/systems.hpp"

#include "catch2/catch_amalgamated.hpp"

#include <random>

using namespace switchstab;
using Catch::Approx;

namespace {

Vec v2(double a, double b) { return detail::vec2(a, b); }

}  // namespace

TEST_CASE("mode indices are one-based and range-checked", "[core]") {
    ModeIndex m(3);
    CHECK(m.value() == 3);
    CHECK(m.zero_based() == 2);
    CHECK(m.valid_for(3));
    CHECK_FALSE(m.valid_for(2));
    CHECK_FALSE(ModeIndex(0).valid_for(5));
    CHECK(ModeIndex(1) < ModeIndex(2));
}

TEST_CASE("simplex points enforce nonnegativity and unit sum", "[core]") {
    Vec w(3);
    w << 0.2, 0.3, 0.5;
    SimplexPoint p(w);
    CHECK(p.size() == 3);
    CHECK(p.weight(ModeIndex(3)) == Approx(0.5));
    CHECK_FALSE(p.as_vertex().has_value());

    Vec bad(2);
    bad << 0.7, 0.7;
    CHECK_THROWS_AS(SimplexPoint(bad), ParameterError);
    bad << -0.1, 1.1;
    CHECK_THROWS_AS(SimplexPoint(bad), ParameterError);

    const auto e2 = SimplexPoint::vertex(3, ModeIndex(2));
    REQUIRE(e2.as_vertex().has_value());
    CHECK(*e2.as_vertex() == ModeIndex(2));
    CHECK_THROWS_AS(SimplexPoint::vertex(3, ModeIndex(4)), ParameterError);
    CHECK(SimplexPoint::barycenter(4).weights().sum() == Approx(1.0).margin(1e-15));
}

TEST_CASE("switching signals are right-continuous", "[core]") {
    SwitchingSignal s({0.0, 0.5}, {ModeIndex(1), ModeIndex(2)}, 1.0);
    CHECK(s(0.0) == ModeIndex(1));
    CHECK(s(0.4999) == ModeIndex(1));
    CHECK(s(0.5) == ModeIndex(2));
    CHECK(s(1.0) == ModeIndex(2));
    CHECK_THROWS_AS(s(1.5), DomainError);
    CHECK_THROWS_AS(s(-0.1), DomainError);
    CHECK(s.breakpoints_in(0.0, 1.0) == std::vector<double>{0.5});
    CHECK_THROWS_AS(SwitchingSignal({0.0, 0.0}, {ModeIndex(1), ModeIndex(2)}, 1.0), ParameterError);
    CHECK_THROWS_AS(SwitchingSignal({0.0}, {ModeIndex(1)}, 0.0), ParameterError);

    SwitchingSignal redundant({0.0, 0.3, 0.6}, {ModeIndex(1), ModeIndex(1), ModeIndex(2)}, 1.0);
    CHECK(redundant.canonical().interval_count() == 2);
    const auto r = s.restricted(0.25, 0.75);
    CHECK(r.domain_start() == 0.25);
    CHECK(r.domain_end() == 0.75);
    CHECK(r(0.6) == ModeIndex(2));
}

TEST_CASE("relaxed controls integrate exactly", "[core]") {
    std::vector<SimplexPoint> cells{SimplexPoint::vertex(2, ModeIndex(1)), SimplexPoint::vertex(2, ModeIndex(2)),
                                    SimplexPoint::barycenter(2)};
    RelaxedControl u(0.0, 0.5, cells);
    CHECK(u.t_end() == Approx(1.5));
    CHECK(u.cell_at(0.5) == 1);
    CHECK(u.cell_at(1.5) == 2);
    CHECK(u.integral(ModeIndex(2), 0.0, 1.5) == Approx(0.75));
    CHECK(u.integral(ModeIndex(2), 0.25, 0.75) == Approx(0.25));
    CHECK(u.change_points().size() == 2);
    CHECK_THROWS_AS(u(2.0), DomainError);
}

TEST_CASE("signal_to_control samples cells", "[core]") {
    SECTION("constant signal gives the vertex on every cell") {
        const auto s = SwitchingSignal::constant(ModeIndex(1), 0.0, 1.0);
        const auto u = signal_to_control(s, 2, 0.1);
        for (const auto& c : u.values()) CHECK(c == SimplexPoint::vertex(2, ModeIndex(1)));
    }
    SECTION("two halves at step 0.25") {
        SwitchingSignal s({0.0, 0.5}, {ModeIndex(1), ModeIndex(2)}, 1.0);
        const auto u = signal_to_control(s, 2, 0.25);
        REQUIRE(u.cell_count() == 4);
        CHECK(u.cell(0) == SimplexPoint::vertex(2, ModeIndex(1)));
        CHECK(u.cell(1) == SimplexPoint::vertex(2, ModeIndex(1)));
        CHECK(u.cell(2) == SimplexPoint::vertex(2, ModeIndex(2)));
        CHECK(u.cell(3) == SimplexPoint::vertex(2, ModeIndex(2)));
    }
    SECTION("mode beyond the count is rejected") {
        const auto s = SwitchingSignal::constant(ModeIndex(3), 0.0, 1.0);
        CHECK_THROWS_AS(signal_to_control(s, 2, 0.1), ParameterError);
    }
}

TEST_CASE("active index sets of the half-plane covering", "[core]") {
    const auto e = example4();
    const auto& chi = e.covering;
    CHECK(active_index_set(v2(1, 0), chi) == std::vector<ModeIndex>{ModeIndex(1), ModeIndex(2)});
    CHECK(active_index_set(v2(-1, 0), chi) == std::vector<ModeIndex>{ModeIndex(3)});
    CHECK(active_index_set(v2(0, 5), chi) == std::vector<ModeIndex>{ModeIndex(1), ModeIndex(2), ModeIndex(3)});

    BoundaryFunction never = [](const Vec&) { return -1.0; };
    Covering broken({{never}, {never}});
    CHECK_THROWS_AS(active_index_set(v2(0, 0), broken), CoveringViolation);
}

TEST_CASE("admissible control sets", "[core]") {
    const auto e = example4();
    const auto U = admissible_control_set(v2(1, 0), e.covering);
    CHECK(U.indices() == std::vector<ModeIndex>{ModeIndex(1), ModeIndex(2)});
    Vec half(3);
    half << 0.5, 0.5, 0.0;
    CHECK(U.contains(SimplexPoint(half)));
    CHECK_FALSE(U.contains(SimplexPoint::vertex(3, ModeIndex(3))));

    const auto full = admissible_control_set(v2(3, -2), Covering::trivial(3));
    CHECK(full.indices().size() == 3);
    CHECK(full.contains(SimplexPoint::barycenter(3)));

    // Local nesting: U_zeta is a subset of U_xi near xi = (1, 0).
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> d(-0.49, 0.49);
    for (int k = 0; k < 500; ++k) {
        const Vec zeta = v2(1 + d(rng), d(rng));
        CHECK(admissible_control_set(zeta, e.covering).nested_in(U));
    }
}

TEST_CASE("registry decompositions f = fhat + dferr", "[core][systems]") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> d(-2.0, 2.0);
    std::uniform_real_distribution<double> tt(0.0, 50.0);
    for (const auto& id : registry_ids()) {
        const auto e = make_entry(id);
        const auto& s = e.system;
        REQUIRE(s.dferr);
        REQUIRE(s.fhat);
        double worst = 0.0;
        for (int k = 0; k < 1000; ++k) {
            Vec x(s.n);
            for (int j = 0; j < s.n; ++j) x[j] = d(rng);
            const ModeIndex i(1 + k % s.modes);
            const double t = tt(rng);
            worst = std::max(worst, (s.f(t, x, i) - s.fhat(t, x, i) - s.dferr(t, x, i)).norm());
        }
        INFO(id);
        CHECK(worst <= 1e-10);
    }
}

TEST_CASE("zeroing parts vanish where the output does", "[core][systems]") {
    // dferr_i(t, x) = 0 whenever h_i(t, x) = 0.
    const auto inv = inverter();
    Vec x(4);
    x << 0.3, -1.2, 0.7, 0.0;
    CHECK(inv.system.h(0.0, x, ModeIndex(1)).norm() == 0.0);
    CHECK(inv.system.dferr(0.0, x, ModeIndex(1)).norm() == 0.0);
    const auto mot = motivating(1.0);
    CHECK(mot.system.dferr(0.0, v2(0.0, 0.8), ModeIndex(2)).norm() == 0.0);
}
