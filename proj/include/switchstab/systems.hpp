#pragma once

// Registry of the worked example systems with certificates, coverings,
// signal classes and reduced limiting systems.

#include "switchstab/core.hpp"
#include "switchstab/integrate.hpp"
#include "switchstab/limiting.hpp"
#include "switchstab/lyapunov.hpp"
#include "switchstab/signals.hpp"
#include "switchstab/stability.hpp"

#include "json.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace switchstab {

/// Switching-signal class descriptor with a generator.
struct SignalClass {
    enum class Kind { arbitrary, measure, pattern, closed_loop };

    Kind kind = Kind::arbitrary;
    int modes = 1;
    double mean_dwell = 1.0;
    MeasureConstraint measure;
    PatternConstraint pattern;

    static SignalClass arbitrary(int modes, double mean_dwell) {
        SignalClass c;
        c.kind = Kind::arbitrary;
        c.modes = modes;
        c.mean_dwell = mean_dwell;
        return c;
    }
    static SignalClass measure_class(int modes, MeasureConstraint m) {
        m.validate();
        SignalClass c;
        c.kind = Kind::measure;
        c.modes = modes;
        c.measure = m;
        return c;
    }
    static SignalClass pattern_class(PatternConstraint p) {
        p.validate();
        SignalClass c;
        c.kind = Kind::pattern;
        c.modes = 2;
        c.pattern = p;
        return c;
    }
    static SignalClass closed_loop(int modes, double mean_dwell) {
        SignalClass c;
        c.kind = Kind::closed_loop;
        c.modes = modes;
        c.mean_dwell = mean_dwell;
        return c;
    }

    std::string kind_name() const {
        switch (kind) {
            case Kind::measure: return "measure";
            case Kind::pattern: return "pattern";
            case Kind::closed_loop: return "closed_loop";
            default: return "arbitrary";
        }
    }

    /// Open-loop member of the class over [t0, t1]. Closed-loop classes have no open-loop generator.
    SwitchingSignal generate(double t0, double t1, std::uint64_t seed) const {
        switch (kind) {
            case Kind::arbitrary: return gen_arbitrary(modes, t0, t1, mean_dwell, seed);
            case Kind::measure: return gen_measure_constrained(measure, modes, t0, t1, seed);
            case Kind::pattern: return gen_pattern(pattern, t0, t1, seed);
            default: throw UnsupportedError("closed-loop class signals come from a covering policy");
        }
    }

    /// Membership check for open-loop classes (arbitrary always passes).
    bool contains(const SwitchingSignal& sigma) const {
        switch (kind) {
            case Kind::measure: return validate_measure(sigma, measure).pass;
            case Kind::pattern: return validate_pattern(sigma, pattern).pass;
            default: return sigma.max_mode() <= modes;
        }
    }

    ControlClassConstraint control_constraint() const {
        switch (kind) {
            case Kind::measure:
                return ControlClassConstraint::integral_lower_bound(measure.mode, measure.T0, measure.delta0);
            case Kind::pattern: return ControlClassConstraint::pattern_class(pattern.T, pattern.dm, pattern.dM);
            default: return ControlClassConstraint::none();
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json j = {{"kind", kind_name()}, {"modes", modes}};
        if (kind == Kind::arbitrary || kind == Kind::closed_loop) j["mean_dwell"] = mean_dwell;
        if (kind == Kind::measure) {
            j["T0"] = measure.T0;
            j["delta0"] = measure.delta0;
            j["mode"] = measure.mode.value();
        }
        if (kind == Kind::pattern) {
            j["T"] = pattern.T;
            j["dm"] = pattern.dm;
            j["dM"] = pattern.dM;
        }
        return j;
    }
};

/// Builds a closed-loop policy for one trial from a seed and a time span.
using PolicyFactory = std::function<CoveringPolicy(std::uint64_t seed, double t0, double t1)>;

struct RegistryEntry {
    std::string id;
    nlohmann::json params;
    SwitchedSystem system;
    LyapunovCertificate certificate;
    Covering covering = Covering::trivial(1);
    SignalClass signal_class;
    ReducedLimitingSystem reduced;
    StabilityVerdict expected_verdict = StabilityVerdict::guas_consistent;
    /// Gauge for the integral-bound check; M is set per trajectory.
    std::optional<IntegralBoundParams> integral_bound;
    PolicyFactory policy;

    nlohmann::json descriptor() const {
        return {{"id", id},
                {"n", system.n},
                {"modes", system.modes},
                {"params", params},
                {"signal_class", signal_class.to_json()},
                {"reduced_constraints",
                 [this] {
                     nlohmann::json a = nlohmann::json::array();
                     for (const auto& c : reduced.constraints) a.push_back(c.to_json());
                     return a;
                 }()},
                {"expected_verdict", to_string(expected_verdict)}};
    }
};

namespace detail {

inline Vec vec2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

inline Vec scalar(double a) { return Vec::Constant(1, a); }

inline ClassK quadratic(double c) {
    return [c](double s) { return c * s * s; };
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Motivating example
// ---------------------------------------------------------------------------

/// f1 = (xi2, -xi1), f2 = (-cbrt(xi1) + a xi2, -a xi1), h = (0, |xi1|).
/// `flipped` negates both fields, which breaks the decrease certificate.
inline RegistryEntry motivating(double a, MeasureConstraint m = {1.0, 0.2, ModeIndex(2)}, bool flipped = false) {
    if (!(a > 0.0) || !std::isfinite(a)) throw ParameterError("motivating example needs a > 0");
    m.validate();
    if (m.mode != ModeIndex(2)) throw ParameterError("motivating example constrains mode 2");
    const double sgn = flipped ? -1.0 : 1.0;
    RegistryEntry e;
    e.id = "motivating";
    e.params = {{"a", a}, {"flipped", flipped}};
    auto& s = e.system;
    s.name = "motivating";
    s.n = 2;
    s.modes = 2;
    s.outputs = 1;
    s.time_invariant_limits = true;
    s.f = [a, sgn](double, const Vec& x, ModeIndex i) -> Vec {
        if (i.value() == 1) return sgn * detail::vec2(x[1], -x[0]);
        return sgn * detail::vec2(-std::cbrt(x[0]) + a * x[1], -a * x[0]);
    };
    s.h = [](double, const Vec& x, ModeIndex i) -> Vec {
        return detail::scalar(i.value() == 1 ? 0.0 : std::abs(x[0]));
    };
    s.fhat = [a, sgn](double, const Vec& x, ModeIndex i) -> Vec {
        if (i.value() == 1) return sgn * detail::vec2(x[1], -x[0]);
        return sgn * detail::vec2(a * x[1], 0.0);
    };
    s.dferr = [a, sgn](double, const Vec& x, ModeIndex i) -> Vec {
        if (i.value() == 1) return Vec::Zero(2);
        return sgn * detail::vec2(-std::cbrt(x[0]), -a * x[0]);
    };
    e.certificate.V = [](double, const Vec& x, ModeIndex) { return 0.5 * x.squaredNorm(); };
    e.certificate.grad = [](double, const Vec& x, ModeIndex) -> Vec { return x; };
    e.certificate.phi1 = detail::quadratic(0.5);
    e.certificate.phi2 = detail::quadratic(0.5);
    e.certificate.eta = [](double, const Vec& x, ModeIndex i) {
        return i.value() == 1 ? 0.0 : std::pow(std::abs(x[0]), 4.0 / 3.0);
    };
    e.covering = Covering::trivial(2);
    e.signal_class = SignalClass::measure_class(2, m);
    e.integral_bound = IntegralBoundParams{[](double v) { return std::pow(v, 4.0 / 3.0); }, 0.0, 0.0};
    e.reduced = build_reduced(s, e.covering, {e.signal_class.control_constraint()}, LimitSpec::time_invariant());
    e.reduced.name = "motivating_reduced";
    return e;
}

// ---------------------------------------------------------------------------
// Example 1: three modes, arbitrary switching
// ---------------------------------------------------------------------------

/// Gain g_i(t, xi).
using Gain = std::function<double(double t, const Vec& xi)>;

struct Example1Options {
    Gain g1 = [](double t, const Vec&) { return std::sin(t); };
    Gain g2 = [](double t, const Vec&) { return std::sin(t); };
    double mean_dwell = 1.0;
    /// Shift used for the constant-shift surrogate of the limiting gains.
    double limit_shift = 1000.0;
    std::string gain_label = "sin";
};

inline RegistryEntry example1(Example1Options o = {}) {
    if (!o.g1 || !o.g2) throw ParameterError("example1 needs both gains");
    if (!(o.mean_dwell > 0.0)) throw ParameterError("example1 mean dwell must be positive");
    RegistryEntry e;
    e.id = "example1";
    e.params = {{"g", o.gain_label}, {"mean_dwell", o.mean_dwell}, {"limit_shift", o.limit_shift}};
    auto& s = e.system;
    s.name = "example1";
    s.n = 2;
    s.modes = 3;
    s.outputs = 1;
    s.time_invariant_limits = false;
    const Gain g1 = o.g1;
    const Gain g2 = o.g2;
    s.f = [g1, g2](double t, const Vec& x, ModeIndex i) -> Vec {
        switch (i.value()) {
            case 1: {
                const double g = g1(t, x);
                return detail::vec2(-g * x[1], g * x[0] - x[1]);
            }
            case 2: {
                const double g = g2(t, x);
                return detail::vec2(g * x[1] - x[0], -g * x[0]);
            }
            default: {
                const double g = g2(t, x);
                return detail::vec2(2.0 * g * x[1] - x[0], -2.0 * g * x[0]);
            }
        }
    };
    s.h = [](double, const Vec& x, ModeIndex i) -> Vec {
        return detail::scalar(i.value() == 1 ? x[1] * x[1] : x[0] * x[0]);
    };
    // fhat_1 = (0, g1(t, xi1 e1) xi1), fhat_2 = (g2(t, xi2 e2) xi2, 0), fhat_3 = 2 fhat_2.
    auto fhat = [g1, g2](double t, const Vec& x, ModeIndex i) -> Vec {
        if (i.value() == 1) return detail::vec2(0.0, g1(t, detail::vec2(x[0], 0.0)) * x[0]);
        const double c = i.value() == 2 ? 1.0 : 2.0;
        return detail::vec2(c * g2(t, detail::vec2(0.0, x[1])) * x[1], 0.0);
    };
    s.fhat = fhat;
    s.dferr = [f = s.f, fhat](double t, const Vec& x, ModeIndex i) -> Vec { return f(t, x, i) - fhat(t, x, i); };
    e.certificate.V = [](double, const Vec& x, ModeIndex) { return 0.5 * x.squaredNorm(); };
    e.certificate.grad = [](double, const Vec& x, ModeIndex) -> Vec { return x; };
    e.certificate.phi1 = detail::quadratic(0.5);
    e.certificate.phi2 = detail::quadratic(0.5);
    e.certificate.eta = [](double, const Vec& x, ModeIndex i) { return i.value() == 1 ? x[1] * x[1] : x[0] * x[0]; };
    e.covering = Covering::trivial(3);
    e.signal_class = SignalClass::arbitrary(3, o.mean_dwell);
    e.integral_bound = IntegralBoundParams{[](double v) { return v; }, 0.0, 0.0};
    const double shift = o.limit_shift;
    auto fhat_gamma = [fhat, shift](double t, const Vec& x, ModeIndex i) -> Vec { return fhat(t + shift, x, i); };
    e.reduced = build_reduced(s, e.covering, {ControlClassConstraint::none()}, LimitSpec::user_supplied(fhat_gamma));
    e.reduced.name = "example1_reduced";
    return e;
}

// ---------------------------------------------------------------------------
// Example 4: half-plane covering, closed loop
// ---------------------------------------------------------------------------

struct Example4Options {
    std::function<double(double)> b1 = [](double t) { return 1.0 + 0.5 * std::sin(t); };
    std::function<double(double)> b2 = [](double t) { return 1.0 + std::cos(t); };
    std::function<double(double, double)> alpha1 = [](double, double v) { return v; };
    std::function<double(double, double)> alpha2 = [](double, double v) { return v; };
    std::function<double(double)> rho1 = [](double v) { return v * v; };
    std::function<double(double)> rho2 = [](double v) { return v * v; };
    /// Mean dwell of the random interior choice between modes 1 and 2.
    double mean_dwell = 1.0;
    double limit_shift = 1000.0;
    std::string label = "default";
};

namespace detail {

/// Sampled check of rho(v) <= v alpha(t, v) and rho(v) > 0 for v != 0.
inline void check_gauge_pair(const std::function<double(double)>& rho, const std::function<double(double, double)>& g,
                             const char* what) {
    for (double t : {0.0, 0.7, 1.9, 3.3, 5.1, 11.0}) {
        for (double v : {-3.0, -1.0, -0.3, -1e-3, 1e-3, 0.3, 1.0, 3.0}) {
            const double r = rho(v);
            if (!(r > 0.0) || r > v * g(t, v) + 1e-12 * std::max(1.0, std::abs(r))) {
                throw ParameterError(std::string(what) + " violates rho(v) <= v g(t, v) or positivity");
            }
        }
    }
}

}  // namespace detail

inline RegistryEntry example4(Example4Options o = {}) {
    if (!o.b1 || !o.b2 || !o.alpha1 || !o.alpha2 || !o.rho1 || !o.rho2) {
        throw ParameterError("example4 needs b1, b2, alpha1, alpha2, rho1, rho2");
    }
    detail::check_gauge_pair(o.rho1, o.alpha1, "example4 alpha1");
    detail::check_gauge_pair(o.rho2, o.alpha2, "example4 alpha2");
    RegistryEntry e;
    e.id = "example4";
    e.params = {{"callables", o.label}, {"mean_dwell", o.mean_dwell}, {"limit_shift", o.limit_shift}};
    auto& s = e.system;
    s.name = "example4";
    s.n = 2;
    s.modes = 3;
    s.outputs = 1;
    s.time_invariant_limits = false;
    const auto b1 = o.b1;
    const auto b2 = o.b2;
    const auto a1 = o.alpha1;
    const auto a2 = o.alpha2;
    const auto r1 = o.rho1;
    const auto r2 = o.rho2;
    s.f = [b1, b2, a1, a2](double t, const Vec& x, ModeIndex i) -> Vec {
        switch (i.value()) {
            case 1: return detail::vec2(b1(t) * x[1], -b1(t) * x[0] - a1(t, x[1]));
            case 2: return detail::vec2(-a2(t, x[0]) - b2(t) * x[1], b2(t) * x[0]);
            default: return detail::vec2(-3.0 * x[0] + 5.0 * x[1], -5.0 * x[0] + 3.0 * x[1]);
        }
    };
    s.h = [r1, r2](double, const Vec& x, ModeIndex i) -> Vec {
        switch (i.value()) {
            case 1: return detail::scalar(r1(x[1]));
            case 2: return detail::scalar(r2(x[0]));
            default: return detail::scalar(0.0);
        }
    };
    auto fhat_at = [b1, b2](double t, const Vec& x, ModeIndex i) -> Vec {
        switch (i.value()) {
            case 1: return detail::vec2(0.0, -b1(t) * x[0]);
            case 2: return detail::vec2(-b2(t) * x[1], 0.0);
            default: return detail::vec2(-3.0 * x[0] + 5.0 * x[1], -5.0 * x[0] + 3.0 * x[1]);
        }
    };
    s.fhat = fhat_at;
    s.dferr = [b1, b2, a1, a2](double t, const Vec& x, ModeIndex i) -> Vec {
        switch (i.value()) {
            case 1: return detail::vec2(b1(t) * x[1], -a1(t, x[1]));
            case 2: return detail::vec2(-a2(t, x[0]), b2(t) * x[0]);
            default: return Vec::Zero(2);
        }
    };
    e.certificate.V = [](double, const Vec& x, ModeIndex i) {
        if (i.value() == 3) return 5.0 * x[0] * x[0] - 6.0 * x[0] * x[1] + 5.0 * x[1] * x[1];
        return 5.0 * x.squaredNorm();
    };
    e.certificate.grad = [](double, const Vec& x, ModeIndex i) -> Vec {
        if (i.value() == 3) return detail::vec2(10.0 * x[0] - 6.0 * x[1], -6.0 * x[0] + 10.0 * x[1]);
        return 10.0 * x;
    };
    // Eigenvalues of [[5,-3],[-3,5]] are 2 and 8.
    e.certificate.phi1 = detail::quadratic(2.0);
    e.certificate.phi2 = detail::quadratic(8.0);
    e.certificate.eta = [r1, r2](double, const Vec& x, ModeIndex i) {
        switch (i.value()) {
            case 1: return r1(x[1]);
            case 2: return r2(x[0]);
            default: return 0.0;
        }
    };
    BoundaryFunction right = [](const Vec& x) { return x[0]; };
    BoundaryFunction left = [](const Vec& x) { return -x[0]; };
    e.covering = Covering({{right}, {right}, {left}});
    e.signal_class = SignalClass::closed_loop(3, o.mean_dwell);
    e.integral_bound = IntegralBoundParams{[](double v) { return v; }, 0.0, 0.0};
    const double mean = o.mean_dwell;
    e.policy = [mean](std::uint64_t seed, double t0, double t1) -> CoveringPolicy {
        auto interior = std::make_shared<SwitchingSignal>(gen_arbitrary(2, t0, t1, mean, seed));
        return [interior](double t, const Vec& x, const std::vector<ModeIndex>& active) {
            const bool has3 = std::find(active.begin(), active.end(), ModeIndex(3)) != active.end();
            const bool has1 = std::find(active.begin(), active.end(), ModeIndex(1)) != active.end();
            if (has3 && !has1) return ModeIndex(3);
            if (has3 && has1) return x[1] < 0.0 ? ModeIndex(3) : ModeIndex(1);
            const double tt = std::min(std::max(t, interior->domain_start()), interior->domain_end());
            return (*interior)(tt);
        };
    };
    const double shift = o.limit_shift;
    auto fhat_gamma = [fhat_at, shift](double t, const Vec& x, ModeIndex i) -> Vec { return fhat_at(t + shift, x, i); };
    e.reduced = build_reduced(s, e.covering, {ControlClassConstraint::none()}, LimitSpec::user_supplied(fhat_gamma));
    e.reduced.name = "example4_reduced";
    return e;
}

// ---------------------------------------------------------------------------
// Semi-quasi-Z-source inverter
// ---------------------------------------------------------------------------

struct InverterOptions {
    double L1 = 1.0;
    double L2 = 1.0;
    double C1 = 1.0;
    double C2 = 1.0;
    std::function<double(double, double)> g1 = [](double, double v) { return v; };
    std::function<double(double, double)> g2 = [](double, double v) { return v; };
    std::function<double(double)> ell1 = [](double v) { return v * v; };
    std::function<double(double)> ell2 = [](double v) { return v * v; };
    PatternConstraint pattern{10.0, 0.5, 2.0};
    std::string label = "linear";
};

namespace detail {

inline Mat inverter_core(int mode, bool reduced) {
    Mat M = Mat::Zero(4, 4);
    if (mode == 1) {
        M(1, 2) = 1.0;
        M(1, 3) = reduced ? 0.0 : 1.0;
        M(2, 1) = -1.0;
        M(3, 1) = -1.0;
    } else {
        M(0, 2) = -1.0;
        M(1, 3) = reduced ? 0.0 : 1.0;
        M(2, 0) = 1.0;
        M(3, 1) = -1.0;
    }
    return M;
}

}  // namespace detail

inline RegistryEntry inverter(InverterOptions o = {}) {
    for (double p : {o.L1, o.L2, o.C1, o.C2}) {
        if (!(p > 0.0) || !std::isfinite(p)) throw ParameterError("inverter parameters must be positive");
    }
    o.pattern.validate();
    const double limit = std::numbers::pi * std::sqrt(o.L1 * o.C1);
    if (!(o.pattern.dM < limit)) {
        throw ParameterError("inverter class needs dM < pi sqrt(L1 C1) = " + std::to_string(limit));
    }
    if (!o.g1 || !o.g2 || !o.ell1 || !o.ell2) throw ParameterError("inverter needs g1, g2, ell1, ell2");
    detail::check_gauge_pair(o.ell1, o.g1, "inverter load g1");
    detail::check_gauge_pair(o.ell2, o.g2, "inverter load g2");

    RegistryEntry e;
    e.id = "inverter";
    e.params = {{"L1", o.L1}, {"L2", o.L2}, {"C1", o.C1}, {"C2", o.C2}, {"load", o.label}};
    const Vec pdiag = (Vec(4) << o.L1, o.L2, o.C1, o.C2).finished();
    const Mat Pinv = pdiag.cwiseInverse().asDiagonal();
    const Mat A1 = Pinv * detail::inverter_core(1, false);
    const Mat A2 = Pinv * detail::inverter_core(2, false);
    const Mat Ah1 = Pinv * detail::inverter_core(1, true);
    const Mat Ah2 = Pinv * detail::inverter_core(2, true);
    const double C2 = o.C2;
    const auto g1 = o.g1;
    const auto g2 = o.g2;
    const auto l1 = o.ell1;
    const auto l2 = o.ell2;

    auto& s = e.system;
    s.name = "inverter";
    s.n = 4;
    s.modes = 2;
    s.outputs = 1;
    s.time_invariant_limits = true;
    s.f = [A1, A2, g1, g2](double t, const Vec& x, ModeIndex i) -> Vec {
        Vec v = (i.value() == 1 ? A1 : A2) * x;
        v[3] -= (i.value() == 1 ? g1 : g2)(t, x[3]);
        return v;
    };
    s.h = [C2, l1, l2](double, const Vec& x, ModeIndex i) -> Vec {
        return detail::scalar(C2 * (i.value() == 1 ? l1 : l2)(x[3]));
    };
    s.fhat = [Ah1, Ah2](double, const Vec& x, ModeIndex i) -> Vec { return (i.value() == 1 ? Ah1 : Ah2) * x; };
    // f - fhat = (A_i - Ahat_i) xi - e4 g_i = (0, xi4 / L2, 0, 0) - e4 g_i.
    const double L2 = o.L2;
    s.dferr = [g1, g2, L2](double t, const Vec& x, ModeIndex i) -> Vec {
        Vec v = Vec::Zero(4);
        v[1] = x[3] / L2;
        v[3] = -(i.value() == 1 ? g1 : g2)(t, x[3]);
        return v;
    };
    const double lm = 0.5 * pdiag.minCoeff();
    const double lM = 0.5 * pdiag.maxCoeff();
    e.certificate.V = [pdiag](double, const Vec& x, ModeIndex) { return 0.5 * x.dot(pdiag.cwiseProduct(x)); };
    e.certificate.grad = [pdiag](double, const Vec& x, ModeIndex) -> Vec { return pdiag.cwiseProduct(x); };
    e.certificate.phi1 = detail::quadratic(lm);
    e.certificate.phi2 = detail::quadratic(lM);
    e.certificate.eta = [C2, l1, l2](double, const Vec& x, ModeIndex i) {
        return C2 * (i.value() == 1 ? l1 : l2)(x[3]);
    };
    e.covering = Covering::trivial(2);
    e.signal_class = SignalClass::pattern_class(o.pattern);
    e.integral_bound = IntegralBoundParams{[](double v) { return v; }, 0.0, 0.0};
    e.reduced = build_reduced(s, e.covering, {e.signal_class.control_constraint()}, LimitSpec::time_invariant());
    e.reduced.name = "inverter_reduced";
    return e;
}

// ---------------------------------------------------------------------------
// Lookup by id with JSON parameters
// ---------------------------------------------------------------------------

inline std::vector<std::string> registry_ids() { return {"motivating", "example1", "example4", "inverter"}; }

/// Builds an entry from an id and a parameter object. Unknown keys are rejected.
inline RegistryEntry make_entry(const std::string& id, const nlohmann::json& params = nlohmann::json::object()) {
    if (!params.is_object()) throw InputError("system params must be an object");
    auto check_keys = [&](std::initializer_list<const char*> allowed) {
        for (const auto& [k, v] : params.items()) {
            bool ok = false;
            for (const char* a : allowed) ok = ok || k == a;
            if (!ok) throw InputError("unknown parameter '" + k + "' for system " + id);
        }
    };
    auto num = [&](const char* key, double fallback) {
        if (!params.contains(key)) return fallback;
        if (!params[key].is_number()) throw InputError(std::string("parameter ") + key + " must be a number");
        return params[key].get<double>();
    };
    if (id == "motivating") {
        check_keys({"a", "T0", "delta0", "flipped"});
        const bool flipped = params.value("flipped", false);
        return motivating(num("a", 1.0), {num("T0", 1.0), num("delta0", 0.2), ModeIndex(2)}, flipped);
    }
    if (id == "example1") {
        check_keys({"mean_dwell", "limit_shift"});
        Example1Options o;
        o.mean_dwell = num("mean_dwell", o.mean_dwell);
        o.limit_shift = num("limit_shift", o.limit_shift);
        return example1(o);
    }
    if (id == "example4") {
        check_keys({"mean_dwell", "limit_shift"});
        Example4Options o;
        o.mean_dwell = num("mean_dwell", o.mean_dwell);
        o.limit_shift = num("limit_shift", o.limit_shift);
        return example4(o);
    }
    if (id == "inverter") {
        check_keys({"L1", "L2", "C1", "C2", "T", "dm", "dM"});
        InverterOptions o;
        o.L1 = num("L1", o.L1);
        o.L2 = num("L2", o.L2);
        o.C1 = num("C1", o.C1);
        o.C2 = num("C2", o.C2);
        o.pattern = {num("T", o.pattern.T), num("dm", o.pattern.dm), num("dM", o.pattern.dM)};
        return inverter(o);
    }
    throw InputError("unknown system id '" + id + "'");
}

}  // namespace switchstab
