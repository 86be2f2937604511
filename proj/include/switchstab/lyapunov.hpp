#pragma once

// Trajectory-based certification of weak multiple Lyapunov functions and of
// the integral output bound.

#include "switchstab/core.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace switchstab {

using ScalarField = std::function<double(double t, const Vec& x, ModeIndex i)>;
using GradientField = std::function<Vec(double t, const Vec& x, ModeIndex i)>;
using ClassK = std::function<double(double)>;

struct LyapunovCertificate {
    ScalarField V;
    GradientField grad;  ///< optional, d V / d xi
    ClassK phi1;
    ClassK phi2;
    ScalarField eta;

    void validate() const {
        if (!V || !phi1 || !phi2 || !eta) throw ParameterError("certificate needs V, phi1, phi2 and eta");
        if (std::abs(phi1(0.0)) > 1e-12 || std::abs(phi2(0.0)) > 1e-12) {
            throw ParameterError("class-K bounds must vanish at zero");
        }
        double p1 = 0.0;
        double p2 = 0.0;
        for (double s : {1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0, 10.0}) {
            const double a = phi1(s);
            const double b = phi2(s);
            if (!(a > p1) || !(b > p2)) throw ParameterError("class-K bounds must be strictly increasing");
            p1 = a;
            p2 = b;
        }
    }
};

struct IntegralBoundParams {
    ClassK alpha;
    double M = 0.0;
    double mu = 0.0;

    void validate() const {
        if (!alpha) throw ParameterError("integral bound needs alpha");
        if (M < 0.0 || mu < 0.0) throw ParameterError("integral bound needs M >= 0 and mu >= 0");
        if (std::abs(alpha(0.0)) > 1e-12) throw ParameterError("alpha must vanish at zero");
        for (double s : {1e-3, 0.1, 1.0, 10.0}) {
            if (!(alpha(s) > 0.0)) throw ParameterError("alpha must be positive definite");
        }
    }
};

struct CheckLocation {
    double t = 0.0;
    Vec x;
    int mode = 0;
};

struct CheckReport {
    std::string check;
    bool pass = true;
    /// Smallest (allowed - observed); negative means a violation.
    double worst_margin = std::numeric_limits<double>::infinity();
    CheckLocation worst_location;
    double slack = 0.0;
    std::size_t violations = 0;
    std::size_t evaluated = 0;

    void observe(double margin, double t, const Vec& x, int mode) {
        ++evaluated;
        if (margin < worst_margin) {
            worst_margin = margin;
            worst_location = {t, x, mode};
        }
        if (margin < 0.0) {
            ++violations;
            pass = false;
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json loc = {{"t", worst_location.t}, {"mode", worst_location.mode}};
        std::vector<double> xs(worst_location.x.data(), worst_location.x.data() + worst_location.x.size());
        loc["x"] = xs;
        return {{"check", check},
                {"pass", pass},
                {"worst_margin", std::isfinite(worst_margin) ? nlohmann::json(worst_margin) : nlohmann::json(nullptr)},
                {"worst_location", loc},
                {"slack", slack},
                {"violations", violations},
                {"evaluated", evaluated}};
    }
};

/// Axis-aligned sampling box [lo_j, hi_j] with a time sample list.
struct SampleBox {
    Vec lo;
    Vec hi;
    std::vector<double> times{0.0, 1.3, 7.7};

    static SampleBox cube(int n, double half_width) {
        return {Vec::Constant(n, -half_width), Vec::Constant(n, half_width), {0.0, 1.3, 7.7}};
    }
};

/// Sandwich phi1(|xi|) <= V(t, xi, i) <= phi2(|xi|) on a tensor grid of the box,
/// restricted to xi in chi_i.
inline CheckReport check_sandwich(const LyapunovCertificate& cert, const SampleBox& box, const Covering& chi,
                                  int density, double tol = 1e-9) {
    cert.validate();
    const int n = static_cast<int>(box.lo.size());
    if (box.hi.size() != n || n < 1) throw InputError("sample box bounds must share a positive dimension");
    if (density < 2) throw InputError("grid density must be at least 2");
    for (int j = 0; j < n; ++j) {
        if (!(box.lo[j] <= 0.0 && box.hi[j] >= 0.0)) throw InputError("sample box must contain the origin");
    }
    CheckReport rep;
    rep.check = "sandwich";
    rep.slack = tol;
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    Vec xi(n);
    auto probe = [&](const Vec& p) {
        for (double t : box.times) {
            for (int i = 1; i <= chi.mode_count(); ++i) {
                if (!chi.contains(p, ModeIndex(i))) continue;
                const double r = p.norm();
                const double v = cert.V(t, p, ModeIndex(i));
                const double margin = std::min(v - cert.phi1(r) + tol, cert.phi2(r) + tol - v);
                rep.observe(margin, t, p, i);
            }
        }
    };
    while (true) {
        for (int j = 0; j < n; ++j) {
            xi[j] = box.lo[j] + (box.hi[j] - box.lo[j]) * idx[static_cast<std::size_t>(j)] / (density - 1);
        }
        probe(xi);
        int j = 0;
        while (j < n && ++idx[static_cast<std::size_t>(j)] == density) idx[static_cast<std::size_t>(j++)] = 0;
        if (j == n) break;
    }
    probe(Vec::Zero(n));
    return rep;
}

struct DecreaseReport {
    CheckReport slope;    ///< item (a): V decreases at rate eta within constancy intervals
    CheckReport revisit;  ///< item (b): V_i never exceeds its value at an earlier visit of mode i
    bool pass() const { return slope.pass && revisit.pass; }

    nlohmann::json to_json() const {
        return {{"check", "decrease"}, {"pass", pass()}, {"slope", slope.to_json()}, {"revisit", revisit.to_json()}};
    }
};

/// Along-trajectory decrease check.
/// (a) On every step inside a constancy interval of sigma,
///     dV/dt + (eta_k + eta_{k+1})/2 <= slack + roundoff.
///     slack = 10 * max_k q_k, where q_k bounds the trapezoid error of eta
///     (|d eta|/2) plus the integrator's local error seen through grad V.
/// (b) For each mode i, V_i at a visit never exceeds the minimum over earlier
///     visits by more than revisit_tol.
inline DecreaseReport check_decrease_along(const LyapunovCertificate& cert, const Trajectory& traj,
                                           const SwitchingSignal& sigma, double revisit_tol = 1e-7) {
    if (!cert.V || !cert.eta) throw ParameterError("certificate needs V and eta");
    if (!traj.is_switched()) throw InputError("decrease check needs a switched trajectory");
    if (traj.size() < 2) throw InputError("decrease check needs at least two trajectory points");
    const auto& modes = traj.modes();
    if (traj.times.front() < sigma.domain_start() || traj.times.back() > sigma.domain_end()) {
        throw InputError("trajectory span lies outside the switching signal domain");
    }
    for (std::size_t k = 0; k < traj.size(); ++k) {
        if (sigma(traj.times[k]) != modes[k]) throw InputError("trajectory modes do not match the switching signal");
    }
    const bool have_err = traj.local_error.size() == traj.size();
    const double eps = std::numeric_limits<double>::epsilon();

    struct Step {
        std::size_t k;
        double s;
        double roundoff;
        double q;
    };
    std::vector<Step> steps;
    steps.reserve(traj.size());
    for (std::size_t k = 0; k + 1 < traj.size(); ++k) {
        const double t0 = traj.times[k];
        const double t1 = traj.times[k + 1];
        const double dt = t1 - t0;
        const ModeIndex m = modes[k];
        // The step is governed by the mode at its left end (steps never straddle switches).
        const double v0 = cert.V(t0, traj.states[k], m);
        const double v1 = cert.V(t1, traj.states[k + 1], m);
        const double e0 = cert.eta(t0, traj.states[k], m);
        const double e1 = cert.eta(t1, traj.states[k + 1], m);
        double q = 0.5 * std::abs(e1 - e0);
        if (have_err && traj.local_error[k + 1] > 0.0) {
            double gnorm = 0.0;
            if (cert.grad) {
                gnorm = cert.grad(t1, traj.states[k + 1], m).norm();
            } else {
                gnorm = std::abs(v1 - v0) / std::max((traj.states[k + 1] - traj.states[k]).norm(), 1e-300);
            }
            q += gnorm * traj.local_error[k + 1] / dt;
        }
        const double s = (v1 - v0) / dt + 0.5 * (e0 + e1);
        const double roundoff = 64.0 * eps * (std::abs(v0) + std::abs(v1)) / dt;
        steps.push_back({k, s, roundoff, q});
    }
    double qmax = 0.0;
    for (const auto& st : steps) qmax = std::max(qmax, st.q);
    const double slack = 10.0 * qmax;

    DecreaseReport rep;
    rep.slope.check = "decrease_slope";
    rep.slope.slack = slack;
    for (const auto& st : steps) {
        rep.slope.observe(slack + st.roundoff - st.s, traj.times[st.k], traj.states[st.k], modes[st.k].value());
    }

    rep.revisit.check = "decrease_revisit";
    rep.revisit.slack = revisit_tol;
    std::map<int, double> best;
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const ModeIndex m = modes[k];
        const double v = cert.V(traj.times[k], traj.states[k], m);
        auto it = best.find(m.value());
        if (it == best.end()) {
            best.emplace(m.value(), v);
            continue;
        }
        rep.revisit.observe(it->second + revisit_tol - v, traj.times[k], traj.states[k], m.value());
        it->second = std::min(it->second, v);
    }
    return rep;
}

/// Output integral bound: int_s^t alpha(|h|) <= M + mu (t - s) for all grid pairs s < t.
/// Each step uses its own mode at both ends, so the right end is the left limit at a switch.
template <class System>
CheckReport check_integral_bound(const Trajectory& traj, const SwitchingSignal& sigma, const System& sys,
                                 const IntegralBoundParams& params) {
    params.validate();
    if (!traj.is_switched()) throw InputError("integral bound check needs a switched trajectory");
    if (traj.outputs.size() != traj.size()) throw InputError("trajectory has no outputs");
    (void)sigma;
    CheckReport rep;
    rep.check = "integral_bound";
    const auto& modes = traj.modes();
    if (traj.size() < 2) {
        rep.observe(params.M, traj.times.empty() ? 0.0 : traj.times.front(),
                    traj.states.empty() ? Vec() : traj.states.front(), traj.empty() ? 0 : modes.front().value());
        return rep;
    }
    double P = 0.0;
    double quad_slack = 0.0;
    // Running minimum of Q(s) = P(s) - mu s over earlier grid points.
    double qmin = 0.0 - params.mu * traj.times.front();
    std::vector<double> Q(traj.size());
    Q[0] = qmin;
    for (std::size_t k = 0; k + 1 < traj.size(); ++k) {
        const ModeIndex m = modes[k];
        const double a0 = params.alpha(traj.outputs[k].norm());
        const double a1 = params.alpha(sys.h(traj.times[k + 1], traj.states[k + 1], m).norm());
        const double dt = traj.times[k + 1] - traj.times[k];
        P += 0.5 * (a0 + a1) * dt;
        quad_slack += 0.5 * std::abs(a1 - a0) * dt;
        Q[k + 1] = P - params.mu * traj.times[k + 1];
    }
    rep.slack = quad_slack;
    for (std::size_t k = 1; k < traj.size(); ++k) {
        rep.observe(params.M + quad_slack - (Q[k] - qmin), traj.times[k], traj.states[k], modes[k].value());
        qmin = std::min(qmin, Q[k]);
    }
    return rep;
}

/// Central-difference check of an analytic gradient; returns the largest relative error.
inline double gradient_consistency(const LyapunovCertificate& cert, const std::vector<Vec>& points, double t,
                                   ModeIndex i, double step = 1e-6) {
    if (!cert.grad) throw ParameterError("certificate has no analytic gradient");
    double worst = 0.0;
    for (const auto& x : points) {
        const Vec g = cert.grad(t, x, i);
        Vec fd(x.size());
        for (Eigen::Index j = 0; j < x.size(); ++j) {
            Vec xp = x;
            Vec xm = x;
            xp[j] += step;
            xm[j] -= step;
            fd[j] = (cert.V(t, xp, i) - cert.V(t, xm, i)) / (2.0 * step);
        }
        const double scale = std::max(g.norm(), 1e-8);
        worst = std::max(worst, (fd - g).norm() / scale);
    }
    return worst;
}

}  // namespace switchstab
