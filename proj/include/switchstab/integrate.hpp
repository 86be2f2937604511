#pragma once

// Fixed-step RK4 integration of switched, relaxed and closed-loop covering
// dynamics. Steps are split at every switching breakpoint, control change
// point and requested sample time, so no step straddles a discontinuity.

#include "switchstab/core.hpp"

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace switchstab {

struct IntegratorConfig {
    double step = 1e-3;
    double event_bisection_tol = 1e-9;
    double divergence_bound = 1e9;
    std::size_t max_switches = 1000000;
    /// Membership slack for covering boundary functions.
    double boundary_tol = 1e-9;
    /// Record a step-doubling estimate of the local error at every step.
    bool estimate_local_error = false;

    void validate() const {
        if (!(step > 0.0) || !std::isfinite(step)) throw ParameterError("integrator step must be positive");
        if (!(event_bisection_tol > 0.0) || !(event_bisection_tol < step)) {
            throw ParameterError("event bisection tolerance must lie in (0, step)");
        }
        if (!(divergence_bound > 0.0)) throw ParameterError("divergence bound must be positive");
        if (max_switches == 0) throw ParameterError("max_switches must be positive");
        if (!(boundary_tol >= 0.0)) throw ParameterError("boundary tolerance must be nonnegative");
    }
};

/// State norm left the divergence bound; carries the trajectory up to the last valid point.
class BlowUpError : public Error {
public:
    BlowUpError(const std::string& what, Trajectory partial, double last_time)
        : Error(what), partial_(std::move(partial)), last_time_(last_time) {}
    const Trajectory& partial() const noexcept { return partial_; }
    double last_valid_time() const noexcept { return last_time_; }

private:
    Trajectory partial_;
    double last_time_;
};

namespace detail {

template <class Rhs>
Vec rk4_step(const Rhs& rhs, double t, const Vec& x, double h) {
    const Vec k1 = rhs(t, x);
    const Vec k2 = rhs(t + 0.5 * h, x + (0.5 * h) * k1);
    const Vec k3 = rhs(t + 0.5 * h, x + (0.5 * h) * k2);
    const Vec k4 = rhs(t + h, x + h * k3);
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Richardson estimate of the local error of one full RK4 step.
template <class Rhs>
double rk4_local_error(const Rhs& rhs, double t, const Vec& x, double h, const Vec& full) {
    const Vec half = rk4_step(rhs, t, x, 0.5 * h);
    const Vec twice = rk4_step(rhs, t + 0.5 * h, half, 0.5 * h);
    return (twice - full).norm() / 15.0;
}

enum class MarchStatus { completed, stopped, diverged };

struct MarchResult {
    MarchStatus status = MarchStatus::completed;
    double last_time = 0.0;
};

/// Sorted, deduplicated event times strictly inside (t0, tf).
inline std::vector<double> clean_events(std::vector<double> events, double t0, double tf) {
    std::sort(events.begin(), events.end());
    events.erase(std::unique(events.begin(), events.end()), events.end());
    std::vector<double> out;
    out.reserve(events.size());
    for (double e : events) {
        if (e > t0 && e < tf) out.push_back(e);
    }
    return out;
}

/// Core loop. rhs(piece_start, t, x) evaluates the field frozen to the drive
/// active at piece_start; visit(t, x, err) records a point and may return false
/// to stop early.
template <class Rhs, class Visit>
MarchResult march(double t0, const Vec& x0, double tf, const std::vector<double>& events,
                  const IntegratorConfig& cfg, const Rhs& rhs, const Visit& visit) {
    const double h = cfg.step;
    Vec x = x0;
    double t = t0;
    if (!x.allFinite()) throw DynamicsError("initial state is not finite", t0);
    if (x.norm() > cfg.divergence_bound) return {MarchStatus::diverged, t0};
    if (!visit(t, x, 0.0)) return {MarchStatus::stopped, t0};
    std::size_t k = 0;
    while (t < tf) {
        const double next_event = k < events.size() ? events[k] : tf;
        double target = t + h;
        if (target >= next_event || next_event - target < h * 1e-6) target = next_event;
        const double dt = target - t;
        const double piece = t;
        auto field = [&](double s, const Vec& y) {
            Vec v = rhs(piece, s, y);
            if (!v.allFinite()) throw DynamicsError("right-hand side produced a non-finite value", s);
            return v;
        };
        Vec next = rk4_step(field, t, x, dt);
        double err = 0.0;
        if (cfg.estimate_local_error) err = rk4_local_error(field, t, x, dt, next);
        if (!next.allFinite()) throw DynamicsError("state became non-finite", target);
        if (next.norm() > cfg.divergence_bound) return {MarchStatus::diverged, t};
        x = std::move(next);
        t = target;
        if (k < events.size() && t == events[k]) ++k;
        if (!visit(t, x, err)) return {MarchStatus::stopped, t};
    }
    return {MarchStatus::completed, t};
}

inline void check_span(double t0, double tf) {
    if (!std::isfinite(t0) || !std::isfinite(tf) || tf < t0) {
        throw ParameterError("integration span must satisfy t0 <= tf");
    }
}

inline void check_state(const Vec& x0, int n) {
    if (x0.size() != n) throw ParameterError("initial state dimension does not match the system");
}

}  // namespace detail

/// Switched trajectory under sigma. Outputs are h(t, x, sigma(t)).
/// extra_times are forced into the output grid (useful for sampling).
inline Trajectory simulate(const SwitchedSystem& sys, const SwitchingSignal& sigma, double t0, const Vec& x0,
                           double tf, const IntegratorConfig& cfg, const std::vector<double>& extra_times = {}) {
    cfg.validate();
    sys.validate();
    detail::check_span(t0, tf);
    detail::check_state(x0, sys.n);
    if (!sigma.covers(t0, tf)) throw DomainError("switching signal does not cover the integration span");
    if (sigma.max_mode() > sys.modes) throw ParameterError("switching signal uses a mode the system lacks");

    std::vector<double> events = sigma.breakpoints_in(t0, tf);
    events.insert(events.end(), extra_times.begin(), extra_times.end());
    events = detail::clean_events(std::move(events), t0, tf);

    Trajectory traj;
    std::vector<ModeIndex> modes;
    const std::size_t expected = static_cast<std::size_t>((tf - t0) / cfg.step) + events.size() + 2;
    traj.times.reserve(expected);
    traj.states.reserve(expected);
    modes.reserve(expected);
    auto rhs = [&](double piece, double t, const Vec& x) { return sys.f(t, x, sigma(piece)); };
    auto visit = [&](double t, const Vec& x, double err) {
        const ModeIndex m = sigma(t);
        traj.times.push_back(t);
        traj.states.push_back(x);
        modes.push_back(m);
        traj.outputs.push_back(sys.h(t, x, m));
        if (cfg.estimate_local_error) traj.local_error.push_back(err);
        return true;
    };
    const auto res = detail::march(t0, x0, tf, events, cfg, rhs, visit);
    traj.drive = std::move(modes);
    if (res.status == detail::MarchStatus::diverged) {
        throw BlowUpError("state norm exceeded the divergence bound", std::move(traj), res.last_time);
    }
    return traj;
}

/// Relaxed trajectory x' = sum_i u_i f_i(t, x). Outputs are sum_i u_i |h_i(t, x)|.
/// Model is any control-affine model exposing n, modes, rhs(t, x, u) and relaxed_output(t, x, u).
template <class Model>
Trajectory simulate_relaxed(const Model& sys, const RelaxedControl& u, double t0, const Vec& x0, double tf,
                            const IntegratorConfig& cfg, const std::vector<double>& extra_times = {}) {
    cfg.validate();
    detail::check_span(t0, tf);
    detail::check_state(x0, sys.n);
    if (u.mode_count() != sys.modes) throw ParameterError("control mode count does not match the system");
    if (t0 < u.t0() || tf > u.t_end() + 1e-12 * std::max(1.0, std::abs(u.t_end()))) {
        throw DomainError("relaxed control does not cover the integration span");
    }
    tf = std::min(tf, u.t_end());

    // Steps only need to break where the control value actually changes.
    std::vector<double> events = u.change_points();
    events.insert(events.end(), extra_times.begin(), extra_times.end());
    events = detail::clean_events(std::move(events), t0, tf);

    Trajectory traj;
    std::vector<SimplexPoint> drive;
    auto rhs = [&](double piece, double t, const Vec& x) { return sys.rhs(t, x, u(piece)); };
    auto visit = [&](double t, const Vec& x, double err) {
        const SimplexPoint& p = u(t);
        traj.times.push_back(t);
        traj.states.push_back(x);
        drive.push_back(p);
        traj.outputs.push_back(Vec::Constant(1, sys.relaxed_output(t, x, p)));
        if (cfg.estimate_local_error) traj.local_error.push_back(err);
        return true;
    };
    const auto res = detail::march(t0, x0, tf, events, cfg, rhs, visit);
    traj.drive = std::move(drive);
    if (res.status == detail::MarchStatus::diverged) {
        throw BlowUpError("state norm exceeded the divergence bound", std::move(traj), res.last_time);
    }
    return traj;
}

/// Closed-loop policy: returns a mode from the active index set.
using CoveringPolicy = std::function<ModeIndex(double t, const Vec& x, const std::vector<ModeIndex>& active)>;

struct CoveringRun {
    Trajectory trajectory;
    SwitchingSignal signal;
};

/// Covering-invariant closed-loop simulation. The policy is queried at every
/// step start; a step that would leave the active mode's piece is shortened by
/// bisection so it ends on the boundary, and the policy is queried again there.
inline CoveringRun simulate_with_covering(const SwitchedSystem& sys, const Covering& chi,
                                          const CoveringPolicy& policy, double t0, const Vec& x0, double tf,
                                          const IntegratorConfig& cfg) {
    cfg.validate();
    sys.validate();
    detail::check_state(x0, sys.n);
    if (!(tf > t0)) throw ParameterError("closed-loop simulation needs tf > t0");
    if (chi.mode_count() != sys.modes) throw ParameterError("covering and system mode counts differ");
    if (!policy) throw ParameterError("covering policy is empty");

    const double h = cfg.step;
    const double tol = cfg.boundary_tol;
    Trajectory traj;
    std::vector<ModeIndex> modes;
    std::vector<double> starts;
    std::vector<ModeIndex> signal_modes;
    std::size_t events = 0;
    std::size_t stalls = 0;

    Vec x = x0;
    double t = t0;
    if (!x.allFinite()) throw DynamicsError("initial state is not finite", t0);

    auto choose = [&](double s, const Vec& y) {
        const auto active = active_index_set(y, chi, tol);
        const ModeIndex m = policy(s, y, active);
        if (std::find(active.begin(), active.end(), m) == active.end()) {
            throw PolicyError("policy returned mode " + std::to_string(m.value()) + " outside the active set at t=" +
                              std::to_string(s));
        }
        return m;
    };
    auto mark = [&](double s, ModeIndex m) {
        if (!starts.empty() && starts.back() == s) {
            signal_modes.back() = m;
            if (signal_modes.size() > 1 && signal_modes[signal_modes.size() - 2] == m) {
                starts.pop_back();
                signal_modes.pop_back();
            }
        } else if (signal_modes.empty() || signal_modes.back() != m) {
            starts.push_back(s);
            signal_modes.push_back(m);
        }
    };
    auto record = [&](double s, const Vec& y, ModeIndex m, double err) {
        traj.times.push_back(s);
        traj.states.push_back(y);
        modes.push_back(m);
        traj.outputs.push_back(sys.h(s, y, m));
        if (cfg.estimate_local_error) traj.local_error.push_back(err);
        mark(s, m);
    };
    auto finish = [&]() {
        // Collapse a trailing mode change that landed on tf itself.
        if (starts.size() > 1 && starts.back() >= tf) {
            starts.pop_back();
            signal_modes.pop_back();
            modes.back() = signal_modes.back();
            traj.outputs.back() = sys.h(traj.times.back(), traj.states.back(), modes.back());
        }
        traj.drive = modes;
        return SwitchingSignal(starts, signal_modes, tf);
    };

    ModeIndex mode = choose(t, x);
    record(t, x, mode, 0.0);
    while (t < tf) {
        double target = t + h;
        if (target >= tf || tf - target < h * 1e-6) target = tf;
        const ModeIndex m = mode;
        auto field = [&](double s, const Vec& y) {
            Vec v = sys.f(s, y, m);
            if (!v.allFinite()) throw DynamicsError("right-hand side produced a non-finite value", s);
            return v;
        };
        double dt = target - t;
        Vec next = detail::rk4_step(field, t, x, dt);
        bool hit_boundary = false;
        if (!(chi.margin(next, m) >= -tol)) {
            // Bisect the step length for the last point still inside chi_m.
            double lo = 0.0;
            double hi = dt;
            Vec x_lo = x;
            for (int it = 0; it < 200; ++it) {
                const bool time_ok = hi - lo <= cfg.event_bisection_tol;
                const bool near = chi.margin(x_lo, m) <= tol;
                if (time_ok && near) break;
                const double mid = 0.5 * (lo + hi);
                if (mid <= lo || mid >= hi) break;
                Vec x_mid = detail::rk4_step(field, t, x, mid);
                if (chi.margin(x_mid, m) >= -tol) {
                    lo = mid;
                    x_lo = std::move(x_mid);
                } else {
                    hi = mid;
                }
            }
            dt = lo;
            next = std::move(x_lo);
            hit_boundary = true;
            if (++events > cfg.max_switches) {
                throw ChatteringError("covering boundary events exceeded max_switches", t);
            }
        }
        if (!next.allFinite()) throw DynamicsError("state became non-finite", t + dt);
        if (next.norm() > cfg.divergence_bound) {
            traj.drive = modes;
            throw BlowUpError("state norm exceeded the divergence bound", std::move(traj), t);
        }
        if (dt > 0.0) {
            double err = 0.0;
            if (cfg.estimate_local_error) err = detail::rk4_local_error(field, t, x, dt, next);
            x = std::move(next);
            t = hit_boundary ? t + dt : target;
            stalls = 0;
            mode = choose(t, x);
            record(t, x, mode, err);
        } else {
            // The chosen mode leaves its piece immediately; ask again.
            if (++stalls > 1000) throw ChatteringError("closed loop made no progress at a covering boundary", t);
            const ModeIndex again = choose(t, x);
            if (again == mode) {
                throw ChatteringError("policy keeps a mode whose piece the state leaves immediately", t);
            }
            mode = again;
            modes.back() = mode;
            traj.outputs.back() = sys.h(t, x, mode);
            mark(t, mode);
        }
    }
    auto signal = finish();
    return {std::move(traj), std::move(signal)};
}

}  // namespace switchstab
