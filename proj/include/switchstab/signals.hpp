#pragma once

// Switching-signal classes: arbitrary switching, the sliding-window activation
// class S_{T0,delta0} and the 1-2-1 pattern class S[T, dm, dM].

#include "switchstab/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace switchstab {

struct MeasureConstraint {
    double T0 = 1.0;
    double delta0 = 0.2;
    ModeIndex mode{2};

    void validate() const {
        if (!(T0 > 0.0) || !(delta0 > 0.0) || delta0 > T0) {
            throw ParameterError("measure constraint needs 0 < delta0 <= T0");
        }
    }
};

struct PatternConstraint {
    double T = 10.0;
    double dm = 0.5;
    double dM = 2.0;

    void validate() const {
        if (!(dm > 0.0) || dM < dm || !(T > 0.0)) throw ParameterError("pattern constraint needs 0 < dm <= dM");
        if (3.0 * dm > T) throw ParameterError("pattern constraint needs 3*dm <= T");
    }
};

/// Snap a time onto the absolute storage grid k*kTimeQuantum.
inline double snap_time(double t) { return std::round(t / kTimeQuantum) * kTimeQuantum; }

/// splitmix64 finaliser; derives independent child seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace detail {

/// Accumulates (start, mode) pieces and produces a canonical signal.
class SignalBuilder {
public:
    void add(double start, ModeIndex mode) {
        if (!starts_.empty() && start <= starts_.back()) {
            if (start == starts_.back()) {
                modes_.back() = mode;
                return;
            }
            throw ParameterError("signal pieces must be added in time order");
        }
        starts_.push_back(start);
        modes_.push_back(mode);
    }

    bool empty() const noexcept { return starts_.empty(); }
    double last_start() const { return starts_.back(); }

    SwitchingSignal build(double t_end) const {
        std::vector<double> s;
        std::vector<ModeIndex> m;
        for (std::size_t k = 0; k < starts_.size(); ++k) {
            if (starts_[k] >= t_end && !s.empty()) break;
            s.push_back(starts_[k]);
            m.push_back(modes_[k]);
        }
        return SwitchingSignal(std::move(s), std::move(m), t_end).canonical();
    }

private:
    std::vector<double> starts_;
    std::vector<ModeIndex> modes_;
};

inline void check_signal_span(double t0, double t1) {
    if (!std::isfinite(t0) || !std::isfinite(t1) || !(t1 > t0)) throw ParameterError("signal span must be nonempty");
}

inline ModeIndex random_mode(std::mt19937_64& rng, int modes) {
    std::uniform_int_distribution<int> pick(1, modes);
    return ModeIndex(pick(rng));
}

/// Exponential dwell clipped to [kTimeQuantum, 10*mean].
inline double random_dwell(std::mt19937_64& rng, double mean) {
    std::exponential_distribution<double> dist(1.0 / mean);
    return std::clamp(dist(rng), kTimeQuantum, 10.0 * mean);
}

/// Fill [a, b) with random pieces snapped to the storage grid.
inline void fill_random(SignalBuilder& out, std::mt19937_64& rng, int modes, double a, double b, double mean) {
    double t = a;
    while (t < b) {
        out.add(t, random_mode(rng, modes));
        double next = snap_time(t + random_dwell(rng, mean));
        if (next <= t) next = snap_time(t + kTimeQuantum);
        t = next;
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// Random signal with exponential dwell times and uniform modes on [t0, t1].
/// Consecutive equal modes are kept as separate draws but merged in storage.
inline SwitchingSignal gen_arbitrary(int modes, double t0, double t1, double mean_dwell, std::uint64_t seed) {
    detail::check_signal_span(t0, t1);
    if (modes < 1) throw ParameterError("mode count must be positive");
    if (!(mean_dwell > 0.0)) throw ParameterError("mean dwell must be positive");
    std::mt19937_64 rng(seed);
    detail::SignalBuilder b;
    b.add(t0, detail::random_mode(rng, modes));
    double t = t0;
    while (true) {
        double next = snap_time(t + detail::random_dwell(rng, mean_dwell));
        if (next <= t) next = snap_time(t + kTimeQuantum);
        if (next >= t1) break;
        b.add(next, detail::random_mode(rng, modes));
        t = next;
    }
    return b.build(t1);
}

/// Raw dwell sequence used by gen_arbitrary (exposed for statistics tests).
inline std::vector<double> arbitrary_dwells(std::size_t count, double mean_dwell, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<double> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) out.push_back(detail::random_dwell(rng, mean_dwell));
    return out;
}

/// Member of S_{T0,delta0}: every window [t, t+T0] inside [t0, t1] has
/// at least delta0 seconds of c.mode.
inline SwitchingSignal gen_measure_constrained(const MeasureConstraint& c, int modes, double t0, double t1,
                                               std::uint64_t seed) {
    c.validate();
    detail::check_signal_span(t0, t1);
    if (!c.mode.valid_for(modes)) throw ParameterError("constrained mode exceeds the mode count");
    const double q = kTimeQuantum;
    const double margin = std::min(c.delta0, c.T0 - c.delta0) / 2.0;
    const double L = c.delta0 + margin;
    if (L + 2.0 * q >= c.T0 || modes == 1) return SwitchingSignal::constant(c.mode, t0, t1);

    std::mt19937_64 rng(seed);
    const double room = c.T0 - L;
    const double fill_mean = c.T0 / 5.0;
    detail::SignalBuilder b;
    // Block offsets p_k follow p_{k+1} <= p_k + margin/2 inside [0, T0 - L]; the
    // tail of block k plus the head of block k+1 then covers delta0 in every window.
    double p = std::uniform_real_distribution<double>(0.0, room)(rng);
    double cursor = t0;
    for (double tile = t0; cursor < t1 + c.T0; tile += c.T0) {
        double a = std::floor((tile + p) / q) * q;
        double e = std::ceil((tile + p + L) / q) * q;
        a = std::max(a, cursor);
        if (a > cursor) detail::fill_random(b, rng, modes, cursor, a, fill_mean);
        b.add(a, c.mode);
        cursor = e;
        const double hi = std::min(room, p + margin / 2.0);
        p = std::uniform_real_distribution<double>(0.0, hi)(rng);
    }
    return b.build(t1);
}

/// Member of S[T, dm, dM] over two modes: back-to-back 1-2-1 patterns with
/// random sub-interval lengths; every window of length T contains one.
inline SwitchingSignal gen_pattern(const PatternConstraint& c, double t0, double t1, std::uint64_t seed) {
    c.validate();
    detail::check_signal_span(t0, t1);
    const double q = kTimeQuantum;
    const auto dm = static_cast<long long>(std::ceil(c.dm / q - 1e-9));
    const auto dM = static_cast<long long>(std::floor(c.dM / q + 1e-9));
    const auto T = static_cast<long long>(std::floor(c.T / q + 1e-9));
    if (dm > dM) throw ParameterError("pattern bounds admit no grid-aligned length");
    // Consecutive 2-runs k, k+1 must satisfy d_k + g_k + d_{k+1} <= T - 2 dm.
    if (T < 5 * dm) throw ParameterError("pattern class needs T >= 5*dm for back-to-back patterns");

    std::mt19937_64 rng(seed);
    auto draw = [&](long long lo, long long hi) {
        if (hi <= lo) return lo;
        return std::uniform_int_distribution<long long>(lo, hi)(rng);
    };
    const long long base = static_cast<long long>(std::llround(t0 / q));
    const long long end = static_cast<long long>(std::ceil(t1 / q)) + T + 2 * dM;
    detail::SignalBuilder b;
    auto at = [&](long long k) { return k == base ? t0 : static_cast<double>(k) * q; };

    long long d = draw(dm, std::min(dM, T - 4 * dm));
    long long g = draw(dm, std::min(dM, T - d - dm));
    long long k = base;
    b.add(at(k), ModeIndex(1));
    k += g;
    while (k < end) {
        b.add(at(k), ModeIndex(2));
        k += d;
        b.add(at(k), ModeIndex(1));
        const long long d_next = draw(dm, std::min(dM, T - 3 * dm - d));
        const long long g_hi = T - 2 * dm - d - d_next;
        const long long g_next = std::min(draw(dm, dM) + draw(dm, dM), g_hi);
        k += std::max(g_next, dm);
        d = d_next;
    }
    return b.build(t1);
}

// ---------------------------------------------------------------------------
// Validators
// ---------------------------------------------------------------------------

struct MeasureReport {
    bool pass = false;
    double min_measure = 0.0;
    double worst_t = 0.0;
};

namespace detail {

/// Prefix integral of the indicator of one mode along a signal.
class ModeOccupancy {
public:
    ModeOccupancy(const SwitchingSignal& s, ModeIndex mode) : s_(s) {
        prefix_.reserve(s.interval_count() + 1);
        prefix_.push_back(0.0);
        for (std::size_t k = 0; k < s.interval_count(); ++k) {
            const double len = s.interval_end(k) - s.starts()[k];
            prefix_.push_back(prefix_.back() + (s.modes()[k] == mode ? len : 0.0));
            on_.push_back(s.modes()[k] == mode);
        }
    }

    /// Measure of {s in [domain_start, t] : sigma(s) = mode}.
    double upto(double t) const {
        const std::size_t k = s_.interval_at(t);
        return prefix_[k] + (on_[k] ? t - s_.starts()[k] : 0.0);
    }

    double window(double a, double b) const { return upto(b) - upto(a); }

private:
    const SwitchingSignal& s_;
    std::vector<double> prefix_;
    std::vector<bool> on_;
};

}  // namespace detail

/// Exact infimum of the activation measure of c.mode over sliding windows.
/// The measure is piecewise linear in the anchor, so only kinks are evaluated.
inline MeasureReport validate_measure(const SwitchingSignal& sigma, const MeasureConstraint& c) {
    c.validate();
    const double a0 = sigma.domain_start();
    const double a1 = sigma.domain_end() - c.T0;
    if (a1 < a0 - 1e-12 * std::max(1.0, c.T0)) throw InputError("signal domain is shorter than one window");
    const double last = std::max(a0, a1);
    std::vector<double> anchors{a0, last};
    for (std::size_t k = 1; k < sigma.interval_count(); ++k) {
        for (double t : {sigma.starts()[k], sigma.starts()[k] - c.T0}) {
            if (t > a0 && t < last) anchors.push_back(t);
        }
    }
    detail::ModeOccupancy occ(sigma, c.mode);
    MeasureReport rep;
    rep.min_measure = std::numeric_limits<double>::infinity();
    for (double t : anchors) {
        const double m = occ.window(t, std::min(t + c.T0, sigma.domain_end()));
        if (m < rep.min_measure) {
            rep.min_measure = m;
            rep.worst_t = t;
        }
    }
    rep.pass = rep.min_measure >= c.delta0 - 1e-12 * std::max(1.0, c.T0);
    return rep;
}

struct PatternReport {
    bool pass = false;
    /// First window anchor without a compliant 1-2-1 pattern.
    std::optional<double> first_violation;
};

namespace detail {

struct Run {
    double a;
    double b;
    ModeIndex mode;
};

inline std::vector<Run> runs_of(const SwitchingSignal& sigma) {
    const auto s = sigma.canonical();
    std::vector<Run> out;
    for (std::size_t k = 0; k < s.interval_count(); ++k) out.push_back({s.starts()[k], s.interval_end(k), s.modes()[k]});
    return out;
}

/// Checks that the union of closed intervals covers [lo, hi]; returns the first gap point.
inline std::optional<double> first_uncovered(std::vector<std::pair<double, double>> cover, double lo, double hi,
                                             double tol) {
    std::sort(cover.begin(), cover.end());
    double reach = lo;
    for (const auto& [a, b] : cover) {
        if (b < reach - tol) continue;
        if (a > reach + tol) break;
        reach = std::max(reach, b);
        if (reach >= hi - tol) return std::nullopt;
    }
    return reach;
}

/// Window anchors covered by compliant patterns built from mode-labelled runs.
/// A 2-run [a, b) with dm <= b - a <= dM, a preceding 1-run of length >= dm and a
/// following 1-run of length >= dm admits the pattern (a-dm, a, b, b+dm), which
/// fits every window anchored in [b + dm - T, a - dm].
inline std::vector<std::pair<double, double>> pattern_cover(const std::vector<Run>& runs, double T, double dm,
                                                            double dM, double tol) {
    std::vector<std::pair<double, double>> cover;
    for (std::size_t k = 1; k + 1 < runs.size(); ++k) {
        const Run& r = runs[k];
        if (r.mode != ModeIndex(2)) continue;
        const Run& prev = runs[k - 1];
        const Run& next = runs[k + 1];
        if (prev.mode != ModeIndex(1) || next.mode != ModeIndex(1)) continue;
        const double len = r.b - r.a;
        if (len < dm - tol || len > dM + tol) continue;
        if (prev.b - prev.a < dm - tol || next.b - next.a < dm - tol) continue;
        const double lo = r.b + dm - T;
        const double hi = r.a - dm;
        if (hi >= lo - tol) cover.emplace_back(lo, hi);
    }
    return cover;
}

}  // namespace detail

/// Exact check that every window [t, t+T] within the domain contains a
/// compliant 1-2-1 pattern. Modes other than 1 and 2 simply break runs.
inline PatternReport validate_pattern(const SwitchingSignal& sigma, const PatternConstraint& c) {
    c.validate();
    const double lo = sigma.domain_start();
    const double hi = sigma.domain_end() - c.T;
    const double tol = 1e-9;
    if (hi < lo - tol) throw InputError("signal domain is shorter than one pattern window");
    const auto cover = detail::pattern_cover(detail::runs_of(sigma), c.T, c.dm, c.dM, tol);
    PatternReport rep;
    rep.first_violation = detail::first_uncovered(cover, lo, std::max(lo, hi), tol);
    rep.pass = !rep.first_violation.has_value();
    return rep;
}

struct InvarianceReport {
    bool pass = true;
    std::optional<double> first_violation;
    std::size_t violations = 0;
};

/// x(t) in chi_{sigma(t)} at every grid time, boundary functions relaxed by 1e-9.
inline InvarianceReport validate_covering_invariance(const Trajectory& traj, const SwitchingSignal& sigma,
                                                     const Covering& chi, double tol = 1e-9) {
    InvarianceReport rep;
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const double t = traj.times[k];
        if (t < sigma.domain_start() || t > sigma.domain_end()) {
            throw InputError("trajectory and switching signal do not share the span");
        }
        if (!chi.contains(traj.states[k], sigma(t), tol)) {
            if (!rep.first_violation) rep.first_violation = t;
            rep.pass = false;
            ++rep.violations;
        }
    }
    return rep;
}

}  // namespace switchstab
