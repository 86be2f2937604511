#pragma once

// Reduced limiting control systems, constraints inherited by weak limits of
// switching signals, the weak zero-state detectability falsifier and the
// zeroing-output diagnostics at the switched level.

#include "switchstab/core.hpp"
#include "switchstab/integrate.hpp"
#include "switchstab/signals.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace switchstab {

// ---------------------------------------------------------------------------
// Constraints on relaxed controls
// ---------------------------------------------------------------------------

struct ControlClassConstraint {
    enum class Kind { none, integral_lower_bound, pattern };

    Kind kind = Kind::none;
    MeasureConstraint integral;  ///< mode i, window T0, bound delta0
    PatternConstraint pattern;

    static ControlClassConstraint none() { return {}; }
    static ControlClassConstraint integral_lower_bound(ModeIndex mode, double T0, double delta0) {
        ControlClassConstraint c;
        c.kind = Kind::integral_lower_bound;
        c.integral = {T0, delta0, mode};
        c.integral.validate();
        return c;
    }
    static ControlClassConstraint pattern_class(double T, double dm, double dM) {
        ControlClassConstraint c;
        c.kind = Kind::pattern;
        c.pattern = {T, dm, dM};
        c.pattern.validate();
        return c;
    }

    std::string kind_name() const {
        switch (kind) {
            case Kind::integral_lower_bound: return "integral_lower_bound";
            case Kind::pattern: return "pattern";
            default: return "none";
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json j = {{"kind", kind_name()}};
        if (kind == Kind::integral_lower_bound) {
            j["mode"] = integral.mode.value();
            j["T0"] = integral.T0;
            j["delta0"] = integral.delta0;
        } else if (kind == Kind::pattern) {
            j["T"] = pattern.T;
            j["dm"] = pattern.dm;
            j["dM"] = pattern.dM;
        }
        return j;
    }
};

struct ConstraintReport {
    bool pass = true;
    /// Integral kind: min window integral minus delta0. Pattern kind: 0 or -1.
    double margin = std::numeric_limits<double>::infinity();
    std::optional<double> worst_t;
};

namespace detail {

/// Prefix integral of one weight of a piecewise-constant control.
class ControlPrefix {
public:
    ControlPrefix(const RelaxedControl& u, ModeIndex i) : u_(u) {
        prefix_.reserve(u.cell_count() + 1);
        prefix_.push_back(0.0);
        for (std::size_t k = 0; k < u.cell_count(); ++k) {
            const double len = u.cell_start(k + 1) - u.cell_start(k);
            prefix_.push_back(prefix_.back() + u.cell(k).weight(i) * len);
            w_.push_back(u.cell(k).weight(i));
        }
    }

    double upto(double t) const {
        const std::size_t k = u_.cell_at(t);
        return prefix_[k] + w_[k] * (t - u_.cell_start(k));
    }

private:
    const RelaxedControl& u_;
    std::vector<double> prefix_;
    std::vector<double> w_;
};

/// Cell labels for the pattern search: 1 or 2 when the cell is within eps of
/// that vertex, 0 otherwise.
inline std::vector<Run> control_runs(const RelaxedControl& u, double eps) {
    std::vector<Run> out;
    for (std::size_t k = 0; k < u.cell_count(); ++k) {
        const auto& p = u.cell(k);
        int label = 0;
        if (p.size() >= 1 && p[0] >= 1.0 - eps) label = 1;
        if (p.size() >= 2 && p[1] >= 1.0 - eps) label = 2;
        const ModeIndex m(label == 0 ? 1000 : label);
        const double a = u.cell_start(k);
        const double b = u.cell_start(k + 1);
        if (!out.empty() && out.back().mode == m) {
            out.back().b = b;
        } else {
            out.push_back({a, b, m});
        }
    }
    return out;
}

}  // namespace detail

/// Exact check of a class constraint on a relaxed control over its whole grid.
inline ConstraintReport check_control_constraint(const RelaxedControl& u, const ControlClassConstraint& c) {
    ConstraintReport rep;
    const double a0 = u.t0();
    const double a1 = u.t_end();
    if (c.kind == ControlClassConstraint::Kind::none) return rep;
    if (c.kind == ControlClassConstraint::Kind::integral_lower_bound) {
        const auto& m = c.integral;
        if (!m.mode.valid_for(u.mode_count())) throw InputError("constrained mode exceeds the control's mode count");
        const double last = a1 - m.T0;
        if (last < a0 - 1e-12 * std::max(1.0, m.T0)) throw InputError("control span is shorter than one window");
        detail::ControlPrefix pre(u, m.mode);
        std::vector<double> anchors{a0, std::max(a0, last)};
        for (std::size_t k = 1; k < u.cell_count(); ++k) {
            for (double t : {u.cell_start(k), u.cell_start(k) - m.T0}) {
                if (t > a0 && t < last) anchors.push_back(t);
            }
        }
        double worst = std::numeric_limits<double>::infinity();
        for (double t : anchors) {
            const double v = pre.upto(std::min(t + m.T0, a1)) - pre.upto(t);
            if (v < worst) {
                worst = v;
                rep.worst_t = t;
            }
        }
        rep.margin = worst - m.delta0;
        rep.pass = rep.margin >= -1e-9;
        return rep;
    }
    // Pattern kind.
    if (u.mode_count() < 2) throw InputError("pattern constraint needs at least two modes");
    const auto& p = c.pattern;
    const double tol = 1e-9;
    const double window = std::min(p.T, a1 - a0);
    const auto runs = detail::control_runs(u, 1e-6);
    const auto cover = detail::pattern_cover(runs, window, p.dm, p.dM, tol);
    const double last = std::max(a0, a1 - window);
    rep.worst_t = detail::first_uncovered(cover, a0, last, tol);
    rep.pass = !rep.worst_t.has_value();
    rep.margin = rep.pass ? 0.0 : -1.0;
    return rep;
}

// ---------------------------------------------------------------------------
// Reduced limiting control system
// ---------------------------------------------------------------------------

/// x' = Fhat(t, x) u, y = Hhat(t, x) u with u(t) in U_{x(t)} and u in the constrained class.
struct ReducedLimitingSystem {
    std::string name;
    int n = 0;
    int modes = 0;
    ModeField fhat;  ///< column i of Fhat
    ModeField hgamma;  ///< limiting output h_{i,gamma}; Hhat holds its norms
    Covering covering = Covering::trivial(1);
    std::vector<ControlClassConstraint> constraints;

    Mat Fhat(double t, const Vec& x) const {
        Mat F(n, modes);
        for (int i = 0; i < modes; ++i) F.col(i) = fhat(t, x, ModeIndex(i + 1));
        return F;
    }

    Vec Hhat(double t, const Vec& x) const {
        Vec H(modes);
        for (int i = 0; i < modes; ++i) H[i] = hgamma(t, x, ModeIndex(i + 1)).norm();
        return H;
    }

    Vec rhs(double t, const Vec& x, const SimplexPoint& u) const {
        Vec acc = Vec::Zero(n);
        for (int i = 0; i < modes; ++i) {
            const double w = u[static_cast<std::size_t>(i)];
            if (w != 0.0) acc += w * fhat(t, x, ModeIndex(i + 1));
        }
        return acc;
    }

    double relaxed_output(double t, const Vec& x, const SimplexPoint& u) const {
        double acc = 0.0;
        for (int i = 0; i < modes; ++i) {
            const double w = u[static_cast<std::size_t>(i)];
            if (w != 0.0) acc += w * hgamma(t, x, ModeIndex(i + 1)).norm();
        }
        return acc;
    }

    /// Indices i with zero Hhat component (within tol) that are also active in the covering.
    std::vector<ModeIndex> face(double t, const Vec& x, double residual_tol, double boundary_tol) const {
        std::vector<ModeIndex> out;
        for (int i = 1; i <= modes; ++i) {
            const ModeIndex m(i);
            if (!covering.contains(x, m, boundary_tol)) continue;
            if (hgamma(t, x, m).norm() <= residual_tol) out.push_back(m);
        }
        return out;
    }
};

/// How the limiting functions are obtained.
struct LimitSpec {
    enum class Kind { time_invariant, user_supplied };
    Kind kind = Kind::time_invariant;
    ModeField fhat_gamma;
    ModeField h_gamma;  ///< optional; defaults to the system output when it does not depend on t

    static LimitSpec time_invariant() { return {}; }
    static LimitSpec user_supplied(ModeField fhat, ModeField h = {}) {
        return {Kind::user_supplied, std::move(fhat), std::move(h)};
    }
};

inline ReducedLimitingSystem build_reduced(const SwitchedSystem& sys, const Covering& chi,
                                           std::vector<ControlClassConstraint> constraints, const LimitSpec& spec) {
    sys.validate();
    if (chi.mode_count() != sys.modes) throw ParameterError("covering and system mode counts differ");
    ReducedLimitingSystem r;
    r.name = sys.name;
    r.n = sys.n;
    r.modes = sys.modes;
    r.covering = chi;
    r.constraints = std::move(constraints);
    if (spec.kind == LimitSpec::Kind::time_invariant) {
        if (!sys.time_invariant_limits) {
            throw UnsupportedError("time-dependent fhat needs user-supplied limiting functions");
        }
        r.fhat = sys.fhat ? sys.fhat : sys.f;
        r.hgamma = sys.h;
    } else {
        if (!spec.fhat_gamma) throw ParameterError("user-supplied limits need fhat_gamma");
        r.fhat = spec.fhat_gamma;
        r.hgamma = spec.h_gamma ? spec.h_gamma : sys.h;
    }
    return r;
}

/// max over the grid of Hhat(t, x(t)) u(t); zero means the output-zero constraint holds at grid resolution.
inline double output_residual(const ReducedLimitingSystem& sigma, const Trajectory& traj, const RelaxedControl& u) {
    double worst = 0.0;
    for (std::size_t k = 0; k < traj.size(); ++k) {
        worst = std::max(worst, sigma.relaxed_output(traj.times[k], traj.states[k], u(traj.times[k])));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Weak-limit surrogate
// ---------------------------------------------------------------------------

/// Pointwise mean of the sequence followed by a moving average over `window`.
/// The average is taken in "valid" mode: the output grid is trimmed by the
/// half-window at both ends, so every output window is an average of complete
/// input windows and integral lower bounds carry over exactly.
inline RelaxedControl windowed_weak_average(const std::vector<RelaxedControl>& seq, double window) {
    if (seq.empty()) throw InputError("weak average needs a nonempty sequence");
    const auto& ref = seq.front();
    for (const auto& u : seq) {
        if (u.cell_count() != ref.cell_count() || u.t0() != ref.t0() || u.step() != ref.step() ||
            u.mode_count() != ref.mode_count()) {
            throw InputError("weak average needs controls on a common grid");
        }
    }
    if (!(window > 0.0)) throw InputError("averaging window must be positive");
    const auto w = static_cast<std::size_t>(std::max(1.0, std::round(window / ref.step())));
    const std::size_t cells = ref.cell_count();
    if (w > cells) throw InputError("averaging window exceeds the control span");
    const int N = ref.mode_count();

    std::vector<Vec> mean(cells, Vec::Zero(N));
    for (const auto& u : seq) {
        for (std::size_t k = 0; k < cells; ++k) mean[k] += u.cell(k).weights();
    }
    for (auto& m : mean) m /= static_cast<double>(seq.size());

    const std::size_t out_cells = cells - w + 1;
    const std::size_t shift = (w - 1) / 2;
    std::vector<SimplexPoint> values;
    values.reserve(out_cells);
    Vec acc = Vec::Zero(N);
    for (std::size_t k = 0; k < w; ++k) acc += mean[k];
    for (std::size_t j = 0; j < out_cells; ++j) {
        if (j > 0) acc += mean[j + w - 1] - mean[j - 1];
        Vec v = acc / static_cast<double>(w);
        v = v.cwiseMax(0.0);
        values.emplace_back(v / v.sum());
    }
    return RelaxedControl(ref.cell_start(shift), ref.step(), std::move(values));
}

// ---------------------------------------------------------------------------
// Zeroing candidates and the falsifier
// ---------------------------------------------------------------------------

struct ZeroingCandidate {
    Trajectory trajectory;
    std::optional<RelaxedControl> control;
    std::optional<SwitchingSignal> signal;
    double eps = 0.0;  ///< min |x| over the span
    double output_sup = 0.0;
    double t_start = 0.0;
    double t_end = 0.0;
    std::size_t source_index = 0;  ///< candidate index or batch index
    std::string origin;
};

struct FalsifierConfig {
    double eps = 0.5;
    double span = 5.0;
    double residual_tol = 1e-8;
    std::size_t budget = 10000;
    std::uint64_t seed = 1;
    double control_step = 1e-2;
    IntegratorConfig integrator{};
    double x0_radius = 1.0;
    /// Candidates leaving this norm are discarded (not bounded).
    double bound_radius = 1e3;
    /// Explicit initial states evaluated before random ones.
    std::vector<Vec> seed_states;
    std::size_t random_face_controls = 16;
    std::size_t pattern_controls = 4;
    unsigned workers = 1;
    /// Re-validation integrates with step / refine.
    double refine = 4.0;
};

struct FalsifierVerdict {
    bool counterexample_found = false;
    std::size_t budget_used = 0;
    std::optional<ZeroingCandidate> counterexample;
    std::size_t revalidation_failures = 0;
    std::map<std::string, std::size_t> discard_reasons;
    FalsifierConfig config;

    std::string verdict() const { return counterexample_found ? "counterexample" : "no_counterexample_found"; }

    nlohmann::json to_json() const {
        nlohmann::json reasons = nlohmann::json::object();
        for (const auto& [k, v] : discard_reasons) reasons[k] = v;
        nlohmann::json j = {{"verdict", verdict()},
                            {"budget_used", budget_used},
                            {"budget", config.budget},
                            {"seed", config.seed},
                            {"eps", config.eps},
                            {"residual_tol", config.residual_tol},
                            {"span", config.span},
                            {"control_step", config.control_step},
                            {"integrator_step", config.integrator.step},
                            {"revalidation_step", config.integrator.step / config.refine},
                            {"revalidation_failures", revalidation_failures},
                            {"discard_reasons", reasons}};
        if (counterexample) {
            std::vector<double> x0(counterexample->trajectory.states.front().data(),
                                   counterexample->trajectory.states.front().data() +
                                       counterexample->trajectory.states.front().size());
            j["counterexample"] = {{"candidate_index", counterexample->source_index},
                                   {"origin", counterexample->origin},
                                   {"x0", x0},
                                   {"min_norm", counterexample->eps},
                                   {"output_sup", counterexample->output_sup}};
        }
        return j;
    }
};

namespace detail {

/// Cell labels (1, 2 or 0 = free) for pattern-respecting controls. Blocks
/// 1-2-1 with lengths in [dm, dM] are separated by free gaps no longer than
/// T - B_k - B_{k+1}, so every window of length T contains a whole block.
inline std::vector<int> pattern_schedule(const PatternConstraint& c, double step, std::size_t cells,
                                         std::mt19937_64& rng, bool gaps) {
    const auto dm = static_cast<long long>(std::ceil(c.dm / step - 1e-9));
    const auto dM = static_cast<long long>(std::floor(c.dM / step + 1e-9));
    const auto T = static_cast<long long>(std::floor(c.T / step + 1e-9));
    std::vector<int> lab(cells, 1);
    if (dm > dM || T < 3 * dm) return lab;
    auto draw = [&](long long lo, long long hi) {
        if (hi <= lo) return lo;
        return std::uniform_int_distribution<long long>(lo, hi)(rng);
    };
    const long long hi_len = std::min(dM, std::max(dm, T / 3));
    long long k = 0;
    long long prev_block = 0;
    bool first = true;
    while (k < static_cast<long long>(cells)) {
        const long long d1 = draw(dm, hi_len);
        const long long d2 = draw(dm, hi_len);
        const long long d3 = draw(dm, hi_len);
        const long long B = d1 + d2 + d3;
        if (!first && gaps) {
            const long long gmax = std::max(0LL, T - prev_block - B);
            const long long g = draw(0, gmax / 2);
            for (long long j = 0; j < g && k < static_cast<long long>(cells); ++j) lab[static_cast<std::size_t>(k++)] = 0;
        }
        for (long long j = 0; j < B && k < static_cast<long long>(cells); ++j) {
            lab[static_cast<std::size_t>(k++)] = (j >= d1 && j < d1 + d2) ? 2 : 1;
        }
        prev_block = B;
        first = false;
    }
    return lab;
}

/// Random point of the simplex face spanned by `face` (Dirichlet(1) weights).
inline Vec random_face_point(std::mt19937_64& rng, int N, const std::vector<ModeIndex>& face) {
    Vec w = Vec::Zero(N);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    if (unif(rng) < 0.5) {
        w[static_cast<Eigen::Index>(face[std::uniform_int_distribution<std::size_t>(0, face.size() - 1)(rng)].zero_based())] = 1.0;
        return w;
    }
    std::exponential_distribution<double> ex(1.0);
    for (auto i : face) w[static_cast<Eigen::Index>(i.zero_based())] = ex(rng);
    return w / w.sum();
}

enum class CandidateKind { vertex_constant, vertex_pattern, random_face };

struct CandidatePlan {
    Vec x0;
    CandidateKind kind;
    int vertex = 1;
    std::uint64_t seed = 0;
};

inline Vec random_initial_state(std::mt19937_64& rng, int n, double radius) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec x(n);
    for (int j = 0; j < n; ++j) x[j] = gauss(rng);
    // Half of the draws zero a random coordinate subset, which reaches
    // invariant subspaces a generic direction misses.
    if (n > 1 && std::uniform_int_distribution<int>(0, 1)(rng) == 1) {
        const int keep = std::uniform_int_distribution<int>(0, n - 1)(rng);
        for (int j = 0; j < n; ++j) {
            if (j != keep && std::uniform_int_distribution<int>(0, 1)(rng) == 1) x[j] = 0.0;
        }
    }
    const double r = x.norm();
    if (r == 0.0) x[0] = 1.0;
    return radius * x / x.norm();
}

inline CandidatePlan plan_candidate(const ReducedLimitingSystem& sys, const FalsifierConfig& cfg, std::size_t index) {
    const std::size_t group = static_cast<std::size_t>(sys.modes) + cfg.pattern_controls + cfg.random_face_controls;
    const std::size_t g = index / group;
    const std::size_t slot = index % group;
    CandidatePlan plan;
    if (g < cfg.seed_states.size()) {
        plan.x0 = cfg.seed_states[g];
    } else {
        std::mt19937_64 rng(mix_seed(cfg.seed, 0x5eed0000ULL + g));
        plan.x0 = random_initial_state(rng, sys.n, cfg.x0_radius);
    }
    plan.seed = mix_seed(cfg.seed, index);
    if (slot < static_cast<std::size_t>(sys.modes)) {
        plan.kind = CandidateKind::vertex_constant;
        plan.vertex = static_cast<int>(slot) + 1;
    } else if (slot < static_cast<std::size_t>(sys.modes) + cfg.pattern_controls) {
        plan.kind = CandidateKind::vertex_pattern;
    } else {
        plan.kind = CandidateKind::random_face;
    }
    return plan;
}

inline const char* kind_name(CandidateKind k) {
    switch (k) {
        case CandidateKind::vertex_constant: return "vertex_constant";
        case CandidateKind::vertex_pattern: return "vertex_pattern";
        default: return "random_face";
    }
}

struct CandidateOutcome {
    bool accepted = false;
    std::string reason;
    std::optional<ZeroingCandidate> candidate;
};

/// Precomputed vertex-valued schedule for the open-loop candidates.
inline std::vector<SimplexPoint> open_loop_schedule(const ReducedLimitingSystem& sys, const FalsifierConfig& cfg,
                                                    const CandidatePlan& plan, std::size_t cells) {
    const int N = sys.modes;
    if (plan.kind == CandidateKind::vertex_constant) {
        return std::vector<SimplexPoint>(cells, SimplexPoint::vertex(N, ModeIndex(plan.vertex)));
    }
    std::mt19937_64 rng(plan.seed);
    const double t_end = static_cast<double>(cells) * cfg.control_step;
    const ControlClassConstraint* con = nullptr;
    for (const auto& c : sys.constraints) {
        if (c.kind != ControlClassConstraint::Kind::none) con = &c;
    }
    SwitchingSignal sigma = SwitchingSignal::constant(ModeIndex(1), 0.0, t_end);
    if (con && con->kind == ControlClassConstraint::Kind::pattern) {
        const auto lab = pattern_schedule(con->pattern, cfg.control_step, cells, rng, false);
        std::vector<SimplexPoint> out;
        out.reserve(cells);
        for (int l : lab) out.push_back(SimplexPoint::vertex(N, ModeIndex(l == 2 ? 2 : 1)));
        return out;
    }
    if (con && con->kind == ControlClassConstraint::Kind::integral_lower_bound && t_end >= con->integral.T0) {
        sigma = gen_measure_constrained(con->integral, N, 0.0, t_end, plan.seed);
    } else {
        sigma = gen_arbitrary(N, 0.0, t_end, std::max(cfg.control_step, t_end / 20.0), plan.seed);
    }
    return signal_to_control(sigma, N, 0.0, t_end, cfg.control_step).values();
}

/// Online evaluation of one candidate with early abort.
inline CandidateOutcome evaluate_candidate(const ReducedLimitingSystem& sys, const FalsifierConfig& cfg,
                                           std::size_t index) {
    const CandidatePlan plan = plan_candidate(sys, cfg, index);
    const int N = sys.modes;
    const double du = cfg.control_step;
    const auto cells = RelaxedControl::cells_for(0.0, cfg.span, du);
    const double t_end = static_cast<double>(cells) * du;
    const double tol = cfg.residual_tol;
    const double btol = cfg.integrator.boundary_tol;
    const ControlClassConstraint* integral = nullptr;
    const ControlClassConstraint* pattern = nullptr;
    for (const auto& c : sys.constraints) {
        if (c.kind == ControlClassConstraint::Kind::integral_lower_bound) integral = &c;
        if (c.kind == ControlClassConstraint::Kind::pattern) pattern = &c;
    }

    std::vector<SimplexPoint> fixed;
    std::vector<int> labels;
    std::mt19937_64 rng(plan.seed);
    if (plan.kind == CandidateKind::random_face) {
        if (pattern) labels = pattern_schedule(pattern->pattern, du, cells, rng, true);
    } else {
        fixed = open_loop_schedule(sys, cfg, plan, cells);
    }

    CandidateOutcome out;
    auto reject = [&](const char* why) {
        out.reason = why;
        return out;
    };
    // Admissibility of (t, x, u): norm shell, zero-output face, covering.
    auto admissible = [&](double t, const Vec& x, const SimplexPoint& u) -> const char* {
        const double r = x.norm();
        if (r < cfg.eps) return "norm_below_eps";
        if (r > cfg.bound_radius) return "unbounded";
        for (int i = 0; i < N; ++i) {
            if (u[static_cast<std::size_t>(i)] <= SimplexPoint::kTolerance) continue;
            const ModeIndex m(i + 1);
            if (sys.hgamma(t, x, m).norm() > tol) return "output_face";
            if (!sys.covering.contains(x, m, btol)) return "covering";
        }
        return nullptr;
    };

    std::vector<SimplexPoint> values;
    values.reserve(cells);
    Trajectory traj;
    std::vector<SimplexPoint> drive;
    Vec x = plan.x0;
    if (x.size() != sys.n) throw ParameterError("seed state dimension does not match the reduced system");
    double window_acc = 0.0;
    std::vector<double> cell_mass;
    const std::size_t window_cells =
        integral ? static_cast<std::size_t>(std::llround(integral->integral.T0 / du)) : 0;
    double min_norm = std::numeric_limits<double>::infinity();
    double out_sup = 0.0;

    for (std::size_t k = 0; k < cells; ++k) {
        const double ta = static_cast<double>(k) * du;
        const double tb = static_cast<double>(k + 1) * du;
        SimplexPoint u = SimplexPoint::vertex(N, ModeIndex(1));
        if (plan.kind != CandidateKind::random_face) {
            u = fixed[k];
        } else {
            const int lab = labels.empty() ? 0 : labels[k];
            if (lab != 0) {
                u = SimplexPoint::vertex(N, ModeIndex(lab));
            } else {
                const auto face = sys.face(ta, x, tol, btol);
                if (face.empty()) return reject("empty_face");
                Vec w = random_face_point(rng, N, face);
                if (integral) {
                    const auto c = integral->integral.mode;
                    const double need = integral->integral.delta0 / integral->integral.T0 * (1.0 + 1e-6);
                    const bool in_face = std::find(face.begin(), face.end(), c) != face.end();
                    const double wc = w[static_cast<Eigen::Index>(c.zero_based())];
                    if (in_face && wc < need) {
                        const double beta = (need - wc) / (1.0 - wc);
                        w *= (1.0 - beta);
                        w[static_cast<Eigen::Index>(c.zero_based())] += beta;
                    }
                }
                u = SimplexPoint(w);
            }
        }
        values.push_back(u);
        if (const char* why = admissible(ta, x, u)) return reject(why);
        if (k == 0) {
            traj.times.push_back(ta);
            traj.states.push_back(x);
            drive.push_back(u);
            traj.outputs.push_back(Vec::Constant(1, sys.relaxed_output(ta, x, u)));
        }
        min_norm = std::min(min_norm, x.norm());
        auto field = [&](double s, const Vec& y) { return sys.rhs(s, y, u); };
        double t = ta;
        while (t < tb) {
            double target = t + cfg.integrator.step;
            if (target >= tb || tb - target < cfg.integrator.step * 1e-6) target = tb;
            Vec next = rk4_step(field, t, x, target - t);
            if (!next.allFinite()) return reject("non_finite");
            x = std::move(next);
            t = target;
            if (const char* why = admissible(t, x, u)) return reject(why);
            const double y = sys.relaxed_output(t, x, u);
            out_sup = std::max(out_sup, y);
            min_norm = std::min(min_norm, x.norm());
            traj.times.push_back(t);
            traj.states.push_back(x);
            drive.push_back(u);
            traj.outputs.push_back(Vec::Constant(1, y));
        }
        if (integral) {
            const double mass = u.weight(integral->integral.mode) * du;
            cell_mass.push_back(mass);
            window_acc += mass;
            if (cell_mass.size() > window_cells) window_acc -= cell_mass[cell_mass.size() - window_cells - 1];
            if (cell_mass.size() >= window_cells && window_acc < integral->integral.delta0 - 1e-9) {
                return reject("integral_constraint");
            }
        }
    }
    traj.drive = std::move(drive);
    RelaxedControl control(0.0, du, std::move(values));
    for (const auto& c : sys.constraints) {
        if (!check_control_constraint(control, c).pass) return reject("class_constraint");
    }
    ZeroingCandidate cand;
    cand.trajectory = std::move(traj);
    cand.control = std::move(control);
    cand.eps = min_norm;
    cand.output_sup = out_sup;
    cand.t_start = 0.0;
    cand.t_end = t_end;
    cand.source_index = index;
    cand.origin = kind_name(plan.kind);
    out.accepted = true;
    out.candidate = std::move(cand);
    return out;
}

}  // namespace detail

/// Independent re-check of a candidate: fresh integration at a finer step,
/// then every condition is evaluated on the new grid.
inline bool revalidate_candidate(const ReducedLimitingSystem& sys, const ZeroingCandidate& cand,
                                 const FalsifierConfig& cfg, std::string* why = nullptr) {
    auto fail = [&](const char* w) {
        if (why) *why = w;
        return false;
    };
    if (!cand.control) return fail("no_control");
    const auto& u = *cand.control;
    IntegratorConfig fine = cfg.integrator;
    fine.step = cfg.integrator.step / cfg.refine;
    fine.event_bisection_tol = std::min(fine.event_bisection_tol, fine.step / 2.0);
    Trajectory traj;
    try {
        traj = simulate_relaxed(sys, u, u.t0(), cand.trajectory.states.front(), u.t_end(), fine);
    } catch (const BlowUpError&) {
        return fail("blow_up");
    }
    const double tol = cfg.residual_tol;
    for (std::size_t j = 0; j < traj.size(); ++j) {
        const double t = traj.times[j];
        const Vec& x = traj.states[j];
        if (x.norm() < cfg.eps) return fail("norm_below_eps");
        const std::size_t k = u.cell_at(t);
        std::vector<const SimplexPoint*> around{&u.cell(k)};
        if (k > 0 && u.cell_start(k) == t) around.push_back(&u.cell(k - 1));
        for (const auto* p : around) {
            for (int i = 0; i < sys.modes; ++i) {
                if ((*p)[static_cast<std::size_t>(i)] <= SimplexPoint::kTolerance) continue;
                const ModeIndex m(i + 1);
                if (sys.hgamma(t, x, m).norm() > tol) return fail("output_face");
                if (!sys.covering.contains(x, m, cfg.integrator.boundary_tol)) return fail("covering");
            }
            if (sys.relaxed_output(t, x, *p) > tol) return fail("residual");
        }
    }
    for (const auto& c : sys.constraints) {
        if (!check_control_constraint(u, c).pass) return fail("class_constraint");
    }
    return true;
}

/// Bounded search for a bounded, output-zero relaxed trajectory that stays
/// eps away from the origin. A miss is evidence, not proof.
inline FalsifierVerdict wzsd_falsify(const ReducedLimitingSystem& sys, const FalsifierConfig& cfg) {
    if (!(cfg.eps > 0.0)) throw ParameterError("falsifier eps must be positive");
    if (!(cfg.span > 0.0)) throw ParameterError("falsifier span must be positive");
    if (cfg.budget == 0) throw ParameterError("falsifier budget must be positive");
    if (!(cfg.control_step >= cfg.integrator.step)) {
        throw ParameterError("control step must not be smaller than the integrator step");
    }
    cfg.integrator.validate();
    FalsifierVerdict verdict;
    verdict.config = cfg;
    const unsigned workers = std::max(1u, cfg.workers);
    const std::size_t batch = std::max<std::size_t>(64, workers * 8);
    std::size_t next = 0;
    while (next < cfg.budget) {
        const std::size_t end = std::min(cfg.budget, next + batch);
        std::vector<detail::CandidateOutcome> outcomes(end - next);
        std::atomic<std::size_t> cursor{next};
        auto work = [&]() {
            while (true) {
                const std::size_t k = cursor.fetch_add(1);
                if (k >= end) break;
                outcomes[k - next] = detail::evaluate_candidate(sys, cfg, k);
            }
        };
        if (workers == 1) {
            work();
        } else {
            std::vector<std::thread> pool;
            for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
            for (auto& th : pool) th.join();
        }
        for (std::size_t j = 0; j < outcomes.size(); ++j) {
            auto& o = outcomes[j];
            if (!o.accepted) {
                ++verdict.discard_reasons[o.reason];
                continue;
            }
            if (!revalidate_candidate(sys, *o.candidate, cfg)) {
                ++verdict.revalidation_failures;
                ++verdict.discard_reasons["revalidation"];
                continue;
            }
            verdict.counterexample_found = true;
            verdict.budget_used = next + j + 1;
            verdict.counterexample = std::move(o.candidate);
            return verdict;
        }
        next = end;
    }
    verdict.budget_used = cfg.budget;
    return verdict;
}

// ---------------------------------------------------------------------------
// Switched-level zeroing-output diagnostics
// ---------------------------------------------------------------------------

struct ScanConfig {
    double eps = 0.1;
    double R = 1e3;
    double output_decay_tol = 1e-6;
    /// Segments shorter than this are not flagged.
    double min_duration = 5.0;
};

struct TrajectoryWithSignal {
    Trajectory trajectory;
    SwitchingSignal signal;
};

/// Segments staying in the shell eps <= |x| <= R with output norm at most
/// output_decay_tol for at least min_duration seconds.
inline std::vector<ZeroingCandidate> scan_zeroing_sequences(const std::vector<TrajectoryWithSignal>& batch,
                                                            const ScanConfig& cfg) {
    if (batch.empty()) throw InputError("zeroing scan needs a nonempty batch");
    std::vector<ZeroingCandidate> found;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& tr = batch[b].trajectory;
        if (tr.outputs.size() != tr.size()) throw InputError("zeroing scan needs trajectory outputs");
        std::size_t start = 0;
        bool open = false;
        double min_norm = std::numeric_limits<double>::infinity();
        double sup = 0.0;
        auto close = [&](std::size_t last) {
            if (open && tr.times[last] - tr.times[start] >= cfg.min_duration) {
                ZeroingCandidate c;
                c.t_start = tr.times[start];
                c.t_end = tr.times[last];
                c.eps = min_norm;
                c.output_sup = sup;
                c.source_index = b;
                c.origin = "scan";
                c.signal = batch[b].signal;
                c.trajectory.times.assign(tr.times.begin() + static_cast<std::ptrdiff_t>(start),
                                          tr.times.begin() + static_cast<std::ptrdiff_t>(last) + 1);
                c.trajectory.states.assign(tr.states.begin() + static_cast<std::ptrdiff_t>(start),
                                           tr.states.begin() + static_cast<std::ptrdiff_t>(last) + 1);
                c.trajectory.outputs.assign(tr.outputs.begin() + static_cast<std::ptrdiff_t>(start),
                                            tr.outputs.begin() + static_cast<std::ptrdiff_t>(last) + 1);
                if (tr.is_switched()) {
                    c.trajectory.drive = std::vector<ModeIndex>(
                        tr.modes().begin() + static_cast<std::ptrdiff_t>(start),
                        tr.modes().begin() + static_cast<std::ptrdiff_t>(last) + 1);
                }
                found.push_back(std::move(c));
            }
            open = false;
        };
        for (std::size_t k = 0; k < tr.size(); ++k) {
            const double r = tr.states[k].norm();
            const double y = tr.outputs[k].norm();
            const bool inside = r >= cfg.eps && r <= cfg.R && y <= cfg.output_decay_tol;
            if (inside) {
                if (!open) {
                    open = true;
                    start = k;
                    min_norm = r;
                    sup = y;
                } else {
                    min_norm = std::min(min_norm, r);
                    sup = std::max(sup, y);
                }
            } else if (open) {
                close(k - 1);
            }
        }
        if (open) close(tr.size() - 1);
    }
    return found;
}

}  // namespace switchstab
