#pragma once

// Domain types shared by every module: mode indices, switching signals,
// relaxed controls on the probability simplex, closed coverings, switched
// systems and sampled trajectories.

#include "switchstab/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace switchstab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Storage granularity of generated switching signals (seconds).
inline constexpr double kTimeQuantum = 1e-4;

/// One-based mode index i in {1, ..., N}.
class ModeIndex {
public:
    constexpr ModeIndex() = default;
    constexpr explicit ModeIndex(int value) : value_(value) {}

    constexpr int value() const noexcept { return value_; }
    constexpr std::size_t zero_based() const noexcept { return static_cast<std::size_t>(value_ - 1); }
    constexpr bool valid_for(int mode_count) const noexcept { return value_ >= 1 && value_ <= mode_count; }

    friend constexpr auto operator<=>(ModeIndex, ModeIndex) = default;

private:
    int value_ = 1;
};

// ---------------------------------------------------------------------------
// Simplex
// ---------------------------------------------------------------------------

/// A point of U = { mu >= 0, sum mu = 1 }.
class SimplexPoint {
public:
    static constexpr double kTolerance = 1e-12;
    static constexpr double kRenormalizeLimit = 1e-9;

    explicit SimplexPoint(Vec weights) : weights_(std::move(weights)) {
        if (weights_.size() == 0) {
            throw ParameterError("simplex point needs at least one weight");
        }
        for (Eigen::Index i = 0; i < weights_.size(); ++i) {
            const double w = weights_[i];
            if (!std::isfinite(w) || w < -kTolerance) {
                throw ParameterError("simplex weight must be finite and nonnegative");
            }
            if (w < 0.0) weights_[i] = 0.0;
        }
        const double sum = weights_.sum();
        const double dev = std::abs(sum - 1.0);
        if (dev > kRenormalizeLimit) {
            throw ParameterError("simplex weights must sum to 1 (sum = " + std::to_string(sum) + ")");
        }
        if (dev > kTolerance) weights_ /= sum;
    }

    static SimplexPoint vertex(int mode_count, ModeIndex i) {
        if (!i.valid_for(mode_count)) throw ParameterError("vertex index out of range");
        Vec w = Vec::Zero(mode_count);
        w[static_cast<Eigen::Index>(i.zero_based())] = 1.0;
        return SimplexPoint(std::move(w));
    }

    static SimplexPoint barycenter(int mode_count) {
        return SimplexPoint(Vec::Constant(mode_count, 1.0 / mode_count));
    }

    int size() const noexcept { return static_cast<int>(weights_.size()); }
    const Vec& weights() const noexcept { return weights_; }
    double operator[](std::size_t i) const { return weights_[static_cast<Eigen::Index>(i)]; }
    double weight(ModeIndex i) const { return weights_[static_cast<Eigen::Index>(i.zero_based())]; }

    /// Index of the vertex this point sits on, if any.
    std::optional<ModeIndex> as_vertex(double tol = kTolerance) const {
        for (Eigen::Index i = 0; i < weights_.size(); ++i) {
            if (std::abs(weights_[i] - 1.0) <= tol) return ModeIndex(static_cast<int>(i) + 1);
        }
        return std::nullopt;
    }

    friend bool operator==(const SimplexPoint& a, const SimplexPoint& b) {
        return a.weights_.size() == b.weights_.size() && a.weights_ == b.weights_;
    }

private:
    Vec weights_;
};

// ---------------------------------------------------------------------------
// Switching signal
// ---------------------------------------------------------------------------

/// Right-continuous piecewise-constant map from [domain_start, domain_end]
/// into mode indices, stored as sorted interval start times.
class SwitchingSignal {
public:
    SwitchingSignal(std::vector<double> starts, std::vector<ModeIndex> modes, double domain_end)
        : starts_(std::move(starts)), modes_(std::move(modes)), end_(domain_end) {
        if (starts_.empty() || starts_.size() != modes_.size()) {
            throw ParameterError("switching signal needs one mode per interval");
        }
        for (std::size_t k = 1; k < starts_.size(); ++k) {
            if (!(starts_[k] > starts_[k - 1])) {
                throw ParameterError("switching signal breakpoints must be strictly increasing");
            }
        }
        if (!(end_ > starts_.back())) throw ParameterError("signal domain end must follow the last breakpoint");
        for (auto m : modes_) {
            if (m.value() < 1) throw ParameterError("mode indices are one-based");
        }
    }

    static SwitchingSignal constant(ModeIndex mode, double start, double end) {
        return SwitchingSignal({start}, {mode}, end);
    }

    double domain_start() const noexcept { return starts_.front(); }
    double domain_end() const noexcept { return end_; }
    const std::vector<double>& starts() const noexcept { return starts_; }
    const std::vector<ModeIndex>& modes() const noexcept { return modes_; }
    std::size_t interval_count() const noexcept { return starts_.size(); }

    double interval_end(std::size_t k) const { return k + 1 < starts_.size() ? starts_[k + 1] : end_; }

    bool covers(double a, double b) const noexcept { return a >= domain_start() && b <= domain_end(); }

    /// Index of the interval containing t; the closed right end maps to the last one.
    std::size_t interval_at(double t) const {
        if (t < domain_start() || t > domain_end()) {
            throw DomainError("time " + std::to_string(t) + " outside switching signal domain");
        }
        auto it = std::upper_bound(starts_.begin(), starts_.end(), t);
        return static_cast<std::size_t>(std::distance(starts_.begin(), it)) - 1;
    }

    ModeIndex operator()(double t) const { return modes_[interval_at(t)]; }

    int max_mode() const noexcept {
        int m = 1;
        for (auto i : modes_) m = std::max(m, i.value());
        return m;
    }

    /// Switch times strictly inside (a, b).
    std::vector<double> breakpoints_in(double a, double b) const {
        std::vector<double> out;
        for (std::size_t k = 1; k < starts_.size(); ++k) {
            if (starts_[k] > a && starts_[k] < b) out.push_back(starts_[k]);
        }
        return out;
    }

    /// Same signal with consecutive equal modes merged.
    SwitchingSignal canonical() const {
        std::vector<double> s{starts_.front()};
        std::vector<ModeIndex> m{modes_.front()};
        for (std::size_t k = 1; k < starts_.size(); ++k) {
            if (modes_[k] != m.back()) {
                s.push_back(starts_[k]);
                m.push_back(modes_[k]);
            }
        }
        return SwitchingSignal(std::move(s), std::move(m), end_);
    }

    /// Restriction to [a, b] (must lie inside the domain).
    SwitchingSignal restricted(double a, double b) const {
        if (!covers(a, b) || !(b > a)) throw DomainError("restriction span outside signal domain");
        std::vector<double> s{a};
        std::vector<ModeIndex> m{(*this)(a)};
        for (std::size_t k = 1; k < starts_.size(); ++k) {
            if (starts_[k] > a && starts_[k] < b) {
                s.push_back(starts_[k]);
                m.push_back(modes_[k]);
            }
        }
        return SwitchingSignal(std::move(s), std::move(m), b);
    }

private:
    std::vector<double> starts_;
    std::vector<ModeIndex> modes_;
    double end_;
};

// ---------------------------------------------------------------------------
// Relaxed control
// ---------------------------------------------------------------------------

/// Piecewise-constant simplex-valued control on a uniform grid.
/// Cell k covers [t0 + k*step, t0 + (k+1)*step).
class RelaxedControl {
public:
    RelaxedControl(double t0, double step, std::vector<SimplexPoint> values)
        : t0_(t0), step_(step), values_(std::move(values)) {
        if (!(step_ > 0.0) || !std::isfinite(step_)) throw ParameterError("control grid step must be positive");
        if (values_.empty()) throw ParameterError("relaxed control needs at least one cell");
        const int n = values_.front().size();
        for (const auto& v : values_) {
            if (v.size() != n) throw ParameterError("relaxed control cells must share the mode count");
        }
    }

    static RelaxedControl constant(const SimplexPoint& value, double t0, double t1, double step) {
        const auto cells = cells_for(t0, t1, step);
        return RelaxedControl(t0, step, std::vector<SimplexPoint>(cells, value));
    }

    /// Number of cells needed to cover [t0, t1] with the given step.
    static std::size_t cells_for(double t0, double t1, double step) {
        if (!(t1 > t0)) throw ParameterError("control span must be nonempty");
        const double ratio = (t1 - t0) / step;
        auto cells = static_cast<std::size_t>(std::ceil(ratio - 1e-9));
        return std::max<std::size_t>(cells, 1);
    }

    double t0() const noexcept { return t0_; }
    double step() const noexcept { return step_; }
    double t_end() const noexcept { return cell_start(values_.size()); }
    int mode_count() const noexcept { return values_.front().size(); }
    std::size_t cell_count() const noexcept { return values_.size(); }
    const std::vector<SimplexPoint>& values() const noexcept { return values_; }
    const SimplexPoint& cell(std::size_t k) const { return values_.at(k); }

    double cell_start(std::size_t k) const noexcept { return t0_ + static_cast<double>(k) * step_; }

    std::size_t cell_at(double t) const {
        if (t < t0_ || t > t_end()) throw DomainError("time " + std::to_string(t) + " outside control domain");
        auto k = static_cast<std::size_t>(std::floor((t - t0_) / step_));
        if (k >= values_.size()) k = values_.size() - 1;
        // Guard against rounding at exact cell starts.
        while (k + 1 < values_.size() && cell_start(k + 1) <= t) ++k;
        while (k > 0 && cell_start(k) > t) --k;
        return k;
    }

    const SimplexPoint& operator()(double t) const { return values_[cell_at(t)]; }

    /// Cell start times where the value differs from the previous cell.
    std::vector<double> change_points() const {
        std::vector<double> out;
        for (std::size_t k = 1; k < values_.size(); ++k) {
            if (!(values_[k] == values_[k - 1])) out.push_back(cell_start(k));
        }
        return out;
    }

    /// Exact integral of weight i over [a, b] (clipped to the domain).
    double integral(ModeIndex i, double a, double b) const {
        a = std::max(a, t0_);
        b = std::min(b, t_end());
        if (!(b > a)) return 0.0;
        const std::size_t ka = cell_at(a);
        const std::size_t kb = cell_at(b);
        double acc = 0.0;
        for (std::size_t k = ka; k <= kb && k < values_.size(); ++k) {
            const double lo = std::max(a, cell_start(k));
            const double hi = std::min(b, cell_start(k + 1));
            if (hi > lo) acc += values_[k].weight(i) * (hi - lo);
        }
        return acc;
    }

private:
    double t0_;
    double step_;
    std::vector<SimplexPoint> values_;
};

// ---------------------------------------------------------------------------
// Covering
// ---------------------------------------------------------------------------

/// Scalar boundary function; the closed piece is { xi : g(xi) >= 0 }.
using BoundaryFunction = std::function<double(const Vec&)>;

/// Closed covering {chi_1, ..., chi_N} of R^n. Each piece is the intersection of
/// closed sets { g >= 0 }; a piece with no boundary functions is all of R^n.
class Covering {
public:
    explicit Covering(std::vector<std::vector<BoundaryFunction>> pieces) : pieces_(std::move(pieces)) {
        if (pieces_.empty()) throw ParameterError("covering needs at least one piece");
    }

    static Covering trivial(int mode_count) {
        return Covering(std::vector<std::vector<BoundaryFunction>>(static_cast<std::size_t>(mode_count)));
    }

    int mode_count() const noexcept { return static_cast<int>(pieces_.size()); }
    bool is_trivial() const noexcept {
        return std::all_of(pieces_.begin(), pieces_.end(), [](const auto& p) { return p.empty(); });
    }
    const std::vector<BoundaryFunction>& boundaries(ModeIndex i) const { return pieces_.at(i.zero_based()); }

    /// Smallest boundary-function value of piece i at xi (+inf for an unconstrained piece).
    double margin(const Vec& xi, ModeIndex i) const {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& g : boundaries(i)) m = std::min(m, g(xi));
        return m;
    }

    /// Closed-set membership; tol widens every piece by tol in boundary-function units.
    bool contains(const Vec& xi, ModeIndex i, double tol = 0.0) const { return margin(xi, i) >= -tol; }

private:
    std::vector<std::vector<BoundaryFunction>> pieces_;
};

/// I_xi = { i : xi in chi_i }.
inline std::vector<ModeIndex> active_index_set(const Vec& xi, const Covering& chi, double tol = 0.0) {
    std::vector<ModeIndex> out;
    for (int i = 1; i <= chi.mode_count(); ++i) {
        if (chi.contains(xi, ModeIndex(i), tol)) out.emplace_back(i);
    }
    if (out.empty()) throw CoveringViolation("state is not covered by any piece");
    return out;
}

/// Generators {e_i : i in I_xi} of U_xi = co{e_i : i in I_xi}.
class AdmissibleSet {
public:
    AdmissibleSet(int mode_count, std::vector<ModeIndex> indices)
        : mode_count_(mode_count), indices_(std::move(indices)) {}

    const std::vector<ModeIndex>& indices() const noexcept { return indices_; }

    std::vector<SimplexPoint> vertices() const {
        std::vector<SimplexPoint> out;
        out.reserve(indices_.size());
        for (auto i : indices_) out.push_back(SimplexPoint::vertex(mode_count_, i));
        return out;
    }

    bool contains_index(ModeIndex i) const {
        return std::find(indices_.begin(), indices_.end(), i) != indices_.end();
    }

    /// p in U_xi iff p puts (numerically) zero weight on every excluded index.
    bool contains(const SimplexPoint& p) const {
        if (p.size() != mode_count_) return false;
        for (int i = 1; i <= mode_count_; ++i) {
            if (!contains_index(ModeIndex(i)) && p.weight(ModeIndex(i)) > SimplexPoint::kTolerance) return false;
        }
        return true;
    }

    /// Vertex index set of this set is a subset of the other's.
    bool nested_in(const AdmissibleSet& other) const {
        return std::all_of(indices_.begin(), indices_.end(), [&](ModeIndex i) { return other.contains_index(i); });
    }

private:
    int mode_count_;
    std::vector<ModeIndex> indices_;
};

inline AdmissibleSet admissible_control_set(const Vec& xi, const Covering& chi, double tol = 0.0) {
    return AdmissibleSet(chi.mode_count(), active_index_set(xi, chi, tol));
}

// ---------------------------------------------------------------------------
// Switched system
// ---------------------------------------------------------------------------

using ModeField = std::function<Vec(double t, const Vec& x, ModeIndex i)>;

/// Bundle of mode dynamics f_i, outputs h_i and the decomposition f_i = fhat_i + dferr_i.
struct SwitchedSystem {
    std::string name;
    int n = 0;          ///< state dimension
    int modes = 0;      ///< N
    int outputs = 1;    ///< p
    ModeField f;
    ModeField h;
    ModeField fhat;
    ModeField dferr;    ///< optional zeroing part; empty when not supplied
    bool time_invariant_limits = false;

    void validate() const {
        if (n < 1 || modes < 1 || outputs < 1) throw ParameterError("system dimensions must be positive");
        if (!f || !h) throw ParameterError("system needs f and h");
    }

    Vec rhs(double t, const Vec& x, ModeIndex i) const { return f(t, x, i); }

    /// Sum_i u_i f_i(t, x); zero weights are skipped so vertex controls reproduce f exactly.
    Vec rhs(double t, const Vec& x, const SimplexPoint& u) const {
        Vec acc = Vec::Zero(n);
        for (int i = 0; i < modes; ++i) {
            const double w = u[static_cast<std::size_t>(i)];
            if (w != 0.0) acc += w * f(t, x, ModeIndex(i + 1));
        }
        return acc;
    }

    /// Scalar gauge |h_i(t, x)| used by the relaxed output H-hat u.
    double output_gauge(double t, const Vec& x, ModeIndex i) const { return h(t, x, i).norm(); }

    double relaxed_output(double t, const Vec& x, const SimplexPoint& u) const {
        double acc = 0.0;
        for (int i = 0; i < modes; ++i) {
            const double w = u[static_cast<std::size_t>(i)];
            if (w != 0.0) acc += w * output_gauge(t, x, ModeIndex(i + 1));
        }
        return acc;
    }
};

// ---------------------------------------------------------------------------
// Trajectory
// ---------------------------------------------------------------------------

/// Time grid, states, drive (mode or simplex point) and outputs.
struct Trajectory {
    std::vector<double> times;
    std::vector<Vec> states;
    std::variant<std::vector<ModeIndex>, std::vector<SimplexPoint>> drive;
    std::vector<Vec> outputs;
    /// Optional per-point estimate of the local error of the step ending there.
    std::vector<double> local_error;

    std::size_t size() const noexcept { return times.size(); }
    bool empty() const noexcept { return times.empty(); }
    bool is_switched() const noexcept { return std::holds_alternative<std::vector<ModeIndex>>(drive); }
    const std::vector<ModeIndex>& modes() const { return std::get<std::vector<ModeIndex>>(drive); }
    const std::vector<SimplexPoint>& controls() const { return std::get<std::vector<SimplexPoint>>(drive); }

    int dimension() const noexcept { return states.empty() ? 0 : static_cast<int>(states.front().size()); }

    std::vector<double> norms() const {
        std::vector<double> out;
        out.reserve(states.size());
        for (const auto& x : states) out.push_back(x.norm());
        return out;
    }

    /// Checks the structural invariants (strictly increasing times, finite states).
    bool well_formed() const {
        if (times.size() != states.size()) return false;
        for (std::size_t k = 1; k < times.size(); ++k) {
            if (!(times[k] > times[k - 1])) return false;
        }
        return std::all_of(states.begin(), states.end(), [](const Vec& x) { return x.allFinite(); });
    }
};

// ---------------------------------------------------------------------------
// Embedding sigma -> u_sigma
// ---------------------------------------------------------------------------

/// Vertex control e_{sigma(t)} sampled at cell midpoints on [t0, t1].
inline RelaxedControl signal_to_control(const SwitchingSignal& sigma, int mode_count, double t0, double t1,
                                        double step) {
    if (!(step > 0.0)) throw ParameterError("control step must be positive");
    if (!sigma.covers(t0, t1)) throw DomainError("requested span lies outside the signal domain");
    const auto cells = RelaxedControl::cells_for(t0, t1, step);
    std::vector<SimplexPoint> values;
    values.reserve(cells);
    // Vertices are shared between cells with equal modes.
    std::vector<std::optional<SimplexPoint>> cache(static_cast<std::size_t>(mode_count));
    for (std::size_t k = 0; k < cells; ++k) {
        const double mid = std::min(t0 + (static_cast<double>(k) + 0.5) * step, sigma.domain_end());
        const ModeIndex m = sigma(mid);
        if (!m.valid_for(mode_count)) throw ParameterError("signal mode exceeds the mode count");
        auto& slot = cache[m.zero_based()];
        if (!slot) slot = SimplexPoint::vertex(mode_count, m);
        values.push_back(*slot);
    }
    return RelaxedControl(t0, step, std::move(values));
}

inline RelaxedControl signal_to_control(const SwitchingSignal& sigma, int mode_count, double step) {
    return signal_to_control(sigma, mode_count, sigma.domain_start(), sigma.domain_end(), step);
}

}  // namespace switchstab
