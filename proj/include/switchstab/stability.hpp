#pragma once

// Empirical stability verdicts: max-envelope tables over Monte Carlo
// ensembles, monotone regularization and threshold classification.

#include "switchstab/core.hpp"
#include "switchstab/integrate.hpp"
#include "switchstab/signals.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace switchstab {

struct StabilityEnvelope {
    /// Increasing bin edges; row b holds initial norms in (edge[b-1], edge[b]], the first row (edge[0]/2, edge[0]].
    std::vector<double> radius_bins;
    std::vector<double> tau_grid;
    /// beta_table[b][j] = max observed |x(s + tau_j)| over row b.
    std::vector<std::vector<double>> beta_table;
    std::size_t trials_per_cell = 0;
    /// Sub-envelopes split by the start-time offset (below / above the offset midpoint).
    std::vector<std::vector<double>> early_table;
    std::vector<std::vector<double>> late_table;
    double regularization_residual = 0.0;
    bool radius_monotonicity_flag = false;
    std::size_t blow_ups = 0;

    std::size_t rows() const { return beta_table.size(); }
    std::size_t cols() const { return tau_grid.size(); }

    bool has_infinity() const {
        for (const auto& r : beta_table) {
            for (double v : r) {
                if (!std::isfinite(v)) return true;
            }
        }
        return false;
    }

    /// Largest cell-wise relative gap between the early and late sub-envelopes,
    /// skipping cells where both are below `floor`.
    double uniformity_gap(double floor) const {
        double worst = 0.0;
        for (std::size_t b = 0; b < early_table.size(); ++b) {
            for (std::size_t j = 0; j < early_table[b].size(); ++j) {
                const double e = early_table[b][j];
                const double l = late_table[b][j];
                if (!std::isfinite(e) || !std::isfinite(l)) return std::numeric_limits<double>::infinity();
                const double m = std::max(e, l);
                if (m < floor) continue;
                worst = std::max(worst, std::abs(e - l) / m);
            }
        }
        return worst;
    }
};

struct EnvelopeConfig {
    std::vector<double> radius_bins{0.5, 1.0, 2.0};
    double horizon = 200.0;
    double tau_step = 5.0;
    std::size_t trials = 200;
    /// Start times are drawn uniformly from [0, max_offset].
    double max_offset = 50.0;
    std::uint64_t seed = 1;
    unsigned workers = 1;

    std::vector<double> tau_grid() const {
        std::vector<double> g;
        const auto count = static_cast<std::size_t>(std::floor(horizon / tau_step + 1e-9));
        for (std::size_t j = 0; j <= count; ++j) g.push_back(static_cast<double>(j) * tau_step);
        if (horizon - g.back() > 1e-9) g.push_back(horizon);
        return g;
    }

    void validate() const {
        if (radius_bins.empty()) throw ParameterError("envelope needs at least one radius bin");
        for (std::size_t b = 0; b < radius_bins.size(); ++b) {
            if (!(radius_bins[b] >= 0.0) || (b > 0 && !(radius_bins[b] > radius_bins[b - 1]))) {
                throw ParameterError("radius bins must be nonnegative and increasing");
            }
        }
        if (!(horizon >= 0.0) || !(tau_step > 0.0)) throw ParameterError("envelope horizon and tau step invalid");
        if (trials < 1) throw ParameterError("envelope needs at least one trial");
        if (!(max_offset >= 0.0)) throw ParameterError("offset bound must be nonnegative");
    }
};

/// One Monte Carlo trial: given x0, the start time s and a seed, return
/// |x(s + tau_j)| for every tau on the grid (+inf after a blow-up).
using TrialRunner =
    std::function<std::vector<double>(const Vec& x0, double s, std::uint64_t seed, const std::vector<double>& taus)>;

/// A signal generator over [t0, t1] seeded by `seed`.
using SignalSource = std::function<SwitchingSignal(double t0, double t1, std::uint64_t seed)>;

namespace detail {

inline Vec random_direction(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> g(0.0, 1.0);
    Vec v(n);
    do {
        for (int j = 0; j < n; ++j) v[j] = g(rng);
    } while (v.norm() == 0.0);
    return v / v.norm();
}

}  // namespace detail

/// Samples |x(s + tau)| at the grid via `simulate`; blow-ups give +inf from
/// the blow-up time on.
inline TrialRunner switched_trial_runner(const SwitchedSystem& sys, SignalSource source, IntegratorConfig cfg) {
    return [&sys, source = std::move(source), cfg](const Vec& x0, double s, std::uint64_t seed,
                                                   const std::vector<double>& taus) {
        const double tf = s + taus.back();
        std::vector<double> out(taus.size(), std::numeric_limits<double>::infinity());
        if (taus.back() == 0.0) {
            out[0] = x0.norm();
            return out;
        }
        std::vector<double> extra;
        for (double tau : taus) extra.push_back(s + tau);
        const SwitchingSignal sigma = source(0.0, tf, seed);
        Trajectory tr;
        try {
            tr = simulate(sys, sigma, s, x0, tf, cfg, extra);
        } catch (const BlowUpError& e) {
            tr = e.partial();
        } catch (const DynamicsError&) {
            return out;
        }
        std::size_t k = 0;
        for (std::size_t j = 0; j < taus.size(); ++j) {
            const double t = s + taus[j];
            while (k + 1 < tr.size() && tr.times[k + 1] <= t + 1e-12) ++k;
            if (k < tr.size() && std::abs(tr.times[k] - t) <= 1e-9 * std::max(1.0, std::abs(t))) {
                out[j] = tr.states[k].norm();
            }
        }
        return out;
    };
}

/// Monte Carlo envelope. Each trial draws a direction, a norm in its bin, a
/// start offset and a signal seed from the master seed and its index, so the
/// result does not depend on the worker count.
inline StabilityEnvelope estimate_envelope(const TrialRunner& run, int n, const EnvelopeConfig& cfg) {
    cfg.validate();
    if (n < 1) throw ParameterError("state dimension must be positive");
    StabilityEnvelope env;
    env.radius_bins = cfg.radius_bins;
    env.tau_grid = cfg.tau_grid();
    env.trials_per_cell = cfg.trials;
    const std::size_t B = cfg.radius_bins.size();
    const std::size_t J = env.tau_grid.size();
    const std::size_t total = B * cfg.trials;

    std::vector<std::vector<double>> results(total);
    std::vector<double> offsets(total, 0.0);
    std::atomic<std::size_t> cursor{0};
    auto work = [&]() {
        while (true) {
            const std::size_t idx = cursor.fetch_add(1);
            if (idx >= total) break;
            const std::size_t b = idx / cfg.trials;
            std::mt19937_64 rng(mix_seed(cfg.seed, idx));
            const double hi = cfg.radius_bins[b];
            const double lo = b == 0 ? hi / 2.0 : cfg.radius_bins[b - 1];
            const double r = std::uniform_real_distribution<double>(lo, hi)(rng);
            const Vec x0 = r * detail::random_direction(rng, n);
            const double s = snap_time(std::uniform_real_distribution<double>(0.0, cfg.max_offset)(rng));
            offsets[idx] = s;
            results[idx] = run(x0, s, mix_seed(cfg.seed ^ 0x9e3779b97f4a7c15ULL, idx), env.tau_grid);
        }
    };
    const unsigned workers = std::max(1u, cfg.workers);
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }

    env.beta_table.assign(B, std::vector<double>(J, 0.0));
    env.early_table.assign(B, std::vector<double>(J, 0.0));
    env.late_table.assign(B, std::vector<double>(J, 0.0));
    const double mid = cfg.max_offset / 2.0;
    for (std::size_t idx = 0; idx < total; ++idx) {
        const std::size_t b = idx / cfg.trials;
        auto& split = offsets[idx] < mid ? env.early_table : env.late_table;
        bool blew = false;
        for (std::size_t j = 0; j < J; ++j) {
            const double v = results[idx][j];
            if (!std::isfinite(v)) blew = true;
            env.beta_table[b][j] = std::max(env.beta_table[b][j], v);
            split[b][j] = std::max(split[b][j], v);
        }
        if (blew) ++env.blow_ups;
    }
    return env;
}

inline StabilityEnvelope estimate_envelope(const SwitchedSystem& sys, SignalSource source, const EnvelopeConfig& cfg,
                                           const IntegratorConfig& integ) {
    return estimate_envelope(switched_trial_runner(sys, std::move(source), integ), sys.n, cfg);
}

/// Cells below this fraction of their bin edge are at the integration noise
/// floor and are not counted by the bin-monotonicity flag.
inline constexpr double kMonotonicityFloor = 1e-3;

/// Running max from the right along tau, then running max up the bins.
/// Records the largest relative correction in `regularization_residual` and
/// flags bin-monotonicity corrections beyond 5%.
inline StabilityEnvelope regularize(StabilityEnvelope env) {
    double residual = 0.0;
    for (auto& row : env.beta_table) {
        for (std::size_t j = row.size(); j-- > 1;) {
            const double right = row[j];
            if (right > row[j - 1]) {
                if (std::isfinite(right)) residual = std::max(residual, (right - row[j - 1]) / right);
                row[j - 1] = right;
            }
        }
    }
    bool flag = false;
    for (std::size_t b = 1; b < env.beta_table.size(); ++b) {
        for (std::size_t j = 0; j < env.beta_table[b].size(); ++j) {
            const double below = env.beta_table[b - 1][j];
            double& here = env.beta_table[b][j];
            if (below > here) {
                const bool material = below > kMonotonicityFloor * env.radius_bins[b];
                if (!std::isfinite(below) || (material && (below - here) > 0.05 * below)) flag = true;
                here = below;
            }
        }
    }
    env.regularization_residual = residual;
    env.radius_monotonicity_flag = flag;
    return env;
}

enum class StabilityVerdict { guas_consistent, us_only, inconclusive, unstable_evidence };

inline std::string to_string(StabilityVerdict v) {
    switch (v) {
        case StabilityVerdict::guas_consistent: return "GUAS-consistent";
        case StabilityVerdict::us_only: return "US-only";
        case StabilityVerdict::unstable_evidence: return "unstable-evidence";
        default: return "inconclusive";
    }
}

struct ClassifyConfig {
    double decay_ratio = 0.05;
    double tail_fraction = 0.2;
    /// Rows must stay below gain_bound times their bin edge.
    double gain_bound = 1e3;
};

struct ClassifyReport {
    StabilityVerdict verdict = StabilityVerdict::inconclusive;
    ClassifyConfig thresholds;
    std::vector<double> tail_ratios;  ///< per row: max tail / first column
    double max_gain = 0.0;
    double regularization_residual = 0.0;
    bool radius_monotonicity_flag = false;

    nlohmann::json to_json() const {
        nlohmann::json j = {{"verdict", to_string(verdict)},
                            {"decay_ratio", thresholds.decay_ratio},
                            {"tail_fraction", thresholds.tail_fraction},
                            {"gain_bound", thresholds.gain_bound},
                            {"max_gain", std::isfinite(max_gain) ? nlohmann::json(max_gain) : nlohmann::json("inf")},
                            {"regularization_residual", regularization_residual},
                            {"radius_monotonicity_flag", radius_monotonicity_flag}};
        nlohmann::json ratios = nlohmann::json::array();
        for (double r : tail_ratios) ratios.push_back(std::isfinite(r) ? nlohmann::json(r) : nlohmann::json("inf"));
        j["tail_ratios"] = ratios;
        return j;
    }
};

/// Threshold classification of a regularized envelope. Rows whose first
/// column is zero are treated as decayed.
inline ClassifyReport classify(const StabilityEnvelope& raw, const ClassifyConfig& c = {}) {
    if (raw.beta_table.empty() || raw.tau_grid.empty()) throw InputError("envelope is empty");
    if (!(c.decay_ratio > 0.0) || !(c.tail_fraction > 0.0 && c.tail_fraction <= 1.0)) {
        throw ParameterError("classification thresholds invalid");
    }
    ClassifyReport rep;
    rep.thresholds = c;
    if (raw.has_infinity()) {
        rep.verdict = StabilityVerdict::unstable_evidence;
        rep.max_gain = std::numeric_limits<double>::infinity();
        rep.tail_ratios.assign(raw.rows(), std::numeric_limits<double>::infinity());
        return rep;
    }
    const StabilityEnvelope env = regularize(raw);
    rep.regularization_residual = env.regularization_residual;
    rep.radius_monotonicity_flag = env.radius_monotonicity_flag;
    const std::size_t J = env.cols();
    const auto tail = static_cast<std::size_t>(std::ceil(c.tail_fraction * static_cast<double>(J)));
    bool decays = true;
    for (std::size_t b = 0; b < env.rows(); ++b) {
        const auto& row = env.beta_table[b];
        double tmax = 0.0;
        for (std::size_t j = J - tail; j < J; ++j) tmax = std::max(tmax, row[j]);
        const double first = row[0];
        const double ratio = first > 0.0 ? tmax / first : 0.0;
        rep.tail_ratios.push_back(ratio);
        if (ratio > c.decay_ratio) decays = false;
        const double edge = env.radius_bins[b];
        const double peak = *std::max_element(row.begin(), row.end());
        if (edge > 0.0) rep.max_gain = std::max(rep.max_gain, peak / edge);
    }
    const bool bounded = rep.max_gain <= c.gain_bound;
    if (!bounded) {
        rep.verdict = StabilityVerdict::unstable_evidence;
    } else if (decays) {
        rep.verdict = StabilityVerdict::guas_consistent;
    } else {
        rep.verdict = StabilityVerdict::us_only;
    }
    return rep;
}

struct USReport {
    bool pass = false;
    double fitted_gain = 0.0;
    std::vector<double> bin_edges;
    std::vector<double> envelope;  ///< monotone envelope per bin
    double margin = 0.0;

    nlohmann::json to_json() const {
        return {{"pass", pass},
                {"fitted_gain", fitted_gain},
                {"bin_edges", bin_edges},
                {"envelope", envelope},
                {"margin", margin}};
    }
};

/// Smallest monotone envelope r -> sup_{t >= s} |x(t)| over all pairs with
/// |x(s)| in bin(r). Norms beyond the last edge fall in the last bin. US
/// holds when the envelope at the smallest bin is at most `margin`.
inline USReport check_us(const std::vector<Trajectory>& ensemble, const std::vector<double>& bin_edges, double margin) {
    if (ensemble.empty()) throw InputError("ensemble is empty");
    if (bin_edges.empty()) throw ParameterError("US check needs bin edges");
    for (std::size_t b = 1; b < bin_edges.size(); ++b) {
        if (!(bin_edges[b] > bin_edges[b - 1])) throw ParameterError("bin edges must increase");
    }
    USReport rep;
    rep.bin_edges = bin_edges;
    rep.margin = margin;
    rep.envelope.assign(bin_edges.size(), 0.0);
    for (const auto& tr : ensemble) {
        if (tr.empty()) continue;
        double suffix = 0.0;
        for (std::size_t k = tr.size(); k-- > 0;) {
            const double r = tr.states[k].norm();
            suffix = std::max(suffix, std::isfinite(r) ? r : std::numeric_limits<double>::infinity());
            auto it = std::lower_bound(bin_edges.begin(), bin_edges.end(), r);
            const std::size_t b =
                it == bin_edges.end() ? bin_edges.size() - 1 : static_cast<std::size_t>(it - bin_edges.begin());
            rep.envelope[b] = std::max(rep.envelope[b], suffix);
        }
    }
    for (std::size_t b = 1; b < rep.envelope.size(); ++b) rep.envelope[b] = std::max(rep.envelope[b], rep.envelope[b - 1]);
    for (std::size_t b = 0; b < bin_edges.size(); ++b) {
        if (bin_edges[b] > 0.0) rep.fitted_gain = std::max(rep.fitted_gain, rep.envelope[b] / bin_edges[b]);
    }
    rep.pass = rep.envelope.front() <= margin;
    return rep;
}

}  // namespace switchstab
