#pragma once

// Experiment manifests and the command implementations behind the CLI.

#include "switchstab/io.hpp"
#include "switchstab/systems.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace switchstab {

enum ExitCode : int { kExitPass = 0, kExitAnalysisFail = 1, kExitInputError = 2, kExitBlowUp = 3 };

struct Manifest {
    std::string system_id;
    nlohmann::json system_params = nlohmann::json::object();
    nlohmann::json signal = {{"kind", "class"}};
    IntegratorConfig integrator;
    std::uint64_t seed = 1;
    std::filesystem::path out = "switchstab_out";
    unsigned workers = 1;
    nlohmann::json simulate;
    nlohmann::json certify;
    nlohmann::json envelope;
    nlohmann::json falsify;

    nlohmann::json to_json() const {
        return {{"system", {{"id", system_id}, {"params", system_params}}},
                {"signal", signal},
                {"integrator",
                 {{"step", integrator.step},
                  {"event_bisection_tol", integrator.event_bisection_tol},
                  {"divergence_bound", integrator.divergence_bound},
                  {"max_switches", integrator.max_switches},
                  {"boundary_tol", integrator.boundary_tol},
                  {"estimate_local_error", integrator.estimate_local_error}}},
                {"seed", seed},
                {"output_dir", out.string()},
                {"workers", workers},
                {"simulate", simulate},
                {"certify", certify},
                {"envelope", envelope},
                {"falsify", falsify}};
    }
};

struct ManifestOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<unsigned> workers;
};

namespace detail {

/// Copies `defaults`, replacing entries present in `given`; unknown keys are rejected.
inline nlohmann::json merge_section(const nlohmann::json& defaults, const nlohmann::json& given, const std::string& name) {
    nlohmann::json out = defaults;
    if (given.is_null()) return out;
    if (!given.is_object()) throw InputError("manifest section '" + name + "' must be an object");
    for (const auto& [k, v] : given.items()) {
        if (!defaults.contains(k)) throw InputError("unknown key '" + k + "' in manifest section '" + name + "'");
        out[k] = v;
    }
    return out;
}

inline unsigned default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

inline Vec to_vec(const nlohmann::json& j, int n, const std::string& what) {
    if (!j.is_array() || static_cast<int>(j.size()) != n) {
        throw InputError(what + " must be an array of " + std::to_string(n) + " numbers");
    }
    Vec v(n);
    for (int k = 0; k < n; ++k) {
        if (!j[static_cast<std::size_t>(k)].is_number()) throw InputError(what + " entries must be numbers");
        v[k] = j[static_cast<std::size_t>(k)].get<double>();
    }
    return v;
}

inline nlohmann::json from_vec(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace detail

inline nlohmann::json simulate_defaults() { return {{"x0", nullptr}, {"x0_radius", 1.0}, {"t0", 0.0}, {"horizon", 20.0}}; }

inline nlohmann::json certify_defaults() {
    return {{"trajectories", 10},  {"horizon", 20.0},       {"x0_radius", 1.0}, {"max_offset", 10.0},
            {"box_half_width", 2.0}, {"density", 21},      {"revisit_tol", 1e-7}};
}

inline nlohmann::json envelope_defaults() {
    return {{"radius_bins", {0.5, 1.0, 2.0}},
            {"horizon", 200.0},
            {"tau_step", 5.0},
            {"trials", 200},
            {"max_offset", 50.0},
            {"decay_ratio", 0.05},
            {"tail_fraction", 0.2},
            {"gain_bound", 1e3},
            {"expect", "GUAS-consistent"}};
}

inline nlohmann::json falsify_defaults() {
    return {{"eps", 0.5},
            {"span", 5.0},
            {"residual_tol", 1e-8},
            {"budget", 10000},
            {"control_step", 1e-2},
            {"constraints", true},
            {"seed_states", nlohmann::json::array()},
            {"x0_radius", 1.0},
            {"expect", "no_counterexample_found"}};
}

/// Parses a manifest document, materializing every default.
inline Manifest resolve_manifest(const nlohmann::json& in, const ManifestOverrides& ov = {}) {
    if (!in.is_object()) throw InputError("manifest must be a JSON object");
    static const char* known[] = {"system", "signal", "integrator", "seed", "output_dir", "workers",
                                  "simulate", "certify", "envelope", "falsify"};
    for (const auto& [k, v] : in.items()) {
        if (std::find_if(std::begin(known), std::end(known), [&](const char* s) { return k == s; }) == std::end(known)) {
            throw InputError("unknown manifest key '" + k + "'");
        }
    }
    Manifest m;
    if (!in.contains("system") || !in["system"].is_object() || !in["system"].contains("id") ||
        !in["system"]["id"].is_string()) {
        throw InputError("manifest needs system.id");
    }
    m.system_id = in["system"]["id"].get<std::string>();
    if (in["system"].contains("params")) m.system_params = in["system"]["params"];
    if (in.contains("signal")) {
        if (!in["signal"].is_object() || !in["signal"].contains("kind")) throw InputError("signal needs a kind");
        m.signal = in["signal"];
    }
    const auto integ = detail::merge_section(
        {{"step", 1e-3},
         {"event_bisection_tol", 1e-9},
         {"divergence_bound", 1e9},
         {"max_switches", 1e6},
         {"boundary_tol", 1e-9},
         {"estimate_local_error", false}},
        in.value("integrator", nlohmann::json()), "integrator");
    try {
        m.integrator.step = integ["step"].get<double>();
        m.integrator.event_bisection_tol = integ["event_bisection_tol"].get<double>();
        m.integrator.divergence_bound = integ["divergence_bound"].get<double>();
        m.integrator.max_switches = integ["max_switches"].get<double>();
        m.integrator.boundary_tol = integ["boundary_tol"].get<double>();
        m.integrator.estimate_local_error = integ["estimate_local_error"].get<bool>();
        m.seed = in.value("seed", std::uint64_t{1});
        m.out = in.value("output_dir", std::string("switchstab_out"));
        m.workers = in.value("workers", detail::default_workers());
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("manifest type error: ") + e.what());
    }
    m.integrator.validate();
    if (ov.seed) m.seed = *ov.seed;
    if (ov.out) m.out = *ov.out;
    if (ov.workers) m.workers = std::max(1u, *ov.workers);
    m.simulate = detail::merge_section(simulate_defaults(), in.value("simulate", nlohmann::json()), "simulate");
    m.certify = detail::merge_section(certify_defaults(), in.value("certify", nlohmann::json()), "certify");
    m.envelope = detail::merge_section(envelope_defaults(), in.value("envelope", nlohmann::json()), "envelope");
    m.falsify = detail::merge_section(falsify_defaults(), in.value("falsify", nlohmann::json()), "falsify");
    return m;
}

inline Manifest load_manifest(const std::filesystem::path& path, const ManifestOverrides& ov = {}) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot read manifest " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("manifest is not valid JSON: ") + e.what());
    }
    return resolve_manifest(j, ov);
}

/// Runs single trials of the manifest's system under its signal specification.
class Driver {
public:
    Driver(RegistryEntry entry, nlohmann::json signal, IntegratorConfig cfg)
        : entry_(std::move(entry)), signal_(std::move(signal)), cfg_(cfg) {
        kind_ = signal_.value("kind", std::string("class"));
        if (kind_ == "class") {
            cls_ = entry_.signal_class;
        } else if (kind_ == "constant") {
            const int m = signal_.value("mode", 1);
            if (m < 1 || m > entry_.system.modes) throw InputError("constant signal mode out of range");
            constant_mode_ = ModeIndex(m);
        } else if (kind_ == "arbitrary") {
            cls_ = SignalClass::arbitrary(entry_.system.modes, signal_.value("mean_dwell", 1.0));
        } else if (kind_ == "measure") {
            cls_ = SignalClass::measure_class(
                entry_.system.modes,
                {signal_.value("T0", 1.0), signal_.value("delta0", 0.2), ModeIndex(signal_.value("mode", 2))});
        } else if (kind_ == "pattern") {
            cls_ = SignalClass::pattern_class({signal_.value("T", 10.0), signal_.value("dm", 0.5), signal_.value("dM", 2.0)});
        } else {
            throw InputError("unknown signal kind '" + kind_ + "'");
        }
        if (closed_loop() && !entry_.policy) throw InputError("closed-loop class without a covering policy");
    }

    const RegistryEntry& entry() const { return entry_; }
    const IntegratorConfig& config() const { return cfg_; }
    bool closed_loop() const { return kind_ == "class" && cls_.kind == SignalClass::Kind::closed_loop; }
    bool constant() const { return kind_ == "constant"; }

    /// Open-loop signal on [0, t1].
    SwitchingSignal signal(double t1, std::uint64_t seed) const {
        if (constant()) return SwitchingSignal::constant(constant_mode_, 0.0, t1);
        return cls_.generate(0.0, t1, seed);
    }

    /// One trajectory from (t0, x0) to tf. Blow-ups propagate as BlowUpError.
    TrajectoryWithSignal run(const Vec& x0, double t0, double tf, std::uint64_t seed) const {
        const double span_end = std::max(tf, t0 + 1.0);
        if (closed_loop()) {
            const auto policy = entry_.policy(seed, 0.0, span_end);
            if (tf == t0) {
                Trajectory tr;
                const auto active = active_index_set(x0, entry_.covering, cfg_.boundary_tol);
                const ModeIndex m = policy(t0, x0, active);
                tr.times = {t0};
                tr.states = {x0};
                tr.drive = std::vector<ModeIndex>{m};
                tr.outputs = {entry_.system.h(t0, x0, m)};
                return {std::move(tr), SwitchingSignal::constant(m, t0, span_end)};
            }
            auto run = simulate_with_covering(entry_.system, entry_.covering, policy, t0, x0, tf, cfg_);
            return {std::move(run.trajectory), std::move(run.signal)};
        }
        SwitchingSignal sigma = signal(span_end, seed);
        Trajectory tr = simulate(entry_.system, sigma, t0, x0, tf, cfg_);
        return {std::move(tr), std::move(sigma)};
    }

    nlohmann::json signal_descriptor() const {
        if (kind_ == "class") return cls_.to_json();
        if (constant()) return {{"kind", "constant"}, {"mode", constant_mode_.value()}};
        return cls_.to_json();
    }

private:
    RegistryEntry entry_;
    nlohmann::json signal_;
    IntegratorConfig cfg_;
    std::string kind_;
    SignalClass cls_;
    ModeIndex constant_mode_{1};
};

inline Driver make_driver(const Manifest& m) { return Driver(make_entry(m.system_id, m.system_params), m.signal, m.integrator); }

struct CommandResult {
    int exit_code = kExitPass;
    nlohmann::json report;
    std::string summary;
};

namespace detail {

inline Vec random_state(std::mt19937_64& rng, int n, double radius) {
    const Vec d = random_direction(rng, n);
    return std::uniform_real_distribution<double>(0.5 * radius, radius)(rng) * d;
}

inline void write_bundle(const Manifest& m, const std::string& command, const CommandResult& r) {
    write_json(m.out / "manifest.resolved.json", m.to_json());
    auto out = open_out(m.out / "summary.txt");
    out << "command: " << command << "\n";
    out << "system: " << m.system_id << "\n";
    out << "seed: " << m.seed << "\n";
    out << "exit_code: " << r.exit_code << "\n";
    out << r.summary;
}

}  // namespace detail

inline CommandResult cmd_simulate(const Manifest& m) {
    const Driver drv = make_driver(m);
    const auto& s = m.simulate;
    const int n = drv.entry().system.n;
    const double t0 = s["t0"].get<double>();
    const double horizon = s["horizon"].get<double>();
    if (!(horizon >= 0.0)) throw InputError("simulate.horizon must be nonnegative");
    Vec x0;
    if (s["x0"].is_null()) {
        std::mt19937_64 rng(mix_seed(m.seed, 0x51u));
        x0 = detail::random_state(rng, n, s["x0_radius"].get<double>());
    } else {
        x0 = detail::to_vec(s["x0"], n, "simulate.x0");
    }
    CommandResult r;
    try {
        const auto run = drv.run(x0, t0, t0 + horizon, m.seed);
        write_trajectory_csv(m.out / "trajectory.csv", run.trajectory);
        write_signal_csv(m.out / "signal.csv", run.signal);
        r.report = {{"rows", run.trajectory.size()}, {"x0", detail::from_vec(x0)}, {"signal", drv.signal_descriptor()}};
        std::ostringstream os;
        os << "rows: " << run.trajectory.size() << "\nfinal_norm: " << run.trajectory.states.back().norm() << "\n";
        r.summary = os.str();
    } catch (const BlowUpError& e) {
        write_trajectory_csv(m.out / "trajectory.csv", e.partial());
        r.exit_code = kExitBlowUp;
        r.report = {{"blow_up", true}, {"last_valid_time", e.last_valid_time()}};
        r.summary = std::string("blow_up: ") + e.what() + "\n";
    }
    detail::write_bundle(m, "simulate", r);
    return r;
}

inline CommandResult cmd_certify(const Manifest& m) {
    const Driver drv = make_driver(m);
    const auto& c = m.certify;
    const auto& e = drv.entry();
    const int count = c["trajectories"].get<int>();
    if (count < 1) throw InputError("certify needs a nonempty trajectory batch");
    const double horizon = c["horizon"].get<double>();
    if (!(horizon > 0.0)) throw InputError("certify.horizon must be positive");
    const int n = e.system.n;

    const auto box = SampleBox::cube(n, c["box_half_width"].get<double>());
    const auto sandwich = check_sandwich(e.certificate, box, e.covering, c["density"].get<int>());

    CheckReport slope;
    slope.check = "decrease_slope";
    CheckReport revisit;
    revisit.check = "decrease_revisit";
    CheckReport integral;
    integral.check = "integral_bound";
    auto fold = [](CheckReport& acc, const CheckReport& one) {
        acc.evaluated += one.evaluated;
        acc.violations += one.violations;
        acc.pass = acc.pass && one.pass;
        acc.slack = std::max(acc.slack, one.slack);
        if (one.worst_margin < acc.worst_margin) {
            acc.worst_margin = one.worst_margin;
            acc.worst_location = one.worst_location;
        }
    };
    CommandResult r;
    for (int k = 0; k < count; ++k) {
        std::mt19937_64 rng(mix_seed(m.seed, 0xCE000000ULL + static_cast<std::uint64_t>(k)));
        const Vec x0 = detail::random_state(rng, n, c["x0_radius"].get<double>());
        const double s = snap_time(std::uniform_real_distribution<double>(0.0, c["max_offset"].get<double>())(rng));
        std::optional<TrajectoryWithSignal> attempt;
        try {
            attempt = drv.run(x0, s, s + horizon, mix_seed(m.seed, static_cast<std::uint64_t>(k)));
        } catch (const BlowUpError& err) {
            r.exit_code = kExitBlowUp;
            r.summary = std::string("blow_up: ") + err.what() + "\n";
            r.report = {{"blow_up", true}, {"trajectory", k}};
            write_json(m.out / "certify.json", r.report);
            detail::write_bundle(m, "certify", r);
            return r;
        }
        const auto& run = *attempt;
        const auto dec = check_decrease_along(e.certificate, run.trajectory, run.signal,
                                              c["revisit_tol"].get<double>());
        fold(slope, dec.slope);
        fold(revisit, dec.revisit);
        if (e.integral_bound) {
            IntegralBoundParams p = *e.integral_bound;
            p.M = e.certificate.V(s, x0, run.trajectory.modes().front());
            fold(integral, check_integral_bound(run.trajectory, run.signal, e.system, p));
        }
    }
    const bool pass = sandwich.pass && slope.pass && revisit.pass && integral.pass;
    r.exit_code = pass ? kExitPass : kExitAnalysisFail;
    r.report = {{"pass", pass},
                {"trajectories", count},
                {"sandwich", sandwich.to_json()},
                {"decrease", {{"pass", slope.pass && revisit.pass}, {"slope", slope.to_json()}, {"revisit", revisit.to_json()}}},
                {"integral_bound", integral.to_json()}};
    write_json(m.out / "certify.json", r.report);
    std::ostringstream os;
    os << "sandwich: " << (sandwich.pass ? "pass" : "fail") << "\n"
       << "decrease: " << (slope.pass && revisit.pass ? "pass" : "fail") << "\n"
       << "integral_bound: " << (integral.pass ? "pass" : "fail") << "\n";
    r.summary = os.str();
    detail::write_bundle(m, "certify", r);
    return r;
}

inline CommandResult cmd_envelope(const Manifest& m) {
    const Driver drv = make_driver(m);
    const auto& c = m.envelope;
    EnvelopeConfig ec;
    ec.radius_bins = c["radius_bins"].get<std::vector<double>>();
    ec.horizon = c["horizon"].get<double>();
    ec.tau_step = c["tau_step"].get<double>();
    ec.trials = c["trials"].get<std::size_t>();
    ec.max_offset = c["max_offset"].get<double>();
    ec.seed = m.seed;
    ec.workers = m.workers;
    TrialRunner runner = [&drv](const Vec& x0, double s, std::uint64_t seed, const std::vector<double>& taus) {
        std::vector<double> out(taus.size(), std::numeric_limits<double>::infinity());
        Trajectory tr;
        try {
            tr = drv.run(x0, s, s + taus.back(), seed).trajectory;
        } catch (const BlowUpError& e) {
            tr = e.partial();
        } catch (const DynamicsError&) {
            return out;
        }
        std::size_t k = 0;
        for (std::size_t j = 0; j < taus.size(); ++j) {
            const double t = s + taus[j];
            while (k + 1 < tr.size() && tr.times[k + 1] <= t + 1e-12) ++k;
            // Closed-loop grids need not contain t exactly; use the last sample at or before t.
            if (k < tr.size() && tr.times[k] <= t + 1e-12 && (k + 1 < tr.size() || t - tr.times[k] <= drv.config().step)) {
                out[j] = tr.states[k].norm();
            }
        }
        return out;
    };
    const auto env = estimate_envelope(runner, drv.entry().system.n, ec);
    ClassifyConfig cc{c["decay_ratio"].get<double>(), c["tail_fraction"].get<double>(), c["gain_bound"].get<double>()};
    const auto rep = classify(env, cc);
    const std::string expect = c["expect"].get<std::string>();
    CommandResult r;
    r.exit_code = to_string(rep.verdict) == expect ? kExitPass : kExitAnalysisFail;
    r.report = rep.to_json();
    r.report["expect"] = expect;
    r.report["trials_per_cell"] = env.trials_per_cell;
    r.report["blow_ups"] = env.blow_ups;
    r.report["uniformity_gap"] = env.uniformity_gap(kMonotonicityFloor * ec.radius_bins.back());
    r.report["signal"] = drv.signal_descriptor();
    r.report["envelope_csv"] = "envelope.csv";
    write_envelope_csv(m.out / "envelope.csv", env);
    write_json(m.out / "envelope_verdict.json", r.report);
    r.summary = "verdict: " + to_string(rep.verdict) + "\nexpect: " + expect + "\n";
    detail::write_bundle(m, "envelope", r);
    return r;
}

inline CommandResult cmd_falsify(const Manifest& m) {
    const auto entry = make_entry(m.system_id, m.system_params);
    const auto& c = m.falsify;
    ReducedLimitingSystem sys = entry.reduced;
    if (!c["constraints"].get<bool>()) sys.constraints.clear();
    FalsifierConfig fc;
    fc.eps = c["eps"].get<double>();
    fc.span = c["span"].get<double>();
    fc.residual_tol = c["residual_tol"].get<double>();
    fc.budget = c["budget"].get<std::size_t>();
    fc.control_step = c["control_step"].get<double>();
    fc.x0_radius = c["x0_radius"].get<double>();
    fc.seed = m.seed;
    fc.workers = m.workers;
    fc.integrator = m.integrator;
    for (const auto& s : c["seed_states"]) fc.seed_states.push_back(detail::to_vec(s, sys.n, "falsify.seed_states"));
    const auto v = wzsd_falsify(sys, fc);
    CommandResult r;
    r.report = v.to_json();
    r.report["constraints"] = c["constraints"];
    if (v.counterexample) {
        write_trajectory_csv(m.out / "counterexample_trajectory.csv", v.counterexample->trajectory);
        if (v.counterexample->control) write_control_csv(m.out / "counterexample_control.csv", *v.counterexample->control);
        r.report["counterexample_file"] = "counterexample_trajectory.csv";
    }
    const std::string expect = c["expect"].get<std::string>();
    r.report["expect"] = expect;
    r.exit_code = v.verdict() == expect ? kExitPass : kExitAnalysisFail;
    write_json(m.out / "falsify.json", r.report);
    r.summary = "verdict: " + v.verdict() + "\nbudget_used: " + std::to_string(v.budget_used) + "\nexpect: " + expect + "\n";
    detail::write_bundle(m, "falsify", r);
    return r;
}

/// Default manifest reproducing an example's claimed verdict.
inline nlohmann::json reproduce_manifest(const std::string& id) {
    nlohmann::json j = {{"system", {{"id", id}}}, {"seed", 1}};
    if (id == "motivating") {
        j["integrator"] = {{"step", 1e-2}};
        j["envelope"] = {{"trials", 100}, {"horizon", 200.0}, {"tau_step", 5.0}};
        j["certify"] = {{"trajectories", 10}, {"horizon", 20.0}};
        j["falsify"] = {{"budget", 2000}, {"seed_states", {{1.0, 0.0}, {0.0, 1.0}}}};
    } else if (id == "example1") {
        j["integrator"] = {{"step", 1e-2}};
        j["envelope"] = {{"trials", 100}, {"horizon", 100.0}, {"tau_step", 2.5}};
        j["certify"] = {{"trajectories", 10}, {"horizon", 20.0}};
    } else if (id == "example4") {
        j["integrator"] = {{"step", 1e-2}};
        j["envelope"] = {{"trials", 50}, {"horizon", 50.0}, {"tau_step", 1.25}};
        j["certify"] = {{"trajectories", 10}, {"horizon", 20.0}};
    } else if (id == "inverter") {
        j["integrator"] = {{"step", 1e-2}};
        j["envelope"] = {{"trials", 100}, {"horizon", 400.0}, {"tau_step", 10.0}};
        j["certify"] = {{"trajectories", 10}, {"horizon", 40.0}};
        j["falsify"] = {{"budget", 2000}, {"seed_states", {{1.0, 0.0, 0.0, 0.0}}}};
    } else {
        throw InputError("unknown example id '" + id + "'");
    }
    return j;
}

/// certify + envelope (+ falsify where a reduced-system claim exists) into out/<command>/.
inline CommandResult cmd_reproduce(const std::string& id, const ManifestOverrides& ov) {
    nlohmann::json j = reproduce_manifest(id);
    const std::filesystem::path root = ov.out ? std::filesystem::path(*ov.out) : std::filesystem::path("reproduce_" + id);
    ManifestOverrides sub = ov;
    CommandResult total;
    nlohmann::json report = {{"id", id}};
    std::string summary;
    auto step = [&](const std::string& name, auto&& fn) {
        sub.out = (root / name).string();
        const Manifest m = resolve_manifest(j, sub);
        const CommandResult r = fn(m);
        report[name] = r.report;
        report[name]["exit_code"] = r.exit_code;
        summary += name + ": exit " + std::to_string(r.exit_code) + "\n" + r.summary;
        total.exit_code = std::max(total.exit_code, r.exit_code);
    };
    step("certify", cmd_certify);
    step("envelope", cmd_envelope);
    if (j.contains("falsify")) step("falsify", cmd_falsify);
    report["verdict"] = report["envelope"]["verdict"];
    total.report = report;
    total.summary = summary;
    write_json(root / "report.json", report);
    auto out = detail::open_out(root / "summary.txt");
    out << "reproduce: " << id << "\nverdict: " << report["verdict"].get<std::string>() << "\nexit_code: " << total.exit_code
        << "\n" << summary;
    return total;
}

}  // namespace switchstab
