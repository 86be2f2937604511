#pragma once

// CSV and JSON writers for trajectories, signals, controls and envelopes.

#include "switchstab/core.hpp"
#include "switchstab/stability.hpp"

#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

namespace switchstab {

namespace detail {

inline std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw InputError("cannot open " + path.string() + " for writing");
    return out;
}

}  // namespace detail

/// Header t,x1..xn then mode (switched) or u1..uN (relaxed), then y1..yp.
inline void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& tr) {
    auto out = detail::open_out(path);
    const int n = tr.dimension();
    const bool sw = tr.is_switched();
    const std::size_t N = sw || tr.controls().empty() ? 0 : tr.controls().front().size();
    const std::size_t p = tr.outputs.empty() ? 0 : static_cast<std::size_t>(tr.outputs.front().size());
    out << "t";
    for (int j = 1; j <= n; ++j) out << ",x" << j;
    if (sw) {
        out << ",mode";
    } else {
        for (std::size_t i = 1; i <= N; ++i) out << ",u" << i;
    }
    for (std::size_t j = 1; j <= p; ++j) out << ",y" << j;
    out << "\n";
    for (std::size_t k = 0; k < tr.size(); ++k) {
        out << detail::num(tr.times[k]);
        for (int j = 0; j < n; ++j) out << "," << detail::num(tr.states[k][j]);
        if (sw) {
            out << "," << tr.modes()[k].value();
        } else {
            for (std::size_t i = 0; i < N; ++i) out << "," << detail::num(tr.controls()[k][i]);
        }
        if (k < tr.outputs.size()) {
            for (std::size_t j = 0; j < p; ++j) out << "," << detail::num(tr.outputs[k][static_cast<Eigen::Index>(j)]);
        }
        out << "\n";
    }
}

inline nlohmann::json signal_json(const SwitchingSignal& s) {
    std::vector<int> modes;
    for (auto m : s.modes()) modes.push_back(m.value());
    return {{"domain_start", s.domain_start()},
            {"domain_end", s.domain_end()},
            {"starts", s.starts()},
            {"modes", modes},
            {"intervals", s.interval_count()}};
}

/// Rows t_break,mode plus a JSON sidecar with the domain.
inline void write_signal_csv(const std::filesystem::path& path, const SwitchingSignal& s) {
    auto out = detail::open_out(path);
    out << "t_break,mode\n";
    for (std::size_t k = 0; k < s.interval_count(); ++k) {
        out << detail::num(s.starts()[k]) << "," << s.modes()[k].value() << "\n";
    }
    auto side = detail::open_out(std::filesystem::path(path).replace_extension(".json"));
    side << signal_json(s).dump(2) << "\n";
}

inline void write_control_csv(const std::filesystem::path& path, const RelaxedControl& u) {
    auto out = detail::open_out(path);
    out << "t_start";
    for (int i = 1; i <= u.mode_count(); ++i) out << ",u" << i;
    out << "\n";
    for (std::size_t k = 0; k < u.cell_count(); ++k) {
        out << detail::num(u.cell_start(k));
        for (int i = 0; i < u.mode_count(); ++i) out << "," << detail::num(u.cell(k)[static_cast<std::size_t>(i)]);
        out << "\n";
    }
}

/// Rows are radius bins, columns the tau grid.
inline void write_envelope_csv(const std::filesystem::path& path, const StabilityEnvelope& env) {
    auto out = detail::open_out(path);
    out << "bin_edge";
    for (double tau : env.tau_grid) out << ",tau_" << detail::num(tau);
    out << "\n";
    for (std::size_t b = 0; b < env.rows(); ++b) {
        out << detail::num(env.radius_bins[b]);
        for (double v : env.beta_table[b]) out << "," << (std::isfinite(v) ? detail::num(v) : std::string("inf"));
        out << "\n";
    }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    auto out = detail::open_out(path);
    out << j.dump(2) << "\n";
}

}  // namespace switchstab
