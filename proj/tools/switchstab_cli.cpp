// switchstab: simulate, certify, envelope, falsify, reproduce.

#include "switchstab/switchstab.hpp"

#include "CLI11.hpp"

#include <iostream>

using namespace switchstab;

int main(int argc, char** argv) {
    CLI::App app{"Switched-system stability toolkit"};
    app.require_subcommand(1);

    std::string manifest;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<unsigned> workers;
    auto add_common = [&](CLI::App* sub, bool needs_manifest) {
        if (needs_manifest) sub->add_option("--manifest", manifest, "experiment manifest (JSON)")->required();
        sub->add_option("--seed", seed, "master seed");
        sub->add_option("--out", out, "output directory");
        sub->add_option("--workers", workers, "worker threads");
    };
    auto* sim = app.add_subcommand("simulate", "trajectory and signal CSVs");
    auto* cert = app.add_subcommand("certify", "sandwich, decrease and integral-bound checks");
    auto* env = app.add_subcommand("envelope", "Monte Carlo stability envelope and verdict");
    auto* fal = app.add_subcommand("falsify", "search for a zero-output trajectory of the reduced system");
    auto* rep = app.add_subcommand("reproduce", "rerun a worked example end to end");
    for (auto* s : {sim, cert, env, fal}) add_common(s, true);
    add_common(rep, false);
    std::string example;
    rep->add_option("id", example, "motivating | example1 | example4 | inverter")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInputError;
    }

    const ManifestOverrides ov{seed, out, workers};
    try {
        CommandResult r;
        if (rep->parsed()) {
            r = cmd_reproduce(example, ov);
        } else {
            const Manifest m = load_manifest(manifest, ov);
            if (sim->parsed()) r = cmd_simulate(m);
            if (cert->parsed()) r = cmd_certify(m);
            if (env->parsed()) r = cmd_envelope(m);
            if (fal->parsed()) r = cmd_falsify(m);
        }
        std::cout << r.summary;
        return r.exit_code;
    } catch (const BlowUpError& e) {
        std::cerr << "blow-up: " << e.what() << "\n";
        return kExitBlowUp;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const ParameterError& e) {
        std::cerr << "parameter error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "manifest error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const DomainError& e) {
        std::cerr << "domain error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitAnalysisFail;
    }
}
