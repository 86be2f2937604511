#include "switchstab/experiment.hpp"

#include "catch2/catch_amalgamated.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace switchstab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kWork = SWITCHSTAB_WORK;

fs::path fresh(const std::string& name) {
    const fs::path dir = kWork / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_manifest(const fs::path& dir, const json& j) {
    const fs::path p = dir / "manifest.json";
    std::ofstream(p) << j.dump(2);
    return p;
}

int cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(SWITCHSTAB_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

int run(const std::string& sub, const fs::path& dir, const json& manifest, const std::string& extra = "") {
    const auto m = write_manifest(dir, manifest);
    return cli(sub + " --manifest " + m.string() + " --out " + (dir / "out").string() + " " + extra, dir / "log.txt");
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::size_t lines(const fs::path& p) {
    const auto s = slurp(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

json quick(const std::string& id) {
    return {{"system", {{"id", id}}}, {"integrator", {{"step", 1e-2}}}, {"seed", 4}};
}

}  // namespace

TEST_CASE("manifest resolution", "[cli]") {
    const auto m = resolve_manifest({{"system", {{"id", "motivating"}}}});
    CHECK(m.system_id == "motivating");
    CHECK(m.integrator.step == 1e-3);
    CHECK(m.envelope["trials"] == 200);
    CHECK(m.falsify["budget"] == 10000);
    CHECK(m.to_json()["system"]["id"] == "motivating");
    const auto o = resolve_manifest({{"system", {{"id", "inverter"}}}, {"seed", 3}}, {9, "x", 2});
    CHECK(o.seed == 9);
    CHECK(o.out == "x");
    CHECK(o.workers == 2);
    CHECK_THROWS_AS(resolve_manifest({{"system", {{"id", "motivating"}}}, {"bogus", 1}}), InputError);
    CHECK_THROWS_AS(resolve_manifest({{"system", {{"id", "motivating"}}}, {"simulate", {{"h", 1}}}}), InputError);
    CHECK_THROWS_AS(resolve_manifest({{"signal", {{"kind", "class"}}}}), InputError);
    CHECK_THROWS_AS(resolve_manifest({{"system", {{"id", "motivating"}}}, {"integrator", {{"step", -1.0}}}}),
                    ParameterError);
}

TEST_CASE("simulate writes trajectory and signal files", "[cli]") {
    const auto dir = fresh("simulate");
    auto m = quick("motivating");
    m["simulate"] = {{"horizon", 5.0}};
    REQUIRE(run("simulate", dir, m) == 0);
    const auto traj = slurp(dir / "out" / "trajectory.csv");
    CHECK(traj.rfind("t,x1,x2,mode,y1\n", 0) == 0);
    CHECK(lines(dir / "out" / "trajectory.csv") > 500);
    CHECK(slurp(dir / "out" / "signal.csv").rfind("t_break,mode\n", 0) == 0);
    CHECK(fs::exists(dir / "out" / "signal.json"));
    CHECK(fs::exists(dir / "out" / "manifest.resolved.json"));
    CHECK(fs::exists(dir / "out" / "summary.txt"));

    // Determinism under a fixed seed.
    const auto again = fresh("simulate_again");
    REQUIRE(run("simulate", again, m) == 0);
    CHECK(slurp(again / "out" / "trajectory.csv") == traj);
    CHECK(slurp(again / "out" / "signal.csv") == slurp(dir / "out" / "signal.csv"));
    // A different seed gives a different run.
    const auto other = fresh("simulate_other");
    REQUIRE(run("simulate", other, m, "--seed 5") == 0);
    CHECK(slurp(other / "out" / "trajectory.csv") != traj);
}

TEST_CASE("simulate edge cases", "[cli]") {
    SECTION("horizon 0 gives a single row") {
        for (const std::string id : {"motivating", "example4"}) {
            const auto dir = fresh("horizon0_" + id);
            auto m = quick(id);
            m["simulate"] = {{"horizon", 0.0}};
            REQUIRE(run("simulate", dir, m) == 0);
            CHECK(lines(dir / "out" / "trajectory.csv") == 2);
        }
    }
    SECTION("closed loop") {
        const auto dir = fresh("closed_loop");
        auto m = quick("example4");
        m["simulate"] = {{"horizon", 10.0}, {"x0", {1.0, 0.5}}};
        REQUIRE(run("simulate", dir, m) == 0);
        CHECK(lines(dir / "out" / "trajectory.csv") > 100);
    }
    SECTION("inverter with dM beyond pi sqrt(L1 C1) is rejected") {
        const auto dir = fresh("inverter_dM");
        auto m = quick("inverter");
        m["system"]["params"] = {{"T", 12.0}, {"dM", 3.5}};
        CHECK(run("simulate", dir, m) == 2);
        CHECK(slurp(dir / "log.txt").find("pi") != std::string::npos);
    }
    SECTION("bad manifests") {
        const auto dir = fresh("bad_manifest");
        auto m = quick("motivating");
        m["extra"] = 1;
        CHECK(run("simulate", dir, m) == 2);
        CHECK(run("simulate", dir, quick("unknown")) == 2);
        std::ofstream(dir / "broken.json") << "{ not json";
        CHECK(cli("simulate --manifest " + (dir / "broken.json").string(), dir / "log2.txt") == 2);
        CHECK(cli("simulate --manifest " + (dir / "missing.json").string(), dir / "log3.txt") == 2);
        CHECK(cli("simulate", dir / "log4.txt") == 2);
    }
    SECTION("blow-up exits with 3 and keeps the partial trajectory") {
        const auto dir = fresh("blow_up");
        auto m = quick("motivating");
        m["signal"] = {{"kind", "constant"}, {"mode", 1}};
        m["integrator"]["divergence_bound"] = 0.5;
        m["simulate"] = {{"horizon", 5.0}, {"x0", {1.0, 0.0}}};
        CHECK(run("simulate", dir, m) == 3);
        CHECK(fs::exists(dir / "out" / "trajectory.csv"));
    }
}

TEST_CASE("certify", "[cli]") {
    SECTION("registry entries pass under their own class") {
        for (const auto& id : registry_ids()) {
            const auto dir = fresh("certify_" + id);
            auto m = quick(id);
            m["certify"] = {{"trajectories", 4}, {"horizon", 10.0}, {"density", 9}};
            INFO(id << "\n" << slurp(dir / "log.txt"));
            CHECK(run("certify", dir, m) == 0);
            const auto rep = read_json(dir / "out" / "certify.json");
            CHECK(rep["pass"] == true);
            CHECK(rep["sandwich"]["pass"] == true);
            CHECK(rep["decrease"]["pass"] == true);
            CHECK(rep["integral_bound"]["pass"] == true);
        }
    }
    SECTION("flipped dynamics fail the decrease check") {
        const auto dir = fresh("certify_flipped");
        auto m = quick("motivating");
        m["system"]["params"] = {{"flipped", true}};
        m["certify"] = {{"trajectories", 2}, {"horizon", 5.0}};
        CHECK(run("certify", dir, m) == 1);
        CHECK(read_json(dir / "out" / "certify.json")["decrease"]["pass"] == false);
    }
    SECTION("empty batch") {
        const auto dir = fresh("certify_empty");
        auto m = quick("motivating");
        m["certify"] = {{"trajectories", 0}};
        CHECK(run("certify", dir, m) == 2);
    }
}

TEST_CASE("envelope", "[cli]") {
    auto m = quick("motivating");
    m["envelope"] = {{"trials", 5}, {"horizon", 20.0}, {"max_offset", 5.0}};
    SECTION("conserved norm is US-only") {
        const auto dir = fresh("envelope_us");
        m["signal"] = {{"kind", "constant"}, {"mode", 1}};
        m["envelope"]["expect"] = "US-only";
        CHECK(run("envelope", dir, m) == 0);
        const auto rep = read_json(dir / "out" / "envelope_verdict.json");
        CHECK(rep["verdict"] == "US-only");
        CHECK(lines(dir / "out" / "envelope.csv") == 4);
        m["envelope"]["expect"] = "GUAS-consistent";
        CHECK(run("envelope", fresh("envelope_us_fail"), m) == 1);
    }
    SECTION("worker count does not change the table") {
        const auto a = fresh("envelope_w1");
        const auto b = fresh("envelope_w3");
        m["envelope"]["expect"] = "US-only";
        run("envelope", a, m, "--workers 1");
        run("envelope", b, m, "--workers 3");
        CHECK(slurp(a / "out" / "envelope.csv") == slurp(b / "out" / "envelope.csv"));
    }
}

TEST_CASE("falsify", "[cli]") {
    SECTION("unconstrained motivating example has a counterexample") {
        const auto dir = fresh("falsify_free");
        auto m = quick("motivating");
        m["falsify"] = {{"constraints", false}, {"seed_states", {{1.0, 0.0}}}, {"expect", "counterexample"}};
        CHECK(run("falsify", dir, m) == 0);
        const auto rep = read_json(dir / "out" / "falsify.json");
        CHECK(rep["verdict"] == "counterexample");
        CHECK(rep["budget_used"] == 1);
        CHECK(fs::exists(dir / "out" / "counterexample_trajectory.csv"));
        CHECK(fs::exists(dir / "out" / "counterexample_control.csv"));
    }
    SECTION("constrained motivating example has none") {
        const auto dir = fresh("falsify_constrained");
        auto m = quick("motivating");
        m["falsify"] = {{"budget", 300}, {"seed_states", {{1.0, 0.0}}}};
        CHECK(run("falsify", dir, m) == 0);
        CHECK(read_json(dir / "out" / "falsify.json")["verdict"] == "no_counterexample_found");
    }
    SECTION("inverter with the pattern constraint") {
        const auto dir = fresh("falsify_inverter");
        auto m = quick("inverter");
        m["falsify"] = {{"budget", 300}, {"seed_states", {{1.0, 0.0, 0.0, 0.0}}}};
        CHECK(run("falsify", dir, m) == 0);
    }
}

TEST_CASE("reproduce", "[cli]") {
    const auto dir = fresh("reproduce_example1");
    const int code = cli("reproduce example1 --out " + (dir / "out").string(), dir / "log.txt");
    INFO(slurp(dir / "log.txt"));
    CHECK(code == 0);
    const auto rep = read_json(dir / "out" / "report.json");
    CHECK(rep["verdict"] == "GUAS-consistent");
    CHECK(rep["certify"]["exit_code"] == 0);
    CHECK(fs::exists(dir / "out" / "envelope" / "envelope.csv"));
    CHECK(fs::exists(dir / "out" / "summary.txt"));
    CHECK(cli("reproduce nothing --out " + (dir / "x").string(), dir / "log2.txt") == 2);
}
