#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "eucgo/acceptance.hpp"
#include "eucgo/runner.hpp"

using namespace eucgo;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string error_of(const std::string& text) {
    try {
        parse_scenario(text);
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("eucgo_test_" + name);
    fs::remove_all(p);
    return p;
}

} // namespace

// The blind pipeline is wired from DN matrices and the q*-only context; no
// overload takes a potential.
static_assert(std::is_same_v<decltype(&make_blind_provider),
                             PairingBatchProvider (*)(const PipelineContext&, const DNMatrix&, const DNMatrix&,
                                                      std::vector<TauDiagnostics>*)>);
static_assert(std::is_same_v<decltype(&reconstruct_blind),
                             ReconstructionResult (*)(const PipelineContext&, const DNMatrix&, const DNMatrix&,
                                                      const ReconstructionConfig&, std::vector<TauDiagnostics>*)>);
static_assert(std::is_same_v<decltype(&blind_traces),
                             std::vector<TraceSolution> (*)(const PipelineContext&, const Kernel&, const DNMatrix&,
                                                            const CMat&)>);

TEST_CASE("scenario parse errors carry line numbers") {
    std::string bad = "{\n  \"grid\": {\"dims\": [8, 8, 8]},\n  \"q_star\": 0.5,,\n}\n";
    std::string msg = error_of(bad);
    CHECK(msg.find("cli_runner.parse") != std::string::npos);
    CHECK(msg.find("line 3") != std::string::npos);
}

TEST_CASE("unknown keys and selectors name their path") {
    const std::string ladder = R"("ladders": {"tau": [5, 6]})";
    CHECK(error_of("{" + ladder + R"(, "grid": {"dimz": [8, 8, 8]}})").find("grid.dimz: unknown key") !=
          std::string::npos);
    CHECK(error_of("{" + ladder + R"(, "metric": {"type": "hyperbolic"}})").find("metric.type") !=
          std::string::npos);
    CHECK(error_of("{" + ladder + R"(, "q2": {"type": "spline"}})").find("q2.type") != std::string::npos);
    CHECK(error_of("{" + ladder + R"(, "mode": "oracle"})").find("mode") != std::string::npos);
    CHECK(error_of(R"({"grid": {"dims": [8, 8, 8]}})").find("ladders.tau") != std::string::npos);
    CHECK(error_of("{" + ladder + R"(, "selftest": [10]})").find("selftest") != std::string::npos);
}

TEST_CASE("resolved config echoes every ladder and default") {
    Scenario s = parse_scenario(R"({"ladders": {"tau": {"lo": 4, "hi": 16, "count": 3}}})");
    REQUIRE(s.tau_grid.size() == 3);
    CHECK(s.tau_grid[1] == doctest::Approx(8.0));
    CHECK(s.solve_tau == 16.0);
    const auto& j = s.resolved;
    CHECK(j["ladders"]["tau"].size() == 3);
    CHECK(j["ladders"]["t"].size() == 2);
    CHECK(j["cgo"]["M"] == 6);
    CHECK(j["weight"]["lambda"] == "auto");
    CHECK(j["grid"]["spacing"].size() == 3);
}

TEST_CASE("shipped scenario files match the built-in ones") {
    for (const char* n : {"default32", "gaussian24", "blind24", "degenerate16", "quick16"}) {
        fs::path p = fs::path(EUCGO_SOURCE_DIR) / "scenarios" / (std::string(n) + ".json");
        REQUIRE(fs::exists(p));
        CHECK(parse_scenario(read_file(p)).resolved == parse_scenario(builtin_scenario(n)).resolved);
    }
}

TEST_CASE("gaussian potential is q* plus a bump vanishing off V") {
    Scenario s = parse_scenario(builtin_scenario("gaussian24"));
    Grid g = build_scenario_grid(s);
    RVec q = build_potential(s.q2, g, s.q_star);
    RVec qs = build_potential(s.q1, g, s.q_star);
    double peak = 0;
    for (int n = 0; n < g.size(); ++n) {
        CHECK(qs[n] == 0.5);
        if (!g.v_box.contains(g.coord(n), -1e-12)) CHECK(q[n] == 0.5);
        peak = std::max(peak, q[n] - 0.5);
    }
    CHECK(peak > 1.0);
}

TEST_CASE("commands write manifests and repeat bit for bit") {
    Scenario s = parse_scenario(builtin_scenario("quick16"));
    fs::path a = scratch("cgo_a"), b = scratch("cgo_b");
    CommandOptions oa, ob;
    oa.out = a.string();
    ob.out = a.string();
    RunReport r1 = run_command("cgo-check", s, oa);
    CHECK(r1.ok());
    std::string m1 = read_file(a / "manifest.json"), t1 = read_file(a / "transport.csv");
    RunReport r2 = run_command("cgo-check", s, ob);
    CHECK(read_file(a / "manifest.json") == m1);
    CHECK(read_file(a / "transport.csv") == t1);
    CHECK(r2.manifest["config"] == r1.manifest["config"]);

    oa.out = b.string();
    RunReport v = run_command("verify-weight", s, oa);
    CHECK(v.ok());
    CHECK(fs::exists(b / "weight_phi.csv"));
    CHECK(v.manifest["config"]["weight"]["lambda"] == 2.0);
    CHECK_THROWS_WITH_AS(run_command("plot", s, oa), doctest::Contains("cli_runner.command"), Error);
}

TEST_CASE("solve-cgo reports the series and its certificate") {
    Scenario s = parse_scenario(builtin_scenario("quick16"));
    CommandOptions o;
    o.out = scratch("solve").string();
    RunReport r = run_command("solve-cgo", s, o);
    CHECK(r.ok());
    const auto& res = r.manifest["results"];
    CHECK(res["tau"] == 8.0);
    CHECK(res["cgo1"]["terms"] == 1); // q1 = q*: the first term is exact
    CHECK(res["cgo2"]["terms"].get<int>() > 1);
    CHECK(res["cgo2"]["contraction"].get<double>() < 1);
}
