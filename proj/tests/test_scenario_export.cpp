#include <gtest/gtest.h>

#include "cmpc/results_export.hpp"
#include "cmpc/scenario.hpp"
#include "cmpc/sim_engine.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace cmpc;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("cmpc_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct CliResult {
    int code;
    std::string out;
};

CliResult cli(const std::string& args) {
    static int counter = 0;
    const fs::path log = fs::temp_directory_path() / ("cmpc_cli_" + std::to_string(counter++) + ".log");
    const std::string cmd = std::string("\"") + CMPC_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

json base_json() { return scenario_to_json(builtin_iss_scenario()); }

}  // namespace

TEST(Scenario, JsonRoundTrip) {
    const Scenario s = builtin_iss_scenario();
    const Scenario back = parse_scenario(scenario_to_json(s));
    EXPECT_TRUE(back == s);
    EXPECT_EQ(scenario_to_json(back).dump(), scenario_to_json(s).dump());
}

TEST(Scenario, BundledFileMatchesBuiltin) {
    const Scenario f = load_scenario(std::string(CMPC_SOURCE_DIR) + "/scenarios/iss_three_inspectors.json");
    EXPECT_TRUE(f == builtin_iss_scenario());
    ASSERT_EQ(f.agents.size(), 3u);
    EXPECT_DOUBLE_EQ(f.agents[2].pro.rho_w, 140.0);
    EXPECT_DOUBLE_EQ(f.dt, 0.1);
    EXPECT_DOUBLE_EQ(f.duration, 180.0);
}

TEST(Scenario, UnknownKeyIsRejected) {
    json j = base_json();
    j["agents"][0]["colour"] = "red";
    try {
        parse_scenario(j);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "agents[0].colour");
        EXPECT_EQ(e.reason(), "config-error");
    }
}

TEST(Scenario, SubstepMustDivideSamplingInterval) {
    json j = base_json();
    j["simulation"]["substep_s"] = 0.03;
    try {
        parse_scenario(j).validate();
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "simulation.substep_s");
    }
}

TEST(Scenario, InitialStateOutsideSafeSetIsRejected) {
    Scenario s = builtin_iss_scenario();
    s.agents[1].velocity_frame = "hill";
    s.agents[1].initial_state = pro_reference(s.agents[1].pro, 0.0);
    s.agents[1].initial_state(0) += 7.5;
    try {
        s.validate();
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "agents[1].initial_state");
    }
}

TEST(Scenario, MissingAndMistypedFields) {
    json j = base_json();
    j["controller"].erase("dt_s");
    EXPECT_THROW(parse_scenario(j), ConfigError);
    j = base_json();
    j["simulation"]["duration_s"] = "long";
    EXPECT_THROW(parse_scenario(j), ConfigError);
    EXPECT_THROW(load_scenario("/nonexistent/scenario.json"), ConfigError);
}

TEST(Scenario, InertialVelocitiesAreConvertedToHill) {
    AgentConfig a = builtin_iss_scenario().agents[0];
    a.velocity_frame = "inertial";
    a.initial_state << 10, 20, 30, 1, 2, 3;
    const RelativeState x = a.initial_hill();
    const Vec3 omega(0, 0, a.pro.omega);
    EXPECT_EQ(x.dr, Vec3(10, 20, 30));
    EXPECT_LT((x.dv - (Vec3(1, 2, 3) - omega.cross(x.dr))).norm(), 1e-15);
}

class ExportTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        s_ = builtin_iss_scenario();
        s_.duration = 0.5;
        setups_ = prepare_agents(s_);
        run_ = run_closed_loop(s_);
    }

    RunReport report() const {
        RunReport r;
        r.scenario = s_;
        r.setups = setups_;
        r.trace = &run_;
        for (std::size_t i = 0; i < setups_.size(); ++i) {
            r.audits.push_back(safety_audit(run_.agents[i], setups_[i].margins, setups_[i].cfg, s_.dt,
                                            setups_[i].envelope.eps_d));
        }
        return r;
    }

    static Scenario s_;
    static std::vector<AgentSetup> setups_;
    static RunTrace run_;
};

Scenario ExportTest::s_;
std::vector<AgentSetup> ExportTest::setups_;
RunTrace ExportTest::run_;

TEST_F(ExportTest, WritesAllArtifacts) {
    const fs::path dir = scratch("export");
    const auto files = export_results(report(), dir.string());
    ASSERT_EQ(files.size(), 6u);
    EXPECT_EQ(fs::path(files.back()).filename(), "report.json");
    for (const auto& f : files) {
        EXPECT_TRUE(fs::exists(f)) << f;
        EXPECT_FALSE(fs::exists(f + ".tmp"));
    }
    const std::string trace = slurp(dir / ("trace_" + run_.agents[0].name + ".csv"));
    std::istringstream is(trace);
    std::string header;
    std::getline(is, header);
    std::string expected;
    for (const auto& c : trace_csv_columns()) {
        expected += (expected.empty() ? "" : ",") + c;
    }
    EXPECT_EQ(header, expected);
    std::size_t rows = 0;
    for (std::string line; std::getline(is, line);) {
        ++rows;
    }
    EXPECT_EQ(rows, run_.agents[0].rows.size());
}

TEST_F(ExportTest, ReportEchoReparsesToSameScenario) {
    const json j = report().to_json();
    EXPECT_EQ(j["csv_schema_version"], kCsvSchemaVersion);
    EXPECT_TRUE(parse_scenario(j["scenario"]) == s_);
    ASSERT_EQ(j["agents"].size(), 3u);
    EXPECT_DOUBLE_EQ(j["agents"][0]["margins"]["L_dr_m2_s3"].get<double>(), setups_[0].margins.L_dr);
    EXPECT_EQ(j["agents"][1]["rows"].get<std::size_t>(), run_.agents[1].rows.size());
    EXPECT_EQ(j["safety_audit"].size(), 3u);
}

TEST_F(ExportTest, UnwritableDirectoryRaisesIoError) {
    const fs::path dir = scratch("blocked");
    const fs::path file = dir / "plain_file";
    std::ofstream(file) << "x";
    const fs::path target = file / "out";
    try {
        export_results(report(), target.string());
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_EQ(e.reason(), "io-error");
        EXPECT_EQ(e.path(), target.string());
    }
    EXPECT_FALSE(fs::exists(target / "report.json"));
}

TEST_F(ExportTest, ProGeometryReevaluates) {
    const std::string csv = pro_geometry_csv(setups_, 50);
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "series,t,value");
    int n = 0;
    while (std::getline(is, line)) {
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        const std::string series = line.substr(0, c1);
        const double t = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
        const double v = std::stod(line.substr(c2 + 1));
        const auto slash = series.rfind('/');
        const std::string agent = series.substr(0, slash);
        const int axis = std::string("rsw").find(series.back());
        const auto it = std::find_if(setups_.begin(), setups_.end(), [&](const AgentSetup& a) { return a.name == agent; });
        ASSERT_NE(it, setups_.end());
        EXPECT_EQ(v, pro_state(it->pro, t).dr[axis]);
        ++n;
    }
    EXPECT_EQ(n, 3 * 3 * 50);
}

TEST_F(ExportTest, BarrierPlotSeries) {
    const std::string csv = barrier_plot_csv(run_);
    EXPECT_EQ(csv.rfind("series,t,value\n", 0), 0u);
    for (const char* q : {"/h_dr,", "/H_dr1,", "/h_dv,", "/zeta_dr,", "/zeta_dv,", "/u_norm,"}) {
        EXPECT_NE(csv.find(run_.agents[2].name + q), std::string::npos) << q;
    }
}

TEST(Cli, ReproduceTable2) {
    const CliResult a = cli("reproduce-table2");
    EXPECT_EQ(a.code, 0) << a.out;
    EXPECT_EQ(a.out.find("MISMATCH"), std::string::npos);
    const CliResult b = cli("reproduce-table2");
    EXPECT_EQ(a.out, b.out);
}

TEST(Cli, SimulateZeroDuration) {
    const fs::path dir = scratch("cli_sim");
    const CliResult r = cli("simulate --duration-s 0 --grid 3,3,3 --out \"" + dir.string() + "\"");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(fs::exists(dir / "report.json"));
    const json j = json::parse(slurp(dir / "report.json"));
    EXPECT_EQ(j["scenario"]["simulation"]["duration_s"], 0.0);
}

TEST(Cli, AuditSmallGrid) {
    const fs::path dir = scratch("cli_audit");
    const CliResult r = cli("audit --grid 5,5,5 --out \"" + dir.string() + "\"");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("feasible"), std::string::npos);
    EXPECT_EQ(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}), 3);
}

TEST(Cli, MarginsListsAgents) {
    const CliResult r = cli("margins");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("L_dr"), std::string::npos);
}

TEST(Cli, ConfigErrorsExitWithTwo) {
    const fs::path dir = scratch("cli_bad");
    json j = base_json();
    j["workspace"]["k3"] = 1.0;
    std::ofstream(dir / "bad.json") << j.dump();
    EXPECT_EQ(cli("margins --scenario \"" + (dir / "bad.json").string() + "\"").code, 2);
    EXPECT_EQ(cli("audit --grid 0,5,5").code, 2);
    EXPECT_EQ(cli("bogus-command").code, 2);
    EXPECT_EQ(cli("--help").code, 0);
}
