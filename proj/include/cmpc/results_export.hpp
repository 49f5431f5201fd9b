#pragma once

#include "cmpc/feasibility_audit.hpp"
#include "cmpc/scenario.hpp"
#include "cmpc/sd_margins.hpp"
#include "cmpc/sim_engine.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace cmpc {

inline constexpr int kCsvSchemaVersion = 1;

class IoError : public Error {
public:
    IoError(std::string path, const std::string& what) : Error("io-error", path + ": " + what), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// Writes `content` to a sibling temporary file and renames it into place.
void atomic_write(const std::string& path, const std::string& content);

/// Column order of the per-agent trace CSV.
const std::vector<std::string>& trace_csv_columns();

std::string trace_csv(const AgentTrace& trace);

/// Long format (series, t, value): h_dr, H_dr1, h_dv, zeta_dr, zeta_dv and u_norm
/// per agent, series named "<agent>/<quantity>".
std::string barrier_plot_csv(const RunTrace& run);

/// Long format (series, t, value) of the reference curves over one period,
/// series "<agent>/r", "<agent>/s", "<agent>/w".
std::string pro_geometry_csv(const std::vector<AgentSetup>& agents, int samples = 400);

nlohmann::json margins_to_json(const MarginSet& m);
nlohmann::json audit_to_json(const AgentAudit& a);

struct FeasibilitySummary {
    std::string agent;
    bool feasible = false;
    double min_slack = 0.0;
    GridSpec grid;
    double wall_time_s = 0.0;
};

struct RunReport {
    Scenario scenario;
    std::vector<AgentSetup> setups;
    std::vector<FeasibilitySummary> feasibility;
    std::vector<AgentAudit> audits;
    const RunTrace* trace = nullptr;
    double setup_time_s = 0.0;
    double audit_time_s = 0.0;

    nlohmann::json to_json() const;
};

/// Per-agent traces, the two plot files and report.json, the report last.
/// Returns the written paths.
std::vector<std::string> export_results(const RunReport& report, const std::string& out_dir);

}  // namespace cmpc
