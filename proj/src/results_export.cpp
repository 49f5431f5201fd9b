#include "cmpc/results_export.hpp"

#include <cctype>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace cmpc {

namespace fs = std::filesystem;

void atomic_write(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) {
            throw IoError(path, std::string("cannot open for writing: ") + std::strerror(errno));
        }
        os << content;
        os.flush();
        if (!os) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw IoError(path, "write failed");
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError(path, "rename failed: " + ec.message());
    }
}

const std::vector<std::string>& trace_csv_columns() {
    static const std::vector<std::string> cols = {
        "t",       "sample",  "dr_x",    "dr_y",    "dr_z",  "dv_x",   "dv_y",    "dv_z",    "e_dr_x",
        "e_dr_y",  "e_dr_z",  "e_dv_x",  "e_dv_y",  "e_dv_z", "h_dr",  "H_dr1",   "h_dv",    "zeta_dr",
        "zeta_dv", "u_norm",  "u_x",     "u_y",     "u_z",   "d_norm"};
    return cols;
}

namespace {

std::ostringstream number_stream() {
    std::ostringstream os;
    os << std::setprecision(17);
    return os;
}

void header(std::ostringstream& os, const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i) {
        os << (i ? "," : "") << cols[i];
    }
    os << '\n';
}

std::string file_safe(const std::string& name) {
    std::string s = name;
    for (char& c : s) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')) {
            c = '_';
        }
    }
    return s.empty() ? "agent" : s;
}

}  // namespace

std::string trace_csv(const AgentTrace& trace) {
    std::ostringstream os = number_stream();
    header(os, trace_csv_columns());
    for (const TraceRow& r : trace.rows) {
        os << r.t << ',' << r.sample;
        for (int i = 0; i < 6; ++i) {
            os << ',' << r.x[i];
        }
        for (int i = 0; i < 6; ++i) {
            os << ',' << r.e[i];
        }
        os << ',' << r.h_dr << ',' << r.H_dr1 << ',' << r.h_dv << ',' << r.zeta_dr << ',' << r.zeta_dv << ','
           << r.u.norm() << ',' << r.u.x() << ',' << r.u.y() << ',' << r.u.z() << ',' << r.d.norm() << '\n';
    }
    return os.str();
}

std::string barrier_plot_csv(const RunTrace& run) {
    std::ostringstream os = number_stream();
    os << "series,t,value\n";
    for (const AgentTrace& a : run.agents) {
        auto emit = [&](const char* q, auto get) {
            for (const TraceRow& r : a.rows) {
                os << a.name << '/' << q << ',' << r.t << ',' << get(r) << '\n';
            }
        };
        emit("h_dr", [](const TraceRow& r) { return r.h_dr; });
        emit("H_dr1", [](const TraceRow& r) { return r.H_dr1; });
        emit("h_dv", [](const TraceRow& r) { return r.h_dv; });
        emit("zeta_dr", [](const TraceRow& r) { return r.zeta_dr; });
        emit("zeta_dv", [](const TraceRow& r) { return r.zeta_dv; });
        emit("u_norm", [](const TraceRow& r) { return r.u.norm(); });
    }
    return os.str();
}

std::string pro_geometry_csv(const std::vector<AgentSetup>& agents, int samples) {
    if (samples < 2) {
        throw InvalidArgument("pro_geometry_csv: need at least two samples");
    }
    std::ostringstream os = number_stream();
    os << "series,t,value\n";
    for (const AgentSetup& a : agents) {
        const double T = a.pro.period();
        for (int axis = 0; axis < 3; ++axis) {
            static constexpr const char* names[] = {"r", "s", "w"};
            for (int i = 0; i < samples; ++i) {
                const double t = T * i / (samples - 1);
                os << a.name << '/' << names[axis] << ',' << t << ',' << pro_state(a.pro, t).dr[axis] << '\n';
            }
        }
    }
    return os.str();
}

nlohmann::json margins_to_json(const MarginSet& m) {
    return {{"a_bar_m_s2", m.a_bar},   {"eps_bar_dv_m_s", m.eps_bar_dv}, {"eps_bar_dr_m", m.eps_bar_dr},
            {"L_dv_m2_s4", m.L_dv},    {"L_dr_m2_s3", m.L_dr},           {"c_dv_m_s", m.c_dv},
            {"c_dr_m", m.c_dr}};
}

nlohmann::json audit_to_json(const AgentAudit& a) {
    return {{"name", a.name},
            {"samples_checked", a.samples_checked},
            {"condition_violations", a.condition_violations},
            {"implication_violations", a.implication_violations},
            {"min_h_dr", a.min_h_dr},
            {"min_H_dr1", a.min_H_dr1},
            {"min_h_dv", a.min_h_dv},
            {"max_u_norm", a.max_u_norm},
            {"min_sd_margin_dv", a.min_sd_margin_dv},
            {"min_sd_margin_dr", a.min_sd_margin_dr},
            {"peak_e_dv", a.peak_e_dv},
            {"peak_e_dv_time_s", a.peak_e_dv_time},
            {"recovery_time_s", a.recovery_time},
            {"safe", a.safe}};
}

nlohmann::json RunReport::to_json() const {
    nlohmann::json j;
    j["csv_schema_version"] = kCsvSchemaVersion;
    j["trace_columns"] = trace_csv_columns();
    j["scenario"] = scenario_to_json(scenario);
    j["seed"] = scenario.seed;

    nlohmann::json agents = nlohmann::json::array();
    for (std::size_t i = 0; i < setups.size(); ++i) {
        const AgentSetup& s = setups[i];
        nlohmann::json a;
        a["name"] = s.name;
        a["margins"] = margins_to_json(s.margins);
        a["pro_bounds"] = {{"r_bar_m", s.pro_bounds.r_bar},
                           {"v_bar_m_s", s.pro_bounds.v_bar},
                           {"a_bar_r_m_s2", s.pro_bounds.a_bar_r}};
        a["margin_inputs"] = {{"eps_f_m_s2", s.envelope.eps_f}, {"eps_u_m_s2", s.envelope.eps_u},
                              {"eps_d_m_s2", s.envelope.eps_d}, {"beta_m_s3", s.envelope.beta},
                              {"dt_s", s.envelope.dt}};
        a["terminal_weight"] = nlohmann::json::array();
        for (int r = 0; r < 6; ++r) {
            std::vector<double> row(6);
            for (int c = 0; c < 6; ++c) {
                row[c] = s.P(r, c);
            }
            a["terminal_weight"].push_back(row);
        }
        if (trace && i < trace->agents.size()) {
            const AgentTrace& t = trace->agents[i];
            a["seed"] = t.seed;
            a["rows"] = t.rows.size();
            a["aborted"] = t.aborted;
            a["abort_reason"] = t.abort_reason;
            a["abort_time_s"] = t.abort_time;
            a["wall_time_s"] = t.wall_time_s;
            a["trace_file"] = "trace_" + file_safe(t.name) + ".csv";
        }
        agents.push_back(a);
    }
    j["agents"] = agents;

    nlohmann::json feas = nlohmann::json::array();
    for (const FeasibilitySummary& f : feasibility) {
        feas.push_back({{"agent", f.agent},
                        {"feasible", f.feasible},
                        {"min_slack", f.min_slack},
                        {"grid", {f.grid.n_er, f.grid.n_ev, f.grid.n_alpha}},
                        {"wall_time_s", f.wall_time_s}});
    }
    j["feasibility"] = feas;

    nlohmann::json aud = nlohmann::json::array();
    for (const AgentAudit& a : audits) {
        aud.push_back(audit_to_json(a));
    }
    j["safety_audit"] = aud;

    j["wall_time_s"] = {{"setup", setup_time_s},
                        {"simulation", trace ? trace->wall_time_s : 0.0},
                        {"audit", audit_time_s}};
    return j;
}

std::vector<std::string> export_results(const RunReport& report, const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw IoError(out_dir, "cannot create directory: " + ec.message());
    }
    const fs::path dir(out_dir);
    std::vector<std::string> written;
    auto put = [&](const std::string& name, const std::string& content) {
        const std::string p = (dir / name).string();
        atomic_write(p, content);
        written.push_back(p);
    };
    if (report.trace) {
        for (const AgentTrace& t : report.trace->agents) {
            put("trace_" + file_safe(t.name) + ".csv", trace_csv(t));
        }
        put("plot_barriers.csv", barrier_plot_csv(*report.trace));
    }
    put("plot_pro_geometry.csv", pro_geometry_csv(report.setups));
    put("report.json", report.to_json().dump(2) + "\n");
    return written;
}

}  // namespace cmpc
