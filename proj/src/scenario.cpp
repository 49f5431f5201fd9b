#include "cmpc/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace cmpc {

using nlohmann::json;

namespace {

constexpr double kDeg = M_PI / 180.0;

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) {
        throw ConfigError(path, "must be an object");
    }
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& item : j.items()) {
        if (!ok.count(item.key())) {
            throw ConfigError(path + "." + item.key(), "unknown key");
        }
    }
}

const json& field(const json& j, const std::string& path, const char* key) {
    if (!j.contains(key)) {
        throw ConfigError(path + "." + key, "missing");
    }
    return j.at(key);
}

double number(const json& j, const std::string& path, const char* key) {
    const json& v = field(j, path, key);
    if (!v.is_number()) {
        throw ConfigError(path + "." + key, "must be a number");
    }
    const double x = v.get<double>();
    if (!std::isfinite(x)) {
        throw ConfigError(path + "." + key, "must be finite");
    }
    return x;
}

double number_or(const json& j, const std::string& path, const char* key, double fallback) {
    return j.contains(key) ? number(j, path, key) : fallback;
}

bool flag_or(const json& j, const std::string& path, const char* key, bool fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    if (!j.at(key).is_boolean()) {
        throw ConfigError(path + "." + key, "must be true or false");
    }
    return j.at(key).get<bool>();
}

template <int N>
Eigen::Matrix<double, N, 1> vector_of(const json& j, const std::string& path, const char* key) {
    const json& v = field(j, path, key);
    if (!v.is_array() || v.size() != static_cast<std::size_t>(N)) {
        throw ConfigError(path + "." + key, "must be an array of " + std::to_string(N) + " numbers");
    }
    Eigen::Matrix<double, N, 1> out;
    for (int i = 0; i < N; ++i) {
        if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) {
            throw ConfigError(path + "." + key + "[" + std::to_string(i) + "]", "must be a finite number");
        }
        out(i) = v[i].get<double>();
    }
    return out;
}

template <class V>
json array_of(const V& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) {
        a.push_back(v(i));
    }
    return a;
}

void require(bool ok, const std::string& path, const std::string& what) {
    if (!ok) {
        throw ConfigError(path, what);
    }
}

AgentConfig parse_agent(const json& j, const std::string& path, double mean_motion) {
    check_keys(j, path, {"name", "pro", "barrier", "bounds", "weights", "initial_state"});
    AgentConfig a;
    const json& name = field(j, path, "name");
    require(name.is_string(), path + ".name", "must be a string");
    a.name = name.get<std::string>();

    const std::string pp = path + ".pro";
    const json& pro = field(j, path, "pro");
    check_keys(pro, pp, {"rho_r_m", "rho_s_m", "rho_w_m", "alpha_r_rad", "alpha_w_rad"});
    a.pro.rho_r = number(pro, pp, "rho_r_m");
    a.pro.rho_s = number(pro, pp, "rho_s_m");
    a.pro.rho_w = number(pro, pp, "rho_w_m");
    a.pro.alpha_r = number(pro, pp, "alpha_r_rad");
    a.pro.alpha_w = number(pro, pp, "alpha_w_rad");
    a.pro.omega = mean_motion;

    const std::string bp = path + ".barrier";
    const json& bar = field(j, path, "barrier");
    check_keys(bar, bp, {"eps_dr_m", "eps_dv_m_s", "p_dr0_1_s", "p_dr1_1_s", "p_dv0_1_s"});
    a.barrier.eps_dr = number(bar, bp, "eps_dr_m");
    a.barrier.eps_dv = number(bar, bp, "eps_dv_m_s");
    a.barrier.p_dr0 = number(bar, bp, "p_dr0_1_s");
    a.barrier.p_dr1 = number(bar, bp, "p_dr1_1_s");
    a.barrier.p_dv0 = number(bar, bp, "p_dv0_1_s");

    const std::string sp = path + ".bounds";
    const json& bnd = field(j, path, "bounds");
    check_keys(bnd, sp, {"eps_f_m_s2", "eps_u_m_s2", "eps_d_m_s2", "beta_m_s3"});
    a.bounds.eps_f = number(bnd, sp, "eps_f_m_s2");
    a.bounds.eps_u = number(bnd, sp, "eps_u_m_s2");
    a.bounds.eps_d = number(bnd, sp, "eps_d_m_s2");
    a.bounds.beta = number(bnd, sp, "beta_m_s3");

    const std::string wp = path + ".weights";
    const json& w = field(j, path, "weights");
    check_keys(w, wp, {"q_diag", "r_diag", "horizon_steps"});
    a.q_diag = vector_of<6>(w, wp, "q_diag");
    a.r_diag = vector_of<3>(w, wp, "r_diag");
    const json& hz = field(w, wp, "horizon_steps");
    require(hz.is_number_integer(), wp + ".horizon_steps", "must be an integer");
    a.horizon = hz.get<int>();

    const std::string ip = path + ".initial_state";
    const json& init = field(j, path, "initial_state");
    check_keys(init, ip, {"dr_m", "dv_m_s", "velocity_frame"});
    a.initial_state << vector_of<3>(init, ip, "dr_m"), vector_of<3>(init, ip, "dv_m_s");
    const json& frame = field(init, ip, "velocity_frame");
    require(frame.is_string(), ip + ".velocity_frame", "must be \"hill\" or \"inertial\"");
    a.velocity_frame = frame.get<std::string>();
    return a;
}

}  // namespace

RelativeState AgentConfig::initial_hill() const {
    RelativeState x = RelativeState::from(initial_state);
    if (velocity_frame == "inertial") {
        x.dv -= Vec3(0.0, 0.0, pro.omega).cross(x.dr);
    }
    return x;
}

OrbitalElements ChiefConfig::elements(double mu) const {
    OrbitalElements el;
    el.semi_major_axis = std::cbrt(mu / (mean_motion * mean_motion));
    el.eccentricity = eccentricity;
    el.inclination = inclination_deg * kDeg;
    el.raan = raan_deg * kDeg;
    el.arg_perigee = arg_perigee_deg * kDeg;
    el.true_anomaly = true_anomaly_deg * kDeg;
    return el;
}

int Scenario::substeps_per_sample() const { return static_cast<int>(std::lround(dt / substep)); }

KeplerChief Scenario::make_chief() const { return KeplerChief(ChiefState::from_elements(chief.elements())); }

void Scenario::validate() const {
    require(chief.mean_motion > 0.0, "chief.mean_motion_rad_s", "must be positive");
    require(chief.eccentricity >= 0.0 && chief.eccentricity < kMaxChiefEccentricity, "chief.eccentricity",
            "must lie in [0, 0.05)");
    try {
        make_chief();
    } catch (const Error& e) {
        throw ConfigError("chief", e.what());
    }
    require(dt > 0.0, "controller.dt_s", "must be positive");
    require(duration >= 0.0, "simulation.duration_s", "must be non-negative");
    require(substep > 0.0 && substep <= dt, "simulation.substep_s", "must lie in (0, dt]");
    const double ratio = dt / substep;
    require(std::abs(ratio - std::round(ratio)) <= 1e-9 * ratio, "simulation.substep_s", "must divide dt");
    require(k1 > 0.0 && k2 > 0.0, "workspace", "k1 and k2 must be positive");
    require(solver.max_iterations >= 1, "controller.max_iterations", "must be >= 1");
    require(solver.kkt_tolerance > 0.0, "controller.kkt_tolerance", "must be positive");
    require(solver.elastic_penalty > 0.0, "controller.elastic_penalty", "must be positive");
    try {
        disturbance.validate();
    } catch (const Error& e) {
        throw ConfigError("disturbance", e.what());
    }
    require(!agents.empty(), "agents", "at least one agent is required");
    for (std::size_t i = 0; i < agents.size(); ++i) {
        const AgentConfig& a = agents[i];
        const std::string path = "agents[" + std::to_string(i) + "]";
        try {
            a.pro.validate();
        } catch (const Error& e) {
            throw ConfigError(path + ".pro", e.what());
        }
        try {
            a.barrier.validate();
        } catch (const Error& e) {
            throw ConfigError(path + ".barrier", e.what());
        }
        const AgentBounds& b = a.bounds;
        require(b.eps_f >= 0.0 && b.eps_d >= 0.0 && b.beta >= 0.0, path + ".bounds",
                "eps_f, eps_d and beta must be non-negative");
        require(b.eps_u > 0.0, path + ".bounds.eps_u_m_s2", "must be positive");
        require((a.q_diag.array() >= 0.0).all(), path + ".weights.q_diag", "must be non-negative");
        require((a.r_diag.array() > 0.0).all(), path + ".weights.r_diag", "must be positive");
        require(a.horizon >= 1, path + ".weights.horizon_steps", "must be >= 1");
        require(a.velocity_frame == "hill" || a.velocity_frame == "inertial", path + ".initial_state.velocity_frame",
                "must be \"hill\" or \"inertial\"");
        const TrackingError err = TrackingError::between(a.initial_hill().stacked(), pro_reference(a.pro, 0.0));
        if (!safe_membership(err, a.barrier).state) {
            const BarrierValues v = barrier_values(err, a.barrier);
            std::ostringstream os;
            os << "outside the initial safe set (h_dr=" << v.h_dr << ", H_dr1=" << v.H_dr1 << ", h_dv=" << v.h_dv
               << ")";
            throw ConfigError(path + ".initial_state", os.str());
        }
    }
}

bool operator==(const Scenario& a, const Scenario& b) { return scenario_to_json(a) == scenario_to_json(b); }

Scenario parse_scenario(const json& j) {
    check_keys(j, "$", {"chief", "controller", "simulation", "workspace", "disturbance", "agents"});
    Scenario s;

    const json& c = field(j, "$", "chief");
    check_keys(c, "chief", {"mean_motion_rad_s", "eccentricity", "inclination_deg", "raan_deg", "arg_perigee_deg",
                            "true_anomaly_deg"});
    s.chief.mean_motion = number(c, "chief", "mean_motion_rad_s");
    s.chief.eccentricity = number(c, "chief", "eccentricity");
    s.chief.inclination_deg = number(c, "chief", "inclination_deg");
    s.chief.raan_deg = number(c, "chief", "raan_deg");
    s.chief.arg_perigee_deg = number(c, "chief", "arg_perigee_deg");
    s.chief.true_anomaly_deg = number(c, "chief", "true_anomaly_deg");

    const json& ctl = field(j, "$", "controller");
    check_keys(ctl, "controller",
               {"dt_s", "squared_stage_cost", "barrier_all_steps", "elastic_penalty", "max_iterations",
                "kkt_tolerance"});
    s.dt = number(ctl, "controller", "dt_s");
    s.solver.squared_stage_cost = flag_or(ctl, "controller", "squared_stage_cost", false);
    s.solver.barrier_all_steps = flag_or(ctl, "controller", "barrier_all_steps", false);
    s.solver.elastic_penalty = number_or(ctl, "controller", "elastic_penalty", s.solver.elastic_penalty);
    s.solver.max_iterations =
        static_cast<int>(number_or(ctl, "controller", "max_iterations", s.solver.max_iterations));
    s.solver.kkt_tolerance = number_or(ctl, "controller", "kkt_tolerance", s.solver.kkt_tolerance);

    const json& sim = field(j, "$", "simulation");
    check_keys(sim, "simulation", {"duration_s", "substep_s", "seed"});
    s.duration = number(sim, "simulation", "duration_s");
    s.substep = number(sim, "simulation", "substep_s");
    const json& seed = field(sim, "simulation", "seed");
    require(seed.is_number_unsigned() || (seed.is_number_integer() && seed.get<long long>() >= 0),
            "simulation.seed", "must be a non-negative integer");
    s.seed = seed.get<std::uint64_t>();

    const json& ws = field(j, "$", "workspace");
    check_keys(ws, "workspace", {"k1", "k2"});
    s.k1 = number(ws, "workspace", "k1");
    s.k2 = number(ws, "workspace", "k2");

    const json& d = field(j, "$", "disturbance");
    check_keys(d, "disturbance",
               {"mode", "zonal_j2_to_j6", "earth_radius_m", "earth_rotation_rad_s", "rho_ref_kg_m3", "h_ref_m",
                "scale_height_m", "ballistic_chief_m2_kg", "ballistic_inspector_m2_kg", "random_bound_m_s2"});
    const json& mode = field(d, "disturbance", "mode");
    require(mode.is_string(), "disturbance.mode", "must be a string");
    try {
        s.disturbance.mode = disturbance_mode_from_string(mode.get<std::string>());
    } catch (const Error& e) {
        throw ConfigError("disturbance.mode", e.what());
    }
    if (d.contains("zonal_j2_to_j6")) {
        const Eigen::Matrix<double, 5, 1> z = vector_of<5>(d, "disturbance", "zonal_j2_to_j6");
        for (int i = 0; i < 5; ++i) {
            s.disturbance.zonal[i] = z(i);
        }
    }
    DisturbanceConfig& dc = s.disturbance;
    dc.earth_radius = number_or(d, "disturbance", "earth_radius_m", dc.earth_radius);
    dc.earth_rotation = number_or(d, "disturbance", "earth_rotation_rad_s", dc.earth_rotation);
    dc.rho_ref = number_or(d, "disturbance", "rho_ref_kg_m3", dc.rho_ref);
    dc.h_ref = number_or(d, "disturbance", "h_ref_m", dc.h_ref);
    dc.scale_height = number_or(d, "disturbance", "scale_height_m", dc.scale_height);
    dc.ballistic_chief = number_or(d, "disturbance", "ballistic_chief_m2_kg", dc.ballistic_chief);
    dc.ballistic_inspector = number_or(d, "disturbance", "ballistic_inspector_m2_kg", dc.ballistic_inspector);
    dc.random_bound = number_or(d, "disturbance", "random_bound_m_s2", dc.random_bound);

    const json& agents = field(j, "$", "agents");
    require(agents.is_array(), "agents", "must be an array");
    for (std::size_t i = 0; i < agents.size(); ++i) {
        s.agents.push_back(parse_agent(agents[i], "agents[" + std::to_string(i) + "]", s.chief.mean_motion));
    }
    s.validate();
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(path, "cannot open scenario file");
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path, std::string("malformed JSON: ") + e.what());
    }
    return parse_scenario(j);
}

json scenario_to_json(const Scenario& s) {
    json j;
    j["chief"] = {{"mean_motion_rad_s", s.chief.mean_motion},
                  {"eccentricity", s.chief.eccentricity},
                  {"inclination_deg", s.chief.inclination_deg},
                  {"raan_deg", s.chief.raan_deg},
                  {"arg_perigee_deg", s.chief.arg_perigee_deg},
                  {"true_anomaly_deg", s.chief.true_anomaly_deg}};
    j["controller"] = {{"dt_s", s.dt},
                       {"squared_stage_cost", s.solver.squared_stage_cost},
                       {"barrier_all_steps", s.solver.barrier_all_steps},
                       {"elastic_penalty", s.solver.elastic_penalty},
                       {"max_iterations", s.solver.max_iterations},
                       {"kkt_tolerance", s.solver.kkt_tolerance}};
    j["simulation"] = {{"duration_s", s.duration}, {"substep_s", s.substep}, {"seed", s.seed}};
    j["workspace"] = {{"k1", s.k1}, {"k2", s.k2}};
    const DisturbanceConfig& d = s.disturbance;
    json zonal = json::array();
    for (double z : d.zonal) {
        zonal.push_back(z);
    }
    j["disturbance"] = {{"mode", to_string(d.mode)},
                        {"zonal_j2_to_j6", zonal},
                        {"earth_radius_m", d.earth_radius},
                        {"earth_rotation_rad_s", d.earth_rotation},
                        {"rho_ref_kg_m3", d.rho_ref},
                        {"h_ref_m", d.h_ref},
                        {"scale_height_m", d.scale_height},
                        {"ballistic_chief_m2_kg", d.ballistic_chief},
                        {"ballistic_inspector_m2_kg", d.ballistic_inspector},
                        {"random_bound_m_s2", d.random_bound}};
    json agents = json::array();
    for (const AgentConfig& a : s.agents) {
        json ag;
        ag["name"] = a.name;
        ag["pro"] = {{"rho_r_m", a.pro.rho_r},
                     {"rho_s_m", a.pro.rho_s},
                     {"rho_w_m", a.pro.rho_w},
                     {"alpha_r_rad", a.pro.alpha_r},
                     {"alpha_w_rad", a.pro.alpha_w}};
        ag["barrier"] = {{"eps_dr_m", a.barrier.eps_dr},
                         {"eps_dv_m_s", a.barrier.eps_dv},
                         {"p_dr0_1_s", a.barrier.p_dr0},
                         {"p_dr1_1_s", a.barrier.p_dr1},
                         {"p_dv0_1_s", a.barrier.p_dv0}};
        ag["bounds"] = {{"eps_f_m_s2", a.bounds.eps_f},
                        {"eps_u_m_s2", a.bounds.eps_u},
                        {"eps_d_m_s2", a.bounds.eps_d},
                        {"beta_m_s3", a.bounds.beta}};
        ag["weights"] = {{"q_diag", array_of(a.q_diag)}, {"r_diag", array_of(a.r_diag)}, {"horizon_steps", a.horizon}};
        ag["initial_state"] = {{"dr_m", array_of(Vec3(a.initial_state.head<3>()))},
                               {"dv_m_s", array_of(Vec3(a.initial_state.tail<3>()))},
                               {"velocity_frame", a.velocity_frame}};
        agents.push_back(ag);
    }
    j["agents"] = agents;
    return j;
}

Scenario builtin_iss_scenario() {
    Scenario s;
    s.chief.mean_motion = 1.125e-3;
    s.chief.eccentricity = 0.0;
    s.chief.inclination_deg = 51.64;
    s.dt = 0.1;
    s.duration = 180.0;
    s.substep = 0.01;
    s.seed = 20230204;
    s.k1 = 1.4;
    s.k2 = 1.4;
    s.disturbance.mode = DisturbanceMode::Analytic;

    struct Row {
        const char* name;
        double rho_r, rho_w, eps_f, eps_d, beta;
        Vec6 x0;
    };
    const Row rows[3] = {
        {"inspector_1", 50.0, 0.0, 8.872e-4, 1.577e-6, 6.023e-4,
         (Vec6() << 55.70, 1.08, 2.43, 1.73e-2, -9.23e-2, 8.00e-3).finished()},
        {"inspector_2", 64.0, 60.0, 1.254e-3, 2.205e-6, 8.236e-4,
         (Vec6() << 67.72, 3.27, 3.88, -2.5e-3, -1.36e-1, 7.01e-2).finished()},
        {"inspector_3", 78.0, 140.0, 1.860e-3, 3.243e-6, 1.189e-3,
         (Vec6() << 82.63, 0.65, 4.21, -1.39e-2, -4.85e-2, 1.61e-1).finished()},
    };
    for (const Row& r : rows) {
        AgentConfig a;
        a.name = r.name;
        a.pro = {r.rho_r, 0.0, r.rho_w, M_PI / 2.0, 0.0, s.chief.mean_motion};
        a.barrier = {7.0, 0.133, 0.02, 0.05, 0.05};
        a.bounds = {r.eps_f, 0.02, r.eps_d, r.beta};
        a.q_diag << 50.0, 50.0, 50.0, 59.17, 59.17, 59.17;
        a.r_diag << 50.0, 50.0, 50.0;
        a.horizon = 25;
        a.initial_state = r.x0;
        a.velocity_frame = "inertial";
        s.agents.push_back(a);
    }
    return s;
}

}  // namespace cmpc
