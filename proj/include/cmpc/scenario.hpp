#pragma once

#include "cmpc/barrier_core.hpp"
#include "cmpc/cmpc_solver.hpp"
#include "cmpc/disturbance_models.hpp"
#include "cmpc/orbital_dynamics.hpp"
#include "cmpc/reference_pro.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace cmpc {

/// Invalid scenario content; `field()` is the JSON path of the offending key.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error("config-error", field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Per-inspector bounds that enter the sampled-data margins.
struct AgentBounds {
    double eps_f = 0.0;  // [m/s^2]
    double eps_u = 0.0;  // [m/s^2]
    double eps_d = 0.0;  // [m/s^2]
    double beta = 0.0;   // [m/s^3]
};

struct AgentConfig {
    std::string name;
    ProParams pro;  // omega is the chief mean motion
    BarrierConfig barrier;
    AgentBounds bounds;
    Vec6 q_diag = Vec6::Ones();
    Vec3 r_diag = Vec3::Ones();
    int horizon = 25;
    Vec6 initial_state = Vec6::Zero();       // as written in the file
    std::string velocity_frame = "hill";     // "hill" | "inertial"

    /// Hill-frame relative state; "inertial" velocities are converted with
    /// dv = v - omega x dr.
    RelativeState initial_hill() const;
};

struct ChiefConfig {
    double mean_motion = 0.0;  // [rad/s]
    double eccentricity = 0.0;
    double inclination_deg = 0.0;
    double raan_deg = 0.0;
    double arg_perigee_deg = 0.0;
    double true_anomaly_deg = 0.0;

    OrbitalElements elements(double mu = kEarthMu) const;
};

struct Scenario {
    ChiefConfig chief;
    std::vector<AgentConfig> agents;
    DisturbanceConfig disturbance;
    double dt = 0.1;          // [s]
    double duration = 180.0;  // [s]
    double substep = 0.01;    // [s]
    double k1 = 1.4;
    double k2 = 1.4;
    std::uint64_t seed = 0;
    FhocOptions solver;

    int substeps_per_sample() const;
    KeplerChief make_chief() const;

    /// Ranges, divisibility of dt by the substep and initial states inside each
    /// agent's safe set. Throws ConfigError.
    void validate() const;
};

bool operator==(const Scenario& a, const Scenario& b);

Scenario parse_scenario(const nlohmann::json& j);
Scenario load_scenario(const std::string& path);
nlohmann::json scenario_to_json(const Scenario& s);

/// The three-inspector ISS mission (identical to scenarios/iss_three_inspectors.json).
Scenario builtin_iss_scenario();

}  // namespace cmpc
