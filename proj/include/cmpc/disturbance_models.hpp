#pragma once

#include "cmpc/orbital_dynamics.hpp"
#include "cmpc/reference_pro.hpp"

#include <array>
#include <cstdint>
#include <random>
#include <string>

namespace cmpc {

enum class DisturbanceMode { Analytic, BoundedRandom, Zero };

const char* to_string(DisturbanceMode m);
DisturbanceMode disturbance_mode_from_string(const std::string& s);

struct DisturbanceConfig {
    // J2..J6 (unnormalized zonal coefficients)
    std::array<double, 5> zonal = {1.08262668e-3, -2.53265649e-6, -1.61962159e-6, -2.27296083e-7, 5.40681239e-7};
    double earth_radius = 6378136.3;        // [m]
    double earth_rotation = 7.292115e-5;    // [rad/s]
    double rho_ref = 3.725e-12;             // [kg/m^3]
    double h_ref = 400e3;                   // [m]
    double scale_height = 58.515e3;         // [m]
    double ballistic_chief = 0.0072;        // C_d A / m [m^2/kg]
    double ballistic_inspector = 0.0132;    // [m^2/kg]
    DisturbanceMode mode = DisturbanceMode::Analytic;
    double random_bound = 0.0;              // ball radius for BoundedRandom [m/s^2]

    void validate() const;
};

/// Gradient of the zonal potential (J2..J6) at an inertial position, with the
/// z axis along the Earth rotation axis. Throws BelowSurface for |r| <= R_e.
Vec3 zonal_accel(const Vec3& r, const DisturbanceConfig& cfg, double mu = kEarthMu);

/// Exponential-atmosphere drag on a body with the given ballistic coefficient;
/// the atmosphere co-rotates with the Earth.
Vec3 drag_accel(const Vec3& r, const Vec3& v, double ballistic, const DisturbanceConfig& cfg);

double atmosphere_density(double altitude, const DisturbanceConfig& cfg);

/// Inertial perturbation difference a_pert(inspector) - a_pert(chief).
Vec3 inertial_differential(const Vec3& r_insp, const Vec3& v_insp, double b_insp, const Vec3& r_chief,
                           const Vec3& v_chief, double b_chief, const DisturbanceConfig& cfg, double mu = kEarthMu);

/// Inertial position and velocity of an inspector from its Hill-frame state.
void inspector_inertial(const ChiefState& chief, const RelativeState& x, Vec3& r, Vec3& v);

/// Analytic mode: differential perturbation resolved in the Hill frame.
/// BoundedRandom mode: a uniform draw from the random_bound ball using `rng`
/// (required). Zero mode: 0.
Vec3 differential_disturbance(const ChiefState& chief, const RelativeState& x, const DisturbanceConfig& cfg,
                              std::mt19937_64* rng = nullptr);

Vec3 uniform_in_ball(std::mt19937_64& rng, double radius);

/// Per-agent truth-side disturbance source. BoundedRandom values are redrawn by
/// `next_substep` and held until the next call.
class DisturbanceGenerator {
public:
    DisturbanceGenerator(DisturbanceConfig cfg, std::uint64_t seed);

    void next_substep();
    Vec3 operator()(const ChiefState& chief, const RelativeState& x) const;
    const DisturbanceConfig& config() const { return cfg_; }

private:
    DisturbanceConfig cfg_;
    std::mt19937_64 rng_;
    Vec3 held_ = Vec3::Zero();
};

struct EpsDEstimate {
    double eps_d = 0.0;  // sampled max times the safety factor
    double sampled_max = 0.0;
    int samples = 0;
};

/// Max |d| over states reference(t) + error, t uniform over one reference
/// period and the error uniform in the corridor balls, inflated by 1.2.
EpsDEstimate estimate_eps_d(const KeplerChief& chief, const ProParams& pro, double eps_dr, double eps_dv,
                            const DisturbanceConfig& cfg, int samples, std::uint64_t seed);

}  // namespace cmpc
