#pragma once

#include "cmpc/types.hpp"

#include <span>
#include <vector>

namespace cmpc {

/// Corridor radii and linear class-K gains alpha(x) = p * x.
struct BarrierConfig {
    double eps_dr = 0.0;  // position corridor radius [m]
    double eps_dv = 0.0;  // velocity corridor radius [m/s]
    double p_dr0 = 0.0;   // [1/s]
    double p_dr1 = 0.0;   // [1/s]
    double p_dv0 = 0.0;   // [1/s]

    void validate() const;
};

struct TrackingError {
    Vec3 e_dr = Vec3::Zero();
    Vec3 e_dv = Vec3::Zero();

    static TrackingError between(const Vec6& state, const Vec6& reference) {
        return {state.head<3>() - reference.head<3>(), state.tail<3>() - reference.tail<3>()};
    }
};

struct BarrierValues {
    double h_dr = 0.0;
    double h_dv = 0.0;
    double H_dr1 = 0.0;  // first cascade term of the position barrier
};

BarrierValues barrier_values(const TrackingError& err, const BarrierConfig& cfg);

/// Velocity barrier constraint function; the nominal variant passes d = 0.
double zeta_dv(const TrackingError& err, const Vec3& f_v, const Vec3& u, const Vec3& d, const BarrierConfig& cfg);

/// Second cascade term of the position barrier (relative degree two).
double zeta_dr(const TrackingError& err, const Vec3& f_v, const Vec3& u, const Vec3& d, const BarrierConfig& cfg);

struct SafeMembership {
    bool position = false;  // h_dr >= 0 and H_dr1 >= 0
    bool velocity = false;  // h_dv >= 0
    bool state = false;     // both
};

/// The state set is the intersection of the position and velocity sets.
SafeMembership safe_membership(const TrackingError& err, const BarrierConfig& cfg);

/// Cascade H_0 = h, H_i = dH_{i-1}/dt + p_{i-1} H_{i-1} for linear class-K
/// gains, given the time derivatives h, h', ..., h^(r). Returns H_0..H_r.
std::vector<double> linear_cascade(std::span<const double> h_derivatives, std::span<const double> gains);

}  // namespace cmpc
