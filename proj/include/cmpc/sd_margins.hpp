#pragma once

#include "cmpc/barrier_core.hpp"
#include "cmpc/orbital_dynamics.hpp"
#include "cmpc/reference_pro.hpp"

#include <cstdint>

namespace cmpc {

/// Bounds entering the sampled-data margins.
struct EnvelopeInputs {
    double eps_f = 0.0;  // max |f_v| over the workspace [m/s^2]
    double eps_u = 0.0;  // input bound [m/s^2]
    double eps_d = 0.0;  // disturbance bound [m/s^2]
    double dt = 0.0;     // sampling interval [s]
    double beta = 0.0;   // max |d f_v/dt| + max |d d/dt| [m/s^3]
    ProBounds pro;
    BarrierConfig cfg;

    void validate() const;
};

/// Over-approximation of what is reachable from the safe set in one interval.
struct Envelope {
    double a_bar = 0.0;       // max total acceleration
    double eps_bar_dv = 0.0;  // inflated velocity corridor
    double eps_bar_dr = 0.0;  // inflated position corridor
};

struct MarginSet {
    double a_bar = 0.0;
    double eps_bar_dv = 0.0;
    double eps_bar_dr = 0.0;
    double L_dv = 0.0;  // bound on |d zeta_dv / dt|
    double L_dr = 0.0;  // bound on |d zeta_dr / dt|
    double c_dv = 0.0;  // bound on |L_g H| for the velocity barrier
    double c_dr = 0.0;  // bound on |L_g H| for the position barrier
};

Envelope worst_case_envelope(const EnvelopeInputs& in);

MarginSet margin_constants(const EnvelopeInputs& in);

/// Margin constants over an explicitly given error envelope. With the
/// one-interval envelope this is margin_constants(in); with the full workspace
/// radii it yields the global (dt-independent) constants.
MarginSet margin_constants(const EnvelopeInputs& in, const Envelope& env);

/// Global constants: the velocity/position error radii are those of the whole
/// workspace instead of the one-interval reachable set.
MarginSet global_margin_constants(const EnvelopeInputs& in, double workspace_dv_radius, double workspace_dr_radius);

struct SdCheck {
    double margin = 0.0;
    bool satisfied = false;
};

/// margin = zeta - L dt - c eps_d; satisfied iff margin >= 0.
SdCheck sd_condition(double zeta_nominal, double L, double c, double dt, double eps_d);

bool reachable_overapprox_membership(const TrackingError& err, const Envelope& env);

/// The admissible workspace: |dr| <= k1 r_bar and |dv| <= k2 v_bar.
struct Workspace {
    double r_max = 0.0;
    double v_max = 0.0;
};

/// Sampled maximum of |f_v| over the workspace and one chief period.
double estimate_eps_f(const KeplerChief& chief, const Workspace& ws, int samples, std::uint64_t seed);

/// Sampled bound on |d f_v/dt| along admissible motion (|u| <= eps_u, |d| <= eps_d),
/// plus the configured bound on the disturbance rate.
double estimate_beta(const KeplerChief& chief, const Workspace& ws, double eps_u, double eps_d,
                     double disturbance_rate_bound, int samples, std::uint64_t seed);

}  // namespace cmpc
