#pragma once

#include "cmpc/types.hpp"

namespace cmpc {

/// Amplitude-phase parameters of a passive relative orbit.
struct ProParams {
    double rho_r = 0.0;    // radial amplitude [m]
    double rho_s = 0.0;    // along-track offset [m]
    double rho_w = 0.0;    // cross-track amplitude [m]
    double alpha_r = 0.0;  // [rad]
    double alpha_w = 0.0;  // [rad]
    double omega = 0.0;    // chief mean motion [1/s]

    void validate() const;
    double period() const;
};

struct ProSample {
    Vec3 dr;
    Vec3 dv;
    Vec3 da;
};

/// Worst-case norms of the reference over one period.
struct ProBounds {
    double r_bar = 0.0;
    double v_bar = 0.0;
    double a_bar_r = 0.0;
};

ProSample pro_state(const ProParams& p, double t);

/// [dr_r; dv_r] at time t.
Vec6 pro_reference(const ProParams& p, double t);

/// Maxima over one period by dense sampling (>= 10^4 samples) refined with
/// golden-section search around the best sample.
ProBounds pro_bounds(const ProParams& p, int samples = 10000);

}  // namespace cmpc
