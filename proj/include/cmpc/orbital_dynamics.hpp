#pragma once

#include "cmpc/types.hpp"

#include <utility>

namespace cmpc {

inline constexpr double kEarthMu = 3.986004418e14;       // [m^3/s^2]
inline constexpr double kMinInspectorRadius = 1.0;       // [m]
inline constexpr double kMaxChiefEccentricity = 0.05;

/// Classical elements; angles in radians.
struct OrbitalElements {
    double semi_major_axis = 0.0;  // [m]
    double eccentricity = 0.0;
    double inclination = 0.0;
    double raan = 0.0;
    double arg_perigee = 0.0;
    double true_anomaly = 0.0;
};

/// Inertial state of the inspected space vehicle (the chief).
struct ChiefState {
    Vec3 r_sv = Vec3::Zero();  // [m]
    Vec3 v_sv = Vec3::Zero();  // [m/s]
    double mu = kEarthMu;
    double semi_major_axis = 0.0;
    double eccentricity = 0.0;

    /// Fills semi-major axis and eccentricity from the position/velocity pair.
    static ChiefState from_rv(const Vec3& r, const Vec3& v, double mu = kEarthMu);
    static ChiefState from_elements(const OrbitalElements& elements, double mu = kEarthMu);

    double mean_motion() const;
    double period() const;

    /// Throws InvalidArgument unless ||r|| > 0, mu > 0, 0 <= e < 0.05 and the
    /// mean motion is finite and positive.
    void validate() const;
};

/// Local-vertical/local-horizontal frame of the chief.
struct HillFrame {
    Vec3 r_hat;
    Vec3 s_hat;
    Vec3 w_hat;
    Vec3 omega_hj;  // angular velocity of the frame w.r.t. inertial [rad/s]

    /// Rows are the basis vectors: maps inertial components to Hill components.
    Mat3 to_hill() const;
};

HillFrame hill_frame(const ChiefState& chief);

/// The scalar chief quantities the relative equations of motion depend on.
struct ChiefKinematics {
    double mu = kEarthMu;
    double radius = 0.0;    // [m]
    double rate = 0.0;      // orbital angular rate [rad/s]
    double rate_dot = 0.0;  // [rad/s^2]
};

ChiefKinematics chief_kinematics(const ChiefState& chief);

/// Nonlinear drift acceleration f_v of the relative motion (Keplerian chief,
/// no perturbations). Throws SingularRadius when the inspector radius is < 1 m.
Vec3 drift_acceleration(const Vec3& dr, const Vec3& dv, const ChiefKinematics& k);

/// d f_v / d [dr, dv].
Eigen::Matrix<double, 3, 6> drift_jacobian(const Vec3& dr, const Vec3& dv, const ChiefKinematics& k);

/// x_dot = f(x, t) + g (u + d) with g = [0; I].
Vec6 relative_dynamics(const RelativeState& x, const ChiefState& chief, const Vec3& u, const Vec3& d);
Vec6 relative_dynamics(const Vec6& x, const ChiefKinematics& k, const Vec3& u, const Vec3& d);

/// Two-body propagation of the chief by `t` seconds (Lagrange coefficients in
/// eccentric-anomaly difference form; valid for circular orbits).
ChiefState chief_propagate(const ChiefState& chief, double t);

/// Keplerian chief model anchored at an epoch state (t = 0).
class KeplerChief {
public:
    explicit KeplerChief(ChiefState epoch);

    const ChiefState& epoch() const { return epoch_; }
    ChiefState state(double t) const { return chief_propagate(epoch_, t); }
    ChiefKinematics kinematics(double t) const;

private:
    ChiefState epoch_;
};

/// Classical fourth-order Runge-Kutta step for an arbitrary derivative
/// `f(x, t) -> Vec6`.
template <class Derivative>
Vec6 rk4_step(const Vec6& x, double t, double dt, Derivative&& f) {
    if (!(dt > 0.0)) {
        throw InvalidArgument("rk4_step: dt must be positive");
    }
    const double half = 0.5 * dt;
    const Vec6 k1 = f(x, t);
    const Vec6 k2 = f(Vec6(x + half * k1), t + half);
    const Vec6 k3 = f(Vec6(x + half * k2), t + half);
    const Vec6 k4 = f(Vec6(x + dt * k3), t + dt);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Nominal (d = 0) discrete dynamics with the input held over [t, t + dt].
Vec6 rk4_step(const Vec6& x, double t, const Vec3& u, double dt, const KeplerChief& chief);
RelativeState rk4_step(const RelativeState& x, double t, const Vec3& u, double dt, const KeplerChief& chief);

/// Exact derivatives of the discrete RK4 map w.r.t. the state and the held input.
struct StepJacobian {
    Mat6 A;
    Mat63 B;
};

/// Same step as rk4_step, also returning its sensitivities. Chief kinematics at
/// t, t + dt/2 and t + dt are supplied by the caller.
Vec6 rk4_step_sensitivity(const Vec6& x, const Vec3& u, double dt, const ChiefKinematics& k_start,
                          const ChiefKinematics& k_mid, const ChiefKinematics& k_end, StepJacobian& jac);

/// Continuous-time Clohessy-Wiltshire system matrix for mean motion `n`.
Mat6 cw_system_matrix(double n);

}  // namespace cmpc
