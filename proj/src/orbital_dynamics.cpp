#include "cmpc/orbital_dynamics.hpp"

#include <cmath>
#include <sstream>

namespace cmpc {

ChiefState ChiefState::from_rv(const Vec3& r, const Vec3& v, double mu) {
    ChiefState c;
    c.r_sv = r;
    c.v_sv = v;
    c.mu = mu;
    const double rn = r.norm();
    if (rn <= 0.0 || !(mu > 0.0)) {
        throw InvalidArgument("chief: position must be non-zero and mu positive");
    }
    const double energy = 0.5 * v.squaredNorm() - mu / rn;
    c.semi_major_axis = -mu / (2.0 * energy);
    const Vec3 e_vec = ((v.squaredNorm() - mu / rn) * r - r.dot(v) * v) / mu;
    c.eccentricity = e_vec.norm();
    return c;
}

ChiefState ChiefState::from_elements(const OrbitalElements& el, double mu) {
    const double p = el.semi_major_axis * (1.0 - el.eccentricity * el.eccentricity);
    const double nu = el.true_anomaly;
    const double r = p / (1.0 + el.eccentricity * std::cos(nu));
    const Vec3 r_pf(r * std::cos(nu), r * std::sin(nu), 0.0);
    const double vf = std::sqrt(mu / p);
    const Vec3 v_pf(-vf * std::sin(nu), vf * (el.eccentricity + std::cos(nu)), 0.0);

    const Mat3 rot = (Eigen::AngleAxisd(el.raan, Vec3::UnitZ()) *
                      Eigen::AngleAxisd(el.inclination, Vec3::UnitX()) *
                      Eigen::AngleAxisd(el.arg_perigee, Vec3::UnitZ()))
                         .toRotationMatrix();
    ChiefState c;
    c.r_sv = rot * r_pf;
    c.v_sv = rot * v_pf;
    c.mu = mu;
    c.semi_major_axis = el.semi_major_axis;
    c.eccentricity = el.eccentricity;
    return c;
}

double ChiefState::mean_motion() const {
    return std::sqrt(mu / (semi_major_axis * semi_major_axis * semi_major_axis));
}

double ChiefState::period() const { return 2.0 * M_PI / mean_motion(); }

void ChiefState::validate() const {
    if (!(r_sv.norm() > 0.0)) {
        throw InvalidArgument("chief: |r_sv| must be positive");
    }
    if (!(mu > 0.0)) {
        throw InvalidArgument("chief: mu must be positive");
    }
    if (!(eccentricity >= 0.0 && eccentricity < kMaxChiefEccentricity)) {
        std::ostringstream os;
        os << "chief: eccentricity " << eccentricity << " outside [0, " << kMaxChiefEccentricity << ")";
        throw InvalidArgument(os.str());
    }
    const double n = mean_motion();
    if (!(std::isfinite(n) && n > 0.0)) {
        throw InvalidArgument("chief: mean motion must be positive and finite");
    }
}

Mat3 HillFrame::to_hill() const {
    Mat3 m;
    m.row(0) = r_hat.transpose();
    m.row(1) = s_hat.transpose();
    m.row(2) = w_hat.transpose();
    return m;
}

HillFrame hill_frame(const ChiefState& chief) {
    const Vec3& r = chief.r_sv;
    const Vec3& v = chief.v_sv;
    const Vec3 h = r.cross(v);
    const double rn = r.norm();
    const double hn = h.norm();
    if (!(rn > 0.0) || !(v.norm() > 0.0) || !(hn > 1e-12 * rn * v.norm())) {
        throw DegenerateOrbit("hill_frame: position and velocity must be non-zero and not parallel");
    }
    HillFrame f;
    f.r_hat = r / rn;
    f.w_hat = h / hn;
    f.s_hat = f.w_hat.cross(f.r_hat);
    f.omega_hj = h / (rn * rn);
    return f;
}

ChiefKinematics chief_kinematics(const ChiefState& chief) {
    const double rn = chief.r_sv.norm();
    const double h = chief.r_sv.cross(chief.v_sv).norm();
    const double r_dot = chief.r_sv.dot(chief.v_sv) / rn;
    ChiefKinematics k;
    k.mu = chief.mu;
    k.radius = rn;
    k.rate = h / (rn * rn);
    k.rate_dot = -2.0 * r_dot * k.rate / rn;
    return k;
}

namespace {

// Gravity difference between inspector and chief, written so that the
// large mu/R^2 terms cancel analytically rather than numerically.
Vec3 gravity_difference(const Vec3& dr, const ChiefKinematics& k, double& r_insp) {
    const double R = k.radius;
    const double q = (2.0 * R * dr.x() + dr.squaredNorm()) / (R * R);  // r^2/R^2 - 1
    r_insp = R * std::sqrt(1.0 + q);
    if (!(r_insp >= kMinInspectorRadius)) {
        std::ostringstream os;
        os << "inspector radius " << r_insp << " m below " << kMinInspectorRadius << " m";
        throw SingularRadius(os.str());
    }
    const double inv_cube = std::exp(-1.5 * std::log1p(q));  // (R/r)^3
    const double g0 = k.mu / (R * R);
    return {g0 * (-std::expm1(-1.5 * std::log1p(q)) - (dr.x() / R) * inv_cube),
            -g0 * (dr.y() / R) * inv_cube, -g0 * (dr.z() / R) * inv_cube};
}

}  // namespace

Vec3 drift_acceleration(const Vec3& dr, const Vec3& dv, const ChiefKinematics& k) {
    double r_insp = 0.0;
    Vec3 a = gravity_difference(dr, k, r_insp);
    const double w = k.rate;
    const double wd = k.rate_dot;
    a.x() += 2.0 * w * dv.y() + wd * dr.y() + w * w * dr.x();
    a.y() += -2.0 * w * dv.x() - wd * dr.x() + w * w * dr.y();
    return a;
}

Eigen::Matrix<double, 3, 6> drift_jacobian(const Vec3& dr, const Vec3& dv, const ChiefKinematics& k) {
    (void)dv;
    const Vec3 rho(k.radius + dr.x(), dr.y(), dr.z());
    const double r = rho.norm();
    if (!(r >= kMinInspectorRadius)) {
        throw SingularRadius("drift_jacobian: inspector radius below 1 m");
    }
    const double r3 = r * r * r;
    Eigen::Matrix<double, 3, 6> J = Eigen::Matrix<double, 3, 6>::Zero();
    J.leftCols<3>() = -k.mu * (Mat3::Identity() / r3 - 3.0 * rho * rho.transpose() / (r3 * r * r));
    const double w = k.rate;
    const double wd = k.rate_dot;
    J(0, 0) += w * w;
    J(0, 1) += wd;
    J(1, 0) += -wd;
    J(1, 1) += w * w;
    J(0, 4) = 2.0 * w;
    J(1, 3) = -2.0 * w;
    return J;
}

Vec6 relative_dynamics(const Vec6& x, const ChiefKinematics& k, const Vec3& u, const Vec3& d) {
    Vec6 xd;
    xd.head<3>() = x.tail<3>();
    xd.tail<3>() = drift_acceleration(x.head<3>(), x.tail<3>(), k) + u + d;
    return xd;
}

Vec6 relative_dynamics(const RelativeState& x, const ChiefState& chief, const Vec3& u, const Vec3& d) {
    if (!(chief.r_sv.norm() > 0.0)) {
        throw InvalidArgument("relative_dynamics: chief radius must be positive");
    }
    return relative_dynamics(x.stacked(), chief_kinematics(chief), u, d);
}

ChiefState chief_propagate(const ChiefState& chief, double t) {
    const double mu = chief.mu;
    const Vec3& r0v = chief.r_sv;
    const Vec3& v0v = chief.v_sv;
    const double r0 = r0v.norm();
    const double inv_a = 2.0 / r0 - v0v.squaredNorm() / mu;
    if (!(inv_a > 0.0) || !(r0 > 0.0)) {
        throw DegenerateOrbit("chief_propagate: orbit is not elliptic");
    }
    const double a = 1.0 / inv_a;
    const double sqrt_a = std::sqrt(a);
    const double sigma0 = r0v.dot(v0v) / std::sqrt(mu);
    const double n = std::sqrt(mu * inv_a * inv_a * inv_a);
    const double M = n * t;

    // Kepler's equation in eccentric-anomaly-difference form.
    const double c1 = sigma0 / sqrt_a;
    const double c2 = 1.0 - r0 / a;
    double dE = M;
    bool converged = false;
    for (int it = 0; it < 50; ++it) {
        const double s = std::sin(dE);
        const double one_minus_c = 2.0 * std::sin(0.5 * dE) * std::sin(0.5 * dE);
        const double F = dE + c1 * one_minus_c - c2 * s - M;
        const double Fp = 1.0 + c1 * s - c2 * std::cos(dE);
        const double step = F / Fp;
        dE -= step;
        if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(dE))) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        throw KeplerNoConvergence("chief_propagate: eccentric anomaly iteration exceeded 50 steps");
    }

    const double s = std::sin(dE);
    const double omc = 2.0 * std::sin(0.5 * dE) * std::sin(0.5 * dE);
    const double r = a + (r0 - a) * (1.0 - omc) + sigma0 * sqrt_a * s;
    const double F = 1.0 - (a / r0) * omc;
    const double G = a * sigma0 / std::sqrt(mu) * omc + r0 * std::sqrt(a / mu) * s;
    const double Fdot = -std::sqrt(mu * a) / (r * r0) * s;
    const double Gdot = 1.0 - (a / r) * omc;

    ChiefState out = chief;
    out.r_sv = F * r0v + G * v0v;
    out.v_sv = Fdot * r0v + Gdot * v0v;
    return out;
}

KeplerChief::KeplerChief(ChiefState epoch) : epoch_(std::move(epoch)) { epoch_.validate(); }

ChiefKinematics KeplerChief::kinematics(double t) const { return chief_kinematics(state(t)); }

Vec6 rk4_step(const Vec6& x, double t, const Vec3& u, double dt, const KeplerChief& chief) {
    if (!(dt > 0.0)) {
        throw InvalidArgument("rk4_step: dt must be positive");
    }
    const ChiefKinematics k_start = chief.kinematics(t);
    const ChiefKinematics k_mid = chief.kinematics(t + 0.5 * dt);
    const ChiefKinematics k_end = chief.kinematics(t + dt);
    const Vec3 zero = Vec3::Zero();
    const double half = 0.5 * dt;
    const Vec6 k1 = relative_dynamics(x, k_start, u, zero);
    const Vec6 k2 = relative_dynamics(Vec6(x + half * k1), k_mid, u, zero);
    const Vec6 k3 = relative_dynamics(Vec6(x + half * k2), k_mid, u, zero);
    const Vec6 k4 = relative_dynamics(Vec6(x + dt * k3), k_end, u, zero);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

RelativeState rk4_step(const RelativeState& x, double t, const Vec3& u, double dt, const KeplerChief& chief) {
    return RelativeState::from(rk4_step(x.stacked(), t, u, dt, chief));
}

namespace {

Mat6 continuous_jacobian(const Vec6& x, const ChiefKinematics& k) {
    Mat6 A = Mat6::Zero();
    A.block<3, 3>(0, 3) = Mat3::Identity();
    A.bottomRows<3>() = drift_jacobian(x.head<3>(), x.tail<3>(), k);
    return A;
}

}  // namespace

Vec6 rk4_step_sensitivity(const Vec6& x, const Vec3& u, double dt, const ChiefKinematics& k_start,
                          const ChiefKinematics& k_mid, const ChiefKinematics& k_end, StepJacobian& jac) {
    if (!(dt > 0.0)) {
        throw InvalidArgument("rk4_step_sensitivity: dt must be positive");
    }
    const Vec3 zero = Vec3::Zero();
    Mat63 Bc = Mat63::Zero();
    Bc.bottomRows<3>() = Mat3::Identity();
    const double half = 0.5 * dt;

    const Vec6 k1 = relative_dynamics(x, k_start, u, zero);
    const Mat6 K1x = continuous_jacobian(x, k_start);
    const Mat63 K1u = Bc;

    const Vec6 x2 = x + half * k1;
    const Vec6 k2 = relative_dynamics(x2, k_mid, u, zero);
    const Mat6 A2 = continuous_jacobian(x2, k_mid);
    const Mat6 K2x = A2 * (Mat6::Identity() + half * K1x);
    const Mat63 K2u = A2 * (half * K1u) + Bc;

    const Vec6 x3 = x + half * k2;
    const Vec6 k3 = relative_dynamics(x3, k_mid, u, zero);
    const Mat6 A3 = continuous_jacobian(x3, k_mid);
    const Mat6 K3x = A3 * (Mat6::Identity() + half * K2x);
    const Mat63 K3u = A3 * (half * K2u) + Bc;

    const Vec6 x4 = x + dt * k3;
    const Vec6 k4 = relative_dynamics(x4, k_end, u, zero);
    const Mat6 A4 = continuous_jacobian(x4, k_end);
    const Mat6 K4x = A4 * (Mat6::Identity() + dt * K3x);
    const Mat63 K4u = A4 * (dt * K3u) + Bc;

    jac.A = Mat6::Identity() + (dt / 6.0) * (K1x + 2.0 * K2x + 2.0 * K3x + K4x);
    jac.B = (dt / 6.0) * (K1u + 2.0 * K2u + 2.0 * K3u + K4u);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Mat6 cw_system_matrix(double n) {
    Mat6 A = Mat6::Zero();
    A.block<3, 3>(0, 3) = Mat3::Identity();
    A(3, 0) = 3.0 * n * n;
    A(3, 4) = 2.0 * n;
    A(4, 3) = -2.0 * n;
    A(5, 2) = -n * n;
    return A;
}

}  // namespace cmpc
