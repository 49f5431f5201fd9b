#include "cmpc/sd_margins.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace cmpc {

void EnvelopeInputs::validate() const {
    if (!(eps_f >= 0.0 && eps_u >= 0.0 && eps_d >= 0.0 && beta >= 0.0)) {
        throw InvalidArgument("envelope: bounds must be non-negative");
    }
    if (!(dt > 0.0)) {
        throw InvalidArgument("envelope: dt must be positive");
    }
    if (!(pro.r_bar >= 0.0 && pro.v_bar >= 0.0 && pro.a_bar_r >= 0.0)) {
        throw InvalidArgument("envelope: reference bounds must be non-negative");
    }
}

Envelope worst_case_envelope(const EnvelopeInputs& in) {
    Envelope e;
    e.a_bar = in.eps_f + in.eps_u + in.eps_d;
    const double accel = e.a_bar + in.pro.a_bar_r;
    e.eps_bar_dv = in.cfg.eps_dv + accel * in.dt;
    e.eps_bar_dr = in.cfg.eps_dr + accel * in.dt * in.dt / 2.0 + in.cfg.eps_dv * in.dt + in.pro.v_bar * in.dt;
    return e;
}

MarginSet margin_constants(const EnvelopeInputs& in, const Envelope& env) {
    const BarrierConfig& c = in.cfg;
    const double a = env.a_bar;
    const double ev = env.eps_bar_dv;
    const double er = env.eps_bar_dr;
    MarginSet m;
    m.a_bar = a;
    m.eps_bar_dv = ev;
    m.eps_bar_dr = er;
    m.L_dv = 2.0 * c.eps_dv * in.beta + 2.0 * a * a + 2.0 * c.p_dv0 * ev * a;
    m.L_dr = 6.0 * ev * a + 2.0 * (c.p_dr0 + c.p_dr1) * (ev * ev + er * a) + 2.0 * c.eps_dr * in.beta +
             2.0 * c.p_dr0 * c.p_dr1 * er * ev;
    m.c_dv = 2.0 * ev;
    m.c_dr = 2.0 * er;
    return m;
}

MarginSet margin_constants(const EnvelopeInputs& in) { return margin_constants(in, worst_case_envelope(in)); }

MarginSet global_margin_constants(const EnvelopeInputs& in, double workspace_dv_radius, double workspace_dr_radius) {
    Envelope env = worst_case_envelope(in);
    env.eps_bar_dv = workspace_dv_radius;
    env.eps_bar_dr = workspace_dr_radius;
    return margin_constants(in, env);
}

SdCheck sd_condition(double zeta_nominal, double L, double c, double dt, double eps_d) {
    if (!(L >= 0.0 && c >= 0.0 && dt >= 0.0 && eps_d >= 0.0)) {
        throw InvalidArgument("sd_condition: L, c, dt and eps_d must be non-negative");
    }
    SdCheck s;
    s.margin = zeta_nominal - L * dt - c * eps_d;
    s.satisfied = s.margin >= 0.0;
    return s;
}

bool reachable_overapprox_membership(const TrackingError& err, const Envelope& env) {
    const double gamma_dv = env.eps_bar_dv * env.eps_bar_dv - err.e_dv.squaredNorm();
    const double gamma_dr = env.eps_bar_dr * env.eps_bar_dr - err.e_dr.squaredNorm();
    return gamma_dv >= 0.0 && gamma_dr >= 0.0;
}

namespace {

Vec3 sample_in_ball(std::mt19937_64& rng, double radius, bool on_surface) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Vec3 dir(normal(rng), normal(rng), normal(rng));
    dir.normalize();
    const double r = on_surface ? radius : radius * std::cbrt(uni(rng));
    return r * dir;
}

}  // namespace

double estimate_eps_f(const KeplerChief& chief, const Workspace& ws, int samples, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double T = chief.epoch().period();
    double best = 0.0;
    for (int i = 0; i < samples; ++i) {
        const bool surface = (i % 2) == 0;
        const ChiefKinematics k = chief.kinematics(uni(rng) * T);
        const Vec3 dr = sample_in_ball(rng, ws.r_max, surface);
        const Vec3 dv = sample_in_ball(rng, ws.v_max, surface);
        best = std::max(best, drift_acceleration(dr, dv, k).norm());
    }
    return best;
}

double estimate_beta(const KeplerChief& chief, const Workspace& ws, double eps_u, double eps_d,
                     double disturbance_rate_bound, int samples, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double T = chief.epoch().period();
    const double h = 1.0;
    double best = 0.0;
    for (int i = 0; i < samples; ++i) {
        const bool surface = (i % 2) == 0;
        const double t = uni(rng) * T;
        const ChiefKinematics k = chief.kinematics(t);
        const Vec3 dr = sample_in_ball(rng, ws.r_max, surface);
        const Vec3 dv = sample_in_ball(rng, ws.v_max, surface);
        const Vec3 f = drift_acceleration(dr, dv, k);
        const Eigen::Matrix<double, 3, 6> J = drift_jacobian(dr, dv, k);
        const Vec3 f_t = (drift_acceleration(dr, dv, chief.kinematics(t + h)) -
                          drift_acceleration(dr, dv, chief.kinematics(t - h))) /
                         (2.0 * h);
        const Mat3 Jv = J.rightCols<3>();
        const double jv_norm = Jv.jacobiSvd().singularValues()(0);
        const double rate = (J.leftCols<3>() * dv + Jv * f + f_t).norm() + jv_norm * (eps_u + eps_d);
        best = std::max(best, rate);
    }
    return best + disturbance_rate_bound;
}

}  // namespace cmpc
