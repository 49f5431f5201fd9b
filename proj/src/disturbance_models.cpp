#include "cmpc/disturbance_models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cmpc {

const char* to_string(DisturbanceMode m) {
    switch (m) {
        case DisturbanceMode::Analytic:
            return "analytic";
        case DisturbanceMode::BoundedRandom:
            return "bounded_random";
        case DisturbanceMode::Zero:
            return "zero";
    }
    return "unknown";
}

DisturbanceMode disturbance_mode_from_string(const std::string& s) {
    if (s == "analytic") {
        return DisturbanceMode::Analytic;
    }
    if (s == "bounded_random") {
        return DisturbanceMode::BoundedRandom;
    }
    if (s == "zero") {
        return DisturbanceMode::Zero;
    }
    throw InvalidArgument("disturbance: unknown mode '" + s + "' (analytic | bounded_random | zero)");
}

void DisturbanceConfig::validate() const {
    for (double j : zonal) {
        if (!(std::abs(j) < 1e-2)) {
            throw InvalidArgument("disturbance: |J_n| must be below 1e-2");
        }
    }
    if (!(earth_radius > 0.0 && rho_ref > 0.0 && scale_height > 0.0)) {
        throw InvalidArgument("disturbance: earth radius, density and scale height must be positive");
    }
    if (!(ballistic_chief >= 0.0 && ballistic_inspector >= 0.0 && random_bound >= 0.0)) {
        throw InvalidArgument("disturbance: ballistic coefficients and random bound must be non-negative");
    }
    if (!std::isfinite(earth_rotation) || !std::isfinite(h_ref)) {
        throw InvalidArgument("disturbance: non-finite atmosphere parameters");
    }
}

Vec3 zonal_accel(const Vec3& r, const DisturbanceConfig& cfg, double mu) {
    const double rn = r.norm();
    if (!(rn > cfg.earth_radius)) {
        std::ostringstream os;
        os << "zonal_accel: radius " << rn << " m not above the surface";
        throw BelowSurface(os.str());
    }
    const Vec3 rh = r / rn;
    const double s = rh.z();
    const Vec3 tang = Vec3::UnitZ() - s * rh;
    // P_n and P_n' by the Bonnet recursion.
    double p_prev = 1.0, p = s;
    double dp_prev = 0.0, dp = 1.0;
    const double ratio = cfg.earth_radius / rn;
    double scale = mu / (rn * rn) * ratio;  // mu R^n / r^(n+2) with n = 1
    Vec3 a = Vec3::Zero();
    for (int n = 1; n <= 6; ++n) {
        if (n >= 2) {
            const double j = cfg.zonal[n - 2];
            a += j * scale * ((n + 1) * p * rh - dp * tang);
        }
        const double p_next = ((2 * n + 1) * s * p - n * p_prev) / (n + 1);
        const double dp_next = dp_prev + (2 * n + 1) * p;
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
        scale *= ratio;
    }
    return a;
}

double atmosphere_density(double altitude, const DisturbanceConfig& cfg) {
    return cfg.rho_ref * std::exp(-(altitude - cfg.h_ref) / cfg.scale_height);
}

Vec3 drag_accel(const Vec3& r, const Vec3& v, double ballistic, const DisturbanceConfig& cfg) {
    const Vec3 v_rel = v - Vec3(0.0, 0.0, cfg.earth_rotation).cross(r);
    const double rho = atmosphere_density(r.norm() - cfg.earth_radius, cfg);
    return -0.5 * rho * ballistic * v_rel.norm() * v_rel;
}

Vec3 inertial_differential(const Vec3& r_insp, const Vec3& v_insp, double b_insp, const Vec3& r_chief,
                           const Vec3& v_chief, double b_chief, const DisturbanceConfig& cfg, double mu) {
    const Vec3 a_i = zonal_accel(r_insp, cfg, mu) + drag_accel(r_insp, v_insp, b_insp, cfg);
    const Vec3 a_c = zonal_accel(r_chief, cfg, mu) + drag_accel(r_chief, v_chief, b_chief, cfg);
    return a_i - a_c;
}

void inspector_inertial(const ChiefState& chief, const RelativeState& x, Vec3& r, Vec3& v) {
    const HillFrame f = hill_frame(chief);
    const Mat3 Ct = f.to_hill().transpose();
    const Vec3 dr_j = Ct * x.dr;
    r = chief.r_sv + dr_j;
    v = chief.v_sv + Ct * x.dv + f.omega_hj.cross(dr_j);
}

Vec3 uniform_in_ball(std::mt19937_64& rng, double radius) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Vec3 dir(normal(rng), normal(rng), normal(rng));
    const double n = dir.norm();
    if (!(n > 0.0)) {
        return Vec3::Zero();
    }
    return (radius * std::cbrt(uni(rng)) / n) * dir;
}

Vec3 differential_disturbance(const ChiefState& chief, const RelativeState& x, const DisturbanceConfig& cfg,
                              std::mt19937_64* rng) {
    switch (cfg.mode) {
        case DisturbanceMode::Zero:
            return Vec3::Zero();
        case DisturbanceMode::BoundedRandom:
            if (!rng) {
                throw InvalidArgument("differential_disturbance: bounded_random mode needs a random stream");
            }
            return uniform_in_ball(*rng, cfg.random_bound);
        case DisturbanceMode::Analytic:
            break;
    }
    Vec3 r_i, v_i;
    inspector_inertial(chief, x, r_i, v_i);
    const Vec3 d = inertial_differential(r_i, v_i, cfg.ballistic_inspector, chief.r_sv, chief.v_sv,
                                         cfg.ballistic_chief, cfg, chief.mu);
    return hill_frame(chief).to_hill() * d;
}

DisturbanceGenerator::DisturbanceGenerator(DisturbanceConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), rng_(seed) {
    cfg_.validate();
}

void DisturbanceGenerator::next_substep() {
    if (cfg_.mode == DisturbanceMode::BoundedRandom) {
        held_ = uniform_in_ball(rng_, cfg_.random_bound);
    }
}

Vec3 DisturbanceGenerator::operator()(const ChiefState& chief, const RelativeState& x) const {
    switch (cfg_.mode) {
        case DisturbanceMode::Zero:
            return Vec3::Zero();
        case DisturbanceMode::BoundedRandom:
            return held_;
        case DisturbanceMode::Analytic:
            break;
    }
    return differential_disturbance(chief, x, cfg_);
}

EpsDEstimate estimate_eps_d(const KeplerChief& chief, const ProParams& pro, double eps_dr, double eps_dv,
                            const DisturbanceConfig& cfg, int samples, std::uint64_t seed) {
    if (samples < 1) {
        throw InvalidArgument("estimate_eps_d: need at least one sample");
    }
    EpsDEstimate est;
    est.samples = samples;
    if (cfg.mode == DisturbanceMode::Zero) {
        return est;
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double T = pro.period();
    for (int i = 0; i < samples; ++i) {
        const double t = uni(rng) * T;
        const Vec6 ref = pro_reference(pro, t);
        RelativeState x = RelativeState::from(ref);
        x.dr += uniform_in_ball(rng, eps_dr);
        x.dv += uniform_in_ball(rng, eps_dv);
        const Vec3 d = differential_disturbance(chief.state(t), x, cfg, &rng);
        est.sampled_max = std::max(est.sampled_max, d.norm());
    }
    est.eps_d = 1.2 * est.sampled_max;
    return est;
}

}  // namespace cmpc
