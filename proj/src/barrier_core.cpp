#include "cmpc/barrier_core.hpp"

namespace cmpc {

void BarrierConfig::validate() const {
    if (!(eps_dr > 0.0 && eps_dv > 0.0 && p_dr0 > 0.0 && p_dr1 > 0.0 && p_dv0 > 0.0)) {
        throw InvalidArgument("barrier: corridor radii and gains must be strictly positive");
    }
}

BarrierValues barrier_values(const TrackingError& err, const BarrierConfig& cfg) {
    BarrierValues b;
    b.h_dr = cfg.eps_dr * cfg.eps_dr - err.e_dr.squaredNorm();
    b.h_dv = cfg.eps_dv * cfg.eps_dv - err.e_dv.squaredNorm();
    b.H_dr1 = -2.0 * err.e_dr.dot(err.e_dv) + cfg.p_dr0 * b.h_dr;
    return b;
}

double zeta_dv(const TrackingError& err, const Vec3& f_v, const Vec3& u, const Vec3& d, const BarrierConfig& cfg) {
    return -2.0 * err.e_dv.dot(f_v + u + d) + cfg.p_dv0 * (cfg.eps_dv * cfg.eps_dv - err.e_dv.squaredNorm());
}

double zeta_dr(const TrackingError& err, const Vec3& f_v, const Vec3& u, const Vec3& d, const BarrierConfig& cfg) {
    return -2.0 * err.e_dv.squaredNorm() - 2.0 * err.e_dr.dot(f_v + d + u) -
           2.0 * (cfg.p_dr0 + cfg.p_dr1) * err.e_dr.dot(err.e_dv) +
           cfg.p_dr0 * cfg.p_dr1 * (cfg.eps_dr * cfg.eps_dr - err.e_dr.squaredNorm());
}

SafeMembership safe_membership(const TrackingError& err, const BarrierConfig& cfg) {
    const BarrierValues b = barrier_values(err, cfg);
    SafeMembership m;
    m.position = b.h_dr >= 0.0 && b.H_dr1 >= 0.0;
    m.velocity = b.h_dv >= 0.0;
    m.state = m.position && m.velocity;
    return m;
}

std::vector<double> linear_cascade(std::span<const double> h_derivatives, std::span<const double> gains) {
    if (h_derivatives.size() != gains.size() + 1) {
        throw InvalidArgument("linear_cascade: need one more derivative than gains");
    }
    // H_i = prod_{j<i} (d/dt + p_j) h, kept as coefficients over h^(k).
    std::vector<double> coeffs{1.0};
    std::vector<double> out;
    out.reserve(h_derivatives.size());
    for (std::size_t i = 0; i <= gains.size(); ++i) {
        double value = 0.0;
        for (std::size_t k = 0; k < coeffs.size(); ++k) {
            value += coeffs[k] * h_derivatives[k];
        }
        out.push_back(value);
        if (i == gains.size()) {
            break;
        }
        std::vector<double> next(coeffs.size() + 1, 0.0);
        for (std::size_t k = 0; k < coeffs.size(); ++k) {
            next[k + 1] += coeffs[k];
            next[k] += gains[i] * coeffs[k];
        }
        coeffs = std::move(next);
    }
    return out;
}

}  // namespace cmpc
