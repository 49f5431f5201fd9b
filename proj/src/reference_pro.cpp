#include "cmpc/reference_pro.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace cmpc {

void ProParams::validate() const {
    if (!(rho_r >= 0.0 && rho_s >= 0.0 && rho_w >= 0.0)) {
        throw InvalidArgument("pro: amplitudes must be non-negative");
    }
    if (!(omega > 0.0) || !std::isfinite(omega)) {
        throw InvalidArgument("pro: omega must be positive");
    }
    const double two_pi = 2.0 * M_PI;
    if (!(alpha_r >= 0.0 && alpha_r < two_pi && alpha_w >= 0.0 && alpha_w < two_pi)) {
        throw InvalidArgument("pro: phases must lie in [0, 2pi)");
    }
}

double ProParams::period() const { return 2.0 * M_PI / omega; }

ProSample pro_state(const ProParams& p, double t) {
    const double w = p.omega;
    const double th_r = w * t + p.alpha_r;
    const double th_w = w * t + p.alpha_w;
    const double sr = std::sin(th_r), cr = std::cos(th_r);
    const double sw = std::sin(th_w), cw = std::cos(th_w);
    ProSample s;
    s.dr = Vec3(p.rho_r * sr, p.rho_s + 2.0 * p.rho_r * cr, p.rho_w * sw);
    s.dv = Vec3(w * p.rho_r * cr, -2.0 * w * p.rho_r * sr, w * p.rho_w * cw);
    s.da = Vec3(-w * w * p.rho_r * sr, -2.0 * w * w * p.rho_r * cr, -w * w * p.rho_w * sw);
    return s;
}

Vec6 pro_reference(const ProParams& p, double t) {
    const ProSample s = pro_state(p, t);
    Vec6 x;
    x << s.dr, s.dv;
    return x;
}

namespace {

double golden_max(const std::function<double(double)>& f, double lo, double hi) {
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    for (int i = 0; i < 200 && (b - a) > 1e-12 * std::max(1.0, std::abs(b)); ++i) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    return std::max({fc, fd, f(0.5 * (a + b))});
}

double periodic_max(const std::function<double(double)>& f, double period, int samples) {
    const double h = period / samples;
    int best = 0;
    double best_val = -1.0;
    for (int i = 0; i < samples; ++i) {
        const double v = f(i * h);
        if (v > best_val) {
            best_val = v;
            best = i;
        }
    }
    return std::max(best_val, golden_max(f, (best - 1) * h, (best + 1) * h));
}

}  // namespace

ProBounds pro_bounds(const ProParams& p, int samples) {
    p.validate();
    samples = std::max(samples, 10000);
    const double T = p.period();
    ProBounds b;
    b.r_bar = periodic_max([&](double t) { return pro_state(p, t).dr.norm(); }, T, samples);
    b.v_bar = periodic_max([&](double t) { return pro_state(p, t).dv.norm(); }, T, samples);
    b.a_bar_r = periodic_max([&](double t) { return pro_state(p, t).da.norm(); }, T, samples);
    return b;
}

}  // namespace cmpc
