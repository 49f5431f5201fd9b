#include <gtest/gtest.h>

#include "cmpc/disturbance_models.hpp"
#include "test_support.hpp"

using namespace cmpc;

namespace {

DisturbanceConfig j2_only() {
    DisturbanceConfig c;
    c.zonal = {1.08262668e-3, 0, 0, 0, 0};
    return c;
}

// Explicit Legendre polynomials and derivatives, n = 2..6.
double legendre(int n, double s) {
    const double s2 = s * s;
    switch (n) {
        case 2: return 0.5 * (3 * s2 - 1);
        case 3: return 0.5 * (5 * s2 * s - 3 * s);
        case 4: return (35 * s2 * s2 - 30 * s2 + 3) / 8;
        case 5: return (63 * s2 * s2 * s - 70 * s2 * s + 15 * s) / 8;
        default: return (231 * s2 * s2 * s2 - 315 * s2 * s2 + 105 * s2 - 5) / 16;
    }
}

double legendre_prime(int n, double s) {
    const double s2 = s * s;
    switch (n) {
        case 2: return 3 * s;
        case 3: return 0.5 * (15 * s2 - 3);
        case 4: return (140 * s2 * s - 60 * s) / 8;
        case 5: return (315 * s2 * s2 - 210 * s2 + 15) / 8;
        default: return (1386 * s2 * s2 * s - 1260 * s2 * s + 210 * s) / 16;
    }
}

// Gradient of U_n = -mu J_n R^n P_n(z/r) / r^(n+1), term by term.
Vec3 zonal_oracle(const Vec3& r, const DisturbanceConfig& c) {
    const double rn = r.norm();
    const Vec3 rh = r / rn;
    const double s = rh.z();
    const Vec3 ds = (Vec3::UnitZ() - s * rh) / rn;
    Vec3 a = Vec3::Zero();
    for (int n = 2; n <= 6; ++n) {
        const double k = -kEarthMu * c.zonal[n - 2] * std::pow(c.earth_radius, n);
        const Vec3 grad = -(n + 1) * std::pow(rn, -(n + 2)) * legendre(n, s) * rh +
                          std::pow(rn, -(n + 1)) * legendre_prime(n, s) * ds;
        a += k * grad;
    }
    return a;
}

}  // namespace

TEST(Zonal, J2EquatorClosedForm) {
    const DisturbanceConfig c = j2_only();
    const double r = c.earth_radius + 420e3;
    const Vec3 a = zonal_accel(Vec3(r, 0, 0), c);
    const double mag = 1.5 * c.zonal[0] * kEarthMu * c.earth_radius * c.earth_radius / std::pow(r, 4);
    EXPECT_NEAR(a.x(), -mag, 1e-14 * mag);
    EXPECT_NEAR(a.y(), 0.0, 1e-20);
    EXPECT_NEAR(a.z(), 0.0, 1e-20);
}

TEST(Zonal, J2PoleIsOppositeAndTwice) {
    const DisturbanceConfig c = j2_only();
    const double r = c.earth_radius + 420e3;
    const Vec3 eq = zonal_accel(Vec3(0, r, 0), c);
    const Vec3 pole = zonal_accel(Vec3(0, 0, r), c);
    EXPECT_LT(eq.y(), 0.0);
    EXPECT_GT(pole.z(), 0.0);
    EXPECT_NEAR(pole.z(), -2.0 * eq.y(), 1e-14 * pole.z());
}

TEST(Zonal, MatchesTermByTermOracle) {
    const DisturbanceConfig c;
    const OrbitalElements el = test::iss_elements();
    const KeplerChief chief(ChiefState::from_elements(el));
    for (double t : {0.0, 700.0, 1500.0, 2900.0, 4100.0}) {
        const Vec3 r = chief.state(t).r_sv;
        const Vec3 a = zonal_accel(r, c);
        const Vec3 o = zonal_oracle(r, c);
        EXPECT_LT((a - o).norm(), 1e-12 * o.norm()) << t;
    }
}

TEST(Zonal, BelowSurfaceThrows) {
    const DisturbanceConfig c;
    EXPECT_THROW(zonal_accel(Vec3(0, 0, c.earth_radius), c), BelowSurface);
}

TEST(Drag, ZeroRelativeVelocity) {
    const DisturbanceConfig c;
    const Vec3 r(c.earth_radius + 420e3, 0, 0);
    const Vec3 v = Vec3(0, 0, c.earth_rotation).cross(r);
    EXPECT_EQ(drag_accel(r, v, 0.01, c).norm(), 0.0);
}

TEST(Drag, LinearInBallisticCoefficient) {
    const DisturbanceConfig c;
    const Vec3 r(c.earth_radius + 420e3, 1000, -500);
    const Vec3 v(10, 7660, 20);
    const Vec3 a1 = drag_accel(r, v, 0.01, c);
    const Vec3 a2 = drag_accel(r, v, 0.02, c);
    EXPECT_LT((a2 - 2.0 * a1).norm(), 1e-15 * a2.norm());
}

TEST(Drag, HandEvaluated) {
    const DisturbanceConfig c;
    const double h = 420e3;
    const Vec3 r(c.earth_radius + h, 0, 0);
    const Vec3 v(0, 7660, 0);
    const double vrel = 7660 - c.earth_rotation * (c.earth_radius + h);
    const double rho = c.rho_ref * std::exp(-(h - c.h_ref) / c.scale_height);
    const double expected = -0.5 * rho * 0.0132 * vrel * vrel;
    const Vec3 a = drag_accel(r, v, 0.0132, c);
    EXPECT_NEAR(a.y(), expected, 1e-12 * std::abs(expected));
    EXPECT_EQ(a.x(), 0.0);
    EXPECT_EQ(a.z(), 0.0);
}

TEST(Differential, IdenticalStatesCancel) {
    DisturbanceConfig c;
    c.ballistic_inspector = c.ballistic_chief;
    const ChiefState chief = test::iss_chief().state(100.0);
    EXPECT_EQ(differential_disturbance(chief, RelativeState{}, c).norm(), 0.0);
}

TEST(Differential, ZeroMode) {
    DisturbanceConfig c;
    c.mode = DisturbanceMode::Zero;
    const ChiefState chief = test::iss_chief().state(0.0);
    EXPECT_EQ(differential_disturbance(chief, {Vec3(50, 0, 0), Vec3(0, -0.1, 0)}, c).norm(), 0.0);
    DisturbanceGenerator gen(c, 1);
    gen.next_substep();
    EXPECT_EQ(gen(chief, {Vec3(50, 0, 0), Vec3::Zero()}).norm(), 0.0);
}

TEST(Differential, AntisymmetricUnderRoleSwap) {
    const DisturbanceConfig c;
    const ChiefState chief = test::iss_chief().state(300.0);
    Vec3 r, v;
    inspector_inertial(chief, {Vec3(60, -40, 80), Vec3(0.05, -0.1, 0.02)}, r, v);
    const double b = 0.01;
    const Vec3 d1 = inertial_differential(r, v, b, chief.r_sv, chief.v_sv, b, c);
    const Vec3 d2 = inertial_differential(chief.r_sv, chief.v_sv, b, r, v, b, c);
    EXPECT_EQ(d1, -d2);
    EXPECT_GT(d1.norm(), 0.0);
}

TEST(Differential, InspectorOneMagnitudeMatchesTableScale) {
    const DisturbanceConfig c;
    const KeplerChief chief = test::iss_chief();
    const ProParams pro = test::table2_pro(0);
    double worst = 0.0;
    for (int i = 0; i < 2000; ++i) {
        const double t = pro.period() * i / 2000.0;
        const Vec3 d = differential_disturbance(chief.state(t), RelativeState::from(pro_reference(pro, t)), c);
        worst = std::max(worst, d.norm());
    }
    EXPECT_GE(worst, 0.3 * 1.577e-6);
    EXPECT_LE(worst, 3.0 * 1.577e-6);
}

TEST(Differential, SmoothAlongTrajectory) {
    const DisturbanceConfig c;
    const KeplerChief chief = test::iss_chief();
    const ProParams pro = test::table2_pro(1);
    auto d = [&](double t) {
        return differential_disturbance(chief.state(t), RelativeState::from(pro_reference(pro, t)), c);
    };
    for (double t : {10.0, 1234.0, 4000.0}) {
        const Vec3 r1 = (d(t + 1.0) - d(t - 1.0)) / 2.0;
        const Vec3 r2 = (d(t + 0.5) - d(t - 0.5)) / 1.0;
        EXPECT_LT(r1.norm(), 1e-7);
        EXPECT_LT((r1 - r2).norm(), 1e-3 * r1.norm() + 1e-16);
    }
}

TEST(BoundedRandom, StaysInBallAndIsSeeded) {
    DisturbanceConfig c;
    c.mode = DisturbanceMode::BoundedRandom;
    c.random_bound = 2e-6;
    DisturbanceGenerator a(c, 99), b(c, 99);
    const ChiefState chief = test::iss_chief().state(0.0);
    for (int i = 0; i < 10000; ++i) {
        a.next_substep();
        b.next_substep();
        const Vec3 da = a(chief, RelativeState{});
        ASSERT_LE(da.norm(), c.random_bound);
        ASSERT_EQ(da, b(chief, RelativeState{}));
    }
    // held between draws
    EXPECT_EQ(a(chief, RelativeState{}), a(chief, {Vec3(1, 2, 3), Vec3::Zero()}));
    EXPECT_THROW(differential_disturbance(chief, RelativeState{}, c), InvalidArgument);
}

TEST(EstimateEpsD, Modes) {
    const KeplerChief chief = test::iss_chief();
    const ProParams pro = test::table2_pro(0);
    DisturbanceConfig c;
    c.mode = DisturbanceMode::Zero;
    EXPECT_EQ(estimate_eps_d(chief, pro, 7.0, 0.133, c, 100, 1).eps_d, 0.0);

    c.mode = DisturbanceMode::BoundedRandom;
    c.random_bound = 1e-6;
    const EpsDEstimate r = estimate_eps_d(chief, pro, 7.0, 0.133, c, 2000, 1);
    EXPECT_LE(r.eps_d, 1.2e-6);
    EXPECT_GE(r.eps_d, 1.2e-6 * 0.98);

    c.mode = DisturbanceMode::Analytic;
    const EpsDEstimate a = estimate_eps_d(chief, pro, 7.0, 0.133, c, 500, 1);
    EXPECT_GT(a.eps_d, 0.0);
    EXPECT_TRUE(std::isfinite(a.eps_d));
    EXPECT_EQ(a.samples, 500);
    EXPECT_DOUBLE_EQ(a.eps_d, 1.2 * a.sampled_max);
    EXPECT_THROW(estimate_eps_d(chief, pro, 7.0, 0.133, c, 0, 1), InvalidArgument);
}

TEST(DisturbanceConfig, Validation) {
    DisturbanceConfig c;
    EXPECT_NO_THROW(c.validate());
    c.zonal[0] = 0.02;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = DisturbanceConfig{};
    c.scale_height = 0.0;
    EXPECT_THROW(c.validate(), InvalidArgument);
    EXPECT_EQ(disturbance_mode_from_string("bounded_random"), DisturbanceMode::BoundedRandom);
    EXPECT_THROW(disturbance_mode_from_string("gusty"), InvalidArgument);
}
