#include <gtest/gtest.h>

#include "cmpc/cmpc_solver.hpp"
#include "test_support.hpp"

#include <random>

using namespace cmpc;

namespace {

Mat6 table_q() {
    Vec6 q;
    q << 50, 50, 50, 59.17, 59.17, 59.17;
    return q.asDiagonal();
}

// Inspector-1 problem at time t0 with tracking error e0.
struct Bench {
    KeplerChief chief = test::iss_chief();
    ProParams pro = test::table2_pro(0);
    EnvelopeInputs env = test::table2_envelope(0);
    MarginSet margins = margin_constants(env);
    Mat6 Q = table_q();
    Mat3 R = 50.0 * Mat3::Identity();
    Mat6 P;

    Bench() {
        const StepJacobian j = linearize_nominal(pro_reference(pro, 0.0), 0.0, env.dt, chief);
        P = terminal_weight_dare(j.A, j.B, Q, R);
    }

    FhocProblem problem(const Vec6& e0, double t0 = 0.0, int N = 25) const {
        FhocProblem p;
        p.N = N;
        p.dt = env.dt;
        p.Q = Q;
        p.R = R;
        p.P = P;
        p.eps_u = env.eps_u;
        p.eps_d = env.eps_d;
        p.margins = margins;
        p.cfg = env.cfg;
        for (int n = 0; n <= N; ++n) {
            p.ref.push_back(pro_reference(pro, t0 + n * env.dt));
        }
        p.kinematics = horizon_kinematics(chief, t0, env.dt, N);
        p.x0 = RelativeState::from(p.ref[0] + e0);
        return p;
    }

    Vec3 f_v0(const FhocProblem& p) const { return drift_acceleration(p.x0.dr, p.x0.dv, p.kinematics[0]); }

    FirstStepConstraints constraints(const FhocProblem& p) const {
        const TrackingError err = TrackingError::between(p.x0.stacked(), p.ref[0]);
        return first_step_constraint_set(err, f_v0(p), p.margins, p.cfg, p.dt, p.eps_d);
    }
};

Vec6 error(const Vec3& r, const Vec3& v) {
    Vec6 e;
    e << r, v;
    return e;
}

}  // namespace

TEST(Dare, ScalarLyapunovLimit) {
    const double a = 0.8;
    const Mat6 P = terminal_weight_dare(a * Mat6::Identity(), Mat63::Zero(), Mat6::Identity(), Mat3::Identity());
    EXPECT_LT((P - Mat6::Identity() / (1 - a * a)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Dare, ZeroStateWeightGivesZero) {
    Mat63 B;
    B.setRandom();
    const Mat6 P = terminal_weight_dare(0.5 * Mat6::Identity(), B, Mat6::Zero(), Mat3::Identity());
    EXPECT_EQ(P.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Dare, DoubleIntegratorMatchesRiccatiRecursion) {
    const double dt = 0.1;
    Mat6 A = Mat6::Identity();
    A.topRightCorner<3, 3>() = dt * Mat3::Identity();
    Mat63 B;
    B << 0.5 * dt * dt * Mat3::Identity(), dt * Mat3::Identity();
    const Mat6 Q = Mat6::Identity();
    const Mat3 R = Mat3::Identity();

    // Joseph-form recursion P = Q + K'RK + (A - BK)'P(A - BK)
    Mat6 S = Mat6::Zero();
    for (int i = 0; i < 100000; ++i) {
        const Eigen::Matrix<double, 3, 6> K = (R + B.transpose() * S * B).inverse() * B.transpose() * S * A;
        const Mat6 Acl = A - B * K;
        const Mat6 next = Q + K.transpose() * R * K + Acl.transpose() * S * Acl;
        const double change = (next - S).cwiseAbs().maxCoeff();
        S = next;
        if (change < 1e-13) {
            break;
        }
    }
    const Mat6 P = terminal_weight_dare(A, B, Q, R);
    EXPECT_LT((P - S).cwiseAbs().maxCoeff(), 1e-8 * S.cwiseAbs().maxCoeff());
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Mat6>(P).eigenvalues().minCoeff(), 0.0);
}

TEST(Dare, UnstabilizableThrows) {
    EXPECT_THROW(terminal_weight_dare(2.0 * Mat6::Identity(), Mat63::Zero(), Mat6::Identity(), Mat3::Identity()),
                 NoConvergence);
}

TEST(StageCost, Examples) {
    EXPECT_EQ(stage_cost(Vec6::Zero(), Vec3::Zero(), table_q(), Mat3::Identity()), 0.0);
    EXPECT_DOUBLE_EQ(stage_cost(Vec6::Unit(0), Vec3::Zero(), Mat6::Identity(), Mat3::Identity()), 1.0);
    const Vec6 e = Vec6::Unit(0) + Vec6::Unit(3);
    EXPECT_NEAR(stage_cost(e, Vec3::Zero(), table_q(), Mat3::Identity()), std::sqrt(109.17), 1e-12);
    EXPECT_NEAR(stage_cost(e, Vec3::Zero(), table_q(), Mat3::Identity()), 10.448, 5e-4);
    EXPECT_NEAR(stage_cost(Vec6::Zero(), Vec3(0, 3, 4), table_q(), Mat3::Identity()), 5.0, 1e-15);
    EXPECT_DOUBLE_EQ(terminal_cost(Vec6::Unit(1), 3.0 * Mat6::Identity()), 6.0);
}

TEST(FirstStep, ZeroErrorIsUnconstrained) {
    const Bench b;
    const FirstStepConstraints c = first_step_constraint_set(TrackingError{}, Vec3(1e-4, 0, 0), b.margins,
                                                             b.env.cfg, b.env.dt, b.env.eps_d);
    EXPECT_EQ(c.a1.norm(), 0.0);
    EXPECT_EQ(c.a2.norm(), 0.0);
    EXPECT_LE(c.b1, 0.0);
    EXPECT_LE(c.b2, 0.0);
}

TEST(FirstStep, VelocityOffsetExample) {
    MarginSet m;
    m.L_dv = 1.315e-3;
    m.c_dv = 2.702e-1;
    const BarrierConfig cfg = test::table2_barrier();
    const TrackingError e{Vec3::Zero(), Vec3(0.1, 0, 0)};
    const FirstStepConstraints c = first_step_constraint_set(e, Vec3::Zero(), m, cfg, 0.1, 1.577e-6);
    EXPECT_EQ(c.a1, Vec3(-0.2, 0, 0));
    EXPECT_NEAR(c.b1, -(0.05 * (0.133 * 0.133 - 0.01)) + 1.315e-4 + 2.702e-1 * 1.577e-6, 1e-17);
    EXPECT_NEAR(c.b1, -2.5245e-4, 1e-7);
}

TEST(FirstStep, AgreesWithDirectZetaEvaluation) {
    const Bench b;
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const TrackingError e{3.0 * Vec3(g(rng), g(rng), g(rng)), 0.05 * Vec3(g(rng), g(rng), g(rng))};
        const Vec3 f = 5e-4 * Vec3(g(rng), g(rng), g(rng));
        const Vec3 u = 0.01 * Vec3(g(rng), g(rng), g(rng));
        const FirstStepConstraints c =
            first_step_constraint_set(e, f, b.margins, b.env.cfg, b.env.dt, b.env.eps_d);
        const double z1 = zeta_dv(e, f, u, Vec3::Zero(), b.env.cfg) - b.margins.L_dv * b.env.dt -
                          b.margins.c_dv * b.env.eps_d;
        const double z2 = zeta_dr(e, f, u, Vec3::Zero(), b.env.cfg) - b.margins.L_dr * b.env.dt -
                          b.margins.c_dr * b.env.eps_d;
        EXPECT_NEAR(c.slack1(u), z1, 1e-12);
        EXPECT_NEAR(c.slack2(u), z2, 1e-12);
    }
}

TEST(FirstStep, InteriorPointIsStrictlyInside) {
    FirstStepConstraints c;
    c.a1 = Vec3(1, 0, 0);
    c.b1 = 0.015;
    c.a2 = Vec3(0, 1, 0);
    c.b2 = 0.01;
    const auto u = first_step_interior_point(c, 0.02);
    ASSERT_TRUE(u);
    EXPECT_GT(c.slack1(*u), 0.0);
    EXPECT_GT(c.slack2(*u), 0.0);
    EXPECT_LT(u->norm(), 0.02);

    c.b2 = 0.014;  // 0.015^2 + 0.014^2 > 0.02^2
    EXPECT_FALSE(first_step_interior_point(c, 0.02));
}

TEST(Solver, ZeroErrorStaysNearReference) {
    const Bench b;
    const FhocSolution s = solve_fhoc(b.problem(Vec6::Zero()));
    EXPECT_EQ(s.status, FhocStatus::Optimal);
    EXPECT_LE(s.u_star.front().norm(), 1e-4);
    EXPECT_LE(s.cost, 1e-6);
}

TEST(Solver, SingleStepMatchesLeastSquaresOracle) {
    Bench b;
    b.Q = Mat6::Identity();
    b.R = Mat3::Identity();
    b.P = Mat6::Identity();
    FhocProblem p = b.problem(error(Vec3(0.3, -0.2, 0.1), Vec3(0.004, 0.002, -0.003)), 120.0, 1);
    p.options.squared_stage_cost = true;
    const FhocSolution s = solve_fhoc(p);
    ASSERT_EQ(s.status, FhocStatus::Optimal);
    EXPECT_FALSE(s.velocity_constraint_active || s.position_constraint_active || s.input_bound_active);

    // minimize u'Ru + 2 e1'P e1 with e1 linearized at the current guess
    const KeplerChief& chief = b.chief;
    Vec3 u = Vec3::Zero();
    for (int it = 0; it < 4; ++it) {
        StepJacobian j;
        const Vec6 x1 = rk4_step_sensitivity(p.x0.stacked(), u, p.dt, chief.kinematics(120.0),
                                             chief.kinematics(120.05), chief.kinematics(120.1), j);
        const Vec6 e1 = x1 - p.ref[1];
        const Mat3 H = p.R + 2.0 * j.B.transpose() * p.P * j.B;
        const Vec3 grad = p.R * u + 2.0 * j.B.transpose() * p.P * e1;
        u -= H.ldlt().solve(grad);
    }
    EXPECT_LT((s.u_star.front() - u).norm(), 1e-8);
}

TEST(Solver, PositionConstraintBindsNearBoundary) {
    Bench b;
    b.R = 1e6 * Mat3::Identity();  // input expensive: push only as hard as the barrier demands
    b.Q = 1e-3 * Mat6::Identity();
    b.P = b.Q;
    const double r = 0.99 * 7.0;
    // fast tangential drift near the wall: coasting violates the position condition
    const Vec6 e0 = error(Vec3(r, 0, 0), Vec3(0, 0.12, 0));
    const FhocProblem p = b.problem(e0);
    ASSERT_TRUE(safe_membership({e0.head<3>(), e0.tail<3>()}, p.cfg).state);
    ASSERT_LT(b.constraints(p).slack2(Vec3::Zero()), 0.0);

    const FhocSolution s = solve_fhoc(p);
    ASSERT_EQ(s.status, FhocStatus::Optimal);
    EXPECT_TRUE(s.position_constraint_active);
    const FirstStepConstraints c = b.constraints(p);
    const double margin = c.slack2(s.u_star.front());
    EXPECT_GE(margin, 0.0);
    EXPECT_LE(margin, 1e-6);

    // no sampled feasible first input does better with the tail fixed
    std::mt19937_64 rng(23);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> un(0.0, 1.0);
    std::vector<Vec3> U = s.u_star;
    int feasible = 0;
    for (int i = 0; i < 4000; ++i) {
        U[0] = Vec3(g(rng), g(rng), g(rng)).normalized() * p.eps_u * std::cbrt(un(rng));
        if (c.slack1(U[0]) < 0.0 || c.slack2(U[0]) < 0.0) {
            continue;
        }
        ++feasible;
        EXPECT_GE(fhoc_cost(p, U), s.cost - 1e-9 * s.cost);
    }
    EXPECT_GT(feasible, 100);
}

TEST(Solver, InfeasibleStartIsReported) {
    const Bench b;
    const FhocSolution s = solve_fhoc(b.problem(error(Vec3(7.5, 0, 0), Vec3::Zero())));
    EXPECT_EQ(s.status, FhocStatus::Infeasible);
    EXPECT_EQ(s.reason, "infeasible-start");
}

TEST(Solver, EmptyFirstStepSetIsReported) {
    const Bench b;
    FhocProblem p = b.problem(Vec6::Zero());
    p.margins.L_dv = 10.0;
    const FhocSolution s = solve_fhoc(p);
    EXPECT_EQ(s.status, FhocStatus::Infeasible);
    EXPECT_EQ(s.reason, "empty-first-step-set");
}

TEST(Solver, RejectsMalformedProblems) {
    const Bench b;
    FhocProblem p = b.problem(Vec6::Zero());
    p.ref.pop_back();
    EXPECT_THROW(solve_fhoc(p), InvalidArgument);
    p = b.problem(Vec6::Zero());
    p.R(0, 0) = -1.0;
    EXPECT_THROW(solve_fhoc(p), InvalidArgument);
    p = b.problem(Vec6::Zero());
    p.warm_start.resize(3);
    EXPECT_THROW(solve_fhoc(p), InvalidArgument);
}

TEST(Solver, WarmRestartConvergesImmediately) {
    const Bench b;
    FhocProblem p = b.problem(error(Vec3(2.0, -1.0, 0.5), Vec3(0.01, 0.02, -0.01)), 300.0);
    const FhocSolution s = solve_fhoc(p);
    ASSERT_EQ(s.status, FhocStatus::Optimal);
    p.warm_start = s.u_star;
    const FhocSolution w = solve_fhoc(p);
    EXPECT_EQ(w.status, FhocStatus::Optimal);
    EXPECT_LE(w.iterations, 2);
    EXPECT_LE(w.cost, s.cost + 1e-9 * s.cost);
}

TEST(Solver, OptimalSolutionsSatisfyContract) {
    const Bench b;
    std::mt19937_64 rng(29);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> un(0.0, 1.0);
    int optimal = 0;
    for (int i = 0; i < 30; ++i) {
        Vec6 e0;
        TrackingError err;
        do {
            err = {Vec3(g(rng), g(rng), g(rng)).normalized() * 7.0 * std::cbrt(un(rng)),
                   Vec3(g(rng), g(rng), g(rng)).normalized() * 0.133 * std::cbrt(un(rng))};
        } while (!safe_membership(err, b.env.cfg).state);
        e0 << err.e_dr, err.e_dv;
        const double t0 = un(rng) * 5000.0;
        const FhocProblem p = b.problem(e0, t0);
        const FhocSolution s = solve_fhoc(p);
        if (s.status != FhocStatus::Optimal) {
            continue;
        }
        ++optimal;
        EXPECT_LE(s.kkt_residual, 1e-6);
        for (const Vec3& u : s.u_star) {
            EXPECT_LE(u.norm(), p.eps_u + 1e-9);
        }
        const FirstStepConstraints c = b.constraints(p);
        EXPECT_GE(c.slack1(s.u_star.front()), -1e-8 * (1 + c.a1.norm() * p.eps_u));
        EXPECT_GE(c.slack2(s.u_star.front()), -1e-8 * (1 + c.a2.norm() * p.eps_u));
        ASSERT_EQ(s.x_star.size(), static_cast<std::size_t>(p.N + 1));
        for (int m = 0; m < p.N; ++m) {
            const Vec6 next = rk4_step(s.x_star[m], t0 + m * p.dt, s.u_star[m], p.dt, b.chief);
            EXPECT_LT((next - s.x_star[m + 1]).norm(), 1e-10 * (1 + next.norm()));
        }
        std::vector<Vec3> zero(p.N, Vec3::Zero());
        EXPECT_LE(s.cost, fhoc_cost(p, zero) + 1e-12);
    }
    EXPECT_GE(optimal, 27);
}

TEST(Controller, WarmStartsFromShiftedSolution) {
    const Bench b;
    CmpcController ctl;
    const Vec6 e0 = error(Vec3(1.0, 0.5, 0.0), Vec3(0.0, 0.01, 0.0));
    FhocProblem p = b.problem(e0, 0.0);
    const FhocSolution s0 = ctl.solve(p);
    ASSERT_EQ(s0.status, FhocStatus::Optimal);
    Vec6 x1 = rk4_step(p.x0.stacked(), 0.0, s0.u_star.front(), p.dt, b.chief);
    FhocProblem q = b.problem(x1 - pro_reference(b.pro, p.dt), p.dt);
    const FhocSolution s1 = ctl.solve(q);
    EXPECT_EQ(s1.status, FhocStatus::Optimal);
    EXPECT_LE(s1.iterations, s0.iterations);
}
