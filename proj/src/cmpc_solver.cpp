#include "cmpc/cmpc_solver.hpp"

#include "cmpc/feasibility_audit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cmpc {

Mat6 terminal_weight_dare(const Mat6& A, const Mat63& B, const Mat6& Q, const Mat3& R, double tol, int max_iter) {
    Mat6 P = Q;
    for (int it = 0; it < max_iter; ++it) {
        const Mat3 S = R + B.transpose() * P * B;
        const Eigen::Matrix<double, 3, 6> K = S.ldlt().solve(B.transpose() * P * A);
        Mat6 next = A.transpose() * P * A - A.transpose() * P * B * K + Q;
        next = 0.5 * (next + next.transpose()).eval();
        if (!next.allFinite()) {
            throw NoConvergence("dare: iterate diverged (unstabilizable linearization?)");
        }
        const double change = (next - P).cwiseAbs().maxCoeff();
        P = next;
        if (change < tol) {
            return P;
        }
    }
    throw NoConvergence("dare: no convergence within the iteration budget");
}

StepJacobian linearize_nominal(const Vec6& x, double t, double dt, const KeplerChief& chief) {
    StepJacobian jac;
    rk4_step_sensitivity(x, Vec3::Zero(), dt, chief.kinematics(t), chief.kinematics(t + 0.5 * dt),
                         chief.kinematics(t + dt), jac);
    return jac;
}

double stage_cost(const Vec6& e, const Vec3& u, const Mat6& Q, const Mat3& R) {
    return std::sqrt(std::max(0.0, e.dot(Q * e))) + std::sqrt(std::max(0.0, u.dot(R * u)));
}

double terminal_cost(const Vec6& e, const Mat6& P) { return 2.0 * e.dot(P * e); }

FirstStepConstraints first_step_constraint_set(const TrackingError& err, const Vec3& f_v0, const MarginSet& margins,
                                               const BarrierConfig& cfg, double dt, double eps_d) {
    const Vec3 zero = Vec3::Zero();
    FirstStepConstraints c;
    c.a1 = -2.0 * err.e_dv;
    c.b1 = -zeta_dv(err, f_v0, zero, zero, cfg) + margins.L_dv * dt + margins.c_dv * eps_d;
    c.a2 = -2.0 * err.e_dr;
    c.b2 = -zeta_dr(err, f_v0, zero, zero, cfg) + margins.L_dr * dt + margins.c_dr * eps_d;
    return c;
}

std::optional<Vec3> first_step_interior_point(const FirstStepConstraints& c, double eps_u) {
    const AffinePair g{c.a1, -c.b1, c.a2, -c.b2};
    const BallOptimum o = max_min_on_ball(g, eps_u);
    if (!(std::min(o.g1, o.g2) > 0.0)) {
        return std::nullopt;
    }
    // Along u = s * u_c every slack is affine in s; maximize the smallest one.
    const Vec3 uc = o.u;
    const double lines[3][2] = {{-c.b1, c.a1.dot(uc)}, {-c.b2, c.a2.dot(uc)}, {eps_u, -uc.norm()}};
    auto worst = [&](double s) {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& l : lines) {
            m = std::min(m, l[0] + s * l[1]);
        }
        return m;
    };
    std::vector<double> cand{0.0, 1.0};
    for (int i = 0; i < 3; ++i) {
        for (int j = i + 1; j < 3; ++j) {
            const double slope = lines[i][1] - lines[j][1];
            if (std::abs(slope) > 0.0) {
                const double s = (lines[j][0] - lines[i][0]) / slope;
                if (s > 0.0 && s < 1.0) {
                    cand.push_back(s);
                }
            }
        }
    }
    double best_s = 0.0;
    double best = -std::numeric_limits<double>::infinity();
    for (double s : cand) {
        const double w = worst(s);
        if (w > best) {
            best = w;
            best_s = s;
        }
    }
    if (!(best > 0.0)) {
        return std::nullopt;
    }
    return Vec3(best_s * uc);
}

namespace {

bool symmetric(const Eigen::MatrixXd& M) {
    return (M - M.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, M.cwiseAbs().maxCoeff());
}

double min_eigenvalue(const Eigen::MatrixXd& M) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

}  // namespace

void FhocProblem::validate() const {
    if (N < 1) {
        throw InvalidArgument("fhoc: horizon must be >= 1");
    }
    if (!(dt > 0.0) || !(eps_u > 0.0) || !(eps_d >= 0.0)) {
        throw InvalidArgument("fhoc: dt and eps_u must be positive, eps_d non-negative");
    }
    if (!symmetric(Q) || !symmetric(R) || !symmetric(P)) {
        throw InvalidArgument("fhoc: weights must be symmetric");
    }
    const double qs = std::max(1.0, Q.cwiseAbs().maxCoeff());
    if (min_eigenvalue(Q) < -1e-12 * qs) {
        throw InvalidArgument("fhoc: Q must be positive semidefinite");
    }
    if (!(min_eigenvalue(R) > 0.0) || !(min_eigenvalue(P) > 0.0)) {
        throw InvalidArgument("fhoc: R and P must be positive definite");
    }
    if (ref.size() != static_cast<std::size_t>(N + 1)) {
        throw InvalidArgument("fhoc: need N + 1 reference states");
    }
    if (kinematics.size() != static_cast<std::size_t>(2 * N + 1)) {
        throw InvalidArgument("fhoc: need 2N + 1 chief kinematics samples");
    }
    if (!warm_start.empty() && warm_start.size() != static_cast<std::size_t>(N)) {
        throw InvalidArgument("fhoc: warm start must hold N inputs");
    }
    if (options.max_iterations < 1 || !(options.kkt_tolerance > 0.0) || !(options.elastic_penalty > 0.0)) {
        throw InvalidArgument("fhoc: invalid solver options");
    }
    cfg.validate();
}

std::vector<ChiefKinematics> horizon_kinematics(const KeplerChief& chief, double t0, double dt, int N) {
    std::vector<ChiefKinematics> k;
    k.reserve(2 * N + 1);
    for (int m = 0; m <= 2 * N; ++m) {
        k.push_back(chief.kinematics(t0 + 0.5 * dt * m));
    }
    return k;
}

const char* to_string(FhocStatus s) {
    switch (s) {
        case FhocStatus::Optimal:
            return "optimal";
        case FhocStatus::MaxIter:
            return "max-iter";
        case FhocStatus::Infeasible:
            return "infeasible";
    }
    return "unknown";
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kMuFinal = 1e-10;
constexpr double kMuFactor = 12.0;
constexpr double kInf = std::numeric_limits<double>::infinity();

Vec6 nominal_step(const Vec6& x, const Vec3& u, double dt, const ChiefKinematics& k0, const ChiefKinematics& k1,
                  const ChiefKinematics& k2) {
    const Vec3 d = Vec3::Zero();
    const double h = 0.5 * dt;
    const Vec6 a = relative_dynamics(x, k0, u, d);
    const Vec6 b = relative_dynamics(Vec6(x + h * a), k1, u, d);
    const Vec6 c = relative_dynamics(Vec6(x + h * b), k1, u, d);
    const Vec6 e = relative_dynamics(Vec6(x + dt * c), k2, u, d);
    return x + (dt / 6.0) * (a + 2.0 * b + 2.0 * c + e);
}

double qnorm(const Vec6& e, const Mat6& Q) { return std::sqrt(std::max(0.0, e.dot(Q * e))); }
double rnorm(const Vec3& u, const Mat3& R) { return std::sqrt(std::max(0.0, u.dot(R * u))); }

Vec3 block(const VectorXd& v, int n) { return v.segment<3>(3 * n); }

struct StepConstraint {
    double value = 0.0;  // zeta - margins at the linearization point
    VectorXd grad;       // d value / dU
};

// Everything about the true problem that the subproblem needs at one U.
struct Linearization {
    std::vector<Vec6> x, e;
    std::vector<MatrixXd> S;  // dx_n/dU, 6 x 3N; only the first 3n columns are non-zero
    std::vector<MatrixXd> G;  // S_n' Q S_n, 3n x 3n
    MatrixXd HT;              // 4 S_N' P S_N
    std::vector<StepConstraint> steps;
    double cost = 0.0;
};

std::vector<StepConstraint> step_constraints(const FhocProblem& p, const VectorXd& U, const std::vector<Vec6>& x,
                                             const std::vector<MatrixXd>* S) {
    std::vector<StepConstraint> out;
    const int N = p.N;
    const BarrierConfig& c = p.cfg;
    const MarginSet& m = p.margins;
    for (int n = 1; n < N; ++n) {
        const ChiefKinematics& k = p.kinematics[2 * n];
        const Vec3 dr = x[n].head<3>(), dv = x[n].tail<3>();
        const TrackingError err = TrackingError::between(x[n], p.ref[n]);
        const Vec3 u = block(U, n);
        const Vec3 f = drift_acceleration(dr, dv, k);
        const Vec3 zero = Vec3::Zero();
        StepConstraint sv, sr;
        sv.value = zeta_dv(err, f, u, zero, c) - m.L_dv * p.dt - m.c_dv * p.eps_d;
        sr.value = zeta_dr(err, f, u, zero, c) - m.L_dr * p.dt - m.c_dr * p.eps_d;
        if (S) {
            const Eigen::Matrix<double, 3, 6> J = drift_jacobian(dr, dv, k);
            const Mat3 Jr = J.leftCols<3>(), Jv = J.rightCols<3>();
            Vec6 dzv, dzr;
            dzv << -2.0 * Jr.transpose() * err.e_dv,
                -2.0 * (f + u) - 2.0 * Jv.transpose() * err.e_dv - 2.0 * c.p_dv0 * err.e_dv;
            dzr << -2.0 * (f + u) - 2.0 * Jr.transpose() * err.e_dr - 2.0 * (c.p_dr0 + c.p_dr1) * err.e_dv -
                       2.0 * c.p_dr0 * c.p_dr1 * err.e_dr,
                -4.0 * err.e_dv - 2.0 * Jv.transpose() * err.e_dr - 2.0 * (c.p_dr0 + c.p_dr1) * err.e_dr;
            sv.grad = (*S)[n].transpose() * dzv;
            sr.grad = (*S)[n].transpose() * dzr;
            sv.grad.segment<3>(3 * n) += -2.0 * err.e_dv;
            sr.grad.segment<3>(3 * n) += -2.0 * err.e_dr;
        }
        out.push_back(std::move(sv));
        out.push_back(std::move(sr));
    }
    return out;
}

double elastic_penalty(const FhocProblem& p, const std::vector<StepConstraint>& steps) {
    double s = 0.0;
    for (const auto& c : steps) {
        s += std::max(0.0, -c.value);
    }
    return p.options.elastic_penalty * s;
}

double cost_of(const FhocProblem& p, const VectorXd& U, const std::vector<Vec6>& e) {
    const bool sq = p.options.squared_stage_cost;
    double J = 0.0;
    for (int n = 0; n < p.N; ++n) {
        const Vec3 u = block(U, n);
        J += sq ? e[n].dot(p.Q * e[n]) + u.dot(p.R * u) : qnorm(e[n], p.Q) + rnorm(u, p.R);
    }
    return J + terminal_cost(e[p.N], p.P);
}

std::vector<Vec6> rollout(const FhocProblem& p, const VectorXd& U) {
    std::vector<Vec6> x(p.N + 1);
    x[0] = p.x0.stacked();
    for (int n = 0; n < p.N; ++n) {
        x[n + 1] = nominal_step(x[n], block(U, n), p.dt, p.kinematics[2 * n], p.kinematics[2 * n + 1],
                                p.kinematics[2 * n + 2]);
    }
    return x;
}

double true_cost(const FhocProblem& p, const VectorXd& U) {
    const std::vector<Vec6> x = rollout(p, U);
    std::vector<Vec6> e(p.N + 1);
    for (int n = 0; n <= p.N; ++n) {
        e[n] = x[n] - p.ref[n];
    }
    double J = cost_of(p, U, e);
    if (p.options.barrier_all_steps) {
        J += elastic_penalty(p, step_constraints(p, U, x, nullptr));
    }
    return J;
}

Linearization linearize(const FhocProblem& p, const VectorXd& U) {
    const int N = p.N;
    const int nu = 3 * N;
    Linearization lin;
    lin.x.resize(N + 1);
    lin.e.resize(N + 1);
    lin.S.assign(N + 1, MatrixXd::Zero(6, nu));
    lin.x[0] = p.x0.stacked();
    StepJacobian jac;
    for (int n = 0; n < N; ++n) {
        lin.x[n + 1] = rk4_step_sensitivity(lin.x[n], block(U, n), p.dt, p.kinematics[2 * n],
                                            p.kinematics[2 * n + 1], p.kinematics[2 * n + 2], jac);
        if (n > 0) {
            lin.S[n + 1].leftCols(3 * n).noalias() = jac.A * lin.S[n].leftCols(3 * n);
        }
        lin.S[n + 1].middleCols<3>(3 * n) = jac.B;
    }
    for (int n = 0; n <= N; ++n) {
        lin.e[n] = lin.x[n] - p.ref[n];
    }
    lin.G.resize(N);
    for (int n = 1; n < N; ++n) {
        const auto Sn = lin.S[n].leftCols(3 * n);
        lin.G[n] = Sn.transpose() * p.Q * Sn;
    }
    lin.HT = 4.0 * lin.S[N].transpose() * p.P * lin.S[N];
    if (p.options.barrier_all_steps) {
        lin.steps = step_constraints(p, U, lin.x, &lin.S);
    }
    lin.cost = cost_of(p, U, lin.e);
    if (p.options.barrier_all_steps) {
        lin.cost += elastic_penalty(p, lin.steps);
    }
    return lin;
}

// Dual estimates recovered from a centered barrier point.
struct Duals {
    std::vector<Vec6> q;        // multiplier-weighted Q e_n, n = 1..N-1 (index n)
    std::vector<double> nu;     // epigraph multipliers of the state terms
    std::vector<Vec3> r;        // multiplier-weighted R u_n
    std::vector<double> nu_s;   // epigraph multipliers of the input terms
    std::vector<double> ball;   // eps_u^2 - |u_n|^2 >= 0
    double aff[2] = {0.0, 0.0};
    std::vector<double> lam_c, lam_xi;
    double mu = 0.0;
};

// Convex subproblem in (dU, aux), aux = [tau_1..tau_{N-1}, sigma_0..sigma_{N-1}, xi...].
class Subproblem {
public:
    Subproblem(const FhocProblem& p, const Linearization& lin, const VectorXd& U, const FirstStepConstraints& fsc,
               double lm)
        : p_(p), lin_(lin), U_(U), fsc_(fsc), lm_(lm), N_(p.N), nu_(3 * p.N) {
        sq_ = p.options.squared_stage_cost;
        n_tau_ = sq_ ? 0 : N_ - 1;
        n_sig_ = sq_ ? 0 : N_;
        n_xi_ = static_cast<int>(lin.steps.size());
        n_aux_ = n_tau_ + n_sig_ + n_xi_;
    }

    struct Result {
        VectorXd dU;
        double model = 0.0;
        Duals duals;
        int newton_steps = 0;
    };

    Result solve();

private:
    Vec6 err(int n, const VectorXd& d) const {
        return lin_.e[n] + lin_.S[n].leftCols(3 * n) * d.head(3 * n);
    }
    Vec3 input(int n, const VectorXd& d) const { return block(U_, n) + d.segment<3>(3 * n); }
    double lin_step(int j, const VectorXd& d) const { return lin_.steps[j].value + lin_.steps[j].grad.dot(d); }

    double objective(const VectorXd& d, const VectorXd& a) const;
    double barrier(const VectorXd& d, const VectorXd& a, double mu) const;
    double model(const VectorXd& d) const;
    int tau(int n) const { return n - 1; }
    int sig(int n) const { return n_tau_ + n; }
    int xi(int j) const { return n_tau_ + n_sig_ + j; }

    const FhocProblem& p_;
    const Linearization& lin_;
    const VectorXd& U_;
    const FirstStepConstraints& fsc_;
    double lm_;
    int N_, nu_;
    bool sq_ = false;
    int n_tau_ = 0, n_sig_ = 0, n_xi_ = 0, n_aux_ = 0;
};

double Subproblem::objective(const VectorXd& d, const VectorXd& a) const {
    double f = 0.5 * lm_ * d.squaredNorm();
    if (sq_) {
        for (int n = 1; n < N_; ++n) {
            const Vec6 e = err(n, d);
            f += e.dot(p_.Q * e);
        }
        for (int n = 0; n < N_; ++n) {
            const Vec3 u = input(n, d);
            f += u.dot(p_.R * u);
        }
    } else {
        f += a.head(n_tau_ + n_sig_).sum();
    }
    f += p_.options.elastic_penalty * a.tail(n_xi_).sum();
    return f + terminal_cost(err(N_, d), p_.P);
}

double Subproblem::barrier(const VectorXd& d, const VectorXd& a, double mu) const {
    double psi = 0.0;
    auto add = [&](double arg) {
        if (!(arg > 0.0)) {
            return false;
        }
        psi -= std::log(arg);
        return true;
    };
    const double eu2 = p_.eps_u * p_.eps_u;
    for (int n = 0; n < N_; ++n) {
        const Vec3 u = input(n, d);
        if (!add(eu2 - u.squaredNorm())) {
            return kInf;
        }
        if (!sq_) {
            const double s = a(sig(n));
            if (s <= 0.0 || !add(s * s - u.dot(p_.R * u))) {
                return kInf;
            }
        }
    }
    if (!sq_) {
        for (int n = 1; n < N_; ++n) {
            const Vec6 e = err(n, d);
            const double t = a(tau(n));
            if (t <= 0.0 || !add(t * t - e.dot(p_.Q * e))) {
                return kInf;
            }
        }
    }
    const Vec3 u0 = input(0, d);
    if (!add(fsc_.slack1(u0)) || !add(fsc_.slack2(u0))) {
        return kInf;
    }
    for (int j = 0; j < n_xi_; ++j) {
        const double x = a(xi(j));
        if (!add(x) || !add(lin_step(j, d) + x)) {
            return kInf;
        }
    }
    return objective(d, a) + mu * psi;
}

double Subproblem::model(const VectorXd& d) const {
    double m = sq_ ? lin_.e[0].dot(p_.Q * lin_.e[0]) : qnorm(lin_.e[0], p_.Q);
    for (int n = 1; n < N_; ++n) {
        const Vec6 e = err(n, d);
        m += sq_ ? e.dot(p_.Q * e) : qnorm(e, p_.Q);
    }
    for (int n = 0; n < N_; ++n) {
        const Vec3 u = input(n, d);
        m += sq_ ? u.dot(p_.R * u) : rnorm(u, p_.R);
    }
    m += terminal_cost(err(N_, d), p_.P);
    for (int j = 0; j < n_xi_; ++j) {
        m += p_.options.elastic_penalty * std::max(0.0, -lin_step(j, d));
    }
    return m;
}

Subproblem::Result Subproblem::solve() {
    VectorXd d = VectorXd::Zero(nu_);
    VectorXd a = VectorXd::Zero(n_aux_);

    const double J0 = lin_.cost;
    const double theta = 2.0 * (n_tau_ + n_sig_) + N_ + 2.0 + 2.0 * n_xi_;
    const double mu_final = kMuFinal * std::clamp(J0, 1e-8, 1.0);
    double mu = std::max(J0 / theta, 1e2 * mu_final);
    // Central values of the auxiliary variables for fixed dU = 0.
    for (int n = 1; n <= n_tau_; ++n) {
        const double en = qnorm(lin_.e[n], p_.Q);
        a(tau(n)) = mu + std::sqrt(mu * mu + en * en);
    }
    for (int n = 0; n < n_sig_; ++n) {
        const double un = rnorm(block(U_, n), p_.R);
        a(sig(n)) = mu + std::sqrt(mu * mu + un * un);
    }
    const double rho = p_.options.elastic_penalty;
    for (int j = 0; j < n_xi_; ++j) {
        const double c = lin_.steps[j].value;
        const double bq = rho * c - 2.0 * mu;
        a(xi(j)) = std::max((-bq + std::sqrt(bq * bq + 4.0 * rho * mu * c + 1e-300)) / (2.0 * rho),
                            std::max(0.0, -c) + 1e-12);
        if (!(a(xi(j)) > 0.0) || !(a(xi(j)) + c > 0.0)) {
            a(xi(j)) = std::max(0.0, -c) + std::max(1e-6, mu / rho);
        }
    }

    Result res;
    const double eu2 = p_.eps_u * p_.eps_u;
    MatrixXd H(nu_, nu_);
    VectorXd g(nu_), gred(nu_);
    VectorXd ga(n_aux_), ha(n_aux_);
    std::vector<VectorXd> cpl(n_aux_);  // coupling d^2 phi / dU d aux (dense, zero-padded)
    std::vector<int> cpl_len(n_aux_, 0);
    VectorXd dd(nu_), da(n_aux_);
    int total_newton = 0;

    while (true) {
        const bool final_stage = mu <= mu_final * 1.0000001;
        double phi = barrier(d, a, mu);
        for (int it = 0; it < 80 && total_newton < 2000; ++it) {
            H.setZero();
            g = lm_ * d;
            H.diagonal().setConstant(lm_);
            H += lin_.HT;
            const Vec6 eN = err(N_, d);
            g += 4.0 * lin_.S[N_].transpose() * (p_.P * eN);
            for (int n = 0; n < N_; ++n) {
                const Vec3 u = input(n, d);
                const double D = eu2 - u.squaredNorm();
                H.block<3, 3>(3 * n, 3 * n) += mu * (2.0 / D * Mat3::Identity() + 4.0 / (D * D) * u * u.transpose());
                g.segment<3>(3 * n) += mu * 2.0 / D * u;
            }
            if (sq_) {
                for (int n = 1; n < N_; ++n) {
                    const Vec6 e = err(n, d);
                    H.topLeftCorner(3 * n, 3 * n) += 2.0 * lin_.G[n];
                    g.head(3 * n) += 2.0 * lin_.S[n].leftCols(3 * n).transpose() * (p_.Q * e);
                }
                for (int n = 0; n < N_; ++n) {
                    H.block<3, 3>(3 * n, 3 * n) += 2.0 * p_.R;
                    g.segment<3>(3 * n) += 2.0 * p_.R * input(n, d);
                }
            }
            {
                const Vec3 u0 = input(0, d);
                for (int i = 0; i < 2; ++i) {
                    const Vec3& av = i == 0 ? fsc_.a1 : fsc_.a2;
                    const double s = i == 0 ? fsc_.slack1(u0) : fsc_.slack2(u0);
                    H.block<3, 3>(0, 0) += mu / (s * s) * av * av.transpose();
                    g.head<3>() -= mu / s * av;
                }
            }
            gred = g;
            // Epigraph variables of the state terms.
            for (int n = 1; n <= n_tau_; ++n) {
                const int k = tau(n);
                const Vec6 e = err(n, d);
                const double t = a(k);
                const double D = t * t - e.dot(p_.Q * e);
                const VectorXd v = lin_.S[n].leftCols(3 * n).transpose() * (p_.Q * e);
                const double htt = mu * (-2.0 / D + 4.0 * t * t / (D * D));
                const double cu = -4.0 * mu * t / (D * D);
                ga(k) = 1.0 - 2.0 * mu * t / D;
                ha(k) = htt;
                H.topLeftCorner(3 * n, 3 * n) += (2.0 * mu / D) * lin_.G[n];
                H.topLeftCorner(3 * n, 3 * n) += (4.0 * mu / (D * D) - cu * cu / htt) * v * v.transpose();
                g.head(3 * n) += (2.0 * mu / D) * v;
                gred.head(3 * n) += (2.0 * mu / D) * v - (cu * ga(k) / htt) * v;
                cpl[k] = cu * v;
                cpl_len[k] = 3 * n;
            }
            // Epigraph variables of the input terms.
            for (int n = 0; n < n_sig_; ++n) {
                const int k = sig(n);
                const Vec3 u = input(n, d);
                const Vec3 w = p_.R * u;
                const double s = a(k);
                const double D = s * s - u.dot(w);
                const double hss = mu * (-2.0 / D + 4.0 * s * s / (D * D));
                const double cu = -4.0 * mu * s / (D * D);
                ga(k) = 1.0 - 2.0 * mu * s / D;
                ha(k) = hss;
                H.block<3, 3>(3 * n, 3 * n) +=
                    (2.0 * mu / D) * p_.R + (4.0 * mu / (D * D) - cu * cu / hss) * w * w.transpose();
                g.segment<3>(3 * n) += (2.0 * mu / D) * w;
                gred.segment<3>(3 * n) += (2.0 * mu / D) * w - (cu * ga(k) / hss) * w;
                VectorXd c = VectorXd::Zero(3 * (n + 1));
                c.segment<3>(3 * n) = cu * w;
                cpl[k] = std::move(c);
                cpl_len[k] = 3 * (n + 1);
            }
            // Elastic slacks of the optional all-step constraints.
            for (int j = 0; j < n_xi_; ++j) {
                const int k = xi(j);
                const VectorXd& w = lin_.steps[j].grad;
                const double x = a(k);
                const double c = lin_step(j, d) + x;
                const double hcc = mu / (c * c);
                const double hxx = hcc + mu / (x * x);
                ga(k) = rho - mu / c - mu / x;
                ha(k) = hxx;
                H += (hcc - hcc * hcc / hxx) * w * w.transpose();
                g -= (mu / c) * w;
                gred -= (mu / c) * w + (hcc * ga(k) / hxx) * w;
                cpl[k] = hcc * w;
                cpl_len[k] = nu_;
            }

            Eigen::LLT<MatrixXd> llt(H);
            if (llt.info() == Eigen::Success) {
                dd = -llt.solve(gred);
            } else {
                dd = -H.ldlt().solve(gred);
            }
            for (int k = 0; k < n_aux_; ++k) {
                da(k) = -(ga(k) + cpl[k].dot(dd.head(cpl_len[k]))) / ha(k);
            }
            const double dec = -(g.dot(dd) + ga.dot(da));
            ++total_newton;
            if (!(dec > 0.0)) {
                break;
            }
            const double tol = final_stage ? 1e-15 * std::max(1.0, std::abs(phi)) : 0.5 * mu;
            if (0.5 * dec <= tol) {
                // One more full step is essentially free when already centered.
                if (final_stage) {
                    const double trial = barrier(d + dd, a + da, mu);
                    if (trial <= phi) {
                        d += dd;
                        a += da;
                        phi = trial;
                    }
                }
                break;
            }
            double alpha = 1.0;
            double trial = kInf;
            bool moved = false;
            for (int ls = 0; ls < 60; ++ls) {
                trial = barrier(d + alpha * dd, a + alpha * da, mu);
                if (trial <= phi - 0.25 * alpha * dec) {
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!moved) {
                // Rounding floor: accept a non-increasing step if there is one, then stop.
                if (trial <= phi) {
                    d += alpha * dd;
                    a += alpha * da;
                    phi = trial;
                }
                break;
            }
            d += alpha * dd;
            a += alpha * da;
            phi = trial;
        }
        if (final_stage || total_newton >= 2000) {
            break;
        }
        mu = std::max(mu_final, mu / kMuFactor);
    }

    res.dU = d;
    res.model = model(d);
    res.newton_steps = total_newton;

    Duals& du = res.duals;
    du.mu = mu;
    du.q.assign(N_, Vec6::Zero());
    du.nu.assign(N_, 0.0);
    du.r.assign(N_, Vec3::Zero());
    du.nu_s.assign(N_, 0.0);
    du.ball.assign(N_, 0.0);
    for (int n = 1; n <= n_tau_; ++n) {
        const Vec6 e = err(n, d);
        const double t = a(tau(n));
        const double D = t * t - e.dot(p_.Q * e);
        du.q[n] = (2.0 * mu / D) * (p_.Q * e);
        du.nu[n] = 2.0 * mu * t / D;
    }
    for (int n = 0; n < n_sig_; ++n) {
        const Vec3 u = input(n, d);
        const double s = a(sig(n));
        const double D = s * s - u.dot(p_.R * u);
        du.r[n] = (2.0 * mu / D) * (p_.R * u);
        du.nu_s[n] = 2.0 * mu * s / D;
    }
    for (int n = 0; n < N_; ++n) {
        du.ball[n] = mu / (eu2 - input(n, d).squaredNorm());
    }
    const Vec3 u0 = input(0, d);
    du.aff[0] = mu / fsc_.slack1(u0);
    du.aff[1] = mu / fsc_.slack2(u0);
    for (int j = 0; j < n_xi_; ++j) {
        const double x = a(xi(j));
        du.lam_c.push_back(mu / (lin_step(j, d) + x));
        du.lam_xi.push_back(mu / x);
    }
    return res;
}

// Multipliers for one input block: the best non-negative fit of the block
// gradient over every subset of its candidate constraints. Returns the
// stationarity and complementarity parts.
struct BlockFit {
    double stat = kInf;
    double comp = kInf;
};

BlockFit fit_block(const Vec3& g, const std::vector<Vec3>& grads, const std::vector<double>& slacks, bool at_zero,
                   const Mat3& R, double comp_scale) {
    const int m = static_cast<int>(grads.size());
    BlockFit best;
    Eigen::LLT<Mat3> rl(R);
    const Mat3 Rh = rl.matrixL();
    for (int mask = 0; mask < (1 << m); ++mask) {
        std::vector<int> act;
        for (int i = 0; i < m; ++i) {
            if (mask & (1 << i)) {
                act.push_back(i);
            }
        }
        Eigen::Matrix<double, 3, Eigen::Dynamic> A(3, act.size());
        for (std::size_t i = 0; i < act.size(); ++i) {
            A.col(i) = grads[act[i]];
        }
        Eigen::VectorXd lam = Eigen::VectorXd::Zero(act.size());
        if (!act.empty()) {
            lam = A.colPivHouseholderQr().solve(g);
            if ((lam.array() < 0.0).any()) {
                continue;
            }
        }
        Vec3 r = g - A * lam;
        if (at_zero) {
            // subgradient of |u|_R at zero: {R^(1/2) s : |s| <= 1}
            const Vec3 w = rl.matrixL().solve(r);
            const double wn = w.norm();
            r = wn <= 1.0 ? Vec3::Zero() : Vec3(Rh * (w - w / wn));
        }
        double comp = 0.0;
        for (std::size_t i = 0; i < act.size(); ++i) {
            comp = std::max(comp, lam(i) * std::abs(slacks[act[i]]) / comp_scale);
        }
        const double stat = r.lpNorm<Eigen::Infinity>();
        if (std::max(stat, comp) < std::max(best.stat, best.comp)) {
            best = {stat, comp};
        }
    }
    return best;
}

// Scaled KKT residual of the true problem at U. Multipliers of the input
// constraints are fitted block by block; the elastic all-step constraints use
// the subproblem's dual estimates.
double kkt_residual(const FhocProblem& p, const Linearization& lin, const VectorXd& U,
                    const FirstStepConstraints& fsc, const Duals* du) {
    const int N = p.N;
    const bool sq = p.options.squared_stage_cost;
    const double zero_tol = 1e-6 * p.eps_u;
    // Norm terms this small are treated as sitting on their kink (an
    // epsilon-subgradient test); the state terms then take the subproblem's
    // dual subgradient, the input terms any point of the dual ball.
    const double kink_tol = p.options.kkt_tolerance * (1.0 + lin.cost);
    VectorXd g = 4.0 * lin.S[N].transpose() * (p.P * lin.e[N]);
    for (int n = 1; n < N; ++n) {
        const Vec6 Qe = p.Q * lin.e[n];
        const double en = qnorm(lin.e[n], p.Q);
        Vec6 q = Vec6::Zero();
        if (sq) {
            q = 2.0 * Qe;
        } else if (en > kink_tol || !du || du->q.size() != static_cast<std::size_t>(N)) {
            q = en > 0.0 ? Vec6(Qe / en) : Vec6::Zero();
        } else if (du->nu[n] > 0.0) {
            q = du->q[n] / du->nu[n];
        }
        g.head(3 * n) += lin.S[n].leftCols(3 * n).transpose() * q;
    }
    std::vector<bool> at_zero(N, false);
    for (int n = 0; n < N; ++n) {
        const Vec3 u = block(U, n);
        if (sq) {
            g.segment<3>(3 * n) += 2.0 * p.R * u;
        } else if (u.norm() > zero_tol && rnorm(u, p.R) > kink_tol) {
            g.segment<3>(3 * n) += p.R * u / rnorm(u, p.R);
        } else {
            at_zero[n] = true;
        }
    }
    const double gscale = 1.0 + g.lpNorm<Eigen::Infinity>();
    double aux = 0.0;
    if (!lin.steps.empty()) {
        if (!du || du->lam_c.size() != lin.steps.size()) {
            return kInf;
        }
        for (std::size_t j = 0; j < lin.steps.size(); ++j) {
            g -= du->lam_c[j] * lin.steps[j].grad;
            aux = std::max(aux, std::abs(p.options.elastic_penalty - du->lam_c[j] - du->lam_xi[j]) /
                                    p.options.elastic_penalty);
        }
    }

    const double comp_scale = 1.0 + gscale * p.eps_u;
    const double eu2 = p.eps_u * p.eps_u;
    double stat = 0.0, comp = 0.0, infeas = 0.0;
    for (int n = 0; n < N; ++n) {
        const Vec3 u = block(U, n);
        // constraints written as c(u) >= 0; stationarity g = sum lam grad c
        std::vector<Vec3> grads{Vec3(-2.0 * u)};
        std::vector<double> slacks{eu2 - u.squaredNorm()};
        if (n == 0) {
            grads.push_back(fsc.a1);
            grads.push_back(fsc.a2);
            slacks.push_back(fsc.slack1(u));
            slacks.push_back(fsc.slack2(u));
        }
        const BlockFit f = fit_block(g.segment<3>(3 * n), grads, slacks, at_zero[n], p.R, comp_scale);
        stat = std::max(stat, f.stat / gscale);
        comp = std::max(comp, f.comp);
        infeas = std::max(infeas, (u.norm() - p.eps_u) / p.eps_u);
    }
    const Vec3 u0 = block(U, 0);
    const double cscale = 1.0 + std::max(fsc.a1.norm(), fsc.a2.norm()) * p.eps_u;
    infeas = std::max({infeas, -fsc.slack1(u0) / cscale, -fsc.slack2(u0) / cscale});
    return std::max({stat, comp, aux, std::max(0.0, infeas)});
}

VectorXd initial_inputs(const FhocProblem& p, const FirstStepConstraints& fsc, const Vec3& interior) {
    const int N = p.N;
    VectorXd U = VectorXd::Zero(3 * N);
    const double cap = 0.99 * p.eps_u;
    if (!p.warm_start.empty()) {
        for (int n = 0; n < N; ++n) {
            Vec3 u = p.warm_start[n];
            if (!u.allFinite()) {
                u.setZero();
            }
            const double un = u.norm();
            if (un > cap) {
                u *= cap / un;
            }
            U.segment<3>(3 * n) = u;
        }
    }
    // u_0 must be strictly inside the first-step set: blend toward the interior point.
    const auto margin = [&](const Vec3& u) {
        return std::min({fsc.slack1(u), fsc.slack2(u), p.eps_u - u.norm()});
    };
    const double m_int = margin(interior);
    const Vec3 u0 = U.head<3>();
    double theta = 1.0;
    Vec3 pick = interior;
    for (int k = 0; k < 40; ++k, theta *= 0.5) {
        const Vec3 cand = interior + theta * (u0 - interior);
        if (margin(cand) >= 0.01 * m_int) {
            pick = cand;
            break;
        }
    }
    U.head<3>() = pick;
    return U;
}

std::vector<Vec3> to_inputs(const VectorXd& U) {
    std::vector<Vec3> out(U.size() / 3);
    for (std::size_t n = 0; n < out.size(); ++n) {
        out[n] = U.segment<3>(3 * n);
    }
    return out;
}

}  // namespace

double fhoc_cost(const FhocProblem& p, const std::vector<Vec3>& U, std::vector<Vec6>* states) {
    if (U.size() != static_cast<std::size_t>(p.N)) {
        throw InvalidArgument("fhoc_cost: need N inputs");
    }
    VectorXd v(3 * p.N);
    for (int n = 0; n < p.N; ++n) {
        v.segment<3>(3 * n) = U[n];
    }
    if (states) {
        *states = rollout(p, v);
    }
    return true_cost(p, v);
}

FhocSolution solve_fhoc(const FhocProblem& p) {
    p.validate();
    FhocSolution sol;
    sol.x_star = {p.x0.stacked()};

    const TrackingError err0 = TrackingError::between(p.x0.stacked(), p.ref[0]);
    if (!safe_membership(err0, p.cfg).state) {
        sol.reason = "infeasible-start";
        return sol;
    }
    const Vec3 f_v0 = drift_acceleration(p.x0.dr, p.x0.dv, p.kinematics[0]);
    const FirstStepConstraints fsc = first_step_constraint_set(err0, f_v0, p.margins, p.cfg, p.dt, p.eps_d);
    const std::optional<Vec3> interior = first_step_interior_point(fsc, p.eps_u);
    if (!interior) {
        sol.reason = "empty-first-step-set";
        return sol;
    }

    VectorXd U = initial_inputs(p, fsc, *interior);
    double lm = 1e-10;
    std::optional<Duals> duals;
    double kkt = kInf;
    bool optimal = false;
    int iterations = 0;
    int newton = 0;

    for (int it = 0; it < p.options.max_iterations; ++it) {
        const Linearization lin = linearize(p, U);
        ++iterations;
        if (duals) {
            kkt = kkt_residual(p, lin, U, fsc, &*duals);
            if (kkt <= p.options.kkt_tolerance) {
                optimal = true;
                break;
            }
        }
        Subproblem sub(p, lin, U, fsc, lm);
        const Subproblem::Result res = sub.solve();
        newton += res.newton_steps;
        const double pred = lin.cost - res.model;
        const double slack = 1e-13 * (1.0 + std::abs(lin.cost));
        double alpha = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 30; ++ls) {
            const VectorXd trial = U + alpha * res.dU;
            const double J = true_cost(p, trial);
            if (J <= lin.cost - 1e-4 * alpha * std::max(pred, 0.0) + slack) {
                U = trial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (accepted) {
            duals = res.duals;
            if (alpha == 1.0) {
                lm = std::max(1e-10, lm / 10.0);
            }
        } else {
            duals.reset();
            lm *= 100.0;
            if (lm > 1e4) {
                break;
            }
        }
    }
    if (!optimal && duals) {
        const Linearization lin = linearize(p, U);
        kkt = kkt_residual(p, lin, U, fsc, &*duals);
        optimal = kkt <= p.options.kkt_tolerance;
    }

    sol.u_star = to_inputs(U);
    sol.x_star = rollout(p, U);
    sol.cost = true_cost(p, U);
    sol.kkt_residual = kkt;
    sol.status = optimal ? FhocStatus::Optimal : FhocStatus::MaxIter;
    sol.reason = optimal ? "" : "iteration-budget";
    sol.iterations = iterations;
    sol.newton_steps = newton;
    const Vec3 u0 = sol.u_star.front();
    const double act = 1e-6 * (1.0 + std::max(fsc.a1.norm(), fsc.a2.norm()) * p.eps_u);
    sol.velocity_constraint_active = fsc.slack1(u0) <= act;
    sol.position_constraint_active = fsc.slack2(u0) <= act;
    sol.input_bound_active = u0.norm() >= p.eps_u * (1.0 - 1e-6);
    return sol;
}

FhocSolution CmpcController::solve(FhocProblem p) {
    if (p.warm_start.empty() && previous_.size() == static_cast<std::size_t>(p.N)) {
        p.warm_start.assign(previous_.begin() + 1, previous_.end());
        p.warm_start.push_back(previous_.back());
    }
    FhocSolution sol = solve_fhoc(p);
    if (sol.status == FhocStatus::Infeasible) {
        previous_.clear();
    } else {
        previous_ = sol.u_star;
    }
    return sol;
}

}  // namespace cmpc
