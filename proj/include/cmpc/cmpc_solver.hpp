#pragma once

#include "cmpc/barrier_core.hpp"
#include "cmpc/orbital_dynamics.hpp"
#include "cmpc/sd_margins.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cmpc {

/// Iterates P <- A'PA - A'PB (R + B'PB)^-1 B'PA + Q from P = Q until the
/// max-norm change drops below `tol`. Throws NoConvergence past `max_iter`.
Mat6 terminal_weight_dare(const Mat6& A, const Mat63& B, const Mat6& Q, const Mat3& R, double tol = 1e-10,
                          int max_iter = 200000);

/// Discrete (RK4, zero input) linearization of the nominal dynamics at `x`.
StepJacobian linearize_nominal(const Vec6& x, double t, double dt, const KeplerChief& chief);

/// ||e||_Q + ||u||_R with the weighted norm sqrt(x' M x).
double stage_cost(const Vec6& e, const Vec3& u, const Mat6& Q, const Mat3& R);
double terminal_cost(const Vec6& e, const Mat6& P);

/// The two first-step barrier constraints as a_i . u >= b_i
/// (index 1: velocity barrier, index 2: position barrier).
struct FirstStepConstraints {
    Vec3 a1 = Vec3::Zero();
    double b1 = 0.0;
    Vec3 a2 = Vec3::Zero();
    double b2 = 0.0;

    double slack1(const Vec3& u) const { return a1.dot(u) - b1; }
    double slack2(const Vec3& u) const { return a2.dot(u) - b2; }
};

FirstStepConstraints first_step_constraint_set(const TrackingError& err, const Vec3& f_v0, const MarginSet& margins,
                                               const BarrierConfig& cfg, double dt, double eps_d);

/// A point strictly inside {u : a_i . u > b_i, |u| < eps_u}, or nothing when the
/// set has an empty interior.
std::optional<Vec3> first_step_interior_point(const FirstStepConstraints& c, double eps_u);

struct FhocOptions {
    bool squared_stage_cost = false;  // ||.||^2 instead of ||.|| per stage
    bool barrier_all_steps = false;   // linearized, elastic barrier constraints at m >= 1
    double elastic_penalty = 1e3;
    int max_iterations = 50;
    double kkt_tolerance = 1e-6;
};

struct FhocProblem {
    int N = 25;
    double dt = 0.1;
    Mat6 Q = Mat6::Identity();
    Mat3 R = Mat3::Identity();
    Mat6 P = Mat6::Identity();
    double eps_u = 0.02;
    double eps_d = 0.0;
    RelativeState x0;
    std::vector<Vec6> ref;                    // N + 1 reference states
    std::vector<ChiefKinematics> kinematics;  // 2N + 1 values at t0 + m dt / 2
    MarginSet margins;
    BarrierConfig cfg;
    FhocOptions options;
    std::vector<Vec3> warm_start;  // optional initial input sequence (N entries)

    void validate() const;
};

std::vector<ChiefKinematics> horizon_kinematics(const KeplerChief& chief, double t0, double dt, int N);

enum class FhocStatus { Optimal, MaxIter, Infeasible };

const char* to_string(FhocStatus s);

struct FhocSolution {
    std::vector<Vec3> u_star;
    std::vector<Vec6> x_star;
    double cost = 0.0;
    double kkt_residual = 0.0;
    FhocStatus status = FhocStatus::Infeasible;
    std::string reason;  // "infeasible-start", "empty-first-step-set", ...
    int iterations = 0;
    int newton_steps = 0;
    bool velocity_constraint_active = false;
    bool position_constraint_active = false;
    bool input_bound_active = false;
};

/// Single-shooting solve: Gauss-Newton linearization of the rollout, each
/// convexified subproblem solved by a log-barrier interior-point method, Armijo
/// line search on the true cost.
FhocSolution solve_fhoc(const FhocProblem& p);

/// Total cost of an input sequence under the nominal rollout.
double fhoc_cost(const FhocProblem& p, const std::vector<Vec3>& U, std::vector<Vec6>* states = nullptr);

/// Receding-horizon wrapper: keeps the last solution and warm-starts the next
/// solve with it shifted by one step. Not reentrant.
class CmpcController {
public:
    FhocSolution solve(FhocProblem p);
    void reset() { previous_.clear(); }

private:
    std::vector<Vec3> previous_;
};

}  // namespace cmpc
