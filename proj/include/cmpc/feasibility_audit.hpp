#pragma once

#include "cmpc/barrier_core.hpp"
#include "cmpc/sd_margins.hpp"

#include <cstddef>
#include <iosfwd>
#include <vector>

namespace cmpc {

/// Two affine functions g_i(u) = k_i + c_i . u of the input.
struct AffinePair {
    Vec3 c1 = Vec3::Zero();
    double k1 = 0.0;
    Vec3 c2 = Vec3::Zero();
    double k2 = 0.0;

    double g1(const Vec3& u) const { return k1 + c1.dot(u); }
    double g2(const Vec3& u) const { return k2 + c2.dot(u); }
};

struct BallOptimum {
    Vec3 u = Vec3::Zero();
    double g1 = 0.0;
    double g2 = 0.0;
    bool feasible = false;  // g1 >= 0 and g2 >= 0 at u
};

/// argmax over |u| <= radius of min(g1, g2), in closed form.
BallOptimum max_min_on_ball(const AffinePair& g, double radius);

/// argmax over |u| <= radius of g1 + g2 subject to g1 >= 0, g2 >= 0. When no
/// such u exists the max-min point is returned with feasible = false.
BallOptimum max_sum_on_ball(const AffinePair& g, double radius);

struct FeasibilityParams {
    MarginSet margins;
    BarrierConfig cfg;
    double eps_f = 0.0;
    double eps_u = 0.0;
    double dt = 0.0;
    double eps_d = 0.0;
};

struct PointFeasibility {
    double q1 = 0.0;  // position-constraint slack
    double q2 = 0.0;  // velocity-constraint slack
    Vec3 u_witness = Vec3::Zero();
    double margin = 0.0;  // max over the ball of min(g1, g2); >= 0 iff the point is feasible
};

/// The two barrier constraints at a given error pair with the drift inner
/// products replaced by their worst case -|e| eps_f.
AffinePair bounded_drift_constraints(const Vec3& e_dr, const Vec3& e_dv, const FeasibilityParams& p);

PointFeasibility point_feasibility(const Vec3& e_dr, const Vec3& e_dv, const FeasibilityParams& p);

/// Canonical embedding: e_dr along axis 1, e_dv in the 1-2 plane at angle alpha.
PointFeasibility point_feasibility(double e_r_norm, double e_v_norm, double alpha, const FeasibilityParams& p);

/// Brute-force cross-check of point_feasibility: polar grid over the input disk
/// in the error plane followed by repeated local grid zooms.
PointFeasibility point_feasibility_sampled(double e_r_norm, double e_v_norm, double alpha,
                                           const FeasibilityParams& p, int directions = 10000, int radii = 50);

struct GridSpec {
    int n_er = 50;
    int n_ev = 50;
    int n_alpha = 50;

    void validate() const;
    std::size_t size() const { return static_cast<std::size_t>(n_er) * n_ev * n_alpha; }
};

struct GridPoint {
    double e_r_norm = 0.0;
    double e_v_norm = 0.0;
    double alpha = 0.0;
    double q1 = 0.0;
    double q2 = 0.0;
    double margin = 0.0;
};

struct FeasibilityReport {
    GridSpec grid;
    std::vector<GridPoint> points;          // ordered by (i_er, i_ev, i_alpha)
    std::vector<std::size_t> infeasible;    // indices into points
    double min_slack = 0.0;                 // min over nodes of the max-min margin
    bool feasible = false;
    double wall_time_s = 0.0;
};

/// Evaluates every node of [0, eps_dr] x [0, eps_dv] x [0, pi]. A resolution of
/// one places the single node at the lower end of the range. `threads` = 0
/// uses the hardware concurrency.
FeasibilityReport grid_scan(const GridSpec& grid, const FeasibilityParams& p, unsigned threads = 0);

/// Columns: e_r_norm,e_v_norm,alpha,q1,q2,margin
void write_feasibility_csv(const FeasibilityReport& report, std::ostream& os);

}  // namespace cmpc
