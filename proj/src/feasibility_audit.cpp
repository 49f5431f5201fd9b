#include "cmpc/feasibility_audit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <thread>

namespace cmpc {

namespace {

constexpr double kTiny = 1e-300;

BallOptimum evaluate(const AffinePair& g, const Vec3& u) {
    BallOptimum o;
    o.u = u;
    o.g1 = g.g1(u);
    o.g2 = g.g2(u);
    o.feasible = o.g1 >= 0.0 && o.g2 >= 0.0;
    return o;
}

// Maximizes dir . u over {u : n . u = offset} intersected with the ball.
// Returns false when the slice is empty.
bool slice_maximizer(const Vec3& n, double offset, const Vec3& dir, double radius, Vec3& u) {
    const double nn = n.squaredNorm();
    if (nn <= kTiny) {
        return false;
    }
    const Vec3 u0 = (offset / nn) * n;
    const double rest = radius * radius - u0.squaredNorm();
    if (rest < 0.0) {
        return false;
    }
    const Vec3 perp = dir - (dir.dot(n) / nn) * n;
    const double pn = perp.norm();
    u = pn > 1e-15 * std::max(1.0, dir.norm()) ? Vec3(u0 + std::sqrt(rest) * perp / pn) : u0;
    return true;
}

double min_of(const BallOptimum& o) { return std::min(o.g1, o.g2); }

}  // namespace

BallOptimum max_min_on_ball(const AffinePair& g, double radius) {
    std::vector<Vec3> candidates{Vec3::Zero()};
    for (const Vec3* c : {&g.c1, &g.c2}) {
        const double n = c->norm();
        if (n > 0.0) {
            candidates.push_back(radius * (*c) / n);
        }
    }
    Vec3 u;
    if (slice_maximizer(g.c1 - g.c2, g.k2 - g.k1, g.c1, radius, u)) {
        candidates.push_back(u);
    }
    BallOptimum best = evaluate(g, candidates.front());
    for (const Vec3& c : candidates) {
        const BallOptimum o = evaluate(g, c);
        if (min_of(o) > min_of(best)) {
            best = o;
        }
    }
    return best;
}

BallOptimum max_sum_on_ball(const AffinePair& g, double radius) {
    const BallOptimum fallback = max_min_on_ball(g, radius);
    if (!fallback.feasible) {
        return fallback;
    }
    const Vec3 s = g.c1 + g.c2;
    std::vector<Vec3> candidates{fallback.u};
    if (s.norm() > 0.0) {
        candidates.push_back(radius * s / s.norm());
    }
    Vec3 u;
    if (slice_maximizer(g.c1, -g.k1, s, radius, u)) {
        candidates.push_back(u);
    }
    if (slice_maximizer(g.c2, -g.k2, s, radius, u)) {
        candidates.push_back(u);
    }
    // Both active: minimum-norm point on the intersection line.
    Eigen::Matrix<double, 2, 3> C;
    C.row(0) = g.c1.transpose();
    C.row(1) = g.c2.transpose();
    const Eigen::Matrix2d CCt = C * C.transpose();
    if (std::abs(CCt.determinant()) > 1e-14 * std::max(kTiny, CCt.squaredNorm())) {
        const Vec3 u_both = C.transpose() * CCt.ldlt().solve(Eigen::Vector2d(-g.k1, -g.k2));
        if (u_both.norm() <= radius) {
            candidates.push_back(u_both);
        }
    }

    const double scale = 1e-13 * std::max({1.0, std::abs(g.k1), std::abs(g.k2), g.c1.norm() * radius,
                                           g.c2.norm() * radius});
    BallOptimum best = fallback;
    double best_sum = fallback.g1 + fallback.g2;
    for (const Vec3& c : candidates) {
        if (c.norm() > radius * (1.0 + 1e-12)) {
            continue;
        }
        BallOptimum o = evaluate(g, c);
        if (o.g1 < -scale || o.g2 < -scale) {
            continue;
        }
        if (o.g1 + o.g2 > best_sum) {
            // constraints active at a candidate are zero up to roundoff
            o.g1 = std::max(o.g1, 0.0);
            o.g2 = std::max(o.g2, 0.0);
            o.feasible = true;
            best = o;
            best_sum = o.g1 + o.g2;
        }
    }
    return best;
}

AffinePair bounded_drift_constraints(const Vec3& e_dr, const Vec3& e_dv, const FeasibilityParams& p) {
    const BarrierConfig& c = p.cfg;
    const MarginSet& m = p.margins;
    const double er = e_dr.norm();
    const double ev = e_dv.norm();
    AffinePair g;
    g.c1 = -2.0 * e_dr;
    g.k1 = -2.0 * ev * ev - 2.0 * er * p.eps_f - 2.0 * (c.p_dr0 + c.p_dr1) * e_dr.dot(e_dv) +
           c.p_dr0 * c.p_dr1 * (c.eps_dr * c.eps_dr - er * er) - m.L_dr * p.dt - m.c_dr * p.eps_d;
    g.c2 = -2.0 * e_dv;
    g.k2 = -2.0 * ev * p.eps_f + c.p_dv0 * (c.eps_dv * c.eps_dv - ev * ev) - m.L_dv * p.dt - m.c_dv * p.eps_d;
    return g;
}

PointFeasibility point_feasibility(const Vec3& e_dr, const Vec3& e_dv, const FeasibilityParams& p) {
    const AffinePair g = bounded_drift_constraints(e_dr, e_dv, p);
    const BallOptimum o = max_sum_on_ball(g, p.eps_u);
    const BallOptimum mm = max_min_on_ball(g, p.eps_u);
    return {o.g1, o.g2, o.u, min_of(mm)};
}

PointFeasibility point_feasibility(double e_r_norm, double e_v_norm, double alpha, const FeasibilityParams& p) {
    const Vec3 e_dr(e_r_norm, 0.0, 0.0);
    const Vec3 e_dv(e_v_norm * std::cos(alpha), e_v_norm * std::sin(alpha), 0.0);
    return point_feasibility(e_dr, e_dv, p);
}

PointFeasibility point_feasibility_sampled(double e_r_norm, double e_v_norm, double alpha,
                                           const FeasibilityParams& p, int directions, int radii) {
    const Vec3 e_dr(e_r_norm, 0.0, 0.0);
    const Vec3 e_dv(e_v_norm * std::cos(alpha), e_v_norm * std::sin(alpha), 0.0);
    const AffinePair g = bounded_drift_constraints(e_dr, e_dv, p);
    const double eps = p.eps_u;

    // Feasible samples are ranked by g1 + g2, infeasible ones by min(g1, g2);
    // any feasible sample beats every infeasible one. The max-min margin is
    // searched on its own.
    struct Best {
        double theta = 0.0, rho = 0.0;
        bool feasible = false;
        double score = -std::numeric_limits<double>::infinity();
    };
    auto at = [](double theta, double rho) { return Vec3(rho * std::cos(theta), rho * std::sin(theta), 0.0); };
    auto sum_rank = [&](Best& best, double theta, double rho) {
        const Vec3 u = at(theta, rho);
        const double a = g.g1(u), b = g.g2(u);
        const bool feas = a >= 0.0 && b >= 0.0;
        const double score = feas ? a + b : std::min(a, b);
        if ((feas && !best.feasible) || (feas == best.feasible && score > best.score)) {
            best = {theta, rho, feas, score};
        }
    };
    auto min_rank = [&](Best& best, double theta, double rho) {
        const Vec3 u = at(theta, rho);
        const double score = std::min(g.g1(u), g.g2(u));
        if (score > best.score) {
            best = {theta, rho, score >= 0.0, score};
        }
    };

    const double d_theta0 = 2.0 * M_PI / directions;
    const double d_rho0 = radii > 1 ? eps / (radii - 1) : eps;
    Best by_sum, by_min;
    for (int i = 0; i < directions; ++i) {
        for (int j = 0; j < radii; ++j) {
            const double rho = radii > 1 ? j * d_rho0 : eps;
            sum_rank(by_sum, i * d_theta0, rho);
            min_rank(by_min, i * d_theta0, rho);
        }
    }
    auto zoom = [&](Best& best, auto&& rank) {
        constexpr int kZoom = 41;
        double d_theta = d_theta0, d_rho = d_rho0;
        for (int round = 0; round < 14; ++round) {
            const double theta0 = best.theta - 2.0 * d_theta;
            const double rho0 = best.rho - 2.0 * d_rho;
            const double step_theta = 4.0 * d_theta / (kZoom - 1);
            const double step_rho = 4.0 * d_rho / (kZoom - 1);
            for (int i = 0; i < kZoom; ++i) {
                for (int j = 0; j < kZoom; ++j) {
                    rank(best, theta0 + i * step_theta, std::clamp(rho0 + j * step_rho, 0.0, eps));
                }
            }
            d_theta = step_theta;
            d_rho = step_rho;
        }
    };
    zoom(by_sum, sum_rank);
    zoom(by_min, min_rank);
    const Vec3 u = at(by_sum.theta, by_sum.rho);
    return {g.g1(u), g.g2(u), u, by_min.score};
}

void GridSpec::validate() const {
    if (n_er < 1 || n_ev < 1 || n_alpha < 1) {
        throw InvalidArgument("grid: resolutions must be positive");
    }
}

FeasibilityReport grid_scan(const GridSpec& grid, const FeasibilityParams& p, unsigned threads) {
    grid.validate();
    const auto start = std::chrono::steady_clock::now();
    FeasibilityReport rep;
    rep.grid = grid;
    rep.points.resize(grid.size());

    auto node = [](int i, int n, double hi) { return n > 1 ? hi * i / (n - 1) : 0.0; };
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t idx = begin; idx < end; ++idx) {
            const int ia = static_cast<int>(idx % grid.n_alpha);
            const int iv = static_cast<int>((idx / grid.n_alpha) % grid.n_ev);
            const int ir = static_cast<int>(idx / (static_cast<std::size_t>(grid.n_alpha) * grid.n_ev));
            GridPoint& gp = rep.points[idx];
            gp.e_r_norm = node(ir, grid.n_er, p.cfg.eps_dr);
            gp.e_v_norm = node(iv, grid.n_ev, p.cfg.eps_dv);
            gp.alpha = node(ia, grid.n_alpha, M_PI);
            const PointFeasibility f = point_feasibility(gp.e_r_norm, gp.e_v_norm, gp.alpha, p);
            gp.q1 = f.q1;
            gp.q2 = f.q2;
            gp.margin = f.margin;
        }
    };

    if (threads == 0) {
        threads = std::max(1u, std::thread::hardware_concurrency());
    }
    const std::size_t n = rep.points.size();
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, n)));
    if (threads <= 1) {
        work(0, n);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (n + threads - 1) / threads;
        for (unsigned t = 0; t < threads; ++t) {
            const std::size_t b = t * chunk;
            const std::size_t e = std::min(n, b + chunk);
            if (b < e) {
                pool.emplace_back(work, b, e);
            }
        }
        for (auto& th : pool) {
            th.join();
        }
    }

    rep.min_slack = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const double s = rep.points[i].margin;
        rep.min_slack = std::min(rep.min_slack, s);
        if (s < 0.0) {
            rep.infeasible.push_back(i);
        }
    }
    rep.feasible = rep.infeasible.empty();
    rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rep;
}

void write_feasibility_csv(const FeasibilityReport& report, std::ostream& os) {
    os << "e_r_norm,e_v_norm,alpha,q1,q2,margin\n";
    os << std::setprecision(17);
    for (const GridPoint& gp : report.points) {
        os << gp.e_r_norm << ',' << gp.e_v_norm << ',' << gp.alpha << ',' << gp.q1 << ',' << gp.q2 << ',' << gp.margin << '\n';
    }
}

}  // namespace cmpc
