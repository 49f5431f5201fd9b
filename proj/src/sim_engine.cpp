#include "cmpc/sim_engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

namespace cmpc {

AgentSetup prepare_agent(const Scenario& s, std::size_t index, const KeplerChief& chief) {
    const AgentConfig& a = s.agents.at(index);
    AgentSetup st;
    st.name = a.name;
    st.pro = a.pro;
    st.pro_bounds = pro_bounds(a.pro);
    st.cfg = a.barrier;
    st.envelope.eps_f = a.bounds.eps_f;
    st.envelope.eps_u = a.bounds.eps_u;
    st.envelope.eps_d = a.bounds.eps_d;
    st.envelope.beta = a.bounds.beta;
    st.envelope.dt = s.dt;
    st.envelope.pro = st.pro_bounds;
    st.envelope.cfg = a.barrier;
    st.envelope.validate();
    st.margins = margin_constants(st.envelope);
    st.Q = a.q_diag.asDiagonal();
    st.R = a.r_diag.asDiagonal();
    st.horizon = a.horizon;
    const StepJacobian jac = linearize_nominal(pro_reference(a.pro, 0.0), 0.0, s.dt, chief);
    st.P = terminal_weight_dare(jac.A, jac.B, st.Q, st.R);
    st.x0 = a.initial_hill();
    return st;
}

std::vector<AgentSetup> prepare_agents(const Scenario& s) {
    const KeplerChief chief = s.make_chief();
    std::vector<AgentSetup> out;
    for (std::size_t i = 0; i < s.agents.size(); ++i) {
        out.push_back(prepare_agent(s, i, chief));
    }
    return out;
}

FeasibilityParams feasibility_params(const AgentSetup& a) {
    return {a.margins, a.cfg, a.envelope.eps_f, a.envelope.eps_u, a.envelope.dt, a.envelope.eps_d};
}

std::uint64_t agent_seed(std::uint64_t seed, std::size_t index) {
    // splitmix64 finalizer over (seed, index)
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(index) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace {

TraceRow make_row(double t, int sample, const Vec6& x, const Vec3& u, const Vec3& d, const AgentSetup& st,
                  const ChiefKinematics& k) {
    TraceRow r;
    r.t = t;
    r.sample = sample;
    r.x = x;
    r.e = x - pro_reference(st.pro, t);
    r.u = u;
    r.d = d;
    const TrackingError err{r.e.head<3>(), r.e.tail<3>()};
    const BarrierValues b = barrier_values(err, st.cfg);
    r.h_dr = b.h_dr;
    r.H_dr1 = b.H_dr1;
    r.h_dv = b.h_dv;
    const Vec3 f = drift_acceleration(x.head<3>(), x.tail<3>(), k);
    r.zeta_dr = zeta_dr(err, f, u, Vec3::Zero(), st.cfg);
    r.zeta_dv = zeta_dv(err, f, u, Vec3::Zero(), st.cfg);
    return r;
}

}  // namespace

AgentTrace run_agent(const Scenario& s, std::size_t index) {
    const auto start = std::chrono::steady_clock::now();
    const KeplerChief chief = s.make_chief();
    const AgentSetup st = prepare_agent(s, index, chief);
    AgentTrace tr;
    tr.name = st.name;
    tr.seed = agent_seed(s.seed, index);
    DisturbanceGenerator gen(s.disturbance, tr.seed);

    const int M = s.substeps_per_sample();
    const double h = s.dt / M;
    const int K = static_cast<int>(std::floor(s.duration / s.dt + 1e-9));
    const int N = st.horizon;
    CmpcController ctl;
    Vec6 x = st.x0.stacked();

    FhocProblem p;
    p.N = N;
    p.dt = s.dt;
    p.Q = st.Q;
    p.R = st.R;
    p.P = st.P;
    p.eps_u = st.envelope.eps_u;
    p.eps_d = st.envelope.eps_d;
    p.margins = st.margins;
    p.cfg = st.cfg;
    p.options = s.solver;
    p.ref.resize(N + 1);

    for (int k = 0; k <= K; ++k) {
        const double t_k = static_cast<double>(k) * M * h;
        p.x0 = RelativeState::from(x);
        for (int n = 0; n <= N; ++n) {
            p.ref[n] = pro_reference(st.pro, t_k + n * s.dt);
        }
        p.kinematics = horizon_kinematics(chief, t_k, s.dt, N);

        FhocSolution sol;
        try {
            sol = ctl.solve(p);
        } catch (const Error& e) {
            tr.aborted = true;
            tr.abort_reason = e.reason();
            tr.abort_time = t_k;
            break;
        }
        SampleStats ss;
        ss.t = t_k;
        ss.status = sol.status;
        ss.iterations = sol.iterations;
        ss.newton_steps = sol.newton_steps;
        ss.kkt_residual = sol.kkt_residual;
        ss.cost = sol.cost;
        ss.velocity_active = sol.velocity_constraint_active;
        ss.position_active = sol.position_constraint_active;
        ss.input_bound_active = sol.input_bound_active;
        tr.samples.push_back(ss);

        if (sol.status == FhocStatus::Infeasible) {
            gen.next_substep();
            const ChiefState cs = chief.state(t_k);
            tr.rows.push_back(make_row(t_k, k, x, Vec3::Zero(), gen(cs, RelativeState::from(x)), st,
                                       chief_kinematics(cs)));
            tr.aborted = true;
            tr.abort_reason = sol.reason.empty() ? "infeasible" : sol.reason;
            tr.abort_time = t_k;
            break;
        }
        const Vec3 u = sol.u_star.front();
        try {
            const int steps = k == K ? 1 : M;
            for (int j = 0; j < steps; ++j) {
                const double t = static_cast<double>(k * M + j) * h;
                gen.next_substep();
                const ChiefState cs = chief.state(t);
                tr.rows.push_back(make_row(t, k, x, u, gen(cs, RelativeState::from(x)), st, chief_kinematics(cs)));
                if (k == K) {
                    break;
                }
                x = rk4_step(x, t, h, [&](const Vec6& xs, double ts) {
                    const ChiefState c = chief.state(ts);
                    return relative_dynamics(xs, chief_kinematics(c), u, gen(c, RelativeState::from(xs)));
                });
            }
        } catch (const Error& e) {
            tr.aborted = true;
            tr.abort_reason = e.reason();
            tr.abort_time = t_k;
            break;
        }
    }
    tr.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return tr;
}

RunTrace run_closed_loop(const Scenario& s, unsigned threads) {
    s.validate();
    const auto start = std::chrono::steady_clock::now();
    RunTrace rt;
    rt.agents.resize(s.agents.size());
    if (threads == 0) {
        threads = std::max(1u, std::thread::hardware_concurrency());
    }
    threads = std::min<unsigned>(threads, static_cast<unsigned>(s.agents.size()));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
        for (std::size_t i = next++; i < s.agents.size(); i = next++) {
            try {
                rt.agents[i] = run_agent(s, i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    rt.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rt;
}

AgentAudit safety_audit(const AgentTrace& trace, const MarginSet& margins, const BarrierConfig& cfg, double dt,
                        double eps_d) {
    AgentAudit a;
    a.name = trace.name;
    if (trace.rows.empty()) {
        return a;
    }
    constexpr double kInf = std::numeric_limits<double>::infinity();
    a.min_h_dr = a.min_H_dr1 = a.min_h_dv = kInf;
    a.min_sd_margin_dv = a.min_sd_margin_dr = kInf;
    const double e0 = trace.rows.front().e.head<3>().norm();
    // Barrier values are recomputed from the logged errors rather than trusted.
    std::vector<BarrierValues> bv;
    bv.reserve(trace.rows.size());
    for (const TraceRow& r : trace.rows) {
        bv.push_back(barrier_values({r.e.head<3>(), r.e.tail<3>()}, cfg));
        const BarrierValues& b = bv.back();
        a.min_h_dr = std::min(a.min_h_dr, b.h_dr);
        a.min_H_dr1 = std::min(a.min_H_dr1, b.H_dr1);
        a.min_h_dv = std::min(a.min_h_dv, b.h_dv);
        a.max_u_norm = std::max(a.max_u_norm, r.u.norm());
        const double ev = r.e.tail<3>().norm();
        if (ev > a.peak_e_dv) {
            a.peak_e_dv = ev;
            a.peak_e_dv_time = r.t;
        }
        if (a.recovery_time < 0.0 && r.e.head<3>().norm() <= 0.1 * e0) {
            a.recovery_time = r.t;
        }
    }
    a.safe = a.min_h_dr >= 0.0 && a.min_H_dr1 >= 0.0 && a.min_h_dv >= 0.0;

    const std::size_t n = trace.rows.size();
    std::size_t i = 0;
    while (i < n) {
        const int k = trace.rows[i].sample;
        std::size_t end = i;
        while (end < n && trace.rows[end].sample == k) {
            ++end;
        }
        const TraceRow& r0 = trace.rows[i];
        ++a.samples_checked;
        const SdCheck cv = sd_condition(r0.zeta_dv, margins.L_dv, margins.c_dv, dt, eps_d);
        const SdCheck cr = sd_condition(r0.zeta_dr, margins.L_dr, margins.c_dr, dt, eps_d);
        a.min_sd_margin_dv = std::min(a.min_sd_margin_dv, cv.margin);
        a.min_sd_margin_dr = std::min(a.min_sd_margin_dr, cr.margin);
        const bool start_safe = bv[i].h_dr >= 0.0 && bv[i].H_dr1 >= 0.0 && bv[i].h_dv >= 0.0;
        const bool condition = cv.satisfied && cr.satisfied && start_safe;
        if (!condition) {
            a.condition_violations.push_back(k);
        } else {
            double worst = kInf;
            const std::size_t last = std::min(end + 1, n);  // include the closing endpoint
            for (std::size_t j = i; j < last; ++j) {
                worst = std::min({worst, bv[j].h_dr, bv[j].H_dr1, bv[j].h_dv});
            }
            if (worst < 0.0) {
                a.implication_violations.push_back(k);
            }
        }
        i = end;
    }
    return a;
}

}  // namespace cmpc
