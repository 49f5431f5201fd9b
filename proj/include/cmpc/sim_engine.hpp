#pragma once

#include "cmpc/cmpc_solver.hpp"
#include "cmpc/disturbance_models.hpp"
#include "cmpc/feasibility_audit.hpp"
#include "cmpc/scenario.hpp"
#include "cmpc/sd_margins.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cmpc {

/// Everything derived for one inspector before the loop starts.
struct AgentSetup {
    std::string name;
    ProParams pro;
    ProBounds pro_bounds;
    BarrierConfig cfg;
    EnvelopeInputs envelope;
    MarginSet margins;
    Mat6 Q;
    Mat3 R;
    Mat6 P;  // DARE terminal weight
    int horizon = 25;
    RelativeState x0;
};

AgentSetup prepare_agent(const Scenario& s, std::size_t index, const KeplerChief& chief);
std::vector<AgentSetup> prepare_agents(const Scenario& s);

FeasibilityParams feasibility_params(const AgentSetup& a);

/// One truth substep. `sample` is the index k of the hold interval.
struct TraceRow {
    double t = 0.0;
    int sample = 0;
    Vec6 x = Vec6::Zero();
    Vec6 e = Vec6::Zero();
    double h_dr = 0.0;
    double H_dr1 = 0.0;
    double h_dv = 0.0;
    double zeta_dr = 0.0;  // at the applied input, d = 0
    double zeta_dv = 0.0;
    Vec3 u = Vec3::Zero();
    Vec3 d = Vec3::Zero();
};

struct SampleStats {
    double t = 0.0;
    FhocStatus status = FhocStatus::Optimal;
    int iterations = 0;
    int newton_steps = 0;
    double kkt_residual = 0.0;
    double cost = 0.0;
    bool velocity_active = false;
    bool position_active = false;
    bool input_bound_active = false;
};

struct AgentTrace {
    std::string name;
    std::uint64_t seed = 0;
    std::vector<TraceRow> rows;
    std::vector<SampleStats> samples;
    bool aborted = false;
    std::string abort_reason;
    double abort_time = 0.0;
    double wall_time_s = 0.0;
};

struct RunTrace {
    std::vector<AgentTrace> agents;
    double wall_time_s = 0.0;
};

/// Deterministic per-agent stream derived from the scenario seed.
std::uint64_t agent_seed(std::uint64_t seed, std::size_t index);

/// Closed loop for one inspector: solve at every sample, hold u*(0), propagate
/// the perturbed truth with RK4 substeps. Solver infeasibility stops the agent
/// with the trace kept.
AgentTrace run_agent(const Scenario& s, std::size_t index);

/// All agents, run concurrently (`threads` = 0: hardware concurrency).
RunTrace run_closed_loop(const Scenario& s, unsigned threads = 0);

struct AgentAudit {
    std::string name;
    int samples_checked = 0;
    std::vector<int> condition_violations;    // samples where the SD condition fails
    std::vector<int> implication_violations;  // condition held, a barrier went negative in the interval
    double min_h_dr = 0.0;
    double min_H_dr1 = 0.0;
    double min_h_dv = 0.0;
    double max_u_norm = 0.0;
    double min_sd_margin_dv = 0.0;
    double min_sd_margin_dr = 0.0;
    // accelerate-coast-brake diagnostics
    double peak_e_dv = 0.0;
    double peak_e_dv_time = 0.0;
    double recovery_time = -1.0;  // first t with |e_dr| <= 10% of its initial value, -1 if never
    bool safe = true;             // all barrier samples >= 0
};

/// Rechecks the sampled-data condition at each sample and the inter-sample
/// implication over the substep rows of each interval.
AgentAudit safety_audit(const AgentTrace& trace, const MarginSet& margins, const BarrierConfig& cfg, double dt,
                        double eps_d);

}  // namespace cmpc
