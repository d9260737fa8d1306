#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tnd/frequency.hpp"
#include "tnd/graph.hpp"
#include "tnd/sim.hpp"

namespace tnd {

struct EnvConfig {
  int routes = 16;   // K
  int max_len = 14;  // L_max, nodes per route
  double alpha = 1.0;

  // terminal reward weights b0..b6
  double coverage_weight = 60.0;
  double service_weight = 45.0;
  double wait_weight = 20.0;
  double move_weight = 10.0;
  double overlap_weight = 10.0;
  double fleet_weight = 2.0;
  double utilization_weight = 12.0;
  // shaping weights b7, b8 (End-to-End RL only)
  double shaping_coverage_weight = 20.0;
  double shaping_overlap_weight = 8.0;

  double wait_cap_minutes = 30.0;
  double move_cap_minutes = 40.0;
  double delta_max = 1.0;  // load factor of the frequency projection

  SimConfig sim;

  void validate() const;
};

struct DesignState {
  PartialDesign partial;
  std::vector<int> candidates;  // admissible extensions of the frontier
  std::uint64_t sim_seed = 0;   // seed for the terminal evaluation

  int frontier() const { return partial.current.nodes.back(); }
  bool complete() const {
    return static_cast<int>(partial.completed.size()) >= partial.routes_total;
  }
};

struct RewardBreakdown {
  double psi = 0.0;           // coverage potential
  double rho = 0.0;           // served / citywide OD spawns
  double wait_minutes = 0.0;  // raw mean over served
  double move_minutes = 0.0;
  double omega = 0.0;  // overlap ratio
  double fleet_per_route = 0.0;
  double utilization = 0.0;  // fraction
  double total = 0.0;
};

struct EvaluationResult {
  FrequencyVector frequencies;
  FleetPlan fleet;
  SimulationReport report;
  Metrics metrics;
  RewardBreakdown reward;
};

struct StepOutcome {
  DesignState state;
  bool route_finalized = false;
  int forced_finalizations = 0;  // dead-end finalizations, consuming no action
  bool episode_done = false;
  std::optional<double> terminal_reward;
  std::optional<EvaluationResult> evaluation;
};

// Fraction of total OD demand (transit share) reachable on the induced route
// graph; routes may include the partial route under construction.
double coverage_potential(const RoadGraph& graph, const DemandMatrix& demand,
                          const RouteSet& routes, double alpha);

RewardBreakdown reward_breakdown(const SimulationReport& report, const RouteSet& routes,
                                 const FleetPlan& fleet, const EnvConfig& cfg, double psi);

double shaping_reward(double prev_psi, double new_psi, double omega, const EnvConfig& cfg);

// Route-construction MDP. Stateless transitions: step() derives the next
// DesignState from the previous one, so search can branch from any state.
class Env {
 public:
  Env(const RoadGraph& graph, const DemandMatrix& demand, EnvConfig cfg);

  const RoadGraph& graph() const { return *graph_; }
  const DemandMatrix& demand() const { return *demand_; }
  const EnvConfig& config() const { return cfg_; }

  DesignState initial_state(std::uint64_t sim_seed) const;
  StepOutcome step(const DesignState& state, int action) const;
  // Like step() but never invokes the evaluation pipeline; search uses this to
  // branch inside the tree without simulator calls.
  StepOutcome transition(const DesignState& state, int action) const;

  // Shared evaluation pipeline: frequency projection, fleet sizing, one
  // simulation, reward. Used for episode terminals and for standalone designs.
  EvaluationResult evaluate_design(const RouteSet& routes, std::uint64_t sim_seed) const;

  StateEncoding encode(const DesignState& state) const;

  long long simulator_invocations() const { return sim_calls_; }

 private:
  // Finalize current route; start following routes, absorbing dead-end hubs.
  void finalize_and_advance(StepOutcome& out) const;

  const RoadGraph* graph_;
  const DemandMatrix* demand_;
  EnvConfig cfg_;
  mutable long long sim_calls_ = 0;
};

struct EpisodeStep {
  int step = 0;
  int route_index = 0;
  int frontier = 0;
  int mask_size = 0;
  int action = 0;
  int forced_finalizations = 0;
  bool route_finalized = false;
};

struct EpisodeTrace {
  std::vector<EpisodeStep> steps;
  RouteSet design;
  std::optional<EvaluationResult> evaluation;
};

// Replay a completed design through the environment, recording the per-step
// summary the inspect command consumes. The design must be reachable, i.e.
// every route a valid construction from the hub.
EpisodeTrace replay_design(const Env& env, const RouteSet& design,
                           const EvaluationResult* evaluation);

std::string episode_trace_to_json(const EpisodeTrace& trace);
std::string evaluation_to_json(const EvaluationResult& eval);

}  // namespace tnd
