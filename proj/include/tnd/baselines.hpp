#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tnd/env.hpp"
#include "tnd/mcts.hpp"
#include "tnd/rng.hpp"

namespace tnd {

enum class HeuristicKind { random_walk, demand_cover, shortest_path };

std::optional<HeuristicKind> heuristic_kind_from_name(const std::string& name);

// Sampling distribution over the state's candidate set.
std::vector<double> heuristic_distribution(HeuristicKind kind, const RoadGraph& graph,
                                           const DemandMatrix& demand, const DesignState& state);

int heuristic_policy(HeuristicKind kind, const RoadGraph& graph, const DemandMatrix& demand,
                     const DesignState& state, Rng& rng);

// Roll a full design with the chosen heuristic (no simulator calls).
RouteSet heuristic_design(const Env& env, HeuristicKind kind, std::uint64_t sim_seed, Rng& rng);

// Deterministic demand-cover construction (argmax score, smallest id on ties).
RouteSet greedy_demand_design(const Env& env);

struct GAConfig {
  int population = 50;
  double crossover_rate = 0.8;
  double mutation_rate = 0.4;
  int elitism = 5;
  int tournament = 3;
  int generations = 100;
  int min_route_len = 2;
  std::uint64_t seed = 0;
  std::uint64_t fitness_sim_seed = 0;

  void validate() const;
};

struct Individual {
  RouteSet routes;
  double fitness = 0.0;
};

struct GaResult {
  Individual best;
  std::vector<double> best_history;  // best fitness per generation
};

// Route-exchange crossover: each route index inherits from one parent with
// equal probability.
RouteSet ga_crossover(const RouteSet& a, const RouteSet& b, Rng& rng);

// Path-regeneration mutation of one route: cut at a random position after the
// hub, keep the prefix, regrow by masked random walk.
void ga_mutate(const Env& env, RouteSet& routes, Rng& rng);

// Extend any route below min_len by random valid neighbors.
void ga_repair(const Env& env, RouteSet& routes, int min_len, Rng& rng);

// warm_start, when given, seeds one individual from existing routes.
GaResult ga_optimize(const Env& env, const GAConfig& cfg, const RouteSet* warm_start = nullptr);

// MCTS with uniform priors and rollout leaf evaluations; one tree carried
// across route boundaries. Returns the constructed design.
RouteSet pure_mcts_design(const Env& env, const SearchConfig& cfg, double tau,
                          std::uint64_t sim_seed, Rng& rng, RewardStats& stats,
                          SearchTrace* trace = nullptr, long long* leaf_evaluations = nullptr);

}  // namespace tnd
