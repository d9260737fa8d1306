#include "tnd/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "tnd/error.hpp"
#include "tnd/trainer.hpp"

namespace tnd {

std::optional<HeuristicKind> heuristic_kind_from_name(const std::string& name) {
  if (name == "random") return HeuristicKind::random_walk;
  if (name == "demand-cover") return HeuristicKind::demand_cover;
  if (name == "shortest-path") return HeuristicKind::shortest_path;
  return std::nullopt;
}

std::vector<double> heuristic_distribution(HeuristicKind kind, const RoadGraph& graph,
                                           const DemandMatrix& demand, const DesignState& state) {
  const auto& candidates = state.candidates;
  if (candidates.empty()) fail(errc::invalid_state, "heuristic policy with no candidates");
  std::vector<double> scores(candidates.size(), 0.0);
  switch (kind) {
    case HeuristicKind::random_walk:
      std::fill(scores.begin(), scores.end(), 1.0);
      break;
    case HeuristicKind::demand_cover:
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        double s = 0.0;
        for (int j : state.partial.current.nodes) {
          s += demand.rate(candidates[i], j) + demand.rate(j, candidates[i]);
        }
        scores[i] = s;
      }
      break;
    case HeuristicKind::shortest_path: {
      const int frontier = state.frontier();
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        scores[i] = 1.0 / graph.edge_length(frontier, candidates[i]);
      }
      break;
    }
  }
  double total = 0.0;
  for (double s : scores) total += s;
  if (total <= 0.0) {  // all-zero interaction: fall back to uniform
    std::fill(scores.begin(), scores.end(), 1.0 / static_cast<double>(scores.size()));
    return scores;
  }
  for (double& s : scores) s /= total;
  return scores;
}

int heuristic_policy(HeuristicKind kind, const RoadGraph& graph, const DemandMatrix& demand,
                     const DesignState& state, Rng& rng) {
  const std::vector<double> probs = heuristic_distribution(kind, graph, demand, state);
  const double u = rng.uniform01();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return state.candidates[i];
  }
  return state.candidates.back();
}

RouteSet heuristic_design(const Env& env, HeuristicKind kind, std::uint64_t sim_seed, Rng& rng) {
  DesignState state = env.initial_state(sim_seed);
  while (!state.complete()) {
    const int action = heuristic_policy(kind, env.graph(), env.demand(), state, rng);
    state = env.transition(state, action).state;
  }
  return state.partial.completed;
}

RouteSet greedy_demand_design(const Env& env) {
  DesignState state = env.initial_state(0);
  while (!state.complete()) {
    const std::vector<double> probs =
        heuristic_distribution(HeuristicKind::demand_cover, env.graph(), env.demand(), state);
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i) {
      if (probs[i] > probs[best]) best = i;
    }
    state = env.transition(state, state.candidates[best]).state;
  }
  return state.partial.completed;
}

void GAConfig::validate() const {
  if (population < 2) fail(errc::invalid_input, "population must be at least 2");
  if (elitism < 0 || elitism >= population) {
    fail(errc::invalid_input, "elitism must be smaller than the population");
  }
  if (tournament < 1) fail(errc::invalid_input, "tournament size must be positive");
  if (crossover_rate < 0.0 || crossover_rate > 1.0 || mutation_rate < 0.0 ||
      mutation_rate > 1.0) {
    fail(errc::invalid_input, "rates must lie in [0,1]");
  }
  if (generations < 1) fail(errc::invalid_input, "generations must be positive");
  if (min_route_len < 2) fail(errc::invalid_input, "minimum route length is 2 nodes");
}

namespace {

// Masked random walk from the kept prefix until L_max or a dead end.
void regrow_route(const Env& env, RoutePath& route, Rng& rng) {
  PartialDesign probe;
  probe.routes_total = 1;
  probe.max_len = env.config().max_len;
  probe.current = route;
  while (static_cast<int>(probe.current.nodes.size()) < env.config().max_len) {
    const auto cands = candidate_set(env.graph(), probe);
    if (cands.empty()) break;
    probe.current.nodes.push_back(cands[rng.uniform_index(cands.size())]);
  }
  route = probe.current;
}

void repair_route(const Env& env, RoutePath& route, int min_len, Rng& rng) {
  while (static_cast<int>(route.nodes.size()) < min_len) {
    PartialDesign probe;
    probe.routes_total = 1;
    probe.max_len = env.config().max_len;
    probe.current = route;
    const auto cands = candidate_set(env.graph(), probe);
    if (cands.empty()) break;  // isolated hub; nothing can be done
    route.nodes.push_back(cands[rng.uniform_index(cands.size())]);
  }
}

RoutePath random_route(const Env& env, Rng& rng) {
  RoutePath route{{env.graph().transit_center()}};
  regrow_route(env, route, rng);
  return route;
}

RouteSet sampled_demand_design(const Env& env, Rng& rng) {
  DesignState state = env.initial_state(0);
  while (!state.complete()) {
    const int action =
        heuristic_policy(HeuristicKind::demand_cover, env.graph(), env.demand(), state, rng);
    state = env.transition(state, action).state;
  }
  return state.partial.completed;
}

Individual evaluated(const Env& env, RouteSet routes, std::uint64_t sim_seed) {
  Individual ind;
  ind.fitness = env.evaluate_design(routes, sim_seed).reward.total;
  ind.routes = std::move(routes);
  return ind;
}

}  // namespace

RouteSet ga_crossover(const RouteSet& a, const RouteSet& b, Rng& rng) {
  if (a.size() != b.size()) fail(errc::invalid_input, "crossover parents differ in route count");
  RouteSet child;
  child.reserve(a.size());
  for (std::size_t r = 0; r < a.size(); ++r) {
    child.push_back(rng.uniform01() < 0.5 ? a[r] : b[r]);
  }
  return child;
}

void ga_mutate(const Env& env, RouteSet& routes, Rng& rng) {
  if (routes.empty()) return;
  RoutePath& route = routes[rng.uniform_index(routes.size())];
  const std::size_t cut = 1 + rng.uniform_index(std::max<std::size_t>(1, route.nodes.size() - 1));
  route.nodes.resize(cut);
  regrow_route(env, route, rng);
}

void ga_repair(const Env& env, RouteSet& routes, int min_len, Rng& rng) {
  for (RoutePath& route : routes) repair_route(env, route, min_len, rng);
}

GaResult ga_optimize(const Env& env, const GAConfig& cfg, const RouteSet* warm_start) {
  cfg.validate();
  Rng rng(cfg.seed ^ 0x6a5e13ULL);
  const int k = env.config().routes;
  const int max_len = env.config().max_len;

  std::vector<Individual> population;
  population.reserve(static_cast<std::size_t>(cfg.population));

  if (warm_start && !warm_start->empty()) {
    RouteSet seeded;
    for (const RoutePath& r : *warm_start) {
      if (static_cast<int>(seeded.size()) >= k) break;
      if (r.nodes.empty() || r.nodes.front() != env.graph().transit_center()) continue;
      RoutePath clipped = r;
      if (static_cast<int>(clipped.nodes.size()) > max_len) {
        clipped.nodes.resize(static_cast<std::size_t>(max_len));
      }
      if (static_cast<int>(clipped.nodes.size()) >= cfg.min_route_len) {
        seeded.push_back(std::move(clipped));
      }
    }
    while (static_cast<int>(seeded.size()) < k) seeded.push_back(random_route(env, rng));
    population.push_back(evaluated(env, std::move(seeded), cfg.fitness_sim_seed));
  }
  if (static_cast<int>(population.size()) < cfg.population) {
    population.push_back(evaluated(env, greedy_demand_design(env), cfg.fitness_sim_seed));
  }
  while (static_cast<int>(population.size()) < cfg.population) {
    // alternate demand-guided sampling and plain random walks
    RouteSet routes = population.size() % 2 == 0 ? sampled_demand_design(env, rng)
                                                 : heuristic_design(env, HeuristicKind::random_walk,
                                                                    0, rng);
    for (RoutePath& r : routes) repair_route(env, r, cfg.min_route_len, rng);
    population.push_back(evaluated(env, std::move(routes), cfg.fitness_sim_seed));
  }

  const auto by_fitness = [](const Individual& a, const Individual& b) {
    return a.fitness > b.fitness;
  };
  std::stable_sort(population.begin(), population.end(), by_fitness);

  const auto tournament_pick = [&](void) -> const Individual& {
    std::size_t best = rng.uniform_index(population.size());
    for (int t = 1; t < cfg.tournament; ++t) {
      const std::size_t other = rng.uniform_index(population.size());
      if (population[other].fitness > population[best].fitness) best = other;
    }
    return population[best];
  };

  GaResult result;
  for (int gen = 0; gen < cfg.generations; ++gen) {
    std::vector<Individual> next;
    next.reserve(population.size());
    for (int e = 0; e < cfg.elitism; ++e) next.push_back(population[static_cast<std::size_t>(e)]);

    while (static_cast<int>(next.size()) < cfg.population) {
      const Individual& p1 = tournament_pick();
      const Individual& p2 = tournament_pick();
      RouteSet child_routes = rng.uniform01() < cfg.crossover_rate
                                  ? ga_crossover(p1.routes, p2.routes, rng)
                                  : p1.routes;
      if (rng.uniform01() < cfg.mutation_rate) ga_mutate(env, child_routes, rng);
      ga_repair(env, child_routes, cfg.min_route_len, rng);
      next.push_back(evaluated(env, std::move(child_routes), cfg.fitness_sim_seed));
    }

    population = std::move(next);
    std::stable_sort(population.begin(), population.end(), by_fitness);
    result.best_history.push_back(population.front().fitness);
  }

  result.best = population.front();
  return result;
}

RouteSet pure_mcts_design(const Env& env, const SearchConfig& cfg, double tau,
                          std::uint64_t sim_seed, Rng& rng, RewardStats& stats, SearchTrace* trace,
                          long long* leaf_evaluations) {
  RolloutEvaluator evaluator(stats);
  const Episode episode = collect_episode(env, evaluator, cfg, tau, sim_seed, rng, trace);
  if (leaf_evaluations) *leaf_evaluations = evaluator.evaluations();
  return episode.design;
}

}  // namespace tnd
