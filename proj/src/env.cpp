#include "tnd/env.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "tnd/error.hpp"
#include "tnd/paths.hpp"

namespace tnd {

void EnvConfig::validate() const {
  if (routes < 1) fail(errc::invalid_input, "route count K must be at least 1");
  if (max_len < 2) fail(errc::invalid_input, "max route length must be at least 2 nodes");
  const double weights[] = {coverage_weight, service_weight,     wait_weight,
                            move_weight,     overlap_weight,     fleet_weight,
                            utilization_weight, shaping_coverage_weight, shaping_overlap_weight};
  for (double w : weights) {
    if (w < 0.0) fail(errc::invalid_input, "reward weights must be nonnegative");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(errc::invalid_input, "alpha must lie in [0,1]");
  if (!(wait_cap_minutes > 0.0) || !(move_cap_minutes > 0.0)) {
    fail(errc::invalid_input, "time caps must be positive");
  }
  if (!(delta_max > 0.0)) fail(errc::invalid_input, "delta_max must be positive");
}

double coverage_potential(const RoadGraph& graph, const DemandMatrix& demand,
                          const RouteSet& routes, double alpha) {
  const double total = demand.total();
  if (total <= 0.0) return 0.0;

  const auto n = static_cast<std::size_t>(graph.node_count());
  std::vector<std::vector<int>> adj(n);
  std::vector<bool> served(n, false);
  for (const RoutePath& route : routes) {
    for (std::size_t i = 0; i < route.nodes.size(); ++i) {
      served[static_cast<std::size_t>(route.nodes[i])] = true;
      if (i == 0) continue;
      adj[static_cast<std::size_t>(route.nodes[i - 1])].push_back(route.nodes[i]);
      adj[static_cast<std::size_t>(route.nodes[i])].push_back(route.nodes[i - 1]);
    }
  }

  // Connected components of the route graph; reachable pairs share a component.
  std::vector<int> component(n, -1);
  int components = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!served[i] || component[i] >= 0) continue;
    const int label = components++;
    std::vector<int> stack{static_cast<int>(i)};
    component[i] = label;
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      for (int nb : adj[static_cast<std::size_t>(cur)]) {
        if (component[static_cast<std::size_t>(nb)] < 0) {
          component[static_cast<std::size_t>(nb)] = label;
          stack.push_back(nb);
        }
      }
    }
  }

  double covered = 0.0;
  for (const DemandEntry& d : demand.pairs()) {
    const int co = component[static_cast<std::size_t>(d.origin)];
    const int cd = component[static_cast<std::size_t>(d.destination)];
    if (co >= 0 && co == cd) covered += alpha * d.rate;
  }
  return covered / total;
}

RewardBreakdown reward_breakdown(const SimulationReport& report, const RouteSet& routes,
                                 const FleetPlan& fleet, const EnvConfig& cfg, double psi) {
  RewardBreakdown r;
  r.psi = psi;
  const long long served = report.n_comp + report.n_ongoing;
  r.rho = report.n_od > 0 ? static_cast<double>(served) / static_cast<double>(report.n_od) : 0.0;
  r.wait_minutes =
      served > 0 ? report.wait_seconds_served / static_cast<double>(served) / 60.0 : 0.0;
  r.move_minutes =
      served > 0 ? report.move_seconds_served / static_cast<double>(served) / 60.0 : 0.0;
  r.omega = overlap_ratio(routes);
  r.fleet_per_route =
      static_cast<double>(fleet.total) / static_cast<double>(std::max<std::size_t>(routes.size(), 1));
  r.utilization = report.bus_occupancy_mean;
  r.total = cfg.coverage_weight * r.psi + cfg.service_weight * r.rho -
            cfg.wait_weight * std::min(r.wait_minutes / cfg.wait_cap_minutes, 1.0) -
            cfg.move_weight * std::min(r.move_minutes / cfg.move_cap_minutes, 1.0) -
            cfg.overlap_weight * r.omega - cfg.fleet_weight * r.fleet_per_route +
            cfg.utilization_weight * r.utilization;
  return r;
}

double shaping_reward(double prev_psi, double new_psi, double omega, const EnvConfig& cfg) {
  return cfg.shaping_coverage_weight * std::max(0.0, new_psi - prev_psi) -
         cfg.shaping_overlap_weight * omega;
}

Env::Env(const RoadGraph& graph, const DemandMatrix& demand, EnvConfig cfg)
    : graph_(&graph), demand_(&demand), cfg_(std::move(cfg)) {
  cfg_.validate();
}

DesignState Env::initial_state(std::uint64_t sim_seed) const {
  DesignState state;
  state.partial.routes_total = cfg_.routes;
  state.partial.max_len = cfg_.max_len;
  state.partial.current = RoutePath{{graph_->transit_center()}};
  state.sim_seed = sim_seed;
  state.candidates = candidate_set(*graph_, state.partial);
  // An isolated hub immediately finalizes every route (pathological graphs).
  while (state.candidates.empty() && !state.complete()) {
    state.partial.completed.push_back(state.partial.current);
    state.partial.current = RoutePath{{graph_->transit_center()}};
    state.candidates = candidate_set(*graph_, state.partial);
  }
  return state;
}

void Env::finalize_and_advance(StepOutcome& out) const {
  DesignState& state = out.state;
  out.route_finalized = true;
  state.partial.completed.push_back(state.partial.current);
  while (!state.complete()) {
    state.partial.current = RoutePath{{graph_->transit_center()}};
    state.candidates = candidate_set(*graph_, state.partial);
    if (!state.candidates.empty()) return;
    ++out.forced_finalizations;  // hub with no unvisited neighbors
    state.partial.completed.push_back(state.partial.current);
  }
  state.candidates.clear();
  out.episode_done = true;
}

StepOutcome Env::transition(const DesignState& state, int action) const {
  if (state.complete()) fail(errc::invalid_state, "episode is already complete");
  if (!std::binary_search(state.candidates.begin(), state.candidates.end(), action)) {
    std::ostringstream msg;
    msg << "invalid action " << action << "; admissible: {";
    for (std::size_t i = 0; i < state.candidates.size(); ++i) {
      msg << (i ? "," : "") << state.candidates[i];
    }
    msg << "}";
    fail(errc::invalid_input, msg.str());
  }

  StepOutcome out;
  out.state = state;
  out.state.partial.current.nodes.push_back(action);
  out.state.candidates = candidate_set(*graph_, out.state.partial);

  const bool at_max = static_cast<int>(out.state.partial.current.nodes.size()) >= cfg_.max_len;
  if (at_max || out.state.candidates.empty()) {
    if (!at_max) ++out.forced_finalizations;  // dead-end frontier
    finalize_and_advance(out);
  }
  return out;
}

StepOutcome Env::step(const DesignState& state, int action) const {
  StepOutcome out = transition(state, action);
  if (out.episode_done) {
    out.evaluation = evaluate_design(out.state.partial.completed, out.state.sim_seed);
    out.terminal_reward = out.evaluation->reward.total;
  }
  return out;
}

EvaluationResult Env::evaluate_design(const RouteSet& routes, std::uint64_t sim_seed) const {
  EvaluationResult result;
  const SegmentLoads loads = assign_segment_loads(*graph_, routes, *demand_, cfg_.alpha);
  result.frequencies = max_load_frequencies(loads, cfg_.sim.bus_capacity, cfg_.delta_max);
  result.fleet = fleet_size(*graph_, routes, result.frequencies, cfg_.sim.dwell);
  SimConfig sim_cfg = cfg_.sim;
  sim_cfg.rng_seed = sim_seed;
  result.report =
      simulate(*graph_, routes, result.frequencies, result.fleet, *demand_, cfg_.alpha, sim_cfg);
  ++sim_calls_;
  result.metrics = compute_metrics(result.report);
  const double psi = coverage_potential(*graph_, *demand_, routes, cfg_.alpha);
  result.reward = reward_breakdown(result.report, routes, result.fleet, cfg_, psi);
  return result;
}

StateEncoding Env::encode(const DesignState& state) const {
  return encode_state(*graph_, *demand_, state.partial, state.candidates);
}

std::string evaluation_to_json(const EvaluationResult& eval) {
  nlohmann::json doc;
  doc["frequencies"] = eval.frequencies;
  doc["fleet_per_route"] = eval.fleet.per_route;
  doc["fleet_total"] = eval.fleet.total;
  doc["report"] = nlohmann::json::parse(report_to_json(eval.report));
  doc["reward"] = {{"psi", eval.reward.psi},
                   {"rho", eval.reward.rho},
                   {"wait_minutes", eval.reward.wait_minutes},
                   {"move_minutes", eval.reward.move_minutes},
                   {"omega", eval.reward.omega},
                   {"fleet_per_route", eval.reward.fleet_per_route},
                   {"utilization", eval.reward.utilization},
                   {"total", eval.reward.total}};
  return doc.dump(2);
}

EpisodeTrace replay_design(const Env& env, const RouteSet& design,
                           const EvaluationResult* evaluation) {
  EpisodeTrace trace;
  trace.design = design;
  if (evaluation) trace.evaluation = *evaluation;

  PartialDesign partial;
  partial.routes_total = static_cast<int>(design.size());
  partial.max_len = env.config().max_len;
  int step_index = 0;
  for (std::size_t k = 0; k < design.size(); ++k) {
    const RoutePath& route = design[k];
    if (route.nodes.empty()) fail(errc::invalid_input, "design contains an empty route");
    partial.current = RoutePath{{route.nodes.front()}};
    for (std::size_t i = 1; i < route.nodes.size(); ++i) {
      const std::vector<int> candidates = candidate_set(env.graph(), partial);
      if (!std::binary_search(candidates.begin(), candidates.end(), route.nodes[i])) {
        fail(errc::invalid_input, "design route is not a simple path on the graph");
      }
      EpisodeStep step;
      step.step = step_index++;
      step.route_index = static_cast<int>(k);
      step.frontier = partial.current.nodes.back();
      step.mask_size = static_cast<int>(candidates.size());
      step.action = route.nodes[i];
      partial.current.nodes.push_back(route.nodes[i]);
      step.route_finalized = i + 1 == route.nodes.size();
      if (step.route_finalized &&
          static_cast<int>(route.nodes.size()) < env.config().max_len &&
          candidate_set(env.graph(), partial).empty()) {
        step.forced_finalizations = 1;  // ended at a dead end before max length
      }
      trace.steps.push_back(step);
    }
    partial.completed.push_back(partial.current);
  }
  return trace;
}

std::string episode_trace_to_json(const EpisodeTrace& trace) {
  nlohmann::json doc;
  doc["steps"] = nlohmann::json::array();
  for (const EpisodeStep& s : trace.steps) {
    doc["steps"].push_back({{"step", s.step},
                            {"route_index", s.route_index},
                            {"frontier", s.frontier},
                            {"mask_size", s.mask_size},
                            {"action", s.action},
                            {"forced_finalizations", s.forced_finalizations},
                            {"route_finalized", s.route_finalized}});
  }
  doc["design"] = nlohmann::json::array();
  for (const RoutePath& r : trace.design) doc["design"].push_back(r.nodes);
  if (trace.evaluation) {
    doc["evaluation"] = nlohmann::json::parse(evaluation_to_json(*trace.evaluation));
  }
  return doc.dump(2);
}

}  // namespace tnd
