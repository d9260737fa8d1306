// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "tnd/baselines.hpp"
#include "tnd/citygen.hpp"
#include "tnd/env.hpp"
#include "tnd/frequency.hpp"
#include "tnd/graph.hpp"
#include "tnd/mcts.hpp"
#include "tnd/net.hpp"
#include "tnd/rng.hpp"
#include "tnd/sim.hpp"
#include "tnd/trainer.hpp"

using namespace tnd;

namespace {

int failures = 0;

void criterion(const std::string& name, double budget_seconds,
               const std::function<bool(std::string&)>& body) {
  std::string detail;
  bool ok = false;
  const auto started = std::chrono::steady_clock::now();
  try {
    ok = body(detail);
  } catch (const std::exception& e) {
    ok = false;
    detail = std::string("exception: ") + e.what();
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (elapsed > budget_seconds) {
    ok = false;
    detail += (detail.empty() ? "" : "; ") + std::string("over time budget");
  }
  std::printf("%s %s (%.2fs)%s%s\n", ok ? "PASS" : "FAIL", name.c_str(), elapsed,
              detail.empty() ? "" : " — ", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

RoadGraph bloomington_scale_graph() {
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  for (int i = 0; i < 143; ++i) nodes.push_back({i, 100.0 * i, 40.0 * (i % 9)});
  for (int i = 0; i < 143; ++i) edges.push_back({i, (i + 1) % 143, 400.0, 16.67});
  for (int i = 0; i < 100; ++i) edges.push_back({i, (i + 5) % 143, 900.0, 16.67});
  return RoadGraph(std::move(nodes), std::move(edges), 0);
}

Network desk_city() {
  CityGenParams params;
  params.kind = "grid";
  params.rows = 3;
  params.cols = 4;
  params.spacing = 800.0;
  params.free_speed = 10.0;
  params.demand_pairs = 18;
  params.rate_min = 10.0;
  params.rate_max = 120.0;
  params.seed = 20240817;
  return generate_city(params);
}

// -------- oracle machinery for the MCTS equivalence criterion --------

std::string state_key(const DesignState& state) {
  std::ostringstream key;
  for (const RoutePath& r : state.partial.completed) {
    for (int n : r.nodes) key << n << ',';
    key << '|';
  }
  key << '#';
  for (int n : state.partial.current.nodes) key << n << ',';
  return key.str();
}

struct CompletionOracle {
  const Env* env;
  std::uint64_t sim_seed;
  std::unordered_map<std::string, double> cache;
  RewardStats terminal_stats;  // scale for normalized leaf values

  double best_completion(const DesignState& state) {
    const std::string key = state_key(state);
    const auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    double value;
    if (state.complete()) {
      value = env->evaluate_design(state.partial.completed, sim_seed).reward.total;
    } else {
      value = -1e300;
      for (int action : state.candidates) {
        value = std::max(value, best_completion(env->transition(state, action).state));
      }
    }
    cache.emplace(key, value);
    return value;
  }

  // enumerate every terminal once so leaf values can share the tree's
  // normalized value scale, exactly like trained backups do
  void prepare(const DesignState& root) {
    std::vector<DesignState> stack{root};
    while (!stack.empty()) {
      const DesignState state = stack.back();
      stack.pop_back();
      if (state.complete()) {
        terminal_stats.update(best_completion(state));
        continue;
      }
      for (int action : state.candidates) {
        stack.push_back(env->transition(state, action).state);
      }
    }
  }

  double normalized_best(const DesignState& state) {
    return normalize_value(best_completion(state), terminal_stats);
  }

  std::vector<int> optimal_first_actions(const DesignState& state) {
    std::vector<int> best_actions;
    double best = -1e300;
    for (int action : state.candidates) {
      const double value = best_completion(env->transition(state, action).state);
      if (value > best + 1e-9) {
        best = value;
        best_actions = {action};
      } else if (value > best - 1e-9) {
        best_actions.push_back(action);
      }
    }
    return best_actions;
  }
};

class OracleEvaluator : public Evaluator {
 public:
  explicit OracleEvaluator(CompletionOracle& oracle) : oracle_(&oracle) {}
  EvalResult evaluate(const DesignState& state, const Env&, Rng&) override {
    EvalResult result;
    if (!state.candidates.empty()) {
      result.priors.assign(state.candidates.size(),
                           1.0 / static_cast<double>(state.candidates.size()));
    }
    result.value = oracle_->normalized_best(state);
    return result;
  }

 private:
  CompletionOracle* oracle_;
};

struct ToyInstance {
  std::string name;
  RoadGraph graph;
  DemandMatrix demand;
  int routes;
  int max_len;
};

std::vector<ToyInstance> toy_suite() {
  std::vector<ToyInstance> suite;
  const auto path_graph = [](int n, int hub) {
    std::vector<Node> nodes;
    std::vector<Edge> edges;
    for (int i = 0; i < n; ++i) nodes.push_back({i, 600.0 * i, 0.0});
    for (int i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, 600.0, 10.0});
    return RoadGraph(std::move(nodes), std::move(edges), hub);
  };

  suite.push_back({"path3", path_graph(3, 0), DemandMatrix(3, {{1, 2, 30.0}, {2, 0, 10.0}}),
                   1, 3});
  suite.push_back({"path4", path_graph(4, 1), DemandMatrix(4, {{2, 3, 40.0}, {3, 2, 25.0}}),
                   1, 3});
  suite.push_back(
      {"path5", path_graph(5, 2), DemandMatrix(5, {{0, 1, 50.0}, {3, 4, 45.0}}), 2, 3});

  {
    // short routes force a choice between a heavy pair and a light pair
    std::vector<Node> nodes{{0, 0, 0}, {1, 600, 0}, {2, 300, 500}};
    std::vector<Edge> edges{{0, 1, 600, 10}, {1, 2, 600, 10}, {0, 2, 600, 10}};
    suite.push_back({"triangle", RoadGraph(std::move(nodes), std::move(edges), 0),
                     DemandMatrix(3, {{0, 1, 40.0}, {2, 0, 10.0}}), 1, 2});
  }
  {
    std::vector<Node> nodes{{0, 0, 0}, {1, 600, 0}, {2, 600, 600}, {3, 0, 600}};
    std::vector<Edge> edges{{0, 1, 600, 10}, {1, 2, 600, 10}, {2, 3, 600, 10}, {3, 0, 600, 10}};
    suite.push_back({"square", RoadGraph(std::move(nodes), std::move(edges), 0),
                     DemandMatrix(4, {{1, 3, 40.0}, {2, 0, 20.0}}), 2, 3});
  }
  {
    // square with an apex: five nodes, two faces
    std::vector<Node> nodes{{0, 0, 0}, {1, 600, 0}, {2, 600, 600}, {3, 0, 600}, {4, 300, 1000}};
    std::vector<Edge> edges{{0, 1, 600, 10}, {1, 2, 600, 10}, {2, 3, 600, 10},
                            {3, 0, 600, 10}, {2, 4, 500, 10}, {3, 4, 500, 10}};
    suite.push_back({"house", RoadGraph(std::move(nodes), std::move(edges), 0),
                     DemandMatrix(5, {{4, 1, 60.0}, {0, 4, 30.0}}), 2, 4});
  }
  {
    std::vector<Node> nodes{{0, 0, 0}, {1, 600, 0}, {2, 0, 600}, {3, -600, 0}, {4, 0, -600}};
    std::vector<Edge> edges{{0, 1, 600, 10}, {0, 2, 600, 10}, {0, 3, 600, 10}, {0, 4, 600, 10}};
    suite.push_back({"star4", RoadGraph(std::move(nodes), std::move(edges), 0),
                     DemandMatrix(5, {{1, 2, 50.0}, {3, 2, 30.0}}), 2, 4});
  }
  return suite;
}

NetConfig desk_net_config() {
  NetConfig cfg;
  cfg.block_widths = {32, 32};
  cfg.block_heads = {4, 4};
  cfg.embed_dim = 16;
  cfg.actor_hidden = {64, 32};
  cfg.critic_hidden = {64, 32};
  return cfg;
}

double mean_of(const std::vector<double>& values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double sample_std(const std::vector<double>& values) {
  const double m = mean_of(values);
  double acc = 0.0;
  for (double v : values) acc += (v - m) * (v - m);
  return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

}  // namespace

int main() {
  criterion("search-space-estimate", 1.0, [](std::string& detail) {
    const RoadGraph graph = bloomington_scale_graph();
    const auto hub = estimate_search_space(graph, 16, 14, true);
    const auto rnd = estimate_search_space(graph, 16, 14, false);
    std::ostringstream msg;
    msg << "per_route=" << hub.per_route << " hub_log10=" << hub.total_log10
        << " random_log10=" << rnd.total_log10;
    detail = msg.str();
    return std::abs(hub.per_route - 1.24e5) / 1.24e5 <= 0.02 &&
           std::abs(hub.total_log10 - 81.5) < 0.05 && std::abs(rnd.total_log10 - 116.0) < 0.2;
  });

  criterion("frequency-projection-minimality", 30.0, [](std::string& detail) {
    Rng rng(424242);
    int violations = 0;
    for (int trial = 0; trial < 500; ++trial) {
      const std::size_t k = 1 + rng.uniform_index(4);
      SegmentLoads loads;
      loads.per_route.resize(k);
      for (std::size_t r = 0; r < k; ++r) {
        const std::size_t segments = 1 + rng.uniform_index(5);
        for (std::size_t s = 0; s < segments; ++s) {
          loads.per_route[r][make_segment(static_cast<int>(r * 10 + s),
                                          static_cast<int>(r * 10 + s + 1))] =
              rng.uniform(0.0, 200.0);
        }
      }
      if (!verify_minimality(loads, 40.0, 1.0, 6)) ++violations;
    }
    detail = "violations=" + std::to_string(violations) + "/500";
    return violations == 0;
  });

  criterion("gradient-correctness", 120.0, [](std::string& detail) {
    CityGenParams params;
    params.kind = "geometric";
    params.nodes = 8;
    params.radius = 2500.0;
    params.demand_pairs = 20;
    params.seed = 99;
    const Network city = generate_city(params);
    EnvConfig env_cfg;
    env_cfg.routes = 2;
    env_cfg.max_len = 4;
    const Env env(city.graph, city.demand, env_cfg);

    Rng rng(5);
    DesignState state = env.initial_state(1);
    for (int s = 0; s < 2 && !state.complete(); ++s) {
      state = env.transition(state, state.candidates[rng.uniform_index(state.candidates.size())])
                  .state;
    }

    NetConfig net_cfg;
    net_cfg.block_widths = {8, 6};
    net_cfg.block_heads = {2, 2};
    net_cfg.embed_dim = 6;
    net_cfg.actor_hidden = {10, 8};
    net_cfg.critic_hidden = {10, 8};
    PolicyValueNet net(net_cfg, 7);

    TrainSample sample;
    sample.encoding = env.encode(state);
    sample.candidates = state.candidates;
    double total = 0.0;
    for (std::size_t i = 0; i < state.candidates.size(); ++i) {
      sample.pi.push_back(rng.uniform(0.1, 1.0));
      total += sample.pi.back();
    }
    for (double& p : sample.pi) p /= total;
    sample.z_norm = rng.uniform(-2.0, 2.0);
    const std::vector<TrainSample> batch{sample};

    net.zero_grads();
    alphatransit_loss(net, batch);
    std::vector<ad::Mat> analytic;
    for (const auto& p : net.params()) analytic.push_back(p.grad);

    const double h = 1e-5;
    double max_err = 0.0;
    for (std::size_t p = 0; p < net.params().size(); ++p) {
      for (std::size_t i = 0; i < net.params()[p].value.size(); ++i) {
        const double saved = net.params()[p].value.data[i];
        net.params()[p].value.data[i] = saved + h;
        net.zero_grads();
        const double plus = alphatransit_loss(net, batch).total;
        net.params()[p].value.data[i] = saved - h;
        net.zero_grads();
        const double minus = alphatransit_loss(net, batch).total;
        net.params()[p].value.data[i] = saved;
        const double fd = (plus - minus) / (2.0 * h);
        const double an = analytic[p].data[i];
        max_err = std::max(max_err,
                           std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)}));
      }
    }
    std::ostringstream msg;
    msg << "params=" << net.parameter_count() << " max_rel_err=" << max_err;
    detail = msg.str();
    return max_err <= 1e-4;
  });

  criterion("masked-policy-normalization", 30.0, [](std::string& detail) {
    Rng rng(31337);
    double worst = 0.0;
    for (int trial = 0; trial < 10000; ++trial) {
      const std::size_t n = 1 + rng.uniform_index(40);
      std::vector<double> logits(n);
      std::vector<std::uint8_t> mask(n, 0);
      for (auto& l : logits) l = rng.uniform(-50.0, 50.0);
      for (std::size_t i = 0; i < n; ++i) mask[i] = rng.uniform01() < 0.4 ? 1 : 0;
      mask[rng.uniform_index(n)] = 1;
      const auto probs = masked_policy(logits, mask);
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i] && probs[i] != 0.0) return false;
        sum += probs[i];
      }
      worst = std::max(worst, std::abs(sum - 1.0));
    }
    std::ostringstream msg;
    msg << "worst |sum-1|=" << worst;
    detail = msg.str();
    return worst <= 1e-12;
  });

  criterion("mcts-oracle-equivalence", 300.0, [](std::string& detail) {
    std::ostringstream msg;
    int total_runs = 0, total_hits = 0;
    for (ToyInstance& instance : toy_suite()) {
      EnvConfig env_cfg;
      env_cfg.routes = instance.routes;
      env_cfg.max_len = instance.max_len;
      env_cfg.sim.horizon = 3600;
      const Env env(instance.graph, instance.demand, env_cfg);
      CompletionOracle oracle{&env, 13, {}, {}};
      const DesignState root = env.initial_state(13);
      oracle.prepare(root);
      const std::vector<int> optimal = oracle.optimal_first_actions(root);

      OracleEvaluator evaluator(oracle);
      SearchConfig cfg;
      cfg.n_iter = 200;
      cfg.add_noise = true;

      int hits = 0;
      const int runs = 20;
      for (int run = 0; run < runs; ++run) {
        SearchTree tree(env, evaluator, cfg);
        tree.reset_root(root);
        Rng rng(9000 + static_cast<std::uint64_t>(run));
        tree.run_search(rng);
        const SearchNode& node = tree.root();
        std::size_t best = 0;
        for (std::size_t i = 1; i < node.actions.size(); ++i) {
          if (node.visits[i] > node.visits[best]) best = i;
        }
        if (std::find(optimal.begin(), optimal.end(), node.actions[best]) != optimal.end()) {
          ++hits;
        }
      }
      total_runs += runs;
      total_hits += hits;
      msg << instance.name << "=" << hits << "/" << runs << " ";
    }
    detail = msg.str();
    return static_cast<double>(total_hits) >= 0.95 * static_cast<double>(total_runs);
  });

  criterion("simulator-conservation", 300.0, [](std::string& detail) {
    const Network city = desk_city();
    EnvConfig env_cfg;
    env_cfg.routes = 3;
    env_cfg.max_len = 5;
    const Env env(city.graph, city.demand, env_cfg);

    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
      DesignState state = env.initial_state(static_cast<std::uint64_t>(trial));
      while (!state.complete()) {
        state = env.transition(state, state.candidates[rng.uniform_index(state.candidates.size())])
                    .state;
      }
      const RouteSet design = state.partial.completed;
      const SegmentLoads loads = assign_segment_loads(city.graph, design, city.demand, 1.0);
      const FrequencyVector freq = max_load_frequencies(loads, 40.0, 1.0);
      const FleetPlan fleet = fleet_size(city.graph, design, freq, 60.0);
      SimConfig sim_cfg;
      sim_cfg.rng_seed = static_cast<std::uint64_t>(trial);
      const SimulationReport a =
          simulate(city.graph, design, freq, fleet, city.demand, 1.0, sim_cfg);
      if (a.conservation_violations != 0) {
        detail = "conservation violated at trial " + std::to_string(trial);
        return false;
      }
      if (a.capacity_exceeded) {
        detail = "capacity exceeded at trial " + std::to_string(trial);
        return false;
      }
      if (a.n_comp + a.n_ongoing + a.n_waiting != a.n_want) {
        detail = "final passenger accounting broken at trial " + std::to_string(trial);
        return false;
      }
      const SimulationReport b =
          simulate(city.graph, design, freq, fleet, city.demand, 1.0, sim_cfg);
      if (report_to_json(a) != report_to_json(b)) {
        detail = "reports not bit-identical at trial " + std::to_string(trial);
        return false;
      }
    }
    detail = "100 designs, 0 violations";
    return true;
  });

  criterion("reward-arithmetic-goldens", 10.0, [](std::string& detail) {
    EnvConfig cfg;  // paper weights are the defaults
    const RouteSet one_route{RoutePath{{0, 1}}};

    SimulationReport zeros;
    if (reward_breakdown(zeros, {}, FleetPlan{}, cfg, 0.0).total != 0.0) {
      detail = "all-zero case";
      return false;
    }

    SimulationReport perfect;
    perfect.n_od = 100;
    perfect.n_comp = 100;
    perfect.bus_occupancy_mean = 1.0;
    const double full = reward_breakdown(perfect, one_route, FleetPlan{}, cfg, 1.0).total;
    if (std::abs(full - 117.0) > 1e-12) {
      detail = "full-score case: " + std::to_string(full);
      return false;
    }

    SimulationReport waiting;
    waiting.n_comp = 1;
    waiting.wait_seconds_served = 45.0 * 60.0;
    const double capped = reward_breakdown(waiting, one_route, FleetPlan{}, cfg, 0.0).total;
    if (std::abs(capped + 20.0) > 1e-12) {
      detail = "wait-cap case: " + std::to_string(capped);
      return false;
    }

    if (overlap_ratio({RoutePath{{0, 1}}, RoutePath{{2, 3}}}) != 0.0) {
      detail = "disjoint overlap";
      return false;
    }
    if (std::abs(overlap_ratio({RoutePath{{0, 1, 2, 3}}, RoutePath{{4, 1, 0}}}) - 0.25) > 1e-12) {
      detail = "quarter overlap";
      return false;
    }
    if (std::abs(overlap_ratio({RoutePath{{0, 1, 2}}, RoutePath{{0, 1, 2}}}) - 1.0) > 1e-12) {
      detail = "full overlap";
      return false;
    }
    detail = "117 / wait-cap / overlap 0,0.25,1";
    return true;
  });

  criterion("desk-scale-learning-signal", 600.0, [](std::string& detail) {
    const Network city = desk_city();
    EnvConfig env_cfg;
    env_cfg.routes = 3;
    env_cfg.max_len = 5;
    env_cfg.alpha = 1.0;
    const Env env(city.graph, city.demand, env_cfg);

    TrainRunConfig train_cfg;
    train_cfg.env_step_budget = 2000;
    train_cfg.workers = 4;
    train_cfg.episodes_per_worker = 2;
    train_cfg.train_steps_per_iteration = 30;
    train_cfg.batch_size = 64;
    train_cfg.learning_rate = 1e-3;
    train_cfg.buffer_capacity = 4000;
    train_cfg.search.n_iter = 50;
    train_cfg.seed = 7;

    AlphaTransitTrainer trainer(env, desk_net_config(), train_cfg);
    trainer.train();

    NeuralEvaluator evaluator(trainer.net());
    SearchConfig eval_cfg = train_cfg.search;
    eval_cfg.add_noise = false;

    std::vector<double> trained, baseline;
    for (int e = 0; e < 20; ++e) {
      Rng rng(5000 + static_cast<std::uint64_t>(e));
      const Episode ep = collect_episode(env, evaluator, eval_cfg, 0.1,
                                         static_cast<std::uint64_t>(e), rng);
      trained.push_back(ep.z_raw);
    }
    for (int e = 0; e < 20; ++e) {
      Rng rng(6000 + static_cast<std::uint64_t>(e));
      const RouteSet design =
          heuristic_design(env, HeuristicKind::random_walk, static_cast<std::uint64_t>(e), rng);
      baseline.push_back(env.evaluate_design(design, static_cast<std::uint64_t>(e)).reward.total);
    }

    const double mean_trained = mean_of(trained);
    const double mean_baseline = mean_of(baseline);
    const double s1 = sample_std(trained);
    const double s2 = sample_std(baseline);
    const double pooled = std::sqrt((19.0 * s1 * s1 + 19.0 * s2 * s2) / 38.0);

    std::ostringstream msg;
    msg << "trained=" << mean_trained << "±" << s1 << " random=" << mean_baseline << "±" << s2
        << " pooled=" << pooled;
    detail = msg.str();
    return mean_trained >= mean_baseline + 0.5 * pooled;
  });

  criterion("temperature-and-value-clipping", 5.0, [](std::string& detail) {
    if (temperature(0.0) != 1.0 || temperature(0.29) != 1.0) return false;
    if (temperature(0.3) != 0.7 || temperature(0.59) != 0.7) return false;
    if (temperature(0.6) != 0.5 || temperature(1.0) != 0.5) return false;

    RewardStats stats;
    for (double z : {-5.0, 1.0, 3.0, 11.0}) stats.update(z);
    if (normalize_value(stats.mean(), stats) != 0.0) return false;
    if (normalize_value(stats.mean() + 100.0 * stats.stddev(), stats) != 3.0) return false;
    if (normalize_value(stats.mean() - 100.0 * stats.stddev(), stats) != -3.0) return false;
    RewardStats first;
    first.update(42.0);
    if (normalize_value(42.0, first) != 0.0) return false;
    detail = "three-point schedule; clip at ±3";
    return true;
  });

  criterion("ga-invariants", 300.0, [](std::string& detail) {
    const Network city = desk_city();
    EnvConfig env_cfg;
    env_cfg.routes = 3;
    env_cfg.max_len = 5;
    env_cfg.sim.horizon = 3600;
    const Env env(city.graph, city.demand, env_cfg);

    GAConfig cfg;
    cfg.population = 50;
    cfg.elitism = 5;
    cfg.generations = 20;
    cfg.seed = 99;
    cfg.fitness_sim_seed = 99;
    const GaResult result = ga_optimize(env, cfg);

    for (std::size_t g = 1; g < result.best_history.size(); ++g) {
      if (result.best_history[g] < result.best_history[g - 1] - 1e-12) {
        detail = "best fitness regressed at generation " + std::to_string(g);
        return false;
      }
    }
    for (const RoutePath& route : result.best.routes) {
      if (route.nodes.size() < 2 || route.nodes.front() != city.graph.transit_center()) {
        detail = "invalid route in the best individual";
        return false;
      }
      std::vector<int> sorted = route.nodes;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        detail = "repeated node in a route";
        return false;
      }
      for (std::size_t i = 1; i < route.nodes.size(); ++i) {
        if (!city.graph.has_edge(route.nodes[i - 1], route.nodes[i])) {
          detail = "route uses a missing edge";
          return false;
        }
      }
    }
    std::ostringstream msg;
    msg << "20 generations, best " << result.best_history.front() << " -> "
        << result.best_history.back();
    detail = msg.str();
    return true;
  });

  std::printf("%s: %d criterion(s) failed\n", failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL",
              failures);
  return failures == 0 ? 0 : 1;
}
