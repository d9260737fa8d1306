#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "tnd/env.hpp"
#include "tnd/mcts.hpp"
#include "tnd/net.hpp"
#include "tnd/rng.hpp"

using namespace tnd;

namespace {

RoadGraph path_graph(int n, int center) {
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i) nodes.push_back({i, 700.0 * i, 0.0});
  for (int i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, 700.0, 10.0});
  return RoadGraph(std::move(nodes), std::move(edges), center);
}

RoadGraph star_graph(int leaves, int center = 0) {
  std::vector<Node> nodes{{0, 0.0, 0.0}};
  std::vector<Edge> edges;
  for (int i = 1; i <= leaves; ++i) {
    nodes.push_back({i, 600.0 * i, 600.0});
    edges.push_back({0, i, 600.0, 10.0});
  }
  return RoadGraph(std::move(nodes), std::move(edges), center);
}

EnvConfig toy_env_config(int routes, int max_len) {
  EnvConfig cfg;
  cfg.routes = routes;
  cfg.max_len = max_len;
  cfg.sim.horizon = 4000;
  return cfg;
}

NetConfig tiny_net_config() {
  NetConfig cfg;
  cfg.block_widths = {8, 6};
  cfg.block_heads = {2, 2};
  cfg.embed_dim = 6;
  cfg.actor_hidden = {8, 6};
  cfg.critic_hidden = {8, 6};
  return cfg;
}

// Exhaustive completion oracle: the exact best terminal reward reachable from
// a state, and the set of optimal first actions at that state. Leaf values
// are served on the tree's normalized scale, as trained backups would be.
struct CompletionOracle {
  const Env* env;
  std::uint64_t sim_seed;
  mutable long long evaluations = 0;
  RewardStats terminal_stats;

  double best_completion(const DesignState& state) const {
    if (state.complete()) {
      ++evaluations;
      return env->evaluate_design(state.partial.completed, sim_seed).reward.total;
    }
    double best = -1e300;
    for (int action : state.candidates) {
      best = std::max(best, best_completion(env->transition(state, action).state));
    }
    return best;
  }

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

  std::vector<int> optimal_first_actions(const DesignState& state) const {
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
  explicit OracleEvaluator(const CompletionOracle& oracle) : oracle_(&oracle) {}
  EvalResult evaluate(const DesignState& state, const Env&, Rng&) override {
    EvalResult result;
    if (!state.candidates.empty()) {
      result.priors.assign(state.candidates.size(),
                           1.0 / static_cast<double>(state.candidates.size()));
    }
    result.value = normalize_value(oracle_->best_completion(state), oracle_->terminal_stats);
    return result;
  }

 private:
  const CompletionOracle* oracle_;
};

SearchNode make_node(std::vector<int> actions, std::vector<double> priors) {
  SearchNode node;
  node.actions = std::move(actions);
  node.priors = std::move(priors);
  node.visits.assign(node.actions.size(), 0);
  node.total_value.assign(node.actions.size(), 0.0);
  node.children.resize(node.actions.size());
  node.expanded = true;
  return node;
}

}  // namespace

TEST_CASE("puct_select examples") {
  SearchNode node = make_node({4, 7}, {0.8, 0.2});
  CHECK(puct_select(node, 1.0) == 0);  // scores (0.8, 0.2) with all N = 0

  node.visits[0] = 1;
  node.total_value[0] = 0.0;
  node.visit_sum = 1;
  // scores: 0.8*sqrt(2)/2 = 0.566 vs 0.2*sqrt(2) = 0.283
  CHECK(puct_select(node, 1.0) == 0);

  // a dominating Q on the other arm wins once the bonus decays
  node.visits[1] = 1;
  node.total_value[1] = 1.0;
  node.visit_sum = 2;
  for (int i = 0; i < 20; ++i) {
    const std::size_t pick = puct_select(node, 1.0);
    node.visits[pick] += 1;
    node.total_value[pick] += pick == 1 ? 1.0 : 0.0;
    node.visit_sum += 1;
  }
  CHECK(node.visits[1] > node.visits[0]);
}

TEST_CASE("puct ties break toward the smallest action id") {
  const SearchNode node = make_node({2, 5, 9}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  CHECK(puct_select(node, 1.0) == 0);
}

TEST_CASE("backpropagation bookkeeping") {
  const RoadGraph graph = star_graph(3);
  const DemandMatrix demand(4, {{1, 2, 20.0}});
  const Env env(graph, demand, toy_env_config(1, 3));
  const PolicyValueNet net(tiny_net_config(), 5);
  NeuralEvaluator evaluator(net);

  SearchConfig cfg;
  cfg.n_iter = 25;
  SearchTree tree(env, evaluator, cfg);
  tree.reset_root(env.initial_state(3));
  Rng rng(1);
  tree.run_search(rng);

  const SearchNode& root = tree.root();
  int total = 0;
  for (std::size_t i = 0; i < root.actions.size(); ++i) {
    total += root.visits[i];
    if (root.visits[i] > 0) {
      CHECK(root.q(i) == doctest::Approx(root.total_value[i] / root.visits[i]));
    } else {
      CHECK(root.q(i) == 0.0);
    }
  }
  CHECK(total == 25);  // one root increment per simulation
  CHECK(root.visit_sum == 25);

  double prior_sum = 0.0;
  for (double p : root.priors) prior_sum += p;
  CHECK(prior_sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("manual backup arithmetic") {
  SearchNode node = make_node({0, 1}, {0.5, 0.5});
  node.visits[0] += 1;
  node.total_value[0] += 0.5;
  node.visit_sum += 1;
  CHECK(node.q(0) == doctest::Approx(0.5));

  node.visits[1] += 1;
  node.total_value[1] += 1.0;
  node.visits[1] += 1;
  node.total_value[1] += 0.0;
  node.visit_sum += 2;
  CHECK(node.q(1) == doctest::Approx(0.5));  // running mean of 1 and 0
}

TEST_CASE("terminal leaves are evaluated by the critic without children") {
  const RoadGraph graph = path_graph(3, 1);
  const DemandMatrix demand(3, {{0, 2, 10.0}});
  const Env env(graph, demand, toy_env_config(1, 2));
  const PolicyValueNet net(tiny_net_config(), 9);
  NeuralEvaluator evaluator(net);

  DesignState state = env.initial_state(1);
  const DesignState terminal = env.transition(state, 0).state;
  REQUIRE(terminal.complete());

  Rng rng(2);
  const EvalResult eval = evaluator.evaluate(terminal, env, rng);
  CHECK(eval.priors.empty());
  CHECK(eval.value == doctest::Approx(net.forward(env.encode(terminal)).value));
}

TEST_CASE("uniform rollout evaluator priors") {
  const RoadGraph graph = star_graph(4);
  const DemandMatrix demand(5, {{1, 2, 12.0}});
  const Env env(graph, demand, toy_env_config(1, 3));
  RewardStats stats;
  RolloutEvaluator evaluator(stats);
  Rng rng(3);
  const EvalResult eval = evaluator.evaluate(env.initial_state(1), env, rng);
  REQUIRE(eval.priors.size() == 4);
  for (double p : eval.priors) CHECK(p == doctest::Approx(0.25));
  CHECK(stats.count() == 1);  // one full simulation happened
  CHECK(evaluator.evaluations() == 1);
}

TEST_CASE("apply_root_noise") {
  const std::vector<double> priors{0.7, 0.2, 0.1};
  {
    Rng rng(5);
    CHECK(apply_root_noise(priors, 0.3, 0.0, rng) == priors);
  }
  {
    Rng a(5), b(5);
    const auto draw = b.dirichlet(0.3, 3);
    const auto mixed = apply_root_noise(priors, 0.3, 1.0, a);
    for (std::size_t i = 0; i < 3; ++i) CHECK(mixed[i] == doctest::Approx(draw[i]));
  }
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto mixed = apply_root_noise(priors, 0.3, 0.25, rng);
    double sum = 0.0;
    for (double p : mixed) sum += p;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("root_policy from visit counts") {
  const auto pi1 = visit_count_policy({3, 1}, 1.0);
  CHECK(pi1[0] == doctest::Approx(0.75));
  CHECK(pi1[1] == doctest::Approx(0.25));

  const auto pi05 = visit_count_policy({3, 1}, 0.5);
  CHECK(pi05[0] == doctest::Approx(0.9));
  CHECK(pi05[1] == doctest::Approx(0.1));

  const auto pi01 = visit_count_policy({3, 1}, 0.1);
  CHECK(pi01[0] == doctest::Approx(59049.0 / 59050.0).epsilon(1e-9));
  CHECK(pi01[1] == doctest::Approx(1.0 / 59050.0).epsilon(1e-6));
}

TEST_CASE("reroot keeps subtree statistics; unknown children start fresh") {
  const RoadGraph graph = star_graph(3);
  const DemandMatrix demand(4, {{1, 2, 15.0}, {2, 3, 9.0}});
  const Env env(graph, demand, toy_env_config(2, 3));
  const PolicyValueNet net(tiny_net_config(), 13);
  NeuralEvaluator evaluator(net);

  SearchConfig cfg;
  cfg.n_iter = 60;
  SearchTree tree(env, evaluator, cfg);
  tree.reset_root(env.initial_state(4));
  Rng rng(7);
  tree.run_search(rng);

  // find the most-visited child and remember its subtree statistics
  const SearchNode& root = tree.root();
  std::size_t best = 0;
  for (std::size_t i = 1; i < root.actions.size(); ++i) {
    if (root.visits[i] > root.visits[best]) best = i;
  }
  REQUIRE(root.children[best] != nullptr);
  const std::vector<int> expected_visits = root.children[best]->visits;
  const bool was_expanded = root.children[best]->expanded;
  const int action = root.actions[best];

  tree.reroot(action);
  CHECK(tree.root().expanded == was_expanded);
  if (was_expanded) CHECK(tree.root().visits == expected_visits);

  // rerooting through an unvisited action yields an unexpanded root
  SearchTree fresh(env, evaluator, cfg);
  fresh.reset_root(env.initial_state(4));
  fresh.reroot(2);
  CHECK(fresh.root().expanded == false);
  // a star leaf is a dead end: the route is force-finalized in the successor
  REQUIRE(fresh.root().state.partial.completed.size() == 1);
  CHECK(fresh.root().state.partial.completed[0].nodes == std::vector<int>{0, 2});
}

TEST_CASE("search is deterministic given the seed") {
  const RoadGraph graph = star_graph(4);
  const DemandMatrix demand(5, {{1, 2, 30.0}, {3, 4, 5.0}});
  const Env env(graph, demand, toy_env_config(2, 3));
  const PolicyValueNet net(tiny_net_config(), 17);
  NeuralEvaluator evaluator(net);

  SearchConfig cfg;
  cfg.n_iter = 80;
  cfg.add_noise = true;

  std::vector<int> visits_a, visits_b;
  {
    SearchTree tree(env, evaluator, cfg);
    tree.reset_root(env.initial_state(9));
    Rng rng(123);
    tree.run_search(rng);
    visits_a = tree.root().visits;
  }
  {
    SearchTree tree(env, evaluator, cfg);
    tree.reset_root(env.initial_state(9));
    Rng rng(123);
    tree.run_search(rng);
    visits_b = tree.root().visits;
  }
  CHECK(visits_a == visits_b);
}

TEST_CASE("with a perfect value oracle the most-visited root action is optimal") {
  // 4-node path, hub at one end: going toward the demand is strictly better.
  const RoadGraph graph = path_graph(4, 1);
  const DemandMatrix demand(4, {{2, 3, 40.0}, {3, 2, 25.0}});
  const Env env(graph, demand, toy_env_config(1, 3));

  CompletionOracle oracle{&env, 33, 0, {}};
  const DesignState root_state = env.initial_state(33);
  oracle.prepare(root_state);
  const std::vector<int> optimal = oracle.optimal_first_actions(root_state);
  REQUIRE(!optimal.empty());

  OracleEvaluator evaluator(oracle);
  SearchConfig cfg;
  cfg.n_iter = 200;
  cfg.add_noise = true;

  int hits = 0;
  const int runs = 20;
  for (int run = 0; run < runs; ++run) {
    SearchTree tree(env, evaluator, cfg);
    tree.reset_root(root_state);
    Rng rng(1000 + static_cast<std::uint64_t>(run));
    tree.run_search(rng);
    const SearchNode& root = tree.root();
    std::size_t best = 0;
    for (std::size_t i = 1; i < root.actions.size(); ++i) {
      if (root.visits[i] > root.visits[best]) best = i;
    }
    if (std::find(optimal.begin(), optimal.end(), root.actions[best]) != optimal.end()) ++hits;
  }
  CHECK(hits >= 19);  // 95% of seeded runs
}

TEST_CASE("search trace serialization") {
  SearchTrace trace;
  trace.decisions.push_back({{1, 2}, {0.5, 0.5}, {7, 3}, 1});
  const std::string text = search_trace_to_json(trace);
  CHECK(text.find("\"chosen\": 1") != std::string::npos);
  CHECK(text.find("\"visits\"") != std::string::npos);
}
