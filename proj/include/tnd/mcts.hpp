#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tnd/env.hpp"
#include "tnd/net.hpp"
#include "tnd/rng.hpp"
#include "tnd/stats.hpp"

namespace tnd {

struct SearchConfig {
  int n_iter = 500;
  double c_puct = 1.0;
  double dirichlet_alpha = 0.3;
  double dirichlet_eps = 0.25;
  bool add_noise = false;  // training only; evaluation keeps priors clean
  double temperature = 1.0;

  void validate() const;
};

struct EvalResult {
  std::vector<double> priors;  // aligned with the state's candidate set
  double value = 0.0;
};

class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual EvalResult evaluate(const DesignState& state, const Env& env, Rng& rng) = 0;
};

// Priors from the masked policy head, leaf value from the critic.
class NeuralEvaluator : public Evaluator {
 public:
  explicit NeuralEvaluator(const PolicyValueNet& net) : net_(&net) {}
  EvalResult evaluate(const DesignState& state, const Env& env, Rng& rng) override;

 private:
  const PolicyValueNet* net_;
};

// Uniform priors; value from completing the design with random valid actions
// and one full simulation, normalized through the shared reward statistics.
class RolloutEvaluator : public Evaluator {
 public:
  explicit RolloutEvaluator(RewardStats& stats) : stats_(&stats) {}
  EvalResult evaluate(const DesignState& state, const Env& env, Rng& rng) override;
  long long evaluations() const { return evaluations_; }

 private:
  RewardStats* stats_;
  long long evaluations_ = 0;
};

struct SearchNode {
  DesignState state;
  bool expanded = false;
  bool terminal = false;
  std::vector<int> actions;  // state.candidates at expansion
  std::vector<double> priors;
  std::vector<int> visits;
  std::vector<double> total_value;
  std::vector<std::unique_ptr<SearchNode>> children;
  int visit_sum = 0;

  double q(std::size_t i) const {
    return visits[i] > 0 ? total_value[i] / static_cast<double>(visits[i]) : 0.0;
  }
};

// Index of the PUCT argmax; ties resolve to the smallest action id.
std::size_t puct_select(const SearchNode& node, double c);

// pi(a) proportional to visits^(1/tau).
std::vector<double> visit_count_policy(const std::vector<int>& visits, double tau);

// (1 - eps) * priors + eps * Dirichlet(alpha).
std::vector<double> apply_root_noise(const std::vector<double>& priors, double alpha, double eps,
                                     Rng& rng);

class SearchTree {
 public:
  SearchTree(const Env& env, Evaluator& evaluator, SearchConfig cfg);

  void reset_root(DesignState state);
  const SearchNode& root() const { return *root_; }
  bool has_root() const { return root_ != nullptr; }

  // Runs cfg.n_iter simulations from the root (expanding it first when
  // needed); applies Dirichlet noise once when configured.
  void run_search(Rng& rng);

  std::vector<double> root_policy(double tau) const;

  // Promote the chosen child, keeping its subtree statistics; unknown or
  // unvisited children start a fresh tree at the successor state.
  void reroot(int action);

 private:
  SearchNode* descend(SearchNode* node, std::size_t action_index);
  double evaluate_leaf(SearchNode* node, Rng& rng);

  const Env* env_;
  Evaluator* evaluator_;
  SearchConfig cfg_;
  std::unique_ptr<SearchNode> root_;
};

struct SearchDecision {
  std::vector<int> candidates;
  std::vector<double> priors;
  std::vector<int> visits;
  int chosen = -1;
};

struct SearchTrace {
  std::vector<SearchDecision> decisions;
};

std::string search_trace_to_json(const SearchTrace& trace);

}  // namespace tnd
