#include "tnd/mcts.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "tnd/error.hpp"

namespace tnd {

void SearchConfig::validate() const {
  if (n_iter < 1) fail(errc::invalid_input, "n_iter must be at least 1");
  if (!(c_puct >= 0.0)) fail(errc::invalid_input, "c_puct must be nonnegative");
  if (!(dirichlet_alpha > 0.0)) fail(errc::invalid_input, "dirichlet_alpha must be positive");
  if (dirichlet_eps < 0.0 || dirichlet_eps > 1.0) {
    fail(errc::invalid_input, "dirichlet_eps must lie in [0,1]");
  }
  if (!(temperature > 0.0)) fail(errc::invalid_input, "temperature must be positive");
}

EvalResult NeuralEvaluator::evaluate(const DesignState& state, const Env& env, Rng&) {
  const StateEncoding enc = env.encode(state);
  const NetOutput out = net_->forward(enc);
  EvalResult result;
  result.value = out.value;
  if (!state.candidates.empty()) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(enc.node_count), 0);
    for (int c : state.candidates) mask[static_cast<std::size_t>(c)] = 1;
    const std::vector<double> probs = masked_policy(out.logits, mask);
    result.priors.reserve(state.candidates.size());
    for (int c : state.candidates) result.priors.push_back(probs[static_cast<std::size_t>(c)]);
  }
  return result;
}

EvalResult RolloutEvaluator::evaluate(const DesignState& state, const Env& env, Rng& rng) {
  ++evaluations_;
  EvalResult result;
  if (!state.candidates.empty()) {
    result.priors.assign(state.candidates.size(),
                         1.0 / static_cast<double>(state.candidates.size()));
  }
  DesignState cursor = state;
  while (!cursor.complete()) {
    const int action = cursor.candidates[rng.uniform_index(cursor.candidates.size())];
    cursor = env.transition(cursor, action).state;
  }
  const EvaluationResult eval = env.evaluate_design(cursor.partial.completed, cursor.sim_seed);
  stats_->update(eval.reward.total);
  result.value = normalize_value(eval.reward.total, *stats_);
  return result;
}

std::size_t puct_select(const SearchNode& node, double c) {
  if (node.actions.empty()) fail(errc::invalid_state, "puct_select on a node without actions");
  const double sqrt_total = std::sqrt(1.0 + static_cast<double>(node.visit_sum));
  std::size_t best = 0;
  double best_score = -1e300;
  for (std::size_t i = 0; i < node.actions.size(); ++i) {
    const double score =
        node.q(i) + c * node.priors[i] * sqrt_total / (1.0 + static_cast<double>(node.visits[i]));
    if (score > best_score) {  // strict: ties keep the smallest action id
      best_score = score;
      best = i;
    }
  }
  return best;
}

std::vector<double> visit_count_policy(const std::vector<int>& visits, double tau) {
  if (visits.empty()) fail(errc::invalid_input, "empty visit vector");
  if (!(tau > 0.0)) fail(errc::invalid_input, "temperature must be positive");
  int max_visits = 0;
  int total = 0;
  for (int n : visits) {
    max_visits = std::max(max_visits, n);
    total += n;
  }
  if (total < 1) fail(errc::invalid_input, "visit counts must sum to at least 1");
  std::vector<double> pi(visits.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < visits.size(); ++i) {
    if (visits[i] > 0) {
      pi[i] = std::pow(static_cast<double>(visits[i]) / static_cast<double>(max_visits), 1.0 / tau);
      sum += pi[i];
    }
  }
  for (double& p : pi) p /= sum;
  return pi;
}

std::vector<double> apply_root_noise(const std::vector<double>& priors, double alpha, double eps,
                                     Rng& rng) {
  const std::vector<double> noise = rng.dirichlet(alpha, priors.size());
  std::vector<double> mixed(priors.size(), 0.0);
  for (std::size_t i = 0; i < priors.size(); ++i) {
    mixed[i] = (1.0 - eps) * priors[i] + eps * noise[i];
  }
  return mixed;
}

SearchTree::SearchTree(const Env& env, Evaluator& evaluator, SearchConfig cfg)
    : env_(&env), evaluator_(&evaluator), cfg_(std::move(cfg)) {
  cfg_.validate();
}

void SearchTree::reset_root(DesignState state) {
  root_ = std::make_unique<SearchNode>();
  root_->state = std::move(state);
  root_->terminal = root_->state.complete();
}

SearchNode* SearchTree::descend(SearchNode* node, std::size_t action_index) {
  auto& child = node->children[action_index];
  if (!child) {
    const StepOutcome out = env_->transition(node->state, node->actions[action_index]);
    child = std::make_unique<SearchNode>();
    child->state = out.state;
    child->terminal = out.episode_done;
  }
  return child.get();
}

double SearchTree::evaluate_leaf(SearchNode* node, Rng& rng) {
  if (node->terminal) {
    return evaluator_->evaluate(node->state, *env_, rng).value;
  }
  const EvalResult eval = evaluator_->evaluate(node->state, *env_, rng);
  node->actions = node->state.candidates;
  node->priors = eval.priors;
  node->visits.assign(node->actions.size(), 0);
  node->total_value.assign(node->actions.size(), 0.0);
  node->children.resize(node->actions.size());
  node->expanded = true;
  return eval.value;
}

void SearchTree::run_search(Rng& rng) {
  if (!root_) fail(errc::invalid_state, "run_search without a root");
  if (root_->terminal) fail(errc::invalid_state, "run_search from a terminal state");
  if (!root_->expanded) evaluate_leaf(root_.get(), rng);
  if (cfg_.add_noise) {
    root_->priors =
        apply_root_noise(root_->priors, cfg_.dirichlet_alpha, cfg_.dirichlet_eps, rng);
  }

  std::vector<std::pair<SearchNode*, std::size_t>> path;
  for (int sim = 0; sim < cfg_.n_iter; ++sim) {
    path.clear();
    SearchNode* node = root_.get();
    while (node->expanded && !node->terminal) {
      const std::size_t choice = puct_select(*node, cfg_.c_puct);
      path.emplace_back(node, choice);
      node = descend(node, choice);
    }
    const double value = evaluate_leaf(node, rng);
    for (auto& [parent, action_index] : path) {
      parent->visits[action_index] += 1;
      parent->total_value[action_index] += value;
      parent->visit_sum += 1;
    }
  }
}

std::vector<double> SearchTree::root_policy(double tau) const {
  if (!root_ || !root_->expanded) fail(errc::invalid_state, "root_policy before run_search");
  return visit_count_policy(root_->visits, tau);
}

void SearchTree::reroot(int action) {
  if (!root_) fail(errc::invalid_state, "reroot without a root");
  std::unique_ptr<SearchNode> next;
  if (root_->expanded) {
    for (std::size_t i = 0; i < root_->actions.size(); ++i) {
      if (root_->actions[i] == action && root_->children[i]) {
        next = std::move(root_->children[i]);
        break;
      }
    }
  }
  if (!next) {
    const StepOutcome out = env_->transition(root_->state, action);
    next = std::make_unique<SearchNode>();
    next->state = out.state;
    next->terminal = out.episode_done;
  }
  root_ = std::move(next);
}

std::string search_trace_to_json(const SearchTrace& trace) {
  nlohmann::json doc;
  doc["decisions"] = nlohmann::json::array();
  for (const SearchDecision& d : trace.decisions) {
    doc["decisions"].push_back({{"candidates", d.candidates},
                                {"priors", d.priors},
                                {"visits", d.visits},
                                {"chosen", d.chosen}});
  }
  return doc.dump(2);
}

}  // namespace tnd
