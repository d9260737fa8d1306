#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tnd/env.hpp"
#include "tnd/mcts.hpp"
#include "tnd/net.hpp"
#include "tnd/rng.hpp"
#include "tnd/stats.hpp"

namespace tnd {

// Visit-count temperature by training progress in [0,1].
double temperature(double progress);

struct ReplayEntry {
  DesignState state;
  std::vector<double> pi;  // aligned with state.candidates
  double z_raw = 0.0;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(ReplayEntry entry);  // strict FIFO eviction at capacity
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  const ReplayEntry& sample(Rng& rng) const;
  const ReplayEntry& oldest() const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // next eviction slot once full
  std::vector<ReplayEntry> entries_;
};

struct EpisodeDecision {
  DesignState state;
  std::vector<double> pi;
};

struct Episode {
  std::vector<EpisodeDecision> decisions;
  long long env_steps = 0;  // executed actions plus forced finalizations
  double z_raw = 0.0;
  RouteSet design;
  EvaluationResult evaluation;
};

// One full MCTS-guided episode: run search per decision, record (state, pi),
// sample the action, re-root (fresh tree after forced finalizations), and
// evaluate the completed design once.
Episode collect_episode(const Env& env, Evaluator& evaluator, const SearchConfig& cfg, double tau,
                        std::uint64_t sim_seed, Rng& rng, SearchTrace* trace = nullptr);

// Greedy-free episode from the raw masked policy (End-to-End RL evaluation,
// temperature-scaled sampling).
Episode policy_episode(const Env& env, const PolicyValueNet& net, double tau,
                       std::uint64_t sim_seed, Rng& rng);

std::vector<double> gae_advantages(const std::vector<double>& rewards,
                                   const std::vector<double>& values, double gamma, double lambda);

struct TrainRunConfig {
  long long env_step_budget = 1'000'000;
  int workers = 8;
  int episodes_per_worker = 1;
  int train_steps_per_iteration = 200;
  int batch_size = 256;
  double learning_rate = 1e-4;
  std::size_t buffer_capacity = 50'000;
  SearchConfig search;

  double gamma = 0.999;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  int ppo_epochs = 8;
  int ppo_minibatch = 256;
  int ppo_episodes_per_update = 16;
  bool lr_anneal = false;

  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // iterations; 0 keeps only the final checkpoint
  std::string out_dir;       // when nonempty: JSONL log + checkpoints

  void validate() const;
};

struct IterationLog {
  int iteration = 0;
  long long t_env = 0;
  int episodes = 0;
  double mean_raw_z = 0.0;
  double smoothed_z = 0.0;
  double loss_total = 0.0;
  double loss_policy = 0.0;
  double loss_value = 0.0;
  double entropy = 0.0;
  double tau = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  long long t_env = 0;
  int iterations = 0;
  double smoothed_reward = 0.0;
  std::vector<IterationLog> logs;
  std::string final_checkpoint;  // path when out_dir set
};

class AlphaTransitTrainer {
 public:
  AlphaTransitTrainer(const Env& env, NetConfig net_cfg, TrainRunConfig cfg);

  TrainResult train();

  // Pieces exposed for tests and for resumable runs.
  std::vector<Episode> collect_iteration_episodes();
  LossBreakdown train_iteration(Rng& rng);
  void absorb(const Episode& episode);

  PolicyValueNet& net() { return net_; }
  const RewardStats& reward_stats() const { return stats_; }
  ReplayBuffer& buffer() { return buffer_; }
  long long t_env() const { return t_env_; }
  double progress() const;

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

 private:
  const Env* env_;
  TrainRunConfig cfg_;
  PolicyValueNet net_;
  Adam adam_;
  RewardStats stats_;
  ReplayBuffer buffer_;
  Rng rng_;
  long long t_env_ = 0;
  int iteration_ = 0;
  double smoothed_ = 0.0;
  bool smoothed_ready_ = false;
};

class PpoTrainer {
 public:
  PpoTrainer(const Env& env, NetConfig net_cfg, TrainRunConfig cfg);

  TrainResult train();

  PolicyValueNet& net() { return net_; }
  long long t_env() const { return t_env_; }

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

 private:
  struct Trajectory {
    std::vector<PpoSample> samples;  // advantages/targets filled after GAE
    long long env_steps = 0;
    double z_raw = 0.0;
  };
  Trajectory collect_trajectory(std::uint64_t sim_seed, Rng& rng);

  const Env* env_;
  TrainRunConfig cfg_;
  PolicyValueNet net_;
  Adam adam_;
  RewardStats terminal_stats_;
  RewardStats shaping_stats_;
  Rng rng_;
  long long t_env_ = 0;
  int iteration_ = 0;
  double smoothed_ = 0.0;
  bool smoothed_ready_ = false;
};

}  // namespace tnd
