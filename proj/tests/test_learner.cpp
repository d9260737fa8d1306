#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "tnd/baselines.hpp"
#include "tnd/citygen.hpp"
#include "tnd/env.hpp"
#include "tnd/trainer.hpp"

using namespace tnd;

namespace {

Network toy_city(std::uint64_t seed = 3) {
  CityGenParams params;
  params.kind = "grid";
  params.rows = 3;
  params.cols = 3;
  params.spacing = 700.0;
  params.demand_pairs = 14;
  params.rate_min = 10.0;
  params.rate_max = 80.0;
  params.seed = seed;
  return generate_city(params);
}

EnvConfig toy_env_config(int routes = 2, int max_len = 3) {
  EnvConfig cfg;
  cfg.routes = routes;
  cfg.max_len = max_len;
  cfg.sim.horizon = 3600;
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

TrainRunConfig tiny_train_config() {
  TrainRunConfig cfg;
  cfg.env_step_budget = 24;
  cfg.workers = 1;
  cfg.episodes_per_worker = 2;
  cfg.train_steps_per_iteration = 4;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e-3;
  cfg.buffer_capacity = 500;
  cfg.search.n_iter = 4;
  cfg.seed = 11;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("normalize_value examples") {
  RewardStats stats;
  stats.update(5.0);
  CHECK(normalize_value(5.0, stats) == 0.0);  // first-ever sample is its own mean

  RewardStats spread;
  for (double z : {0.0, 2.0, 4.0, 6.0}) spread.update(z);
  CHECK(normalize_value(spread.mean(), spread) == 0.0);
  CHECK(normalize_value(spread.mean() + 10.0 * spread.stddev(), spread) == 3.0);
  CHECK(normalize_value(spread.mean() - 10.0 * spread.stddev(), spread) == -3.0);
}

TEST_CASE("temperature schedule") {
  CHECK(temperature(0.1) == 1.0);
  CHECK(temperature(0.4) == 0.7);
  CHECK(temperature(0.95) == 0.5);
  CHECK(temperature(0.0) == 1.0);
  CHECK(temperature(0.3) == 0.7);
  CHECK(temperature(0.6) == 0.5);
  CHECK(temperature(1.0) == 0.5);
  CHECK_THROWS(temperature(1.5));
}

TEST_CASE("reward statistics match a two-pass reference") {
  Rng rng(9);
  std::vector<double> stream;
  RewardStats stats;
  for (int i = 0; i < 500; ++i) {
    const double z = rng.uniform(-50.0, 120.0);
    stream.push_back(z);
    stats.update(z);
  }
  double mean = 0.0;
  for (double z : stream) mean += z;
  mean /= static_cast<double>(stream.size());
  double var = 0.0;
  for (double z : stream) var += (z - mean) * (z - mean);
  var /= static_cast<double>(stream.size());
  CHECK(stats.mean() == doctest::Approx(mean).epsilon(1e-9));
  CHECK(stats.variance() == doctest::Approx(var).epsilon(1e-9));
}

TEST_CASE("replay buffer evicts strictly FIFO") {
  ReplayBuffer buffer(3);
  for (int i = 0; i < 5; ++i) {
    ReplayEntry entry;
    entry.z_raw = static_cast<double>(i);
    buffer.push(entry);
  }
  CHECK(buffer.size() == 3);
  CHECK(buffer.oldest().z_raw == 2.0);

  // uniform sampling touches every element
  Rng rng(4);
  std::set<double> seen;
  for (int i = 0; i < 200; ++i) seen.insert(buffer.sample(rng).z_raw);
  CHECK(seen == std::set<double>{2.0, 3.0, 4.0});
}

TEST_CASE("collect_episode: decision count, support, shared terminal reward") {
  const Network city = toy_city();
  const Env env(city.graph, city.demand, toy_env_config(1, 3));
  const PolicyValueNet net(tiny_net_config(), 21);
  NeuralEvaluator evaluator(net);
  SearchConfig cfg;
  cfg.n_iter = 8;

  Rng rng(5);
  const Episode episode = collect_episode(env, evaluator, cfg, 1.0, 7, rng);
  CHECK(episode.decisions.size() <= 2);  // K=1, L_max=3
  CHECK(episode.env_steps >= static_cast<long long>(episode.decisions.size()));
  for (const EpisodeDecision& d : episode.decisions) {
    CHECK(d.pi.size() == d.state.candidates.size());
    double sum = 0.0;
    for (double p : d.pi) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(episode.design.size() == 1);
  CHECK(episode.evaluation.reward.total == doctest::Approx(episode.z_raw));
}

TEST_CASE("env-step accounting includes forced finalizations") {
  // star graph: every route dead-ends after one action
  std::vector<Node> nodes{{0, 0, 0}, {1, 700, 0}, {2, 0, 700}, {3, -700, 0}};
  std::vector<Edge> edges{{0, 1, 700, 10}, {0, 2, 700, 10}, {0, 3, 700, 10}};
  const RoadGraph graph(std::move(nodes), std::move(edges), 0);
  const DemandMatrix demand(4, {{1, 2, 30.0}});
  EnvConfig env_cfg = toy_env_config(2, 4);
  const Env env(graph, demand, env_cfg);
  const PolicyValueNet net(tiny_net_config(), 23);
  NeuralEvaluator evaluator(net);
  SearchConfig cfg;
  cfg.n_iter = 4;

  Rng rng(6);
  const Episode episode = collect_episode(env, evaluator, cfg, 1.0, 3, rng);
  CHECK(episode.decisions.size() == 2);  // one action per route
  CHECK(episode.env_steps == 4);         // each action is followed by a forced finalization
}

TEST_CASE("train_iteration: finite losses, exact decomposition, descent on a fixed target") {
  const Network city = toy_city();
  const Env env(city.graph, city.demand, toy_env_config(1, 3));
  TrainRunConfig cfg = tiny_train_config();
  cfg.train_steps_per_iteration = 1;
  cfg.batch_size = 8;
  AlphaTransitTrainer trainer(env, tiny_net_config(), cfg);

  NeuralEvaluator evaluator(trainer.net());
  SearchConfig search_cfg = cfg.search;
  Rng rng(8);
  for (int e = 0; e < 3; ++e) {
    trainer.absorb(collect_episode(env, evaluator, search_cfg, 1.0,
                                   static_cast<std::uint64_t>(e), rng));
  }

  Rng train_rng(19);
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 25; ++step) {
    const LossBreakdown loss = trainer.train_iteration(train_rng);
    CHECK(std::isfinite(loss.total));
    CHECK(loss.total == doctest::Approx(loss.policy + loss.value).epsilon(1e-12));
    if (step == 0) first = loss.total;
    last = loss.total;
  }
  CHECK(last < first);  // the fixed buffer target is learnable
}

TEST_CASE("gae advantages") {
  // identity case: rewards consistent with the value function give zero advantage
  const std::vector<double> values{2.0, 1.5, 1.0};
  std::vector<double> rewards(3);
  const double gamma = 0.9;
  for (std::size_t i = 0; i < 3; ++i) {
    const double next = i + 1 < 3 ? values[i + 1] : 0.0;
    rewards[i] = values[i] - gamma * next;
  }
  for (double a : gae_advantages(rewards, values, gamma, 0.95)) {
    CHECK(a == doctest::Approx(0.0));
  }

  // gamma = lambda = 1: advantage is the undiscounted return minus the baseline
  const std::vector<double> r{1.0, 2.0, 3.0};
  const std::vector<double> v{0.5, 0.25, 0.125};
  const auto adv = gae_advantages(r, v, 1.0, 1.0);
  CHECK(adv[0] == doctest::Approx(6.0 - 0.5));
  CHECK(adv[1] == doctest::Approx(5.0 - 0.25));
  CHECK(adv[2] == doctest::Approx(3.0 - 0.125));

  // one-step base case
  const auto single = gae_advantages({4.0}, {1.5}, 0.999, 0.95);
  CHECK(single[0] == doctest::Approx(4.0 - 1.5));
}

TEST_CASE("fixed seed and one worker reproduce checkpoints bit for bit") {
  const Network city = toy_city();
  const Env env(city.graph, city.demand, toy_env_config(2, 3));
  const auto dir = std::filesystem::temp_directory_path() / "tnd_ckpt_test";
  std::filesystem::create_directories(dir);

  std::string contents[2];
  for (int run = 0; run < 2; ++run) {
    AlphaTransitTrainer trainer(env, tiny_net_config(), tiny_train_config());
    const TrainResult result = trainer.train();
    CHECK(result.t_env >= 24);
    const std::string path = (dir / ("ckpt" + std::to_string(run) + ".json")).string();
    trainer.save_checkpoint(path);
    contents[run] = slurp(path);
  }
  CHECK(contents[0] == contents[1]);
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint resume restores the step counter") {
  const Network city = toy_city();
  const Env env(city.graph, city.demand, toy_env_config(2, 3));
  const auto dir = std::filesystem::temp_directory_path() / "tnd_resume_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "ckpt.json").string();

  long long steps_before = 0;
  {
    AlphaTransitTrainer trainer(env, tiny_net_config(), tiny_train_config());
    trainer.train();
    steps_before = trainer.t_env();
    trainer.save_checkpoint(path);
  }
  {
    TrainRunConfig cfg = tiny_train_config();
    cfg.env_step_budget = steps_before + 8;
    AlphaTransitTrainer trainer(env, tiny_net_config(), cfg);
    trainer.load_checkpoint(path);
    CHECK(trainer.t_env() == steps_before);
    const TrainResult result = trainer.train();
    CHECK(result.t_env > steps_before);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("budget zero exits immediately with an initialization checkpoint") {
  const Network city = toy_city();
  const Env env(city.graph, city.demand, toy_env_config(2, 3));
  const auto dir = std::filesystem::temp_directory_path() / "tnd_zero_budget";
  std::filesystem::create_directories(dir);

  TrainRunConfig cfg = tiny_train_config();
  cfg.env_step_budget = 0;
  cfg.out_dir = dir.string();
  AlphaTransitTrainer trainer(env, tiny_net_config(), cfg);
  const TrainResult result = trainer.train();
  CHECK(result.t_env == 0);
  CHECK(result.iterations == 0);
  CHECK(std::filesystem::exists(result.final_checkpoint));
  std::filesystem::remove_all(dir);
}

TEST_CASE("ppo trainer runs to its budget with monotone step counts") {
  const Network city = toy_city();
  const Env env(city.graph, city.demand, toy_env_config(2, 3));
  TrainRunConfig cfg = tiny_train_config();
  cfg.env_step_budget = 30;
  cfg.ppo_episodes_per_update = 2;
  cfg.ppo_epochs = 2;
  cfg.ppo_minibatch = 8;
  PpoTrainer trainer(env, tiny_net_config(), cfg);
  const TrainResult result = trainer.train();
  CHECK(result.t_env >= 30);
  long long prev = 0;
  for (const IterationLog& log : result.logs) {
    CHECK(log.t_env > prev);
    prev = log.t_env;
    CHECK(std::isfinite(log.loss_total));
  }
}

TEST_CASE("multi-worker collection merges deterministically") {
  const Network city = toy_city();
  const Env env(city.graph, city.demand, toy_env_config(2, 3));
  TrainRunConfig cfg = tiny_train_config();
  cfg.workers = 3;
  cfg.episodes_per_worker = 1;

  std::vector<double> z_a, z_b;
  {
    AlphaTransitTrainer trainer(env, tiny_net_config(), cfg);
    for (const Episode& e : trainer.collect_iteration_episodes()) z_a.push_back(e.z_raw);
  }
  {
    AlphaTransitTrainer trainer(env, tiny_net_config(), cfg);
    for (const Episode& e : trainer.collect_iteration_episodes()) z_b.push_back(e.z_raw);
  }
  CHECK(z_a == z_b);
  CHECK(z_a.size() == 3);
}
