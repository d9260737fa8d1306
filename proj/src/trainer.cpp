#include "tnd/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "tnd/error.hpp"

namespace tnd {

double temperature(double progress) {
  if (!(progress >= 0.0 && progress <= 1.0)) {
    fail(errc::invalid_input, "training progress must lie in [0,1]");
  }
  if (progress < 0.3) return 1.0;
  if (progress < 0.6) return 0.7;
  return 0.5;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ < 1) fail(errc::invalid_input, "replay buffer capacity must be positive");
}

void ReplayBuffer::push(ReplayEntry entry) {
  if (entries_.size() < capacity_) {
    entries_.push_back(std::move(entry));
    return;
  }
  entries_[head_] = std::move(entry);
  head_ = (head_ + 1) % capacity_;
}

const ReplayEntry& ReplayBuffer::sample(Rng& rng) const {
  if (entries_.empty()) fail(errc::invalid_state, "sampling from an empty replay buffer");
  return entries_[rng.uniform_index(entries_.size())];
}

const ReplayEntry& ReplayBuffer::oldest() const {
  if (entries_.empty()) fail(errc::invalid_state, "empty replay buffer");
  return entries_.size() < capacity_ ? entries_.front() : entries_[head_];
}

namespace {

std::size_t sample_index(const std::vector<double>& pi, Rng& rng) {
  const double u = rng.uniform01();
  double acc = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    acc += pi[i];
    if (u < acc) return i;
  }
  return pi.size() - 1;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = seed ^ (a * 0x9e3779b97f4a7c15ULL) ^ (b * 0xbf58476d1ce4e5b9ULL);
  x ^= x >> 30;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 27;
  return x;
}

}  // namespace

Episode collect_episode(const Env& env, Evaluator& evaluator, const SearchConfig& cfg, double tau,
                        std::uint64_t sim_seed, Rng& rng, SearchTrace* trace) {
  Episode episode;
  DesignState state = env.initial_state(sim_seed);
  SearchTree tree(env, evaluator, cfg);
  tree.reset_root(state);

  while (!state.complete()) {
    tree.run_search(rng);
    const std::vector<double> pi = tree.root_policy(tau);
    episode.decisions.push_back({state, pi});

    const std::size_t choice = sample_index(pi, rng);
    const int action = state.candidates[choice];
    if (trace) {
      SearchDecision d;
      d.candidates = tree.root().actions;
      d.priors = tree.root().priors;
      d.visits = tree.root().visits;
      d.chosen = action;
      trace->decisions.push_back(std::move(d));
    }

    const StepOutcome out = env.step(state, action);
    episode.env_steps += 1 + out.forced_finalizations;
    if (out.episode_done) {
      episode.z_raw = *out.terminal_reward;
      episode.design = out.state.partial.completed;
      episode.evaluation = *out.evaluation;
    } else if (out.forced_finalizations > 0) {
      tree.reset_root(out.state);  // forced successor starts a fresh tree
    } else {
      tree.reroot(action);
    }
    state = out.state;
  }
  return episode;
}

Episode policy_episode(const Env& env, const PolicyValueNet& net, double tau,
                       std::uint64_t sim_seed, Rng& rng) {
  Episode episode;
  DesignState state = env.initial_state(sim_seed);
  while (!state.complete()) {
    const StateEncoding enc = env.encode(state);
    const NetOutput out = net.forward(enc);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(enc.node_count), 0);
    for (int c : state.candidates) mask[static_cast<std::size_t>(c)] = 1;
    const std::vector<double> probs = masked_policy(out.logits, mask);
    std::vector<double> pi(state.candidates.size(), 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < state.candidates.size(); ++i) {
      pi[i] = std::pow(probs[static_cast<std::size_t>(state.candidates[i])], 1.0 / tau);
      sum += pi[i];
    }
    for (double& p : pi) p /= sum;
    episode.decisions.push_back({state, pi});

    const int action = state.candidates[sample_index(pi, rng)];
    const StepOutcome step = env.step(state, action);
    episode.env_steps += 1 + step.forced_finalizations;
    if (step.episode_done) {
      episode.z_raw = *step.terminal_reward;
      episode.design = step.state.partial.completed;
      episode.evaluation = *step.evaluation;
    }
    state = step.state;
  }
  return episode;
}

std::vector<double> gae_advantages(const std::vector<double>& rewards,
                                   const std::vector<double>& values, double gamma,
                                   double lambda) {
  if (rewards.size() != values.size()) fail(errc::invalid_input, "GAE input size mismatch");
  std::vector<double> adv(rewards.size(), 0.0);
  double carry = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    const double next_value = i + 1 < values.size() ? values[i + 1] : 0.0;
    const double delta = rewards[i] + gamma * next_value - values[i];
    carry = delta + gamma * lambda * carry;
    adv[i] = carry;
  }
  return adv;
}

void TrainRunConfig::validate() const {
  if (env_step_budget < 0) fail(errc::invalid_input, "step budget must be nonnegative");
  if (workers < 1) fail(errc::invalid_input, "worker count must be positive");
  if (episodes_per_worker < 1) fail(errc::invalid_input, "episodes per worker must be positive");
  if (train_steps_per_iteration < 0 || batch_size < 1) {
    fail(errc::invalid_input, "bad optimization schedule");
  }
  if (!(learning_rate > 0.0)) fail(errc::invalid_input, "learning rate must be positive");
  if (ppo_epochs < 1 || ppo_minibatch < 1 || ppo_episodes_per_update < 1) {
    fail(errc::invalid_input, "bad PPO schedule");
  }
  search.validate();
}

namespace {

void append_jsonl(const std::string& out_dir, const IterationLog& log) {
  if (out_dir.empty()) return;
  std::ofstream out(out_dir + "/train_log.jsonl", std::ios::app);
  nlohmann::json doc{{"iteration", log.iteration},
                     {"t_env", log.t_env},
                     {"episodes", log.episodes},
                     {"mean_raw_z", log.mean_raw_z},
                     {"smoothed_z", log.smoothed_z},
                     {"loss_total", log.loss_total},
                     {"loss_policy", log.loss_policy},
                     {"loss_value", log.loss_value},
                     {"entropy", log.entropy},
                     {"tau", log.tau},
                     {"wall_ms", log.wall_ms}};
  out << doc.dump() << "\n";
}

double update_smoothed(double& smoothed, bool& ready, double value) {
  smoothed = ready ? 0.9 * smoothed + 0.1 * value : value;
  ready = true;
  return smoothed;
}

}  // namespace

AlphaTransitTrainer::AlphaTransitTrainer(const Env& env, NetConfig net_cfg, TrainRunConfig cfg)
    : env_(&env),
      cfg_(std::move(cfg)),
      net_(std::move(net_cfg), cfg_.seed),
      adam_(cfg_.learning_rate),
      buffer_(cfg_.buffer_capacity),
      rng_(cfg_.seed ^ 0x5eedf00dULL) {
  cfg_.validate();
}

double AlphaTransitTrainer::progress() const {
  if (cfg_.env_step_budget <= 0) return 1.0;
  return std::min(1.0, static_cast<double>(t_env_) / static_cast<double>(cfg_.env_step_budget));
}

std::vector<Episode> AlphaTransitTrainer::collect_iteration_episodes() {
  const double tau = temperature(progress());
  SearchConfig search_cfg = cfg_.search;
  search_cfg.add_noise = true;

  std::vector<Episode> episodes(
      static_cast<std::size_t>(cfg_.workers) * static_cast<std::size_t>(cfg_.episodes_per_worker));
  const auto run_worker = [&](int w) {
    Rng worker_rng(mix_seed(cfg_.seed, static_cast<std::uint64_t>(iteration_),
                            static_cast<std::uint64_t>(w) + 1));
    NeuralEvaluator evaluator(net_);
    for (int e = 0; e < cfg_.episodes_per_worker; ++e) {
      const std::uint64_t sim_seed = worker_rng.next_u64();
      episodes[static_cast<std::size_t>(w) * static_cast<std::size_t>(cfg_.episodes_per_worker) +
               static_cast<std::size_t>(e)] =
          collect_episode(*env_, evaluator, search_cfg, tau, sim_seed, worker_rng);
    }
  };

  if (cfg_.workers == 1) {
    run_worker(0);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(cfg_.workers));
    std::vector<Env> worker_envs(static_cast<std::size_t>(cfg_.workers),
                                 Env(env_->graph(), env_->demand(), env_->config()));
    for (int w = 0; w < cfg_.workers; ++w) {
      threads.emplace_back([&, w] {
        Rng worker_rng(mix_seed(cfg_.seed, static_cast<std::uint64_t>(iteration_),
                                static_cast<std::uint64_t>(w) + 1));
        NeuralEvaluator evaluator(net_);
        const Env& env = worker_envs[static_cast<std::size_t>(w)];
        for (int e = 0; e < cfg_.episodes_per_worker; ++e) {
          const std::uint64_t sim_seed = worker_rng.next_u64();
          episodes[static_cast<std::size_t>(w) * static_cast<std::size_t>(cfg_.episodes_per_worker) +
                   static_cast<std::size_t>(e)] =
              collect_episode(env, evaluator, search_cfg, tau, sim_seed, worker_rng);
        }
      });
    }
    for (auto& t : threads) t.join();
  }
  return episodes;
}

void AlphaTransitTrainer::absorb(const Episode& episode) {
  stats_.update(episode.z_raw);
  for (const EpisodeDecision& d : episode.decisions) {
    buffer_.push(ReplayEntry{d.state, d.pi, episode.z_raw});
  }
  t_env_ += episode.env_steps;
}

LossBreakdown AlphaTransitTrainer::train_iteration(Rng& rng) {
  LossBreakdown mean;
  if (buffer_.size() == 0 || cfg_.train_steps_per_iteration == 0) return mean;
  for (int step = 0; step < cfg_.train_steps_per_iteration; ++step) {
    std::vector<TrainSample> batch;
    batch.reserve(static_cast<std::size_t>(cfg_.batch_size));
    for (int b = 0; b < cfg_.batch_size; ++b) {
      const ReplayEntry& entry = buffer_.sample(rng);
      TrainSample sample;
      sample.encoding = env_->encode(entry.state);
      sample.candidates = entry.state.candidates;
      sample.pi = entry.pi;
      sample.z_norm = normalize_value(entry.z_raw, stats_);
      batch.push_back(std::move(sample));
    }
    net_.zero_grads();
    const LossBreakdown loss = alphatransit_loss(net_, batch);
    adam_.step(net_);
    mean.total += loss.total / cfg_.train_steps_per_iteration;
    mean.policy += loss.policy / cfg_.train_steps_per_iteration;
    mean.value += loss.value / cfg_.train_steps_per_iteration;
  }
  return mean;
}

TrainResult AlphaTransitTrainer::train() {
  TrainResult result;
  if (!cfg_.out_dir.empty()) std::filesystem::create_directories(cfg_.out_dir);

  while (t_env_ < cfg_.env_step_budget) {
    const auto started = std::chrono::steady_clock::now();
    const double tau = temperature(progress());
    const std::vector<Episode> episodes = collect_iteration_episodes();
    double z_sum = 0.0;
    for (const Episode& e : episodes) {
      absorb(e);
      z_sum += e.z_raw;
    }
    const double mean_z = z_sum / static_cast<double>(episodes.size());
    const LossBreakdown loss = train_iteration(rng_);
    ++iteration_;

    IterationLog log;
    log.iteration = iteration_;
    log.t_env = t_env_;
    log.episodes = static_cast<int>(episodes.size());
    log.mean_raw_z = mean_z;
    log.smoothed_z = update_smoothed(smoothed_, smoothed_ready_, mean_z);
    log.loss_total = loss.total;
    log.loss_policy = loss.policy;
    log.loss_value = loss.value;
    log.tau = tau;
    log.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            started)
                      .count();
    append_jsonl(cfg_.out_dir, log);
    result.logs.push_back(log);

    if (!cfg_.out_dir.empty() && cfg_.checkpoint_every > 0 &&
        iteration_ % cfg_.checkpoint_every == 0) {
      std::ostringstream name;
      name << cfg_.out_dir << "/checkpoint_iter" << iteration_ << ".json";
      save_checkpoint(name.str());
    }
  }

  if (!cfg_.out_dir.empty()) {
    result.final_checkpoint = cfg_.out_dir + "/checkpoint_final.json";
    save_checkpoint(result.final_checkpoint);
  }
  result.t_env = t_env_;
  result.iterations = iteration_;
  result.smoothed_reward = smoothed_;
  return result;
}

namespace {

nlohmann::json checkpoint_doc(const std::string& algorithm, const PolicyValueNet& net,
                              const Adam& adam, const RewardStats& stats, long long t_env,
                              int iteration, double progress) {
  nlohmann::json doc;
  doc["format"] = "tnd-checkpoint";
  doc["version"] = 1;
  doc["algorithm"] = algorithm;
  doc["net"] = nlohmann::json::parse(net.to_json());
  doc["adam"] = nlohmann::json::parse(adam.to_json());
  doc["reward_stats"] = {{"count", stats.count()}, {"mean", stats.mean()}, {"m2", stats.raw_m2()}};
  doc["t_env"] = t_env;
  doc["iteration"] = iteration;
  doc["progress"] = progress;
  return doc;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) fail(errc::io, "cannot write " + path);
  out << text;
}

nlohmann::json read_checkpoint(const std::string& path, const std::string& algorithm) {
  std::ifstream in(path);
  if (!in) fail(errc::io, "cannot open checkpoint: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(errc::parse, std::string("bad checkpoint: ") + e.what());
  }
  if (doc.value("format", "") != "tnd-checkpoint") {
    fail(errc::parse, "not a tnd checkpoint: " + path);
  }
  if (!algorithm.empty() && doc.value("algorithm", "") != algorithm) {
    fail(errc::invalid_input,
         "checkpoint algorithm mismatch: expected " + algorithm + " in " + path);
  }
  return doc;
}

}  // namespace

void AlphaTransitTrainer::save_checkpoint(const std::string& path) const {
  write_file(path, checkpoint_doc("alphatransit", net_, adam_, stats_, t_env_, iteration_,
                                  progress())
                       .dump());
}

void AlphaTransitTrainer::load_checkpoint(const std::string& path) {
  const nlohmann::json doc = read_checkpoint(path, "alphatransit");
  net_ = PolicyValueNet::from_json(doc.at("net").dump());
  adam_.load_json(doc.at("adam").dump(), net_);
  stats_.restore(doc.at("reward_stats").at("count").get<long long>(),
                 doc.at("reward_stats").at("mean").get<double>(),
                 doc.at("reward_stats").at("m2").get<double>());
  t_env_ = doc.at("t_env").get<long long>();
  iteration_ = doc.at("iteration").get<int>();
}

PpoTrainer::PpoTrainer(const Env& env, NetConfig net_cfg, TrainRunConfig cfg)
    : env_(&env),
      cfg_(std::move(cfg)),
      net_(std::move(net_cfg), cfg_.seed),
      adam_(cfg_.learning_rate),
      rng_(cfg_.seed ^ 0x0ddba11ULL) {
  cfg_.validate();
}

PpoTrainer::Trajectory PpoTrainer::collect_trajectory(std::uint64_t sim_seed, Rng& rng) {
  Trajectory traj;
  DesignState state = env_->initial_state(sim_seed);
  std::vector<double> rewards, values;
  double prev_psi =
      coverage_potential(env_->graph(), env_->demand(), {state.partial.current}, env_->config().alpha);

  while (!state.complete()) {
    const StateEncoding enc = env_->encode(state);
    const NetOutput out = net_.forward(enc);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(enc.node_count), 0);
    for (int c : state.candidates) mask[static_cast<std::size_t>(c)] = 1;
    const std::vector<double> probs = masked_policy(out.logits, mask);

    std::vector<double> pi(state.candidates.size(), 0.0);
    for (std::size_t i = 0; i < state.candidates.size(); ++i) {
      pi[i] = probs[static_cast<std::size_t>(state.candidates[i])];
    }
    const std::size_t choice = sample_index(pi, rng);

    PpoSample sample;
    sample.encoding = enc;
    sample.candidates = state.candidates;
    sample.action_index = static_cast<int>(choice);
    sample.old_logp = std::log(std::max(pi[choice], 1e-300));
    traj.samples.push_back(std::move(sample));
    values.push_back(out.value);

    const StepOutcome step = env_->step(state, state.candidates[choice]);
    traj.env_steps += 1 + step.forced_finalizations;

    if (step.episode_done) {
      traj.z_raw = *step.terminal_reward;
      terminal_stats_.update(traj.z_raw);
      rewards.push_back(normalize_value(traj.z_raw, terminal_stats_));
    } else {
      RouteSet partial_routes = step.state.partial.completed;
      partial_routes.push_back(step.state.partial.current);
      const double psi =
          coverage_potential(env_->graph(), env_->demand(), partial_routes, env_->config().alpha);
      const double omega = overlap_ratio(partial_routes);
      const double raw = shaping_reward(prev_psi, psi, omega, env_->config());
      prev_psi = psi;
      shaping_stats_.update(raw);
      rewards.push_back(normalize_value(raw, shaping_stats_));
    }
    state = step.state;
  }

  const std::vector<double> adv = gae_advantages(rewards, values, cfg_.gamma, cfg_.gae_lambda);
  for (std::size_t i = 0; i < traj.samples.size(); ++i) {
    traj.samples[i].advantage = adv[i];
    traj.samples[i].value_target = adv[i] + values[i];
  }
  return traj;
}

TrainResult PpoTrainer::train() {
  TrainResult result;
  if (!cfg_.out_dir.empty()) std::filesystem::create_directories(cfg_.out_dir);
  const double initial_lr = cfg_.learning_rate;

  while (t_env_ < cfg_.env_step_budget) {
    const auto started = std::chrono::steady_clock::now();
    if (cfg_.lr_anneal && cfg_.env_step_budget > 0) {
      const double frac = 1.0 - static_cast<double>(t_env_) /
                                    static_cast<double>(cfg_.env_step_budget);
      adam_.set_lr(initial_lr * std::max(0.05, frac));
    }

    std::vector<PpoSample> batch;
    double z_sum = 0.0;
    for (int e = 0; e < cfg_.ppo_episodes_per_update; ++e) {
      Trajectory traj = collect_trajectory(rng_.next_u64(), rng_);
      t_env_ += traj.env_steps;
      z_sum += traj.z_raw;
      for (auto& s : traj.samples) batch.push_back(std::move(s));
    }
    const double mean_z = z_sum / static_cast<double>(cfg_.ppo_episodes_per_update);

    PpoLossBreakdown last_loss;
    std::vector<std::size_t> order(batch.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg_.ppo_epochs; ++epoch) {
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng_.uniform_index(i)]);
      }
      for (std::size_t start = 0; start < order.size();
           start += static_cast<std::size_t>(cfg_.ppo_minibatch)) {
        const std::size_t stop =
            std::min(order.size(), start + static_cast<std::size_t>(cfg_.ppo_minibatch));
        std::vector<PpoSample> minibatch;
        minibatch.reserve(stop - start);
        for (std::size_t i = start; i < stop; ++i) minibatch.push_back(batch[order[i]]);
        net_.zero_grads();
        last_loss = ppo_loss(net_, minibatch, cfg_.clip_eps, cfg_.value_coef, cfg_.entropy_coef);
        adam_.step(net_);
      }
    }
    ++iteration_;

    IterationLog log;
    log.iteration = iteration_;
    log.t_env = t_env_;
    log.episodes = cfg_.ppo_episodes_per_update;
    log.mean_raw_z = mean_z;
    log.smoothed_z = update_smoothed(smoothed_, smoothed_ready_, mean_z);
    log.loss_total = last_loss.total;
    log.loss_policy = last_loss.policy;
    log.loss_value = last_loss.value;
    log.entropy = last_loss.entropy;
    log.tau = 1.0;
    log.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            started)
                      .count();
    append_jsonl(cfg_.out_dir, log);
    result.logs.push_back(log);

    if (!cfg_.out_dir.empty() && cfg_.checkpoint_every > 0 &&
        iteration_ % cfg_.checkpoint_every == 0) {
      std::ostringstream name;
      name << cfg_.out_dir << "/checkpoint_iter" << iteration_ << ".json";
      save_checkpoint(name.str());
    }
  }

  if (!cfg_.out_dir.empty()) {
    result.final_checkpoint = cfg_.out_dir + "/checkpoint_final.json";
    save_checkpoint(result.final_checkpoint);
  }
  result.t_env = t_env_;
  result.iterations = iteration_;
  result.smoothed_reward = smoothed_;
  return result;
}

void PpoTrainer::save_checkpoint(const std::string& path) const {
  nlohmann::json doc =
      checkpoint_doc("ppo", net_, adam_, terminal_stats_, t_env_, iteration_,
                     cfg_.env_step_budget > 0
                         ? std::min(1.0, static_cast<double>(t_env_) /
                                             static_cast<double>(cfg_.env_step_budget))
                         : 1.0);
  doc["shaping_stats"] = {{"count", shaping_stats_.count()},
                          {"mean", shaping_stats_.mean()},
                          {"m2", shaping_stats_.raw_m2()}};
  write_file(path, doc.dump());
}

void PpoTrainer::load_checkpoint(const std::string& path) {
  const nlohmann::json doc = read_checkpoint(path, "ppo");
  net_ = PolicyValueNet::from_json(doc.at("net").dump());
  adam_.load_json(doc.at("adam").dump(), net_);
  terminal_stats_.restore(doc.at("reward_stats").at("count").get<long long>(),
                          doc.at("reward_stats").at("mean").get<double>(),
                          doc.at("reward_stats").at("m2").get<double>());
  if (doc.contains("shaping_stats")) {
    shaping_stats_.restore(doc.at("shaping_stats").at("count").get<long long>(),
                           doc.at("shaping_stats").at("mean").get<double>(),
                           doc.at("shaping_stats").at("m2").get<double>());
  }
  t_env_ = doc.at("t_env").get<long long>();
  iteration_ = doc.at("iteration").get<int>();
}

}  // namespace tnd
