#include "tnd/compare.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tnd/error.hpp"

namespace tnd {

namespace {

using nlohmann::json;

RouteSet to_route_set(const std::vector<std::vector<int>>& raw) {
  RouteSet routes;
  routes.reserve(raw.size());
  for (const auto& nodes : raw) routes.push_back(RoutePath{nodes});
  return routes;
}

template <typename T>
void maybe(const json& doc, const char* key, T& out) {
  if (doc.contains(key)) out = doc.at(key).get<T>();
}

SimConfig parse_sim(const json& doc, SimConfig base) {
  maybe(doc, "horizon", base.horizon);
  maybe(doc, "dt", base.dt);
  maybe(doc, "bus_capacity", base.bus_capacity);
  maybe(doc, "dwell", base.dwell);
  maybe(doc, "access_radius", base.access_radius);
  maybe(doc, "congestion_coefficient", base.congestion_coefficient);
  maybe(doc, "congestion_exponent", base.congestion_exponent);
  maybe(doc, "reference_volume", base.reference_volume);
  maybe(doc, "rng_seed", base.rng_seed);
  return base;
}

EnvConfig parse_env(const json& doc, EnvConfig base) {
  maybe(doc, "routes", base.routes);
  maybe(doc, "max_len", base.max_len);
  maybe(doc, "alpha", base.alpha);
  maybe(doc, "coverage_weight", base.coverage_weight);
  maybe(doc, "service_weight", base.service_weight);
  maybe(doc, "wait_weight", base.wait_weight);
  maybe(doc, "move_weight", base.move_weight);
  maybe(doc, "overlap_weight", base.overlap_weight);
  maybe(doc, "fleet_weight", base.fleet_weight);
  maybe(doc, "utilization_weight", base.utilization_weight);
  maybe(doc, "shaping_coverage_weight", base.shaping_coverage_weight);
  maybe(doc, "shaping_overlap_weight", base.shaping_overlap_weight);
  maybe(doc, "wait_cap_minutes", base.wait_cap_minutes);
  maybe(doc, "move_cap_minutes", base.move_cap_minutes);
  maybe(doc, "delta_max", base.delta_max);
  if (doc.contains("sim")) base.sim = parse_sim(doc.at("sim"), base.sim);
  return base;
}

SearchConfig parse_search(const json& doc, SearchConfig base) {
  maybe(doc, "n_iter", base.n_iter);
  maybe(doc, "c_puct", base.c_puct);
  maybe(doc, "dirichlet_alpha", base.dirichlet_alpha);
  maybe(doc, "dirichlet_eps", base.dirichlet_eps);
  maybe(doc, "add_noise", base.add_noise);
  maybe(doc, "temperature", base.temperature);
  return base;
}

GAConfig parse_ga(const json& doc, GAConfig base) {
  maybe(doc, "population", base.population);
  maybe(doc, "crossover_rate", base.crossover_rate);
  maybe(doc, "mutation_rate", base.mutation_rate);
  maybe(doc, "elitism", base.elitism);
  maybe(doc, "tournament", base.tournament);
  maybe(doc, "generations", base.generations);
  maybe(doc, "min_route_len", base.min_route_len);
  return base;
}

NetConfig parse_net(const json& doc, NetConfig base) {
  if (doc.contains("blocks")) base = NetConfig::with_blocks(doc.at("blocks").get<int>());
  maybe(doc, "block_widths", base.block_widths);
  maybe(doc, "block_heads", base.block_heads);
  maybe(doc, "embed_dim", base.embed_dim);
  maybe(doc, "actor_hidden", base.actor_hidden);
  maybe(doc, "critic_hidden", base.critic_hidden);
  maybe(doc, "leaky_slope", base.leaky_slope);
  maybe(doc, "dropout", base.dropout);
  return base;
}

TrainRunConfig parse_train(const json& doc, TrainRunConfig base) {
  maybe(doc, "env_step_budget", base.env_step_budget);
  maybe(doc, "workers", base.workers);
  maybe(doc, "episodes_per_worker", base.episodes_per_worker);
  maybe(doc, "train_steps_per_iteration", base.train_steps_per_iteration);
  maybe(doc, "batch_size", base.batch_size);
  maybe(doc, "learning_rate", base.learning_rate);
  maybe(doc, "buffer_capacity", base.buffer_capacity);
  maybe(doc, "gamma", base.gamma);
  maybe(doc, "gae_lambda", base.gae_lambda);
  maybe(doc, "clip_eps", base.clip_eps);
  maybe(doc, "value_coef", base.value_coef);
  maybe(doc, "entropy_coef", base.entropy_coef);
  maybe(doc, "ppo_epochs", base.ppo_epochs);
  maybe(doc, "ppo_minibatch", base.ppo_minibatch);
  maybe(doc, "ppo_episodes_per_update", base.ppo_episodes_per_update);
  maybe(doc, "lr_anneal", base.lr_anneal);
  maybe(doc, "seed", base.seed);
  maybe(doc, "checkpoint_every", base.checkpoint_every);
  return base;
}

}  // namespace

RunOptions parse_run_options(const json& doc) {
  RunOptions opt;
  if (doc.contains("env")) opt.env = parse_env(doc.at("env"), opt.env);
  if (doc.contains("search")) opt.search = parse_search(doc.at("search"), opt.search);
  if (doc.contains("ga")) opt.ga = parse_ga(doc.at("ga"), opt.ga);
  if (doc.contains("net")) opt.net = parse_net(doc.at("net"), opt.net);
  if (doc.contains("train")) opt.train = parse_train(doc.at("train"), opt.train);
  maybe(doc, "method", opt.method);
  maybe(doc, "algorithm", opt.algorithm);
  maybe(doc, "checkpoint", opt.checkpoint);
  maybe(doc, "resume", opt.resume);
  maybe(doc, "eval_tau", opt.eval_tau);
  maybe(doc, "trace", opt.trace);
  maybe(doc, "eval_episodes", opt.eval_episodes);
  if (doc.contains("seed")) opt.seeds = {doc.at("seed").get<std::uint64_t>()};
  if (doc.contains("seeds")) opt.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
  if (opt.seeds.empty()) fail(errc::invalid_input, "at least one seed is required");
  opt.train.search = opt.search;
  // every override is validated before any work starts
  opt.env.validate();
  opt.search.validate();
  opt.ga.validate();
  opt.net.validate();
  opt.train.validate();
  if (!(opt.eval_tau > 0.0)) fail(errc::invalid_input, "eval_tau must be positive");
  return opt;
}

nlohmann::json run_options_to_json(const RunOptions& opt) {
  json doc;
  doc["env"] = {{"routes", opt.env.routes},
                {"max_len", opt.env.max_len},
                {"alpha", opt.env.alpha},
                {"coverage_weight", opt.env.coverage_weight},
                {"service_weight", opt.env.service_weight},
                {"wait_weight", opt.env.wait_weight},
                {"move_weight", opt.env.move_weight},
                {"overlap_weight", opt.env.overlap_weight},
                {"fleet_weight", opt.env.fleet_weight},
                {"utilization_weight", opt.env.utilization_weight},
                {"shaping_coverage_weight", opt.env.shaping_coverage_weight},
                {"shaping_overlap_weight", opt.env.shaping_overlap_weight},
                {"wait_cap_minutes", opt.env.wait_cap_minutes},
                {"move_cap_minutes", opt.env.move_cap_minutes},
                {"delta_max", opt.env.delta_max},
                {"sim",
                 {{"horizon", opt.env.sim.horizon},
                  {"dt", opt.env.sim.dt},
                  {"bus_capacity", opt.env.sim.bus_capacity},
                  {"dwell", opt.env.sim.dwell},
                  {"access_radius", opt.env.sim.access_radius},
                  {"congestion_coefficient", opt.env.sim.congestion_coefficient},
                  {"congestion_exponent", opt.env.sim.congestion_exponent},
                  {"reference_volume", opt.env.sim.reference_volume}}}};
  doc["search"] = {{"n_iter", opt.search.n_iter},
                   {"c_puct", opt.search.c_puct},
                   {"dirichlet_alpha", opt.search.dirichlet_alpha},
                   {"dirichlet_eps", opt.search.dirichlet_eps},
                   {"add_noise", opt.search.add_noise},
                   {"temperature", opt.search.temperature}};
  doc["ga"] = {{"population", opt.ga.population},
               {"crossover_rate", opt.ga.crossover_rate},
               {"mutation_rate", opt.ga.mutation_rate},
               {"elitism", opt.ga.elitism},
               {"tournament", opt.ga.tournament},
               {"generations", opt.ga.generations},
               {"min_route_len", opt.ga.min_route_len}};
  doc["net"] = {{"block_widths", opt.net.block_widths},
                {"block_heads", opt.net.block_heads},
                {"embed_dim", opt.net.embed_dim},
                {"actor_hidden", opt.net.actor_hidden},
                {"critic_hidden", opt.net.critic_hidden},
                {"leaky_slope", opt.net.leaky_slope},
                {"dropout", opt.net.dropout}};
  doc["train"] = {{"env_step_budget", opt.train.env_step_budget},
                  {"workers", opt.train.workers},
                  {"episodes_per_worker", opt.train.episodes_per_worker},
                  {"train_steps_per_iteration", opt.train.train_steps_per_iteration},
                  {"batch_size", opt.train.batch_size},
                  {"learning_rate", opt.train.learning_rate},
                  {"buffer_capacity", opt.train.buffer_capacity},
                  {"gamma", opt.train.gamma},
                  {"gae_lambda", opt.train.gae_lambda},
                  {"clip_eps", opt.train.clip_eps},
                  {"value_coef", opt.train.value_coef},
                  {"entropy_coef", opt.train.entropy_coef},
                  {"ppo_epochs", opt.train.ppo_epochs},
                  {"ppo_minibatch", opt.train.ppo_minibatch},
                  {"ppo_episodes_per_update", opt.train.ppo_episodes_per_update},
                  {"lr_anneal", opt.train.lr_anneal},
                  {"seed", opt.train.seed},
                  {"checkpoint_every", opt.train.checkpoint_every}};
  doc["method"] = opt.method;
  doc["algorithm"] = opt.algorithm;
  doc["checkpoint"] = opt.checkpoint;
  doc["seeds"] = opt.seeds;
  doc["eval_tau"] = opt.eval_tau;
  doc["trace"] = opt.trace;
  doc["eval_episodes"] = opt.eval_episodes;
  return doc;
}

CityGenParams parse_citygen_params(const json& doc) {
  CityGenParams params;
  maybe(doc, "kind", params.kind);
  maybe(doc, "rows", params.rows);
  maybe(doc, "cols", params.cols);
  maybe(doc, "spacing", params.spacing);
  maybe(doc, "nodes", params.nodes);
  maybe(doc, "radius", params.radius);
  maybe(doc, "extent", params.extent);
  maybe(doc, "free_speed", params.free_speed);
  maybe(doc, "demand_pairs", params.demand_pairs);
  maybe(doc, "rate_min", params.rate_min);
  maybe(doc, "rate_max", params.rate_max);
  maybe(doc, "seed", params.seed);
  params.validate();
  return params;
}

nlohmann::json routes_to_json(const RouteSet& routes, const Network& net) {
  json arr = json::array();
  for (const RoutePath& r : routes) {
    json jr = json::array();
    for (int node : r.nodes) jr.push_back(net.source_ids[static_cast<std::size_t>(node)]);
    arr.push_back(jr);
  }
  return arr;
}

RouteSet routes_from_json(const json& doc, const Network& net) {
  std::unordered_map<std::int64_t, int> id_map;
  for (std::size_t i = 0; i < net.source_ids.size(); ++i) {
    id_map[net.source_ids[i]] = static_cast<int>(i);
  }
  RouteSet routes;
  for (const auto& jr : doc) {
    RoutePath route;
    for (const auto& jid : jr) {
      const auto source = jid.get<std::int64_t>();
      const auto it = id_map.find(source);
      if (it == id_map.end()) {
        fail(errc::invalid_input, "design references unknown node id " + std::to_string(source));
      }
      route.nodes.push_back(it->second);
    }
    if (route.nodes.empty()) fail(errc::invalid_input, "design contains an empty route");
    std::vector<bool> seen(net.source_ids.size(), false);
    for (std::size_t i = 0; i < route.nodes.size(); ++i) {
      if (seen[static_cast<std::size_t>(route.nodes[i])]) {
        fail(errc::invalid_input, "design route repeats a node");
      }
      seen[static_cast<std::size_t>(route.nodes[i])] = true;
      if (i > 0 && !net.graph.has_edge(route.nodes[i - 1], route.nodes[i])) {
        fail(errc::invalid_input, "design route uses a missing edge");
      }
    }
    routes.push_back(std::move(route));
  }
  if (routes.empty()) fail(errc::invalid_input, "design has no routes");
  return routes;
}

PolicyValueNet net_from_checkpoint(const std::string& path, const std::string& algorithm) {
  std::ifstream in(path);
  if (!in) fail(errc::io, "cannot open checkpoint: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    fail(errc::parse, std::string("bad checkpoint: ") + e.what());
  }
  if (doc.value("format", "") != "tnd-checkpoint") fail(errc::parse, "not a tnd checkpoint");
  if (!algorithm.empty() && doc.value("algorithm", "") != algorithm) {
    fail(errc::invalid_input, "checkpoint was trained with algorithm '" +
                                  doc.value("algorithm", "?") + "', expected '" + algorithm + "'");
  }
  return PolicyValueNet::from_json(doc.at("net").dump());
}

DesignRun design_with_method(const Network& network, const RunOptions& opt, std::uint64_t seed) {
  const Env env(network.graph, network.demand, opt.env);
  Rng rng(seed ^ 0xd351617ULL);
  DesignRun run;
  run.seed = seed;

  const auto heuristic = heuristic_kind_from_name(opt.method);
  if (heuristic) {
    run.design = heuristic_design(env, *heuristic, seed, rng);
    run.evaluation = env.evaluate_design(run.design, seed);
  } else if (opt.method == "ga") {
    GAConfig ga = opt.ga;
    ga.seed = seed;
    ga.fitness_sim_seed = seed;
    const RouteSet warm_routes = to_route_set(network.real_routes);
    const GaResult result = ga_optimize(env, ga, warm_routes.empty() ? nullptr : &warm_routes);
    run.design = result.best.routes;
    run.evaluation = env.evaluate_design(run.design, seed);
  } else if (opt.method == "pure-mcts") {
    RewardStats stats;
    RolloutEvaluator evaluator(stats);
    SearchConfig cfg = opt.search;
    cfg.add_noise = false;
    const Episode episode = collect_episode(env, evaluator, cfg, opt.eval_tau, seed, rng,
                                            opt.trace ? &run.trace : nullptr);
    run.design = episode.design;
    run.evaluation = episode.evaluation;
  } else if (opt.method == "alphatransit") {
    if (opt.checkpoint.empty()) {
      fail(errc::invalid_input,
           "method 'alphatransit' needs --checkpoint pointing at a trained model");
    }
    const PolicyValueNet net = net_from_checkpoint(opt.checkpoint, "alphatransit");
    NeuralEvaluator evaluator(net);
    SearchConfig cfg = opt.search;
    cfg.add_noise = false;
    const Episode episode = collect_episode(env, evaluator, cfg, opt.eval_tau, seed, rng,
                                            opt.trace ? &run.trace : nullptr);
    run.design = episode.design;
    run.evaluation = episode.evaluation;
  } else if (opt.method == "ppo") {
    if (opt.checkpoint.empty()) {
      fail(errc::invalid_input, "method 'ppo' needs --checkpoint pointing at a trained model");
    }
    const PolicyValueNet net = net_from_checkpoint(opt.checkpoint, "ppo");
    const Episode episode = policy_episode(env, net, opt.eval_tau, seed, rng);
    run.design = episode.design;
    run.evaluation = episode.evaluation;
  } else if (opt.method == "real-routes") {
    if (network.real_routes.empty()) {
      fail(errc::invalid_input, "network file carries no real_routes");
    }
    run.design = to_route_set(network.real_routes);
    run.evaluation = env.evaluate_design(run.design, seed);
  } else {
    fail(errc::invalid_input,
         "unknown method '" + opt.method +
             "'; expected alphatransit|ppo|pure-mcts|ga|random|demand-cover|shortest-path|"
             "real-routes");
  }
  if (opt.trace) run.episode = replay_design(env, run.design, &run.evaluation);
  return run;
}

nlohmann::json design_run_to_json(const Network& network, const RunOptions& opt,
                                  const DesignRun& run) {
  json doc;
  doc["method"] = opt.method;
  doc["seed"] = run.seed;
  doc["routes"] = routes_to_json(run.design, network);
  doc["evaluation"] = json::parse(evaluation_to_json(run.evaluation));
  if (opt.trace && !run.trace.decisions.empty()) {
    doc["search_trace"] = json::parse(search_trace_to_json(run.trace));
  }
  if (opt.trace && !run.episode.steps.empty()) {
    doc["episode_trace"] = json::parse(episode_trace_to_json(run.episode));
  }
  doc["csv_row"] = metrics_csv_row(opt.method, run.seed, run.evaluation.metrics);
  doc["resolved_config"] = run_options_to_json(opt);
  return doc;
}

namespace {

struct Aggregate {
  std::vector<double> values;
  void add(double v) { values.push_back(v); }
  double mean() const {
    double sum = 0.0;
    for (double v : values) sum += v;
    return values.empty() ? 0.0 : sum / static_cast<double>(values.size());
  }
  bool has_std() const { return values.size() >= 2; }
  double sample_std() const {
    if (!has_std()) return 0.0;
    const double m = mean();
    double acc = 0.0;
    for (double v : values) acc += (v - m) * (v - m);
    return std::sqrt(acc / static_cast<double>(values.size() - 1));
  }
};

std::string csv_cell(const Aggregate& agg, bool std_part) {
  std::ostringstream out;
  if (std_part) {
    if (agg.has_std()) out << agg.sample_std();
  } else {
    out << agg.mean();
  }
  return out.str();
}

}  // namespace

nlohmann::json run_comparison(const Network& network, const RunOptions& base,
                              const std::vector<std::string>& methods,
                              const std::vector<std::uint64_t>& seeds, std::string* csv_out) {
  if (methods.empty() || seeds.empty()) {
    fail(errc::invalid_input, "comparison needs at least one method and one seed");
  }
  json doc;
  doc["methods"] = json::array();
  doc["failures"] = json::object();

  std::ostringstream csv;
  csv << "method,service_rate_mean,service_rate_std,wait_mean,wait_std,transfer_mean,"
         "transfer_std,journey_mean,journey_std,route_eff_mean,route_eff_std,fleet_mean,"
         "fleet_std,utilization_mean,utilization_std\n";

  for (const std::string& method : methods) {
    RunOptions opt = base;
    opt.method = method;
    const char* metric_names[] = {"service_rate", "wait_time",  "transfer_rate", "journey_time",
                                  "route_efficiency", "fleet_size", "bus_utilization"};
    Aggregate metric_aggs[7];
    Aggregate reward_total, psi, rho, omega, node_coverage, total_km;
    bool failed = false;
    try {
      for (const std::uint64_t seed : seeds) {
        const DesignRun run = design_with_method(network, opt, seed);
        const Metrics& m = run.evaluation.metrics;
        const double values[7] = {m.service_rate,     m.wait_time,  m.transfer_rate,
                                  m.journey_time,     m.route_efficiency,
                                  static_cast<double>(m.fleet_size), m.bus_utilization};
        for (int i = 0; i < 7; ++i) metric_aggs[i].add(values[i]);
        reward_total.add(run.evaluation.reward.total);
        psi.add(run.evaluation.reward.psi);
        rho.add(run.evaluation.reward.rho);
        omega.add(run.evaluation.reward.omega);
        std::vector<bool> covered(network.graph.node_count(), false);
        for (const RoutePath& r : run.design) {
          for (int nd : r.nodes) covered[static_cast<std::size_t>(nd)] = true;
        }
        int covered_count = 0;
        for (bool c : covered) covered_count += c ? 1 : 0;
        node_coverage.add(100.0 * covered_count / network.graph.node_count());
        total_km.add(run.evaluation.report.total_route_km);
      }
    } catch (const std::exception& e) {
      failed = true;
      doc["failures"][method] = e.what();
    }
    if (failed) continue;

    json entry;
    entry["method"] = method;
    for (int i = 0; i < 7; ++i) {
      entry["metrics"][metric_names[i]] = {{"mean", metric_aggs[i].mean()}};
      if (metric_aggs[i].has_std()) {
        entry["metrics"][metric_names[i]]["std"] = metric_aggs[i].sample_std();
      }
    }
    entry["reward"] = {{"total_mean", reward_total.mean()},
                       {"psi_mean", psi.mean()},
                       {"rho_mean", rho.mean()},
                       {"omega_mean", omega.mean()}};
    entry["structure"] = {{"node_coverage_pct", node_coverage.mean()},
                          {"overlap_pct", omega.mean() * 100.0},
                          {"total_km", total_km.mean()}};
    doc["methods"].push_back(entry);

    csv << method;
    for (int i = 0; i < 7; ++i) {
      csv << ',' << csv_cell(metric_aggs[i], false) << ',' << csv_cell(metric_aggs[i], true);
    }
    csv << "\n";
  }

  doc["seeds"] = seeds;
  doc["resolved_config"] = run_options_to_json(base);
  if (csv_out) *csv_out = csv.str();
  return doc;
}

nlohmann::json train_run(const Network& network, const RunOptions& opt,
                         const std::string& out_dir) {
  const Env env(network.graph, network.demand, opt.env);
  TrainRunConfig train_cfg = opt.train;
  train_cfg.out_dir = out_dir;

  json summary;
  summary["algorithm"] = opt.algorithm;
  std::string checkpoint_path;

  if (opt.algorithm == "alphatransit") {
    AlphaTransitTrainer trainer(env, opt.net, train_cfg);
    if (!opt.resume.empty()) trainer.load_checkpoint(opt.resume);
    const TrainResult result = trainer.train();
    summary["t_env"] = result.t_env;
    summary["iterations"] = result.iterations;
    summary["smoothed_reward"] = result.smoothed_reward;
    checkpoint_path = result.final_checkpoint;

    // final evaluation: low-temperature search episodes without noise
    NeuralEvaluator evaluator(trainer.net());
    SearchConfig eval_cfg = opt.search;
    eval_cfg.add_noise = false;
    Aggregate rewards;
    for (int e = 0; e < opt.eval_episodes; ++e) {
      Rng rng(opt.train.seed ^ (0xabcdULL + static_cast<std::uint64_t>(e)));
      const Episode ep = collect_episode(env, evaluator, eval_cfg, opt.eval_tau,
                                         static_cast<std::uint64_t>(e), rng);
      rewards.add(ep.z_raw);
    }
    summary["eval_reward_mean"] = rewards.mean();
    if (rewards.has_std()) summary["eval_reward_std"] = rewards.sample_std();
  } else if (opt.algorithm == "ppo") {
    PpoTrainer trainer(env, opt.net, train_cfg);
    if (!opt.resume.empty()) trainer.load_checkpoint(opt.resume);
    const TrainResult result = trainer.train();
    summary["t_env"] = result.t_env;
    summary["iterations"] = result.iterations;
    summary["smoothed_reward"] = result.smoothed_reward;
    checkpoint_path = result.final_checkpoint;

    Aggregate rewards;
    for (int e = 0; e < opt.eval_episodes; ++e) {
      Rng rng(opt.train.seed ^ (0xabcdULL + static_cast<std::uint64_t>(e)));
      const Episode ep =
          policy_episode(env, trainer.net(), opt.eval_tau, static_cast<std::uint64_t>(e), rng);
      rewards.add(ep.z_raw);
    }
    summary["eval_reward_mean"] = rewards.mean();
    if (rewards.has_std()) summary["eval_reward_std"] = rewards.sample_std();
  } else {
    fail(errc::invalid_input, "unknown training algorithm '" + opt.algorithm + "'");
  }

  summary["final_checkpoint"] = checkpoint_path;
  summary["resolved_config"] = run_options_to_json(opt);
  return summary;
}

}  // namespace tnd
