#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "tnd/baselines.hpp"
#include "tnd/citygen.hpp"
#include "tnd/env.hpp"
#include "tnd/trainer.hpp"

namespace tnd {

// Fully resolved run configuration: library defaults overlaid with whatever
// the caller provided. The resolved form is echoed into every output.
struct RunOptions {
  EnvConfig env;
  SearchConfig search;
  GAConfig ga;
  NetConfig net = NetConfig{};
  TrainRunConfig train;
  std::string method = "random";
  std::string algorithm = "alphatransit";  // training algorithm
  std::string checkpoint;
  std::string resume;
  std::vector<std::uint64_t> seeds{0};
  double eval_tau = 0.1;
  bool trace = false;
  int eval_episodes = 10;
};

RunOptions parse_run_options(const nlohmann::json& doc);
nlohmann::json run_options_to_json(const RunOptions& opt);

CityGenParams parse_citygen_params(const nlohmann::json& doc);

// Design JSON uses the source ids of the network file.
nlohmann::json routes_to_json(const RouteSet& routes, const Network& net);
RouteSet routes_from_json(const nlohmann::json& doc, const Network& net);

struct DesignRun {
  std::uint64_t seed = 0;
  RouteSet design;
  EvaluationResult evaluation;
  SearchTrace trace;
  EpisodeTrace episode;
};

DesignRun design_with_method(const Network& network, const RunOptions& opt, std::uint64_t seed);

nlohmann::json design_run_to_json(const Network& network, const RunOptions& opt,
                                  const DesignRun& run);

// Every method evaluated over every seed through the identical pipeline;
// failures are isolated per method. csv_out receives the Table-shaped CSV.
nlohmann::json run_comparison(const Network& network, const RunOptions& base,
                              const std::vector<std::string>& methods,
                              const std::vector<std::uint64_t>& seeds, std::string* csv_out);

nlohmann::json train_run(const Network& network, const RunOptions& opt,
                         const std::string& out_dir);

PolicyValueNet net_from_checkpoint(const std::string& path, const std::string& algorithm);

}  // namespace tnd
