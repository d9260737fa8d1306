// tnd — command-line front end over the tndesign shared library.
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tndesign.h"

namespace {

using nlohmann::json;

struct CtxDeleter {
  void operator()(tnd_ctx* ctx) const { tnd_ctx_destroy(ctx); }
};
struct NetDeleter {
  void operator()(tnd_network* net) const { tnd_network_destroy(net); }
};

[[noreturn]] void die(int code, const std::string& status, const std::string& message) {
  json err;
  err["error"] = {{"code", code}, {"status", status}, {"message", message}};
  std::cerr << err.dump() << "\n";
  std::exit(code == 0 ? 1 : code);
}

const char* status_name(tnd_status status) {
  switch (status) {
    case TND_OK: return "ok";
    case TND_ERR_IO: return "io";
    case TND_ERR_PARSE: return "parse";
    case TND_ERR_INVALID: return "invalid";
    case TND_ERR_STATE: return "state";
    case TND_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void check(tnd_ctx* ctx, tnd_status status) {
  if (status != TND_OK) die(status, status_name(status), tnd_last_error(ctx));
}

std::string take_string(char* text) {
  std::string out = text ? text : "";
  tnd_string_free(text);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) die(TND_ERR_IO, "io", "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) die(TND_ERR_IO, "io", "cannot write " + path);
  out << text;
}

std::string resolve_out(const std::string& path) {
  if (path.empty()) return path;
  const char* root = std::getenv("TND_OUT_ROOT");
  std::filesystem::path p(path);
  if (root && *root && p.is_relative()) p = std::filesystem::path(root) / p;
  std::filesystem::create_directories(p);
  return p.string();
}

// Layered configuration: library defaults < config file < command-line flags.
struct ConfigBuilder {
  std::string config_path;
  json overlay = json::object();

  void set(const std::string& pointer, json value) {
    overlay[json::json_pointer(pointer)] = std::move(value);
  }

  std::string merged() const {
    json doc = json::object();
    if (!config_path.empty()) {
      doc = json::parse(read_file(config_path));
    }
    doc.merge_patch(overlay);
    return doc.dump();
  }
};

std::unique_ptr<tnd_network, NetDeleter> load_network(tnd_ctx* ctx, const std::string& path) {
  tnd_network* raw = nullptr;
  check(ctx, tnd_network_load_file(ctx, path.c_str(), &raw));
  return std::unique_ptr<tnd_network, NetDeleter>(raw);
}

void add_shared_overrides(CLI::App* cmd, ConfigBuilder& cfg) {
  auto opt_d = [cmd, &cfg](const std::string& flag, const std::string& pointer,
                           const std::string& help) {
    auto holder = std::make_shared<double>();
    cmd->add_option_function<double>(
           flag, [&cfg, pointer](double v) { cfg.set(pointer, v); }, help)
        ->expected(1);
    (void)holder;
  };
  auto opt_i = [cmd, &cfg](const std::string& flag, const std::string& pointer,
                           const std::string& help) {
    cmd->add_option_function<int>(
           flag, [&cfg, pointer](int v) { cfg.set(pointer, v); }, help)
        ->expected(1);
  };
  opt_d("--alpha", "/env/alpha", "modal split in [0,1]");
  opt_i("--routes", "/env/routes", "number of routes K");
  opt_i("--max-len", "/env/max_len", "max nodes per route");
  opt_i("--horizon", "/env/sim/horizon", "simulation steps");
  opt_d("--capacity", "/env/sim/bus_capacity", "bus capacity");
  opt_d("--dwell", "/env/sim/dwell", "dwell seconds per stop");
  opt_d("--access-radius", "/env/sim/access_radius", "walk access radius, meters");
  opt_d("--congestion", "/env/sim/congestion_coefficient", "congestion coefficient (0 = off)");
  opt_i("--n-iter", "/search/n_iter", "MCTS simulations per decision");
  opt_d("--c-puct", "/search/c_puct", "PUCT exploration constant");
  opt_d("--eval-tau", "/eval_tau", "evaluation sampling temperature");
  opt_i("--generations", "/ga/generations", "GA generations");
  opt_i("--population", "/ga/population", "GA population");
}

int run(int argc, char** argv) {
  CLI::App app{"transit route network design toolkit"};
  app.require_subcommand(1);

  tnd_ctx* raw_ctx = nullptr;
  if (tnd_ctx_create(&raw_ctx) != TND_OK) die(TND_ERR_INTERNAL, "internal", "context init failed");
  std::unique_ptr<tnd_ctx, CtxDeleter> ctx(raw_ctx);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic city network file");
  std::string gen_out = "city.json";
  json gen_params = json::object();
  gen->add_option("--out", gen_out, "output network file")->required();
  gen->add_option_function<std::string>(
      "--kind", [&](const std::string& v) { gen_params["kind"] = v; }, "grid or geometric");
  gen->add_option_function<int>("--rows", [&](int v) { gen_params["rows"] = v; }, "grid rows");
  gen->add_option_function<int>("--cols", [&](int v) { gen_params["cols"] = v; }, "grid cols");
  gen->add_option_function<double>(
      "--spacing", [&](double v) { gen_params["spacing"] = v; }, "grid spacing, meters");
  gen->add_option_function<int>(
      "--nodes", [&](int v) { gen_params["nodes"] = v; }, "node count (geometric)");
  gen->add_option_function<double>(
      "--radius", [&](double v) { gen_params["radius"] = v; }, "connection radius (geometric)");
  gen->add_option_function<double>(
      "--extent", [&](double v) { gen_params["extent"] = v; }, "city extent, meters");
  gen->add_option_function<double>(
      "--speed", [&](double v) { gen_params["free_speed"] = v; }, "free-flow speed m/s");
  gen->add_option_function<int>(
      "--demand-pairs", [&](int v) { gen_params["demand_pairs"] = v; }, "OD pairs to generate");
  gen->add_option_function<double>(
      "--rate-min", [&](double v) { gen_params["rate_min"] = v; }, "min trips/hour");
  gen->add_option_function<double>(
      "--rate-max", [&](double v) { gen_params["rate_max"] = v; }, "max trips/hour");
  gen->add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t v) { gen_params["seed"] = v; }, "generator seed");

  // space
  auto* space = app.add_subcommand("space", "estimate the design search space");
  std::string space_network;
  int space_routes = 16, space_max_len = 14;
  space->add_option("--network", space_network, "network file")->required();
  space->add_option("--routes", space_routes, "number of routes K");
  space->add_option("--max-len", space_max_len, "max nodes per route");

  // design
  auto* design = app.add_subcommand("design", "construct and evaluate a transit design");
  std::string design_network, design_method = "random", design_out, design_checkpoint;
  std::vector<std::uint64_t> design_seeds;
  bool design_trace = false;
  ConfigBuilder design_cfg;
  design->add_option("--network", design_network, "network file")->required();
  design->add_option("--method", design_method,
                     "alphatransit|ppo|pure-mcts|ga|random|demand-cover|shortest-path|real-routes");
  design->add_option("--seeds", design_seeds, "seed list");
  design->add_option("--checkpoint", design_checkpoint, "trained model checkpoint");
  design->add_option("--out", design_out, "output directory");
  design->add_option("--config", design_cfg.config_path, "JSON config file");
  design->add_flag("--trace", design_trace, "record the per-decision search trace");
  add_shared_overrides(design, design_cfg);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "evaluate an existing design file");
  std::string eval_network, eval_design, eval_out;
  std::vector<std::uint64_t> eval_seeds;
  ConfigBuilder eval_cfg;
  evaluate->add_option("--network", eval_network, "network file")->required();
  evaluate->add_option("--design", eval_design, "design JSON file")->required();
  evaluate->add_option("--seeds", eval_seeds, "seed list");
  evaluate->add_option("--out", eval_out, "output directory");
  evaluate->add_option("--config", eval_cfg.config_path, "JSON config file");
  add_shared_overrides(evaluate, eval_cfg);

  // compare
  auto* compare = app.add_subcommand("compare", "compare methods over seeds");
  std::string cmp_network, cmp_out, cmp_checkpoint;
  std::vector<std::string> cmp_methods;
  std::vector<std::uint64_t> cmp_seeds;
  ConfigBuilder cmp_cfg;
  compare->add_option("--network", cmp_network, "network file")->required();
  compare->add_option("--methods", cmp_methods, "methods to compare")->required();
  compare->add_option("--seeds", cmp_seeds, "seed list");
  compare->add_option("--checkpoint", cmp_checkpoint, "checkpoint for learned methods");
  compare->add_option("--out", cmp_out, "output directory");
  compare->add_option("--config", cmp_cfg.config_path, "JSON config file");
  add_shared_overrides(compare, cmp_cfg);

  // train
  auto* train = app.add_subcommand("train", "train a policy (alphatransit or ppo)");
  std::string train_network, train_algo = "alphatransit", train_out = "train_out", train_resume;
  ConfigBuilder train_cfg;
  train->add_option("--network", train_network, "network file")->required();
  train->add_option("--algo", train_algo, "alphatransit|ppo");
  train->add_option("--out", train_out, "output directory for checkpoints and logs");
  train->add_option("--resume", train_resume, "checkpoint to resume from");
  train->add_option("--config", train_cfg.config_path, "JSON config file");
  train->add_option_function<long long>(
      "--budget", [&](long long v) { train_cfg.set("/train/env_step_budget", v); },
      "environment step budget");
  train->add_option_function<int>(
      "--workers", [&](int v) { train_cfg.set("/train/workers", v); }, "parallel episode workers");
  train->add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t v) { train_cfg.set("/train/seed", v); }, "training seed");
  train->add_option_function<int>(
      "--blocks", [&](int v) { train_cfg.set("/net/blocks", v); }, "attention block count");
  train->add_option_function<double>(
      "--lr", [&](double v) { train_cfg.set("/train/learning_rate", v); }, "learning rate");
  train->add_option_function<int>(
      "--checkpoint-every", [&](int v) { train_cfg.set("/train/checkpoint_every", v); },
      "checkpoint cadence in iterations");
  add_shared_overrides(train, train_cfg);

  // inspect
  auto* inspect = app.add_subcommand("inspect", "summarize a trace or result file");
  std::string inspect_file;
  inspect->add_option("--file", inspect_file, "episode trace, search trace, or design result")
      ->required();

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    char* out_text = nullptr;
    check(ctx.get(), tnd_generate_city(ctx.get(), gen_params.dump().c_str(), &out_text));
    const std::string text = take_string(out_text);
    write_file(gen_out, text);
    const json net = json::parse(text);
    json info{{"out", gen_out},
              {"nodes", net.at("nodes").size()},
              {"edges", net.at("edges").size()},
              {"demand_pairs", net.at("demand").size()}};
    std::cout << info.dump(2) << "\n";
    return 0;
  }

  if (space->parsed()) {
    const auto network = load_network(ctx.get(), space_network);
    json result;
    for (const bool hub : {true, false}) {
      json params{{"routes", space_routes}, {"max_len", space_max_len}, {"hub_start", hub}};
      char* text = nullptr;
      check(ctx.get(),
            tnd_search_space(ctx.get(), network.get(), params.dump().c_str(), &text));
      result[hub ? "hub_start" : "random_start"] = json::parse(take_string(text));
    }
    std::cout << result.dump(2) << "\n";
    return 0;
  }

  if (design->parsed()) {
    const auto network = load_network(ctx.get(), design_network);
    design_cfg.set("/method", design_method);
    if (!design_checkpoint.empty()) design_cfg.set("/checkpoint", design_checkpoint);
    if (design_trace) design_cfg.set("/trace", true);
    if (!design_seeds.empty()) design_cfg.set("/seeds", design_seeds);
    char* text = nullptr;
    check(ctx.get(), tnd_design(ctx.get(), network.get(), design_cfg.merged().c_str(), &text));
    const std::string result = take_string(text);
    if (!design_out.empty()) {
      const std::string dir = resolve_out(design_out);
      write_file(dir + "/result.json", result);
      const json doc = json::parse(result);
      write_file(dir + "/config.json", doc.at("resolved_config").dump(2));
      write_file(dir + "/metrics.csv", doc.at("csv").get<std::string>());
      for (const auto& run : doc.at("runs")) {
        write_file(dir + "/design_seed" + std::to_string(run.at("seed").get<std::uint64_t>()) +
                       ".json",
                   run.dump(2));
      }
    }
    std::cout << result << "\n";
    return 0;
  }

  if (evaluate->parsed()) {
    const auto network = load_network(ctx.get(), eval_network);
    if (!eval_seeds.empty()) eval_cfg.set("/seeds", eval_seeds);
    const std::string design_text = read_file(eval_design);
    char* text = nullptr;
    check(ctx.get(), tnd_evaluate(ctx.get(), network.get(), design_text.c_str(),
                                  eval_cfg.merged().c_str(), &text));
    const std::string result = take_string(text);
    if (!eval_out.empty()) {
      const std::string dir = resolve_out(eval_out);
      write_file(dir + "/evaluation.json", result);
      const json doc = json::parse(result);
      write_file(dir + "/config.json", doc.at("resolved_config").dump(2));
      write_file(dir + "/metrics.csv", doc.at("csv").get<std::string>());
    }
    std::cout << result << "\n";
    return 0;
  }

  if (compare->parsed()) {
    const auto network = load_network(ctx.get(), cmp_network);
    cmp_cfg.set("/methods", cmp_methods);
    if (!cmp_seeds.empty()) cmp_cfg.set("/seeds", cmp_seeds);
    if (!cmp_checkpoint.empty()) cmp_cfg.set("/checkpoint", cmp_checkpoint);
    char* text = nullptr;
    check(ctx.get(), tnd_compare(ctx.get(), network.get(), cmp_cfg.merged().c_str(), &text));
    const std::string result = take_string(text);
    const json doc = json::parse(result);
    if (!cmp_out.empty()) {
      const std::string dir = resolve_out(cmp_out);
      write_file(dir + "/comparison.json", result);
      write_file(dir + "/comparison.csv", doc.at("csv").get<std::string>());
      write_file(dir + "/config.json", doc.at("resolved_config").dump(2));
    }
    std::cout << doc.at("csv").get<std::string>();
    if (!doc.at("failures").empty()) {
      std::cerr << json{{"failures", doc.at("failures")}}.dump() << "\n";
    }
    return 0;
  }

  if (train->parsed()) {
    const auto network = load_network(ctx.get(), train_network);
    train_cfg.set("/algorithm", train_algo);
    const std::string dir = resolve_out(train_out);
    train_cfg.set("/out_dir", dir);
    if (!train_resume.empty()) train_cfg.set("/resume", train_resume);
    char* text = nullptr;
    check(ctx.get(), tnd_train(ctx.get(), network.get(), train_cfg.merged().c_str(), &text));
    const std::string summary = take_string(text);
    write_file(dir + "/summary.json", summary);
    write_file(dir + "/config.json", json::parse(summary).at("resolved_config").dump(2));
    std::cout << summary << "\n";
    return 0;
  }

  if (inspect->parsed()) {
    const json doc = json::parse(read_file(inspect_file));
    std::ostringstream out;
    if (doc.contains("steps")) {  // episode trace
      out << "episode trace: " << doc.at("steps").size() << " steps\n";
      for (const auto& s : doc.at("steps")) {
        out << "  step " << s.at("step").get<int>() << " route " << s.at("route_index").get<int>()
            << " frontier " << s.at("frontier").get<int>() << " mask "
            << s.at("mask_size").get<int>() << " action " << s.at("action").get<int>();
        if (s.at("route_finalized").get<bool>()) out << " [finalized]";
        if (s.at("forced_finalizations").get<int>() > 0) out << " [forced]";
        out << "\n";
      }
    } else if (doc.contains("decisions")) {  // search trace
      out << "search trace: " << doc.at("decisions").size() << " decisions\n";
      for (std::size_t i = 0; i < doc.at("decisions").size(); ++i) {
        const auto& d = doc.at("decisions").at(i);
        out << "  decision " << i << ": " << d.at("candidates").size() << " candidates, chose "
            << d.at("chosen").get<int>() << " (visits";
        for (const auto& v : d.at("visits")) out << ' ' << v.get<int>();
        out << ")\n";
      }
    } else if (doc.contains("runs")) {  // design/evaluate result
      out << "result with " << doc.at("runs").size() << " runs\n";
      for (const auto& run : doc.at("runs")) {
        const auto& reward = run.at("evaluation").at("reward");
        out << "  seed " << run.value("seed", std::uint64_t{0}) << ": reward "
            << reward.at("total").get<double>() << "\n";
      }
    } else {
      out << doc.dump(2) << "\n";
    }
    std::cout << out.str();
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const json::exception& e) {
    die(TND_ERR_PARSE, "parse", e.what());
  } catch (const std::exception& e) {
    die(TND_ERR_INTERNAL, "internal", e.what());
  }
}
