#include "tndesign.h"

#include <cstring>
#include <string>

#include <json.hpp>

#include "tnd/compare.hpp"
#include "tnd/error.hpp"

struct tnd_ctx {
  std::string last_error;
};

struct tnd_network {
  tnd::Network net;
};

namespace {

using nlohmann::json;

char* dup_string(const std::string& text) {
  char* out = new char[text.size() + 1];
  std::memcpy(out, text.c_str(), text.size() + 1);
  return out;
}

tnd_status status_of(tnd::errc code) {
  switch (code) {
    case tnd::errc::io: return TND_ERR_IO;
    case tnd::errc::parse: return TND_ERR_PARSE;
    case tnd::errc::invalid_input: return TND_ERR_INVALID;
    case tnd::errc::invalid_state: return TND_ERR_STATE;
    case tnd::errc::internal: return TND_ERR_INTERNAL;
  }
  return TND_ERR_INTERNAL;
}

template <typename Fn>
tnd_status guarded(tnd_ctx* ctx, Fn&& fn) {
  if (!ctx) return TND_ERR_INVALID;
  try {
    ctx->last_error.clear();
    return fn();
  } catch (const tnd::error& e) {
    ctx->last_error = e.what();
    return status_of(e.code());
  } catch (const json::exception& e) {
    ctx->last_error = e.what();
    return TND_ERR_PARSE;
  } catch (const std::exception& e) {
    ctx->last_error = e.what();
    return TND_ERR_INTERNAL;
  }
}

json parse_config(const char* text) {
  if (!text || !*text) return json::object();
  return json::parse(text);
}

}  // namespace

extern "C" {

const char* tnd_version(void) { return "0.1.0"; }

tnd_status tnd_ctx_create(tnd_ctx** out) {
  if (!out) return TND_ERR_INVALID;
  *out = new tnd_ctx();
  return TND_OK;
}

void tnd_ctx_destroy(tnd_ctx* ctx) { delete ctx; }

const char* tnd_last_error(const tnd_ctx* ctx) { return ctx ? ctx->last_error.c_str() : ""; }

void tnd_string_free(char* text) { delete[] text; }

tnd_status tnd_generate_city(tnd_ctx* ctx, const char* params_json, char** network_json_out) {
  return guarded(ctx, [&]() -> tnd_status {
    if (!network_json_out) tnd::fail(tnd::errc::invalid_input, "null output pointer");
    const tnd::CityGenParams params = tnd::parse_citygen_params(parse_config(params_json));
    const tnd::Network net = tnd::generate_city(params);
    *network_json_out = dup_string(tnd::network_to_json(net));
    return TND_OK;
  });
}

tnd_status tnd_network_load_file(tnd_ctx* ctx, const char* path, tnd_network** out) {
  return guarded(ctx, [&]() -> tnd_status {
    if (!path || !out) tnd::fail(tnd::errc::invalid_input, "null argument");
    *out = new tnd_network{tnd::load_network(path)};
    return TND_OK;
  });
}

tnd_status tnd_network_parse(tnd_ctx* ctx, const char* json_text, tnd_network** out) {
  return guarded(ctx, [&]() -> tnd_status {
    if (!json_text || !out) tnd::fail(tnd::errc::invalid_input, "null argument");
    *out = new tnd_network{tnd::parse_network(json_text, "<memory>")};
    return TND_OK;
  });
}

void tnd_network_destroy(tnd_network* network) { delete network; }

tnd_status tnd_network_info(tnd_ctx* ctx, const tnd_network* network, char** info_json_out) {
  return guarded(ctx, [&]() -> tnd_status {
    if (!network || !info_json_out) tnd::fail(tnd::errc::invalid_input, "null argument");
    json doc;
    doc["nodes"] = network->net.graph.node_count();
    doc["edges"] = network->net.graph.edge_count();
    doc["arcs"] = network->net.graph.arcs().size();
    doc["transit_center"] =
        network->net.source_ids[static_cast<std::size_t>(network->net.graph.transit_center())];
    doc["demand_pairs"] = network->net.demand.pairs().size();
    doc["total_demand"] = network->net.demand.total();
    doc["has_real_routes"] = !network->net.real_routes.empty();
    *info_json_out = dup_string(doc.dump(2));
    return TND_OK;
  });
}

tnd_status tnd_network_to_json(tnd_ctx* ctx, const tnd_network* network, char** json_out) {
  return guarded(ctx, [&]() -> tnd_status {
    if (!network || !json_out) tnd::fail(tnd::errc::invalid_input, "null argument");
    *json_out = dup_string(tnd::network_to_json(network->net));
    return TND_OK;
  });
}

tnd_status tnd_search_space(tnd_ctx* ctx, const tnd_network* network, const char* params_json,
                            char** result_json_out) {
  return guarded(ctx, [&]() -> tnd_status {
    if (!network || !result_json_out) tnd::fail(tnd::errc::invalid_input, "null argument");
    const json params = parse_config(params_json);
    const int routes = params.value("routes", 16);
    const int max_len = params.value("max_len", 14);
    const bool hub_start = params.value("hub_start", true);
    const tnd::SearchSpaceEstimate est =
        tnd::estimate_search_space(network->net.graph, routes, max_len, hub_start);
    json doc;
    doc["routes"] = routes;
    doc["max_len"] = max_len;
    doc["hub_start"] = hub_start;
    doc["per_route"] = est.per_route;
    doc["total_log10"] = est.total_log10;
    doc["degenerate"] = est.degenerate;
    if (est.degenerate) doc["warning"] = "average degree <= 1: estimate reported as 0";
    *result_json_out = dup_string(doc.dump(2));
    return TND_OK;
  });
}

tnd_status tnd_design(tnd_ctx* ctx, const tnd_network* network, const char* config_json,
                      char** result_json_out) {
  return guarded(ctx, [&]() -> tnd_status {
    if (!network || !result_json_out) tnd::fail(tnd::errc::invalid_input, "null argument");
    const tnd::RunOptions opt = tnd::parse_run_options(parse_config(config_json));
    json doc;
    doc["runs"] = json::array();
    std::string csv = tnd::metrics_csv_header() + "\n";
    for (const std::uint64_t seed : opt.seeds) {
      const tnd::DesignRun run = tnd::design_with_method(network->net, opt, seed);
      json entry = tnd::design_run_to_json(network->net, opt, run);
      csv += entry.at("csv_row").get<std::string>() + "\n";
      doc["runs"].push_back(std::move(entry));
    }
    doc["csv"] = csv;
    doc["resolved_config"] = tnd::run_options_to_json(opt);
    *result_json_out = dup_string(doc.dump(2));
    return TND_OK;
  });
}

tnd_status tnd_evaluate(tnd_ctx* ctx, const tnd_network* network, const char* design_json,
                        const char* config_json, char** result_json_out) {
  return guarded(ctx, [&]() -> tnd_status {
    if (!network || !design_json || !result_json_out) {
      tnd::fail(tnd::errc::invalid_input, "null argument");
    }
    const tnd::RunOptions opt = tnd::parse_run_options(parse_config(config_json));
    const json design_doc = json::parse(design_json);
    const tnd::RouteSet routes =
        tnd::routes_from_json(design_doc.contains("routes") ? design_doc.at("routes") : design_doc,
                              network->net);
    const tnd::Env env(network->net.graph, network->net.demand, opt.env);
    json doc;
    doc["runs"] = json::array();
    std::string csv = tnd::metrics_csv_header() + "\n";
    for (const std::uint64_t seed : opt.seeds) {
      const tnd::EvaluationResult eval = env.evaluate_design(routes, seed);
      json entry;
      entry["seed"] = seed;
      entry["evaluation"] = json::parse(tnd::evaluation_to_json(eval));
      csv += tnd::metrics_csv_row("design", seed, eval.metrics) + "\n";
      doc["runs"].push_back(entry);
    }
    doc["csv"] = csv;
    doc["routes"] = tnd::routes_to_json(routes, network->net);
    doc["resolved_config"] = tnd::run_options_to_json(opt);
    *result_json_out = dup_string(doc.dump(2));
    return TND_OK;
  });
}

tnd_status tnd_compare(tnd_ctx* ctx, const tnd_network* network, const char* config_json,
                       char** result_json_out) {
  return guarded(ctx, [&]() -> tnd_status {
    if (!network || !result_json_out) tnd::fail(tnd::errc::invalid_input, "null argument");
    const json cfg = parse_config(config_json);
    if (!cfg.contains("methods")) tnd::fail(tnd::errc::invalid_input, "missing 'methods' list");
    const auto methods = cfg.at("methods").get<std::vector<std::string>>();
    const tnd::RunOptions opt = tnd::parse_run_options(cfg);
    std::string csv;
    json doc = tnd::run_comparison(network->net, opt, methods, opt.seeds, &csv);
    doc["csv"] = csv;
    *result_json_out = dup_string(doc.dump(2));
    return TND_OK;
  });
}

tnd_status tnd_train(tnd_ctx* ctx, const tnd_network* network, const char* config_json,
                     char** summary_json_out) {
  return guarded(ctx, [&]() -> tnd_status {
    if (!network || !summary_json_out) tnd::fail(tnd::errc::invalid_input, "null argument");
    const json cfg = parse_config(config_json);
    const tnd::RunOptions opt = tnd::parse_run_options(cfg);
    const std::string out_dir = cfg.value("out_dir", "");
    const json summary = tnd::train_run(network->net, opt, out_dir);
    *summary_json_out = dup_string(summary.dump(2));
    return TND_OK;
  });
}

}  // extern "C"
