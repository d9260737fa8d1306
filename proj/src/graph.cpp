#include "tnd/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tnd/error.hpp"

namespace tnd {

namespace {

std::uint64_t pair_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint64_t>(static_cast<std::uint32_t>(b));
}

std::uint64_t unordered_key(int a, int b) { return a < b ? pair_key(a, b) : pair_key(b, a); }

}  // namespace

RoadGraph::RoadGraph(std::vector<Node> nodes, std::vector<Edge> edges, int transit_center)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), transit_center_(transit_center) {
  const int n = node_count();
  if (n == 0) fail(errc::invalid_input, "graph has no nodes");
  if (transit_center_ < 0 || transit_center_ >= n) {
    fail(errc::invalid_input,
         "transit_center " + std::to_string(transit_center_) + " is not a valid node id");
  }
  adj_.assign(static_cast<std::size_t>(n), {});
  arcs_.reserve(edges_.size() * 2);
  int idx = 0;
  for (const Edge& e : edges_) {
    if (e.u < 0 || e.u >= n || e.v < 0 || e.v >= n) {
      fail(errc::invalid_input, "edge #" + std::to_string(idx) + " references unknown node (" +
                                    std::to_string(e.u) + "," + std::to_string(e.v) + ")");
    }
    if (e.u == e.v) {
      fail(errc::invalid_input, "edge #" + std::to_string(idx) + " is a self-loop at node " +
                                    std::to_string(e.u));
    }
    if (!(e.length > 0.0)) {
      fail(errc::invalid_input, "edge #" + std::to_string(idx) + " (" + std::to_string(e.u) + "," +
                                    std::to_string(e.v) + ") has nonpositive length " +
                                    std::to_string(e.length));
    }
    if (!(e.free_speed > 0.0)) {
      fail(errc::invalid_input, "edge #" + std::to_string(idx) + " (" + std::to_string(e.u) + "," +
                                    std::to_string(e.v) + ") has nonpositive free_speed " +
                                    std::to_string(e.free_speed));
    }
    const auto key = unordered_key(e.u, e.v);
    if (!edge_lookup_.emplace(key, idx).second) {
      fail(errc::invalid_input, "duplicate edge (" + std::to_string(e.u) + "," +
                                    std::to_string(e.v) + ") at record #" + std::to_string(idx));
    }
    adj_[static_cast<std::size_t>(e.u)].push_back(e.v);
    adj_[static_cast<std::size_t>(e.v)].push_back(e.u);
    arcs_.emplace_back(e.u, e.v);
    arcs_.emplace_back(e.v, e.u);
    ++idx;
  }
  for (auto& nb : adj_) std::sort(nb.begin(), nb.end());
}

int RoadGraph::edge_index_of(int u, int v) const {
  const auto it = edge_lookup_.find(unordered_key(u, v));
  return it == edge_lookup_.end() ? -1 : it->second;
}

double RoadGraph::edge_length(int u, int v) const {
  const int idx = edge_index_of(u, v);
  if (idx < 0) fail(errc::invalid_input, "no edge (" + std::to_string(u) + "," + std::to_string(v) + ")");
  return edges_[static_cast<std::size_t>(idx)].length;
}

double RoadGraph::edge_free_speed(int u, int v) const {
  const int idx = edge_index_of(u, v);
  if (idx < 0) fail(errc::invalid_input, "no edge (" + std::to_string(u) + "," + std::to_string(v) + ")");
  return edges_[static_cast<std::size_t>(idx)].free_speed;
}

DemandMatrix::DemandMatrix(int node_count, std::vector<DemandEntry> entries)
    : n_(node_count), entries_(std::move(entries)) {
  out_.assign(static_cast<std::size_t>(n_), 0.0);
  in_.assign(static_cast<std::size_t>(n_), 0.0);
  int idx = 0;
  for (const DemandEntry& d : entries_) {
    if (d.origin < 0 || d.origin >= n_ || d.destination < 0 || d.destination >= n_) {
      fail(errc::invalid_input, "demand record #" + std::to_string(idx) +
                                    " references unknown node (" + std::to_string(d.origin) + "," +
                                    std::to_string(d.destination) + ")");
    }
    if (d.rate < 0.0) {
      fail(errc::invalid_input, "demand record #" + std::to_string(idx) + " (" +
                                    std::to_string(d.origin) + "->" +
                                    std::to_string(d.destination) + ") has negative rate " +
                                    std::to_string(d.rate));
    }
    lookup_[pair_key(d.origin, d.destination)] += d.rate;
    out_[static_cast<std::size_t>(d.origin)] += d.rate;
    in_[static_cast<std::size_t>(d.destination)] += d.rate;
    total_ += d.rate;
    ++idx;
  }
  for (int i = 0; i < n_; ++i) {
    reference_max_ = std::max(reference_max_, std::max(out_rate(i), in_rate(i)));
  }
  pairs_.reserve(lookup_.size());
  for (const auto& [key, rate] : lookup_) {
    if (rate > 0.0) {
      pairs_.push_back({static_cast<int>(key >> 32), static_cast<int>(key & 0xffffffffULL), rate});
    }
  }
  std::sort(pairs_.begin(), pairs_.end(), [](const DemandEntry& a, const DemandEntry& b) {
    return a.origin != b.origin ? a.origin < b.origin : a.destination < b.destination;
  });
}

double DemandMatrix::rate(int origin, int destination) const {
  const auto it = lookup_.find(pair_key(origin, destination));
  return it == lookup_.end() ? 0.0 : it->second;
}

namespace {

using nlohmann::json;

int map_source_id(const std::unordered_map<std::int64_t, int>& id_map, std::int64_t source,
                  const std::string& where) {
  const auto it = id_map.find(source);
  if (it == id_map.end()) {
    fail(errc::invalid_input, where + " references unknown node id " + std::to_string(source));
  }
  return it->second;
}

}  // namespace

Network parse_network(const std::string& json_text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(errc::parse, origin + ": " + e.what());
  }
  try {
    std::vector<Node> nodes;
    std::vector<std::int64_t> source_ids;
    std::unordered_map<std::int64_t, int> id_map;
    for (const auto& jn : doc.at("nodes")) {
      const auto source = jn.at("id").get<std::int64_t>();
      if (!id_map.emplace(source, static_cast<int>(nodes.size())).second) {
        fail(errc::invalid_input, origin + ": duplicate node id " + std::to_string(source));
      }
      nodes.push_back({static_cast<int>(nodes.size()), jn.at("x").get<double>(),
                       jn.at("y").get<double>()});
      source_ids.push_back(source);
    }

    std::vector<Edge> edges;
    int edge_idx = 0;
    for (const auto& je : doc.at("edges")) {
      const std::string where = origin + ": edge #" + std::to_string(edge_idx);
      Edge e;
      e.u = map_source_id(id_map, je.at("u").get<std::int64_t>(), where);
      e.v = map_source_id(id_map, je.at("v").get<std::int64_t>(), where);
      e.length = je.at("length").get<double>();
      e.free_speed = je.at("free_speed").get<double>();
      edges.push_back(e);
      ++edge_idx;
    }

    const int center = map_source_id(id_map, doc.at("transit_center").get<std::int64_t>(),
                                     origin + ": transit_center");
    RoadGraph graph(std::move(nodes), std::move(edges), center);

    std::vector<DemandEntry> demand;
    if (doc.contains("demand")) {
      int rec = 0;
      for (const auto& jd : doc.at("demand")) {
        const std::string where = origin + ": demand record #" + std::to_string(rec);
        DemandEntry d;
        d.origin = map_source_id(id_map, jd.at("o").get<std::int64_t>(), where);
        d.destination = map_source_id(id_map, jd.at("d").get<std::int64_t>(), where);
        d.rate = jd.at("rate").get<double>();
        demand.push_back(d);
        ++rec;
      }
    }
    DemandMatrix matrix(graph.node_count(), std::move(demand));

    std::vector<std::vector<int>> real_routes;
    if (doc.contains("real_routes")) {
      int route_idx = 0;
      for (const auto& jr : doc.at("real_routes")) {
        const std::string where = origin + ": real_routes[" + std::to_string(route_idx) + "]";
        std::vector<int> route;
        for (const auto& jid : jr) {
          route.push_back(map_source_id(id_map, jid.get<std::int64_t>(), where));
        }
        if (route.empty()) fail(errc::invalid_input, where + " is empty");
        std::vector<bool> seen(static_cast<std::size_t>(graph.node_count()), false);
        for (std::size_t i = 0; i < route.size(); ++i) {
          if (seen[static_cast<std::size_t>(route[i])]) {
            fail(errc::invalid_input, where + " repeats node " + std::to_string(route[i]));
          }
          seen[static_cast<std::size_t>(route[i])] = true;
          if (i > 0 && !graph.has_edge(route[i - 1], route[i])) {
            fail(errc::invalid_input, where + " uses missing edge (" +
                                          std::to_string(route[i - 1]) + "," +
                                          std::to_string(route[i]) + ")");
          }
        }
        real_routes.push_back(std::move(route));
        ++route_idx;
      }
    }

    return Network{std::move(graph), std::move(matrix), std::move(real_routes),
                   std::move(source_ids)};
  } catch (const json::exception& e) {
    fail(errc::parse, origin + ": " + e.what());
  }
}

Network load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(errc::io, "cannot open network file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_network(buf.str(), path);
}

std::string network_to_json(const Network& net) {
  nlohmann::json doc;
  doc["nodes"] = nlohmann::json::array();
  for (const Node& n : net.graph.nodes()) {
    doc["nodes"].push_back({{"id", net.source_ids[static_cast<std::size_t>(n.id)]},
                            {"x", n.x},
                            {"y", n.y}});
  }
  doc["edges"] = nlohmann::json::array();
  for (const Edge& e : net.graph.edges()) {
    doc["edges"].push_back({{"u", net.source_ids[static_cast<std::size_t>(e.u)]},
                            {"v", net.source_ids[static_cast<std::size_t>(e.v)]},
                            {"length", e.length},
                            {"free_speed", e.free_speed}});
  }
  doc["transit_center"] = net.source_ids[static_cast<std::size_t>(net.graph.transit_center())];
  doc["demand"] = nlohmann::json::array();
  for (const DemandEntry& d : net.demand.entries()) {
    doc["demand"].push_back({{"o", net.source_ids[static_cast<std::size_t>(d.origin)]},
                             {"d", net.source_ids[static_cast<std::size_t>(d.destination)]},
                             {"rate", d.rate}});
  }
  if (!net.real_routes.empty()) {
    doc["real_routes"] = nlohmann::json::array();
    for (const auto& route : net.real_routes) {
      nlohmann::json jr = nlohmann::json::array();
      for (int node : route) jr.push_back(net.source_ids[static_cast<std::size_t>(node)]);
      doc["real_routes"].push_back(jr);
    }
  }
  return doc.dump(2);
}

std::vector<int> candidate_set(const RoadGraph& graph, const PartialDesign& partial) {
  if (partial.current.nodes.empty()) fail(errc::invalid_state, "current route is empty");
  const int frontier = partial.current.nodes.back();
  std::vector<bool> visited(static_cast<std::size_t>(graph.node_count()), false);
  for (int node : partial.current.nodes) visited[static_cast<std::size_t>(node)] = true;
  std::vector<int> result;
  for (int nb : graph.neighbors(frontier)) {
    if (!visited[static_cast<std::size_t>(nb)]) result.push_back(nb);
  }
  return result;  // neighbors are stored ascending
}

std::pair<double, double> od_marginals(const DemandMatrix& demand, int node) {
  return {demand.out_rate(node), demand.in_rate(node)};
}

namespace {

// Min-max over [lo,hi]; a degenerate span maps to 0.5.
double min_max(double v, double lo, double hi) {
  if (hi <= lo) return 0.5;
  return (v - lo) / (hi - lo);
}

}  // namespace

StateEncoding encode_state(const RoadGraph& graph, const DemandMatrix& demand,
                           const PartialDesign& partial, const std::vector<int>& candidates) {
  const int n = graph.node_count();
  StateEncoding enc;
  enc.node_count = n;
  enc.node_features.assign(static_cast<std::size_t>(n) * StateEncoding::kNodeFeatures, 0.0);

  double min_x = graph.nodes()[0].x, max_x = min_x;
  double min_y = graph.nodes()[0].y, max_y = min_y;
  int max_degree = 0;
  for (const Node& node : graph.nodes()) {
    min_x = std::min(min_x, node.x);
    max_x = std::max(max_x, node.x);
    min_y = std::min(min_y, node.y);
    max_y = std::max(max_y, node.y);
    max_degree = std::max(max_degree, graph.degree(node.id));
  }

  std::vector<bool> on_current(static_cast<std::size_t>(n), false);
  for (int node : partial.current.nodes) on_current[static_cast<std::size_t>(node)] = true;
  std::vector<bool> is_candidate(static_cast<std::size_t>(n), false);
  for (int node : candidates) is_candidate[static_cast<std::size_t>(node)] = true;
  std::vector<int> completed_count(static_cast<std::size_t>(n), 0);
  for (const RoutePath& route : partial.completed) {
    for (int node : route.nodes) ++completed_count[static_cast<std::size_t>(node)];
  }
  std::vector<bool> in_core(static_cast<std::size_t>(n), false);
  for (int i = 0; i < n; ++i) {
    in_core[static_cast<std::size_t>(i)] =
        on_current[static_cast<std::size_t>(i)] || completed_count[static_cast<std::size_t>(i)] > 0;
  }

  // Demand sums restricted to the current route, completed routes, and core.
  std::vector<double> cur_out(static_cast<std::size_t>(n), 0.0),
      cur_in(static_cast<std::size_t>(n), 0.0), cmp_out(static_cast<std::size_t>(n), 0.0),
      cmp_in(static_cast<std::size_t>(n), 0.0), core_out(static_cast<std::size_t>(n), 0.0),
      core_in(static_cast<std::size_t>(n), 0.0);
  for (const DemandEntry& d : demand.entries()) {
    const auto o = static_cast<std::size_t>(d.origin);
    const auto t = static_cast<std::size_t>(d.destination);
    if (on_current[t]) cur_out[o] += d.rate;
    if (on_current[o]) cur_in[t] += d.rate;
    if (completed_count[t] > 0) cmp_out[o] += d.rate;
    if (completed_count[o] > 0) cmp_in[t] += d.rate;
    if (in_core[t]) core_out[o] += d.rate;
    if (in_core[o]) core_in[t] += d.rate;
  }

  const double dref = demand.reference_max();
  const auto scale_demand = [dref](double v) { return dref > 0.0 ? v / dref : 0.0; };
  const int completed_routes = static_cast<int>(partial.completed.size());

  for (int i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    double* row = &enc.node_features[idx * StateEncoding::kNodeFeatures];
    row[kFeatX] = min_max(graph.nodes()[idx].x, min_x, max_x);
    row[kFeatY] = min_max(graph.nodes()[idx].y, min_y, max_y);
    row[kFeatDegree] = max_degree > 0 ? static_cast<double>(graph.degree(i)) / max_degree : 0.0;
    row[kFeatOutRate] = scale_demand(demand.out_rate(i));
    row[kFeatInRate] = scale_demand(demand.in_rate(i));
    row[kFeatCandOut] = is_candidate[idx] ? scale_demand(cur_out[idx]) : 0.0;
    row[kFeatCandIn] = is_candidate[idx] ? scale_demand(cur_in[idx]) : 0.0;
    row[kFeatCoreOut] = in_core[idx] ? scale_demand(core_out[idx]) : 0.0;
    row[kFeatCoreIn] = in_core[idx] ? scale_demand(core_in[idx]) : 0.0;
    row[kFeatAllCurOut] = scale_demand(cur_out[idx]);
    row[kFeatAllCurIn] = scale_demand(cur_in[idx]);
    row[kFeatAllCmpOut] = scale_demand(cmp_out[idx]);
    row[kFeatAllCmpIn] = scale_demand(cmp_in[idx]);
    row[kFeatOnCurrent] = on_current[idx] ? 1.0 : 0.0;
    row[kFeatCompletedFrac] =
        completed_routes > 0 ? static_cast<double>(completed_count[idx]) / completed_routes : 0.0;
    row[kFeatValidNext] = is_candidate[idx] ? 1.0 : 0.0;
  }

  enc.arcs = graph.arcs();
  enc.arc_features.assign(enc.arcs.size() * StateEncoding::kArcFeatures, 0.0);
  if (!graph.edges().empty()) {
    double min_len = graph.edges()[0].length, max_len = min_len;
    double min_speed = graph.edges()[0].free_speed, max_speed = min_speed;
    for (const Edge& e : graph.edges()) {
      min_len = std::min(min_len, e.length);
      max_len = std::max(max_len, e.length);
      min_speed = std::min(min_speed, e.free_speed);
      max_speed = std::max(max_speed, e.free_speed);
    }
    for (std::size_t a = 0; a < enc.arcs.size(); ++a) {
      const Edge& e = graph.edges()[a / 2];  // arcs come in (u,v),(v,u) pairs per edge
      enc.arc_features[a * 2 + 0] = min_max(e.length, min_len, max_len);
      enc.arc_features[a * 2 + 1] = min_max(e.free_speed, min_speed, max_speed);
    }
  }
  return enc;
}

SearchSpaceEstimate estimate_search_space(const RoadGraph& graph, int routes, int max_route_nodes,
                                          bool hub_start) {
  if (max_route_nodes < 2) fail(errc::invalid_input, "max route length must be at least 2 nodes");
  SearchSpaceEstimate est;
  const double d = 2.0 * graph.edge_count() / graph.node_count();
  if (d <= 1.0) {
    est.degenerate = true;
    return est;
  }
  const int route_edges = max_route_nodes - 1;
  double log10_per_route = std::log10(d) + (route_edges - 1) * std::log10(d - 1.0);
  if (!hub_start) log10_per_route += std::log10(static_cast<double>(graph.node_count()));
  est.per_route = std::pow(10.0, log10_per_route);
  est.total_log10 = routes * log10_per_route;
  return est;
}

}  // namespace tnd
