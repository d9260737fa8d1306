#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace tnd {

struct Node {
  int id = 0;
  double x = 0.0;
  double y = 0.0;
};

struct Edge {
  int u = 0;
  int v = 0;
  double length = 0.0;      // meters
  double free_speed = 0.0;  // m/s
};

// Undirected road graph over densely indexed nodes 0..n-1. The directed arc
// list holds both (u,v) and (v,u) for message passing.
class RoadGraph {
 public:
  RoadGraph(std::vector<Node> nodes, std::vector<Edge> edges, int transit_center);

  int node_count() const { return static_cast<int>(nodes_.size()); }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  int transit_center() const { return transit_center_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::pair<int, int>>& arcs() const { return arcs_; }

  // Neighbor ids in ascending order.
  const std::vector<int>& neighbors(int node) const { return adj_[static_cast<std::size_t>(node)]; }
  int degree(int node) const { return static_cast<int>(neighbors(node).size()); }
  bool has_edge(int u, int v) const { return edge_index_of(u, v) >= 0; }
  int edge_index_of(int u, int v) const;  // -1 when absent
  double edge_length(int u, int v) const;
  double edge_free_speed(int u, int v) const;

 private:
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  int transit_center_ = 0;
  std::vector<std::vector<int>> adj_;
  std::vector<std::pair<int, int>> arcs_;
  std::unordered_map<std::uint64_t, int> edge_lookup_;
};

struct DemandEntry {
  int origin = 0;
  int destination = 0;
  double rate = 0.0;  // trips/hour
};

class DemandMatrix {
 public:
  DemandMatrix() = default;
  DemandMatrix(int node_count, std::vector<DemandEntry> entries);

  int node_count() const { return n_; }
  double rate(int origin, int destination) const;
  const std::vector<DemandEntry>& entries() const { return entries_; }
  // Merged positive-rate pairs sorted by (origin, destination); the canonical
  // iteration order for assignment and simulation.
  const std::vector<DemandEntry>& pairs() const { return pairs_; }
  double out_rate(int node) const { return out_[static_cast<std::size_t>(node)]; }
  double in_rate(int node) const { return in_[static_cast<std::size_t>(node)]; }
  double total() const { return total_; }
  // max(max_i sum_j D_ij, max_j sum_i D_ji): the global scale for demand features.
  double reference_max() const { return reference_max_; }

 private:
  int n_ = 0;
  std::vector<DemandEntry> entries_;
  std::vector<DemandEntry> pairs_;
  std::unordered_map<std::uint64_t, double> lookup_;
  std::vector<double> out_;
  std::vector<double> in_;
  double total_ = 0.0;
  double reference_max_ = 0.0;
};

struct Network {
  RoadGraph graph;
  DemandMatrix demand;
  std::vector<std::vector<int>> real_routes;  // dense ids; empty when absent
  std::vector<std::int64_t> source_ids;       // dense id -> id in the source file
};

Network load_network(const std::string& path);
Network parse_network(const std::string& json_text, const std::string& origin);
std::string network_to_json(const Network& net);

struct RoutePath {
  std::vector<int> nodes;
};

struct PartialDesign {
  std::vector<RoutePath> completed;
  RoutePath current;
  int routes_total = 0;  // K
  int max_len = 0;       // L_max, in nodes
};

// Unvisited one-hop neighbors of the current route's frontier, ascending.
std::vector<int> candidate_set(const RoadGraph& graph, const PartialDesign& partial);

// (out_rate, in_rate) of a node.
std::pair<double, double> od_marginals(const DemandMatrix& demand, int node);

struct StateEncoding {
  static constexpr int kNodeFeatures = 16;
  static constexpr int kArcFeatures = 2;

  int node_count = 0;
  std::vector<double> node_features;      // row-major node_count x 16, in [0,1]
  std::vector<std::pair<int, int>> arcs;  // directed (src, dst)
  std::vector<double> arc_features;       // row-major |arcs| x 2, min-max scaled

  double feature(int node, int column) const {
    return node_features[static_cast<std::size_t>(node) * kNodeFeatures +
                         static_cast<std::size_t>(column)];
  }
};

// Fixed column order: x, y, degree | d_out, d_in | cand_out, cand_in |
// core_out, core_in | all_cur_out, all_cur_in, all_cmp_out, all_cmp_in |
// on_current flag, completed fraction, valid_next flag.
enum feature_column : int {
  kFeatX = 0,
  kFeatY = 1,
  kFeatDegree = 2,
  kFeatOutRate = 3,
  kFeatInRate = 4,
  kFeatCandOut = 5,
  kFeatCandIn = 6,
  kFeatCoreOut = 7,
  kFeatCoreIn = 8,
  kFeatAllCurOut = 9,
  kFeatAllCurIn = 10,
  kFeatAllCmpOut = 11,
  kFeatAllCmpIn = 12,
  kFeatOnCurrent = 13,
  kFeatCompletedFrac = 14,
  kFeatValidNext = 15,
};

StateEncoding encode_state(const RoadGraph& graph, const DemandMatrix& demand,
                           const PartialDesign& partial, const std::vector<int>& candidates);

struct SearchSpaceEstimate {
  double per_route = 0.0;    // approximate simple-path count for one route
  double total_log10 = 0.0;  // log10(per_route ^ routes)
  bool degenerate = false;   // average degree <= 1: counts reported as 0
};

// max_route_nodes is the node-count bound L; a route of L nodes has L-1 edges.
SearchSpaceEstimate estimate_search_space(const RoadGraph& graph, int routes, int max_route_nodes,
                                          bool hub_start);

}  // namespace tnd
