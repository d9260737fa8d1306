#include "tnd/frequency.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "tnd/error.hpp"
#include "tnd/paths.hpp"

namespace tnd {

SegmentLoads assign_segment_loads(const RoadGraph& graph, const RouteSet& routes,
                                  const DemandMatrix& demand, double alpha) {
  const auto n = static_cast<std::size_t>(graph.node_count());

  // Route graph: unweighted adjacency over route segments, overlap counts.
  std::vector<std::vector<int>> adj(n);
  std::map<Segment, int> overlap;
  std::vector<bool> served(n, false);
  for (const RoutePath& route : routes) {
    for (std::size_t i = 0; i < route.nodes.size(); ++i) {
      served[static_cast<std::size_t>(route.nodes[i])] = true;
      if (i == 0) continue;
      const Segment seg = make_segment(route.nodes[i - 1], route.nodes[i]);
      if (++overlap[seg] == 1) {
        adj[static_cast<std::size_t>(seg.first)].push_back(seg.second);
        adj[static_cast<std::size_t>(seg.second)].push_back(seg.first);
      }
    }
  }
  for (auto& nb : adj) std::sort(nb.begin(), nb.end());

  // Raw accumulated loads per segment.
  std::map<Segment, double> total;
  std::vector<int> dist_to_dest;
  int cached_dest = -1;
  for (const DemandEntry& d : demand.pairs()) {
    if (d.origin == d.destination) continue;
    if (!served[static_cast<std::size_t>(d.origin)] ||
        !served[static_cast<std::size_t>(d.destination)]) {
      continue;
    }
    if (d.destination != cached_dest) {
      dist_to_dest = bfs_hops(adj, d.destination);
      cached_dest = d.destination;
    }
    const auto path = min_hop_path_with_dist(adj, d.origin, d.destination, dist_to_dest);
    if (path.empty()) continue;  // endpoints on disconnected route components
    for (std::size_t i = 1; i < path.size(); ++i) {
      total[make_segment(path[i - 1], path[i])] += alpha * d.rate;
    }
  }

  SegmentLoads loads;
  loads.per_route.resize(routes.size());
  for (std::size_t k = 0; k < routes.size(); ++k) {
    const auto& nodes = routes[k].nodes;
    for (std::size_t i = 1; i < nodes.size(); ++i) {
      const Segment seg = make_segment(nodes[i - 1], nodes[i]);
      const auto it = total.find(seg);
      const double raw = it == total.end() ? 0.0 : it->second;
      loads.per_route[k][seg] = raw / overlap.at(seg);
    }
  }
  return loads;
}

namespace {

double max_route_load(const std::map<Segment, double>& segs) {
  double q = 0.0;
  for (const auto& [seg, load] : segs) q = std::max(q, load);
  return q;
}

}  // namespace

FrequencyVector max_load_frequencies(const SegmentLoads& loads, double capacity, double delta_max) {
  if (!(capacity > 0.0)) fail(errc::invalid_input, "bus capacity must be positive");
  if (!(delta_max > 0.0)) fail(errc::invalid_input, "load factor delta_max must be positive");
  FrequencyVector freq;
  freq.reserve(loads.per_route.size());
  for (const auto& segs : loads.per_route) {
    const double q = max_route_load(segs);
    freq.push_back(std::max(1, static_cast<int>(std::ceil(q / (delta_max * capacity)))));
  }
  return freq;
}

bool verify_minimality(const SegmentLoads& loads, double capacity, double delta_max,
                       int f_cap_bound) {
  const std::size_t k = loads.per_route.size();
  std::vector<double> q(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) q[i] = max_route_load(loads.per_route[i]);

  const FrequencyVector projection = max_load_frequencies(loads, capacity, delta_max);
  const auto feasible = [&](const FrequencyVector& f) {
    for (std::size_t i = 0; i < k; ++i) {
      if (q[i] > delta_max * capacity * f[i]) return false;
    }
    return true;
  };
  if (!feasible(projection)) return false;
  for (int f : projection) {
    if (f > f_cap_bound) return false;  // projection outside the enumerated box
  }

  FrequencyVector f(k, 1);
  for (;;) {
    if (feasible(f)) {
      for (std::size_t i = 0; i < k; ++i) {
        if (projection[i] > f[i]) return false;
      }
    }
    std::size_t pos = 0;
    while (pos < k && f[pos] == f_cap_bound) {
      f[pos] = 1;
      ++pos;
    }
    if (pos == k) break;
    ++f[pos];
  }
  return true;
}

FleetPlan fleet_size(const RoadGraph& graph, const RouteSet& routes, const FrequencyVector& freq,
                     double dwell_seconds) {
  if (routes.size() != freq.size()) {
    fail(errc::invalid_input, "frequency vector size does not match route count");
  }
  FleetPlan plan;
  plan.per_route.reserve(routes.size());
  for (std::size_t k = 0; k < routes.size(); ++k) {
    if (freq[k] < 1) fail(errc::invalid_input, "frequency must be positive");
    const auto& nodes = routes[k].nodes;
    double one_way = dwell_seconds * static_cast<double>(nodes.size());
    for (std::size_t i = 1; i < nodes.size(); ++i) {
      one_way += graph.edge_length(nodes[i - 1], nodes[i]) /
                 graph.edge_free_speed(nodes[i - 1], nodes[i]);
    }
    const double round_trip = 2.0 * one_way;
    const double headway = 3600.0 / freq[k];
    const int count = std::max(1, static_cast<int>(std::ceil(round_trip / headway)));
    plan.per_route.push_back(count);
    plan.total += count;
  }
  return plan;
}

}  // namespace tnd
