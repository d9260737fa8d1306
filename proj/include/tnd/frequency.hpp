#pragma once

#include <map>
#include <utility>
#include <vector>

#include "tnd/graph.hpp"

namespace tnd {

using RouteSet = std::vector<RoutePath>;

// Segment = unordered node pair, stored as (min, max).
using Segment = std::pair<int, int>;

inline Segment make_segment(int a, int b) { return a < b ? Segment{a, b} : Segment{b, a}; }

// Per-route overlap-normalized segment passenger loads (pax/hour). The keys
// of per_route[k] are exactly the consecutive pairs of route k.
struct SegmentLoads {
  std::vector<std::map<Segment, double>> per_route;
};

// Assign each served OD pair's transit demand (alpha * D_ij) along the
// deterministic minimum-hop path on the unweighted route graph, accumulate
// per traversed segment, then divide by the number of distinct routes
// containing the segment.
SegmentLoads assign_segment_loads(const RoadGraph& graph, const RouteSet& routes,
                                  const DemandMatrix& demand, double alpha);

using FrequencyVector = std::vector<int>;  // buses/hour, every component >= 1

// F_k = max(1, ceil(max segment load of route k / (delta_max * capacity))).
FrequencyVector max_load_frequencies(const SegmentLoads& loads, double capacity, double delta_max);

// Brute-force check over {1..f_cap_bound}^K that the projection is the
// componentwise minimal capacity-feasible integer frequency vector.
bool verify_minimality(const SegmentLoads& loads, double capacity, double delta_max,
                       int f_cap_bound);

struct FleetPlan {
  std::vector<int> per_route;
  int total = 0;
};

// Buses per route from round-trip time at free-flow speed versus headway:
// T_k = 2*(sum of link travel times + dwell per visited stop),
// count_k = max(1, ceil(T_k * F_k / 3600)).
FleetPlan fleet_size(const RoadGraph& graph, const RouteSet& routes, const FrequencyVector& freq,
                     double dwell_seconds);

}  // namespace tnd
