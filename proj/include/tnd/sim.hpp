#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tnd/frequency.hpp"
#include "tnd/graph.hpp"

namespace tnd {

struct SimConfig {
  int horizon = 10000;                  // steps
  double dt = 1.0;                      // seconds per step
  double bus_capacity = 40.0;           // passengers
  double dwell = 60.0;                  // seconds per visited stop
  double access_radius = 500.0;         // meters
  double congestion_coefficient = 0.0;  // 0 turns the slowdown off
  double congestion_exponent = 4.0;
  double reference_volume = 1800.0;     // veh/hour; scale for the volume ratio
  std::uint64_t rng_seed = 0;
};

struct RouteGraph {
  std::vector<int> nodes;                       // served nodes, ascending
  std::vector<Segment> segments;                // unique undirected segments
  std::map<Segment, std::vector<int>> members;  // route indices per segment
  std::vector<std::vector<int>> adj;            // adjacency over 0..n-1, sorted
  std::vector<bool> served;                     // size n
};

RouteGraph build_route_graph(const RouteSet& routes, int node_count);

struct ItineraryLeg {
  int route = 0;
  int board = 0;
  int alight = 0;
};

struct Itinerary {
  std::vector<ItineraryLeg> legs;
  int transfers() const { return legs.empty() ? 0 : static_cast<int>(legs.size()) - 1; }
};

// Minimum-hop itinerary between two served nodes, decomposed into maximal
// single-route legs (greedily extending each route as far as possible).
// Returns nullopt when the destination is unreachable on the route graph.
std::optional<Itinerary> plan_itinerary(const RouteGraph& rg, const RouteSet& routes, int origin,
                                        int destination);

struct SimulationReport {
  long long n_want = 0;      // spawned passengers (all have feasible itineraries)
  long long n_od = 0;        // citywide transit spawn count ignoring reachability
  long long n_comp = 0;      // completed trips
  long long n_ongoing = 0;   // onboard at the horizon
  long long n_waiting = 0;   // waiting at the horizon
  long long n_transfer = 0;  // completed trips with at least one transfer
  double wait_seconds_served = 0.0;  // accumulated over completed + ongoing
  double move_seconds_served = 0.0;
  double bus_occupancy_mean = 0.0;  // mean over buses of time-avg occupancy / capacity
  int buses_dispatched = 0;
  FrequencyVector frequencies;
  FleetPlan fleet;
  double total_route_km = 0.0;
  long long conservation_violations = 0;
  bool capacity_exceeded = false;
};

SimulationReport simulate(const RoadGraph& graph, const RouteSet& routes,
                          const FrequencyVector& freq, const FleetPlan& fleet,
                          const DemandMatrix& demand, double alpha, const SimConfig& cfg);

struct Metrics {
  double service_rate = 0.0;      // %
  double wait_time = 0.0;         // min
  double transfer_rate = 0.0;     // %
  double journey_time = 0.0;      // min
  double route_efficiency = 0.0;  // completed pax per route km
  int fleet_size = 0;
  double bus_utilization = 0.0;  // %
};

Metrics compute_metrics(const SimulationReport& report);

// Edge-count overlap over unique undirected segments: 0 disjoint, 1 fully shared.
double overlap_ratio(const RouteSet& routes);

std::string report_to_json(const SimulationReport& report);
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& method, std::uint64_t seed, const Metrics& m);

}  // namespace tnd
