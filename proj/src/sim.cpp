#include "tnd/sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "tnd/error.hpp"
#include "tnd/paths.hpp"
#include "tnd/rng.hpp"

namespace tnd {

RouteGraph build_route_graph(const RouteSet& routes, int node_count) {
  RouteGraph rg;
  rg.adj.assign(static_cast<std::size_t>(node_count), {});
  rg.served.assign(static_cast<std::size_t>(node_count), false);
  for (std::size_t k = 0; k < routes.size(); ++k) {
    const auto& nodes = routes[k].nodes;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      rg.served[static_cast<std::size_t>(nodes[i])] = true;
      if (i == 0) continue;
      const Segment seg = make_segment(nodes[i - 1], nodes[i]);
      auto& members = rg.members[seg];
      if (members.empty()) {
        rg.segments.push_back(seg);
        rg.adj[static_cast<std::size_t>(seg.first)].push_back(seg.second);
        rg.adj[static_cast<std::size_t>(seg.second)].push_back(seg.first);
      }
      if (members.empty() || members.back() != static_cast<int>(k)) {
        members.push_back(static_cast<int>(k));
      }
    }
  }
  for (auto& nb : rg.adj) std::sort(nb.begin(), nb.end());
  std::sort(rg.segments.begin(), rg.segments.end());
  for (int i = 0; i < node_count; ++i) {
    if (rg.served[static_cast<std::size_t>(i)]) rg.nodes.push_back(i);
  }
  return rg;
}

std::optional<Itinerary> plan_itinerary(const RouteGraph& rg, const RouteSet& routes, int origin,
                                        int destination) {
  if (origin == destination) return std::nullopt;
  const auto path = min_hop_path(rg.adj, origin, destination);
  if (path.empty()) return std::nullopt;

  Itinerary itin;
  std::size_t pos = 0;
  while (pos + 1 < path.size()) {
    // Greedily pick the route covering the longest run of upcoming segments.
    // Ties go to the lexicographically smallest route node sequence, which
    // keeps itineraries invariant under permutations of route order.
    int best_route = -1;
    std::size_t best_end = pos;
    const auto& first_members = rg.members.at(make_segment(path[pos], path[pos + 1]));
    for (int k : first_members) {
      std::size_t end = pos + 1;
      while (end + 1 < path.size()) {
        const auto it = rg.members.find(make_segment(path[end], path[end + 1]));
        if (it == rg.members.end() ||
            !std::binary_search(it->second.begin(), it->second.end(), k)) {
          break;
        }
        ++end;
      }
      if (end > best_end ||
          (end == best_end && best_route >= 0 &&
           routes[static_cast<std::size_t>(k)].nodes <
               routes[static_cast<std::size_t>(best_route)].nodes)) {
        best_end = end;
        best_route = k;
      }
    }
    itin.legs.push_back({best_route, path[pos], path[best_end]});
    pos = best_end;
  }
  return itin;
}

namespace {

struct Passenger {
  int pair_index = 0;       // index into the feasible-pair table
  int leg = 0;              // current leg of the itinerary
  double wait_acc = 0.0;    // seconds
  double move_acc = 0.0;    // seconds
  double phase_start = 0.0; // queue-join or board time of the current phase
  enum class State { waiting, onboard, completed } state = State::waiting;
};

struct Bus {
  int route = 0;
  int dir = 0;        // 0 forward, 1 reverse
  int position = 0;   // index into the direction-ordered node list
  int timer = 0;      // steps left in the current phase
  bool dwelling = false;
  bool active = true;
  std::vector<int> onboard;      // passenger ids in boarding order
  double occupancy_seconds = 0.0;
  double active_seconds = 0.0;
};

struct FeasiblePair {
  Itinerary itinerary;
  std::vector<int> leg_dirs;  // travel direction per leg
};

std::uint64_t queue_key(int node, int route, int dir) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(node)) << 32) |
         (static_cast<std::uint64_t>(static_cast<std::uint32_t>(route)) << 1) |
         static_cast<std::uint64_t>(dir);
}

}  // namespace

SimulationReport simulate(const RoadGraph& graph, const RouteSet& routes,
                          const FrequencyVector& freq, const FleetPlan& fleet,
                          const DemandMatrix& demand, double alpha, const SimConfig& cfg) {
  // Configuration consistency is checked before any stepping happens.
  if (routes.empty()) fail(errc::invalid_input, "empty design: no routes to simulate");
  for (const auto& r : routes) {
    if (r.nodes.empty()) fail(errc::invalid_input, "design contains an empty route");
  }
  if (freq.size() != routes.size()) {
    fail(errc::invalid_input, "frequency vector does not match route count");
  }
  for (std::size_t k = 0; k < freq.size(); ++k) {
    if (freq[k] < 1) {
      fail(errc::invalid_input, "route " + std::to_string(k) + " has zero frequency");
    }
  }
  if (cfg.horizon <= 0 || !(cfg.dt > 0.0)) fail(errc::invalid_input, "bad horizon/dt");
  if (!(cfg.bus_capacity > 0.0)) fail(errc::invalid_input, "bus capacity must be positive");
  if (cfg.dwell < 0.0) fail(errc::invalid_input, "dwell must be nonnegative");
  const double horizon_seconds = cfg.horizon * cfg.dt;
  for (std::size_t k = 0; k < routes.size(); ++k) {
    if (routes[k].nodes.size() < 2) continue;
    if (3600.0 / freq[k] > horizon_seconds) {
      fail(errc::invalid_input, "horizon does not cover one dispatch headway of route " +
                                    std::to_string(k));
    }
  }

  const int n = graph.node_count();
  const RouteGraph rg = build_route_graph(routes, n);

  // Node position per route, for picking the travel direction of a leg.
  std::vector<std::unordered_map<int, int>> route_pos(routes.size());
  for (std::size_t k = 0; k < routes.size(); ++k) {
    for (std::size_t i = 0; i < routes[k].nodes.size(); ++i) {
      route_pos[k][routes[k].nodes[i]] = static_cast<int>(i);
    }
  }

  // Static car traffic and the resulting effective link speeds.
  std::vector<double> eff_speed(graph.edges().size());
  for (std::size_t e = 0; e < graph.edges().size(); ++e) {
    eff_speed[e] = graph.edges()[e].free_speed;
  }
  if (cfg.congestion_coefficient > 0.0 && alpha < 1.0) {
    std::vector<double> car_volume(graph.edges().size(), 0.0);
    std::vector<std::vector<int>> road_adj(static_cast<std::size_t>(n));
    for (const Edge& e : graph.edges()) {
      road_adj[static_cast<std::size_t>(e.u)].push_back(e.v);
      road_adj[static_cast<std::size_t>(e.v)].push_back(e.u);
    }
    for (auto& nb : road_adj) std::sort(nb.begin(), nb.end());
    std::vector<int> dist;
    int cached_dest = -1;
    for (const DemandEntry& d : demand.pairs()) {
      if (d.origin == d.destination) continue;
      if (d.destination != cached_dest) {
        dist = bfs_hops(road_adj, d.destination);
        cached_dest = d.destination;
      }
      const auto path = min_hop_path_with_dist(road_adj, d.origin, d.destination, dist);
      for (std::size_t i = 1; i < path.size(); ++i) {
        car_volume[static_cast<std::size_t>(graph.edge_index_of(path[i - 1], path[i]))] +=
            (1.0 - alpha) * d.rate;
      }
    }
    for (std::size_t e = 0; e < graph.edges().size(); ++e) {
      const double ratio = car_volume[e] / cfg.reference_volume;
      eff_speed[e] = graph.edges()[e].free_speed /
                     (1.0 + cfg.congestion_coefficient * std::pow(ratio, cfg.congestion_exponent));
    }
  }

  // Access mapping: a demand node maps to itself when served, otherwise to the
  // nearest served node within the access radius (smallest id on ties).
  std::vector<int> access(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    if (rg.served[static_cast<std::size_t>(i)]) {
      access[static_cast<std::size_t>(i)] = i;
      continue;
    }
    double best = cfg.access_radius;
    for (int s : rg.nodes) {
      const double dx = graph.nodes()[static_cast<std::size_t>(i)].x -
                        graph.nodes()[static_cast<std::size_t>(s)].x;
      const double dy = graph.nodes()[static_cast<std::size_t>(i)].y -
                        graph.nodes()[static_cast<std::size_t>(s)].y;
      const double dist = std::sqrt(dx * dx + dy * dy);
      if (dist <= best && (dist < best || access[static_cast<std::size_t>(i)] < 0)) {
        best = dist;
        access[static_cast<std::size_t>(i)] = s;
      }
    }
  }

  SimulationReport report;
  report.frequencies = freq;
  report.fleet = fleet;
  for (const auto& r : routes) {
    for (std::size_t i = 1; i < r.nodes.size(); ++i) {
      report.total_route_km += graph.edge_length(r.nodes[i - 1], r.nodes[i]) / 1000.0;
    }
  }

  // Plan itineraries once per OD pair and lay out deterministic spawn events.
  Rng rng(cfg.rng_seed);
  std::vector<FeasiblePair> feasible;
  struct SpawnEvent {
    int step;
    int pair_index;
  };
  std::vector<SpawnEvent> spawns;
  for (const DemandEntry& d : demand.pairs()) {
    if (d.origin == d.destination) continue;
    const double rate = alpha * d.rate;  // trips/hour
    const auto count = static_cast<long long>(std::floor(rate / 3600.0 * horizon_seconds));
    if (count <= 0) continue;
    report.n_od += count;

    const int board = access[static_cast<std::size_t>(d.origin)];
    const int alight = access[static_cast<std::size_t>(d.destination)];
    if (board < 0 || alight < 0 || board == alight) continue;
    auto itin = plan_itinerary(rg, routes, board, alight);
    if (!itin) continue;

    FeasiblePair fp;
    fp.itinerary = *itin;
    for (const ItineraryLeg& leg : fp.itinerary.legs) {
      const auto& pos = route_pos[static_cast<std::size_t>(leg.route)];
      fp.leg_dirs.push_back(pos.at(leg.board) < pos.at(leg.alight) ? 0 : 1);
    }
    const int pair_index = static_cast<int>(feasible.size());
    feasible.push_back(std::move(fp));

    const double per_step = rate / 3600.0 * cfg.dt;
    for (long long m = 1; m <= count; ++m) {
      auto step = static_cast<long long>(std::ceil(static_cast<double>(m) / per_step)) - 1;
      // seeded jitter of +/- one step
      step += static_cast<long long>(rng.uniform_index(3)) - 1;
      step = std::clamp(step, 0LL, static_cast<long long>(cfg.horizon) - 1);
      spawns.push_back({static_cast<int>(step), pair_index});
    }
  }
  std::stable_sort(spawns.begin(), spawns.end(),
                   [](const SpawnEvent& a, const SpawnEvent& b) { return a.step < b.step; });
  report.n_want = static_cast<long long>(spawns.size());

  // Dispatch schedule: independent forward and reverse streams per route, each
  // at headway 3600/F_k, starting at t=0.
  struct Dispatch {
    int step;
    int route;
    int dir;
  };
  std::vector<Dispatch> dispatches;
  for (std::size_t k = 0; k < routes.size(); ++k) {
    if (routes[k].nodes.size() < 2) continue;
    const double headway = 3600.0 / freq[k];
    for (int dir = 0; dir < 2; ++dir) {
      for (double t = 0.0; t < horizon_seconds; t += headway) {
        dispatches.push_back({static_cast<int>(std::llround(t / cfg.dt)), static_cast<int>(k), dir});
      }
    }
  }
  std::sort(dispatches.begin(), dispatches.end(), [](const Dispatch& a, const Dispatch& b) {
    if (a.step != b.step) return a.step < b.step;
    if (a.route != b.route) return a.route < b.route;
    return a.dir < b.dir;
  });

  const auto dwell_steps = static_cast<int>(std::llround(cfg.dwell / cfg.dt));
  const auto link_steps = [&](int u, int v) {
    const auto e = static_cast<std::size_t>(graph.edge_index_of(u, v));
    const double seconds = graph.edges()[e].length / eff_speed[e];
    return std::max(1, static_cast<int>(std::llround(seconds / cfg.dt)));
  };
  const auto route_node = [&](const Bus& bus, int position) {
    const auto& nodes = routes[static_cast<std::size_t>(bus.route)].nodes;
    return bus.dir == 0 ? nodes[static_cast<std::size_t>(position)]
                        : nodes[nodes.size() - 1 - static_cast<std::size_t>(position)];
  };

  std::vector<Passenger> passengers;
  passengers.reserve(spawns.size());
  std::vector<Bus> buses;
  std::unordered_map<std::uint64_t, std::deque<int>> queues;
  const auto max_onboard = static_cast<std::size_t>(cfg.bus_capacity);

  long long spawned = 0, completed = 0, onboard_total = 0, waiting = 0;

  const auto join_queue = [&](int passenger_id, double now) {
    Passenger& p = passengers[static_cast<std::size_t>(passenger_id)];
    const FeasiblePair& fp = feasible[static_cast<std::size_t>(p.pair_index)];
    const ItineraryLeg& leg = fp.itinerary.legs[static_cast<std::size_t>(p.leg)];
    p.state = Passenger::State::waiting;
    p.phase_start = now;
    queues[queue_key(leg.board, leg.route, fp.leg_dirs[static_cast<std::size_t>(p.leg)])]
        .push_back(passenger_id);
  };

  // Arrival at a node: alight finished legs, then board from the queue, then dwell.
  const auto process_arrival = [&](Bus& bus, double now) {
    const int node = route_node(bus, bus.position);
    for (std::size_t i = 0; i < bus.onboard.size();) {
      Passenger& p = passengers[static_cast<std::size_t>(bus.onboard[i])];
      const FeasiblePair& fp = feasible[static_cast<std::size_t>(p.pair_index)];
      const ItineraryLeg& leg = fp.itinerary.legs[static_cast<std::size_t>(p.leg)];
      if (leg.alight != node) {
        ++i;
        continue;
      }
      const int pid = bus.onboard[i];
      bus.onboard.erase(bus.onboard.begin() + static_cast<std::ptrdiff_t>(i));
      --onboard_total;
      p.move_acc += now - p.phase_start;
      if (p.leg + 1 < static_cast<int>(fp.itinerary.legs.size())) {
        ++p.leg;
        ++waiting;
        join_queue(pid, now);
      } else {
        p.state = Passenger::State::completed;
        ++completed;
        ++report.n_comp;
        if (fp.itinerary.transfers() > 0) ++report.n_transfer;
        report.wait_seconds_served += p.wait_acc;
        report.move_seconds_served += p.move_acc;
      }
    }
    auto queue_it = queues.find(queue_key(node, bus.route, bus.dir));
    if (queue_it != queues.end()) {
      auto& q = queue_it->second;
      while (!q.empty() && bus.onboard.size() < max_onboard) {
        const int pid = q.front();
        q.pop_front();
        Passenger& p = passengers[static_cast<std::size_t>(pid)];
        p.wait_acc += now - p.phase_start;
        p.phase_start = now;
        p.state = Passenger::State::onboard;
        --waiting;
        ++onboard_total;
        bus.onboard.push_back(pid);
      }
    }
    bus.dwelling = true;
    bus.timer = dwell_steps;
  };

  const auto advance_bus = [&](Bus& bus, double now) {
    while (bus.active && bus.timer == 0) {
      if (bus.dwelling) {
        const auto route_len =
            static_cast<int>(routes[static_cast<std::size_t>(bus.route)].nodes.size());
        if (bus.position + 1 >= route_len) {
          bus.active = false;  // end of the line; everyone alighted on arrival
          break;
        }
        bus.dwelling = false;
        bus.timer = link_steps(route_node(bus, bus.position), route_node(bus, bus.position + 1));
      } else {
        ++bus.position;
        process_arrival(bus, now);
      }
    }
  };

  std::size_t next_spawn = 0, next_dispatch = 0;
  for (int step = 0; step < cfg.horizon; ++step) {
    const double now = step * cfg.dt;

    while (next_spawn < spawns.size() && spawns[next_spawn].step == step) {
      Passenger p;
      p.pair_index = spawns[next_spawn].pair_index;
      passengers.push_back(p);
      ++spawned;
      ++waiting;
      join_queue(static_cast<int>(passengers.size()) - 1, now);
      ++next_spawn;
    }

    while (next_dispatch < dispatches.size() && dispatches[next_dispatch].step == step) {
      Bus bus;
      bus.route = dispatches[next_dispatch].route;
      bus.dir = dispatches[next_dispatch].dir;
      bus.position = 0;
      buses.push_back(bus);
      ++report.buses_dispatched;
      Bus& placed = buses.back();
      process_arrival(placed, now);
      advance_bus(placed, now);
      ++next_dispatch;
    }

    for (auto& bus : buses) {
      if (!bus.active) continue;
      if (bus.timer > 0) --bus.timer;
      advance_bus(bus, now + cfg.dt);  // transitions land on the next step boundary
    }

    for (auto& bus : buses) {
      if (!bus.active) continue;
      if (bus.onboard.size() > max_onboard) report.capacity_exceeded = true;
      bus.occupancy_seconds += static_cast<double>(bus.onboard.size()) * cfg.dt;
      bus.active_seconds += cfg.dt;
    }

    if (spawned != completed + onboard_total + waiting) ++report.conservation_violations;
  }

  report.n_ongoing = onboard_total;
  report.n_waiting = waiting;
  for (const auto& p : passengers) {
    if (p.state == Passenger::State::onboard) {
      report.wait_seconds_served += p.wait_acc;
      report.move_seconds_served += p.move_acc + (horizon_seconds - p.phase_start);
    }
  }
  if (!buses.empty()) {
    double sum = 0.0;
    for (const auto& bus : buses) {
      if (bus.active_seconds > 0.0) {
        sum += bus.occupancy_seconds / (bus.active_seconds * cfg.bus_capacity);
      }
    }
    report.bus_occupancy_mean = sum / static_cast<double>(buses.size());
  }
  return report;
}

Metrics compute_metrics(const SimulationReport& report) {
  Metrics m;
  const long long served = report.n_comp + report.n_ongoing;
  m.service_rate =
      report.n_want > 0 ? 100.0 * static_cast<double>(served) / static_cast<double>(report.n_want)
                        : 0.0;
  m.wait_time = served > 0 ? report.wait_seconds_served / static_cast<double>(served) / 60.0 : 0.0;
  m.transfer_rate = report.n_comp > 0 ? 100.0 * static_cast<double>(report.n_transfer) /
                                            static_cast<double>(report.n_comp)
                                      : 0.0;
  m.journey_time =
      served > 0
          ? (report.wait_seconds_served + report.move_seconds_served) / static_cast<double>(served) /
                60.0
          : 0.0;
  m.route_efficiency = report.total_route_km > 0.0
                           ? static_cast<double>(report.n_comp) / report.total_route_km
                           : 0.0;
  m.fleet_size = report.fleet.total;
  m.bus_utilization = 100.0 * report.bus_occupancy_mean;
  return m;
}

double overlap_ratio(const RouteSet& routes) {
  std::map<Segment, int> counts;
  int k_eff = 0;
  for (const auto& r : routes) {
    if (r.nodes.size() < 2) continue;
    ++k_eff;
    for (std::size_t i = 1; i < r.nodes.size(); ++i) {
      ++counts[make_segment(r.nodes[i - 1], r.nodes[i])];
    }
  }
  if (k_eff <= 1 || counts.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [seg, c] : counts) {
    sum += static_cast<double>(c - 1) / static_cast<double>(k_eff - 1);
  }
  return sum / static_cast<double>(counts.size());
}

std::string report_to_json(const SimulationReport& report) {
  const Metrics m = compute_metrics(report);
  nlohmann::json doc;
  doc["n_want"] = report.n_want;
  doc["n_od"] = report.n_od;
  doc["n_comp"] = report.n_comp;
  doc["n_ongoing"] = report.n_ongoing;
  doc["n_waiting"] = report.n_waiting;
  doc["n_transfer"] = report.n_transfer;
  doc["wait_seconds_served"] = report.wait_seconds_served;
  doc["move_seconds_served"] = report.move_seconds_served;
  doc["bus_occupancy_mean"] = report.bus_occupancy_mean;
  doc["buses_dispatched"] = report.buses_dispatched;
  doc["frequencies"] = report.frequencies;
  doc["fleet_per_route"] = report.fleet.per_route;
  doc["fleet_total"] = report.fleet.total;
  doc["total_route_km"] = report.total_route_km;
  doc["conservation_violations"] = report.conservation_violations;
  doc["capacity_exceeded"] = report.capacity_exceeded;
  doc["metrics"] = {{"service_rate", m.service_rate},
                    {"wait_time", m.wait_time},
                    {"transfer_rate", m.transfer_rate},
                    {"journey_time", m.journey_time},
                    {"route_efficiency", m.route_efficiency},
                    {"fleet_size", m.fleet_size},
                    {"bus_utilization", m.bus_utilization}};
  return doc.dump(2);
}

std::string metrics_csv_header() {
  return "method,seed,service_rate,wait_time,transfer_rate,journey_time,route_efficiency,"
         "fleet_size,bus_utilization";
}

std::string metrics_csv_row(const std::string& method, std::uint64_t seed, const Metrics& m) {
  std::ostringstream out;
  out << method << ',' << seed << ',' << m.service_rate << ',' << m.wait_time << ','
      << m.transfer_rate << ',' << m.journey_time << ',' << m.route_efficiency << ','
      << m.fleet_size << ',' << m.bus_utilization;
  return out.str();
}

}  // namespace tnd
