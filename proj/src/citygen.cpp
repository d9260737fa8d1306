#include "tnd/citygen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "tnd/error.hpp"
#include "tnd/rng.hpp"

namespace tnd {

void CityGenParams::validate() const {
  if (kind != "grid" && kind != "geometric") {
    fail(errc::invalid_input, "city kind must be 'grid' or 'geometric'");
  }
  if (kind == "grid" && (rows < 1 || cols < 1 || rows * cols < 2)) {
    fail(errc::invalid_input, "grid needs at least two nodes");
  }
  if (kind == "geometric" && nodes < 2) fail(errc::invalid_input, "need at least two nodes");
  if (!(spacing > 0.0) || !(radius > 0.0) || !(extent > 0.0) || !(free_speed > 0.0)) {
    fail(errc::invalid_input, "lengths and speeds must be positive");
  }
  if (demand_pairs < 0 || rate_min < 0.0 || rate_max < rate_min) {
    fail(errc::invalid_input, "bad demand parameters");
  }
}

namespace {

std::vector<DemandEntry> seeded_demand(int n, const CityGenParams& params, Rng& rng) {
  std::vector<DemandEntry> demand;
  std::set<std::pair<int, int>> used;
  const long long max_pairs = static_cast<long long>(n) * (n - 1);
  const int wanted = static_cast<int>(std::min<long long>(params.demand_pairs, max_pairs));
  int guard = wanted * 50 + 100;
  while (static_cast<int>(demand.size()) < wanted && guard-- > 0) {
    const int o = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(n)));
    const int d = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(n)));
    if (o == d || !used.emplace(o, d).second) continue;
    demand.push_back({o, d, rng.uniform(params.rate_min, params.rate_max)});
  }
  return demand;
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      x = parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    }
    return x;
  }
  bool join(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[static_cast<std::size_t>(a)] = b;
    return true;
  }
};

}  // namespace

Network generate_city(const CityGenParams& params) {
  params.validate();
  Rng rng(params.seed);

  std::vector<Node> nodes;
  std::vector<Edge> edges;
  int center = 0;

  if (params.kind == "grid") {
    for (int r = 0; r < params.rows; ++r) {
      for (int c = 0; c < params.cols; ++c) {
        nodes.push_back({r * params.cols + c, c * params.spacing, r * params.spacing});
      }
    }
    for (int r = 0; r < params.rows; ++r) {
      for (int c = 0; c < params.cols; ++c) {
        const int id = r * params.cols + c;
        if (c + 1 < params.cols) edges.push_back({id, id + 1, params.spacing, params.free_speed});
        if (r + 1 < params.rows) {
          edges.push_back({id, id + params.cols, params.spacing, params.free_speed});
        }
      }
    }
    center = (params.rows / 2) * params.cols + params.cols / 2;
  } else {
    const int n = params.nodes;
    for (int i = 0; i < n; ++i) {
      nodes.push_back({i, rng.uniform(0.0, params.extent), rng.uniform(0.0, params.extent)});
    }
    const auto dist = [&](int a, int b) {
      const double dx = nodes[static_cast<std::size_t>(a)].x - nodes[static_cast<std::size_t>(b)].x;
      const double dy = nodes[static_cast<std::size_t>(a)].y - nodes[static_cast<std::size_t>(b)].y;
      return std::sqrt(dx * dx + dy * dy);
    };
    UnionFind uf(n);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const double d = dist(i, j);
        if (d <= params.radius) {
          edges.push_back({i, j, std::max(d, 1.0), params.free_speed});
          uf.join(i, j);
        }
      }
    }
    // bridge remaining components with their closest cross pairs
    for (;;) {
      double best = 0.0;
      int bi = -1, bj = -1;
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          if (uf.find(i) == uf.find(j)) continue;
          const double d = dist(i, j);
          if (bi < 0 || d < best) {
            best = d;
            bi = i;
            bj = j;
          }
        }
      }
      if (bi < 0) break;
      edges.push_back({bi, bj, std::max(best, 1.0), params.free_speed});
      uf.join(bi, bj);
    }
    // transit center: node closest to the centroid
    double cx = 0.0, cy = 0.0;
    for (const Node& node : nodes) {
      cx += node.x;
      cy += node.y;
    }
    cx /= n;
    cy /= n;
    double best = 0.0;
    for (int i = 0; i < n; ++i) {
      const double dx = nodes[static_cast<std::size_t>(i)].x - cx;
      const double dy = nodes[static_cast<std::size_t>(i)].y - cy;
      const double d = dx * dx + dy * dy;
      if (i == 0 || d < best) {
        best = d;
        center = i;
      }
    }
  }

  const int n = static_cast<int>(nodes.size());
  std::vector<DemandEntry> demand = seeded_demand(n, params, rng);

  RoadGraph graph(std::move(nodes), std::move(edges), center);
  DemandMatrix matrix(n, std::move(demand));
  std::vector<std::int64_t> source_ids(static_cast<std::size_t>(n));
  std::iota(source_ids.begin(), source_ids.end(), 0);
  return Network{std::move(graph), std::move(matrix), {}, std::move(source_ids)};
}

}  // namespace tnd
