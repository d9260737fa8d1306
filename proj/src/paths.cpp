#include "tnd/paths.hpp"

#include <queue>

namespace tnd {

std::vector<int> bfs_hops(const std::vector<std::vector<int>>& adj, int source) {
  std::vector<int> dist(adj.size(), -1);
  std::queue<int> frontier;
  dist[static_cast<std::size_t>(source)] = 0;
  frontier.push(source);
  while (!frontier.empty()) {
    const int cur = frontier.front();
    frontier.pop();
    for (int nb : adj[static_cast<std::size_t>(cur)]) {
      if (dist[static_cast<std::size_t>(nb)] < 0) {
        dist[static_cast<std::size_t>(nb)] = dist[static_cast<std::size_t>(cur)] + 1;
        frontier.push(nb);
      }
    }
  }
  return dist;
}

std::vector<int> min_hop_path_with_dist(const std::vector<std::vector<int>>& adj, int from, int to,
                                        const std::vector<int>& dist_to_dest) {
  if (from == to) return {from};
  if (dist_to_dest[static_cast<std::size_t>(from)] < 0) return {};
  std::vector<int> path;
  path.reserve(static_cast<std::size_t>(dist_to_dest[static_cast<std::size_t>(from)]) + 1);
  int cur = from;
  path.push_back(cur);
  // Walking toward the destination, always taking the smallest admissible
  // neighbor id, yields the lexicographically smallest minimum-hop sequence.
  while (cur != to) {
    const int want = dist_to_dest[static_cast<std::size_t>(cur)] - 1;
    int next = -1;
    for (int nb : adj[static_cast<std::size_t>(cur)]) {  // ascending ids
      if (dist_to_dest[static_cast<std::size_t>(nb)] == want) {
        next = nb;
        break;
      }
    }
    cur = next;
    path.push_back(cur);
  }
  return path;
}

std::vector<int> min_hop_path(const std::vector<std::vector<int>>& adj, int from, int to) {
  return min_hop_path_with_dist(adj, from, to, bfs_hops(adj, to));
}

}  // namespace tnd
