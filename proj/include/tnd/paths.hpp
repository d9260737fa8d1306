#pragma once

#include <vector>

namespace tnd {

// Hop distances from source over an adjacency list; -1 for unreachable nodes.
std::vector<int> bfs_hops(const std::vector<std::vector<int>>& adj, int source);

// Minimum-hop path with the deterministic tie rule used everywhere in this
// project: among equal-hop paths, the lexicographically smallest node
// sequence wins. Returns the node sequence including both endpoints
// ({from} when from == to), or an empty vector when unreachable.
std::vector<int> min_hop_path(const std::vector<std::vector<int>>& adj, int from, int to);

// Same, when hop distances from the destination are already available.
std::vector<int> min_hop_path_with_dist(const std::vector<std::vector<int>>& adj, int from, int to,
                                        const std::vector<int>& dist_to_dest);

}  // namespace tnd
