#pragma once

#include "lvr/dataset.hpp"

namespace lvr {

struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  bool operator==(const Edge& o) const { return src == o.src && dst == o.dst; }
};

/// Pruned directed kNN graph over demonstration states with the per-edge
/// neighborhoods consumed by the alignment loss. Distances are Euclidean on
/// standardized states (statistics fit from the dataset itself, matching the
/// policy's input normalization).
struct KnnGraph {
  std::vector<Edge> edges;
  Vec node_radius;                                      // per node
  std::vector<std::vector<std::size_t>> neighborhoods;  // N(e), indices into edges
};

/// State and expert-action differences across edges. Edges whose control
/// delta has norm below 1e-10 are flagged degenerate and excluded from loss
/// sums downstream.
struct EdgeDeltas {
  std::vector<Vec> dx;
  std::vector<Vec> du;
  std::vector<char> du_degenerate;
};

/// Exhaustive kNN: exactly k outgoing edges per node, distance ties broken
/// by lower index. Emitted grouped by source node, nearest first.
std::vector<Edge> build_knn(const Dataset& data, std::size_t k);

/// Keeps edges with d(x_i, x_j) strictly below the node radius eps_i, the
/// empirical q-quantile (linear interpolation) of node i's outgoing-edge
/// distances. If a node loses every edge to ties, its single nearest edge is
/// kept so the loss stays defined. Radii are written to radii_out if given.
std::vector<Edge> prune_by_radius(const std::vector<Edge>& edges, const Dataset& data, double q,
                                  Vec* radii_out = nullptr);

/// N(e): edges sharing either endpoint with e, ranked by distance between
/// standardized edge midpoints, truncated to cap. Always contains e itself.
std::vector<std::vector<std::size_t>> edge_neighborhoods(const Dataset& data,
                                                         const std::vector<Edge>& edges,
                                                         std::size_t cap);

EdgeDeltas edge_deltas(const Dataset& data, const std::vector<Edge>& edges);

/// build_knn + prune_by_radius + edge_neighborhoods in one call.
KnnGraph build_graph(const Dataset& data, std::size_t k, double q, std::size_t cap);

/// Diagnostic dump: edges, radii, neighborhood sizes.
std::string graph_dump_json(const KnnGraph& g);

}  // namespace lvr
