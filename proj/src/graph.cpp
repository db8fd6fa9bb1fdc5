#include "lvr/graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lvr/numerics.hpp"

namespace lvr {

namespace {

std::vector<Vec> standardized_states(const Dataset& data) {
  const Standardizer s = Standardizer::fit(data.states);
  std::vector<Vec> out;
  out.reserve(data.size());
  for (const Vec& x : data.states) out.push_back(s.apply(x));
  return out;
}

double dist(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

/// Empirical quantile with linear interpolation between order statistics.
double quantile(Vec values, double q) {
  std::sort(values.begin(), values.end());
  if (values.size() == 1) return values[0];
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

}  // namespace

std::vector<Edge> build_knn(const Dataset& data, std::size_t k) {
  data.validate();
  const std::size_t n = data.size();
  if (k < 1 || k >= n) throw InvalidParameter("build_knn: k must satisfy 1 <= k < sample count");
  const std::vector<Vec> xs = standardized_states(data);

  std::vector<Edge> edges;
  edges.reserve(n * k);
  std::vector<std::pair<double, std::size_t>> cand(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      cand.emplace_back(dist(xs[i], xs[j]), j);
    }
    std::sort(cand.begin(), cand.end());  // ties broken by lower index
    for (std::size_t r = 0; r < k; ++r) edges.push_back({i, cand[r].second});
  }
  return edges;
}

std::vector<Edge> prune_by_radius(const std::vector<Edge>& edges, const Dataset& data, double q,
                                  Vec* radii_out) {
  if (!(q > 0.0) || q > 1.0) throw InvalidParameter("prune_by_radius: q must be in (0, 1]");
  const std::size_t n = data.size();
  const std::vector<Vec> xs = standardized_states(data);

  std::vector<Vec> node_dists(n);
  std::vector<double> edge_dist(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    edge_dist[e] = dist(xs[edges[e].src], xs[edges[e].dst]);
    node_dists[edges[e].src].push_back(edge_dist[e]);
  }

  Vec radius(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (!node_dists[i].empty()) radius[i] = quantile(node_dists[i], q);

  std::vector<Edge> kept;
  std::vector<char> node_has_edge(n, 0);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (edge_dist[e] < radius[edges[e].src]) {
      kept.push_back(edges[e]);
      node_has_edge[edges[e].src] = 1;
    }
  }

  // Degenerate ties (all outgoing distances equal) remove everything under
  // the strict inequality; fall back to the node's nearest edge.
  std::vector<std::size_t> best_edge(n, edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const std::size_t i = edges[e].src;
    if (best_edge[i] == edges.size() || edge_dist[e] < edge_dist[best_edge[i]]) best_edge[i] = e;
  }
  std::vector<Edge> fallback;
  for (std::size_t i = 0; i < n; ++i)
    if (!node_has_edge[i] && best_edge[i] != edges.size()) fallback.push_back(edges[best_edge[i]]);
  if (!fallback.empty()) {
    // Merge keeping the grouped-by-source, nearest-first order.
    std::vector<Edge> merged;
    merged.reserve(kept.size() + fallback.size());
    std::size_t a = 0, b = 0;
    while (a < kept.size() || b < fallback.size()) {
      if (b == fallback.size() || (a < kept.size() && kept[a].src <= fallback[b].src))
        merged.push_back(kept[a++]);
      else
        merged.push_back(fallback[b++]);
    }
    kept = std::move(merged);
  }

  if (radii_out) *radii_out = radius;
  return kept;
}

std::vector<std::vector<std::size_t>> edge_neighborhoods(const Dataset& data,
                                                         const std::vector<Edge>& edges,
                                                         std::size_t cap) {
  if (edges.empty()) throw InvalidInput("edge_neighborhoods: empty edge list");
  if (cap < 1) throw InvalidParameter("edge_neighborhoods: cap must be >= 1");
  const std::size_t n = data.size();
  const std::vector<Vec> xs = standardized_states(data);

  std::vector<Vec> mid(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const Vec& a = xs[edges[e].src];
    const Vec& b = xs[edges[e].dst];
    Vec m(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) m[j] = 0.5 * (a[j] + b[j]);
    mid[e] = std::move(m);
  }

  std::vector<std::vector<std::size_t>> incident(n);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    incident[edges[e].src].push_back(e);
    incident[edges[e].dst].push_back(e);
  }

  std::vector<std::vector<std::size_t>> nbhd(edges.size());
  std::vector<char> seen(edges.size(), 0);
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    ranked.clear();
    for (std::size_t node : {edges[e].src, edges[e].dst}) {
      for (std::size_t other : incident[node]) {
        if (seen[other]) continue;
        seen[other] = 1;
        ranked.emplace_back(dist(mid[e], mid[other]), other);
      }
    }
    std::sort(ranked.begin(), ranked.end());
    const std::size_t take = std::min(cap, ranked.size());
    nbhd[e].reserve(take);
    bool has_self = false;
    for (std::size_t r = 0; r < take; ++r) {
      nbhd[e].push_back(ranked[r].second);
      if (ranked[r].second == e) has_self = true;
    }
    // Self-distance is 0, but duplicate points can tie cap+ edges at 0 and
    // push e out on index order; force e back in.
    if (!has_self) nbhd[e][take - 1] = e;
    for (const auto& pr : ranked) seen[pr.second] = 0;
  }
  return nbhd;
}

EdgeDeltas edge_deltas(const Dataset& data, const std::vector<Edge>& edges) {
  EdgeDeltas out;
  out.dx.reserve(edges.size());
  out.du.reserve(edges.size());
  out.du_degenerate.reserve(edges.size());
  for (const Edge& e : edges) {
    out.dx.push_back(sub(data.states[e.dst], data.states[e.src]));
    Vec du = sub(data.actions[e.dst], data.actions[e.src]);
    out.du_degenerate.push_back(norm(du) < 1e-10 ? 1 : 0);
    out.du.push_back(std::move(du));
  }
  return out;
}

KnnGraph build_graph(const Dataset& data, std::size_t k, double q, std::size_t cap) {
  const std::size_t n = data.size();
  if (n < 2) throw InvalidInput("build_graph: need at least two samples");
  const std::size_t k_eff = std::min(k, n - 1);  // clamp for tiny datasets
  KnnGraph g;
  const std::vector<Edge> raw = build_knn(data, k_eff);
  g.edges = prune_by_radius(raw, data, q, &g.node_radius);
  g.neighborhoods = edge_neighborhoods(data, g.edges, cap);
  return g;
}

std::string graph_dump_json(const KnnGraph& g) {
  std::ostringstream os;
  os << "{\n  \"edges\": [";
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    if (e) os << ",";
    os << "[" << g.edges[e].src << "," << g.edges[e].dst << "]";
  }
  os << "],\n  \"node_radius\": [";
  for (std::size_t i = 0; i < g.node_radius.size(); ++i) {
    if (i) os << ",";
    os << format_double(g.node_radius[i]);
  }
  os << "],\n  \"neighborhood_sizes\": [";
  for (std::size_t e = 0; e < g.neighborhoods.size(); ++e) {
    if (e) os << ",";
    os << g.neighborhoods[e].size();
  }
  os << "]\n}\n";
  return os.str();
}

}  // namespace lvr
