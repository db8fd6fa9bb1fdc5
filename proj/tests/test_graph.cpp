#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <set>

#include "doctest.h"
#include "lvr/graph.hpp"
#include "support/oracles.hpp"

using namespace lvr;

namespace {

Dataset line_dataset(const Vec& positions) {
  Dataset d;
  for (double p : positions) {
    d.states.push_back({p});
    d.actions.push_back({0.5 * p});
  }
  return d;
}

Dataset random_dataset(Rng& rng, std::size_t n, std::size_t sd, std::size_t ad) {
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    Vec x(sd), u(ad);
    for (double& v : x) v = rng.normal();
    for (double& v : u) v = rng.normal();
    d.states.push_back(x);
    d.actions.push_back(u);
  }
  return d;
}

}  // namespace

TEST_CASE("build_knn: three collinear points, k=1") {
  const Dataset d = line_dataset({0.0, 1.0, 3.0});
  const std::vector<Edge> edges = build_knn(d, 1);
  REQUIRE(edges.size() == 3);
  CHECK(edges[0] == Edge{0, 1});
  CHECK(edges[1] == Edge{1, 0});
  CHECK(edges[2] == Edge{2, 1});
}

TEST_CASE("build_knn: k = T-1 gives the complete digraph minus self-loops") {
  Rng rng(5);
  const Dataset d = random_dataset(rng, 7, 2, 1);
  const std::vector<Edge> edges = build_knn(d, 6);
  CHECK(edges.size() == 42);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const Edge& e : edges) {
    CHECK(e.src != e.dst);
    seen.insert({e.src, e.dst});
  }
  CHECK(seen.size() == 42);
}

TEST_CASE("build_knn: duplicated points are mutual nearest neighbors at distance 0") {
  Dataset d = line_dataset({0.0, 0.0, 5.0});
  const std::vector<Edge> edges = build_knn(d, 1);
  CHECK(edges[0] == Edge{0, 1});
  CHECK(edges[1] == Edge{1, 0});
}

TEST_CASE("build_knn: k out of range is rejected") {
  Rng rng(6);
  const Dataset d = random_dataset(rng, 5, 2, 1);
  CHECK_THROWS_AS(build_knn(d, 0), InvalidParameter);
  CHECK_THROWS_AS(build_knn(d, 5), InvalidParameter);
}

TEST_CASE("build_knn: matches the brute-force oracle on random datasets") {
  Rng rng(77);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 5 + rng.below(96);
    const std::size_t k = 1 + rng.below(std::min<std::size_t>(8, n - 1));
    const Dataset d = random_dataset(rng, n, 1 + rng.below(4), 1);
    const std::vector<Edge> mine = build_knn(d, k);
    const std::vector<Edge> oracle = oracles::brute_force_knn(d, k);
    REQUIRE(mine.size() == oracle.size());
    for (std::size_t i = 0; i < mine.size(); ++i) {
      CHECK(mine[i].src == oracle[i].src);
      CHECK(mine[i].dst == oracle[i].dst);
    }
  }
}

TEST_CASE("prune_by_radius: hand-computed quantile on distances {1,2,3,4}") {
  // Node 0 at the origin with neighbors exactly 1, 2, 3, 4 away. With q=0.5
  // the interpolated quantile is 2.5, so distances 1 and 2 survive.
  // Standardization rescales all distances by the same factor, leaving the
  // comparison against the per-node quantile unchanged.
  const Dataset d = line_dataset({0.0, 1.0, 2.0, 3.0, 4.0});
  const std::vector<Edge> raw = build_knn(d, 4);
  Vec radii;
  const std::vector<Edge> kept = prune_by_radius(raw, d, 0.5, &radii);
  std::vector<Edge> node0;
  for (const Edge& e : kept)
    if (e.src == 0) node0.push_back(e);
  REQUIRE(node0.size() == 2);
  CHECK(node0[0].dst == 1);
  CHECK(node0[1].dst == 2);
  // Radius equals the interpolated quantile of the standardized distances.
  const Standardizer st = Standardizer::fit(d.states);
  const double unit = 1.0 / st.std[0];
  CHECK(radii[0] == doctest::Approx(2.5 * unit).epsilon(1e-12));
}

TEST_CASE("prune_by_radius: q=1 removes at most the farthest edge per node") {
  Rng rng(13);
  const Dataset d = random_dataset(rng, 20, 2, 1);
  const std::vector<Edge> raw = build_knn(d, 5);
  const std::vector<Edge> kept = prune_by_radius(raw, d, 1.0);
  for (std::size_t node = 0; node < 20; ++node) {
    std::size_t raw_count = 0, kept_count = 0;
    for (const Edge& e : raw) raw_count += e.src == node;
    for (const Edge& e : kept) kept_count += e.src == node;
    CHECK(kept_count >= raw_count - 1);
    CHECK(kept_count >= 1);
  }
}

TEST_CASE("prune_by_radius: all-equal distances fall back to the nearest edge") {
  // Two clusters of duplicates: every outgoing distance ties, so the strict
  // inequality would drop everything; the guard keeps one edge per node.
  Dataset d = line_dataset({0.0, 0.0, 1.0, 1.0});
  const std::vector<Edge> raw = build_knn(d, 1);
  const std::vector<Edge> kept = prune_by_radius(raw, d, 0.8);
  REQUIRE(kept.size() == 4);
  for (std::size_t node = 0; node < 4; ++node) {
    std::size_t cnt = 0;
    for (const Edge& e : kept) cnt += e.src == node;
    CHECK(cnt == 1);
  }
}

TEST_CASE("prune_by_radius: q out of range is rejected") {
  const Dataset d = line_dataset({0.0, 1.0, 2.0});
  const std::vector<Edge> raw = build_knn(d, 1);
  CHECK_THROWS_AS(prune_by_radius(raw, d, 0.0), InvalidParameter);
  CHECK_THROWS_AS(prune_by_radius(raw, d, 1.5), InvalidParameter);
}

TEST_CASE("edge_neighborhoods: chain graph includes adjacent edges") {
  const Dataset d = line_dataset({0.0, 1.0, 2.1});
  const std::vector<Edge> edges = {{0, 1}, {1, 2}};
  const auto nb = edge_neighborhoods(d, edges, 8);
  REQUIRE(nb.size() == 2);
  CHECK(std::count(nb[0].begin(), nb[0].end(), 0) == 1);
  CHECK(std::count(nb[0].begin(), nb[0].end(), 1) == 1);
  CHECK(std::count(nb[1].begin(), nb[1].end(), 0) == 1);
  CHECK(std::count(nb[1].begin(), nb[1].end(), 1) == 1);
}

TEST_CASE("edge_neighborhoods: isolated mutual pair") {
  const Dataset d = line_dataset({0.0, 1.0, 100.0, 101.0});
  const std::vector<Edge> edges = {{0, 1}, {1, 0}, {2, 3}, {3, 2}};
  const auto nb = edge_neighborhoods(d, edges, 8);
  CHECK(nb[0] == std::vector<std::size_t>{0, 1});
  CHECK(nb[2] == std::vector<std::size_t>{2, 3});
}

TEST_CASE("edge_neighborhoods: cap=1 keeps only the edge itself") {
  Rng rng(19);
  const Dataset d = random_dataset(rng, 12, 2, 1);
  const std::vector<Edge> edges = build_knn(d, 3);
  const auto nb = edge_neighborhoods(d, edges, 1);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    REQUIRE(nb[e].size() == 1);
    CHECK(nb[e][0] == e);
  }
}

TEST_CASE("edge_neighborhoods: every neighborhood contains its own edge and respects the cap") {
  Rng rng(23);
  const Dataset d = random_dataset(rng, 40, 3, 2);
  const KnnGraph g = build_graph(d, 6, 0.8, 5);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    CHECK(!g.neighborhoods[e].empty());
    CHECK(g.neighborhoods[e].size() <= 5);
    CHECK(std::count(g.neighborhoods[e].begin(), g.neighborhoods[e].end(), e) == 1);
  }
}

TEST_CASE("edge_deltas: definition, degeneracy flag, antisymmetry") {
  Dataset d;
  d.states = {{0.0, 0.0}, {1.0, 2.0}, {1.0, 2.0}};
  d.actions = {{1.0}, {3.0}, {3.0}};
  const std::vector<Edge> edges = {{0, 1}, {1, 0}, {1, 2}};
  const EdgeDeltas ed = edge_deltas(d, edges);
  CHECK(ed.dx[0] == Vec{1.0, 2.0});
  CHECK(ed.du[0] == Vec{2.0});
  CHECK_FALSE(ed.du_degenerate[0]);
  // Exact antisymmetry under edge reversal.
  for (std::size_t j = 0; j < 2; ++j) CHECK(ed.dx[1][j] == -ed.dx[0][j]);
  CHECK(ed.du[1][0] == -ed.du[0][0]);
  // Identical samples: zero deltas, flagged degenerate.
  CHECK(ed.dx[2] == Vec{0.0, 0.0});
  CHECK(ed.du_degenerate[2]);
}

TEST_CASE("build_graph: pruning keeps at least one outgoing edge per node") {
  Rng rng(31);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 10 + rng.below(60);
    const Dataset d = random_dataset(rng, n, 2, 1);
    const KnnGraph g = build_graph(d, 5, 0.5, 8);
    std::vector<std::size_t> out(n, 0);
    for (const Edge& e : g.edges) ++out[e.src];
    for (std::size_t i = 0; i < n; ++i) CHECK(out[i] >= 1);
    // Every retained edge is strictly inside its node radius (or is the
    // degenerate-tie fallback, which only fires when everything tied).
    const Standardizer st = Standardizer::fit(d.states);
    for (const Edge& e : g.edges) {
      const Vec a = st.apply(d.states[e.src]);
      const Vec b = st.apply(d.states[e.dst]);
      CHECK(norm(sub(a, b)) <= g.node_radius[e.src] + 1e-12);
    }
  }
}

TEST_CASE("build_graph: deterministic for fixed inputs") {
  Rng rng(37);
  const Dataset d = random_dataset(rng, 30, 3, 2);
  const KnnGraph g1 = build_graph(d, 4, 0.8, 6);
  const KnnGraph g2 = build_graph(d, 4, 0.8, 6);
  CHECK(g1.edges.size() == g2.edges.size());
  for (std::size_t e = 0; e < g1.edges.size(); ++e) {
    CHECK(g1.edges[e] == g2.edges[e]);
    CHECK(g1.neighborhoods[e] == g2.neighborhoods[e]);
  }
  CHECK(g1.node_radius == g2.node_radius);
}

TEST_CASE("build_graph: k clamps for tiny datasets") {
  const Dataset d = line_dataset({0.0, 1.0, 2.0});
  const KnnGraph g = build_graph(d, 32, 0.8, 8);  // k clamped to 2
  std::vector<std::size_t> out(3, 0);
  for (const Edge& e : g.edges) ++out[e.src];
  for (std::size_t i = 0; i < 3; ++i) CHECK(out[i] >= 1);
}

TEST_CASE("graph_dump_json: emits edges, radii and neighborhood sizes") {
  const Dataset d = line_dataset({0.0, 1.0, 3.0});
  const KnnGraph g = build_graph(d, 1, 1.0, 4);
  const std::string j = graph_dump_json(g);
  CHECK(j.find("\"edges\"") != std::string::npos);
  CHECK(j.find("\"node_radius\"") != std::string::npos);
  CHECK(j.find("\"neighborhood_sizes\"") != std::string::npos);
}
