#include "lvr/lvr_loss.hpp"

#include <cmath>

namespace lvr {

namespace {

constexpr double kDegenerateNorm = 1e-10;
constexpr double kCosineGuard = 1e-12;
constexpr double kProbFloor = 1e-12;

}  // namespace

ControlOrientationCache precompute_control_scores(const Dataset& data, const KnnGraph& graph) {
  const EdgeDeltas deltas = edge_deltas(data, graph.edges);
  ControlOrientationCache cache;
  const std::size_t m = graph.edges.size();
  cache.members.resize(m);
  cache.scores.resize(m);
  cache.edge_du_degenerate.assign(m, 0);
  for (std::size_t e = 0; e < m; ++e) {
    cache.edge_du_degenerate[e] = deltas.du_degenerate[e];
    if (deltas.du_degenerate[e]) continue;
    for (std::size_t j : graph.neighborhoods[e]) {
      if (deltas.du_degenerate[j]) continue;
      cache.members[e].push_back(j);
      cache.scores[e].push_back(cosine_similarity(deltas.du[e], deltas.du[j]));
    }
  }
  return cache;
}

std::vector<Vec> latent_chords(const PolicyNet& net, const Dataset& data,
                               const std::vector<Edge>& edges) {
  std::vector<Vec> latents;
  latents.reserve(data.size());
  for (const Vec& x : data.states) latents.push_back(forward_latent(net, x));
  std::vector<Vec> chords;
  chords.reserve(edges.size());
  for (const Edge& e : edges) chords.push_back(sub(latents[e.dst], latents[e.src]));
  return chords;
}

std::vector<Vec> project_chords(const std::vector<Vec>& chords, const Matrix& w,
                                const LossConfig& cfg) {
  if (cfg.projection_mode == ProjectionMode::kIdentity) return chords;
  const Matrix p = row_space_projection(w);
  std::vector<Vec> out;
  out.reserve(chords.size());
  for (const Vec& c : chords) out.push_back(p.apply(c));
  return out;
}

DiscreteDistribution orientation_distribution(const std::vector<Vec>& deltas, std::size_t anchor,
                                              const std::vector<std::size_t>& members, double tau) {
  if (members.empty()) throw InvalidInput("orientation_distribution: empty neighborhood");
  Vec scores;
  scores.reserve(members.size());
  for (std::size_t j : members) scores.push_back(cosine_similarity(deltas[anchor], deltas[j]));
  return softmax(scores, tau);
}

double bc_loss(const PolicyNet& net, const Dataset& data) {
  data.validate();
  if (data.size() == 0) throw InvalidInput("bc_loss: empty dataset");
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vec u = forward_action(net, data.states[i]);
    for (std::size_t r = 0; r < u.size(); ++r) {
      const double d = u[r] - data.actions[i][r];
      acc += d * d;
    }
  }
  return acc / static_cast<double>(data.size());
}

namespace {

// Everything total_loss_and_grad needs per evaluated edge.
struct EdgeTerm {
  std::size_t edge = 0;
  std::vector<std::size_t> members;  // du- and dh-non-degenerate entries of N(e)
  Vec s_h;                           // cos(v_e, v_j)
  DiscreteDistribution p_h;
  DiscreteDistribution p_u;
  double kl = 0.0;
};

}  // namespace

LossResult total_loss_and_grad(const PolicyNet& net, const Dataset& data, const KnnGraph& graph,
                               const LossConfig& cfg, const ControlOrientationCache* cache,
                               bool want_grad) {
  cfg.validate();
  net.validate();
  data.validate();
  if (data.state_dim() != net.input_dim() || data.action_dim() != net.action_dim())
    throw InvalidInput("total_loss: dataset and net dimensions differ");

  const std::size_t n = data.size();
  LossResult res;
  if (want_grad) res.grad = GradientBundle::zeros_like(net);

  // Forward pass over all samples once; tapes feed BC, chords, and backward.
  std::vector<ForwardTape> tapes;
  tapes.reserve(n);
  for (const Vec& x : data.states) tapes.push_back(forward_tape(net, x));

  // L_BC and its per-sample action gradients.
  std::vector<Vec> action_grads(want_grad ? n : 0);
  double l_bc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Vec u = net.readout_w.apply(tapes[i].latent());
    for (std::size_t r = 0; r < u.size(); ++r) u[r] += net.readout_b[r];
    Vec resid = sub(u, data.actions[i]);
    for (double d : resid) l_bc += d * d;
    if (want_grad) action_grads[i] = scale(resid, 2.0 / static_cast<double>(n));
  }
  l_bc /= static_cast<double>(n);

  // KL term over the graph.
  ControlOrientationCache local_cache;
  if (!cache) {
    local_cache = precompute_control_scores(data, graph);
    cache = &local_cache;
  }

  const std::size_t m_edges = graph.edges.size();
  std::vector<Vec> chords(m_edges);
  for (std::size_t e = 0; e < m_edges; ++e)
    chords[e] = sub(tapes[graph.edges[e].dst].latent(), tapes[graph.edges[e].src].latent());
  std::vector<char> dh_degenerate(m_edges, 0);
  for (std::size_t e = 0; e < m_edges; ++e)
    dh_degenerate[e] = norm(chords[e]) < kDegenerateNorm ? 1 : 0;

  const bool row_space = cfg.projection_mode == ProjectionMode::kRowSpace;
  Matrix proj;
  if (row_space) proj = row_space_projection(net.readout_w);
  std::vector<Vec> v(m_edges);
  for (std::size_t e = 0; e < m_edges; ++e) v[e] = row_space ? proj.apply(chords[e]) : chords[e];

  std::vector<EdgeTerm> terms;
  terms.reserve(m_edges);
  std::size_t degenerate = 0;
  double kl_sum = 0.0;
  for (std::size_t e = 0; e < m_edges; ++e) {
    if (cache->edge_du_degenerate[e] || dh_degenerate[e]) {
      ++degenerate;
      continue;
    }
    EdgeTerm term;
    term.edge = e;
    Vec u_scores;
    for (std::size_t idx = 0; idx < cache->members[e].size(); ++idx) {
      const std::size_t j = cache->members[e][idx];
      if (dh_degenerate[j]) continue;
      term.members.push_back(j);
      u_scores.push_back(cache->scores[e][idx]);
    }
    if (term.members.empty()) {  // unreachable: e itself always qualifies
      ++degenerate;
      continue;
    }
    term.s_h.reserve(term.members.size());
    for (std::size_t j : term.members) term.s_h.push_back(cosine_similarity(v[e], v[j]));
    term.p_h = softmax(term.s_h, cfg.tau);
    term.p_u = softmax(u_scores, cfg.tau);
    term.kl = kl_divergence(term.p_h, term.p_u);
    kl_sum += term.kl;
    terms.push_back(std::move(term));
  }
  const double l_kl = terms.empty() ? 0.0 : kl_sum / static_cast<double>(terms.size());

  res.report.l_bc = l_bc;
  res.report.l_kl = l_kl;
  res.report.total = l_bc + cfg.lambda * l_kl;
  res.report.degenerate_edges = degenerate;
  if (!want_grad) return res;

  // Gradient of lambda * L_KL with respect to the projected chords.
  std::vector<Vec> g_v;
  const bool kl_grad = cfg.lambda > 0.0 && !terms.empty();
  if (kl_grad) {
    g_v.assign(m_edges, Vec());
    const double w_term = cfg.lambda / static_cast<double>(terms.size());
    for (const EdgeTerm& term : terms) {
      const std::size_t e = term.edge;
      const double nv_e = norm(v[e]);
      for (std::size_t idx = 0; idx < term.members.size(); ++idx) {
        const std::size_t j = term.members[idx];
        const double p = term.p_h.probs[idx];
        const double q = std::max(term.p_u.probs[idx], kProbFloor);
        const double dkl_ds = (w_term / cfg.tau) * p * (std::log(p / q) - term.kl);
        if (dkl_ds == 0.0) continue;
        const double nv_j = norm(v[j]);
        if (nv_e < kCosineGuard || nv_j < kCosineGuard) continue;  // cos clamped to 0 there
        const double cos_ej = term.s_h[idx];
        if (g_v[e].empty()) g_v[e].assign(v[e].size(), 0.0);
        if (g_v[j].empty()) g_v[j].assign(v[j].size(), 0.0);
        const double inv_ee = 1.0 / (nv_e * nv_e);
        const double inv_jj = 1.0 / (nv_j * nv_j);
        const double inv_ej = 1.0 / (nv_e * nv_j);
        for (std::size_t d = 0; d < v[e].size(); ++d) {
          g_v[e][d] += dkl_ds * (v[j][d] * inv_ej - cos_ej * v[e][d] * inv_ee);
          g_v[j][d] += dkl_ds * (v[e][d] * inv_ej - cos_ej * v[j][d] * inv_jj);
        }
      }
    }
  }

  // Chord gradients and, if requested, the projector's own contribution to
  // the readout gradient: dP = (I-P) dW^T Z + Z^T dW (I-P) with Z = (WW^T)^+ W
  // gives dL/dW += Z (G + G^T)(I - P), G = sum_e g_v[e] dh_e^T.
  std::vector<Vec> g_h(n);
  if (kl_grad) {
    Matrix g_proj;
    const bool through_proj = row_space && !cfg.stop_grad_projection;
    if (through_proj) g_proj = Matrix(net.latent_dim(), net.latent_dim());
    for (std::size_t e = 0; e < m_edges; ++e) {
      if (g_v[e].empty()) continue;
      Vec g_chord = row_space ? proj.apply(g_v[e]) : g_v[e];
      if (through_proj) {
        for (std::size_t r = 0; r < g_v[e].size(); ++r) {
          const double gr = g_v[e][r];
          if (gr == 0.0) continue;
          double* row = g_proj.row_ptr(r);
          const Vec& dh = chords[e];
          for (std::size_t c = 0; c < dh.size(); ++c) row[c] += gr * dh[c];
        }
      }
      const Edge& ed = graph.edges[e];
      if (g_h[ed.dst].empty()) g_h[ed.dst].assign(net.latent_dim(), 0.0);
      if (g_h[ed.src].empty()) g_h[ed.src].assign(net.latent_dim(), 0.0);
      for (std::size_t d = 0; d < g_chord.size(); ++d) {
        g_h[ed.dst][d] += g_chord[d];
        g_h[ed.src][d] -= g_chord[d];
      }
    }
    if (through_proj) {
      const Matrix wt = net.readout_w.transpose();
      const Matrix gram_pinv = pseudo_inverse(net.readout_w * wt);
      const Matrix z = gram_pinv * net.readout_w;  // action_dim x latent_dim
      Matrix sym = g_proj + g_proj.transpose();
      Matrix i_minus_p = Matrix::identity(net.latent_dim()) - proj;
      const Matrix extra = z * sym * i_minus_p;
      for (std::size_t i = 0; i < extra.data().size(); ++i)
        res.grad.readout_w.data()[i] += extra.data()[i];
    }
  }

  for (std::size_t i = 0; i < n; ++i)
    accumulate_backward(net, tapes[i], action_grads[i], g_h[i], res.grad);

  return res;
}

double kl_alignment_loss(const PolicyNet& net, const Dataset& data, const KnnGraph& graph,
                         const LossConfig& cfg) {
  return total_loss_and_grad(net, data, graph, cfg, nullptr, /*want_grad=*/false).report.l_kl;
}

}  // namespace lvr
