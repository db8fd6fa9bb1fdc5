#pragma once

#include "lvr/graph.hpp"
#include "lvr/policy.hpp"

namespace lvr {

enum class ProjectionMode { kRowSpace, kIdentity };

struct LossConfig {
  double tau = 0.1;     // softmax temperature
  double lambda = 0.1;  // KL weight; 0 recovers plain behavior cloning
  ProjectionMode projection_mode = ProjectionMode::kRowSpace;
  // Treat the row-space projector as a constant of the current readout when
  // differentiating. Differentiating a pseudo-inverse is ill-conditioned
  // near rank changes; the readout still trains through the BC term.
  bool stop_grad_projection = true;

  void validate() const {
    if (!(tau > 0.0)) throw InvalidParameter("loss config: tau must be positive");
    if (!(lambda >= 0.0)) throw InvalidParameter("loss config: lambda must be non-negative");
  }
};

struct LossReport {
  double l_bc = 0.0;
  double l_kl = 0.0;
  double total = 0.0;
  std::size_t degenerate_edges = 0;
};

/// Control-space orientation scores, fixed by (data, graph) alone and
/// reusable across every training step. `members[e]` lists the entries of
/// N(e) whose control delta is non-degenerate; `scores[e]` holds the cosine
/// between edge e's control delta and each member's, in the same order.
struct ControlOrientationCache {
  std::vector<std::vector<std::size_t>> members;
  std::vector<std::vector<double>> scores;
  std::vector<char> edge_du_degenerate;
};

ControlOrientationCache precompute_control_scores(const Dataset& data, const KnnGraph& graph);

/// Latent chords phi(x_j) - phi(x_i) per edge (exact differences, not
/// Jacobian-vector products).
std::vector<Vec> latent_chords(const PolicyNet& net, const Dataset& data,
                               const std::vector<Edge>& edges);

/// Chords multiplied by the row-space projector of w (or passed through in
/// identity mode, the ablation).
std::vector<Vec> project_chords(const std::vector<Vec>& chords, const Matrix& w,
                                const LossConfig& cfg);

/// Softmax over cos(delta_anchor, delta_j)/tau for j in members. The caller
/// filters degenerate deltas out of members first.
DiscreteDistribution orientation_distribution(const std::vector<Vec>& deltas, std::size_t anchor,
                                              const std::vector<std::size_t>& members, double tau);

/// Mean squared action error over all samples.
double bc_loss(const PolicyNet& net, const Dataset& data);

/// Mean over non-degenerate edges of KL(p_H(.|e) || p_U(.|e)).
double kl_alignment_loss(const PolicyNet& net, const Dataset& data, const KnnGraph& graph,
                         const LossConfig& cfg);

struct LossResult {
  LossReport report;
  GradientBundle grad;
};

/// Combined loss L = L_BC + lambda * L_KL and its exact parameter gradient.
/// p_U is a constant of the data; the projector is rebuilt from the current
/// readout on every call, with its own gradient suppressed unless
/// stop_grad_projection is off (full-row-rank readouts only in that mode).
/// When lambda == 0 the KL term is evaluated for logging but contributes no
/// gradient. Pass cache to reuse precomputed control scores.
LossResult total_loss_and_grad(const PolicyNet& net, const Dataset& data, const KnnGraph& graph,
                               const LossConfig& cfg,
                               const ControlOrientationCache* cache = nullptr,
                               bool want_grad = true);

}  // namespace lvr
