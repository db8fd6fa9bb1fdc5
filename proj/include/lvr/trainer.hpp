#pragma once

#include "lvr/envs.hpp"
#include "lvr/lvr_loss.hpp"

namespace lvr {

enum class OptimizerKind { kAdam, kSgd };

struct TrainConfig {
  std::size_t epochs = 2000;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden = {128, 128, 128};
  // Graph hyperparameters, applied once before the loop.
  std::size_t k = 32;
  double q = 0.8;
  std::size_t cap = 32;
  LossConfig loss;
  std::size_t log_every = 100;
  std::size_t early_stop_patience = 0;  // epochs without a new best; 0 disables
  bool verbose = false;

  void validate() const {
    if (epochs < 1) throw InvalidParameter("train config: epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw InvalidParameter("train config: learning_rate must be > 0");
    if (hidden.empty()) throw InvalidParameter("train config: need at least one hidden layer");
    loss.validate();
  }
};

struct TrainResult {
  PolicyNet net;  // best-by-total-loss parameters
  std::vector<LossReport> history;
  double best_total = 0.0;
  std::size_t best_epoch = 0;
  double wall_seconds = 0.0;
  TrainConfig config;
  KnnGraph graph;  // built once on the training set, exposed for diagnostics
};

/// Full-batch gradient descent on L = L_BC + lambda L_KL. The kNN graph and
/// the control orientation scores are built once before the loop (the graph
/// lives in state space and does not move with the features). Deterministic
/// given (data, config). Throws on non-finite loss with a diagnostic.
TrainResult train(const Dataset& data, const TrainConfig& cfg);

/// Writes the per-epoch loss history: epoch,l_bc,l_kl,total,degenerate_edges.
void write_loss_csv(const std::vector<LossReport>& history, const std::string& path);

/// Wraps a trained net as a rollout controller (step info is ignored).
Controller policy_controller(const PolicyNet& net);

struct EvalMetrics {
  std::size_t episodes = 0;
  double mean_survival = 0.0;
  double std_survival = 0.0;
  double survival_fraction = 0.0;  // fraction completing the full horizon
  double mean_tracking_error = 0.0;
  double std_tracking_error = 0.0;
  double mean_crossings = 0.0;
  double std_crossings = 0.0;
  std::vector<RolloutResult> per_episode;
};

/// Seeded batch of evaluation rollouts; episode e uses seed mix(seed, e).
EvalMetrics evaluate_policy(const EnvVariant& env, const Controller& ctrl, std::size_t episodes,
                            std::uint64_t seed, const RolloutOptions& opts);

/// evaluate_policy with the policy wrapped as a controller, checking that the
/// checkpoint and environment dimensions agree.
EvalMetrics evaluate_checkpoint(const PolicyNet& net, const EnvVariant& env, std::size_t episodes,
                                std::uint64_t seed, const RolloutOptions& opts);

}  // namespace lvr
