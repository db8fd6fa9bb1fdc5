#include "lvr/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace lvr {

TrainResult train(const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  if (data.size() < 2) throw InvalidInput("train: need at least two samples");
  const auto t_start = std::chrono::steady_clock::now();

  TrainResult res;
  res.config = cfg;

  // Standardization statistics from the training set; stored with the net so
  // deployment and graph distances agree.
  const Standardizer norm = Standardizer::fit(data.states);

  std::vector<std::size_t> widths;
  widths.push_back(data.state_dim());
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(data.action_dim());
  PolicyNet net = init_params(mix_seed(cfg.seed, 0x696e6974ULL), widths);  // "init"
  net.norm = norm;

  res.graph = build_graph(data, cfg.k, cfg.q, cfg.cap);
  const ControlOrientationCache cache = precompute_control_scores(data, res.graph);

  Vec params = net.to_flat();
  Vec m1(params.size(), 0.0), m2(params.size(), 0.0);  // Adam moments

  res.best_total = std::numeric_limits<double>::infinity();
  PolicyNet best = net;
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    LossResult lr = total_loss_and_grad(net, data, res.graph, cfg.loss, &cache);
    if (!std::isfinite(lr.report.total))
      throw std::runtime_error(
          "train: loss became non-finite at epoch " + std::to_string(epoch) +
          " (learning rate too high?)");
    res.history.push_back(lr.report);
    if (lr.report.total < res.best_total) {
      res.best_total = lr.report.total;
      res.best_epoch = epoch;
      best = net;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience && cfg.early_stop_patience > 0) {
      break;
    }
    if (cfg.verbose && (epoch % std::max<std::size_t>(cfg.log_every, 1) == 0))
      std::printf("epoch %zu  l_bc %.6g  l_kl %.6g  total %.6g\n", epoch, lr.report.l_bc,
                  lr.report.l_kl, lr.report.total);

    const Vec g = lr.grad.to_flat();
    if (cfg.optimizer == OptimizerKind::kAdam) {
      const double t = static_cast<double>(epoch + 1);
      const double c1 = 1.0 - std::pow(cfg.beta1, t);
      const double c2 = 1.0 - std::pow(cfg.beta2, t);
      for (std::size_t i = 0; i < params.size(); ++i) {
        m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * g[i];
        m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        params[i] -= cfg.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + cfg.adam_eps);
      }
    } else {
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg.learning_rate * g[i];
    }
    net.from_flat(params);
  }

  res.net = best;
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return res;
}

void write_loss_csv(const std::vector<LossReport>& history, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "epoch,l_bc,l_kl,total,degenerate_edges\n";
  for (std::size_t e = 0; e < history.size(); ++e) {
    f << e << "," << format_double(history[e].l_bc) << "," << format_double(history[e].l_kl)
      << "," << format_double(history[e].total) << "," << history[e].degenerate_edges << "\n";
  }
}

Controller policy_controller(const PolicyNet& net) {
  return [net](const Vec& obs, const StepInfo&) { return forward_action(net, obs); };
}

EvalMetrics evaluate_policy(const EnvVariant& env, const Controller& ctrl, std::size_t episodes,
                            std::uint64_t seed, const RolloutOptions& opts) {
  if (episodes == 0) throw InvalidParameter("evaluate: episodes must be positive");
  EvalMetrics m;
  m.episodes = episodes;
  m.per_episode.reserve(episodes);
  for (std::size_t e = 0; e < episodes; ++e) {
    RolloutOptions ep = opts;
    ep.seed = mix_seed(seed, e);
    m.per_episode.push_back(rollout(env, ctrl, ep));
  }
  double s1 = 0, s2 = 0, t1 = 0, t2 = 0, c1 = 0, c2 = 0;
  std::size_t completed = 0;
  for (const RolloutResult& r : m.per_episode) {
    const double s = static_cast<double>(r.survival_steps);
    const double c = static_cast<double>(r.crossings);
    s1 += s;
    s2 += s * s;
    t1 += r.tracking_error;
    t2 += r.tracking_error * r.tracking_error;
    c1 += c;
    c2 += c * c;
    if (r.completed) ++completed;
  }
  const double n = static_cast<double>(episodes);
  m.mean_survival = s1 / n;
  m.std_survival = std::sqrt(std::max(s2 / n - m.mean_survival * m.mean_survival, 0.0));
  m.mean_tracking_error = t1 / n;
  m.std_tracking_error =
      std::sqrt(std::max(t2 / n - m.mean_tracking_error * m.mean_tracking_error, 0.0));
  m.mean_crossings = c1 / n;
  m.std_crossings = std::sqrt(std::max(c2 / n - m.mean_crossings * m.mean_crossings, 0.0));
  m.survival_fraction = static_cast<double>(completed) / n;
  return m;
}

EvalMetrics evaluate_checkpoint(const PolicyNet& net, const EnvVariant& env, std::size_t episodes,
                                std::uint64_t seed, const RolloutOptions& opts) {
  const std::size_t env_obs = std::holds_alternative<HybridHopperEnv>(env)
                                  ? std::get<HybridHopperEnv>(env).obs_dim()
                                  : std::get<SmoothCycleEnv>(env).obs_dim();
  const std::size_t env_act = std::holds_alternative<HybridHopperEnv>(env)
                                  ? std::get<HybridHopperEnv>(env).act_dim()
                                  : std::get<SmoothCycleEnv>(env).act_dim();
  if (net.input_dim() != env_obs || net.action_dim() != env_act)
    throw InvalidInput("evaluate_checkpoint: checkpoint dims (" + std::to_string(net.input_dim()) +
                       "," + std::to_string(net.action_dim()) + ") do not match env (" +
                       std::to_string(env_obs) + "," + std::to_string(env_act) + ")");
  return evaluate_policy(env, policy_controller(net), episodes, seed, opts);
}

}  // namespace lvr
