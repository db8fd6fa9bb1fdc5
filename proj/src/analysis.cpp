#include "lvr/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>

namespace lvr {

// ---------------------------------------------------------------------------
// Poincare analysis
// ---------------------------------------------------------------------------

namespace {

std::optional<double> hopper_section_return(const HybridHopperEnv& env, const Controller& ctrl,
                                            double apex) {
  if (apex <= env.rest_length) return std::nullopt;
  HopperState s = hopper_apex_state(env, apex);
  const std::size_t max_steps = static_cast<std::size_t>(20.0 / env.dt);
  for (std::size_t step = 0; step < max_steps; ++step) {
    const Vec u = ctrl(hopper_obs(s), StepInfo{step, static_cast<double>(step) * env.dt, apex});
    HopperStepEvents ev;
    s = hopper_step(env, s, u.empty() ? 0.0 : u[0], 0.0, &ev);
    if (ev.fallen || ev.stalled) return std::nullopt;
    if (ev.apexes > 0) return ev.last_apex_height;
  }
  return std::nullopt;
}

std::optional<double> cycle_section_return(const SmoothCycleEnv& env, const Controller& ctrl,
                                           double x1_section) {
  Vec x = {x1_section, 0.0};
  const std::size_t max_steps = env.steps_per_period * 5;
  for (std::size_t step = 0; step < max_steps; ++step) {
    const Vec u = ctrl(x, StepInfo{step, static_cast<double>(step) * env.dt, 0.0});
    std::optional<Vec> crossing;
    x = cycle_step(env, x, u.empty() ? 0.0 : u[0], &crossing);
    if (crossing) return (*crossing)[0];
    if (std::hypot(x[0], x[1]) > env.state_bound) return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace

std::optional<double> section_return(const EnvVariant& env, const Controller& ctrl,
                                     double section_value) {
  if (std::holds_alternative<HybridHopperEnv>(env))
    return hopper_section_return(std::get<HybridHopperEnv>(env), ctrl, section_value);
  return cycle_section_return(std::get<SmoothCycleEnv>(env), ctrl, section_value);
}

double fd_scalar_derivative(const std::function<double(double)>& map_fn, double x, double h) {
  return (map_fn(x + h) - map_fn(x - h)) / (2.0 * h);
}

PoincareAnalysis estimate_return_map(const EnvVariant& env, const Controller& ctrl, double x0,
                                     std::size_t n_crossings, double fd_step,
                                     double stability_threshold) {
  if (n_crossings < 4) throw InvalidParameter("estimate_return_map: need at least 4 crossings");
  PoincareAnalysis pa;
  pa.section = std::holds_alternative<HybridHopperEnv>(env) ? "hopper_apex" : "cycle_section";
  pa.verdict = "unstable";
  pa.rho = std::numeric_limits<double>::quiet_NaN();

  Vec values;
  double v = x0;
  for (std::size_t k = 0; k < n_crossings; ++k) {
    const std::optional<double> next = section_return(env, ctrl, v);
    if (!next) break;
    v = *next;
    values.push_back(v);
  }
  pa.crossings_observed = values.size();
  if (values.size() < n_crossings) {
    pa.fixed_point = values.empty() ? x0 : values.back();
    return pa;  // closed loop failed before enough returns: unstable, partial data
  }

  const std::size_t tail = std::max<std::size_t>(1, values.size() / 4);
  double acc = 0.0;
  for (std::size_t i = values.size() - tail; i < values.size(); ++i) acc += values[i];
  pa.fixed_point = acc / static_cast<double>(tail);

  const auto ret = [&](double s) -> double {
    const std::optional<double> r = section_return(env, ctrl, s);
    if (!r) throw std::runtime_error("return map probe failed");
    return *r;
  };
  try {
    pa.residual = std::abs(ret(pa.fixed_point) - pa.fixed_point);
    const double slope = fd_scalar_derivative(ret, pa.fixed_point, fd_step);
    pa.a_p = Matrix(1, 1);
    pa.a_p(0, 0) = slope;
    pa.eigen_mags = eigenvalue_magnitudes(pa.a_p);
    pa.rho = spectral_radius(pa.a_p);
  } catch (const std::exception&) {
    return pa;  // probe fell off the attractor: unstable
  }

  // The fixed point must be a live orbit: the uncontrolled hopper contracts
  // onto the collapsed zero-height orbit, which is not stable hopping.
  bool live = true;
  if (std::holds_alternative<HybridHopperEnv>(env)) {
    const auto& h = std::get<HybridHopperEnv>(env);
    live = pa.fixed_point >=
           h.rest_length + h.min_apex_fraction * (h.apex_target - h.rest_length);
  } else {
    const double nominal = std::get<SmoothCycleEnv>(env).nominal.at(0)[0];
    live = pa.fixed_point > 0.5 * nominal && pa.fixed_point < 1.5 * nominal;
  }
  pa.stable = live && pa.rho < stability_threshold && pa.residual < 1e-3;
  pa.verdict = pa.stable ? "stable" : "unstable";
  return pa;
}

// ---------------------------------------------------------------------------
// Latent geometry
// ---------------------------------------------------------------------------

LatentGeometryReport latent_geometry_from_latents(const std::vector<Vec>& latents,
                                                  const std::vector<int>& mode_labels) {
  if (latents.size() < 10)
    throw InvalidInput("latent_geometry: need at least 10 consecutive samples");
  if (!mode_labels.empty() && mode_labels.size() != latents.size())
    throw InvalidInput("latent_geometry: one mode label per sample required");

  LatentGeometryReport rep;
  std::vector<Vec> deltas;
  deltas.reserve(latents.size() - 1);
  for (std::size_t t = 0; t + 1 < latents.size(); ++t)
    deltas.push_back(sub(latents[t + 1], latents[t]));
  rep.n_deltas = deltas.size();

  bool any_live = false;
  for (const Vec& d : deltas)
    if (norm(d) >= 1e-10) {
      any_live = true;
      break;
    }
  if (!any_live) {
    rep.degenerate = true;
    return rep;
  }

  const std::size_t dim = deltas.front().size();
  const PcaResult pcares = pca(deltas, std::min<std::size_t>(dim, 5));
  rep.pc_variance_ratios.resize(pcares.explained_variance.size());
  const double total = std::max(pcares.total_variance, 1e-300);
  for (std::size_t i = 0; i < pcares.explained_variance.size(); ++i)
    rep.pc_variance_ratios[i] = pcares.explained_variance[i] / total;

  Vec pc1(dim);
  for (std::size_t c = 0; c < dim; ++c) pc1[c] = pcares.components(0, c);
  rep.pc1_cosines.reserve(deltas.size());
  for (const Vec& d : deltas) rep.pc1_cosines.push_back(cosine_similarity(d, pc1));

  if (!mode_labels.empty()) {
    double intra = 0.0, inter = 0.0;
    std::size_t n_intra = 0, n_inter = 0;
    for (std::size_t i = 0; i < deltas.size(); ++i) {
      for (std::size_t j = i + 1; j < deltas.size(); ++j) {
        const double c = cosine_similarity(deltas[i], deltas[j]);
        if (mode_labels[i] == mode_labels[j]) {
          intra += c;
          ++n_intra;
        } else {
          inter += c;
          ++n_inter;
        }
      }
    }
    if (n_intra > 0 && n_inter > 0) {
      rep.bundle_separation =
          intra / static_cast<double>(n_intra) - inter / static_cast<double>(n_inter);
      rep.has_bundles = true;
    }
  }
  return rep;
}

LatentGeometryReport latent_geometry(const PolicyNet& net, const Dataset& data,
                                     const std::vector<int>& mode_labels) {
  std::vector<Vec> latents;
  latents.reserve(data.size());
  for (const Vec& x : data.states) latents.push_back(forward_latent(net, x));
  return latent_geometry_from_latents(latents, mode_labels);
}

std::vector<int> env_mode_labels(const EnvVariant& env, const Dataset& data) {
  std::vector<int> labels(data.size(), 0);
  if (std::holds_alternative<HybridHopperEnv>(env)) {
    for (std::size_t i = 0; i < data.size(); ++i)
      labels[i] = data.states[i].size() >= 3 && data.states[i][2] > 0.5 ? 1 : 0;
  } else {
    const auto& cenv = std::get<SmoothCycleEnv>(env);
    const std::size_t n = std::max<std::size_t>(cenv.steps_per_period, 2);
    for (std::size_t i = 0; i < data.size(); ++i) labels[i] = (i % n) < n / 2 ? 0 : 1;
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

SeedTriple derive_run_seeds(std::uint64_t root, std::uint64_t index) {
  return {mix_seed(root, 0xda7aULL, index), mix_seed(root, 0x1417ULL, index),
          mix_seed(root, 0xe7a1ULL, index)};
}

namespace {

double default_section_value(const EnvVariant& env) {
  if (std::holds_alternative<HybridHopperEnv>(env))
    return std::get<HybridHopperEnv>(env).apex_target;
  return std::get<SmoothCycleEnv>(env).nominal.at(0)[0];
}

EnvVariant perturbed_env(const EnvVariant& env, double level) {
  EnvVariant out = env;
  if (std::holds_alternative<HybridHopperEnv>(out)) {
    std::get<HybridHopperEnv>(out).ground_offset_std = level;
  } else {
    std::get<SmoothCycleEnv>(out).mu += level;  // nominal table intentionally kept
  }
  return out;
}

void fill_eval_metrics(SweepCell& cell, const EvalMetrics& em) {
  cell.metrics["mean_survival"] = em.mean_survival;
  cell.metrics["std_survival"] = em.std_survival;
  cell.metrics["survival_fraction"] = em.survival_fraction;
  cell.metrics["mean_tracking_error"] = em.mean_tracking_error;
  cell.metrics["mean_crossings"] = em.mean_crossings;
}

SweepCell run_training_cell(const ExperimentSetup& setup, const EnvVariant& eval_env,
                            const std::string& axis, double axis_value, const std::string& method,
                            std::uint64_t seed, std::size_t data_size) {
  SweepCell cell;
  cell.axis = axis;
  cell.axis_value = axis_value;
  cell.method = method;
  cell.seed = seed;
  const SeedTriple cs = derive_run_seeds(setup.root_seed, seed);
  try {
    Dataset demo = generate_demos(setup.env, std::max(data_size, std::size_t{2}),
                                  setup.demo_noise_std, cs.data);
    const Dataset sub = demo.prefix(data_size);
    TrainConfig tc = setup.train;
    tc.seed = cs.init;
    if (method == "bc") tc.loss.lambda = 0.0;
    const TrainResult tr = train(sub, tc);

    const EvalMetrics em =
        evaluate_checkpoint(tr.net, eval_env, setup.eval_episodes, cs.eval, setup.eval);
    fill_eval_metrics(cell, em);
    cell.metrics["final_l_bc"] = tr.history.back().l_bc;
    cell.metrics["final_l_kl"] = tr.history.back().l_kl;
    cell.metrics["best_total"] = tr.best_total;

    const PoincareAnalysis pa =
        estimate_return_map(eval_env, policy_controller(tr.net), default_section_value(eval_env),
                            setup.poincare_crossings);
    cell.metrics["rho"] = pa.rho;
    cell.metrics["stable"] = pa.stable ? 1.0 : 0.0;
    cell.metrics["fixed_point_residual"] = pa.residual;

    const LatentGeometryReport lg = latent_geometry(tr.net, sub, env_mode_labels(setup.env, sub));
    if (!lg.degenerate && !lg.pc_variance_ratios.empty()) {
      cell.metrics["pc1_ratio"] = lg.pc_variance_ratios[0];
      if (lg.has_bundles) cell.metrics["bundle_separation"] = lg.bundle_separation;
    }
  } catch (const std::exception&) {
    cell.failed = true;
  }
  return cell;
}

SweepCell run_expert_cell(const ExperimentSetup& setup, const EnvVariant& eval_env,
                          const std::string& axis, double axis_value, std::uint64_t seed) {
  SweepCell cell;
  cell.axis = axis;
  cell.axis_value = axis_value;
  cell.method = "expert";
  cell.seed = seed;
  const SeedTriple cs = derive_run_seeds(setup.root_seed, seed);
  try {
    const Controller ctrl = expert_controller(setup.env);
    const EvalMetrics em =
        evaluate_policy(eval_env, ctrl, setup.eval_episodes, cs.eval, setup.eval);
    fill_eval_metrics(cell, em);
    const PoincareAnalysis pa = estimate_return_map(
        eval_env, ctrl, default_section_value(eval_env), setup.poincare_crossings);
    cell.metrics["rho"] = pa.rho;
    cell.metrics["stable"] = pa.stable ? 1.0 : 0.0;
  } catch (const std::exception&) {
    cell.failed = true;
  }
  return cell;
}

// Runs cell jobs across threads, preserving result order.
std::vector<SweepCell> run_cells(std::vector<std::function<SweepCell()>> jobs_list, int jobs) {
  std::vector<SweepCell> out(jobs_list.size());
  if (jobs <= 1) {
    for (std::size_t i = 0; i < jobs_list.size(); ++i) out[i] = jobs_list[i]();
    return out;
  }
  std::size_t next = 0;
  while (next < jobs_list.size()) {
    const std::size_t batch = std::min<std::size_t>(jobs, jobs_list.size() - next);
    std::vector<std::future<SweepCell>> futs;
    futs.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b)
      futs.push_back(std::async(std::launch::async, jobs_list[next + b]));
    for (std::size_t b = 0; b < batch; ++b) out[next + b] = futs[b].get();
    next += batch;
  }
  return out;
}

}  // namespace

SweepResult data_efficiency_sweep(const ExperimentSetup& setup,
                                  const std::vector<std::size_t>& sizes,
                                  const std::vector<std::uint64_t>& seeds, int jobs) {
  if (sizes.empty() || seeds.empty())
    throw InvalidParameter("data_efficiency_sweep: sizes and seeds must be non-empty");
  SweepResult sweep;
  sweep.axis = "dataset-size";
  std::vector<std::function<SweepCell()>> work;
  for (std::size_t size : sizes) {
    for (std::uint64_t seed : seeds) {
      const double av = static_cast<double>(size);
      work.push_back([&setup, av, seed, size] {
        return run_training_cell(setup, setup.env, "dataset-size", av, "bc", seed, size);
      });
      work.push_back([&setup, av, seed, size] {
        return run_training_cell(setup, setup.env, "dataset-size", av, "lvr", seed, size);
      });
      work.push_back([&setup, av, seed] {
        return run_expert_cell(setup, setup.env, "dataset-size", av, seed);
      });
    }
  }
  sweep.cells = run_cells(std::move(work), jobs);
  return sweep;
}

SweepResult robustness_sweep(const ExperimentSetup& setup, const std::vector<double>& levels,
                             const std::vector<std::uint64_t>& seeds, int jobs) {
  if (levels.empty() || seeds.empty())
    throw InvalidParameter("robustness_sweep: levels and seeds must be non-empty");
  SweepResult sweep;
  sweep.axis = "perturbation-level";
  std::vector<std::function<SweepCell()>> work;
  for (double level : levels) {
    for (std::uint64_t seed : seeds) {
      const EnvVariant eval_env = perturbed_env(setup.env, level);
      work.push_back([&setup, eval_env, level, seed] {
        return run_training_cell(setup, eval_env, "perturbation-level", level, "bc", seed,
                                 setup.demo_steps);
      });
      work.push_back([&setup, eval_env, level, seed] {
        return run_training_cell(setup, eval_env, "perturbation-level", level, "lvr", seed,
                                 setup.demo_steps);
      });
      work.push_back([&setup, eval_env, level, seed] {
        return run_expert_cell(setup, eval_env, "perturbation-level", level, seed);
      });
    }
  }
  sweep.cells = run_cells(std::move(work), jobs);
  return sweep;
}

void write_sweep_csv(const SweepResult& sweep, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "axis,axis_value,method,seed,metric,value\n";
  for (const SweepCell& cell : sweep.cells) {
    if (cell.failed) {
      f << cell.axis << "," << format_double(cell.axis_value) << "," << cell.method << ","
        << cell.seed << ",failed,1\n";
      continue;
    }
    for (const auto& [metric, value] : cell.metrics)
      f << cell.axis << "," << format_double(cell.axis_value) << "," << cell.method << ","
        << cell.seed << "," << metric << "," << format_double(value) << "\n";
  }
}

SweepStat sweep_stat(const SweepResult& sweep, double axis_value, const std::string& method,
                     const std::string& metric) {
  SweepStat st;
  double s1 = 0.0, s2 = 0.0;
  for (const SweepCell& cell : sweep.cells) {
    if (cell.failed || cell.method != method || cell.axis_value != axis_value) continue;
    const auto it = cell.metrics.find(metric);
    if (it == cell.metrics.end() || !std::isfinite(it->second)) continue;
    s1 += it->second;
    s2 += it->second * it->second;
    ++st.count;
  }
  if (st.count == 0) return st;
  const double n = static_cast<double>(st.count);
  st.mean = s1 / n;
  st.stdev = std::sqrt(std::max(s2 / n - st.mean * st.mean, 0.0));
  return st;
}

}  // namespace lvr
