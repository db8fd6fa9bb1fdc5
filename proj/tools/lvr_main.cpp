// Command-line front end: generate demonstrations, train policies, evaluate
// rollouts, and run the analysis suites, all driven by one config file.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lvr/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lvr;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_override;
  std::int64_t seed_override = -1;
};

ExperimentConfig load_config(const CommonArgs& args) {
  ExperimentConfig cfg = load_experiment_config(args.config_path);
  if (!args.out_override.empty()) cfg.out_dir = args.out_override;
  if (args.seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed_override);
  return cfg;
}

void ensure_out_dir(const ExperimentConfig& cfg) { fs::create_directories(cfg.out_dir); }

void write_json(const json& j, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << j.dump(1) << "\n";
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

json env_echo(const ExperimentConfig& cfg) {
  json e;
  e["type"] = cfg.env_type;
  if (cfg.env_type == "hopper") {
    const HybridHopperEnv& h = cfg.hopper;
    e["mass"] = h.mass;
    e["spring_k"] = h.spring_k;
    e["rest_length"] = h.rest_length;
    e["gravity"] = h.gravity;
    e["restitution"] = h.restitution;
    e["apex_target"] = h.apex_target;
    e["thrust_limit"] = h.thrust_limit;
    e["dt"] = h.dt;
    e["substeps"] = h.substeps;
  } else {
    e["mu"] = cfg.cycle_mu;
    e["dt"] = cfg.cycle_dt;
    e["steps_per_period"] = cfg.cycle_steps_per_period;
    e["control_limit"] = cfg.cycle_control_limit;
    e["substeps"] = cfg.cycle_substeps;
  }
  return e;
}

std::string dataset_path(const ExperimentConfig& cfg) { return cfg.out_dir + "/dataset.csv"; }

int cmd_generate(const CommonArgs& args) {
  const ExperimentConfig cfg = load_config(args);
  ensure_out_dir(cfg);
  const EnvVariant env = cfg.make_env();
  const SeedTriple seeds = derive_run_seeds(cfg.seed, 0);
  Dataset data = generate_demos(env, cfg.data_steps, cfg.data_noise_std, seeds.data);
  write_dataset_csv(data, dataset_path(cfg));

  // Section crossings contained in the recorded data (hopper: apex flag sign
  // changes are not in the obs, so re-simulate cheaply via the expert).
  std::size_t crossings = 0;
  {
    RolloutOptions opts;
    opts.horizon = cfg.data_steps;
    opts.process_noise_std = cfg.data_noise_std;
    opts.seed = seeds.data;
    const RolloutResult rr = rollout(env, expert_controller(env), opts);
    crossings = rr.crossings;
  }

  json meta;
  meta["samples"] = data.size();
  meta["state_dim"] = data.state_dim();
  meta["action_dim"] = data.action_dim();
  meta["dt"] = data.dt;
  meta["env"] = env_echo(cfg);
  meta["seed"] = cfg.seed;
  meta["data_seed"] = seeds.data;
  meta["noise_std"] = cfg.data_noise_std;
  meta["section_crossings"] = crossings;
  meta["config_hash"] = cfg.config_hash;
  write_json(meta, cfg.out_dir + "/dataset_meta.json");

  std::printf("wrote %zu samples to %s (section crossings in data: %zu)\n", data.size(),
              dataset_path(cfg).c_str(), crossings);
  return 0;
}

int cmd_train(const CommonArgs& args, const std::string& method) {
  const ExperimentConfig cfg = load_config(args);
  ensure_out_dir(cfg);
  if (!fs::exists(dataset_path(cfg))) {
    std::fprintf(stderr, "error: dataset not found at %s (run `lvr generate` first)\n",
                 dataset_path(cfg).c_str());
    return 2;
  }
  const Dataset data = read_dataset_csv(dataset_path(cfg));
  const SeedTriple seeds = derive_run_seeds(cfg.seed, 0);

  TrainConfig tc = cfg.train;
  tc.seed = seeds.init;
  if (method == "bc") tc.loss.lambda = 0.0;
  TrainResult tr = train(data, tc);
  tr.net.config_hash = cfg.config_hash;

  save_checkpoint(tr.net, cfg.out_dir + "/checkpoint_" + method + ".json");
  write_loss_csv(tr.history, cfg.out_dir + "/loss_" + method + ".csv");
  {
    std::ofstream g(cfg.out_dir + "/graph.json", std::ios::binary);
    g << graph_dump_json(tr.graph);
  }
  const LossReport& last = tr.history.back();
  std::printf("method %s: %zu epochs, final l_bc %.6g l_kl %.6g total %.6g (best %.6g @ %zu)\n",
              method.c_str(), tr.history.size(), last.l_bc, last.l_kl, last.total, tr.best_total,
              tr.best_epoch);
  std::printf("wall seconds: %.2f\n", tr.wall_seconds);
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint, std::size_t episodes_override) {
  const ExperimentConfig cfg = load_config(args);
  ensure_out_dir(cfg);
  if (!fs::exists(checkpoint)) {
    std::fprintf(stderr, "error: checkpoint not found: %s\n", checkpoint.c_str());
    return 2;
  }
  const PolicyNet net = load_checkpoint(checkpoint);
  const EnvVariant env = cfg.make_env();
  const SeedTriple seeds = derive_run_seeds(cfg.seed, 0);
  const std::size_t episodes = episodes_override ? episodes_override : cfg.eval_episodes;

  RolloutOptions opts;
  opts.horizon = cfg.horizon;
  opts.process_noise_std = cfg.eval_noise_std;
  opts.init_noise_std = cfg.init_noise_std;
  const EvalMetrics em = evaluate_checkpoint(net, env, episodes, seeds.eval, opts);

  json out;
  out["checkpoint"] = checkpoint;
  out["episodes"] = em.episodes;
  out["horizon"] = cfg.horizon;
  out["mean_survival"] = em.mean_survival;
  out["std_survival"] = em.std_survival;
  out["survival_fraction"] = em.survival_fraction;
  out["mean_tracking_error"] = em.mean_tracking_error;
  out["std_tracking_error"] = em.std_tracking_error;
  out["mean_crossings"] = em.mean_crossings;
  out["std_crossings"] = em.std_crossings;
  out["seed"] = cfg.seed;
  out["eval_seed"] = seeds.eval;
  out["config_hash"] = cfg.config_hash;
  json per = json::array();
  for (const RolloutResult& r : em.per_episode)
    per.push_back({{"survival_steps", r.survival_steps},
                   {"completed", r.completed},
                   {"tracking_error", r.tracking_error},
                   {"crossings", r.crossings}});
  out["per_episode"] = per;
  const std::string path = cfg.out_dir + "/metrics_" + stem_of(checkpoint) + ".json";
  write_json(out, path);
  std::printf("episodes %zu: mean survival %.1f/%zu, survival fraction %.2f, tracking error %.4f\n",
              em.episodes, em.mean_survival, cfg.horizon, em.survival_fraction,
              em.mean_tracking_error);
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

int cmd_analyze_poincare(const CommonArgs& args, const std::string& checkpoint, bool use_expert) {
  const ExperimentConfig cfg = load_config(args);
  ensure_out_dir(cfg);
  const EnvVariant env = cfg.make_env();
  Controller ctrl;
  std::string source;
  if (use_expert) {
    ctrl = expert_controller(env);
    source = "expert";
  } else {
    if (!fs::exists(checkpoint)) {
      std::fprintf(stderr, "error: checkpoint not found: %s\n", checkpoint.c_str());
      return 2;
    }
    ctrl = policy_controller(load_checkpoint(checkpoint));
    source = stem_of(checkpoint);
  }
  const double x0 = cfg.env_type == "hopper" ? cfg.hopper.apex_target
                                             : std::get<SmoothCycleEnv>(env).nominal[0][0];
  const PoincareAnalysis pa = estimate_return_map(env, ctrl, x0, cfg.poincare_crossings);

  json out;
  out["section"] = pa.section;
  out["source"] = source;
  out["fixed_point"] = pa.fixed_point;
  out["residual"] = pa.residual;
  out["a_p"] = pa.a_p.empty() ? json() : json(pa.a_p(0, 0));
  out["eigen_magnitudes"] = pa.eigen_mags;
  out["spectral_radius"] = pa.rho;
  out["crossings_observed"] = pa.crossings_observed;
  out["verdict"] = pa.verdict;
  out["stable"] = pa.stable;
  out["seed"] = cfg.seed;
  out["config_hash"] = cfg.config_hash;
  const std::string path = cfg.out_dir + "/poincare_" + source + ".json";
  write_json(out, path);
  std::printf("section %s: fixed point %.6f, |A_P| rho %.4f, verdict %s\n", pa.section.c_str(),
              pa.fixed_point, pa.rho, pa.verdict.c_str());
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

int cmd_analyze_latent(const CommonArgs& args, const std::string& checkpoint) {
  const ExperimentConfig cfg = load_config(args);
  ensure_out_dir(cfg);
  if (!fs::exists(checkpoint)) {
    std::fprintf(stderr, "error: checkpoint not found: %s\n", checkpoint.c_str());
    return 2;
  }
  if (!fs::exists(dataset_path(cfg))) {
    std::fprintf(stderr, "error: dataset not found at %s (run `lvr generate` first)\n",
                 dataset_path(cfg).c_str());
    return 2;
  }
  const PolicyNet net = load_checkpoint(checkpoint);
  const Dataset data = read_dataset_csv(dataset_path(cfg));
  const EnvVariant env = cfg.make_env();
  const LatentGeometryReport rep = latent_geometry(net, data, env_mode_labels(env, data));

  json out;
  out["checkpoint"] = checkpoint;
  out["n_deltas"] = rep.n_deltas;
  out["degenerate"] = rep.degenerate;
  out["pc_variance_ratios"] = rep.pc_variance_ratios;
  out["pc1_cosines"] = rep.pc1_cosines;
  out["bundle_separation"] = rep.has_bundles ? json(rep.bundle_separation) : json();
  out["seed"] = cfg.seed;
  out["config_hash"] = cfg.config_hash;
  const std::string path = cfg.out_dir + "/latent_" + stem_of(checkpoint) + ".json";
  write_json(out, path);
  if (!rep.pc_variance_ratios.empty())
    std::printf("pc1 variance ratio %.4f over %zu latent deltas\n", rep.pc_variance_ratios[0],
                rep.n_deltas);
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

int cmd_analyze_sweep(const CommonArgs& args, const std::string& axis, int jobs) {
  const ExperimentConfig cfg = load_config(args);
  ensure_out_dir(cfg);
  const ExperimentSetup setup = cfg.make_setup();
  std::vector<std::uint64_t> seeds;
  for (std::size_t s = 0; s < cfg.sweep_seeds; ++s) seeds.push_back(s);

  SweepResult sweep;
  if (axis == "dataset-size") {
    std::vector<std::size_t> sizes = cfg.sizes;
    if (sizes.empty()) sizes = {cfg.data_steps};
    sweep = data_efficiency_sweep(setup, sizes, seeds, jobs);
  } else if (axis == "roughness") {
    std::vector<double> levels = cfg.levels;
    if (levels.empty()) levels = {0.0};
    sweep = robustness_sweep(setup, levels, seeds, jobs);
  } else {
    std::fprintf(stderr, "error: --axis must be dataset-size or roughness\n");
    return 2;
  }
  const std::string csv_path = cfg.out_dir + "/sweep_" + axis + ".csv";
  write_sweep_csv(sweep, csv_path);

  // Summary: mean/std of the headline metrics per (axis value, method).
  json summary;
  summary["axis"] = sweep.axis;
  summary["seed"] = cfg.seed;
  summary["config_hash"] = cfg.config_hash;
  json rows = json::array();
  std::vector<double> axis_values;
  for (const SweepCell& c : sweep.cells)
    if (std::find(axis_values.begin(), axis_values.end(), c.axis_value) == axis_values.end())
      axis_values.push_back(c.axis_value);
  for (double av : axis_values) {
    for (const std::string& method : {"bc", "lvr", "expert"}) {
      const SweepStat surv = sweep_stat(sweep, av, method, "mean_survival");
      if (surv.count == 0) continue;
      json row;
      row["axis_value"] = av;
      row["method"] = method;
      row["mean_survival"] = surv.mean;
      row["std_survival"] = surv.stdev;
      const SweepStat track = sweep_stat(sweep, av, method, "mean_tracking_error");
      row["mean_tracking_error"] = track.mean;
      const SweepStat stable = sweep_stat(sweep, av, method, "stable");
      row["stable_fraction"] = stable.mean;
      const SweepStat pc1 = sweep_stat(sweep, av, method, "pc1_ratio");
      if (pc1.count > 0) row["pc1_ratio"] = pc1.mean;
      row["seeds"] = surv.count;
      rows.push_back(std::move(row));
    }
  }
  summary["rows"] = rows;
  write_json(summary, cfg.out_dir + "/sweep_" + axis + "_summary.json");
  std::printf("wrote %s and its summary\n", csv_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Imitation learning with latent variation regularization on toy hybrid systems"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string method = "lvr";
  std::string checkpoint;
  std::string axis = "dataset-size";
  std::size_t episodes_override = 0;
  bool use_expert = false;
  int jobs = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "experiment config file")->required();
    sub->add_option("--out", common.out_override, "output directory override");
    sub->add_option("--seed", common.seed_override, "root seed override");
  };

  CLI::App* generate = app.add_subcommand("generate", "generate expert demonstrations");
  add_common(generate);

  CLI::App* train_cmd = app.add_subcommand("train", "train a policy on the generated dataset");
  add_common(train_cmd);
  train_cmd->add_option("--method", method, "bc (lambda=0) or lvr")
      ->check(CLI::IsMember({"bc", "lvr"}));

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint over rollouts");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--episodes", episodes_override, "episode count override");

  CLI::App* analyze = app.add_subcommand("analyze", "analysis suites");
  analyze->require_subcommand(1);
  CLI::App* poincare = analyze->add_subcommand("poincare", "return-map stability analysis");
  add_common(poincare);
  poincare->add_option("--checkpoint", checkpoint, "checkpoint file");
  poincare->add_flag("--expert", use_expert, "analyze the analytic expert instead");
  CLI::App* latent = analyze->add_subcommand("latent", "latent-geometry report");
  add_common(latent);
  latent->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  CLI::App* sweep = analyze->add_subcommand("sweep", "data-efficiency or robustness sweep");
  add_common(sweep);
  sweep->add_option("--axis", axis, "dataset-size or roughness");
  sweep->add_option("--jobs", jobs, "parallel cells");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return cmd_generate(common);
    if (train_cmd->parsed()) return cmd_train(common, method);
    if (eval_cmd->parsed()) return cmd_eval(common, checkpoint, episodes_override);
    if (analyze->parsed()) {
      if (poincare->parsed()) {
        if (!use_expert && checkpoint.empty()) {
          std::fprintf(stderr, "error: need --checkpoint or --expert\n");
          return 2;
        }
        return cmd_analyze_poincare(common, checkpoint, use_expert);
      }
      if (latent->parsed()) return cmd_analyze_latent(common, checkpoint);
      if (sweep->parsed()) return cmd_analyze_sweep(common, axis, jobs);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const InvalidParameter& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
