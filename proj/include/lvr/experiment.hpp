#pragma once

#include "lvr/analysis.hpp"

namespace lvr {

/// Configuration problems (bad file, unknown key, wrong type, missing block).
/// The CLI maps these to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// One experiment = one config file. Nested blocks mirror the module configs;
/// unknown keys are rejected so typos cannot silently change an experiment.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "runs/experiment";

  std::string env_type;  // "hopper" or "smooth_cycle"
  HybridHopperEnv hopper;
  double cycle_mu = 1.0;
  double cycle_dt = 0.02;
  std::size_t cycle_steps_per_period = 64;
  double cycle_control_limit = 8.0;
  int cycle_substeps = 10;

  std::size_t data_steps = 250;
  double data_noise_std = 0.005;

  TrainConfig train;

  std::size_t eval_episodes = 100;
  std::size_t horizon = 500;
  double eval_noise_std = 0.005;
  double init_noise_std = 0.03;
  std::size_t poincare_crossings = 30;
  std::vector<std::size_t> sizes;   // data-efficiency sweep axis
  std::vector<double> levels;       // robustness sweep axis
  std::size_t sweep_seeds = 10;

  std::string config_hash;  // FNV-1a of the canonical effective config

  /// Builds the environment (tabulates the nominal cycle for smooth_cycle).
  EnvVariant make_env() const;
  ExperimentSetup make_setup() const;
};

ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace lvr
