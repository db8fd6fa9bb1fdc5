#pragma once

#include <map>

#include "lvr/trainer.hpp"

namespace lvr {

// ---------------------------------------------------------------------------
// Poincare return-map analysis
// ---------------------------------------------------------------------------

struct PoincareAnalysis {
  std::string section;       // "hopper_apex" or "cycle_section"
  double fixed_point = 0.0;  // scalar section coordinate
  double residual = 0.0;     // |P(x*) - x*|
  Matrix a_p;                // return-map Jacobian (1x1 for these sections)
  Vec eigen_mags;
  double rho = 0.0;  // spectral radius of a_p
  std::size_t crossings_observed = 0;
  bool stable = false;
  std::string verdict;  // "stable" or "unstable"
};

/// One controlled return of the section map, noiseless: starts at the section
/// state with the given coordinate (hopper: apex height; cycle: x1 at x2=0)
/// and runs to the next same-direction crossing. Empty when the rollout fails
/// before returning.
std::optional<double> section_return(const EnvVariant& env, const Controller& ctrl,
                                     double section_value);

/// Estimates the section fixed point from the tail of a long noiseless
/// rollout (mean of the last 25% of crossings), the residual |P(x*) - x*|,
/// and the return-map Jacobian by central differences (one return per
/// perturbation). Stability threshold: spectral radius < 0.98 and residual
/// below 1e-3. Fewer than n_crossings observed crossings yields an
/// "unstable" verdict with partial data.
PoincareAnalysis estimate_return_map(const EnvVariant& env, const Controller& ctrl, double x0,
                                     std::size_t n_crossings, double fd_step = 1e-4,
                                     double stability_threshold = 0.98);

/// Central-difference Jacobian of a scalar-to-scalar map; shared by
/// estimate_return_map and its tests.
double fd_scalar_derivative(const std::function<double(double)>& map_fn, double x, double h);

// ---------------------------------------------------------------------------
// Latent geometry
// ---------------------------------------------------------------------------

struct LatentGeometryReport {
  Vec pc_variance_ratios;  // eigenvalues of the delta covariance over its trace
  Vec pc1_cosines;         // cos(dh_t, PC1) per step
  double bundle_separation = 0.0;  // mean intra-mode cosine minus inter-mode
  bool has_bundles = false;
  bool degenerate = false;  // all latent deltas vanish
  std::size_t n_deltas = 0;
};

/// Geometry of consecutive latent differences dh_t = h_{t+1} - h_t along a
/// latent trajectory. mode_labels (one per sample, optional) drive the
/// bundle-separation score; a delta inherits the label of its left sample.
LatentGeometryReport latent_geometry_from_latents(const std::vector<Vec>& latents,
                                                  const std::vector<int>& mode_labels = {});

/// Runs the net over the trajectory and analyzes its latent deltas. Labels
/// default to the hopper mode flag when the dataset carries one.
LatentGeometryReport latent_geometry(const PolicyNet& net, const Dataset& data,
                                     const std::vector<int>& mode_labels = {});

/// Mode labels an environment assigns to dataset samples (hopper:
/// flight/stance flag; cycle: first/second half of the nominal period).
std::vector<int> env_mode_labels(const EnvVariant& env, const Dataset& data);

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// Root seed split per component, so paired methods share the data and
/// evaluation streams exactly and differ only in training.
struct SeedTriple {
  std::uint64_t data = 0;
  std::uint64_t init = 0;
  std::uint64_t eval = 0;
};
SeedTriple derive_run_seeds(std::uint64_t root, std::uint64_t index);

/// Everything needed to run one train-and-evaluate cell reproducibly.
struct ExperimentSetup {
  EnvVariant env;
  TrainConfig train;
  std::size_t demo_steps = 250;
  double demo_noise_std = 0.005;
  std::size_t eval_episodes = 100;
  RolloutOptions eval;  // horizon + noise levels; seed is derived per cell
  std::size_t poincare_crossings = 30;
  std::uint64_t root_seed = 0;
};

struct SweepCell {
  std::string axis;
  double axis_value = 0.0;
  std::string method;  // "bc", "lvr", "expert"
  std::uint64_t seed = 0;
  bool failed = false;
  std::map<std::string, double> metrics;
};

struct SweepResult {
  std::string axis;
  std::vector<SweepCell> cells;
};

/// Paired-seed comparison of BC and LVR across training-set sizes. Data,
/// initialization and evaluation seeds are shared between methods within a
/// seed so the comparison is paired; the expert row anchors each seed.
/// Cells run independently across `jobs` threads and aggregate in a fixed
/// order, so output is identical for any job count.
SweepResult data_efficiency_sweep(const ExperimentSetup& setup,
                                  const std::vector<std::size_t>& sizes,
                                  const std::vector<std::uint64_t>& seeds, int jobs = 1);

/// Trains on the unperturbed environment at full size, then evaluates under
/// increasing environment perturbation (hopper: per-touchdown ground-height
/// noise; cycle: mu shift).
SweepResult robustness_sweep(const ExperimentSetup& setup, const std::vector<double>& levels,
                             const std::vector<std::uint64_t>& seeds, int jobs = 1);

/// Long-format CSV: axis,axis_value,method,seed,metric,value.
void write_sweep_csv(const SweepResult& sweep, const std::string& path);

/// Mean/std of one metric across seeds for a given (axis_value, method).
struct SweepStat {
  double mean = 0.0;
  double stdev = 0.0;
  std::size_t count = 0;
};
SweepStat sweep_stat(const SweepResult& sweep, double axis_value, const std::string& method,
                     const std::string& metric);

}  // namespace lvr
