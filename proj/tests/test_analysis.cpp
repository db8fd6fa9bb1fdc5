#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "lvr/analysis.hpp"

using namespace lvr;

TEST_CASE("fd_scalar_derivative: recovers a known linear map to 1e-4") {
  const auto affine = [](double x) { return 0.37 * x + 2.0; };
  CHECK(std::abs(fd_scalar_derivative(affine, 1.3, 1e-4) - 0.37) < 1e-4);
  const auto quad = [](double x) { return x * x; };
  CHECK(std::abs(fd_scalar_derivative(quad, 3.0, 1e-4) - 6.0) < 1e-4);
}

TEST_CASE("estimate_return_map: expert hopper matches the designed contraction") {
  const HybridHopperEnv env;
  const HopperExpert ex = compute_hopper_expert(env, 0.4);
  const EnvVariant ev{env};
  const PoincareAnalysis pa =
      estimate_return_map(ev, hopper_expert_controller(ex), env.apex_target, 20);
  CHECK(pa.crossings_observed == 20);
  CHECK(std::abs(pa.fixed_point - env.apex_target) < 1e-4);
  CHECK(pa.residual < 1e-6);
  CHECK(std::abs(pa.rho - std::abs(ex.contraction)) < 0.05);
  CHECK(pa.stable);
  CHECK(pa.verdict == "stable");
}

TEST_CASE("estimate_return_map: conservative hopper is a neutral orbit") {
  HybridHopperEnv env;
  env.restitution = 1.0;
  env.min_bounce_speed = 1e-9;
  const Controller zero = [](const Vec&, const StepInfo&) { return Vec{0.0}; };
  const PoincareAnalysis pa = estimate_return_map(EnvVariant{env}, zero, env.apex_target, 12);
  CHECK(pa.crossings_observed == 12);
  CHECK(std::abs(pa.rho - 1.0) < 0.01);
  CHECK_FALSE(pa.stable);
}

TEST_CASE("estimate_return_map: failing policy yields unstable verdict with partial data") {
  const HybridHopperEnv env;
  const Controller zero = [](const Vec&, const StepInfo&) { return Vec{0.0}; };
  const PoincareAnalysis pa = estimate_return_map(EnvVariant{env}, zero, env.apex_target, 30);
  CHECK(pa.crossings_observed < 30);
  CHECK(pa.verdict == "unstable");
  CHECK_FALSE(pa.stable);
}

TEST_CASE("estimate_return_map: cycle expert contracts on its section") {
  const SmoothCycleEnv env = make_smooth_cycle(1.0, 0.02, 64, 8.0);
  const Controller ctrl = cycle_expert_controller(env, compute_cycle_expert(env));
  const PoincareAnalysis pa =
      estimate_return_map(EnvVariant{env}, ctrl, env.nominal[0][0], 10);
  CHECK(pa.crossings_observed == 10);
  CHECK(pa.rho < 0.9);
  CHECK(pa.stable);
}

TEST_CASE("latent_geometry_from_latents: constant latents flag degenerate") {
  std::vector<Vec> latents(15, Vec{1.0, 2.0, 3.0});
  const LatentGeometryReport rep = latent_geometry_from_latents(latents);
  CHECK(rep.degenerate);
  CHECK(rep.pc_variance_ratios.empty());
}

TEST_CASE("latent_geometry_from_latents: planar ellipse explained by two components") {
  std::vector<Vec> latents;
  for (int t = 0; t < 80; ++t) {
    const double a = 2.0 * 3.14159265358979 * t / 40.0;
    // ellipse embedded in 6-D through a fixed linear map
    const double c = std::cos(a), s = std::sin(a);
    latents.push_back({2.0 * c, c + s, -s, 0.5 * c - 0.2 * s, 0.0, c});
  }
  const LatentGeometryReport rep = latent_geometry_from_latents(latents);
  REQUIRE(rep.pc_variance_ratios.size() >= 2);
  CHECK(rep.pc_variance_ratios[0] + rep.pc_variance_ratios[1] > 0.999);
  double total = 0.0;
  for (double r : rep.pc_variance_ratios) total += r;
  CHECK(total <= 1.0 + 1e-9);
  for (std::size_t i = 0; i + 1 < rep.pc_variance_ratios.size(); ++i)
    CHECK(rep.pc_variance_ratios[i] >= rep.pc_variance_ratios[i + 1]);
}

TEST_CASE("latent_geometry_from_latents: period-2 alternation is rank one with +-1 cosines") {
  std::vector<Vec> latents;
  Vec base{0.0, 0.0, 0.0};
  const Vec v{1.0, -2.0, 0.5};
  latents.push_back(base);
  for (int t = 0; t < 16; ++t)
    latents.push_back(t % 2 == 0 ? add(latents.back(), v) : sub(latents.back(), v));
  const LatentGeometryReport rep = latent_geometry_from_latents(latents);
  CHECK(rep.pc_variance_ratios[0] == doctest::Approx(1.0).epsilon(1e-9));
  for (double c : rep.pc1_cosines) CHECK(std::abs(std::abs(c) - 1.0) < 1e-9);
}

TEST_CASE("latent_geometry: bundle separation distinguishes labeled directions") {
  std::vector<Vec> latents;
  std::vector<int> labels;
  Vec x{0.0, 0.0};
  for (int t = 0; t < 40; ++t) {
    latents.push_back(x);
    const bool mode_a = (t / 10) % 2 == 0;
    labels.push_back(mode_a ? 0 : 1);
    x = add(x, mode_a ? Vec{1.0, 0.05} : Vec{-0.05, 1.0});
  }
  labels.pop_back();
  labels.push_back(labels.back());
  const LatentGeometryReport rep = latent_geometry_from_latents(latents, labels);
  CHECK(rep.has_bundles);
  CHECK(rep.bundle_separation > 0.5);
}

TEST_CASE("latent_geometry: requires enough samples and matching labels") {
  std::vector<Vec> latents(5, Vec{1.0});
  CHECK_THROWS_AS(latent_geometry_from_latents(latents), InvalidInput);
  std::vector<Vec> ok(12, Vec{1.0});
  CHECK_THROWS_AS(latent_geometry_from_latents(ok, std::vector<int>{1, 2}), InvalidInput);
}

TEST_CASE("env_mode_labels: hopper uses the mode flag, cycle uses half-periods") {
  const HybridHopperEnv henv;
  Dataset d = generate_demos(EnvVariant{henv}, 60, 0.0, 1);
  const std::vector<int> labels = env_mode_labels(EnvVariant{henv}, d);
  REQUIRE(labels.size() == 60);
  bool saw0 = false, saw1 = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    CHECK(labels[i] == (d.states[i][2] > 0.5 ? 1 : 0));
    saw0 |= labels[i] == 0;
    saw1 |= labels[i] == 1;
  }
  CHECK(saw0);
  CHECK(saw1);
}

TEST_CASE("sweeps: tiny data-efficiency sweep is reproducible byte for byte") {
  namespace fs = std::filesystem;
  ExperimentSetup setup;
  setup.env = HybridHopperEnv{};
  setup.train.epochs = 40;
  setup.train.hidden = {12};
  setup.train.k = 8;
  setup.train.cap = 8;
  setup.train.loss.projection_mode = ProjectionMode::kIdentity;
  setup.demo_steps = 60;
  setup.eval_episodes = 4;
  setup.eval.horizon = 120;
  setup.eval.init_noise_std = 0.01;
  setup.poincare_crossings = 4;
  setup.root_seed = 11;

  const std::vector<std::size_t> sizes = {60};
  const std::vector<std::uint64_t> seeds = {0, 1};
  const SweepResult s1 = data_efficiency_sweep(setup, sizes, seeds, 1);
  const SweepResult s2 = data_efficiency_sweep(setup, sizes, seeds, 2);  // thread count must not matter
  REQUIRE(s1.cells.size() == s2.cells.size());
  REQUIRE(s1.cells.size() == 6);  // (bc, lvr, expert) x 2 seeds

  const std::string p1 = (fs::temp_directory_path() / "sweep1.csv").string();
  const std::string p2 = (fs::temp_directory_path() / "sweep2.csv").string();
  write_sweep_csv(s1, p1);
  write_sweep_csv(s2, p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  CHECK(b1.rfind("axis,axis_value,method,seed,metric,value\n", 0) == 0);
  fs::remove(p1);
  fs::remove(p2);

  // Paired methods share data and eval seeds: the expert rows coincide, and
  // all three methods exist per seed.
  const SweepStat expert_surv = sweep_stat(s1, 60.0, "expert", "mean_survival");
  CHECK(expert_surv.count == 2);
  CHECK(sweep_stat(s1, 60.0, "bc", "mean_survival").count == 2);
  CHECK(sweep_stat(s1, 60.0, "lvr", "mean_survival").count == 2);
}

TEST_CASE("sweeps: robustness levels degrade the expert gracefully") {
  ExperimentSetup setup;
  setup.env = HybridHopperEnv{};
  setup.train.epochs = 1;  // expert rows are what this test inspects
  setup.train.hidden = {8};
  setup.train.k = 4;
  setup.train.cap = 4;
  setup.demo_steps = 40;
  setup.eval_episodes = 6;
  setup.eval.horizon = 250;
  setup.eval.init_noise_std = 0.01;
  setup.poincare_crossings = 4;
  setup.root_seed = 3;

  const SweepResult sweep = robustness_sweep(setup, {0.0, 0.004, 0.012}, {0, 1, 2}, 2);
  const SweepStat s0 = sweep_stat(sweep, 0.0, "expert", "mean_survival");
  const SweepStat s2 = sweep_stat(sweep, 0.012, "expert", "mean_survival");
  REQUIRE(s0.count == 3);
  REQUIRE(s2.count == 3);
  CHECK(s0.mean == doctest::Approx(250.0));  // flat ground: full survival
  CHECK(s2.mean <= s0.mean);                 // monotone trend, not exact values
}
