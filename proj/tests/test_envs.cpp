#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "lvr/envs.hpp"
#include "support/oracles.hpp"

using namespace lvr;

namespace {

HybridHopperEnv default_hopper() { return HybridHopperEnv{}; }

// Runs the hopper until `count` apex events were seen; returns their heights.
Vec collect_apexes(const HybridHopperEnv& env, const Controller& ctrl, double z0,
                   std::size_t count) {
  HopperState s = hopper_apex_state(env, z0);
  double last_apex = s.z;
  Vec apexes;
  const std::size_t max_steps = static_cast<std::size_t>(40.0 / env.dt);
  for (std::size_t step = 0; step < max_steps && apexes.size() < count; ++step) {
    const Vec u = ctrl(hopper_obs(s), StepInfo{step, step * env.dt, last_apex});
    HopperStepEvents ev;
    s = hopper_step(env, s, u[0], 0.0, &ev);
    REQUIRE_FALSE(ev.fallen);
    if (ev.apexes > 0) {
      last_apex = ev.last_apex_height;
      apexes.push_back(ev.last_apex_height);
    }
  }
  REQUIRE(apexes.size() == count);
  return apexes;
}

}  // namespace

TEST_CASE("hopper flight phase matches the ballistic closed form per step") {
  const HybridHopperEnv env = default_hopper();
  HopperState s;
  s.z = 1.4;
  s.zd = 1.0;
  s.mode = HopperMode::kFlight;
  double t = 0.0;
  const double z0 = s.z, v0 = s.zd;
  for (int step = 0; step < 10; ++step) {
    s = hopper_step(env, s, 3.0, 0.0);  // thrust must have no effect in flight
    t += env.dt;
    if (s.mode != HopperMode::kFlight) break;
    const double expect_z = z0 + v0 * t - 0.5 * env.gravity * t * t;
    const double expect_v = v0 - env.gravity * t;
    CHECK(std::abs(s.z - expect_z) < 1e-8);
    CHECK(std::abs(s.zd - expect_v) < 1e-8);
  }
}

TEST_CASE("hopper conservative configuration conserves energy per bounce") {
  HybridHopperEnv env = default_hopper();
  env.restitution = 1.0;
  env.min_bounce_speed = 1e-9;
  HopperState s = hopper_apex_state(env, 1.15);
  const double e0 = hopper_energy(env, s);
  int bounces = 0;
  for (int step = 0; step < 600 && bounces < 5; ++step) {
    HopperStepEvents ev;
    s = hopper_step(env, s, 0.0, 0.0, &ev);
    REQUIRE_FALSE(ev.fallen);
    REQUIRE_FALSE(ev.stalled);
    bounces += ev.touchdowns;
    const double e = hopper_energy(env, s);
    CHECK(std::abs(e - e0) / e0 < 1e-6);
  }
  CHECK(bounces == 5);
}

TEST_CASE("hopper energy strictly decreases across impacts when restitution < 1") {
  HybridHopperEnv env = default_hopper();  // gamma = 0.95
  HopperState s = hopper_apex_state(env, 1.15);
  double prev_energy = hopper_energy(env, s);
  int touchdowns = 0;
  for (int step = 0; step < 600 && touchdowns < 4; ++step) {
    HopperStepEvents ev;
    s = hopper_step(env, s, 0.0, 0.0, &ev);
    if (ev.stalled) break;
    if (ev.touchdowns > 0) {
      ++touchdowns;
      const double e = hopper_energy(env, s);
      CHECK(e < prev_energy - 1e-6);
      prev_energy = e;
    }
  }
  CHECK(touchdowns >= 3);
}

TEST_CASE("hopper event location: guard residuals below 1e-8 with correct signs") {
  const HybridHopperEnv env = default_hopper();
  HopperState s = hopper_apex_state(env, 1.2);
  HopperState prev = s;
  double worst_guard = 0.0, worst_apex = 0.0;
  int events = 0;
  for (int step = 0; step < 400; ++step) {
    HopperStepEvents ev;
    prev = s;
    s = hopper_step(env, s, 0.4, 0.0, &ev);
    if (ev.touchdowns + ev.liftoffs > 0) {
      worst_guard = std::max(worst_guard, ev.max_guard_residual);
      events += ev.touchdowns + ev.liftoffs;
    }
    if (ev.apexes > 0) worst_apex = std::max(worst_apex, ev.max_apex_residual);
    if (ev.stalled || ev.fallen) break;
  }
  CHECK(events >= 10);
  CHECK(worst_guard < 1e-8);
  CHECK(worst_apex < 1e-8);
}

TEST_CASE("hopper touchdown reset applies the restitution factor") {
  HybridHopperEnv env = default_hopper();
  env.restitution = 0.8;
  HopperState s = hopper_apex_state(env, 1.3);
  const double v_td = std::sqrt(2.0 * env.gravity * (1.3 - env.rest_length));
  for (int step = 0; step < 100; ++step) {
    HopperStepEvents ev;
    s = hopper_step(env, s, 0.0, 0.0, &ev);
    if (ev.touchdowns > 0) {
      // Just after the reset the state is in stance moving down at gamma*v.
      CHECK(s.mode == HopperMode::kStance);
      break;
    }
    REQUIRE(step < 99);
  }
  // Compression turning point consistent with the post-reset speed.
  const double v_post = 0.8 * v_td;
  double max_compression = 0.0;
  for (int step = 0; step < 100 && s.mode == HopperMode::kStance; ++step) {
    s = hopper_step(env, s, 0.0, 0.0);
    max_compression = std::max(max_compression, env.rest_length - s.z);
  }
  const double mg = env.mass * env.gravity;
  const double expect =
      (mg + std::sqrt(mg * mg + env.spring_k * env.mass * v_post * v_post)) / env.spring_k;
  CHECK(max_compression == doctest::Approx(expect).epsilon(1e-3));
}

TEST_CASE("hopper stalls and fails without thrust") {
  const HybridHopperEnv env = default_hopper();
  RolloutOptions opts;
  opts.horizon = 500;
  const Controller zero = [](const Vec&, const StepInfo&) { return Vec{0.0}; };
  const RolloutResult r = rollout(env, zero, opts);
  CHECK_FALSE(r.completed);
  CHECK(r.survival_steps < opts.horizon);
}

TEST_CASE("hopper expert: contraction designed and achieved") {
  const HybridHopperEnv env = default_hopper();
  const HopperExpert ex = compute_hopper_expert(env, 0.4);
  CHECK(std::abs(ex.contraction) < 1.0);
  CHECK(ex.contraction == doctest::Approx(0.4).epsilon(1e-9));
  CHECK(ex.u_ff > 0.0);

  // From a +10% apex perturbation the apex error contracts monotonically.
  const Controller ctrl = hopper_expert_controller(ex);
  const double a0 = env.apex_target + 0.10 * (env.apex_target - env.rest_length);
  const Vec apexes = collect_apexes(env, ctrl, a0, 5);
  double prev = std::abs(a0 - env.apex_target);
  for (double a : apexes) {
    const double err = std::abs(a - env.apex_target);
    CHECK(err < prev + 1e-9);
    prev = err;
  }
  CHECK(prev < 0.02 * (env.apex_target - env.rest_length));
}

TEST_CASE("hopper expert: zero perturbation stays on the nominal orbit") {
  const HybridHopperEnv env = default_hopper();
  const HopperExpert ex = compute_hopper_expert(env);
  const Controller ctrl = hopper_expert_controller(ex);
  const Vec apexes = collect_apexes(env, ctrl, env.apex_target, 6);
  for (double a : apexes) CHECK(std::abs(a - env.apex_target) < 1e-5);
}

TEST_CASE("smooth cycle: mu=0 degenerates to a harmonic oscillator with conserved amplitude") {
  const SmoothCycleEnv env = make_smooth_cycle(0.0, 0.02, 64, 8.0);
  Vec x = env.nominal[0];
  const double r0 = std::hypot(x[0], x[1]);
  for (std::size_t step = 0; step < env.steps_per_period; ++step)
    x = cycle_step(env, x, 0.0, nullptr);
  CHECK(std::abs(std::hypot(x[0], x[1]) - r0) < 1e-6);
  CHECK(std::abs(x[0] - env.nominal[0][0]) < 1e-5);
  CHECK(std::abs(x[1] - env.nominal[0][1]) < 1e-5);
}

TEST_CASE("smooth cycle: nominal table closes and has one period") {
  const SmoothCycleEnv env = make_smooth_cycle(1.0, 0.02, 64, 8.0);
  CHECK(env.endpoint_gap < 1e-3);
  CHECK(env.nominal.size() == 64);
  // The classic mu=1 limit-cycle amplitude is very close to 2.
  double max_x1 = 0.0;
  for (const Vec& p : env.nominal) max_x1 = std::max(max_x1, p[0]);
  CHECK(max_x1 > 1.9);
  CHECK(max_x1 < 2.1);
  // Uncontrolled flow returns to the table start after one period.
  Vec x = env.nominal[0];
  for (std::size_t step = 0; step < env.steps_per_period; ++step)
    x = cycle_step(env, x, 0.0, nullptr);
  CHECK(std::hypot(x[0] - env.nominal[0][0], x[1] - env.nominal[0][1]) < 1e-3);
}

TEST_CASE("riccati_gains: LTI horizon sweep converges to the fixed-point gain") {
  // Oracle: iterate the same recursion to convergence and compare K_0 at a
  // horizon much longer than the closed-loop mixing time.
  Matrix a(2, 2);
  a(0, 0) = 1.0;
  a(0, 1) = 0.1;
  a(1, 0) = -0.2;
  a(1, 1) = 0.95;
  Matrix b(2, 1);
  b(1, 0) = 0.1;
  const Matrix q = Matrix::identity(2);
  const Matrix r = Matrix::identity(1);

  Matrix p = q;
  Matrix k_inf(1, 2);
  for (int it = 0; it < 20000; ++it) {
    const Matrix btp = b.transpose() * p;
    const Matrix gram = r + btp * b;
    k_inf = pseudo_inverse(gram) * btp * a;
    const Matrix pn = q + a.transpose() * (p * (a - b * k_inf));
    if ((pn - p).max_abs() < 1e-14) break;
    p = pn;
  }
  const std::vector<Matrix> gains = riccati_gains({a}, {b}, q, r, q, 500);
  CHECK((gains[0] - k_inf).max_abs() < 1e-4);
  // Near the terminal the gains differ (finite-horizon transient).
  CHECK((gains[499] - k_inf).max_abs() > 1e-4);
}

TEST_CASE("cycle expert: tracks the nominal trajectory and rejects perturbations") {
  const SmoothCycleEnv env = make_smooth_cycle(1.0, 0.02, 64, 8.0);
  const CycleExpert ex = compute_cycle_expert(env);
  REQUIRE(ex.gains.size() == 64);
  const Controller ctrl = cycle_expert_controller(env, ex);

  // Start displaced from the nominal start; the tracking error must shrink.
  Vec x = add(env.nominal[0], {0.3, -0.2});
  double err0 = norm(sub(x, env.nominal[0]));
  for (std::size_t step = 0; step < 3 * env.steps_per_period; ++step) {
    const Vec u = ctrl(x, StepInfo{step, step * env.dt, 0.0});
    x = cycle_step(env, x, u[0], nullptr);
  }
  const double err_end = norm(sub(x, env.nominal[0]));
  CHECK(err_end < 0.2 * err0);
}

TEST_CASE("generate_demos: right length, deterministic, noise-free periodicity") {
  const HybridHopperEnv env = default_hopper();
  const Dataset d = generate_demos(env, 250, 0.0, 9);
  CHECK(d.size() == 250);
  CHECK(d.state_dim() == 3);
  CHECK(d.action_dim() == 1);
  d.validate();

  // Zero noise: every flight-phase apex stays at the target (the data lies on
  // the nominal orbit) and the action is the feedforward thrust throughout.
  const HopperExpert ex = compute_hopper_expert(env);
  for (std::size_t i = 0; i < d.size(); ++i)
    CHECK(std::abs(d.actions[i][0] - ex.u_ff) < 1e-5);

  const Dataset d2 = generate_demos(env, 250, 0.0, 10);
  CHECK(d.states == d2.states);  // noiseless: identical across seeds

  const Dataset n1 = generate_demos(env, 250, 0.005, 1);
  const Dataset n2 = generate_demos(env, 250, 0.005, 1);
  const Dataset n3 = generate_demos(env, 250, 0.005, 2);
  CHECK(n1.states == n2.states);
  CHECK(n1.states != n3.states);
}

TEST_CASE("generate_demos: open-loop replay of recorded actions reproduces the states") {
  const HybridHopperEnv env = default_hopper();
  const Dataset d = generate_demos(env, 200, 0.0, 3);
  HopperState s = hopper_apex_state(env, env.apex_target);
  double worst = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Vec obs = hopper_obs(s);
    for (std::size_t j = 0; j < 3; ++j)
      worst = std::max(worst, std::abs(obs[j] - d.states[i][j]));
    s = hopper_step(env, s, d.actions[i][0], 0.0);
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("smooth cycle demos: noise-free consecutive periods coincide") {
  const SmoothCycleEnv env = make_smooth_cycle(1.0, 0.02, 64, 8.0);
  const Dataset d = generate_demos(env, 200, 0.0, 4);
  const std::size_t n = env.steps_per_period;
  for (std::size_t i = 0; i + n < d.size(); ++i) {
    CHECK(std::abs(d.states[i][0] - d.states[i + n][0]) < 1e-3);
    CHECK(std::abs(d.states[i][1] - d.states[i + n][1]) < 1e-3);
  }
}

TEST_CASE("lqr synthetic: stable closed loop and noiseless exact recovery") {
  const LqrSyntheticEnv env = make_lqr_synthetic(6, 2, 11, 0.0);
  CHECK(spectral_radius(env.a - env.b * env.k_star) < 1.0);
  const auto pts = lqr_regression_experiment(env, {20}, 3, 5);
  REQUIRE(pts.size() == 1);
  CHECK(pts[0].failures == 0);
  CHECK(pts[0].mean_error < 1e-8);
}

TEST_CASE("lqr regression: error grows under ill-conditioned excitation") {
  // Scale down one excitation direction by hand and refit: the comparison is
  // done by shrinking the sample count at fixed noise, which raises the error
  // through the same lambda_min pathway.
  const LqrSyntheticEnv env = make_lqr_synthetic(4, 1, 13, 0.1);
  const auto pts = lqr_regression_experiment(env, {30, 3000}, 30, 17);
  REQUIRE(pts.size() == 2);
  CHECK(pts[0].mean_error > 3.0 * pts[1].mean_error);
}

TEST_CASE("lqr regression: singular designs at tiny N are recorded as failures") {
  const LqrSyntheticEnv env = make_lqr_synthetic(5, 1, 19, 0.1);
  const auto pts = lqr_regression_experiment(env, {3}, 10, 23);  // N < state_dim
  CHECK(pts[0].failures == 10);
}

TEST_CASE("lqr synthetic: dimension limits enforced") {
  CHECK_THROWS_AS(make_lqr_synthetic(9, 1, 1), InvalidParameter);
  CHECK_THROWS_AS(make_lqr_synthetic(4, 5, 1), InvalidParameter);
}

TEST_CASE("roughness: ground offsets shift touchdown heights deterministically") {
  HybridHopperEnv env = default_hopper();
  env.ground_offset_std = 0.02;
  const HopperExpert ex = compute_hopper_expert(env);
  RolloutOptions opts;
  opts.horizon = 300;
  opts.seed = 21;
  const RolloutResult r1 = rollout(env, hopper_expert_controller(ex), opts);
  const RolloutResult r2 = rollout(env, hopper_expert_controller(ex), opts);
  CHECK(r1.survival_steps == r2.survival_steps);
  CHECK(r1.section_values == r2.section_values);
  CHECK(r1.crossings > 3);
}
