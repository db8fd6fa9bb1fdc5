#pragma once

#include <functional>
#include <optional>
#include <variant>

#include "lvr/dataset.hpp"
#include "lvr/numerics.hpp"

namespace lvr {

// ---------------------------------------------------------------------------
// Smooth limit-cycle tracker: controlled Van der Pol oscillator
//   x1' = w0 x2
//   x2' = w0 (mu (1 - x1^2) x2 - x1) + u
// The time scale w0 is chosen so one period of the natural limit cycle is
// exactly steps_per_period control steps; the nominal cycle table is found by
// long forward simulation plus section-crossing bisection.
// ---------------------------------------------------------------------------

struct SmoothCycleEnv {
  double mu = 1.0;
  double control_limit = 8.0;
  double dt = 0.02;
  int substeps = 10;
  std::size_t steps_per_period = 64;
  double state_bound = 10.0;  // safety box

  // Derived by make_smooth_cycle.
  double time_scale = 1.0;
  double period = 0.0;         // scaled period, = steps_per_period * dt
  double endpoint_gap = 0.0;   // nominal-cycle closure residual
  std::vector<Vec> nominal;    // steps_per_period states, phase 0 on the section

  std::size_t obs_dim() const { return 2; }
  std::size_t act_dim() const { return 1; }
};

/// Settles onto the limit cycle, refines the period via section bisection
/// (section: x2 = 0 crossing downward at x1 > 0), rescales time, and
/// tabulates the nominal cycle. Throws if the endpoint gap exceeds 1e-3.
SmoothCycleEnv make_smooth_cycle(double mu = 1.0, double dt = 0.02,
                                 std::size_t steps_per_period = 64, double control_limit = 8.0);

// ---------------------------------------------------------------------------
// 1-D hybrid hopper: point mass on a massless spring leg.
//   flight: z'' = -g                     (thrust has no effect)
//   stance: z'' = -g + (k (l0 + eta - z) + thrust)/m,  thrust active on extension
// Touchdown at z = l0 + eta with z' < 0 applies the restitution reset
// z'+ = gamma z'-; liftoff at z = l0 + eta with z' > 0. eta is a per-bounce
// ground-height offset (0 unless roughness is enabled).
// ---------------------------------------------------------------------------

struct HybridHopperEnv {
  double mass = 1.0;
  double spring_k = 100.0;
  double rest_length = 1.0;
  double gravity = 9.81;
  double restitution = 0.95;  // gamma in (0, 1]
  double apex_target = 1.15;
  double thrust_limit = 25.0;
  double dt = 0.02;
  int substeps = 10;
  double ground_offset_std = 0.0;  // roughness analog, std of eta per touchdown
  double safety_speed = 50.0;
  double max_height = 10.0;
  double min_bounce_speed = 1e-3;  // touchdown slower than this counts as stalled
  double stall_time = 1.5;         // seconds without a live apex -> stalled
  // An apex counts as live hopping only above this fraction of the target
  // excess height; decayed bouncing around the spring equilibrium is a fall.
  double min_apex_fraction = 0.6;

  std::size_t obs_dim() const { return 3; }  // (z, zdot, mode flag)
  std::size_t act_dim() const { return 1; }
};

enum class HopperMode { kFlight, kStance };

struct HopperState {
  double z = 0.0;
  double zd = 0.0;
  HopperMode mode = HopperMode::kFlight;
  double ground = 0.0;  // eta of the current/last stance
};

struct HopperStepEvents {
  int touchdowns = 0;
  int liftoffs = 0;
  int apexes = 0;
  double last_apex_height = 0.0;
  double max_guard_residual = 0.0;  // |z - (l0+eta)| at located transitions
  double max_apex_residual = 0.0;   // |zdot| at located apexes
  bool fallen = false;
  bool stalled = false;
};

/// One control step of dt with zero-order-hold thrust. Guard crossings are
/// located by bisection to |guard| < 1e-8; the restitution reset is applied
/// at touchdown. ground_next is the ground offset committed at the next
/// touchdown (pass 0 for flat ground).
HopperState hopper_step(const HybridHopperEnv& env, const HopperState& s, double thrust,
                        double ground_next, HopperStepEvents* events = nullptr);

Vec hopper_obs(const HopperState& s);
HopperState hopper_apex_state(const HybridHopperEnv& env, double apex_height);

/// Total mechanical energy (spring term only in stance).
double hopper_energy(const HybridHopperEnv& env, const HopperState& s);

/// One control step of the cycle env; reports a section crossing (x2: + -> -
/// at x1 > 0) if one occurs, with the bisected crossing state.
Vec cycle_step(const SmoothCycleEnv& env, const Vec& x, double u,
               std::optional<Vec>* crossing = nullptr);

// ---------------------------------------------------------------------------
// Experts
// ---------------------------------------------------------------------------

/// Raibert-style hopping stabilizer: constant-per-hop stance thrust
///   u = u_ff + kp (apex_target - last_apex),
/// with feedforward sized so the target apex is the fixed point and kp chosen
/// for a prescribed apex-map contraction. Closed-form quantities derive from
/// the stance energy balance and are used by the analysis tests.
struct HopperExpert {
  double kp = 0.0;
  double u_ff = 0.0;
  double apex_target = 0.0;
  double contraction = 0.0;  // predicted d(next apex)/d(apex) at the fixed point
};

HopperExpert compute_hopper_expert(const HybridHopperEnv& env, double target_contraction = 0.4);

/// Predicted apex return slope at apex height a for thrust law u(a).
double hopper_apex_map_slope(const HybridHopperEnv& env, const HopperExpert& expert);

/// Finite-horizon discrete-time LQR gains by backward Riccati recursion.
/// a and b are indexed t mod a.size(), so a single (A, B) pair with a long
/// horizon covers the time-invariant case. Returns K_t for t = 0..horizon-1.
std::vector<Matrix> riccati_gains(const std::vector<Matrix>& a, const std::vector<Matrix>& b,
                                  const Matrix& q_cost, const Matrix& r_cost,
                                  const Matrix& terminal, std::size_t horizon);

/// Time-varying tracking gains along the nominal cycle (Q = R = I, horizon =
/// one period, terminal cost Q), from the Euler discretization of the
/// linearized dynamics.
struct CycleExpert {
  std::vector<Matrix> gains;  // 1x2, one per step of the period
};

CycleExpert compute_cycle_expert(const SmoothCycleEnv& env);

// ---------------------------------------------------------------------------
// Rollouts
// ---------------------------------------------------------------------------

struct StepInfo {
  std::size_t step = 0;
  double t = 0.0;
  double last_apex = 0.0;  // hopper only: exact height at the last apex event
};

/// Controllers map (observation, step info) to an action. Learned policies
/// ignore the info; the experts use the phase counter / apex memory.
using Controller = std::function<Vec(const Vec&, const StepInfo&)>;

using EnvVariant = std::variant<SmoothCycleEnv, HybridHopperEnv>;

Controller hopper_expert_controller(const HopperExpert& expert);
Controller cycle_expert_controller(const SmoothCycleEnv& env, const CycleExpert& expert);
Controller expert_controller(const EnvVariant& env);

struct RolloutOptions {
  std::size_t horizon = 500;
  double process_noise_std = 0.0;  // per-step velocity kick
  double init_noise_std = 0.0;     // initial-condition spread
  std::uint64_t seed = 0;
};

struct RolloutResult {
  std::size_t survival_steps = 0;
  bool completed = false;
  double tracking_error = 0.0;  // hopper: RMS apex error; cycle: RMS state error
  std::size_t crossings = 0;    // apex / section crossings observed
  Vec section_values;
  Vec final_state;
};

RolloutResult rollout(const EnvVariant& env, const Controller& ctrl, const RolloutOptions& opts);

// ---------------------------------------------------------------------------
// Demonstrations
// ---------------------------------------------------------------------------

/// Closed-loop expert rollout recording (observation, expert action) at the
/// control rate. Throws if the expert fails mid-rollout.
Dataset generate_demos(const EnvVariant& env, std::size_t n_steps, double noise_std,
                       std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic LQR regression (sample-complexity experiment)
// ---------------------------------------------------------------------------

struct LqrSyntheticEnv {
  std::size_t state_dim = 6;
  std::size_t action_dim = 2;
  double noise_std = 0.1;
  Matrix a;
  Matrix b;
  Matrix k_star;  // infinite-horizon discrete LQR gain
};

/// Random stable (A, B) with closed-loop spectral radius of A - B K* below 1.
/// state_dim is capped at 8 so the stability check stays within the
/// spectral-radius routine's domain.
LqrSyntheticEnv make_lqr_synthetic(std::size_t state_dim, std::size_t action_dim,
                                   std::uint64_t seed, double noise_std = 0.1);

struct LqrErrorPoint {
  std::size_t n_samples = 0;
  double mean_error = 0.0;  // operator-norm error, averaged over trials
  std::size_t failures = 0;
};

/// For each N: fit K by least squares on N noisy (dx, du = -K* dx + noise)
/// pairs, record ||Khat - K*||_2 averaged over trials. Singular designs are
/// counted as failures and excluded.
std::vector<LqrErrorPoint> lqr_regression_experiment(const LqrSyntheticEnv& env,
                                                     const std::vector<std::size_t>& sample_counts,
                                                     std::size_t trials, std::uint64_t seed);

/// Least-squares slope of log(error) against log(N).
double loglog_slope(const std::vector<LqrErrorPoint>& points);

}  // namespace lvr
