#include "lvr/envs.hpp"

#include <algorithm>
#include <cmath>

namespace lvr {

// ---------------------------------------------------------------------------
// Van der Pol integration
// ---------------------------------------------------------------------------

namespace {

inline void vdp_rhs(double mu, double w, double x1, double x2, double u, double& d1, double& d2) {
  d1 = w * x2;
  d2 = w * (mu * (1.0 - x1 * x1) * x2 - x1) + u;
}

// One RK4 step of the (optionally time-scaled) Van der Pol system.
void vdp_rk4(double mu, double w, double u, double h, double& x1, double& x2) {
  double k1a, k1b, k2a, k2b, k3a, k3b, k4a, k4b;
  vdp_rhs(mu, w, x1, x2, u, k1a, k1b);
  vdp_rhs(mu, w, x1 + 0.5 * h * k1a, x2 + 0.5 * h * k1b, u, k2a, k2b);
  vdp_rhs(mu, w, x1 + 0.5 * h * k2a, x2 + 0.5 * h * k2b, u, k3a, k3b);
  vdp_rhs(mu, w, x1 + h * k3a, x2 + h * k3b, u, k4a, k4b);
  x1 += h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
  x2 += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
}

// Bisects the section crossing (x2 = 0, downward) inside (0, h] from (x1, x2).
// Returns the crossing time and writes the crossing state.
double vdp_bisect_crossing(double mu, double w, double u, double h, double x1, double x2,
                           double* cx1, double* cx2) {
  double lo = 0.0, hi = h;
  double m1 = x1, m2 = x2;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    m1 = x1;
    m2 = x2;
    vdp_rk4(mu, w, u, mid, m1, m2);
    if (std::abs(m2) < 1e-12) {
      lo = hi = mid;
      break;
    }
    if (m2 > 0.0)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-15) break;
  }
  *cx1 = m1;
  *cx2 = m2;
  return 0.5 * (lo + hi);
}

}  // namespace

SmoothCycleEnv make_smooth_cycle(double mu, double dt, std::size_t steps_per_period,
                                 double control_limit) {
  if (!(mu >= 0.0)) throw InvalidParameter("smooth cycle: mu must be non-negative");
  if (!(dt > 0.0)) throw InvalidParameter("smooth cycle: dt must be positive");
  if (steps_per_period < 8) throw InvalidParameter("smooth cycle: steps_per_period too small");
  SmoothCycleEnv env;
  env.mu = mu;
  env.dt = dt;
  env.steps_per_period = steps_per_period;
  env.control_limit = control_limit;

  // Settle onto the attracting cycle in natural time (mu = 0 has no isolated
  // cycle; treat the unit-amplitude harmonic orbit as nominal there).
  const double h = 0.005;
  double x1 = 2.0, x2 = 0.0;
  const double settle_time = 80.0;
  for (double t = 0.0; t < settle_time; t += h) vdp_rk4(mu, 1.0, 0.0, h, x1, x2);

  // Locate two consecutive section crossings (x2: + -> - at x1 > 0); the
  // elapsed time between them is the natural period.
  double cross_x1 = 0.0, cross_x2 = 0.0;
  double period_nat = 0.0;
  bool have_first = false, have_second = false;
  for (long step = 0; step < 2000000; ++step) {
    double n1 = x1, n2 = x2;
    vdp_rk4(mu, 1.0, 0.0, h, n1, n2);
    if (x2 > 0.0 && n2 <= 0.0 && x1 > 0.0) {
      double bx1, bx2;
      const double tau = vdp_bisect_crossing(mu, 1.0, 0.0, h, x1, x2, &bx1, &bx2);
      if (!have_first) {
        have_first = true;
        cross_x1 = bx1;
        cross_x2 = bx2;
        period_nat = h - tau;  // remainder of this substep counts toward the period
      } else {
        period_nat += tau;
        have_second = true;
        break;
      }
    } else if (have_first) {
      period_nat += h;
    }
    x1 = n1;
    x2 = n2;
  }
  if (!have_second) throw std::runtime_error("smooth cycle: failed to locate limit cycle");

  env.time_scale = period_nat / (static_cast<double>(steps_per_period) * dt);
  env.period = static_cast<double>(steps_per_period) * dt;

  // Tabulate the nominal cycle at the control rate in scaled time.
  env.nominal.clear();
  env.nominal.reserve(steps_per_period);
  double n1 = cross_x1, n2 = cross_x2;
  const int sub = 20;
  const double hs = dt / sub;
  for (std::size_t s = 0; s < steps_per_period; ++s) {
    env.nominal.push_back({n1, n2});
    for (int i = 0; i < sub; ++i) vdp_rk4(mu, env.time_scale, 0.0, hs, n1, n2);
  }
  env.endpoint_gap = std::hypot(n1 - env.nominal[0][0], n2 - env.nominal[0][1]);
  if (env.endpoint_gap > 1e-3)
    throw std::runtime_error("smooth cycle: nominal cycle failed to close (gap " +
                             format_double(env.endpoint_gap) + ")");
  return env;
}

Vec cycle_step(const SmoothCycleEnv& env, const Vec& x, double u,
               std::optional<Vec>* crossing) {
  if (x.size() != 2) throw InvalidInput("cycle_step: state must be 2-dimensional");
  const double uc = std::clamp(u, -env.control_limit, env.control_limit);
  double x1 = x[0], x2 = x[1];
  const double h = env.dt / env.substeps;
  if (crossing) crossing->reset();
  for (int s = 0; s < env.substeps; ++s) {
    const double p1 = x1, p2 = x2;
    vdp_rk4(env.mu, env.time_scale, uc, h, x1, x2);
    if (crossing && p2 > 0.0 && x2 <= 0.0 && p1 > 0.0) {
      double cx1, cx2;
      vdp_bisect_crossing(env.mu, env.time_scale, uc, h, p1, p2, &cx1, &cx2);
      if (cx1 > 0.0) *crossing = Vec{cx1, cx2};
    }
  }
  return {x1, x2};
}

// ---------------------------------------------------------------------------
// Hopper integration
// ---------------------------------------------------------------------------

namespace {

struct HopperFlags {
  bool stance = false;
  bool thrust_on = false;
  double ground = 0.0;
};

inline double hopper_accel(const HybridHopperEnv& env, const HopperFlags& f, double z, double u) {
  if (!f.stance) return -env.gravity;
  const double spring = env.spring_k * (env.rest_length + f.ground - z);
  return -env.gravity + (spring + (f.thrust_on ? u : 0.0)) / env.mass;
}

// RK4 over a fixed-mode segment.
void hopper_rk4(const HybridHopperEnv& env, const HopperFlags& f, double u, double h, double& z,
                double& zd) {
  const double k1z = zd, k1v = hopper_accel(env, f, z, u);
  const double k2z = zd + 0.5 * h * k1v, k2v = hopper_accel(env, f, z + 0.5 * h * k1z, u);
  const double k3z = zd + 0.5 * h * k2v, k3v = hopper_accel(env, f, z + 0.5 * h * k2z, u);
  const double k4z = zd + h * k3v, k4v = hopper_accel(env, f, z + h * k3z, u);
  z += h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
  zd += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
}

HopperFlags flags_for(const HybridHopperEnv& env, const HopperState& s, double u) {
  HopperFlags f;
  f.stance = s.mode == HopperMode::kStance;
  f.ground = s.ground;
  if (f.stance) {
    if (s.zd > 1e-12) {
      f.thrust_on = true;
    } else if (s.zd < -1e-12) {
      f.thrust_on = false;
    } else {
      // At rest inside stance: thrust joins iff the leg is about to extend.
      f.thrust_on = hopper_accel(env, HopperFlags{true, false, s.ground}, s.z, u) > 0.0;
    }
  }
  return f;
}

enum class HopperEventType { kNone, kTouchdown, kLiftoff, kZdZero, kApex };

struct LocatedEvent {
  HopperEventType type = HopperEventType::kNone;
  double tau = 0.0;
  double z = 0.0, zd = 0.0;
};

// Bisects the crossing of `guard` (0: z-based, 1: zd-based) inside (0, t_hi].
LocatedEvent bisect_event(const HybridHopperEnv& env, const HopperFlags& f, double u,
                          const HopperState& s, double t_hi, HopperEventType type,
                          double guard_level) {
  const bool zd_guard = (type == HopperEventType::kZdZero || type == HopperEventType::kApex);
  const double g0 = zd_guard ? s.zd : s.z - guard_level;
  double lo = 0.0, hi = t_hi;
  double bz = s.z, bzd = s.zd;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    bz = s.z;
    bzd = s.zd;
    hopper_rk4(env, f, u, mid, bz, bzd);
    const double gm = zd_guard ? bzd : bz - guard_level;
    if (std::abs(gm) < 1e-10) {
      lo = hi = mid;
      break;
    }
    if ((gm > 0.0) == (g0 > 0.0))
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-14) break;
  }
  LocatedEvent ev;
  ev.type = type;
  ev.tau = 0.5 * (lo + hi);
  ev.z = bz;
  ev.zd = bzd;
  return ev;
}

}  // namespace

Vec hopper_obs(const HopperState& s) {
  return {s.z, s.zd, s.mode == HopperMode::kStance ? 1.0 : 0.0};
}

HopperState hopper_apex_state(const HybridHopperEnv& env, double apex_height) {
  HopperState s;
  s.z = std::max(apex_height, env.rest_length + 1e-6);
  s.zd = 0.0;
  s.mode = HopperMode::kFlight;
  s.ground = 0.0;
  return s;
}

double hopper_energy(const HybridHopperEnv& env, const HopperState& s) {
  double e = 0.5 * env.mass * s.zd * s.zd + env.mass * env.gravity * s.z;
  if (s.mode == HopperMode::kStance) {
    const double c = env.rest_length + s.ground - s.z;
    e += 0.5 * env.spring_k * c * c;
  }
  return e;
}

HopperState hopper_step(const HybridHopperEnv& env, const HopperState& s0, double thrust,
                        double ground_next, HopperStepEvents* events) {
  const double u = std::clamp(thrust, -env.thrust_limit, env.thrust_limit);
  HopperState s = s0;
  HopperStepEvents local;
  HopperStepEvents& ev = events ? *events : local;
  const double h = env.dt / env.substeps;
  int guarded = 0;

  for (int sub = 0; sub < env.substeps; ++sub) {
    double t_left = h;
    while (t_left > 1e-15) {
      if (s.z < 0.0 || std::abs(s.zd) > env.safety_speed || s.z > env.max_height) {
        ev.fallen = true;
        return s;
      }
      if (++guarded > 256) {  // runaway event cascade
        ev.stalled = true;
        return s;
      }
      const HopperFlags f = flags_for(env, s, u);
      double tz = s.z, tzd = s.zd;
      hopper_rk4(env, f, u, t_left, tz, tzd);

      LocatedEvent best;
      best.tau = t_left + 1.0;
      auto consider = [&](HopperEventType type, double level) {
        const LocatedEvent cand = bisect_event(env, f, u, s, t_left, type, level);
        if (cand.tau < best.tau) best = cand;
      };
      if (!f.stance) {
        const double lvl = env.rest_length + ground_next;
        if (s.z - lvl > 0.0 && tz - lvl <= 0.0) consider(HopperEventType::kTouchdown, lvl);
        if (s.zd > 0.0 && tzd <= 0.0) consider(HopperEventType::kApex, 0.0);
      } else {
        const double lvl = env.rest_length + s.ground;
        if (s.z - lvl < 0.0 && tz - lvl >= 0.0) consider(HopperEventType::kLiftoff, lvl);
        if ((s.zd > 0.0 && tzd <= 0.0) || (s.zd < 0.0 && tzd >= 0.0))
          consider(HopperEventType::kZdZero, 0.0);
      }

      if (best.type == HopperEventType::kNone) {
        s.z = tz;
        s.zd = tzd;
        t_left = 0.0;
        break;
      }

      s.z = best.z;
      s.zd = best.zd;
      t_left -= best.tau;
      switch (best.type) {
        case HopperEventType::kTouchdown: {
          const double lvl = env.rest_length + ground_next;
          ev.max_guard_residual = std::max(ev.max_guard_residual, std::abs(s.z - lvl));
          s.z = lvl;  // snap onto the guard so the stance segment starts cleanly
          s.zd *= env.restitution;
          if (std::abs(s.zd) < env.min_bounce_speed) {
            ev.stalled = true;
            return s;
          }
          s.mode = HopperMode::kStance;
          s.ground = ground_next;
          ++ev.touchdowns;
          break;
        }
        case HopperEventType::kLiftoff: {
          const double lvl = env.rest_length + s.ground;
          ev.max_guard_residual = std::max(ev.max_guard_residual, std::abs(s.z - lvl));
          s.z = lvl;
          s.mode = HopperMode::kFlight;
          ++ev.liftoffs;
          break;
        }
        case HopperEventType::kApex: {
          ev.max_apex_residual = std::max(ev.max_apex_residual, std::abs(s.zd));
          s.zd = 0.0;
          ev.last_apex_height = s.z;
          ++ev.apexes;
          break;
        }
        case HopperEventType::kZdZero:
          // Thrust toggles with the sign of zd; flags_for re-evaluates.
          break;
        case HopperEventType::kNone:
          break;
      }
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Experts
// ---------------------------------------------------------------------------

namespace {

// Bottom compression depth for post-reset touchdown speed v (energy balance
// in stance before thrust engages): k s^2 / 2 - m g s = m v^2 / 2.
double stance_compression(const HybridHopperEnv& env, double v_sq) {
  const double mg = env.mass * env.gravity;
  return (mg + std::sqrt(mg * mg + env.spring_k * env.mass * v_sq)) / env.spring_k;
}

double stance_compression_dvsq(const HybridHopperEnv& env, double v_sq) {
  const double mg = env.mass * env.gravity;
  return 0.5 * env.mass / std::sqrt(mg * mg + env.spring_k * env.mass * v_sq);
}

}  // namespace

double hopper_apex_map_slope(const HybridHopperEnv& env, const HopperExpert& expert) {
  const double g = env.gravity;
  const double mg = env.mass * g;
  const double gamma2 = env.restitution * env.restitution;
  const double a = expert.apex_target;
  const double v_sq = 2.0 * g * gamma2 * (a - env.rest_length);  // post-reset speed^2
  const double s_b = stance_compression(env, v_sq);
  const double ds_da = stance_compression_dvsq(env, v_sq) * 2.0 * gamma2 * g;
  const double u_at_fp = expert.u_ff;  // kp term vanishes at the fixed point
  return gamma2 + (-expert.kp * s_b + u_at_fp * ds_da) / mg;
}

HopperExpert compute_hopper_expert(const HybridHopperEnv& env, double target_contraction) {
  if (!(env.apex_target > env.rest_length))
    throw InvalidParameter("hopper expert: apex target must exceed the leg rest length");
  if (!(env.restitution > 0.0 && env.restitution <= 1.0))
    throw InvalidParameter("hopper expert: restitution must be in (0, 1]");
  const double g = env.gravity;
  const double mg = env.mass * g;
  const double gamma2 = env.restitution * env.restitution;
  const double a = env.apex_target;
  const double v_sq = 2.0 * g * gamma2 * (a - env.rest_length);
  const double s_b = stance_compression(env, v_sq);

  HopperExpert ex;
  ex.apex_target = a;
  // Feedforward thrust that makes the target apex the fixed point:
  // (1 - gamma^2)(a - l0) of apex height is lost per hop and must be restored
  // by u_ff * s_b of thrust work.
  ex.u_ff = mg * (1.0 - gamma2) * (a - env.rest_length) / s_b;
  const double ds_da = stance_compression_dvsq(env, v_sq) * 2.0 * gamma2 * g;
  ex.kp = (gamma2 + ex.u_ff * ds_da / mg - target_contraction) * mg / s_b;
  ex.contraction = hopper_apex_map_slope(env, ex);
  if (std::abs(ex.contraction) >= 1.0)
    throw InvalidParameter("hopper expert: apex map does not contract with these parameters");
  if (std::abs(ex.u_ff) > env.thrust_limit)
    throw InvalidParameter("hopper expert: feedforward thrust exceeds the actuator limit");
  return ex;
}

std::vector<Matrix> riccati_gains(const std::vector<Matrix>& a, const std::vector<Matrix>& b,
                                  const Matrix& q_cost, const Matrix& r_cost,
                                  const Matrix& terminal, std::size_t horizon) {
  if (a.empty() || b.empty() || a.size() != b.size())
    throw InvalidInput("riccati: need matching non-empty A/B schedules");
  if (horizon == 0) throw InvalidParameter("riccati: zero horizon");
  const std::size_t n = a[0].rows();
  Matrix p = terminal;
  std::vector<Matrix> gains(horizon);
  for (std::size_t t = horizon; t-- > 0;) {
    const Matrix& at = a[t % a.size()];
    const Matrix& bt = b[t % b.size()];
    const Matrix btp = bt.transpose() * p;            // m x n
    const Matrix gram = r_cost + btp * bt;            // m x m
    const Matrix kt = pseudo_inverse(gram) * btp * at;
    const Matrix acl = at - bt * kt;
    p = q_cost + at.transpose() * (p * acl);
    // Symmetrize to keep roundoff from accumulating over long horizons.
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = r + 1; c < n; ++c) {
        const double m = 0.5 * (p(r, c) + p(c, r));
        p(r, c) = p(c, r) = m;
      }
    if (!p.all_finite()) throw std::runtime_error("riccati: recursion diverged");
    gains[t] = kt;
  }
  return gains;
}

CycleExpert compute_cycle_expert(const SmoothCycleEnv& env) {
  if (env.nominal.empty()) throw InvalidInput("cycle expert: nominal cycle not initialized");
  const std::size_t n = env.nominal.size();
  std::vector<Matrix> a(n), b(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double x1 = env.nominal[t][0];
    const double x2 = env.nominal[t][1];
    const double w = env.time_scale;
    Matrix j(2, 2);
    j(0, 0) = 0.0;
    j(0, 1) = w;
    j(1, 0) = w * (-2.0 * env.mu * x1 * x2 - 1.0);
    j(1, 1) = w * env.mu * (1.0 - x1 * x1);
    Matrix at = Matrix::identity(2);
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < 2; ++c) at(r, c) += env.dt * j(r, c);
    a[t] = at;
    Matrix bt(2, 1);
    bt(1, 0) = env.dt;
    b[t] = bt;
  }
  CycleExpert ex;
  ex.gains = riccati_gains(a, b, Matrix::identity(2), Matrix::identity(1), Matrix::identity(2), n);
  return ex;
}

// ---------------------------------------------------------------------------
// Controllers and rollouts
// ---------------------------------------------------------------------------

Controller hopper_expert_controller(const HopperExpert& expert) {
  return [expert](const Vec&, const StepInfo& info) -> Vec {
    return {expert.u_ff + expert.kp * (expert.apex_target - info.last_apex)};
  };
}

Controller cycle_expert_controller(const SmoothCycleEnv& env, const CycleExpert& expert) {
  const std::size_t n = expert.gains.size();
  return [&env, expert, n](const Vec& obs, const StepInfo& info) -> Vec {
    const std::size_t t = info.step % n;
    const Vec err = sub(obs, env.nominal[t]);
    const Vec u = expert.gains[t].apply(err);
    return {std::clamp(-u[0], -env.control_limit, env.control_limit)};
  };
}

Controller expert_controller(const EnvVariant& env) {
  if (std::holds_alternative<HybridHopperEnv>(env)) {
    const auto& h = std::get<HybridHopperEnv>(env);
    return hopper_expert_controller(compute_hopper_expert(h));
  }
  const auto& c = std::get<SmoothCycleEnv>(env);
  return cycle_expert_controller(c, compute_cycle_expert(c));
}

namespace {

RolloutResult rollout_hopper(const HybridHopperEnv& env, const Controller& ctrl,
                             const RolloutOptions& opts) {
  Rng rng(opts.seed);
  double z0 = env.apex_target;
  if (opts.init_noise_std > 0.0) z0 += rng.normal(0.0, opts.init_noise_std);
  const double min_apex = env.rest_length + 0.02 * (env.apex_target - env.rest_length);
  z0 = std::max(z0, min_apex);

  HopperState s = hopper_apex_state(env, z0);
  RolloutResult res;
  double last_apex = s.z;
  double t_last_apex = 0.0;
  res.section_values.push_back(s.z);
  const double live_apex =
      env.rest_length + env.min_apex_fraction * (env.apex_target - env.rest_length);

  for (std::size_t step = 0; step < opts.horizon; ++step) {
    const double t = static_cast<double>(step) * env.dt;
    const Vec u = ctrl(hopper_obs(s), StepInfo{step, t, last_apex});
    const double ground_next =
        env.ground_offset_std > 0.0 ? rng.normal(0.0, env.ground_offset_std) : 0.0;
    HopperStepEvents ev;
    s = hopper_step(env, s, u.empty() ? 0.0 : u[0], ground_next, &ev);
    if (ev.apexes > 0) {
      last_apex = ev.last_apex_height;
      if (last_apex >= live_apex) t_last_apex = t;
      res.crossings += static_cast<std::size_t>(ev.apexes);
      res.section_values.push_back(ev.last_apex_height);
    }
    if (ev.fallen || ev.stalled) {
      res.survival_steps = step;
      res.final_state = hopper_obs(s);
      break;
    }
    if (t - t_last_apex > env.stall_time) {  // hopping has died out
      res.survival_steps = step;
      res.final_state = hopper_obs(s);
      break;
    }
    if (opts.process_noise_std > 0.0) {
      const double kick = rng.normal(0.0, opts.process_noise_std);
      // A kick that jumps the ascending velocity across zero erases the
      // upcoming apex crossing; the kick itself is the apex then.
      if (s.mode == HopperMode::kFlight && s.zd > 0.0 && s.zd + kick <= 0.0) {
        last_apex = s.z + s.zd * s.zd / (2.0 * env.gravity);
        if (last_apex >= live_apex) t_last_apex = t;
        ++res.crossings;
        res.section_values.push_back(last_apex);
      }
      s.zd += kick;
    }
    res.survival_steps = step + 1;
  }
  res.completed = res.survival_steps == opts.horizon;
  if (res.final_state.empty()) res.final_state = hopper_obs(s);

  double err = 0.0;
  for (double a : res.section_values) {
    const double d = a - env.apex_target;
    err += d * d;
  }
  res.tracking_error = res.section_values.empty()
                           ? env.apex_target - env.rest_length
                           : std::sqrt(err / static_cast<double>(res.section_values.size()));
  return res;
}

RolloutResult rollout_cycle(const SmoothCycleEnv& env, const Controller& ctrl,
                            const RolloutOptions& opts) {
  if (env.nominal.empty()) throw InvalidInput("rollout: nominal cycle not initialized");
  Rng rng(opts.seed);
  Vec x = env.nominal[0];
  if (opts.init_noise_std > 0.0) {
    x[0] += rng.normal(0.0, opts.init_noise_std);
    x[1] += rng.normal(0.0, opts.init_noise_std);
  }
  RolloutResult res;
  const std::size_t n = env.nominal.size();
  double err_acc = 0.0;
  for (std::size_t step = 0; step < opts.horizon; ++step) {
    const Vec u = ctrl(x, StepInfo{step, static_cast<double>(step) * env.dt, 0.0});
    std::optional<Vec> crossing;
    x = cycle_step(env, x, u.empty() ? 0.0 : u[0], &crossing);
    if (crossing) {
      ++res.crossings;
      res.section_values.push_back((*crossing)[0]);
    }
    const Vec& ref = env.nominal[(step + 1) % n];
    err_acc += (x[0] - ref[0]) * (x[0] - ref[0]) + (x[1] - ref[1]) * (x[1] - ref[1]);
    if (std::hypot(x[0], x[1]) > env.state_bound) {
      res.survival_steps = step;
      break;
    }
    if (opts.process_noise_std > 0.0) {
      x[0] += rng.normal(0.0, opts.process_noise_std);
      x[1] += rng.normal(0.0, opts.process_noise_std);
    }
    res.survival_steps = step + 1;
  }
  res.completed = res.survival_steps == opts.horizon;
  res.final_state = x;
  res.tracking_error = res.survival_steps == 0
                           ? env.state_bound
                           : std::sqrt(err_acc / static_cast<double>(res.survival_steps));
  return res;
}

}  // namespace

RolloutResult rollout(const EnvVariant& env, const Controller& ctrl, const RolloutOptions& opts) {
  if (std::holds_alternative<HybridHopperEnv>(env))
    return rollout_hopper(std::get<HybridHopperEnv>(env), ctrl, opts);
  return rollout_cycle(std::get<SmoothCycleEnv>(env), ctrl, opts);
}

// ---------------------------------------------------------------------------
// Demonstrations
// ---------------------------------------------------------------------------

Dataset generate_demos(const EnvVariant& env, std::size_t n_steps, double noise_std,
                       std::uint64_t seed) {
  if (n_steps == 0) throw InvalidParameter("generate_demos: n_steps must be positive");
  Dataset data;
  Rng rng(seed);

  if (std::holds_alternative<HybridHopperEnv>(env)) {
    const auto& henv = std::get<HybridHopperEnv>(env);
    const HopperExpert expert = compute_hopper_expert(henv);
    const Controller ctrl = hopper_expert_controller(expert);
    HopperState s = hopper_apex_state(henv, henv.apex_target);
    double last_apex = s.z;
    data.dt = henv.dt;
    data.meta = "hopper";
    for (std::size_t step = 0; step < n_steps; ++step) {
      const Vec obs = hopper_obs(s);
      const Vec u = ctrl(obs, StepInfo{step, static_cast<double>(step) * henv.dt, last_apex});
      data.states.push_back(obs);
      data.actions.push_back(u);
      HopperStepEvents ev;
      s = hopper_step(henv, s, u[0], 0.0, &ev);
      if (ev.apexes > 0) last_apex = ev.last_apex_height;
      if (ev.fallen || ev.stalled)
        throw std::runtime_error("generate_demos: expert failed mid-rollout");
      if (noise_std > 0.0) {
        const double kick = rng.normal(0.0, noise_std);
        if (s.mode == HopperMode::kFlight && s.zd > 0.0 && s.zd + kick <= 0.0)
          last_apex = s.z + s.zd * s.zd / (2.0 * henv.gravity);
        s.zd += kick;
      }
    }
    return data;
  }

  const auto& cenv = std::get<SmoothCycleEnv>(env);
  const CycleExpert expert = compute_cycle_expert(cenv);
  const Controller ctrl = cycle_expert_controller(cenv, expert);
  Vec x = cenv.nominal[0];
  data.dt = cenv.dt;
  data.meta = "smooth_cycle";
  for (std::size_t step = 0; step < n_steps; ++step) {
    const Vec u = ctrl(x, StepInfo{step, static_cast<double>(step) * cenv.dt, 0.0});
    data.states.push_back(x);
    data.actions.push_back(u);
    x = cycle_step(cenv, x, u[0], nullptr);
    if (std::hypot(x[0], x[1]) > cenv.state_bound)
      throw std::runtime_error("generate_demos: expert failed mid-rollout");
    if (noise_std > 0.0) {
      x[0] += rng.normal(0.0, noise_std);
      x[1] += rng.normal(0.0, noise_std);
    }
  }
  return data;
}

// ---------------------------------------------------------------------------
// Synthetic LQR regression
// ---------------------------------------------------------------------------

LqrSyntheticEnv make_lqr_synthetic(std::size_t state_dim, std::size_t action_dim,
                                   std::uint64_t seed, double noise_std) {
  if (state_dim < 1 || state_dim > 8)
    throw InvalidParameter("lqr synthetic: state_dim must be in [1, 8]");
  if (action_dim < 1 || action_dim > state_dim)
    throw InvalidParameter("lqr synthetic: action_dim must be in [1, state_dim]");
  LqrSyntheticEnv env;
  env.state_dim = state_dim;
  env.action_dim = action_dim;
  env.noise_std = noise_std;
  Rng rng(seed);
  const double sc = 1.0 / std::sqrt(static_cast<double>(state_dim));
  env.a = Matrix(state_dim, state_dim);
  for (double& v : env.a.data()) v = rng.normal() * sc;
  const double rho = spectral_radius(env.a);
  if (rho > 1e-12) env.a *= 0.9 / rho;
  env.b = Matrix(state_dim, action_dim);
  for (double& v : env.b.data()) v = rng.normal() * sc;

  // Infinite-horizon gain from the Riccati recursion run to its fixed point.
  const Matrix q = Matrix::identity(state_dim);
  const Matrix r = Matrix::identity(action_dim);
  Matrix p = q;
  Matrix k(action_dim, state_dim);
  for (int it = 0; it < 10000; ++it) {
    const Matrix btp = env.b.transpose() * p;
    const Matrix gram = r + btp * env.b;
    k = pseudo_inverse(gram) * btp * env.a;
    const Matrix pn = q + env.a.transpose() * (p * (env.a - env.b * k));
    const double delta = (pn - p).max_abs();
    p = pn;
    if (delta < 1e-13) break;
  }
  env.k_star = k;
  if (spectral_radius(env.a - env.b * env.k_star) >= 1.0)
    throw std::runtime_error("lqr synthetic: closed loop failed to stabilize");
  return env;
}

namespace {

double operator_norm(const Matrix& m) {
  const Matrix gram = m.transpose() * m;
  auto [eig, vecs] = symmetric_eigen(gram);
  (void)vecs;
  return std::sqrt(std::max(eig.front(), 0.0));
}

}  // namespace

std::vector<LqrErrorPoint> lqr_regression_experiment(const LqrSyntheticEnv& env,
                                                     const std::vector<std::size_t>& sample_counts,
                                                     std::size_t trials, std::uint64_t seed) {
  if (trials == 0) throw InvalidParameter("lqr regression: trials must be positive");
  const std::size_t n = env.state_dim;
  const std::size_t m = env.action_dim;
  std::vector<LqrErrorPoint> out;
  for (std::size_t count : sample_counts) {
    LqrErrorPoint point;
    point.n_samples = count;
    double err_sum = 0.0;
    std::size_t ok = 0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
      Rng rng(mix_seed(seed, count, trial));
      Matrix gram(n, n);
      Matrix xtu(n, m);  // X^T (-U)
      for (std::size_t i = 0; i < count; ++i) {
        Vec x(n);
        for (double& v : x) v = rng.normal();
        Vec u = env.k_star.apply(x);  // du = -K* dx + noise, fit on -du
        for (std::size_t j = 0; j < m; ++j) u[j] = u[j] - env.noise_std * rng.normal();
        for (std::size_t r2 = 0; r2 < n; ++r2) {
          for (std::size_t c2 = 0; c2 < n; ++c2) gram(r2, c2) += x[r2] * x[c2];
          for (std::size_t c2 = 0; c2 < m; ++c2) xtu(r2, c2) += x[r2] * u[c2];
        }
      }
      auto [eig, vecs] = symmetric_eigen(gram);
      (void)vecs;
      if (eig.back() <= 1e-10 * std::max(eig.front(), 1.0)) {
        ++point.failures;  // singular design, typical when count < state_dim
        continue;
      }
      const Matrix k_hat = (pseudo_inverse(gram) * xtu).transpose();
      err_sum += operator_norm(k_hat - env.k_star);
      ++ok;
    }
    point.mean_error = ok ? err_sum / static_cast<double>(ok) : 0.0;
    out.push_back(point);
  }
  return out;
}

double loglog_slope(const std::vector<LqrErrorPoint>& points) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (const auto& p : points) {
    if (p.mean_error <= 0.0) continue;
    const double x = std::log(static_cast<double>(p.n_samples));
    const double y = std::log(p.mean_error);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) throw InvalidInput("loglog_slope: need at least two valid points");
  const double dn = static_cast<double>(n);
  return (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
}

}  // namespace lvr
