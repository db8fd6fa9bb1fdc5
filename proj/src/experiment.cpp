#include "lvr/experiment.hpp"

#include <fstream>
#include <set>

#include "json.hpp"

namespace lvr {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& block,
                const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(block + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key)) throw ConfigError(block + "." + key + ": unknown key");
  }
}

double get_num(const json& j, const std::string& block, const std::string& key, double def) {
  if (!j.contains(key)) return def;
  if (!j[key].is_number()) throw ConfigError(block + "." + key + ": expected a number");
  return j[key].get<double>();
}

std::size_t get_count(const json& j, const std::string& block, const std::string& key,
                      std::size_t def) {
  if (!j.contains(key)) return def;
  if (!j[key].is_number_unsigned() && !j[key].is_number_integer())
    throw ConfigError(block + "." + key + ": expected a non-negative integer");
  const long long v = j[key].get<long long>();
  if (v < 0) throw ConfigError(block + "." + key + ": expected a non-negative integer");
  return static_cast<std::size_t>(v);
}

bool get_bool(const json& j, const std::string& block, const std::string& key, bool def) {
  if (!j.contains(key)) return def;
  if (!j[key].is_boolean()) throw ConfigError(block + "." + key + ": expected true/false");
  return j[key].get<bool>();
}

std::string get_str(const json& j, const std::string& block, const std::string& key,
                    const std::string& def) {
  if (!j.contains(key)) return def;
  if (!j[key].is_string()) throw ConfigError(block + "." + key + ": expected a string");
  return j[key].get<std::string>();
}

}  // namespace

EnvVariant ExperimentConfig::make_env() const {
  if (env_type == "hopper") return hopper;
  if (env_type == "smooth_cycle") {
    SmoothCycleEnv e =
        make_smooth_cycle(cycle_mu, cycle_dt, cycle_steps_per_period, cycle_control_limit);
    e.substeps = cycle_substeps;
    return e;
  }
  throw ConfigError("env.type: unknown environment '" + env_type + "'");
}

ExperimentSetup ExperimentConfig::make_setup() const {
  ExperimentSetup s;
  s.env = make_env();
  s.train = train;
  s.demo_steps = data_steps;
  s.demo_noise_std = data_noise_std;
  s.eval_episodes = eval_episodes;
  s.eval.horizon = horizon;
  s.eval.process_noise_std = eval_noise_std;
  s.eval.init_noise_std = init_noise_std;
  s.poincare_crossings = poincare_crossings;
  s.root_seed = seed;
  return s;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  check_keys(j, "config", {"seed", "out_dir", "env", "data", "train", "loss", "analysis"});
  if (!j.contains("env")) throw ConfigError("config.env: missing required block");

  ExperimentConfig cfg;
  cfg.seed = get_count(j, "config", "seed", 0);
  cfg.out_dir = get_str(j, "config", "out_dir", cfg.out_dir);

  const json& je = j["env"];
  cfg.env_type = get_str(je, "env", "type", "");
  if (cfg.env_type == "hopper") {
    check_keys(je, "env",
               {"type", "mass", "spring_k", "rest_length", "gravity", "restitution",
                "apex_target", "thrust_limit", "dt", "substeps"});
    HybridHopperEnv& h = cfg.hopper;
    h.mass = get_num(je, "env", "mass", h.mass);
    h.spring_k = get_num(je, "env", "spring_k", h.spring_k);
    h.rest_length = get_num(je, "env", "rest_length", h.rest_length);
    h.gravity = get_num(je, "env", "gravity", h.gravity);
    h.restitution = get_num(je, "env", "restitution", h.restitution);
    h.apex_target = get_num(je, "env", "apex_target", h.apex_target);
    h.thrust_limit = get_num(je, "env", "thrust_limit", h.thrust_limit);
    h.dt = get_num(je, "env", "dt", h.dt);
    h.substeps = static_cast<int>(get_count(je, "env", "substeps", h.substeps));
  } else if (cfg.env_type == "smooth_cycle") {
    check_keys(je, "env", {"type", "mu", "dt", "steps_per_period", "control_limit", "substeps"});
    cfg.cycle_mu = get_num(je, "env", "mu", cfg.cycle_mu);
    cfg.cycle_dt = get_num(je, "env", "dt", cfg.cycle_dt);
    cfg.cycle_steps_per_period =
        get_count(je, "env", "steps_per_period", cfg.cycle_steps_per_period);
    cfg.cycle_control_limit = get_num(je, "env", "control_limit", cfg.cycle_control_limit);
    cfg.cycle_substeps = static_cast<int>(get_count(je, "env", "substeps", cfg.cycle_substeps));
  } else {
    throw ConfigError("env.type: must be 'hopper' or 'smooth_cycle'");
  }

  if (j.contains("data")) {
    const json& jd = j["data"];
    check_keys(jd, "data", {"steps", "noise_std"});
    cfg.data_steps = get_count(jd, "data", "steps", cfg.data_steps);
    cfg.data_noise_std = get_num(jd, "data", "noise_std", cfg.data_noise_std);
  }

  if (j.contains("train")) {
    const json& jt = j["train"];
    check_keys(jt, "train",
               {"epochs", "learning_rate", "optimizer", "beta1", "beta2", "adam_eps", "hidden",
                "k", "q", "cap", "log_every", "early_stop_patience"});
    TrainConfig& t = cfg.train;
    t.epochs = get_count(jt, "train", "epochs", t.epochs);
    t.learning_rate = get_num(jt, "train", "learning_rate", t.learning_rate);
    const std::string opt = get_str(jt, "train", "optimizer", "adam");
    if (opt == "adam")
      t.optimizer = OptimizerKind::kAdam;
    else if (opt == "sgd")
      t.optimizer = OptimizerKind::kSgd;
    else
      throw ConfigError("train.optimizer: must be 'adam' or 'sgd'");
    t.beta1 = get_num(jt, "train", "beta1", t.beta1);
    t.beta2 = get_num(jt, "train", "beta2", t.beta2);
    t.adam_eps = get_num(jt, "train", "adam_eps", t.adam_eps);
    if (jt.contains("hidden")) {
      if (!jt["hidden"].is_array()) throw ConfigError("train.hidden: expected an array");
      t.hidden.clear();
      for (const auto& w : jt["hidden"]) {
        if (!w.is_number_integer() && !w.is_number_unsigned())
          throw ConfigError("train.hidden: expected positive integers");
        t.hidden.push_back(w.get<std::size_t>());
      }
    }
    t.k = get_count(jt, "train", "k", t.k);
    t.q = get_num(jt, "train", "q", t.q);
    t.cap = get_count(jt, "train", "cap", t.cap);
    t.log_every = get_count(jt, "train", "log_every", t.log_every);
    t.early_stop_patience = get_count(jt, "train", "early_stop_patience", t.early_stop_patience);
  }

  if (j.contains("loss")) {
    const json& jl = j["loss"];
    check_keys(jl, "loss", {"tau", "lambda", "projection", "stop_grad_projection"});
    cfg.train.loss.tau = get_num(jl, "loss", "tau", cfg.train.loss.tau);
    cfg.train.loss.lambda = get_num(jl, "loss", "lambda", cfg.train.loss.lambda);
    const std::string proj = get_str(jl, "loss", "projection", "row_space");
    if (proj == "row_space")
      cfg.train.loss.projection_mode = ProjectionMode::kRowSpace;
    else if (proj == "identity")
      cfg.train.loss.projection_mode = ProjectionMode::kIdentity;
    else
      throw ConfigError("loss.projection: must be 'row_space' or 'identity'");
    cfg.train.loss.stop_grad_projection =
        get_bool(jl, "loss", "stop_grad_projection", cfg.train.loss.stop_grad_projection);
  }

  if (j.contains("analysis")) {
    const json& ja = j["analysis"];
    check_keys(ja, "analysis",
               {"eval_episodes", "horizon", "eval_noise_std", "init_noise_std",
                "poincare_crossings", "sizes", "levels", "seeds"});
    cfg.eval_episodes = get_count(ja, "analysis", "eval_episodes", cfg.eval_episodes);
    cfg.horizon = get_count(ja, "analysis", "horizon", cfg.horizon);
    cfg.eval_noise_std = get_num(ja, "analysis", "eval_noise_std", cfg.eval_noise_std);
    cfg.init_noise_std = get_num(ja, "analysis", "init_noise_std", cfg.init_noise_std);
    cfg.poincare_crossings = get_count(ja, "analysis", "poincare_crossings", cfg.poincare_crossings);
    if (ja.contains("sizes")) {
      if (!ja["sizes"].is_array()) throw ConfigError("analysis.sizes: expected an array");
      for (const auto& s : ja["sizes"]) cfg.sizes.push_back(s.get<std::size_t>());
    }
    if (ja.contains("levels")) {
      if (!ja["levels"].is_array()) throw ConfigError("analysis.levels: expected an array");
      for (const auto& l : ja["levels"]) cfg.levels.push_back(l.get<double>());
    }
    cfg.sweep_seeds = get_count(ja, "analysis", "seeds", cfg.sweep_seeds);
  }

  // Canonical effective config -> stable hash recorded in every artifact.
  json eff;
  eff["seed"] = cfg.seed;
  eff["env"]["type"] = cfg.env_type;
  if (cfg.env_type == "hopper") {
    eff["env"]["mass"] = cfg.hopper.mass;
    eff["env"]["spring_k"] = cfg.hopper.spring_k;
    eff["env"]["rest_length"] = cfg.hopper.rest_length;
    eff["env"]["gravity"] = cfg.hopper.gravity;
    eff["env"]["restitution"] = cfg.hopper.restitution;
    eff["env"]["apex_target"] = cfg.hopper.apex_target;
    eff["env"]["thrust_limit"] = cfg.hopper.thrust_limit;
    eff["env"]["dt"] = cfg.hopper.dt;
    eff["env"]["substeps"] = cfg.hopper.substeps;
  } else {
    eff["env"]["mu"] = cfg.cycle_mu;
    eff["env"]["dt"] = cfg.cycle_dt;
    eff["env"]["steps_per_period"] = cfg.cycle_steps_per_period;
    eff["env"]["control_limit"] = cfg.cycle_control_limit;
    eff["env"]["substeps"] = cfg.cycle_substeps;
  }
  eff["data"] = {{"steps", cfg.data_steps}, {"noise_std", cfg.data_noise_std}};
  eff["train"] = {{"epochs", cfg.train.epochs},
                  {"learning_rate", cfg.train.learning_rate},
                  {"optimizer", cfg.train.optimizer == OptimizerKind::kAdam ? "adam" : "sgd"},
                  {"beta1", cfg.train.beta1},
                  {"beta2", cfg.train.beta2},
                  {"adam_eps", cfg.train.adam_eps},
                  {"hidden", cfg.train.hidden},
                  {"k", cfg.train.k},
                  {"q", cfg.train.q},
                  {"cap", cfg.train.cap},
                  {"early_stop_patience", cfg.train.early_stop_patience}};
  eff["loss"] = {{"tau", cfg.train.loss.tau},
                 {"lambda", cfg.train.loss.lambda},
                 {"projection", cfg.train.loss.projection_mode == ProjectionMode::kRowSpace
                                    ? "row_space"
                                    : "identity"},
                 {"stop_grad_projection", cfg.train.loss.stop_grad_projection}};
  eff["analysis"] = {{"eval_episodes", cfg.eval_episodes},
                     {"horizon", cfg.horizon},
                     {"eval_noise_std", cfg.eval_noise_std},
                     {"init_noise_std", cfg.init_noise_std},
                     {"poincare_crossings", cfg.poincare_crossings},
                     {"sizes", cfg.sizes},
                     {"levels", cfg.levels},
                     {"seeds", cfg.sweep_seeds}};
  cfg.config_hash = to_hex(fnv1a(eff.dump()));
  return cfg;
}

}  // namespace lvr
