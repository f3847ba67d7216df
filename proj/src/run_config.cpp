#include "gaitlab/run_config.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

#include "gaitlab/dynamics.hpp"
#include "gaitlab/errors.hpp"
#include "gaitlab/muscle.hpp"
#include "gaitlab/trace.hpp"

namespace gaitlab {

namespace fs = std::filesystem;

namespace {

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

std::string resolve(const std::string& base_dir, const std::string& p) {
  if (p.empty()) return p;
  fs::path path(p);
  if (path.is_relative()) path = fs::path(base_dir) / path;
  return path.lexically_normal().string();
}

template <typename T>
void take(const Json& j, const char* key, T& field) {
  field = optional<T>(j, key, field);
}

}  // namespace

Json trainer_config_to_json(const TrainerConfig& c) {
  Json j;
  j["actor_hidden"] = c.actor_hidden;
  j["critic_hidden"] = c.critic_hidden;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["lr_floor"] = c.lr_floor;
  j["tau"] = c.tau;
  j["entropy"] = c.entropy == EntropyMode::automatic ? "auto" : "fixed";
  j["initial_alpha"] = c.initial_alpha;
  j["gamma"] = c.gamma;
  j["train_frequency"] = c.train_frequency;
  j["gradient_steps"] = c.gradient_steps;
  j["target_update_interval"] = c.target_update_interval;
  j["aggregate_frequency"] = c.aggregate_frequency;
  j["total_steps"] = c.total_steps;
  j["num_envs"] = c.num_envs;
  j["seed"] = c.seed;
  j["replay_capacity"] = c.replay_capacity;
  j["learning_starts"] = c.learning_starts;
  j["log_interval"] = c.log_interval;
  j["return_window"] = c.return_window;
  j["threaded"] = c.threaded;
  j["optimizer"] = c.optimizer;
  return j;
}

TrainerConfig trainer_config_from_json(const Json& j, TrainerConfig c) {
  check_keys(j,
             {"preset", "actor_hidden", "critic_hidden", "batch_size", "learning_rate", "lr_floor", "tau", "entropy",
              "initial_alpha", "gamma", "train_frequency", "gradient_steps", "target_update_interval",
              "aggregate_frequency", "total_steps", "num_envs", "seed", "replay_capacity", "learning_starts",
              "log_interval", "return_window", "threaded", "optimizer"},
             "trainer");
  take(j, "actor_hidden", c.actor_hidden);
  take(j, "critic_hidden", c.critic_hidden);
  take(j, "batch_size", c.batch_size);
  take(j, "learning_rate", c.learning_rate);
  take(j, "lr_floor", c.lr_floor);
  take(j, "tau", c.tau);
  if (j.contains("entropy")) {
    const auto mode = required<std::string>(j, "entropy");
    if (mode == "auto")
      c.entropy = EntropyMode::automatic;
    else if (mode == "fixed")
      c.entropy = EntropyMode::fixed;
    else
      throw ConfigError("trainer.entropy must be 'auto' or 'fixed'");
  }
  take(j, "initial_alpha", c.initial_alpha);
  take(j, "gamma", c.gamma);
  take(j, "train_frequency", c.train_frequency);
  take(j, "gradient_steps", c.gradient_steps);
  take(j, "target_update_interval", c.target_update_interval);
  take(j, "aggregate_frequency", c.aggregate_frequency);
  take(j, "total_steps", c.total_steps);
  take(j, "num_envs", c.num_envs);
  take(j, "seed", c.seed);
  take(j, "replay_capacity", c.replay_capacity);
  take(j, "learning_starts", c.learning_starts);
  take(j, "log_interval", c.log_interval);
  take(j, "return_window", c.return_window);
  take(j, "threaded", c.threaded);
  take(j, "optimizer", c.optimizer);
  return c;
}

Json env_config_to_json(const EnvConfig& c) {
  Json j;
  j["control_rate_hz"] = c.control_rate;
  j["physics_rate_hz"] = c.physics_rate;
  j["substeps_per_tick"] = c.substeps_per_tick;
  j["episode_steps"] = c.episode_steps;
  j["termination_radius_m"] = c.termination_radius;
  j["initial_activation"] = c.initial_activation;
  j["reset_search_range_m"] = c.reset_search_range;
  j["reset_force_tolerance_N"] = c.reset_force_tolerance;
  return j;
}

EnvConfig env_config_from_json(const Json& j, EnvConfig c) {
  check_keys(j,
             {"control_rate_hz", "physics_rate_hz", "substeps_per_tick", "episode_steps", "termination_radius_m",
              "initial_activation", "reset_search_range_m", "reset_force_tolerance_N"},
             "env");
  take(j, "control_rate_hz", c.control_rate);
  take(j, "physics_rate_hz", c.physics_rate);
  take(j, "substeps_per_tick", c.substeps_per_tick);
  take(j, "episode_steps", c.episode_steps);
  take(j, "termination_radius_m", c.termination_radius);
  take(j, "initial_activation", c.initial_activation);
  take(j, "reset_search_range_m", c.reset_search_range);
  take(j, "reset_force_tolerance_N", c.reset_force_tolerance);
  return c;
}

Json reward_config_to_json(const RewardConfig& c) {
  Json j;
  j["profile"] = std::string(to_string(c.phase));
  j["k_pos"] = c.k_pos;
  j["k_vel"] = c.k_vel;
  j["k_root"] = c.k_root;
  j["k_ee"] = c.k_ee;
  j["k_torq"] = c.k_torq;
  j["w_pos"] = c.w_pos;
  j["w_vel"] = c.w_vel;
  j["w_root"] = c.w_root;
  j["w_ee"] = c.w_ee;
  j["w_torq"] = c.w_torq;
  j["w_eff"] = c.w_eff;
  j["w_smt"] = c.w_smt;
  j["w_exo"] = c.w_exo;
  return j;
}

RewardConfig reward_config_from_json(const Json& j, RewardConfig c) {
  if (j.is_string()) return RewardConfig::profile(j.get<std::string>());
  check_keys(j,
             {"profile", "k_pos", "k_vel", "k_root", "k_ee", "k_torq", "w_pos", "w_vel", "w_root", "w_ee", "w_torq",
              "w_eff", "w_smt", "w_exo"},
             "reward");
  if (j.contains("profile")) c = RewardConfig::profile(required<std::string>(j, "profile"));
  take(j, "k_pos", c.k_pos);
  take(j, "k_vel", c.k_vel);
  take(j, "k_root", c.k_root);
  take(j, "k_ee", c.k_ee);
  take(j, "k_torq", c.k_torq);
  take(j, "w_pos", c.w_pos);
  take(j, "w_vel", c.w_vel);
  take(j, "w_root", c.w_root);
  take(j, "w_ee", c.w_ee);
  take(j, "w_torq", c.w_torq);
  take(j, "w_eff", c.w_eff);
  take(j, "w_smt", c.w_smt);
  take(j, "w_exo", c.w_exo);
  return c;
}

Json run_config_to_json(const RunConfig& c) {
  Json j;
  j["schema"] = "gaitlab.run/1";
  j["phase"] = std::string(to_string(c.phase));
  j["model"] = {{"skeleton", c.skeleton_path}, {"muscles", c.muscles_path}, {"device", c.device_path}};
  Json clip;
  clip["source"] = c.clip.kind;
  if (c.clip.kind == "csv") {
    clip["path"] = c.clip.path;
  } else {
    clip["speed_m_per_s"] = c.clip.synthetic.speed;
    clip["sample_rate_hz"] = c.clip.synthetic.sample_rate;
    clip["cycles"] = c.clip.synthetic.cycles;
  }
  j["clip"] = clip;
  j["env"] = env_config_to_json(c.env);
  j["reward"] = reward_config_to_json(c.env.reward);
  if (c.weakness == "custom")
    j["weakness"] = c.env.weakness;
  else
    j["weakness"] = c.weakness;
  Json t = trainer_config_to_json(c.trainer);
  t["preset"] = c.trainer_preset;
  j["trainer"] = t;
  j["init_checkpoint"] = c.init_checkpoint;
  return j;
}

RunConfig run_config_from_json(const Json& j, const std::string& base_dir) {
  check_keys(j, {"schema", "phase", "model", "clip", "env", "reward", "weakness", "trainer", "init_checkpoint"}, "run");
  if (j.value("schema", "") != "gaitlab.run/1") throw ConfigError("run config schema must be 'gaitlab.run/1'");
  RunConfig c;
  c.phase = train_phase_from_string(optional<std::string>(j, "phase", "base"));

  if (j.contains("model")) {
    const Json& m = j.at("model");
    check_keys(m, {"skeleton", "muscles", "device"}, "model");
    c.skeleton_path = resolve(base_dir, optional<std::string>(m, "skeleton", ""));
    c.muscles_path = resolve(base_dir, optional<std::string>(m, "muscles", ""));
    c.device_path = resolve(base_dir, optional<std::string>(m, "device", ""));
  }

  if (j.contains("clip")) {
    const Json& cl = j.at("clip");
    check_keys(cl, {"source", "path", "speed_m_per_s", "sample_rate_hz", "cycles"}, "clip");
    c.clip.kind = optional<std::string>(cl, "source", "synthetic");
    if (c.clip.kind == "csv") {
      c.clip.path = resolve(base_dir, required<std::string>(cl, "path"));
    } else if (c.clip.kind == "synthetic") {
      take(cl, "speed_m_per_s", c.clip.synthetic.speed);
      take(cl, "sample_rate_hz", c.clip.synthetic.sample_rate);
      take(cl, "cycles", c.clip.synthetic.cycles);
    } else {
      throw ConfigError("clip.source must be 'synthetic' or 'csv'");
    }
  }

  if (j.contains("env")) c.env = env_config_from_json(j.at("env"), c.env);
  const RewardConfig by_phase = c.phase == TrainPhase::base ? RewardConfig::base() : RewardConfig::finetune();
  c.env.reward = j.contains("reward") ? reward_config_from_json(j.at("reward"), by_phase) : by_phase;

  if (j.contains("weakness")) {
    const Json& w = j.at("weakness");
    if (w.is_string()) {
      c.weakness = w.get<std::string>();
      c.env.weakness = weakness_preset(c.weakness);
    } else {
      c.weakness = "custom";
      c.env.weakness = optional<WeaknessMask>(j, "weakness", {});
    }
  }

  Json t = j.value("trainer", Json::object());
  c.trainer_preset = optional<std::string>(t, "preset", "desk");
  c.trainer = trainer_config_from_json(t, TrainerConfig::preset(c.trainer_preset, c.phase));
  c.init_checkpoint = resolve(base_dir, optional<std::string>(j, "init_checkpoint", ""));

  c.env.validate();
  c.trainer.validate();
  return c;
}

RunConfig load_run_config(const std::string& path, const std::string& preset) {
  Json j = read_json_file(path);
  if (!preset.empty()) {
    if (!j.contains("trainer")) j["trainer"] = Json::object();
    j["trainer"]["preset"] = preset;
  }
  const std::string dir = fs::path(path).parent_path().string();
  return run_config_from_json(j, dir.empty() ? "." : dir);
}

RunConfig default_run_config() {
  RunConfig c;
  c.trainer = TrainerConfig::preset("desk", c.phase);
  return c;
}

std::string RunConfig::fingerprint() const {
  Json j = run_config_to_json(*this);
  j.erase("trainer");
  j.erase("init_checkpoint");
  return gaitlab::fingerprint(j.dump());
}

EnvResources make_resources(const RunConfig& c) {
  const SkeletonSpec skeleton = c.skeleton_path.empty() ? default_skeleton() : load_skeleton(c.skeleton_path);
  const ExoDeviceSpec device = c.device_path.empty() ? no_device() : load_device(c.device_path);
  EnvResources r;
  r.model = std::make_shared<const Model>(build_model(skeleton, device));
  r.muscles = std::make_shared<const std::vector<MuscleSpec>>(c.muscles_path.empty() ? default_muscles()
                                                                                     : load_muscles(c.muscles_path));
  if (c.clip.kind == "csv") {
    r.clip = std::make_shared<const ReferenceClip>(load_clip(c.clip.path));
  } else {
    // The reference is the unassisted walker's motion.
    const Model human = build_model(skeleton, no_device());
    r.clip = std::make_shared<const ReferenceClip>(synthetic_clip(human, c.clip.synthetic));
  }
  return r;
}

}  // namespace gaitlab
