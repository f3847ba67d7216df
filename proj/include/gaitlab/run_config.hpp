#pragma once

#include <optional>
#include <string>

#include "gaitlab/env.hpp"
#include "gaitlab/json_io.hpp"
#include "gaitlab/refmotion.hpp"
#include "gaitlab/trainer.hpp"

namespace gaitlab {

/// Where the reference clip comes from: a CSV (with JSON sidecar) or the
/// built-in synthetic generator.
struct ClipSource {
  std::string kind = "synthetic";  // "synthetic" | "csv"
  std::string path;                // csv only
  SyntheticGaitParams synthetic;
};

/// Everything a CLI run needs. Paths are absolute after loading (relative
/// paths in the file resolve against the file's directory); empty model
/// paths mean the built-in defaults.
struct RunConfig {
  std::string skeleton_path;
  std::string muscles_path;
  std::string device_path;
  ClipSource clip;
  EnvConfig env;
  std::string weakness = "none";  // preset name, or "custom" when given as a map
  TrainPhase phase = TrainPhase::base;
  std::string trainer_preset = "desk";
  TrainerConfig trainer;
  std::string init_checkpoint;

  /// Hash of the canonical JSON form without the trainer settings, so runs
  /// that differ only in seed or length share it.
  std::string fingerprint() const;
};

Json trainer_config_to_json(const TrainerConfig& c);
/// Starts from `base` and overrides the keys present in `j`.
TrainerConfig trainer_config_from_json(const Json& j, TrainerConfig base);

Json env_config_to_json(const EnvConfig& c);
EnvConfig env_config_from_json(const Json& j, EnvConfig base = {});

Json reward_config_to_json(const RewardConfig& c);
/// A profile name, or an object with an optional "profile" and overrides.
RewardConfig reward_config_from_json(const Json& j, RewardConfig base);

Json run_config_to_json(const RunConfig& c);
RunConfig run_config_from_json(const Json& j, const std::string& base_dir);
/// Loads a "gaitlab.run/1" file. A non-empty `preset` replaces the file's
/// trainer preset before its overrides are applied.
RunConfig load_run_config(const std::string& path, const std::string& preset = "");

/// The default desk configuration with built-in model files.
RunConfig default_run_config();

/// Builds the model (with device), muscles and reference clip. The clip is
/// generated on or checked against the unassisted model.
EnvResources make_resources(const RunConfig& config);

}  // namespace gaitlab
