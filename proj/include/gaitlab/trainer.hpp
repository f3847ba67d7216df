#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "gaitlab/env.hpp"
#include "gaitlab/sac.hpp"
#include "gaitlab/trace.hpp"

namespace gaitlab {

enum class TrainPhase { base, exo_finetune, weakness_finetune };

std::string_view to_string(TrainPhase phase);
/// "base", "exo-finetune", "weakness-finetune".
TrainPhase train_phase_from_string(std::string_view s);

struct TrainerConfig {
  std::vector<int> actor_hidden{64, 64};
  std::vector<int> critic_hidden{64, 64};
  int batch_size = 256;
  double learning_rate = 3e-4;  // initial value of the linear decay
  double lr_floor = 0.1;        // fraction of the initial rate reached at total_steps
  double tau = 0.02;
  EntropyMode entropy = EntropyMode::automatic;
  double initial_alpha = 1.0;
  double gamma = 0.95;
  int train_frequency = 4;
  int gradient_steps = 4;
  int target_update_interval = 1;
  /// Count train_frequency in aggregate steps over all collectors (true) or
  /// per collector.
  bool aggregate_frequency = true;
  long total_steps = 200'000;
  int num_envs = 4;
  std::uint64_t seed = 0;
  long replay_capacity = 1'000'000;
  /// Uniform random actions before the first update (base phase only).
  long learning_starts = 1000;
  long log_interval = 5000;
  /// Completed episodes averaged for the reported return.
  int return_window = 20;
  /// Run collectors on their own threads; results are identical either way.
  bool threaded = true;
  std::string optimizer = "adam";

  /// Named presets: "desk" (phase dependent length), "base" and "finetune"
  /// (full scale).
  static TrainerConfig preset(std::string_view name, TrainPhase phase);
  void validate() const;
  SacConfig sac() const;
  double learning_rate_at(long step) const;
};

/// Structural identity of an environment: spaces, muscle set and timing.
std::string env_fingerprint(const GaitEnv& env);

/// Trained agent plus the metadata needed to resume or evaluate it.
struct PolicyCheckpoint {
  static constexpr std::uint32_t kVersion = 1;

  TrainerConfig trainer;
  TrainPhase phase = TrainPhase::base;
  int obs_dim = 0;
  int action_dim = 0;
  std::string env_fingerprint;
  std::string config_fingerprint;
  long total_steps = 0;
  std::string rng_state;
  std::shared_ptr<Sac> agent;

  std::string serialize() const;
  static PolicyCheckpoint deserialize(const std::string& bytes);
  void save(const std::string& path) const;
  static PolicyCheckpoint load(const std::string& path);
};

/// One row of the training metrics CSV.
struct TrainLogRow {
  long step = 0;
  long episodes = 0;
  double return_mean = 0.0;  // NaN before the first completed episode
  double length_mean = 0.0;
  RewardBreakdown terms;     // per-step means since the previous row
  double exo_abs_mean = 0.0; // N m over assisted joints
  double exo_abs_max = 0.0;
  double exo_limit = 0.0;
  double entropy = 0.0;      // NaN before the first update
  double alpha = 0.0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double lr = 0.0;
  long updates = 0;
};

std::string train_log_header();
std::string format_log_row(const TrainLogRow& row);

struct TrainHooks {
  /// Receives the CSV header then one line per row.
  std::ostream* metrics = nullptr;
  std::function<void(const TrainLogRow&)> on_log;
};

struct TrainResult {
  PolicyCheckpoint checkpoint;
  std::vector<TrainLogRow> log;
  std::vector<double> episode_returns;
  std::vector<int> episode_lengths;
  /// Mean return of uniform random actions over return_window episodes,
  /// measured before training.
  double random_return = 0.0;
  /// Mean return of the last return_window training episodes.
  double final_return = 0.0;
  double exo_abs_mean = 0.0;  // whole run, N m
  double exo_abs_max = 0.0;
  double exo_limit = 0.0;
  double exo_term_mean = 0.0;
};

/// Checks the phase against the environment: exo fine-tuning needs a device
/// and the fine-tune reward, weakness fine-tuning a mask, base neither.
void check_phase(TrainPhase phase, const EnvResources& resources, const EnvConfig& env, bool has_init);

TrainResult train(const EnvResources& resources, const EnvConfig& env, const TrainerConfig& config, TrainPhase phase,
                  const PolicyCheckpoint* init, const std::string& config_fingerprint, const TrainHooks& hooks = {});

struct EvalSummary {
  int episodes = 0;
  std::vector<double> returns;
  std::vector<int> lengths;
  double mean_return = 0.0;  // 0 when no episodes ran
  double mean_length = 0.0;
};

struct EvalResult {
  std::vector<EpisodeTrace> traces;
  EvalSummary summary;
};

/// Runs `episodes` episodes (mean action when deterministic). Throws
/// DataError when the checkpoint was trained on an incompatible environment.
EvalResult evaluate(const PolicyCheckpoint& checkpoint, const EnvResources& resources, const EnvConfig& env,
                    int episodes, bool deterministic, std::uint64_t seed, const std::string& config_fingerprint);

}  // namespace gaitlab
