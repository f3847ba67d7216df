#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gaitlab/dynamics.hpp"
#include "gaitlab/metabolics.hpp"
#include "gaitlab/muscle.hpp"
#include "gaitlab/refmotion.hpp"
#include "gaitlab/reward.hpp"

namespace gaitlab {

/// Exo action channels: hip, knee, ankle on each side, in JointId order.
inline constexpr int kNumAssistChannels = kNumJoints;
/// Future reference frames stacked into the observation.
inline constexpr int kFutureFrames = 5;
/// Ground reaction force entries: (x, y) per foot, in body weights.
inline constexpr int kGrfObs = 4;
/// Root and both foot linear velocities.
inline constexpr int kVelocityObs = 6;

/// Observation dimension for `muscles` muscles:
/// 3 M + 4 + 7 + 6 + 5 * 7.
constexpr int observation_dim(int muscles) {
  return 3 * muscles + kGrfObs + kNumAngles + kVelocityObs + kFutureFrames * kNumAngles;
}
constexpr int action_dim(int muscles) { return muscles + kNumAssistChannels; }

/// Offsets of each block inside the observation vector.
struct ObservationLayout {
  int muscles = 0;
  int fiber_length() const { return 0; }
  int tendon_force() const { return muscles; }
  int activation() const { return 2 * muscles; }
  int grf() const { return 3 * muscles; }
  int angles() const { return grf() + kGrfObs; }
  int velocities() const { return angles() + kNumAngles; }
  int future() const { return velocities() + kVelocityObs; }
  int size() const { return future() + kFutureFrames * kNumAngles; }
};

/// Per-muscle excitation ceilings; names absent from the map stay at 1.
using WeaknessMask = std::map<std::string, double>;

/// Named presets: "none", "plantarflexor-weak-left", "hipflexor-weak-left".
WeaknessMask weakness_preset(const std::string& name);
/// Caps in muscle order; throws ConfigError for unknown muscle names or caps
/// outside (0, 1].
std::vector<double> resolve_weakness(const WeaknessMask& mask, std::span<const MuscleSpec> muscles);

struct EnvConfig {
  double control_rate = 25.0;   // Hz
  double physics_rate = 200.0;  // Hz
  int substeps_per_tick = 5;    // integration substeps inside each physics tick
  int episode_steps = 250;
  double termination_radius = 0.4;  // m
  double initial_activation = 0.05;
  double reset_search_range = 0.1;  // m, vertical offset bracket at reset
  double reset_force_tolerance = 1.0;  // N
  RewardConfig reward = RewardConfig::base();
  WeaknessMask weakness;
  /// Coordinates held fixed during integration (test scripting).
  std::array<bool, kNumCoords> locked{};

  int ticks_per_step() const;
  double control_period() const { return 1.0 / control_rate; }
  void validate() const;
};

/// Everything the environment computed for one control step.
struct StepResult {
  Eigen::VectorXd observation;
  RewardBreakdown reward;
  bool terminated = false;
  bool truncated = false;
  /// Non-empty when the step ended because the physics failed.
  std::string diagnostic;
  /// True when any action entry lay outside [-1, 1] and was clipped.
  bool action_clipped = false;
};

/// Immutable resources shared by environment instances.
struct EnvResources {
  std::shared_ptr<const Model> model;
  std::shared_ptr<const std::vector<MuscleSpec>> muscles;
  std::shared_ptr<const ReferenceClip> clip;
};

class GaitEnv {
 public:
  GaitEnv(EnvResources resources, EnvConfig config);

  int observation_dim() const { return layout_.size(); }
  int action_dim() const { return gaitlab::action_dim(num_muscles()); }
  int num_muscles() const { return static_cast<int>(resources_.muscles->size()); }
  const ObservationLayout& layout() const { return layout_; }

  /// Reference-state initialization at a uniformly drawn clip frame.
  Eigen::VectorXd reset(std::uint64_t seed);
  /// Reference-state initialization at a given clip frame.
  Eigen::VectorXd reset_at_frame(int frame);
  StepResult step(std::span<const double> action);

  /// Replaces the excitation caps (identity mask restores full strength).
  void apply_weakness(const WeaknessMask& mask);
  const std::vector<double>& excitation_caps() const { return caps_; }

  /// Overwrites the mechanical state (scripted tests). Muscle states and the
  /// reference clock are left unchanged.
  void set_model_state(const ModelState& state);

  // Read-only views of the current step.
  const ModelState& model_state() const { return state_; }
  const std::vector<MuscleState>& muscle_states() const { return muscle_; }
  const std::vector<MetabolicRates>& metabolic_rates() const { return rates_; }
  const std::vector<double>& applied_excitation() const { return applied_; }
  const JointVector& exo_command() const { return exo_pre_; }
  const JointVector& exo_torque() const { return exo_out_; }
  const JointVector& exo_limit() const { return exo_max_; }
  /// Net joint moments averaged over the last control step, N m.
  const JointVector& mean_joint_moments() const { return mean_tau_; }
  double reference_time() const { return ref_time_; }
  double start_time() const { return start_time_; }
  int steps() const { return steps_; }
  double root_deviation() const;
  ReferenceFrame reference() const { return sample_clip(*resources_.clip, ref_time_); }
  const EnvConfig& config() const { return config_; }
  const Model& model() const { return *resources_.model; }
  const ReferenceClip& clip() const { return *resources_.clip; }
  const std::vector<MuscleSpec>& muscles() const { return *resources_.muscles; }
  /// Discrete first-order filter coefficient for the exo output.
  double exo_filter_alpha() const { return exo_alpha_; }
  /// Vertical offset applied at the last reset, m.
  double reset_offset() const { return reset_offset_; }

  Eigen::VectorXd observation() const;

 private:
  void init_muscles();
  RewardBreakdown compute_reward(std::span<const double> decoded) const;

  EnvResources resources_;
  EnvConfig config_;
  ObservationLayout layout_;
  std::vector<double> caps_;
  JointVector exo_max_ = JointVector::Zero();
  double exo_alpha_ = 0.0;

  ModelState state_;
  std::vector<MuscleState> muscle_;
  std::vector<MetabolicRates> rates_;
  std::vector<double> applied_;
  std::vector<double> previous_command_;
  JointVector exo_pre_ = JointVector::Zero();
  JointVector exo_out_ = JointVector::Zero();
  JointVector mean_tau_ = JointVector::Zero();
  double mean_power_ = 0.0;
  double start_time_ = 0.0;
  double ref_time_ = 0.0;
  double reset_offset_ = 0.0;
  int steps_ = 0;
  bool done_ = true;
};

}  // namespace gaitlab
