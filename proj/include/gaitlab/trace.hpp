#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "gaitlab/env.hpp"

namespace gaitlab {

/// Snapshot taken after one control step.
struct TraceStep {
  double time = 0.0;      // s since reset
  double ref_time = 0.0;  // reference clock, s
  Coords q = Coords::Zero();
  Coords qd = Coords::Zero();
  std::array<Eigen::Vector2d, 2> grf{Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};  // N
  JointVector tau = JointVector::Zero();  // mean net joint moments, N m
  JointVector exo = JointVector::Zero();  // filtered exo torques, N m
  std::vector<double> excitation;         // applied (after the weakness clamp)
  std::vector<double> activation;
  RewardBreakdown reward;
  std::vector<MetabolicRates> rates;
};

struct TraceMeta {
  std::string fingerprint;
  double speed = 0.0;  // m/s
  RewardPhase phase = RewardPhase::base;
  std::string device = "none";
  std::vector<int> assisted;  // JointId of joints with a nonzero torque bound
  WeaknessMask mask;
  double model_mass = 0.0;  // kg, including device mass
  double control_period = 0.04;
  double start_time = 0.0;
  bool terminated = false;
  std::string diagnostic;
};

struct EpisodeTrace {
  TraceMeta meta;
  std::vector<TraceStep> steps;

  int size() const { return static_cast<int>(steps.size()); }
  /// Uniform monotone time grid and equal channel lengths; throws DataError.
  void validate() const;
  /// Muscle power (W, no basal) per step, the input of gross_metabolic_cost.
  std::vector<double> muscle_power() const;
  double sample_rate() const { return 1.0 / meta.control_period; }
};

/// FNV-1a 64-bit hash as 16 hex digits.
std::string fingerprint(std::string_view text);

/// Starts a trace for the episode the environment was just reset into.
EpisodeTrace begin_trace(const GaitEnv& env, std::string config_fingerprint);
/// Appends the state reached by the step that produced `result`.
void record_step(EpisodeTrace& trace, const GaitEnv& env, const StepResult& result);

void save_trace(const EpisodeTrace& trace, const std::string& path);
EpisodeTrace load_trace(const std::string& path);

}  // namespace gaitlab
