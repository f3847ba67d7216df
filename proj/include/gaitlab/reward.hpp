#pragma once

#include <span>
#include <string>
#include <string_view>

#include "gaitlab/metabolics.hpp"

namespace gaitlab {

enum class RewardPhase { base, finetune };

std::string_view to_string(RewardPhase phase);
RewardPhase reward_phase_from_string(std::string_view s);

/// Exponential gains (negative) and term weights. Penalty weights are stored
/// unsigned and subtracted in the composite.
struct RewardConfig {
  double k_pos = -2.0;
  double k_vel = -0.05;
  double k_root = -500.0;
  double k_ee = -80.0;
  double k_torq = -2.0;
  double w_pos = 0.25;
  double w_vel = 0.1;
  double w_root = 0.15;
  double w_ee = 0.25;
  double w_torq = 0.25;
  double w_eff = 3e-5;
  double w_smt = 1.0;
  double w_exo = 0.0;
  RewardPhase phase = RewardPhase::base;

  static RewardConfig base();
  static RewardConfig finetune();
  /// Named profile: "base" or "finetune".
  static RewardConfig profile(std::string_view name);
  /// Throws ConfigError on positive gains, negative weights, or a base
  /// config carrying an exo weight.
  void validate() const;
};

struct RewardBreakdown {
  double pos = 1.0;
  double vel = 1.0;
  double root = 1.0;
  double ee = 1.0;
  double torq = 1.0;
  double eff = 0.0;  // W
  double smt = 0.0;
  double exo = 0.0;
  double total = 0.0;
};

/// exp(gain * deviation_sum).
double tracking_term(double deviation_sum, double gain);

/// Sum of squared differences of two equally sized vectors.
double squared_deviation(std::span<const double> a, std::span<const double> b);

/// Sum over muscles of total energy rate times muscle mass (W), no basal.
double effort_term(std::span<const MetabolicRates> rates);

/// Mean squared change in excitation between consecutive control steps.
double smoothness_term(std::span<const double> excitation, std::span<const double> previous);

/// Mean of |torque| / tau_max over the assisted joints (left and right for a
/// single-joint device).
double exo_energy_term(std::span<const double> torques, double tau_max);

/// Weighted combination of the eight terms.
double composite(const RewardBreakdown& terms, const RewardConfig& config);

/// Fills `total` from the other fields.
RewardBreakdown finalize(RewardBreakdown terms, const RewardConfig& config);

}  // namespace gaitlab
