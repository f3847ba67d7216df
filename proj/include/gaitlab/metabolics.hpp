#pragma once

#include <span>

#include "gaitlab/muscle.hpp"

namespace gaitlab {

/// Per-muscle energy rates, W per kg of muscle.
struct MetabolicRates {
  double activation_maintenance = 0.0;  // h_AM
  double shortening_lengthening = 0.0;  // h_SL
  double mechanical_work = 0.0;         // w_CE
  double total = 0.0;                   // clamped at zero
  double unclamped_total = 0.0;
  double muscle_mass = 0.0;             // kg

  /// Total rate in watts.
  double power() const { return total * muscle_mass; }
};

inline constexpr double kAerobicScale = 1.5;
inline constexpr double kBasalRate = 1.2;  // W per kg of body mass
/// Slow-twitch maximal shortening velocity relative to the muscle's maximum.
inline constexpr double kSlowTwitchVelocityRatio = 2.5;
/// Lengthening heat coefficient relative to the slow-twitch shortening one.
inline constexpr double kLengtheningHeatRatio = 0.3;

/// Heat and work rates from activation, excitation and fibre kinematics.
/// The contractile-element force is the active fibre force.
MetabolicRates muscle_energy_rate(const MuscleState& state, const MuscleSpec& spec);

/// Sum of per-muscle powers (W) without any basal contribution.
double total_muscle_power(std::span<const MetabolicRates> rates);

/// Time-average of whole-body muscle power (one entry per sample, W)
/// divided by model mass, plus the basal rate. Throws DataError when empty.
double gross_metabolic_cost(std::span<const double> muscle_power, double model_mass);

}  // namespace gaitlab
