#include "gaitlab/metabolics.hpp"

#include <algorithm>
#include <cmath>

#include "gaitlab/errors.hpp"

namespace gaitlab {

MetabolicRates muscle_energy_rate(const MuscleState& state, const MuscleSpec& spec) {
  MetabolicRates r;
  r.muscle_mass = spec.mass();
  const double e = state.excitation;
  const double a = state.activation;
  const double drive = e > a ? e : 0.5 * (e + a);
  const double ft = spec.fast_twitch_ratio;
  const double l = state.fiber_length;
  const double f_iso = curves::active_force_length(l);

  // Fibre velocity in optimal lengths per second, negative when shortening.
  const double v = state.fiber_velocity * spec.max_contraction_velocity;
  const double vmax_ft = spec.max_contraction_velocity;
  const double vmax_st = vmax_ft / kSlowTwitchVelocityRatio;
  const double alpha_st = 100.0 / vmax_st;
  const double alpha_ft = 153.0 / vmax_ft;
  const double alpha_l = kLengtheningHeatRatio * alpha_st;

  double h_am = (1.28 * 100.0 * ft + 25.0) * std::pow(drive, 0.6) * kAerobicScale;
  if (l > 1.0) h_am *= 0.4 + 0.6 * f_iso;

  double h_sl = 0.0;
  if (v <= 0.0)
    h_sl = (-alpha_st * v * (1.0 - ft) - alpha_ft * v * ft) * drive * drive * kAerobicScale;
  else
    h_sl = alpha_l * v * drive * kAerobicScale;
  if (l > 1.0) h_sl *= f_iso;

  const double v_ce = v * spec.optimal_fiber_length;  // m/s
  const double w_ce = -state.active_fiber_force * v_ce / r.muscle_mass;

  r.activation_maintenance = h_am;
  r.shortening_lengthening = h_sl;
  r.mechanical_work = w_ce;
  r.unclamped_total = h_am + h_sl + w_ce;
  r.total = std::max(0.0, r.unclamped_total);
  return r;
}

double total_muscle_power(std::span<const MetabolicRates> rates) {
  double p = 0.0;
  for (const auto& r : rates) p += r.power();
  return p;
}

double gross_metabolic_cost(std::span<const double> muscle_power, double model_mass) {
  if (muscle_power.empty()) throw DataError("gross metabolic cost of an empty trace");
  if (!(model_mass > 0.0)) throw DataError("model mass must be positive");
  double sum = 0.0;
  for (double p : muscle_power) sum += p;
  return sum / static_cast<double>(muscle_power.size()) / model_mass + kBasalRate;
}

}  // namespace gaitlab
