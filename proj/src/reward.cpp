#include "gaitlab/reward.hpp"

#include <cmath>

#include "gaitlab/errors.hpp"

namespace gaitlab {

std::string_view to_string(RewardPhase phase) { return phase == RewardPhase::base ? "base" : "finetune"; }

RewardPhase reward_phase_from_string(std::string_view s) {
  if (s == "base") return RewardPhase::base;
  if (s == "finetune" || s == "fine-tune") return RewardPhase::finetune;
  throw ConfigError("unknown reward phase '" + std::string(s) + "'");
}

RewardConfig RewardConfig::base() { return RewardConfig{}; }

RewardConfig RewardConfig::finetune() {
  RewardConfig c;
  c.k_pos = -0.4;
  c.k_vel = -0.01;
  c.k_root = -500.0;
  c.k_ee = -16.0;
  c.k_torq = -0.4;
  c.w_eff = 3e-4;
  c.w_exo = 0.2;
  c.phase = RewardPhase::finetune;
  return c;
}

RewardConfig RewardConfig::profile(std::string_view name) {
  return reward_phase_from_string(name) == RewardPhase::base ? base() : finetune();
}

void RewardConfig::validate() const {
  for (double k : {k_pos, k_vel, k_root, k_ee, k_torq})
    if (!(k < 0.0)) throw ConfigError("reward gains must be negative");
  for (double w : {w_pos, w_vel, w_root, w_ee, w_torq, w_eff, w_smt, w_exo})
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("reward weights must be finite and non-negative");
  if (phase == RewardPhase::base && w_exo != 0.0) throw ConfigError("base reward phase must have zero exo weight");
}

double tracking_term(double deviation_sum, double gain) { return std::exp(gain * deviation_sum); }

double squared_deviation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("squared_deviation: size mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

double effort_term(std::span<const MetabolicRates> rates) { return total_muscle_power(rates); }

double smoothness_term(std::span<const double> excitation, std::span<const double> previous) {
  if (excitation.size() != previous.size()) throw ConfigError("smoothness_term: size mismatch");
  if (excitation.empty()) return 0.0;
  return squared_deviation(excitation, previous) / static_cast<double>(excitation.size());
}

double exo_energy_term(std::span<const double> torques, double tau_max) {
  if (!(tau_max > 0.0)) throw ConfigError("exo_energy_term: tau_max must be positive");
  if (torques.empty()) return 0.0;
  double s = 0.0;
  for (double t : torques) s += std::abs(t) / tau_max;
  return s / static_cast<double>(torques.size());
}

double composite(const RewardBreakdown& r, const RewardConfig& c) {
  return c.w_pos * r.pos + c.w_vel * r.vel + c.w_root * r.root + c.w_ee * r.ee + c.w_torq * r.torq -
         c.w_eff * r.eff - c.w_smt * r.smt - c.w_exo * r.exo;
}

RewardBreakdown finalize(RewardBreakdown terms, const RewardConfig& config) {
  terms.total = composite(terms, config);
  return terms;
}

}  // namespace gaitlab
