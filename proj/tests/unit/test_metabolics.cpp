#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "gaitlab/errors.hpp"
#include "gaitlab/metabolics.hpp"
#include "support/umberger_oracle.hpp"

using namespace gaitlab;
using gaitlab::oracle::umberger;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(1e-300, std::max(std::abs(a), std::abs(b))); }

void expect_term_close(double got, double want) {
  if (want == 0.0)
    EXPECT_EQ(got, 0.0);
  else
    EXPECT_LE(rel(got, want), 1e-9) << got << " vs " << want;
}

MuscleSpec spec_with_ft(double ft) {
  MuscleSpec m;
  m.name = "probe";
  m.max_isometric_force = 1500.0;
  m.optimal_fiber_length = 0.08;
  m.tendon_slack_length = 0.25;
  m.fast_twitch_ratio = ft;
  m.moment_arms = {{"ankle_l", {-0.05}}};
  return m;
}

}  // namespace

TEST(Metabolics, MassFromSpecificTensionAndDensity) {
  const auto m = spec_with_ft(0.5);
  EXPECT_NEAR(m.mass(), 1500.0 * 0.08 * 1059.7 / 0.25e6, 1e-15);
}

TEST(Metabolics, OracleOnReferenceState) {
  const auto spec = spec_with_ft(0.5);
  MuscleState s;
  s.excitation = 0.8;
  s.activation = 0.8;
  s.fiber_length = 1.0;
  s.fiber_velocity = -0.3;
  s.active_fiber_force = 0.8 * curves::force_velocity(-0.3) * spec.max_isometric_force;
  const auto r = muscle_energy_rate(s, spec);
  const auto o = umberger(0.8, 0.8, 1.0, -3.0, 50.0, 1.0, s.active_fiber_force, 0.08, spec.mass());
  expect_term_close(r.activation_maintenance, o.am);
  expect_term_close(r.shortening_lengthening, o.sl);
  expect_term_close(r.mechanical_work, o.w);
  expect_term_close(r.total, o.total);
}

TEST(Metabolics, OracleOnRandomStates) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto muscles = default_muscles();
  for (int i = 0; i < 100; ++i) {
    auto spec = muscles[i % muscles.size()];
    if (i % 3 == 0) spec.fast_twitch_ratio = u(rng);
    MuscleState s;
    s.excitation = u(rng);
    s.activation = u(rng);
    s.fiber_length = 0.5 + u(rng);
    s.fiber_velocity = 2.0 * u(rng) - 1.0;
    s.active_fiber_force = spec.max_isometric_force * s.activation * curves::active_force_length(s.fiber_length) *
                           curves::force_velocity(s.fiber_velocity);
    const auto r = muscle_energy_rate(s, spec);
    const auto o = umberger(s.excitation, s.activation, s.fiber_length, s.fiber_velocity * 10.0,
                            100.0 * spec.fast_twitch_ratio, std::exp(-std::pow(s.fiber_length - 1.0, 2) / 0.45),
                            s.active_fiber_force, spec.optimal_fiber_length,
                            spec.max_isometric_force * spec.optimal_fiber_length * 1059.7 / 0.25e6);
    SCOPED_TRACE(i);
    expect_term_close(r.activation_maintenance, o.am);
    expect_term_close(r.shortening_lengthening, o.sl);
    expect_term_close(r.mechanical_work, o.w);
    expect_term_close(r.total, o.total);
    EXPECT_GE(r.total, 0.0);
    EXPECT_GE(r.activation_maintenance, 0.0);
    EXPECT_DOUBLE_EQ(r.unclamped_total, r.activation_maintenance + r.shortening_lengthening + r.mechanical_work);
  }
}

TEST(Metabolics, InactiveIsometricMuscleIsSilent) {
  const auto spec = spec_with_ft(0.4);
  MuscleState s;
  const auto r = muscle_energy_rate(s, spec);
  EXPECT_EQ(r.shortening_lengthening, 0.0);
  EXPECT_EQ(r.mechanical_work, 0.0);
  EXPECT_EQ(r.total, 0.0);
}

TEST(Metabolics, FullyActiveIsometricIsMaintenanceOnly) {
  const auto spec = spec_with_ft(0.4);
  MuscleState s;
  s.excitation = s.activation = 1.0;
  s.active_fiber_force = spec.max_isometric_force;
  const auto r = muscle_energy_rate(s, spec);
  EXPECT_EQ(r.mechanical_work, 0.0);
  EXPECT_EQ(r.shortening_lengthening, 0.0);
  EXPECT_DOUBLE_EQ(r.total, r.activation_maintenance);
}

TEST(Metabolics, NegativeWorkClampedAtZero) {
  const auto spec = spec_with_ft(0.5);
  MuscleState s;
  s.excitation = 0.05;
  s.activation = 0.05;
  s.fiber_velocity = 0.8;
  s.active_fiber_force = spec.max_isometric_force;
  const auto r = muscle_energy_rate(s, spec);
  EXPECT_LT(r.unclamped_total, 0.0);
  EXPECT_EQ(r.total, 0.0);
}

TEST(Metabolics, MaintenanceNonDecreasingInFastTwitchRatio) {
  MuscleState s;
  s.excitation = 0.6;
  s.activation = 0.4;
  s.fiber_length = 1.1;
  s.fiber_velocity = -0.2;
  double prev = -1.0;
  for (double ft = 0.0; ft <= 1.0; ft += 0.05) {
    const double am = muscle_energy_rate(s, spec_with_ft(ft)).activation_maintenance;
    EXPECT_GE(am, prev);
    prev = am;
  }
}

TEST(GrossCost, BasalOnlyWhenInactive) {
  const std::vector<double> zero(500, 0.0);
  EXPECT_DOUBLE_EQ(gross_metabolic_cost(zero, 75.0), kBasalRate);
}

TEST(GrossCost, ConstantTraceAndLinearity) {
  const std::vector<double> p(321, 150.0);
  EXPECT_NEAR(gross_metabolic_cost(p, 75.0), 150.0 / 75.0 + 1.2, 1e-12);
  std::vector<double> q{10.0, 40.0, 70.0, 20.0};
  const double base = gross_metabolic_cost(q, 60.0) - kBasalRate;
  for (double& v : q) v *= 2.0;
  EXPECT_NEAR(gross_metabolic_cost(q, 60.0) - kBasalRate, 2.0 * base, 1e-12);
}

TEST(GrossCost, RejectsEmptyTrace) {
  EXPECT_THROW(gross_metabolic_cost(std::vector<double>{}, 75.0), DataError);
}

TEST(GrossCost, TotalPowerSumsMuscleWatts) {
  std::vector<MetabolicRates> rates(3);
  rates[0].total = 10.0;
  rates[0].muscle_mass = 0.5;
  rates[1].total = 0.0;
  rates[1].muscle_mass = 2.0;
  rates[2].total = 4.0;
  rates[2].muscle_mass = 1.5;
  EXPECT_DOUBLE_EQ(total_muscle_power(rates), 11.0);
}
