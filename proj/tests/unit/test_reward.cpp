#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "gaitlab/errors.hpp"
#include "gaitlab/reward.hpp"

using namespace gaitlab;

TEST(Tracking, ZeroDeviationIsOne) {
  for (double k : {-2.0, -0.05, -500.0, -80.0}) EXPECT_EQ(tracking_term(0.0, k), 1.0);
}

TEST(Tracking, HandEvaluatedExamples) {
  const auto base = RewardConfig::base();
  const std::vector<double> ref{0.1, 0.0, 0.0}, sim{0.0, 0.0, 0.0};
  EXPECT_NEAR(tracking_term(squared_deviation(ref, sim), base.k_pos), 0.980198673306755, 1e-12);
  EXPECT_NEAR(tracking_term(0.1 * 0.1, base.k_root), 0.006737946999085467, 1e-15);
}

TEST(Tracking, StrictlyDecreasingInDeviation) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 0.05);
  const auto c = RewardConfig::base();
  for (double k : {c.k_pos, c.k_vel, c.k_root, c.k_ee, c.k_torq}) {
    for (int i = 0; i < 1000; ++i) {
      double a = u(rng), b = u(rng);
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      EXPECT_GT(tracking_term(a, k), tracking_term(b, k)) << k << " " << a << " " << b;
    }
  }
}

TEST(Tracking, FinetuneGainsAreMoreLenient) {
  const auto b = RewardConfig::base(), f = RewardConfig::finetune();
  for (double d : {0.01, 0.3, 2.0}) {
    EXPECT_GT(tracking_term(d, f.k_pos), tracking_term(d, b.k_pos));
    EXPECT_GT(tracking_term(d, f.k_vel), tracking_term(d, b.k_vel));
    EXPECT_GT(tracking_term(d, f.k_ee), tracking_term(d, b.k_ee));
    EXPECT_GT(tracking_term(d, f.k_torq), tracking_term(d, b.k_torq));
  }
}

TEST(Effort, SumsMuscleWatts) {
  std::vector<MetabolicRates> rates(18);
  for (auto& r : rates) r.muscle_mass = 0.5;
  EXPECT_EQ(effort_term(rates), 0.0);
  rates[4].total = 100.0;  // 50 W for a 0.5 kg muscle
  EXPECT_DOUBLE_EQ(effort_term(rates), 50.0);
}

TEST(Effort, TraceAverageMatchesGrossCostMinusBasal) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 300.0);
  std::vector<double> trace;
  for (int t = 0; t < 250; ++t) {
    std::vector<MetabolicRates> rates(18);
    for (auto& r : rates) {
      r.total = u(rng);
      r.muscle_mass = 0.3 + u(rng) / 300.0;
    }
    trace.push_back(effort_term(rates));
  }
  double mean = 0.0;
  for (double p : trace) mean += p;
  mean /= trace.size();
  const double mass = 75.0;
  EXPECT_NEAR(mean, (gross_metabolic_cost(trace, mass) - kBasalRate) * mass, 1e-9 * mean);
}

TEST(Smoothness, Examples) {
  std::vector<double> prev(18, 0.0), now(18, 0.0);
  EXPECT_EQ(smoothness_term(now, prev), 0.0);
  now[3] = 0.5;
  EXPECT_NEAR(smoothness_term(now, prev), 0.25 / 18.0, 1e-15);
  std::fill(now.begin(), now.end(), 1.0);
  EXPECT_DOUBLE_EQ(smoothness_term(now, prev), 1.0);
}

TEST(ExoEnergy, Examples) {
  const double tmax = 75.0;
  EXPECT_EQ(exo_energy_term(std::vector<double>{0.0, 0.0}, tmax), 0.0);
  EXPECT_DOUBLE_EQ(exo_energy_term(std::vector<double>{tmax, -tmax}, tmax), 1.0);
  EXPECT_DOUBLE_EQ(exo_energy_term(std::vector<double>{tmax / 2.0, 0.0}, tmax), 0.25);
  EXPECT_THROW(exo_energy_term(std::vector<double>{1.0}, 0.0), ConfigError);
}

TEST(Composite, PerfectTrackingBaseIsOne) {
  RewardBreakdown r;
  EXPECT_NEAR(composite(r, RewardConfig::base()), 1.0, 1e-12);
}

TEST(Composite, EffortPenalty) {
  RewardBreakdown r;
  r.eff = 100.0;
  EXPECT_NEAR(composite(r, RewardConfig::base()), 0.997, 1e-12);
}

TEST(Composite, SaturatedExoInFinetune) {
  RewardBreakdown r;
  r.exo = 1.0;
  EXPECT_NEAR(composite(r, RewardConfig::finetune()), 0.8, 1e-12);
}

TEST(Composite, EqualsWeightedSumOfStoredTerms) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto c = RewardConfig::finetune();
  for (int i = 0; i < 200; ++i) {
    RewardBreakdown r{u(rng), u(rng), u(rng), u(rng), u(rng), 300.0 * u(rng), u(rng), u(rng), 0.0};
    r = finalize(r, c);
    const double expected = 0.25 * r.pos + 0.1 * r.vel + 0.15 * r.root + 0.25 * r.ee + 0.25 * r.torq -
                            3e-4 * r.eff - 1.0 * r.smt - 0.2 * r.exo;
    EXPECT_NEAR(r.total, expected, 1e-12);
    EXPECT_LE(composite(RewardBreakdown{r.pos, r.vel, r.root, r.ee, r.torq, 0, 0, 0, 0}, RewardConfig::base()),
              1.0 + 1e-15);
  }
}

TEST(Config, DefaultGainsAndWeights) {
  const auto b = RewardConfig::base();
  EXPECT_EQ(b.k_pos, -2.0);
  EXPECT_EQ(b.k_vel, -0.05);
  EXPECT_EQ(b.k_root, -500.0);
  EXPECT_EQ(b.k_ee, -80.0);
  EXPECT_EQ(b.k_torq, -2.0);
  EXPECT_EQ(b.w_eff, 3e-5);
  EXPECT_EQ(b.w_smt, 1.0);
  EXPECT_EQ(b.w_exo, 0.0);
  EXPECT_NEAR(b.w_pos + b.w_vel + b.w_root + b.w_ee + b.w_torq, 1.0, 1e-15);
  const auto f = RewardConfig::finetune();
  EXPECT_EQ(f.k_pos, -0.4);
  EXPECT_EQ(f.k_vel, -0.01);
  EXPECT_EQ(f.k_root, -500.0);
  EXPECT_EQ(f.k_ee, -16.0);
  EXPECT_EQ(f.k_torq, -0.4);
  EXPECT_EQ(f.w_eff, 3e-4);
  EXPECT_EQ(f.w_exo, 0.2);
  EXPECT_NO_THROW(b.validate());
  EXPECT_NO_THROW(f.validate());
}

TEST(Config, ValidationAndProfiles) {
  auto c = RewardConfig::base();
  c.w_exo = 0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RewardConfig::base();
  c.k_ee = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(RewardConfig::profile("finetune").phase, RewardPhase::finetune);
  EXPECT_THROW(RewardConfig::profile("warmup"), ConfigError);
}

TEST(Purity, IdenticalInputsBitIdentical) {
  RewardBreakdown r{0.3, 0.4, 0.5, 0.6, 0.7, 123.4, 0.01, 0.2, 0.0};
  const double a = composite(r, RewardConfig::finetune());
  const double b = composite(r, RewardConfig::finetune());
  EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
}
