#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gaitlab/errors.hpp"
#include "gaitlab/run_config.hpp"
#include "gaitlab/trainer.hpp"

namespace gaitlab {
namespace {

const std::string kConfigDir = GAITLAB_CONFIG_DIR;

RunConfig desk() { return load_run_config(kConfigDir + "/desk.json"); }

const EnvResources& base_resources() {
  static const EnvResources r = make_resources(desk());
  return r;
}

TrainerConfig tiny() {
  TrainerConfig c = TrainerConfig::preset("desk", TrainPhase::base);
  c.actor_hidden = c.critic_hidden = {16};
  c.batch_size = 32;
  c.total_steps = 120;
  c.num_envs = 1;
  c.learning_starts = 40;
  c.log_interval = 40;
  c.return_window = 3;
  c.replay_capacity = 1000;
  c.seed = 5;
  return c;
}

std::string log_text(const TrainResult& r) {
  std::string s;
  for (const auto& row : r.log) s += format_log_row(row) + "\n";
  return s;
}

TEST(TrainerConfig, PresetValues) {
  const TrainerConfig b = TrainerConfig::preset("base", TrainPhase::base);
  EXPECT_EQ(b.actor_hidden, (std::vector<int>{512, 512, 256}));
  EXPECT_EQ(b.critic_hidden, (std::vector<int>{512, 512, 256}));
  EXPECT_EQ(b.batch_size, 256);
  EXPECT_EQ(b.learning_rate, 3e-4);
  EXPECT_EQ(b.tau, 0.02);
  EXPECT_EQ(b.entropy, EntropyMode::automatic);
  EXPECT_EQ(b.gamma, 0.95);
  EXPECT_EQ(b.train_frequency, 4);
  EXPECT_EQ(b.gradient_steps, 4);
  EXPECT_EQ(b.target_update_interval, 1);
  EXPECT_EQ(b.total_steps, 600'000'000);
  EXPECT_EQ(b.num_envs, 96);
  EXPECT_EQ(TrainerConfig::preset("finetune", TrainPhase::exo_finetune).total_steps, 150'000'000);

  const TrainerConfig d = TrainerConfig::preset("desk", TrainPhase::base);
  EXPECT_EQ(d.actor_hidden, (std::vector<int>{64, 64}));
  EXPECT_EQ(d.num_envs, 4);
  EXPECT_EQ(d.total_steps, 200'000);
  EXPECT_EQ(TrainerConfig::preset("desk", TrainPhase::exo_finetune).total_steps, 50'000);
  EXPECT_EQ(TrainerConfig::preset("desk", TrainPhase::weakness_finetune).total_steps, 50'000);
  EXPECT_THROW(TrainerConfig::preset("huge", TrainPhase::base), ConfigError);
}

TEST(TrainerConfig, Invariants) {
  auto bad = [](auto edit) {
    TrainerConfig c;
    edit(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  TrainerConfig{}.validate();
  bad([](TrainerConfig& c) { c.gamma = 1.0; });
  bad([](TrainerConfig& c) { c.gamma = 0.0; });
  bad([](TrainerConfig& c) { c.tau = 0.0; });
  bad([](TrainerConfig& c) { c.tau = 1.5; });
  bad([](TrainerConfig& c) { c.batch_size = 0; });
  bad([](TrainerConfig& c) { c.replay_capacity = 100; });  // below the batch size
  bad([](TrainerConfig& c) { c.num_envs = 0; });
  bad([](TrainerConfig& c) { c.gradient_steps = 0; });
  bad([](TrainerConfig& c) { c.optimizer = "lbfgs"; });
  TrainerConfig ok;
  ok.tau = 1.0;
  ok.validate();
}

TEST(TrainerConfig, LinearDecayReachesTheFloor) {
  TrainerConfig c;
  c.total_steps = 1000;
  EXPECT_DOUBLE_EQ(c.learning_rate_at(0), 3e-4);
  EXPECT_DOUBLE_EQ(c.learning_rate_at(500), 3e-4 * 0.55);
  EXPECT_DOUBLE_EQ(c.learning_rate_at(1000), 3e-5);
  EXPECT_DOUBLE_EQ(c.learning_rate_at(5000), 3e-5);
}

TEST(TrainerConfig, JsonRoundTrip) {
  TrainerConfig c = tiny();
  c.entropy = EntropyMode::fixed;
  c.seed = 0xfedcba9876543210ull;
  const TrainerConfig back = trainer_config_from_json(trainer_config_to_json(c), TrainerConfig{});
  EXPECT_EQ(trainer_config_to_json(back), trainer_config_to_json(c));
  EXPECT_THROW(trainer_config_from_json(Json{{"batchsize", 3}}, TrainerConfig{}), ConfigError);
}

TEST(RunConfig, DeskFileLoads) {
  const RunConfig rc = desk();
  EXPECT_EQ(rc.phase, TrainPhase::base);
  EXPECT_EQ(rc.trainer.total_steps, 200'000);
  EXPECT_EQ(rc.env.reward.phase, RewardPhase::base);
  EXPECT_TRUE(rc.device_path.ends_with("devices/none.json"));
  GaitEnv env(base_resources(), rc.env);
  EXPECT_EQ(env.action_dim(), 24);
  EXPECT_EQ(env.observation_dim(), 106);
  const RunConfig other = load_run_config(kConfigDir + "/desk.json", "base");
  EXPECT_EQ(other.trainer.total_steps, 600'000'000);
  // Seeds and lengths do not change the config identity.
  EXPECT_EQ(other.fingerprint(), rc.fingerprint());
  EXPECT_THROW(load_run_config(kConfigDir + "/missing.json"), Error);
}

TEST(RunConfig, FinetuneConfigsSelectTheirProfile) {
  const RunConfig hip = load_run_config(kConfigDir + "/exo_hip.json");
  EXPECT_EQ(hip.phase, TrainPhase::exo_finetune);
  EXPECT_EQ(hip.env.reward.phase, RewardPhase::finetune);
  EXPECT_EQ(hip.env.reward.w_exo, 0.2);
  EXPECT_EQ(hip.trainer.total_steps, 50'000);
  const RunConfig weak = load_run_config(kConfigDir + "/weak_plantarflexor.json");
  EXPECT_EQ(weak.phase, TrainPhase::weakness_finetune);
  EXPECT_EQ(weak.env.weakness.at("soleus_l"), 0.05);
  EXPECT_NE(weak.fingerprint(), hip.fingerprint());
}

TEST(Phase, MismatchesAreRefused) {
  const RunConfig rc = desk();
  const EnvResources& res = base_resources();
  EnvConfig fine = rc.env;
  fine.reward = RewardConfig::finetune();
  EXPECT_THROW(check_phase(TrainPhase::exo_finetune, res, fine, true), ConfigError);  // device none
  EXPECT_THROW(check_phase(TrainPhase::exo_finetune, res, fine, false), ConfigError);
  EXPECT_THROW(check_phase(TrainPhase::weakness_finetune, res, fine, true), ConfigError);  // no mask
  EXPECT_THROW(check_phase(TrainPhase::base, res, fine, false), ConfigError);  // reward profile
  EnvConfig weak = rc.env;
  weak.weakness = weakness_preset("plantarflexor-weak-left");
  EXPECT_THROW(check_phase(TrainPhase::base, res, weak, false), ConfigError);
  weak.reward = RewardConfig::finetune();
  check_phase(TrainPhase::weakness_finetune, res, weak, true);
  check_phase(TrainPhase::base, res, rc.env, false);

  RunConfig hip = load_run_config(kConfigDir + "/exo_hip.json");
  const EnvResources hip_res = make_resources(hip);
  check_phase(TrainPhase::exo_finetune, hip_res, hip.env, true);
  EXPECT_THROW(check_phase(TrainPhase::base, hip_res, rc.env, false), ConfigError);
  EXPECT_THROW(train(hip_res, hip.env, tiny(), TrainPhase::exo_finetune, nullptr, "x"), ConfigError);
}

TEST(Train, SeededSingleCollectorRunsAreIdentical) {
  const RunConfig rc = desk();
  const TrainResult a = train(base_resources(), rc.env, tiny(), TrainPhase::base, nullptr, "fp");
  const TrainResult b = train(base_resources(), rc.env, tiny(), TrainPhase::base, nullptr, "fp");
  ASSERT_FALSE(a.log.empty());
  EXPECT_EQ(log_text(a), log_text(b));
  EXPECT_EQ(a.checkpoint.serialize(), b.checkpoint.serialize());
  EXPECT_EQ(a.log.front().step, 1);
  EXPECT_EQ(a.log.back().step, 120);
  // 80 steps after the warm-up, one update per step.
  EXPECT_EQ(a.log.back().updates, 80);
  EXPECT_EQ(a.checkpoint.total_steps, 120);

  TrainerConfig other = tiny();
  other.seed = 6;
  const TrainResult c = train(base_resources(), rc.env, other, TrainPhase::base, nullptr, "fp");
  EXPECT_NE(log_text(a), log_text(c));
}

TEST(Train, ThreadedCollectionMatchesInline) {
  const RunConfig rc = desk();
  TrainerConfig c = tiny();
  c.num_envs = 3;
  c.total_steps = 90;
  c.threaded = true;
  const TrainResult a = train(base_resources(), rc.env, c, TrainPhase::base, nullptr, "fp");
  c.threaded = false;
  const TrainResult b = train(base_resources(), rc.env, c, TrainPhase::base, nullptr, "fp");
  EXPECT_EQ(log_text(a), log_text(b));
  PolicyCheckpoint inline_ck = b.checkpoint;
  inline_ck.trainer.threaded = true;  // the only recorded difference
  EXPECT_EQ(a.checkpoint.serialize(), inline_ck.serialize());
}

TEST(Train, PerCollectorFrequencyCountsRounds) {
  const RunConfig rc = desk();
  TrainerConfig c = tiny();
  c.num_envs = 2;
  c.total_steps = 80;
  c.learning_starts = 0;
  c.aggregate_frequency = false;  // 4 rounds of 2 envs per 4 updates
  const TrainResult r = train(base_resources(), rc.env, c, TrainPhase::base, nullptr, "fp");
  EXPECT_EQ(r.log.back().updates, 40);
  c.aggregate_frequency = true;  // every 4 aggregate steps
  const TrainResult s = train(base_resources(), rc.env, c, TrainPhase::base, nullptr, "fp");
  EXPECT_EQ(s.log.back().updates, 80);
}

TEST(Train, ZeroLearningRateFreezesNetworks) {
  const RunConfig rc = desk();
  TrainerConfig c = tiny();
  c.learning_rate = 0.0;
  const TrainResult first = train(base_resources(), rc.env, tiny(), TrainPhase::base, nullptr, "fp");
  const TrainResult r = train(base_resources(), rc.env, c, TrainPhase::base, &first.checkpoint, "fp");
  Sac& before = *first.checkpoint.agent;
  Sac& after = *r.checkpoint.agent;
  EXPECT_GT(after.updates(), before.updates());
  EXPECT_EQ(after.actor().params(), before.actor().params());
  EXPECT_EQ(after.q1().params(), before.q1().params());
  EXPECT_EQ(after.q2().params(), before.q2().params());
  EXPECT_EQ(after.log_alpha(), before.log_alpha());
  // Targets lag the critics, so they keep moving toward them.
  EXPECT_EQ(r.checkpoint.total_steps, 240);
}

TEST(Train, FineTuneLogsExoTermFromTheFirstRow) {
  const RunConfig rc = desk();
  const TrainResult base = train(base_resources(), rc.env, tiny(), TrainPhase::base, nullptr, "fp");
  const RunConfig hip = load_run_config(kConfigDir + "/exo_hip.json");
  const EnvResources res = make_resources(hip);
  TrainerConfig c = tiny();
  c.total_steps = 40;
  const TrainResult r = train(res, hip.env, c, TrainPhase::exo_finetune, &base.checkpoint, "hip");
  ASSERT_FALSE(r.log.empty());
  const TrainLogRow& first = r.log.front();
  EXPECT_EQ(first.step, 1);
  EXPECT_GT(first.terms.exo, 0.0);
  EXPECT_TRUE(std::isfinite(first.exo_abs_mean));
  EXPECT_GT(r.exo_abs_mean, 0.0);
  EXPECT_LE(r.exo_abs_max, r.exo_limit);
  EXPECT_DOUBLE_EQ(r.exo_limit, res.model->total_mass());  // 1 N m/kg
  EXPECT_EQ(r.checkpoint.phase, TrainPhase::exo_finetune);
  EXPECT_EQ(r.checkpoint.total_steps, 160);
  EXPECT_NE(train_log_header().find("r_exo"), std::string::npos);
}

TEST(Checkpoint, SaveLoadSaveIsBitIdentical) {
  const RunConfig rc = desk();
  const TrainResult r = train(base_resources(), rc.env, tiny(), TrainPhase::base, nullptr, "fp");
  const std::string bytes = r.checkpoint.serialize();
  const PolicyCheckpoint back = PolicyCheckpoint::deserialize(bytes);
  EXPECT_EQ(back.serialize(), bytes);
  EXPECT_EQ(back.total_steps, 120);
  EXPECT_EQ(back.config_fingerprint, "fp");
  EXPECT_EQ(back.agent->alpha(), r.checkpoint.agent->alpha());

  const auto path = (std::filesystem::temp_directory_path() / "gaitlab_test.glck").string();
  r.checkpoint.save(path);
  EXPECT_EQ(PolicyCheckpoint::load(path).serialize(), bytes);
  std::filesystem::remove(path);

  EXPECT_THROW(PolicyCheckpoint::deserialize("XXXX" + bytes.substr(4)), DataError);
  EXPECT_THROW(PolicyCheckpoint::deserialize(bytes.substr(0, bytes.size() - 9)), DataError);
  EXPECT_THROW(PolicyCheckpoint::deserialize(bytes + "z"), DataError);
  EXPECT_THROW(PolicyCheckpoint::load("/nonexistent/ck.glck"), DataError);
}

struct EvalFixture : ::testing::Test {
  static const PolicyCheckpoint& checkpoint() {
    static const PolicyCheckpoint ck =
        train(base_resources(), desk().env, tiny(), TrainPhase::base, nullptr, "fp").checkpoint;
    return ck;
  }
};

TEST_F(EvalFixture, ZeroEpisodesIsEmpty) {
  const EvalResult r = evaluate(checkpoint(), base_resources(), desk().env, 0, true, 1, "fp");
  EXPECT_TRUE(r.traces.empty());
  EXPECT_EQ(r.summary.episodes, 0);
  EXPECT_TRUE(r.summary.returns.empty());
}

TEST_F(EvalFixture, DeterministicRunsAreIdentical) {
  const auto dir = std::filesystem::temp_directory_path();
  const EvalResult a = evaluate(checkpoint(), base_resources(), desk().env, 3, true, 9, "fp");
  const EvalResult b = evaluate(checkpoint(), base_resources(), desk().env, 3, true, 9, "fp");
  ASSERT_EQ(a.traces.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    save_trace(a.traces[i], (dir / "gl_a.json").string());
    save_trace(b.traces[i], (dir / "gl_b.json").string());
    std::ifstream fa(dir / "gl_a.json"), fb(dir / "gl_b.json");
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    EXPECT_EQ(sa.str(), sb.str());
    EXPECT_EQ(a.traces[i].meta.fingerprint, "fp");
  }
  std::filesystem::remove(dir / "gl_a.json");
  std::filesystem::remove(dir / "gl_b.json");
}

TEST_F(EvalFixture, SummaryMeanIsTheMeanOfEpisodeSums) {
  const EvalResult r = evaluate(checkpoint(), base_resources(), desk().env, 4, false, 2, "fp");
  double total = 0.0;
  for (const auto& t : r.traces) {
    double sum = 0.0;
    for (const auto& s : t.steps) sum += s.reward.total;
    total += sum;
  }
  EXPECT_NEAR(r.summary.mean_return, total / 4, 1e-12);
  EXPECT_EQ(r.summary.returns.size(), 4u);
}

TEST_F(EvalFixture, FingerprintMismatchIsRefused) {
  PolicyCheckpoint ck = checkpoint();
  ck.env_fingerprint = "0000000000000000";
  EXPECT_THROW(evaluate(ck, base_resources(), desk().env, 1, true, 1, "fp"), DataError);
  EXPECT_THROW(train(base_resources(), desk().env, tiny(), TrainPhase::base, &ck, "fp"), DataError);
}

}  // namespace
}  // namespace gaitlab
