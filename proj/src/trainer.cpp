#include "gaitlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstring>
#include <deque>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "gaitlab/errors.hpp"
#include "gaitlab/run_config.hpp"

namespace gaitlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr char kMagic[4] = {'G', 'L', 'C', 'K'};

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
  return std::mt19937_64(seq);
}

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream s;
  s << rng;
  return s.str();
}

Eigen::MatrixXd random_actions(int dim, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd a(dim, n);
  for (int c = 0; c < n; ++c)
    for (int i = 0; i < dim; ++i) a(i, c) = u(rng);
  return a;
}

double mean_tail(const std::vector<double>& v, int window) {
  if (v.empty()) return kNaN;
  const size_t n = std::min<size_t>(v.size(), window);
  double s = 0.0;
  for (size_t i = v.size() - n; i < v.size(); ++i) s += v[i];
  return s / n;
}

struct ExoStats {
  double mean = 0.0, max = 0.0;
};

ExoStats exo_stats(const GaitEnv& env) {
  ExoStats st;
  int n = 0;
  for (int j = 0; j < kNumJoints; ++j) {
    if (env.exo_limit()[j] <= 0.0) continue;
    const double t = std::abs(env.exo_torque()[j]);
    st.mean += t;
    st.max = std::max(st.max, t);
    ++n;
  }
  if (n) st.mean /= n;
  return st;
}

void add_terms(RewardBreakdown& acc, const RewardBreakdown& r) {
  acc.pos += r.pos;
  acc.vel += r.vel;
  acc.root += r.root;
  acc.ee += r.ee;
  acc.torq += r.torq;
  acc.eff += r.eff;
  acc.smt += r.smt;
  acc.exo += r.exo;
  acc.total += r.total;
}

RewardBreakdown zero_terms() {
  RewardBreakdown z;
  z.pos = z.vel = z.root = z.ee = z.torq = 0.0;
  return z;
}

RewardBreakdown scale_terms(RewardBreakdown r, double k) {
  for (double* f : {&r.pos, &r.vel, &r.root, &r.ee, &r.torq, &r.eff, &r.smt, &r.exo, &r.total}) *f *= k;
  return r;
}

// One environment plus its episode bookkeeping.
struct Collector {
  struct Output {
    Transition transition;
    RewardBreakdown terms;
    ExoStats exo;
    bool episode_end = false;
    double episode_return = 0.0;
    int episode_length = 0;
  };

  Collector(const EnvResources& res, const EnvConfig& cfg, std::mt19937_64 r) : env(res, cfg), rng(std::move(r)) {
    obs = env.reset(rng());
  }

  Output step(const Eigen::VectorXd& action) {
    Output out;
    StepResult res = env.step(std::span<const double>(action.data(), action.size()));
    out.transition.obs = obs;
    out.transition.action = action.cwiseMax(-1.0).cwiseMin(1.0);
    out.transition.reward = res.reward.total;
    out.transition.next_obs = res.observation;
    out.transition.terminated = res.terminated;
    out.transition.truncated = res.truncated;
    out.terms = res.reward;
    out.exo = exo_stats(env);
    ret += res.reward.total;
    ++len;
    if (res.terminated || res.truncated) {
      out.episode_end = true;
      out.episode_return = ret;
      out.episode_length = len;
      ret = 0.0;
      len = 0;
      obs = env.reset(rng());
    } else {
      obs = std::move(res.observation);
    }
    return out;
  }

  GaitEnv env;
  std::mt19937_64 rng;
  Eigen::VectorXd obs;
  double ret = 0.0;
  int len = 0;
};

// Collectors step in lockstep rounds. Each owns its environment; outputs go
// through a queue and are handed to the learner in collector order.
class CollectorPool {
 public:
  CollectorPool(const EnvResources& res, const EnvConfig& cfg, int n, std::uint64_t seed, bool threaded) {
    for (int i = 0; i < n; ++i) collectors_.push_back(std::make_unique<Collector>(res, cfg, stream(seed, 100 + i)));
    if (threaded && n > 1)
      for (int i = 0; i < n; ++i) threads_.emplace_back([this, i] { work(i); });
  }

  ~CollectorPool() {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
    }
    wake_.notify_all();
    for (auto& t : threads_) t.join();
  }

  int size() const { return static_cast<int>(collectors_.size()); }

  Eigen::MatrixXd observations() const {
    Eigen::MatrixXd o(collectors_[0]->obs.size(), size());
    for (int i = 0; i < size(); ++i) o.col(i) = collectors_[i]->obs;
    return o;
  }

  std::vector<Collector::Output> step(const Eigen::MatrixXd& actions) {
    std::vector<Collector::Output> out(size());
    if (threads_.empty()) {
      for (int i = 0; i < size(); ++i) out[i] = collectors_[i]->step(actions.col(i));
      return out;
    }
    {
      std::lock_guard lock(mutex_);
      actions_ = actions;
      ++round_;
    }
    wake_.notify_all();
    std::unique_lock lock(mutex_);
    done_.wait(lock, [&] { return static_cast<int>(queue_.size()) == size(); });
    if (error_) std::rethrow_exception(std::exchange(error_, nullptr));
    for (auto& [id, o] : queue_) out[id] = std::move(o);
    queue_.clear();
    return out;
  }

 private:
  void work(int id) {
    long seen = 0;
    for (;;) {
      Eigen::VectorXd action;
      {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [&] { return stop_ || round_ > seen; });
        if (stop_) return;
        seen = round_;
        action = actions_.col(id);
      }
      Collector::Output o;
      std::exception_ptr err;
      try {
        o = collectors_[id]->step(action);
      } catch (...) {
        err = std::current_exception();
      }
      {
        std::lock_guard lock(mutex_);
        if (err && !error_) error_ = err;
        queue_.emplace_back(id, std::move(o));
      }
      done_.notify_one();
    }
  }

  std::vector<std::unique_ptr<Collector>> collectors_;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable wake_, done_;
  std::deque<std::pair<int, Collector::Output>> queue_;
  Eigen::MatrixXd actions_;
  std::exception_ptr error_;
  long round_ = 0;
  bool stop_ = false;
};

double random_policy_return(const EnvResources& res, const EnvConfig& cfg, int episodes, std::uint64_t seed) {
  GaitEnv env(res, cfg);
  std::mt19937_64 rng = stream(seed, 2);
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    env.reset(rng());
    for (;;) {
      const Eigen::VectorXd a = random_actions(env.action_dim(), 1, rng).col(0);
      const StepResult r = env.step(std::span<const double>(a.data(), a.size()));
      total += r.reward.total;
      if (r.terminated || r.truncated) break;
    }
  }
  return total / episodes;
}

std::shared_ptr<Sac> clone_agent(const Sac& agent) {
  auto copy = std::make_shared<Sac>(agent.obs_dim(), agent.action_dim(), agent.config(), 0);
  std::stringstream s;
  agent.save(s);
  copy->load(s);
  return copy;
}

bool has_weakness(const EnvConfig& env) {
  return std::any_of(env.weakness.begin(), env.weakness.end(), [](const auto& kv) { return kv.second < 1.0; });
}

}  // namespace

std::string_view to_string(TrainPhase phase) {
  switch (phase) {
    case TrainPhase::base: return "base";
    case TrainPhase::exo_finetune: return "exo-finetune";
    case TrainPhase::weakness_finetune: return "weakness-finetune";
  }
  return "base";
}

TrainPhase train_phase_from_string(std::string_view s) {
  if (s == "base") return TrainPhase::base;
  if (s == "exo-finetune") return TrainPhase::exo_finetune;
  if (s == "weakness-finetune") return TrainPhase::weakness_finetune;
  throw ConfigError("unknown training phase '" + std::string(s) + "'");
}

TrainerConfig TrainerConfig::preset(std::string_view name, TrainPhase phase) {
  TrainerConfig c;
  if (name == "desk") {
    c.total_steps = phase == TrainPhase::base ? 200'000 : 50'000;
    return c;
  }
  if (name == "base" || name == "finetune") {
    c.actor_hidden = c.critic_hidden = {512, 512, 256};
    c.num_envs = 96;
    c.total_steps = name == "base" ? 600'000'000 : 150'000'000;
    return c;
  }
  throw ConfigError("unknown trainer preset '" + std::string(name) + "' (expected base, finetune or desk)");
}

void TrainerConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("discount must lie in (0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("soft-update coefficient must lie in (0, 1]");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be >= 0");
  if (!(lr_floor >= 0.0 && lr_floor <= 1.0)) throw ConfigError("learning-rate floor must lie in [0, 1]");
  if (!(initial_alpha > 0.0)) throw ConfigError("entropy coefficient must be positive");
  if (batch_size < 1 || train_frequency < 1 || gradient_steps < 1 || target_update_interval < 1 ||
      total_steps < 1 || num_envs < 1 || replay_capacity < 1 || log_interval < 1 || return_window < 1)
    throw ConfigError("trainer counts must be at least 1");
  if (learning_starts < 0) throw ConfigError("learning_starts must be >= 0");
  if (batch_size > replay_capacity) throw ConfigError("batch size exceeds the replay capacity");
  if (actor_hidden.empty() || critic_hidden.empty()) throw ConfigError("networks need at least one hidden layer");
  for (int h : actor_hidden)
    if (h < 1) throw ConfigError("hidden layer sizes must be positive");
  for (int h : critic_hidden)
    if (h < 1) throw ConfigError("hidden layer sizes must be positive");
  make_optimizer(optimizer, 1);
}

SacConfig TrainerConfig::sac() const {
  SacConfig s;
  s.actor_hidden = actor_hidden;
  s.critic_hidden = critic_hidden;
  s.gamma = gamma;
  s.tau = tau;
  s.entropy = entropy;
  s.initial_alpha = initial_alpha;
  s.target_update_interval = target_update_interval;
  s.optimizer = optimizer;
  return s;
}

double TrainerConfig::learning_rate_at(long step) const {
  const double progress = std::min(1.0, static_cast<double>(step) / total_steps);
  return learning_rate * (1.0 - (1.0 - lr_floor) * progress);
}

std::string env_fingerprint(const GaitEnv& env) {
  std::ostringstream s;
  s << "obs=" << env.observation_dim() << ";act=" << env.action_dim() << ";control=" << env.config().control_rate
    << ";future=" << kFutureFrames << ";muscles=";
  for (const auto& m : env.muscles()) s << m.name << ',';
  return fingerprint(s.str());
}

std::string PolicyCheckpoint::serialize() const {
  if (!agent) throw ConfigError("checkpoint has no agent");
  Json h;
  h["schema"] = "gaitlab.checkpoint/1";
  h["trainer"] = trainer_config_to_json(trainer);
  h["phase"] = std::string(to_string(phase));
  h["obs_dim"] = obs_dim;
  h["action_dim"] = action_dim;
  h["env_fingerprint"] = env_fingerprint;
  h["config_fingerprint"] = config_fingerprint;
  h["total_steps"] = total_steps;
  h["rng_state"] = rng_state;
  h["alpha"] = agent->alpha();
  h["updates"] = agent->updates();
  const std::string header = h.dump();

  std::ostringstream out(std::ios::binary);
  write_raw(out, kMagic, sizeof kMagic);
  const std::uint32_t version = kVersion;
  write_raw(out, &version, sizeof version);
  const std::uint64_t len = header.size();
  write_raw(out, &len, sizeof len);
  write_raw(out, header.data(), header.size());
  agent->save(out);
  return out.str();
}

PolicyCheckpoint PolicyCheckpoint::deserialize(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  char magic[4];
  read_raw(in, magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw DataError("not a gaitlab checkpoint");
  std::uint32_t version = 0;
  read_raw(in, &version, sizeof version);
  if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  std::uint64_t len = 0;
  read_raw(in, &len, sizeof len);
  if (len > bytes.size()) throw DataError("corrupt checkpoint header");
  std::string header(len, '\0');
  read_raw(in, header.data(), len);
  Json h;
  try {
    h = Json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt checkpoint header: ") + e.what());
  }
  PolicyCheckpoint c;
  try {
    c.trainer = trainer_config_from_json(h.at("trainer"), TrainerConfig{});
    c.phase = train_phase_from_string(h.at("phase").get<std::string>());
    c.obs_dim = h.at("obs_dim").get<int>();
    c.action_dim = h.at("action_dim").get<int>();
    c.env_fingerprint = h.at("env_fingerprint").get<std::string>();
    c.config_fingerprint = h.at("config_fingerprint").get<std::string>();
    c.total_steps = h.at("total_steps").get<long>();
    c.rng_state = h.at("rng_state").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint header: ") + e.what());
  }
  c.agent = std::make_shared<Sac>(c.obs_dim, c.action_dim, c.trainer.sac(), 0);
  c.agent->load(in);
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes after checkpoint payload");
  return c;
}

void PolicyCheckpoint::save(const std::string& path) const {
  const std::string bytes = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write checkpoint '" + path + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("cannot write checkpoint '" + path + "'");
}

PolicyCheckpoint PolicyCheckpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read checkpoint '" + path + "'");
  std::ostringstream s;
  s << f.rdbuf();
  return deserialize(s.str());
}

std::string train_log_header() {
  return "step,episodes,return_mean,length_mean,r_pos,r_vel,r_root,r_ee,r_torq,r_eff,r_smt,r_exo,r_total,"
         "exo_abs_mean_Nm,exo_abs_max_Nm,exo_limit_Nm,entropy,alpha,critic_loss,actor_loss,lr,updates";
}

std::string format_log_row(const TrainLogRow& r) {
  std::ostringstream s;
  s.precision(17);
  s << r.step << ',' << r.episodes;
  for (double v : {r.return_mean, r.length_mean, r.terms.pos, r.terms.vel, r.terms.root, r.terms.ee, r.terms.torq,
                   r.terms.eff, r.terms.smt, r.terms.exo, r.terms.total, r.exo_abs_mean, r.exo_abs_max, r.exo_limit,
                   r.entropy, r.alpha, r.critic_loss, r.actor_loss, r.lr})
    s << ',' << v;
  s << ',' << r.updates;
  return s.str();
}

void check_phase(TrainPhase phase, const EnvResources& res, const EnvConfig& env, bool has_init) {
  const bool device = res.model && res.model->device().kind != DeviceKind::none;
  const bool weak = has_weakness(env);
  const std::string name(to_string(phase));
  if (phase == TrainPhase::base) {
    if (env.reward.phase != RewardPhase::base) throw ConfigError("base phase needs the base reward profile");
    if (device) throw ConfigError("base phase trains the unassisted model; set the device to none");
    if (weak) throw ConfigError("base phase trains the able-bodied model; remove the weakness mask");
    return;
  }
  if (!has_init) throw ConfigError(name + " requires an initial checkpoint");
  if (env.reward.phase != RewardPhase::finetune) throw ConfigError(name + " needs the finetune reward profile");
  if (phase == TrainPhase::exo_finetune && !device) throw ConfigError("exo-finetune needs an exoskeleton device");
  if (phase == TrainPhase::weakness_finetune && !weak) throw ConfigError("weakness-finetune needs a weakness mask");
}

TrainResult train(const EnvResources& res, const EnvConfig& env_cfg, const TrainerConfig& cfg, TrainPhase phase,
                  const PolicyCheckpoint* init, const std::string& config_fp, const TrainHooks& hooks) {
  cfg.validate();
  env_cfg.validate();
  check_phase(phase, res, env_cfg, init != nullptr);

  CollectorPool pool(res, env_cfg, cfg.num_envs, cfg.seed, cfg.threaded);
  GaitEnv meta_env(res, env_cfg);
  const std::string env_fp = env_fingerprint(meta_env);
  const int obs_dim = meta_env.observation_dim();
  const int act_dim = meta_env.action_dim();

  std::mt19937_64 rng = stream(cfg.seed, 0);
  std::shared_ptr<Sac> agent;
  long prior_steps = 0;
  if (init) {
    if (!init->agent) throw ConfigError("initial checkpoint has no agent");
    if (init->env_fingerprint != env_fp)
      throw DataError("initial checkpoint was trained on an incompatible environment");
    if (init->trainer.actor_hidden != cfg.actor_hidden || init->trainer.critic_hidden != cfg.critic_hidden)
      throw ConfigError("network sizes differ from the initial checkpoint");
    agent = clone_agent(*init->agent);
    prior_steps = init->total_steps;
  } else {
    agent = std::make_shared<Sac>(obs_dim, act_dim, cfg.sac(), stream(cfg.seed, 1)());
  }

  TrainResult result;
  result.random_return = random_policy_return(res, env_cfg, cfg.return_window, cfg.seed);
  result.exo_limit = meta_env.exo_limit().maxCoeff();

  ReplayBuffer buffer(static_cast<size_t>(cfg.replay_capacity), obs_dim, act_dim);
  const long warmup = init ? 0 : cfg.learning_starts;
  const long unit = cfg.aggregate_frequency ? cfg.train_frequency : static_cast<long>(cfg.train_frequency) * cfg.num_envs;

  if (hooks.metrics) *hooks.metrics << train_log_header() << '\n';

  RewardBreakdown interval = zero_terms();
  double interval_exo = 0.0, interval_exo_max = 0.0;
  long interval_steps = 0;
  double run_exo = 0.0, run_exo_term = 0.0;
  UpdateStats last{kNaN, kNaN, agent->alpha(), kNaN};
  long steps = 0, pending = 0, next_log = 0;

  while (steps < cfg.total_steps) {
    const Eigen::MatrixXd actions = steps < warmup ? random_actions(act_dim, pool.size(), rng)
                                                   : agent->act(pool.observations(), false, rng);
    const auto outs = pool.step(actions);
    for (const auto& o : outs) {
      buffer.push(o.transition);
      add_terms(interval, o.terms);
      interval_exo += o.exo.mean;
      interval_exo_max = std::max(interval_exo_max, o.exo.max);
      result.exo_abs_max = std::max(result.exo_abs_max, o.exo.max);
      run_exo += o.exo.mean;
      run_exo_term += o.terms.exo;
      ++interval_steps;
      if (o.episode_end) {
        result.episode_returns.push_back(o.episode_return);
        result.episode_lengths.push_back(o.episode_length);
      }
    }
    steps += pool.size();
    pending += pool.size();

    if (steps >= warmup) {
      const double lr = cfg.learning_rate_at(steps);
      while (pending >= unit) {
        for (int g = 0; g < cfg.gradient_steps; ++g) last = agent->update(buffer.sample(cfg.batch_size, rng), lr, rng);
        pending -= unit;
      }
    } else {
      pending = 0;
    }

    if (steps >= next_log || steps >= cfg.total_steps) {
      TrainLogRow row;
      row.step = steps;
      row.episodes = static_cast<long>(result.episode_returns.size());
      row.return_mean = mean_tail(result.episode_returns, cfg.return_window);
      std::vector<double> lengths(result.episode_lengths.begin(), result.episode_lengths.end());
      row.length_mean = mean_tail(lengths, cfg.return_window);
      row.terms = scale_terms(interval, 1.0 / interval_steps);
      row.exo_abs_mean = interval_exo / interval_steps;
      row.exo_abs_max = interval_exo_max;
      row.exo_limit = result.exo_limit;
      row.entropy = last.entropy;
      row.alpha = agent->alpha();
      row.critic_loss = last.critic_loss;
      row.actor_loss = last.actor_loss;
      row.lr = cfg.learning_rate_at(steps);
      row.updates = agent->updates();
      if (hooks.metrics) *hooks.metrics << format_log_row(row) << '\n' << std::flush;
      if (hooks.on_log) hooks.on_log(row);
      result.log.push_back(row);
      interval = zero_terms();
      interval_exo = interval_exo_max = 0.0;
      interval_steps = 0;
      next_log = (steps / cfg.log_interval + 1) * cfg.log_interval;
    }
  }

  result.final_return = mean_tail(result.episode_returns, cfg.return_window);
  result.exo_abs_mean = run_exo / steps;
  result.exo_term_mean = run_exo_term / steps;

  PolicyCheckpoint& ck = result.checkpoint;
  ck.trainer = cfg;
  ck.phase = phase;
  ck.obs_dim = obs_dim;
  ck.action_dim = act_dim;
  ck.env_fingerprint = env_fp;
  ck.config_fingerprint = config_fp;
  ck.total_steps = prior_steps + steps;
  ck.rng_state = rng_to_string(rng);
  ck.agent = agent;
  return result;
}

EvalResult evaluate(const PolicyCheckpoint& ck, const EnvResources& res, const EnvConfig& env_cfg, int episodes,
                    bool deterministic, std::uint64_t seed, const std::string& config_fp) {
  if (episodes < 0) throw ConfigError("episode count must be >= 0");
  if (!ck.agent) throw ConfigError("checkpoint has no agent");
  GaitEnv env(res, env_cfg);
  if (ck.env_fingerprint != env_fingerprint(env))
    throw DataError("checkpoint fingerprint does not match the environment");
  EvalResult out;
  std::mt19937_64 rng = stream(seed, 3);
  double total = 0.0, length = 0.0;
  for (int e = 0; e < episodes; ++e) {
    Eigen::VectorXd obs = env.reset(rng());
    EpisodeTrace trace = begin_trace(env, config_fp);
    double ret = 0.0;
    for (;;) {
      const Eigen::VectorXd a = ck.agent->act(obs, deterministic, rng).col(0);
      StepResult r = env.step(std::span<const double>(a.data(), a.size()));
      record_step(trace, env, r);
      ret += r.reward.total;
      if (r.terminated || r.truncated) break;
      obs = std::move(r.observation);
    }
    out.summary.returns.push_back(ret);
    out.summary.lengths.push_back(trace.size());
    total += ret;
    length += trace.size();
    out.traces.push_back(std::move(trace));
  }
  out.summary.episodes = episodes;
  if (episodes > 0) {
    out.summary.mean_return = total / episodes;
    out.summary.mean_length = length / episodes;
  }
  return out;
}

}  // namespace gaitlab
