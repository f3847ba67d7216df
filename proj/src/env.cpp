#include "gaitlab/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gaitlab/errors.hpp"

namespace gaitlab {

namespace {

const char* const kEndEffectors[] = {"foot_l", "foot_r", "head"};

Eigen::Matrix<double, kNumAngles, 1> model_angles(const Coords& q) { return q.segment<kNumAngles>(2); }

JointVector joint_angles(const Coords& q) { return q.tail<kNumJoints>(); }

}  // namespace

WeaknessMask weakness_preset(const std::string& name) {
  if (name == "none" || name.empty()) return {};
  if (name == "plantarflexor-weak-left") return {{"soleus_l", 0.05}, {"gastroc_l", 0.05}};
  if (name == "hipflexor-weak-left") return {{"iliopsoas_l", 0.05}};
  throw ConfigError("unknown weakness preset '" + name + "'");
}

std::vector<double> resolve_weakness(const WeaknessMask& mask, std::span<const MuscleSpec> muscles) {
  std::vector<double> caps(muscles.size(), 1.0);
  for (const auto& [name, cap] : mask) {
    if (!(cap > 0.0 && cap <= 1.0)) throw ConfigError("weakness cap for '" + name + "' must lie in (0, 1]");
    caps[muscle_index(muscles, name)] = cap;
  }
  return caps;
}

int EnvConfig::ticks_per_step() const {
  return static_cast<int>(std::lround(physics_rate / control_rate));
}

void EnvConfig::validate() const {
  if (!(control_rate > 0.0) || !(physics_rate > 0.0)) throw ConfigError("env rates must be positive");
  const double ratio = physics_rate / control_rate;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1.0)
    throw ConfigError("physics rate must be an integer multiple of the control rate");
  if (substeps_per_tick < 1) throw ConfigError("substeps per tick must be at least 1");
  if (episode_steps < 1) throw ConfigError("episode cap must be at least one step");
  if (!(termination_radius > 0.0)) throw ConfigError("termination radius must be positive");
  if (!(initial_activation >= 0.0 && initial_activation <= 1.0))
    throw ConfigError("initial activation must lie in [0, 1]");
  if (!(reset_search_range > 0.0) || !(reset_force_tolerance > 0.0))
    throw ConfigError("reset search range and tolerance must be positive");
  reward.validate();
}

GaitEnv::GaitEnv(EnvResources resources, EnvConfig config) : resources_(std::move(resources)), config_(config) {
  if (!resources_.model || !resources_.muscles || !resources_.clip) throw ConfigError("env resources incomplete");
  config_.validate();
  resources_.clip->validate();
  for (const auto& m : *resources_.muscles) m.validate();
  for (const char* name : kEndEffectors) {
    resources_.model->landmark_index(name);
    resources_.clip->landmark_index(name);
  }
  layout_.muscles = num_muscles();
  caps_ = resolve_weakness(config_.weakness, *resources_.muscles);

  ExoDeviceSpec device = resources_.model->device();
  device.resolve_tau_max(resources_.model->total_mass());
  exo_max_ = device.tau_max_vector();
  if (device.kind != DeviceKind::none)
    exo_alpha_ = 1.0 - std::exp(-2.0 * std::numbers::pi * device.cutoff_hz * config_.control_period());
}

void GaitEnv::apply_weakness(const WeaknessMask& mask) {
  caps_ = resolve_weakness(mask, *resources_.muscles);
  config_.weakness = mask;
}

Eigen::VectorXd GaitEnv::reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, resources_.clip->frames() - 1);
  return reset_at_frame(pick(rng));
}

Eigen::VectorXd GaitEnv::reset_at_frame(int frame) {
  const auto& clip = *resources_.clip;
  const auto& model = *resources_.model;
  if (frame < 0 || frame >= clip.frames()) throw ConfigError("reset frame outside the clip");
  start_time_ = clip.time(frame);
  ref_time_ = start_time_;
  const auto ref = sample_clip(clip, ref_time_);

  Coords q, qd;
  q << clip.root.row(frame).transpose(), clip.angles.row(frame).transpose();
  qd << ref.root_velocity, clip.velocities.row(frame).transpose();

  // Vertical offset at which the static contact force carries the body weight.
  auto imbalance = [&](double dy) {
    Coords shifted = q;
    shifted[1] += dy;
    const auto f = static_vertical_grf(model, shifted);
    return f[0] + f[1] - model.weight();
  };
  double lo = -config_.reset_search_range, hi = config_.reset_search_range;
  if (!(imbalance(lo) >= 0.0) || !(imbalance(hi) <= 0.0))
    throw ConvergenceError("reset: no vertical offset within +-" + std::to_string(config_.reset_search_range) +
                           " m balances body weight at frame " + std::to_string(frame));
  double dy = 0.0;
  for (int iter = 0; iter < 200; ++iter) {
    dy = 0.5 * (lo + hi);
    const double f = imbalance(dy);
    if (std::abs(f) <= config_.reset_force_tolerance) break;
    if (f > 0.0) lo = dy; else hi = dy;
  }
  reset_offset_ = dy;
  q[1] += dy;

  state_ = make_state(model, q, qd);
  const auto grf = static_vertical_grf(model, q);
  state_.grf[0] = {0.0, grf[0]};
  state_.grf[1] = {0.0, grf[1]};
  init_muscles();
  exo_pre_.setZero();
  exo_out_.setZero();
  mean_tau_.setZero();
  steps_ = 0;
  done_ = false;
  return observation();
}

void GaitEnv::init_muscles() {
  const auto& specs = *resources_.muscles;
  const JointVector angles = joint_angles(state_.q);
  const double a0 = config_.initial_activation;
  muscle_.assign(specs.size(), {});
  rates_.assign(specs.size(), {});
  applied_.assign(specs.size(), 0.0);
  previous_command_.assign(specs.size(), a0);
  double power = 0.0;
  for (size_t i = 0; i < specs.size(); ++i) {
    muscle_[i] = equilibrate(specs[i].mtu_length(angles), a0, specs[i]);
    muscle_[i].excitation = std::min(a0, caps_[i]);
    applied_[i] = muscle_[i].excitation;
    rates_[i] = muscle_energy_rate(muscle_[i], specs[i]);
    power += rates_[i].power();
  }
  mean_power_ = power;
}

void GaitEnv::set_model_state(const ModelState& state) { state_ = state; }

double GaitEnv::root_deviation() const {
  return (state_.root - sample_clip(*resources_.clip, ref_time_).root).norm();
}

StepResult GaitEnv::step(std::span<const double> action) {
  if (done_) throw ConfigError("step called on a finished episode; call reset first");
  const int m = num_muscles();
  if (static_cast<int>(action.size()) != action_dim())
    throw ConfigError("action has " + std::to_string(action.size()) + " entries, expected " +
                      std::to_string(action_dim()));
  StepResult out;
  std::vector<double> a(action.begin(), action.end());
  for (double& v : a) {
    if (!std::isfinite(v)) throw ConfigError("non-finite action entry");
    if (v < -1.0 || v > 1.0) {
      out.action_clipped = true;
      v = std::clamp(v, -1.0, 1.0);
    }
  }

  // Muscle channel: [-1, 1] -> [0, 1], then the weakness ceiling.
  std::vector<double> decoded(m);
  for (int i = 0; i < m; ++i) {
    decoded[i] = 0.5 * (a[i] + 1.0);
    applied_[i] = std::min(decoded[i], caps_[i]);
  }

  // Exo channel: scale, rate-limit, first-order low-pass.
  for (int j = 0; j < kNumAssistChannels; ++j) {
    const double command =
        config_.reward.phase == RewardPhase::base ? 0.0 : a[m + j] * exo_max_[j];
    const double limited = std::clamp(command, exo_pre_[j] - exo_max_[j], exo_pre_[j] + exo_max_[j]);
    exo_pre_[j] = limited;
    exo_out_[j] += exo_alpha_ * (limited - exo_out_[j]);
  }

  const auto& specs = *resources_.muscles;
  const auto& model = *resources_.model;
  const int ticks = config_.ticks_per_step();
  const double tick = 1.0 / config_.physics_rate;
  StepOptions opts;
  opts.locked = config_.locked;
  opts.substeps = config_.substeps_per_tick;
  const double h = tick / opts.substeps;
  const int act_steps = activation_substeps(h);

  std::vector<MetabolicRates> sum_rates(m);
  int samples = 0;
  auto provider = [&](const Coords& q, const Coords& qd) -> JointVector {
    const JointVector angles = joint_angles(q);
    const JointVector rates = qd.tail<kNumJoints>();
    for (int i = 0; i < m; ++i) {
      const auto& spec = specs[i];
      const double act = integrate_activation(muscle_[i].activation, applied_[i], h, act_steps, spec);
      auto res = mtu_force(muscle_[i], spec.mtu_length(angles), spec.mtu_velocity(angles, rates), act, spec, h);
      muscle_[i] = res.state;
      muscle_[i].excitation = applied_[i];
      const auto r = muscle_energy_rate(muscle_[i], spec);
      auto& s = sum_rates[i];
      s.activation_maintenance += r.activation_maintenance;
      s.shortening_lengthening += r.shortening_lengthening;
      s.mechanical_work += r.mechanical_work;
      s.total += r.total;
      s.unclamped_total += r.unclamped_total;
      s.muscle_mass = r.muscle_mass;
    }
    ++samples;
    return joint_moments(muscle_, specs, angles);
  };

  JointVector tau_sum = JointVector::Zero();
  try {
    for (int t = 0; t < ticks; ++t) {
      state_ = step_physics_coupled(model, state_, provider, exo_out_, tick, opts);
      tau_sum += state_.tau;
    }
  } catch (const Error& e) {
    out.terminated = true;
    out.diagnostic = e.what();
    done_ = true;
  }
  if (samples > 0) {
    for (int i = 0; i < m; ++i) {
      auto& s = sum_rates[i];
      s.activation_maintenance /= samples;
      s.shortening_lengthening /= samples;
      s.mechanical_work /= samples;
      s.total /= samples;
      s.unclamped_total /= samples;
    }
    rates_ = std::move(sum_rates);
  }
  mean_tau_ = tau_sum / ticks;
  ref_time_ = start_time_ + (steps_ + 1) * config_.control_period();
  ++steps_;

  if (!out.diagnostic.empty()) {
    out.observation = Eigen::VectorXd::Zero(observation_dim());
    out.reward = finalize(RewardBreakdown{0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0}, config_.reward);
    previous_command_ = decoded;
    return out;
  }

  out.reward = compute_reward(decoded);
  previous_command_ = decoded;
  out.terminated = root_deviation() > config_.termination_radius;
  out.truncated = steps_ >= config_.episode_steps;
  if (out.terminated || out.truncated) done_ = true;
  out.observation = observation();
  return out;
}

RewardBreakdown GaitEnv::compute_reward(std::span<const double> decoded) const {
  const auto& clip = *resources_.clip;
  const auto& model = *resources_.model;
  const auto ref = sample_clip(clip, ref_time_);
  const auto& c = config_.reward;
  RewardBreakdown r;

  const Eigen::Matrix<double, kNumAngles, 1> ang = model_angles(state_.q);
  const Eigen::Matrix<double, kNumAngles, 1> vel = state_.qd.segment<kNumAngles>(2);
  r.pos = tracking_term((ref.angles - ang).squaredNorm(), c.k_pos);
  r.vel = tracking_term((ref.velocities - vel).squaredNorm(), c.k_vel);
  r.root = tracking_term((ref.root - state_.root).squaredNorm(), c.k_root);
  double ee = 0.0;
  for (const char* name : kEndEffectors)
    ee += (ref.landmarks[clip.landmark_index(name)] - state_.landmarks[model.landmark_index(name)]).squaredNorm();
  r.ee = tracking_term(ee, c.k_ee);
  const JointVector ref_tau = ref.moments * model.total_mass();
  r.torq = tracking_term((ref_tau - mean_tau_).squaredNorm(), c.k_torq);
  r.eff = effort_term(rates_);
  r.smt = smoothness_term(decoded, previous_command_);

  std::vector<double> assisted;
  double tau_max = 0.0;
  for (int j = 0; j < kNumJoints; ++j) {
    if (exo_max_[j] > 0.0) {
      assisted.push_back(exo_out_[j]);
      tau_max = exo_max_[j];
    }
  }
  r.exo = assisted.empty() ? 0.0 : exo_energy_term(assisted, tau_max);
  return finalize(r, c);
}

Eigen::VectorXd GaitEnv::observation() const {
  const auto& specs = *resources_.muscles;
  const auto& model = *resources_.model;
  const int m = num_muscles();
  Eigen::VectorXd obs(layout_.size());
  for (int i = 0; i < m; ++i) {
    obs[layout_.fiber_length() + i] = muscle_[i].fiber_length;
    obs[layout_.tendon_force() + i] = muscle_[i].tendon_force / specs[i].max_isometric_force;
    obs[layout_.activation() + i] = muscle_[i].activation;
  }
  const double bw = model.weight();
  obs.segment<kGrfObs>(layout_.grf()) << state_.grf[0].x() / bw, state_.grf[0].y() / bw, state_.grf[1].x() / bw,
      state_.grf[1].y() / bw;
  const Eigen::Matrix<double, kNumAngles, 1> ang = model_angles(state_.q);
  obs.segment<kNumAngles>(layout_.angles()) = ang;
  const auto lv = landmark_velocities(model, state_.q, state_.qd);
  const Eigen::Vector2d vl = lv[model.landmark_index("foot_l")], vr = lv[model.landmark_index("foot_r")];
  obs.segment<kVelocityObs>(layout_.velocities()) << state_.qd[0], state_.qd[1], vl.x(), vl.y(), vr.x(), vr.y();
  for (int k = 1; k <= kFutureFrames; ++k) {
    const auto ref = sample_clip(*resources_.clip, ref_time_ + k * config_.control_period());
    obs.segment<kNumAngles>(layout_.future() + (k - 1) * kNumAngles) = ref.angles - ang;
  }
  return obs;
}

}  // namespace gaitlab
