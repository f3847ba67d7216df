#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <random>
#include <vector>

#include "gaitlab/nn.hpp"

namespace gaitlab {

struct Transition {
  Eigen::VectorXd obs;
  Eigen::VectorXd action;  // in [-1, 1]
  double reward = 0.0;
  Eigen::VectorXd next_obs;
  bool terminated = false;
  bool truncated = false;
};

/// Column-major minibatch, one transition per column.
struct Batch {
  Eigen::MatrixXd obs, action, next_obs;
  Eigen::VectorXd reward;
  Eigen::VectorXd terminated;  // 1 where the next state is terminal (no bootstrap)
  int size() const { return static_cast<int>(reward.size()); }
};

/// Fixed-capacity ring buffer, stored in single precision.
class ReplayBuffer {
 public:
  ReplayBuffer(size_t capacity, int obs_dim, int action_dim);
  void push(const Transition& t);
  size_t size() const { return size_; }
  size_t capacity() const { return capacity_; }
  /// Uniform with replacement. Throws ConfigError on an empty buffer.
  std::vector<size_t> sample_indices(int batch, std::mt19937_64& rng) const;
  Batch gather(const std::vector<size_t>& indices) const;
  Batch sample(int batch, std::mt19937_64& rng) const { return gather(sample_indices(batch, rng)); }
  /// Slot `i` in storage order (0 is the oldest surviving item).
  Transition at(size_t i) const;

 private:
  size_t capacity_, size_ = 0, next_ = 0;
  int obs_dim_, act_dim_;
  std::vector<float> obs_, act_, next_obs_;
  std::vector<double> reward_;
  std::vector<std::uint8_t> terminated_, truncated_;
};

enum class EntropyMode { fixed, automatic };

struct SacConfig {
  std::vector<int> actor_hidden{64, 64};
  std::vector<int> critic_hidden{64, 64};
  double gamma = 0.95;
  double tau = 0.02;  // soft-update coefficient
  EntropyMode entropy = EntropyMode::automatic;
  double initial_alpha = 1.0;
  int target_update_interval = 1;
  std::string optimizer = "adam";
};

struct UpdateStats {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha = 0.0;
  double entropy = 0.0;  // -mean log pi
};

/// Tanh-squashed Gaussian policy with twin critics and target critics.
class Sac {
 public:
  static constexpr double kLogStdMin = -20.0;
  static constexpr double kLogStdMax = 2.0;

  Sac(int obs_dim, int action_dim, const SacConfig& config, std::uint64_t seed);

  int obs_dim() const { return obs_dim_; }
  int action_dim() const { return act_dim_; }
  const SacConfig& config() const { return config_; }

  /// One action per observation column. The mean action when `deterministic`.
  Eigen::MatrixXd act(const Eigen::MatrixXd& obs, bool deterministic, std::mt19937_64& rng) const;

  /// One gradient step on every network plus the soft target update.
  UpdateStats update(const Batch& batch, double lr, std::mt19937_64& rng);

  // Losses on a frozen batch and noise; with `grad` set, parameter gradients
  // are left in the networks' grad() (critic: q1 and q2, actor: actor).
  double critic_loss(const Batch& batch, const Eigen::MatrixXd& next_noise, bool grad);
  double actor_loss(const Batch& batch, const Eigen::MatrixXd& noise, bool grad, double* entropy = nullptr);

  double alpha() const;
  double log_alpha() const { return log_alpha_[0]; }
  double target_entropy() const { return -static_cast<double>(act_dim_); }
  long updates() const { return updates_; }
  void soft_update_targets();

  Mlp& actor() { return actor_; }
  Mlp& q1() { return q1_; }
  Mlp& q2() { return q2_; }
  Mlp& q1_target() { return q1_target_; }
  Mlp& q2_target() { return q2_target_; }
  const Mlp& actor() const { return actor_; }

  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  struct Sample {
    Eigen::MatrixXd action, u, std, noise;
    Eigen::VectorXd log_prob;
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> clamped;
  };
  Sample squash(const Eigen::MatrixXd& actor_out, const Eigen::MatrixXd& noise) const;
  static Eigen::MatrixXd join(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& action);

  int obs_dim_, act_dim_;
  SacConfig config_;
  Mlp actor_, q1_, q2_, q1_target_, q2_target_;
  std::unique_ptr<Optimizer> actor_opt_, q1_opt_, q2_opt_, alpha_opt_;
  Eigen::VectorXd log_alpha_{Eigen::VectorXd::Zero(1)};
  long updates_ = 0;
};

}  // namespace gaitlab
