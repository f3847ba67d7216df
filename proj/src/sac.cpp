#include "gaitlab/sac.hpp"

#include <cmath>
#include <cstdint>
#include <istream>
#include <numbers>
#include <ostream>

#include "gaitlab/errors.hpp"

namespace gaitlab {

ReplayBuffer::ReplayBuffer(size_t capacity, int obs_dim, int action_dim)
    : capacity_(capacity), obs_dim_(obs_dim), act_dim_(action_dim) {
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
  obs_.resize(capacity * obs_dim);
  next_obs_.resize(capacity * obs_dim);
  act_.resize(capacity * action_dim);
  reward_.resize(capacity);
  terminated_.resize(capacity);
  truncated_.resize(capacity);
}

void ReplayBuffer::push(const Transition& t) {
  if (t.obs.size() != obs_dim_ || t.next_obs.size() != obs_dim_ || t.action.size() != act_dim_)
    throw ConfigError("transition has the wrong shape");
  const size_t i = next_;
  for (int k = 0; k < obs_dim_; ++k) {
    obs_[i * obs_dim_ + k] = static_cast<float>(t.obs[k]);
    next_obs_[i * obs_dim_ + k] = static_cast<float>(t.next_obs[k]);
  }
  for (int k = 0; k < act_dim_; ++k) act_[i * act_dim_ + k] = static_cast<float>(t.action[k]);
  reward_[i] = t.reward;
  terminated_[i] = t.terminated;
  truncated_[i] = t.truncated;
  next_ = (next_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

std::vector<size_t> ReplayBuffer::sample_indices(int batch, std::mt19937_64& rng) const {
  if (size_ == 0) throw ConfigError("cannot sample from an empty replay buffer");
  if (batch < 1) throw ConfigError("batch size must be positive");
  std::uniform_int_distribution<size_t> pick(0, size_ - 1);
  std::vector<size_t> idx(batch);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

Batch ReplayBuffer::gather(const std::vector<size_t>& indices) const {
  const int n = static_cast<int>(indices.size());
  Batch b;
  b.obs.resize(obs_dim_, n);
  b.next_obs.resize(obs_dim_, n);
  b.action.resize(act_dim_, n);
  b.reward.resize(n);
  b.terminated.resize(n);
  for (int c = 0; c < n; ++c) {
    const size_t i = indices[c];
    if (i >= size_) throw ConfigError("replay index out of range");
    for (int k = 0; k < obs_dim_; ++k) {
      b.obs(k, c) = obs_[i * obs_dim_ + k];
      b.next_obs(k, c) = next_obs_[i * obs_dim_ + k];
    }
    for (int k = 0; k < act_dim_; ++k) b.action(k, c) = act_[i * act_dim_ + k];
    b.reward[c] = reward_[i];
    b.terminated[c] = terminated_[i] ? 1.0 : 0.0;
  }
  return b;
}

Transition ReplayBuffer::at(size_t i) const {
  if (i >= size_) throw ConfigError("replay index out of range");
  const size_t slot = size_ < capacity_ ? i : (next_ + i) % capacity_;
  const Batch b = gather({slot});
  Transition t;
  t.obs = b.obs.col(0);
  t.action = b.action.col(0);
  t.next_obs = b.next_obs.col(0);
  t.reward = b.reward[0];
  t.terminated = terminated_[slot];
  t.truncated = truncated_[slot];
  return t;
}

Sac::Sac(int obs_dim, int action_dim, const SacConfig& config, std::uint64_t seed)
    : obs_dim_(obs_dim),
      act_dim_(action_dim),
      config_(config),
      actor_(obs_dim, config.actor_hidden, 2 * action_dim),
      q1_(obs_dim + action_dim, config.critic_hidden, 1),
      q2_(obs_dim + action_dim, config.critic_hidden, 1) {
  if (!(config.gamma > 0.0 && config.gamma < 1.0)) throw ConfigError("discount must lie in (0, 1)");
  if (!(config.tau > 0.0 && config.tau <= 1.0)) throw ConfigError("soft-update coefficient must lie in (0, 1]");
  if (!(config.initial_alpha > 0.0)) throw ConfigError("entropy coefficient must be positive");
  if (config.target_update_interval < 1) throw ConfigError("target update interval must be at least 1");
  std::mt19937_64 rng(seed);
  actor_.init(rng);
  q1_.init(rng);
  q2_.init(rng);
  q1_target_ = q1_;
  q2_target_ = q2_;
  actor_opt_ = make_optimizer(config.optimizer, actor_.num_params());
  q1_opt_ = make_optimizer(config.optimizer, q1_.num_params());
  q2_opt_ = make_optimizer(config.optimizer, q2_.num_params());
  alpha_opt_ = make_optimizer(config.optimizer, 1);
  log_alpha_[0] = std::log(config.initial_alpha);
}

double Sac::alpha() const { return std::exp(log_alpha_[0]); }

Eigen::MatrixXd Sac::join(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& action) {
  Eigen::MatrixXd x(obs.rows() + action.rows(), obs.cols());
  x.topRows(obs.rows()) = obs;
  x.bottomRows(action.rows()) = action;
  return x;
}

Sac::Sample Sac::squash(const Eigen::MatrixXd& out, const Eigen::MatrixXd& noise) const {
  const int a = act_dim_;
  const int n = static_cast<int>(out.cols());
  Sample s;
  s.noise = noise;
  const Eigen::MatrixXd raw_ls = out.bottomRows(a);
  s.clamped = (raw_ls.array() < kLogStdMin) || (raw_ls.array() > kLogStdMax);
  const Eigen::MatrixXd ls = raw_ls.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  s.std = ls.array().exp();
  s.u = out.topRows(a).array() + s.std.array() * noise.array();
  s.action = s.u.array().tanh();
  s.log_prob.resize(n);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  for (int c = 0; c < n; ++c) {
    double lp = 0.0;
    for (int i = 0; i < a; ++i) {
      const double u = s.u(i, c);
      // log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u))
      const double x = -2.0 * u;
      const double softplus = std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
      lp += -0.5 * noise(i, c) * noise(i, c) - ls(i, c) - half_log_2pi -
            2.0 * (std::numbers::ln2 - u - softplus);
    }
    s.log_prob[c] = lp;
  }
  return s;
}

Eigen::MatrixXd Sac::act(const Eigen::MatrixXd& obs, bool deterministic, std::mt19937_64& rng) const {
  const Eigen::MatrixXd out = actor_.predict(obs);
  if (deterministic) return out.topRows(act_dim_).array().tanh();
  std::normal_distribution<double> g;
  Eigen::MatrixXd noise(act_dim_, obs.cols());
  for (int c = 0; c < noise.cols(); ++c)
    for (int i = 0; i < act_dim_; ++i) noise(i, c) = g(rng);
  return squash(out, noise).action;
}

double Sac::critic_loss(const Batch& b, const Eigen::MatrixXd& next_noise, bool grad) {
  const int n = b.size();
  const double al = alpha();
  const Sample next = squash(actor_.predict(b.next_obs), next_noise);
  const Eigen::MatrixXd xn = join(b.next_obs, next.action);
  const Eigen::MatrixXd t1 = q1_target_.predict(xn), t2 = q2_target_.predict(xn);
  Eigen::VectorXd y(n);
  for (int c = 0; c < n; ++c) {
    const double v = std::min(t1(0, c), t2(0, c)) - al * next.log_prob[c];
    y[c] = b.reward[c] + config_.gamma * (1.0 - b.terminated[c]) * v;
  }
  const Eigen::MatrixXd x = join(b.obs, b.action);
  double loss = 0.0;
  for (Mlp* q : {&q1_, &q2_}) {
    const Eigen::RowVectorXd err = q->forward(x).row(0) - y.transpose();
    loss += 0.5 * err.squaredNorm() / n;
    if (grad) {
      q->zero_grad();
      q->backward(err / n, true, false);
    }
  }
  return loss;
}

double Sac::actor_loss(const Batch& b, const Eigen::MatrixXd& noise, bool grad, double* entropy) {
  const int n = b.size();
  const int a = act_dim_;
  const double al = alpha();
  const Eigen::MatrixXd out = actor_.forward(b.obs);
  const Sample s = squash(out, noise);
  const Eigen::MatrixXd x = join(b.obs, s.action);
  const Eigen::MatrixXd v1 = q1_.forward(x), v2 = q2_.forward(x);
  double loss = 0.0;
  Eigen::MatrixXd g1 = Eigen::MatrixXd::Zero(1, n), g2 = Eigen::MatrixXd::Zero(1, n);
  for (int c = 0; c < n; ++c) {
    const bool first = v1(0, c) <= v2(0, c);
    loss += al * s.log_prob[c] - (first ? v1(0, c) : v2(0, c));
    (first ? g1 : g2)(0, c) = -1.0 / n;
  }
  loss /= n;
  if (entropy) *entropy = -s.log_prob.mean();
  if (!grad) return loss;

  // dL/da through the critics without touching their parameter gradients.
  const Eigen::MatrixXd da =
      (q1_.backward(g1, false) + q2_.backward(g2, false)).bottomRows(a);
  const Eigen::ArrayXXd act = s.action.array();
  const Eigen::ArrayXXd du = da.array() * (1.0 - act * act) + (2.0 * al / n) * act;
  Eigen::MatrixXd dout(2 * a, n);
  dout.topRows(a) = du.matrix();
  dout.bottomRows(a) = (s.clamped).select(0.0, du * s.std.array() * s.noise.array() - al / n).matrix();
  actor_.zero_grad();
  actor_.backward(dout);
  return loss;
}

void Sac::soft_update_targets() {
  soft_update(q1_target_.params(), q1_.params(), config_.tau);
  soft_update(q2_target_.params(), q2_.params(), config_.tau);
}

UpdateStats Sac::update(const Batch& b, double lr, std::mt19937_64& rng) {
  const int n = b.size();
  std::normal_distribution<double> g;
  Eigen::MatrixXd next_noise(act_dim_, n), noise(act_dim_, n);
  for (int c = 0; c < n; ++c)
    for (int i = 0; i < act_dim_; ++i) next_noise(i, c) = g(rng);
  for (int c = 0; c < n; ++c)
    for (int i = 0; i < act_dim_; ++i) noise(i, c) = g(rng);

  UpdateStats st;
  st.alpha = alpha();
  st.critic_loss = critic_loss(b, next_noise, true);
  if (!std::isfinite(st.critic_loss))
    throw DivergedStateError("critic loss is not finite at update " + std::to_string(updates_));
  q1_opt_->step(q1_.params(), q1_.grad(), lr);
  q2_opt_->step(q2_.params(), q2_.grad(), lr);

  st.actor_loss = actor_loss(b, noise, true, &st.entropy);
  if (!std::isfinite(st.actor_loss))
    throw DivergedStateError("actor loss is not finite at update " + std::to_string(updates_));
  actor_opt_->step(actor_.params(), actor_.grad(), lr);

  if (config_.entropy == EntropyMode::automatic) {
    // d/dlog_alpha of -log_alpha * (log_pi + target), averaged.
    Eigen::VectorXd ga(1);
    ga[0] = st.entropy - target_entropy();
    alpha_opt_->step(log_alpha_, ga, lr);
  }
  ++updates_;
  if (updates_ % config_.target_update_interval == 0) soft_update_targets();
  return st;
}

void Sac::save(std::ostream& out) const {
  for (const Mlp* m : {&actor_, &q1_, &q2_, &q1_target_, &q2_target_}) write_vector(out, m->params());
  for (const Optimizer* o : {actor_opt_.get(), q1_opt_.get(), q2_opt_.get(), alpha_opt_.get()}) o->save(out);
  write_vector(out, log_alpha_);
  const std::int64_t u = updates_;
  write_raw(out, &u, sizeof u);
}

void Sac::load(std::istream& in) {
  for (Mlp* m : {&actor_, &q1_, &q2_, &q1_target_, &q2_target_}) {
    const long n = m->num_params();
    read_vector(in, m->params());
    if (m->num_params() != n) throw DataError("checkpoint network shape does not match the configuration");
  }
  for (Optimizer* o : {actor_opt_.get(), q1_opt_.get(), q2_opt_.get(), alpha_opt_.get()}) o->load(in);
  read_vector(in, log_alpha_);
  if (log_alpha_.size() != 1) throw DataError("checkpoint entropy coefficient is malformed");
  std::int64_t u = 0;
  read_raw(in, &u, sizeof u);
  updates_ = u;
}

}  // namespace gaitlab
