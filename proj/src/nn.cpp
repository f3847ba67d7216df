#include "gaitlab/nn.hpp"

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>

#include "gaitlab/errors.hpp"

namespace gaitlab {

Mlp::Mlp(int inputs, std::vector<int> hidden, int outputs) {
  if (inputs < 1 || outputs < 1) throw ConfigError("network needs at least one input and one output");
  sizes_.push_back(inputs);
  for (int h : hidden) {
    if (h < 1) throw ConfigError("hidden layer sizes must be positive");
    sizes_.push_back(h);
  }
  sizes_.push_back(outputs);
  long off = 0;
  for (size_t i = 0; i + 1 < sizes_.size(); ++i) {
    Layer l;
    l.in = sizes_[i];
    l.out = sizes_[i + 1];
    l.w = off;
    off += static_cast<long>(l.in) * l.out;
    l.b = off;
    off += l.out;
    layers_.push_back(l);
  }
  params_ = Eigen::VectorXd::Zero(off);
  grad_ = Eigen::VectorXd::Zero(off);
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weight(const Layer& l) const {
  return {params_.data() + l.w, l.out, l.in};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(const Layer& l) const { return {params_.data() + l.b, l.out}; }

void Mlp::init(std::mt19937_64& rng) {
  for (const auto& l : layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (long i = l.w; i < l.b + l.out; ++i) params_[i] = u(rng);
  }
}

const Eigen::MatrixXd& Mlp::forward(const Eigen::MatrixXd& x) {
  if (x.rows() != inputs()) throw ConfigError("network input has the wrong size");
  acts_.resize(layers_.size() + 1);
  acts_[0] = x;
  for (size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    acts_[i + 1].noalias() = weight(l) * acts_[i];
    acts_[i + 1].colwise() += bias(l);
    if (i + 1 < layers_.size()) acts_[i + 1] = acts_[i + 1].cwiseMax(0.0);
  }
  return acts_.back();
}

Eigen::MatrixXd Mlp::predict(const Eigen::MatrixXd& x) const {
  if (x.rows() != inputs()) throw ConfigError("network input has the wrong size");
  Eigen::MatrixXd a = x, z;
  for (size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    z.noalias() = weight(l) * a;
    z.colwise() += bias(l);
    if (i + 1 < layers_.size()) z = z.cwiseMax(0.0);
    a.swap(z);
  }
  return a;
}

Eigen::MatrixXd Mlp::backward(const Eigen::MatrixXd& grad_out, bool accumulate, bool input_grad) {
  if (acts_.size() != layers_.size() + 1) throw ConfigError("backward() without a cached forward()");
  Eigen::MatrixXd g = grad_out;
  for (size_t k = layers_.size(); k-- > 0;) {
    const auto& l = layers_[k];
    // ReLU mask on the output of hidden layers (acts_[k + 1] is post-ReLU).
    if (k + 1 < layers_.size()) g = (acts_[k + 1].array() > 0.0).select(g, 0.0);
    if (accumulate) {
      Eigen::Map<Eigen::MatrixXd>(grad_.data() + l.w, l.out, l.in).noalias() += g * acts_[k].transpose();
      Eigen::Map<Eigen::VectorXd>(grad_.data() + l.b, l.out) += g.rowwise().sum();
    }
    if (k == 0 && !input_grad) return {};
    g = weight(l).transpose() * g;
  }
  return g;
}

void soft_update(Eigen::VectorXd& target, const Eigen::VectorXd& source, double rho) {
  if (target.size() != source.size()) throw ConfigError("soft update between networks of different shapes");
  // Incremental form: a target equal to its source stays bit-identical.
  target += rho * (source - target);
}

Adam::Adam(long size, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) {
  if (grad.size() != m_.size() || params.size() != m_.size()) throw ConfigError("optimizer size mismatch");
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

void Adam::save(std::ostream& out) const {
  const std::int64_t t = t_;
  write_raw(out, &t, sizeof t);
  write_vector(out, m_);
  write_vector(out, v_);
}

void Adam::load(std::istream& in) {
  std::int64_t t = 0;
  read_raw(in, &t, sizeof t);
  const long n = m_.size();
  read_vector(in, m_);
  read_vector(in, v_);
  if (m_.size() != n || v_.size() != n) throw DataError("optimizer state has the wrong size");
  t_ = t;
}

void Sgd::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) { params -= lr * grad; }

std::unique_ptr<Optimizer> make_optimizer(const std::string& name, long size) {
  if (name == "adam") return std::make_unique<Adam>(size);
  if (name == "sgd") return std::make_unique<Sgd>();
  throw ConfigError("unknown optimizer '" + name + "'");
}

void write_raw(std::ostream& out, const void* data, size_t bytes) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw DataError("binary write failed");
}

void read_raw(std::istream& in, void* data, size_t bytes) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
  if (!in) throw DataError("unexpected end of binary data");
}

void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
  const std::int64_t n = v.size();
  write_raw(out, &n, sizeof n);
  write_raw(out, v.data(), sizeof(double) * v.size());
}

void read_vector(std::istream& in, Eigen::VectorXd& v) {
  std::int64_t n = 0;
  read_raw(in, &n, sizeof n);
  if (n < 0 || n > (std::int64_t{1} << 32)) throw DataError("corrupt vector length");
  v.resize(n);
  read_raw(in, v.data(), sizeof(double) * n);
}

}  // namespace gaitlab
