#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace gaitlab {

/// Fully connected network with ReLU hidden layers and a linear output.
/// Parameters live in one flat vector (per layer: weights column-major, then
/// bias) so optimizers, soft updates and checkpoints treat them uniformly.
/// Batches are column-major: one sample per column.
class Mlp {
 public:
  Mlp() = default;
  Mlp(int inputs, std::vector<int> hidden, int outputs);

  int inputs() const { return sizes_.front(); }
  int outputs() const { return sizes_.back(); }
  const std::vector<int>& sizes() const { return sizes_; }
  long num_params() const { return params_.size(); }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
  void init(std::mt19937_64& rng);

  /// Forward pass that keeps activations for backward().
  const Eigen::MatrixXd& forward(const Eigen::MatrixXd& x);
  /// Forward pass without caching; safe to call concurrently.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;
  /// Backpropagates dLoss/dOutput through the last forward(). Adds parameter
  /// gradients into grad() when `accumulate` is set and returns dLoss/dInput
  /// (empty when `input_grad` is false).
  Eigen::MatrixXd backward(const Eigen::MatrixXd& grad_out, bool accumulate = true, bool input_grad = true);

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  Eigen::VectorXd& grad() { return grad_; }
  const Eigen::VectorXd& grad() const { return grad_; }
  void zero_grad() { grad_.setZero(); }

 private:
  struct Layer {
    long w = 0, b = 0;  // offsets into params_
    int in = 0, out = 0;
  };
  Eigen::Map<const Eigen::MatrixXd> weight(const Layer& l) const;
  Eigen::Map<const Eigen::VectorXd> bias(const Layer& l) const;

  std::vector<int> sizes_;
  std::vector<Layer> layers_;
  Eigen::VectorXd params_, grad_;
  std::vector<Eigen::MatrixXd> acts_;  // inputs to each layer, post-ReLU
};

/// target <- rho * source + (1 - rho) * target.
void soft_update(Eigen::VectorXd& target, const Eigen::VectorXd& source, double rho);

/// Gradient-based parameter update rule.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) = 0;
  virtual std::string name() const = 0;
  /// Raw state for checkpoints.
  virtual void save(std::ostream& out) const = 0;
  virtual void load(std::istream& in) = 0;
};

class Adam : public Optimizer {
 public:
  explicit Adam(long size, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) override;
  std::string name() const override { return "adam"; }
  void save(std::ostream& out) const override;
  void load(std::istream& in) override;
  long steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

class Sgd : public Optimizer {
 public:
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) override;
  std::string name() const override { return "sgd"; }
  void save(std::ostream&) const override {}
  void load(std::istream&) override {}
};

std::unique_ptr<Optimizer> make_optimizer(const std::string& name, long size);

// Raw little-endian binary helpers shared by checkpoint code.
void write_raw(std::ostream& out, const void* data, size_t bytes);
void read_raw(std::istream& in, void* data, size_t bytes);
void write_vector(std::ostream& out, const Eigen::VectorXd& v);
void read_vector(std::istream& in, Eigen::VectorXd& v);

}  // namespace gaitlab
