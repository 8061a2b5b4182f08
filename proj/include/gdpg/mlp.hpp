#ifndef GDPG_MLP_HPP
#define GDPG_MLP_HPP

#include <cstddef>
#include <random>
#include <vector>

#include "gdpg/linalg.hpp"

namespace gdpg::nn {

enum class OutputActivation {
  identity,
  /// low + (high - low) * (tanh(z) + 1) / 2, i.e. tanh squashed into a box.
  bounded_squash,
};

/// Weights and biases of a dense network, or anything shaped like them
/// (gradients, Adam moments). weights[i] is out_i x in_i.
struct ParamSet {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static ParamSet zeros_like(const ParamSet& other);

  std::size_t scalar_count() const;
  bool same_shape(const ParamSet& other) const;
  bool all_finite() const;
  double squared_norm() const;
  double dot(const ParamSet& other) const;

  /// Layer-major, weights (column-major) before biases within a layer.
  Vector flatten() const;
  void assign_flat(const Vector& flat);

  ParamSet& operator+=(const ParamSet& other);
  ParamSet& operator*=(double s);
  /// this += s * other
  ParamSet& add_scaled(const ParamSet& other, double s);

  bool operator==(const ParamSet& other) const;
};

/// Per-layer pre-activations and activations. post[0] is the input batch,
/// post[i + 1] is the output of layer i; pre[i] is layer i before its
/// activation. Each column is one sample.
struct ForwardCache {
  std::vector<Matrix> pre;
  std::vector<Matrix> post;

  const Matrix& output() const { return post.back(); }
  Eigen::Index batch_size() const { return post.front().cols(); }
};

/// Multilayer perceptron: rectifier on hidden layers, identity or
/// bounded-squash on the output layer.
class Mlp {
 public:
  Mlp() = default;
  /// Zero-initialized network. `out_low`/`out_high` are required (and only
  /// used) for bounded_squash.
  Mlp(std::vector<int> layer_sizes, OutputActivation output_activation,
      Vector out_low = {}, Vector out_high = {});

  /// Weights and biases uniform in +-1/sqrt(fan_in).
  static Mlp random(std::vector<int> layer_sizes, OutputActivation output_activation,
                    std::mt19937_64& rng, Vector out_low = {}, Vector out_high = {});

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  std::size_t layer_count() const { return sizes_.size() - 1; }
  OutputActivation output_activation() const { return output_activation_; }
  const Vector& out_low() const { return out_low_; }
  const Vector& out_high() const { return out_high_; }

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  bool same_architecture(const Mlp& other) const;

 private:
  std::vector<int> sizes_;
  OutputActivation output_activation_ = OutputActivation::identity;
  Vector out_low_;
  Vector out_high_;
  ParamSet params_;
};

/// Batched forward pass; `x` holds one sample per column.
Matrix forward(const Mlp& net, const Matrix& x, ForwardCache* cache = nullptr);

struct ForwardResult {
  Vector y;
  ForwardCache cache;
};
ForwardResult forward(const Mlp& net, const Vector& x);

/// Output only, single sample.
Vector predict(const Mlp& net, const Vector& x);

/// d(sum_j upstream_j . y_j)/d params, summed over the batch columns.
ParamSet grad_params(const Mlp& net, const ForwardCache& cache, const Matrix& upstream);

/// d(upstream . y)/dx per column.
Matrix grad_input(const Mlp& net, const ForwardCache& cache, const Matrix& upstream);

/// Jacobian dy/dx (output_dim x input_dim) at a single point.
Matrix input_jacobian(const Mlp& net, const Vector& x);

/// target = tau * online + (1 - tau) * target. tau == 1 copies exactly.
void soft_update(ParamSet& target, const ParamSet& online, double tau);

struct AdamState {
  ParamSet first_moment;
  ParamSet second_moment;
  long step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const ParamSet& params, double learning_rate);
};

/// One Adam descent step (params -= lr * m_hat / (sqrt(v_hat) + eps)).
/// Throws NumericalFailure on a non-finite gradient, leaving params and
/// state untouched.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state);

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gdpg::nn

#endif  // GDPG_MLP_HPP
