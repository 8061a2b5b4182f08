#include "gdpg/mlp.hpp"

#include <cmath>
#include <string>

namespace gdpg::nn {

ParamSet ParamSet::zeros_like(const ParamSet& other) {
  ParamSet out;
  out.weights.reserve(other.weights.size());
  out.biases.reserve(other.biases.size());
  for (const auto& w : other.weights) out.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
  for (const auto& b : other.biases) out.biases.push_back(Vector::Zero(b.size()));
  return out;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
  for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
  return n;
}

bool ParamSet::same_shape(const ParamSet& other) const {
  if (weights.size() != other.weights.size() || biases.size() != other.biases.size()) return false;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i].rows() != other.weights[i].rows() ||
        weights[i].cols() != other.weights[i].cols())
      return false;
  }
  for (std::size_t i = 0; i < biases.size(); ++i) {
    if (biases[i].size() != other.biases[i].size()) return false;
  }
  return true;
}

bool ParamSet::all_finite() const {
  for (const auto& w : weights)
    if (!w.allFinite()) return false;
  for (const auto& b : biases)
    if (!b.allFinite()) return false;
  return true;
}

double ParamSet::squared_norm() const {
  double s = 0.0;
  for (const auto& w : weights) s += w.squaredNorm();
  for (const auto& b : biases) s += b.squaredNorm();
  return s;
}

double ParamSet::dot(const ParamSet& other) const {
  require(same_shape(other), "ParamSet::dot: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i].cwiseProduct(other.weights[i]).sum();
  for (std::size_t i = 0; i < biases.size(); ++i) s += biases[i].dot(other.biases[i]);
  return s;
}

Vector ParamSet::flatten() const {
  Vector flat(static_cast<Eigen::Index>(scalar_count()));
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    flat.segment(at, weights[i].size()) = weights[i].reshaped();
    at += weights[i].size();
    if (i < biases.size()) {
      flat.segment(at, biases[i].size()) = biases[i];
      at += biases[i].size();
    }
  }
  return flat;
}

void ParamSet::assign_flat(const Vector& flat) {
  require(static_cast<std::size_t>(flat.size()) == scalar_count(),
          "ParamSet::assign_flat: expected " + std::to_string(scalar_count()) +
              " values, got " + std::to_string(flat.size()));
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i].reshaped() = flat.segment(at, weights[i].size());
    at += weights[i].size();
    if (i < biases.size()) {
      biases[i] = flat.segment(at, biases[i].size());
      at += biases[i].size();
    }
  }
}

ParamSet& ParamSet::operator+=(const ParamSet& other) { return add_scaled(other, 1.0); }

ParamSet& ParamSet::operator*=(double s) {
  for (auto& w : weights) w *= s;
  for (auto& b : biases) b *= s;
  return *this;
}

ParamSet& ParamSet::add_scaled(const ParamSet& other, double s) {
  require(same_shape(other), "ParamSet::add_scaled: shape mismatch");
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] += s * other.weights[i];
  for (std::size_t i = 0; i < biases.size(); ++i) biases[i] += s * other.biases[i];
  return *this;
}

bool ParamSet::operator==(const ParamSet& other) const {
  if (!same_shape(other)) return false;
  for (std::size_t i = 0; i < weights.size(); ++i)
    if (weights[i] != other.weights[i]) return false;
  for (std::size_t i = 0; i < biases.size(); ++i)
    if (biases[i] != other.biases[i]) return false;
  return true;
}

Mlp::Mlp(std::vector<int> layer_sizes, OutputActivation output_activation, Vector out_low,
         Vector out_high)
    : sizes_(std::move(layer_sizes)),
      output_activation_(output_activation),
      out_low_(std::move(out_low)),
      out_high_(std::move(out_high)) {
  require(sizes_.size() >= 2, "Mlp: need at least input and output sizes");
  for (int s : sizes_) require(s > 0, "Mlp: layer sizes must be positive");
  if (output_activation_ == OutputActivation::bounded_squash) {
    require(out_low_.size() == sizes_.back() && out_high_.size() == sizes_.back(),
            "Mlp: bounded_squash needs output bounds of the output dimension");
    require((out_high_.array() > out_low_.array()).all(), "Mlp: empty output box");
  }
  for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
    params_.weights.push_back(Matrix::Zero(sizes_[i + 1], sizes_[i]));
    params_.biases.push_back(Vector::Zero(sizes_[i + 1]));
  }
}

Mlp Mlp::random(std::vector<int> layer_sizes, OutputActivation output_activation,
                std::mt19937_64& rng, Vector out_low, Vector out_high) {
  Mlp net(std::move(layer_sizes), output_activation, std::move(out_low), std::move(out_high));
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.sizes_[i]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto& w = net.params_.weights[i];
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = dist(rng);
    auto& b = net.params_.biases[i];
    for (Eigen::Index k = 0; k < b.size(); ++k) b[k] = dist(rng);
  }
  return net;
}

bool Mlp::same_architecture(const Mlp& other) const {
  return sizes_ == other.sizes_ && output_activation_ == other.output_activation_ &&
         out_low_ == other.out_low_ && out_high_ == other.out_high_;
}

namespace {

void check_input(const Mlp& net, Eigen::Index rows) {
  if (rows != net.input_dim()) {
    throw ContractViolation("mlp forward: input dim " + std::to_string(rows) +
                            " != layer_sizes[0] " + std::to_string(net.input_dim()));
  }
}

void check_cache(const Mlp& net, const ForwardCache& cache, const Matrix& upstream) {
  require(cache.pre.size() == net.layer_count() && cache.post.size() == net.layer_count() + 1,
          "mlp backward: cache does not belong to this network");
  if (upstream.rows() != net.output_dim() || upstream.cols() != cache.batch_size()) {
    throw ContractViolation("mlp backward: upstream is " + std::to_string(upstream.rows()) + "x" +
                            std::to_string(upstream.cols()) + ", expected " +
                            std::to_string(net.output_dim()) + "x" +
                            std::to_string(cache.batch_size()));
  }
}

// Turns dL/d(output) into dL/d(pre-activation of the last layer), then walks
// back through the layers. `visit(i, delta)` sees dL/dz_i for layer i.
template <typename Visit>
Matrix backprop(const Mlp& net, const ForwardCache& cache, const Matrix& upstream, bool need_input,
                Visit&& visit) {
  const std::size_t L = net.layer_count();
  Matrix delta;
  if (net.output_activation() == OutputActivation::bounded_squash) {
    const Vector half = 0.5 * (net.out_high() - net.out_low());
    const auto t = cache.pre[L - 1].array().tanh();
    delta = (upstream.array() * (1.0 - t.square())).matrix();
    delta = half.asDiagonal() * delta;
  } else {
    delta = upstream;
  }
  for (std::size_t li = L; li-- > 0;) {
    visit(li, delta);
    if (li == 0 && !need_input) break;
    Matrix back = net.params().weights[li].transpose() * delta;
    if (li == 0) return back;
    back.array() *= (cache.pre[li - 1].array() > 0.0).cast<double>();
    delta = std::move(back);
  }
  return {};
}

}  // namespace

Matrix forward(const Mlp& net, const Matrix& x, ForwardCache* cache) {
  check_input(net, x.rows());
  const std::size_t L = net.layer_count();
  ForwardCache scratch;
  ForwardCache& c = cache ? *cache : scratch;
  c.pre.resize(L);
  c.post.resize(L + 1);
  c.post[0] = x;
  for (std::size_t i = 0; i < L; ++i) {
    Matrix& z = c.pre[i];
    z.noalias() = net.params().weights[i] * c.post[i];
    z.colwise() += net.params().biases[i];
    Matrix& h = c.post[i + 1];
    if (i + 1 < L) {
      h = z.cwiseMax(0.0);
    } else if (net.output_activation() == OutputActivation::bounded_squash) {
      const Vector center = 0.5 * (net.out_high() + net.out_low());
      const Vector half = 0.5 * (net.out_high() - net.out_low());
      h = (half.asDiagonal() * z.array().tanh().matrix()).colwise() + center;
    } else {
      h = z;
    }
  }
  return cache ? c.post.back() : std::move(c.post.back());
}

ForwardResult forward(const Mlp& net, const Vector& x) {
  ForwardResult out;
  out.y = forward(net, Matrix(x), &out.cache).col(0);
  return out;
}

Vector predict(const Mlp& net, const Vector& x) { return forward(net, Matrix(x), nullptr).col(0); }

ParamSet grad_params(const Mlp& net, const ForwardCache& cache, const Matrix& upstream) {
  check_cache(net, cache, upstream);
  ParamSet g;
  g.weights.resize(net.layer_count());
  g.biases.resize(net.layer_count());
  backprop(net, cache, upstream, false, [&](std::size_t li, const Matrix& delta) {
    g.weights[li].noalias() = delta * cache.post[li].transpose();
    g.biases[li] = delta.rowwise().sum();
  });
  return g;
}

Matrix grad_input(const Mlp& net, const ForwardCache& cache, const Matrix& upstream) {
  check_cache(net, cache, upstream);
  return backprop(net, cache, upstream, true, [](std::size_t, const Matrix&) {});
}

Matrix input_jacobian(const Mlp& net, const Vector& x) {
  const ForwardResult fr = forward(net, x);
  Matrix jac(net.output_dim(), net.input_dim());
  for (int k = 0; k < net.output_dim(); ++k) {
    const Matrix e = Vector::Unit(net.output_dim(), k);
    jac.row(k) = grad_input(net, fr.cache, e).col(0).transpose();
  }
  return jac;
}

void soft_update(ParamSet& target, const ParamSet& online, double tau) {
  require(tau > 0.0 && tau <= 1.0, "soft_update: tau must lie in (0, 1]");
  require(target.same_shape(online), "soft_update: shape mismatch");
  if (tau == 1.0) {
    target = online;
    return;
  }
  for (std::size_t i = 0; i < target.weights.size(); ++i)
    target.weights[i] = tau * online.weights[i] + (1.0 - tau) * target.weights[i];
  for (std::size_t i = 0; i < target.biases.size(); ++i)
    target.biases[i] = tau * online.biases[i] + (1.0 - tau) * target.biases[i];
}

AdamState AdamState::for_params(const ParamSet& params, double learning_rate) {
  require(learning_rate > 0.0, "AdamState: learning rate must be positive");
  AdamState s;
  s.first_moment = ParamSet::zeros_like(params);
  s.second_moment = ParamSet::zeros_like(params);
  s.learning_rate = learning_rate;
  return s;
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state) {
  require(params.same_shape(grads) && params.same_shape(state.first_moment) &&
              params.same_shape(state.second_moment),
          "adam_step: parameter, gradient and moment shapes differ");
  if (!grads.all_finite()) throw NumericalFailure("adam_step: non-finite gradient");

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1, b2 = state.beta2, lr = state.learning_rate, eps = state.epsilon;

  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t i = 0; i < params.weights.size(); ++i)
    update(params.weights[i], grads.weights[i], state.first_moment.weights[i],
           state.second_moment.weights[i]);
  for (std::size_t i = 0; i < params.biases.size(); ++i)
    update(params.biases[i], grads.biases[i], state.first_moment.biases[i],
           state.second_moment.biases[i]);
}

}  // namespace gdpg::nn
