#include "gdpg/theory.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gdpg::theory {

// ---------------------------------------------------------------------------
// FixedPolicy

FixedPolicy FixedPolicy::constant(Vector theta) {
  require_finite(theta, "constant policy");
  return FixedPolicy(std::move(theta));
}

FixedPolicy FixedPolicy::network(nn::Mlp actor) { return FixedPolicy(std::move(actor)); }

Vector FixedPolicy::act(const Vector& s) const {
  if (const auto* theta = std::get_if<Vector>(&impl_)) return *theta;
  return nn::predict(std::get<nn::Mlp>(impl_), s);
}

Matrix FixedPolicy::state_jacobian(const Vector& s, int state_dim) const {
  if (const auto* theta = std::get_if<Vector>(&impl_)) return Matrix::Zero(theta->size(), state_dim);
  return nn::input_jacobian(std::get<nn::Mlp>(impl_), s);
}

Vector FixedPolicy::param_vjp(const Vector& s, const Vector& upstream) const {
  if (std::holds_alternative<Vector>(impl_)) return upstream;
  const auto& net = std::get<nn::Mlp>(impl_);
  const nn::ForwardResult fr = nn::forward(net, s);
  return nn::grad_params(net, fr.cache, Matrix(upstream)).flatten();
}

std::size_t FixedPolicy::param_count() const {
  if (const auto* theta = std::get_if<Vector>(&impl_)) return static_cast<std::size_t>(theta->size());
  return std::get<nn::Mlp>(impl_).params().scalar_count();
}

Vector FixedPolicy::parameters() const {
  if (const auto* theta = std::get_if<Vector>(&impl_)) return *theta;
  return std::get<nn::Mlp>(impl_).params().flatten();
}

FixedPolicy FixedPolicy::with_parameters(const Vector& flat) const {
  if (std::holds_alternative<Vector>(impl_)) {
    require(static_cast<std::size_t>(flat.size()) == param_count(),
            "FixedPolicy::with_parameters: size mismatch");
    return FixedPolicy(flat);
  }
  nn::Mlp net = std::get<nn::Mlp>(impl_);
  net.params().assign_flat(flat);
  return FixedPolicy(std::move(net));
}

// ---------------------------------------------------------------------------
// Two-dimensional linear example

SeriesResult example1_grad_value(const Vector& theta, double gamma, int terms) {
  require(theta.size() == 2, "example1_grad_value: theta must be 2-dimensional");
  require_finite(theta, "example1_grad_value theta");
  require(std::isfinite(gamma), "example1_grad_value: gamma must be finite");
  require(terms >= 1, "example1_grad_value: terms must be >= 1");

  SeriesResult out;
  Matrix sum = Matrix::Identity(2, 2);
  // coefficient_k = gamma^k 2^{2k-1}; coefficient_1 = 2 gamma, ratio 4 gamma.
  double coefficient = 2.0 * gamma;
  for (int k = 1; k <= terms; ++k) {
    if (k > 1) coefficient *= 4.0 * gamma;
    sum.array() += coefficient;
    if (!(max_norm(sum) <= kDivergenceThreshold)) {
      out.diverged = true;
      break;
    }
  }
  out.partial_sum = -(sum * theta);
  if (!(out.partial_sum.cwiseAbs().maxCoeff() <= kDivergenceThreshold)) out.diverged = true;
  return out;
}

SeriesVerdict example1_verdict(double gamma, int terms) {
  const Vector theta = Vector::Ones(2);
  const SeriesResult a = example1_grad_value(theta, gamma, terms);
  const SeriesResult b = example1_grad_value(theta, gamma, 2 * terms);
  if (a.diverged || b.diverged) return SeriesVerdict::diverged;
  const double scale = std::max(1.0, a.partial_sum.cwiseAbs().maxCoeff());
  const double gap = (b.partial_sum - a.partial_sum).cwiseAbs().maxCoeff();
  return gap <= 1e-9 * scale ? SeriesVerdict::converged : SeriesVerdict::diverged;
}

// ---------------------------------------------------------------------------
// Convergence analysis

void JacobianChain::push(const Matrix& m) {
  require(m.rows() == m.cols(), "JacobianChain: matrices must be square");
  if (matrices.empty()) {
    product = m;
  } else {
    require(m.rows() == product.cols(), "JacobianChain: dimension mismatch");
    product = product * m;
  }
  matrices.push_back(m);
}

double ConvergenceReport::general_gamma_threshold() const {
  const double denom = static_cast<double>(n) * c * max_mixing;
  return denom > 0.0 ? 1.0 / denom : std::numeric_limits<double>::infinity();
}

ConvergenceReport convergence_report(const env::MixedMdp& env, const FixedPolicy& policy,
                                     int state_samples, int chain_length, Rng& rng,
                                     bool allow_finite_difference) {
  require(state_samples >= 1, "convergence_report: state_samples must be >= 1");
  require(chain_length >= 1, "convergence_report: chain_length must be >= 1");
  if (!env.has_analytic_jacobians() && !allow_finite_difference) {
    throw UnsupportedCapability("convergence_report: environment '" + env.id() +
                                "' has no analytic Jacobians");
  }

  ConvergenceReport report;
  report.n = env.state_dim();
  report.finite_difference_jacobians = !env.has_analytic_jacobians();

  for (int i = 0; i < state_samples; ++i) {
    Vector s = env.reset(rng);
    JacobianChain chain;
    for (int k = 0; k < chain_length; ++k) {
      if (!s.allFinite()) break;
      const Vector a = policy.act(s);
      const env::Jacobians jac = env::jacobians(env, s, a, allow_finite_difference);
      const double f = env.mixing_coeff(s, a);
      report.c = std::max(report.c, max_norm(jac.t_s));
      report.max_mixing = std::max(report.max_mixing, f);
      ++report.samples_used;

      chain.push(f * jac.t_s.transpose());
      if (!chain.product.allFinite()) break;
      const SpectralEstimate radius = spectral_radius_estimate(chain.product);
      report.worst_chain_radius = std::max(report.worst_chain_radius, radius.radius);
      report.radii_converged = report.radii_converged && radius.converged;

      if (k + 1 < chain_length) s = env.transition(s, a, rng).first;
    }
    ++report.chains_used;
  }

  if (report.c > 0.0) report.gamma_threshold = 1.0 / (report.n * report.c);
  report.cond_a1 = report.max_mixing <= report.gamma_threshold;
  report.a1_margin = report.gamma_threshold - report.max_mixing;
  report.cond_a2 = report.worst_chain_radius <= 1.0 + 1e-9;
  return report;
}

// ---------------------------------------------------------------------------
// Value and policy gradients

namespace {

struct NodeDerivatives {
  Vector action;
  double f = 1.0;
  env::Jacobians jac;
  /// d mu / d s
  Matrix policy_jac;
  /// d r(s, mu(s)) / d s
  Vector reward_total;
  /// d T(s, mu(s)) / d s
  Matrix transition_total;
};

NodeDerivatives node_derivatives(const env::MixedMdp& env, const FixedPolicy& policy,
                                 const Vector& s, bool allow_fd) {
  NodeDerivatives d;
  d.action = policy.act(s);
  d.f = env.mixing_coeff(s, d.action);
  d.jac = env::jacobians(env, s, d.action, allow_fd);
  d.policy_jac = policy.state_jacobian(s, env.state_dim());
  d.reward_total = d.jac.r_s + d.policy_jac.transpose() * d.jac.r_a;
  d.transition_total = d.jac.t_s + d.jac.t_a * d.policy_jac;
  return d;
}

// One step of the backward value-gradient recursion:
// v(s) = grad r_total + coefficient * (dT_total)^T v(s').
// Shared by every estimator so the degenerate cases agree bit for bit.
Vector value_gradient_step(const NodeDerivatives& d, const Vector& next_grad, double coefficient) {
  return d.reward_total + coefficient * (d.transition_total.transpose() * next_grad);
}

Vector deterministic_upstream(const NodeDerivatives& d, const Vector& next_grad,
                              double coefficient) {
  return coefficient * (d.jac.t_a.transpose() * next_grad);
}

struct KernelSamples {
  /// (1/K) sum_j score_a(s'_j) (V_j - b_j)
  Vector action_integral;
  /// (1/K) sum_j (score_s + P^T score_a)(s'_j) (V_j - b_j)
  Vector state_integral;
  /// (1/K) sum_j V_j
  double mean_value = 0.0;
};

// Monte-Carlo integrals over s' ~ p(.|s, a) with a leave-one-out baseline
// on the score terms. `want_score` is false for kernels that do not depend
// on (s, a), in which case only the mean value is formed.
KernelSamples sample_kernel(const env::MixedMdp& env, const FixedPolicy& policy,
                            const NodeDerivatives& d, const Vector& s, int remaining,
                            bool want_score, const GradientOptions& options, Rng& rng) {
  const int k = options.mc_next_states;
  KernelSamples out;
  out.action_integral = Vector::Zero(env.action_dim());
  out.state_integral = Vector::Zero(env.state_dim());
  std::vector<Vector> next(static_cast<std::size_t>(k));
  std::vector<double> values(static_cast<std::size_t>(k));
  double total = 0.0;
  for (int j = 0; j < k; ++j) {
    next[j] = env.stochastic_sample(s, d.action, rng);
    values[j] = mc_value(env, policy, next[j], options.gamma, remaining, options.value_rollouts, rng);
    total += values[j];
  }
  out.mean_value = total / k;
  if (!want_score) return out;
  for (int j = 0; j < k; ++j) {
    const double baseline = k > 1 ? (total - values[j]) / (k - 1) : 0.0;
    const env::KernelScore score = env.kernel_score(s, d.action, next[j]);
    const double centered = values[j] - baseline;
    out.action_integral += centered * score.wrt_action;
    out.state_integral += centered * (score.wrt_state + d.policy_jac.transpose() * score.wrt_action);
  }
  out.action_integral /= k;
  out.state_integral /= k;
  return out;
}

bool kernel_has_score(const env::MixedMdp& env) {
  return env.kernel_kind() == env::KernelKind::analytic_score;
}

void check_gradient_options(const GradientOptions& o) {
  require(o.gamma >= 0.0 && o.gamma <= 1.0, "gradient options: gamma must lie in [0, 1]");
  require(o.rollouts >= 1 && o.horizon >= 1, "gradient options: rollouts and horizon must be >= 1");
  require(o.mc_next_states >= 1 && o.value_rollouts >= 1,
          "gradient options: Monte-Carlo sample counts must be >= 1");
}

PolicyGradientEstimate finish(std::vector<PolicyGradientTerms> trajectories, std::size_t dim) {
  PolicyGradientEstimate est;
  est.mean = PolicyGradientTerms::zeros(dim);
  for (const auto& t : trajectories) est.mean += t;
  est.mean *= 1.0 / static_cast<double>(trajectories.size());
  est.trajectories = std::move(trajectories);
  return est;
}

}  // namespace

Vector series_grad_value(const env::MixedMdp& env, const FixedPolicy& policy, const Vector& s,
                         double gamma, int horizon, bool allow_finite_difference) {
  if (!env.fully_deterministic()) {
    throw UnsupportedCapability("series_grad_value: environment '" + env.id() +
                                "' is not fully deterministic");
  }
  require(horizon >= 1, "series_grad_value: horizon must be >= 1");
  require_finite(s, "series_grad_value state");

  Vector result = Vector::Zero(env.state_dim());
  JacobianChain chain;
  Vector x = s;
  double discount = 1.0;
  for (int t = 0; t < horizon; ++t) {
    const NodeDerivatives d = node_derivatives(env, policy, x, allow_finite_difference);
    if (t == 0) {
      result += d.reward_total;
    } else {
      result += discount * (chain.product * d.reward_total);
    }
    if (t + 1 < horizon) {
      chain.push(d.transition_total.transpose());
      x = env.deterministic_map(x, d.action);
      discount *= gamma;
    }
  }
  return result;
}

PolicyGradientTerms PolicyGradientTerms::zeros(std::size_t dim) {
  const auto n = static_cast<Eigen::Index>(dim);
  return {Vector::Zero(n), Vector::Zero(n), Vector::Zero(n), Vector::Zero(n), Vector::Zero(n)};
}

Vector PolicyGradientTerms::total() const {
  return reward + deterministic + stochastic + mixing_deterministic + mixing_stochastic;
}

PolicyGradientTerms& PolicyGradientTerms::operator+=(const PolicyGradientTerms& other) {
  reward += other.reward;
  deterministic += other.deterministic;
  stochastic += other.stochastic;
  mixing_deterministic += other.mixing_deterministic;
  mixing_stochastic += other.mixing_stochastic;
  return *this;
}

PolicyGradientTerms& PolicyGradientTerms::operator*=(double s) {
  reward *= s;
  deterministic *= s;
  stochastic *= s;
  mixing_deterministic *= s;
  mixing_stochastic *= s;
  return *this;
}

PolicyGradientEstimate policy_gradient_deterministic(const env::MixedMdp& env,
                                                     const FixedPolicy& policy,
                                                     const GradientOptions& options, Rng& rng) {
  check_gradient_options(options);
  if (!env.fully_deterministic()) {
    throw UnsupportedCapability("policy_gradient_deterministic: environment '" + env.id() +
                                "' is not fully deterministic");
  }
  const std::size_t dim = policy.param_count();
  const int horizon = options.horizon;
  std::vector<PolicyGradientTerms> trajectories;

  for (int r = 0; r < options.rollouts; ++r) {
    std::vector<Vector> states;
    std::vector<NodeDerivatives> nodes;
    Vector s = env.reset(rng);
    for (int t = 0; t < horizon; ++t) {
      nodes.push_back(node_derivatives(env, policy, s, options.allow_finite_difference));
      states.push_back(s);
      if (t + 1 < horizon) s = env.deterministic_map(s, nodes.back().action);
    }

    // Backward pass: grad V(s_{t+1}) for the remaining horizon H - t - 1.
    std::vector<Vector> det_upstream(static_cast<std::size_t>(horizon));
    Vector v = Vector::Zero(env.state_dim());
    for (int t = horizon - 1; t >= 0; --t) {
      det_upstream[t] = deterministic_upstream(nodes[t], v, options.gamma);
      v = value_gradient_step(nodes[t], v, options.gamma);
    }

    PolicyGradientTerms terms = PolicyGradientTerms::zeros(dim);
    double discount = 1.0;
    for (int t = 0; t < horizon; ++t) {
      terms.reward += discount * policy.param_vjp(states[t], nodes[t].jac.r_a);
      terms.deterministic += discount * policy.param_vjp(states[t], det_upstream[t]);
      discount *= options.gamma;
    }
    trajectories.push_back(std::move(terms));
  }
  return finish(std::move(trajectories), dim);
}

PolicyGradientEstimate policy_gradient_stochastic(const env::MixedMdp& env,
                                                  const FixedPolicy& policy,
                                                  const GradientOptions& options, Rng& rng) {
  check_gradient_options(options);
  const std::size_t dim = policy.param_count();
  const bool has_score = kernel_has_score(env);
  std::vector<PolicyGradientTerms> trajectories;

  for (int r = 0; r < options.rollouts; ++r) {
    PolicyGradientTerms terms = PolicyGradientTerms::zeros(dim);
    Vector s = env.reset(rng);
    double discount = 1.0;
    for (int t = 0; t < options.horizon; ++t) {
      const NodeDerivatives d = node_derivatives(env, policy, s, options.allow_finite_difference);
      if (d.f != 0.0) {
        throw UnsupportedCapability("policy_gradient_stochastic: f(s, mu(s)) = " +
                                    std::to_string(d.f) + " != 0");
      }
      const int remaining = options.horizon - t - 1;
      terms.reward += discount * policy.param_vjp(s, d.jac.r_a);
      if (has_score && remaining > 0) {
        const KernelSamples ks = sample_kernel(env, policy, d, s, remaining, true, options, rng);
        const Vector upstream = (options.gamma * (1.0 - d.f)) * ks.action_integral;
        terms.stochastic += discount * policy.param_vjp(s, upstream);
      }
      s = env.transition(s, d.action, rng).first;
      discount *= options.gamma;
    }
    trajectories.push_back(std::move(terms));
  }
  return finish(std::move(trajectories), dim);
}

Vector mixed_value_gradient(const env::MixedMdp& env, const FixedPolicy& policy, const Vector& s,
                            int horizon, const GradientOptions& options, Rng& rng) {
  Vector v = Vector::Zero(env.state_dim());
  if (horizon <= 0) return v;

  std::vector<Vector> chain;
  std::vector<NodeDerivatives> nodes;
  Vector x = s;
  for (int i = 0; i < horizon; ++i) {
    nodes.push_back(node_derivatives(env, policy, x, options.allow_finite_difference));
    chain.push_back(x);
    if (i + 1 < horizon) x = env.deterministic_map(x, nodes.back().action);
  }

  const bool has_score = kernel_has_score(env);
  for (int i = horizon - 1; i >= 0; --i) {
    const NodeDerivatives& d = nodes[i];
    const int remaining = horizon - i - 1;
    Vector next = value_gradient_step(d, v, options.gamma * d.f);

    const Vector mixing_total = d.jac.f_s + d.policy_jac.transpose() * d.jac.f_a;
    const bool mixing_varies = !mixing_total.isZero(0.0);
    const bool kernel_term = has_score && d.f != 1.0;
    if (remaining > 0 && (mixing_varies || kernel_term)) {
      const KernelSamples ks =
          sample_kernel(env, policy, d, chain[i], remaining, kernel_term, options, rng);
      if (mixing_varies) {
        const double v_det = mc_value(env, policy, env.deterministic_map(chain[i], d.action),
                                      options.gamma, remaining, options.value_rollouts, rng);
        next += (options.gamma * (v_det - ks.mean_value)) * mixing_total;
      }
      if (kernel_term) next += (options.gamma * (1.0 - d.f)) * ks.state_integral;
    }
    v = std::move(next);
  }
  return v;
}

PolicyGradientEstimate policy_gradient_general(const env::MixedMdp& env,
                                               const FixedPolicy& policy,
                                               const GradientOptions& options, Rng& rng) {
  check_gradient_options(options);
  const std::size_t dim = policy.param_count();
  const bool has_score = kernel_has_score(env);
  std::vector<PolicyGradientTerms> trajectories;

  for (int r = 0; r < options.rollouts; ++r) {
    PolicyGradientTerms terms = PolicyGradientTerms::zeros(dim);
    Vector s = env.reset(rng);
    double discount = 1.0;
    for (int t = 0; t < options.horizon; ++t) {
      const NodeDerivatives d = node_derivatives(env, policy, s, options.allow_finite_difference);
      const int remaining = options.horizon - t - 1;
      const Vector det_next = env.deterministic_map(s, d.action);

      terms.reward += discount * policy.param_vjp(s, d.jac.r_a);

      if (d.f != 0.0) {
        const Vector next_grad = mixed_value_gradient(env, policy, det_next, remaining, options, rng);
        const Vector upstream = deterministic_upstream(d, next_grad, options.gamma * d.f);
        terms.deterministic += discount * policy.param_vjp(s, upstream);
      }

      const bool kernel_term = has_score && d.f != 1.0;
      const bool mixing_varies = !d.jac.f_a.isZero(0.0);
      if (remaining > 0 && (kernel_term || mixing_varies)) {
        const KernelSamples ks = sample_kernel(env, policy, d, s, remaining, kernel_term, options, rng);
        if (kernel_term) {
          const Vector upstream = (options.gamma * (1.0 - d.f)) * ks.action_integral;
          terms.stochastic += discount * policy.param_vjp(s, upstream);
        }
        if (mixing_varies) {
          const double v_det = mc_value(env, policy, det_next, options.gamma, remaining,
                                        options.value_rollouts, rng);
          terms.mixing_deterministic +=
              discount * policy.param_vjp(s, (options.gamma * v_det) * d.jac.f_a);
          terms.mixing_stochastic +=
              discount * policy.param_vjp(s, (-options.gamma * ks.mean_value) * d.jac.f_a);
        }
      }

      s = env.transition(s, d.action, rng).first;
      discount *= options.gamma;
    }
    trajectories.push_back(std::move(terms));
  }
  return finish(std::move(trajectories), dim);
}

// ---------------------------------------------------------------------------
// Returns

double rollout_return(const env::MixedMdp& env, const FixedPolicy& policy, Vector s, double gamma,
                      int horizon, Rng& rng) {
  double total = 0.0;
  double discount = 1.0;
  for (int t = 0; t < horizon; ++t) {
    const Vector a = policy.act(s);
    total += discount * env.reward(s, a);
    if (t + 1 < horizon) s = env.transition(s, a, rng).first;
    discount *= gamma;
  }
  return total;
}

double mc_value(const env::MixedMdp& env, const FixedPolicy& policy, const Vector& s,
                double gamma, int horizon, int rollouts, Rng& rng) {
  if (horizon <= 0) return 0.0;
  double total = 0.0;
  for (int i = 0; i < rollouts; ++i) total += rollout_return(env, policy, s, gamma, horizon, rng);
  return total / rollouts;
}

namespace {

MonteCarloEstimate summarize(const std::vector<double>& xs) {
  MonteCarloEstimate est;
  est.samples = static_cast<int>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  est.mean = mean;
  if (xs.size() > 1) {
    const double var = ss / static_cast<double>(xs.size() - 1);
    est.std_error = std::sqrt(var / static_cast<double>(xs.size()));
  }
  return est;
}

}  // namespace

MonteCarloEstimate mc_return(const env::MixedMdp& env, const FixedPolicy& policy, double gamma,
                             int episodes, int horizon, Rng& rng) {
  require(episodes >= 1, "mc_return: episodes must be >= 1");
  std::vector<double> returns;
  returns.reserve(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    Vector s = env.reset(rng);
    returns.push_back(rollout_return(env, policy, std::move(s), gamma, horizon, rng));
  }
  return summarize(returns);
}

MonteCarloEstimate mc_return_augmented(const env::MixedMdp& env, const FixedPolicy& policy,
                                       double gamma, int episodes, int horizon, Rng& rng) {
  require(episodes >= 1, "mc_return_augmented: episodes must be >= 1");
  std::vector<double> returns;
  returns.reserve(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    Vector s = env.reset(rng);
    double total = 0.0;
    double discount = 1.0;
    for (int t = 0; t < horizon; ++t) {
      const Vector a = policy.act(s);
      total += discount * env.reward(s, a);
      if (t + 1 < horizon) s = env.augmented_map(s, a);
      discount *= gamma;
    }
    returns.push_back(total);
  }
  return summarize(returns);
}

}  // namespace gdpg::theory
