#ifndef GDPG_THEORY_HPP
#define GDPG_THEORY_HPP

#include <limits>
#include <optional>
#include <variant>
#include <vector>

#include "gdpg/env.hpp"
#include "gdpg/linalg.hpp"
#include "gdpg/mlp.hpp"

/// Numerical checks of policy-gradient existence for mixed deterministic /
/// stochastic transitions.
///
/// Conventions used throughout:
///  * Jacobians are in numerator layout (J(i, j) = dT_i/ds_j). Chain products
///    are stored transposed so that grad V(s) = sum_t gamma^t g_t grad r_t
///    with g_t a left-to-right product.
///  * Rollouts run a fixed horizon and ignore episode termination; the
///    objective is J_H = E[sum_{t<H} gamma^t r(s_t, mu(s_t))] with s_0 ~ p0.
///  * Value gradients along a rollout use total derivatives, i.e. they
///    include the policy's own dependence on the state.
namespace gdpg::theory {

using env::Rng;

/// A deterministic policy whose parameters are either the action itself
/// (mu(s) = theta) or the weights of an actor network.
class FixedPolicy {
 public:
  static FixedPolicy constant(Vector theta);
  static FixedPolicy network(nn::Mlp actor);

  Vector act(const Vector& s) const;
  /// d mu / d s, action_dim x state_dim.
  Matrix state_jacobian(const Vector& s, int state_dim) const;
  /// d(upstream . mu(s)) / d theta, flattened.
  Vector param_vjp(const Vector& s, const Vector& upstream) const;

  std::size_t param_count() const;
  Vector parameters() const;
  FixedPolicy with_parameters(const Vector& flat) const;
  bool is_constant() const { return std::holds_alternative<Vector>(impl_); }
  const nn::Mlp* actor() const { return std::get_if<nn::Mlp>(&impl_); }

 private:
  explicit FixedPolicy(std::variant<Vector, nn::Mlp> impl) : impl_(std::move(impl)) {}
  std::variant<Vector, nn::Mlp> impl_;
};

// ---------------------------------------------------------------------------
// Two-dimensional linear example

struct SeriesResult {
  Vector partial_sum;
  bool diverged = false;
};

/// -(I + sum_{k=1..terms} gamma^k [[2^{2k-1}, 2^{2k-1}], [2^{2k-1}, 2^{2k-1}]]) theta.
/// `diverged` is set once any entry of the matrix partial sum or of the
/// result exceeds 1e12 in magnitude; summation stops there.
SeriesResult example1_grad_value(const Vector& theta, double gamma, int terms);

enum class SeriesVerdict { converged, diverged };

/// Cauchy test on the series above: compares partial sums at `terms` and
/// 2 * `terms`.
SeriesVerdict example1_verdict(double gamma, int terms = 1000);

inline constexpr double kDivergenceThreshold = 1e12;

// ---------------------------------------------------------------------------
// Convergence analysis

struct JacobianChain {
  /// f(s_i, mu(s_i)) * (d_s T(s_i, mu(s_i)))^T for each visited state.
  std::vector<Matrix> matrices;
  /// matrices[0] * matrices[1] * ... (left to right).
  Matrix product;

  void push(const Matrix& m);
};

struct ConvergenceReport {
  int n = 0;
  double c = 0.0;
  /// 1 / (n c); +infinity when c == 0.
  double gamma_threshold = std::numeric_limits<double>::infinity();
  double max_mixing = 0.0;
  /// max_s f(s, mu(s)) <= 1 / (n c)
  bool cond_a1 = false;
  double a1_margin = 0.0;
  /// Every sampled chain product has spectral radius <= 1 (+1e-9).
  bool cond_a2 = false;
  double worst_chain_radius = 0.0;
  bool radii_converged = true;
  int samples_used = 0;
  int chains_used = 0;
  bool finite_difference_jacobians = false;

  /// Discount below which existence is guaranteed for this policy:
  /// 1 / (n c max f), +infinity when either factor vanishes.
  double general_gamma_threshold() const;
};

/// Samples `state_samples` on-policy chains of up to `chain_length` states
/// each, starting from p0. c and max f are taken over every visited state;
/// A.2 is checked on every prefix product of each chain.
ConvergenceReport convergence_report(const env::MixedMdp& env, const FixedPolicy& policy,
                                     int state_samples, int chain_length, Rng& rng,
                                     bool allow_finite_difference = false);

// ---------------------------------------------------------------------------
// Value and policy gradients

/// Truncated series sum_{t<horizon} gamma^t g(s, t) grad_s r(s_t, mu(s_t))
/// along the deterministic rollout from s, built from an explicit
/// JacobianChain. Requires a fully deterministic environment.
Vector series_grad_value(const env::MixedMdp& env, const FixedPolicy& policy, const Vector& s,
                         double gamma, int horizon, bool allow_finite_difference = false);

/// Parameter-space gradient split into the five contributions of the general
/// policy-gradient form. All are flattened parameter vectors.
struct PolicyGradientTerms {
  /// grad_theta mu . grad_a r
  Vector reward;
  /// gamma f grad_theta mu . grad_a T . grad V(T(s, a))
  Vector deterministic;
  /// gamma (1 - f) int grad_theta mu . grad_a p(s'|s, a) V(s') ds'
  Vector stochastic;
  /// gamma grad_theta f . V(T(s, a))
  Vector mixing_deterministic;
  /// -gamma grad_theta f . int p(s'|s, a) V(s') ds'
  Vector mixing_stochastic;

  static PolicyGradientTerms zeros(std::size_t dim);
  Vector total() const;
  PolicyGradientTerms& operator+=(const PolicyGradientTerms& other);
  PolicyGradientTerms& operator*=(double s);
  bool operator==(const PolicyGradientTerms& other) const = default;
};

struct PolicyGradientEstimate {
  /// Average over trajectories.
  PolicyGradientTerms mean;
  /// Per-trajectory sums of gamma^t-weighted terms.
  std::vector<PolicyGradientTerms> trajectories;

  Vector gradient() const { return mean.total(); }
};

struct GradientOptions {
  double gamma = 0.9;
  int rollouts = 16;
  int horizon = 50;
  /// Samples s' ~ p(.|s, a) per stochastic-branch integral.
  int mc_next_states = 8;
  /// Rollouts averaged per Monte-Carlo value estimate.
  int value_rollouts = 32;
  bool allow_finite_difference = false;
};

/// Closed-form gradient for fully deterministic environments. Exact gradient
/// of J_H over the sampled start states: along each trajectory,
/// sum_t gamma^t grad_theta mu(s_t) (grad_a r + gamma grad_a T grad V(s_{t+1})).
PolicyGradientEstimate policy_gradient_deterministic(const env::MixedMdp& env,
                                                     const FixedPolicy& policy,
                                                     const GradientOptions& options, Rng& rng);

/// DPG-style estimator for environments whose transitions are purely
/// stochastic (f == 0): reward term plus the likelihood-ratio estimate of
/// the kernel term.
PolicyGradientEstimate policy_gradient_stochastic(const env::MixedMdp& env,
                                                  const FixedPolicy& policy,
                                                  const GradientOptions& options, Rng& rng);

/// Estimator of the general mixed-transition form. The integrals over p are
/// Monte-Carlo estimates; grad_a p uses the likelihood ratio when the kernel
/// has an analytic score and vanishes for action-independent kernels. Terms
/// whose coefficient is exactly zero are skipped, consuming no randomness,
/// so f == 1 and f == 0 reproduce the specialized estimators exactly.
PolicyGradientEstimate policy_gradient_general(const env::MixedMdp& env,
                                               const FixedPolicy& policy,
                                               const GradientOptions& options, Rng& rng);

/// Gradient of the remaining-horizon value at s in a mixed environment,
/// recursing along the deterministic branch (the f-weighted chain) with
/// Monte-Carlo value estimates for the mixing and kernel terms.
Vector mixed_value_gradient(const env::MixedMdp& env, const FixedPolicy& policy, const Vector& s,
                            int horizon, const GradientOptions& options, Rng& rng);

// ---------------------------------------------------------------------------
// Returns

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  int samples = 0;
};

/// Discounted return of a rollout of `horizon` steps from s on the mixed
/// transitions.
double rollout_return(const env::MixedMdp& env, const FixedPolicy& policy, Vector s, double gamma,
                      int horizon, Rng& rng);

/// Average of `rollouts` rollout_return calls from s.
double mc_value(const env::MixedMdp& env, const FixedPolicy& policy, const Vector& s,
                double gamma, int horizon, int rollouts, Rng& rng);

/// J estimated over `episodes` start states drawn from p0.
MonteCarloEstimate mc_return(const env::MixedMdp& env, const FixedPolicy& policy, double gamma,
                             int episodes, int horizon, Rng& rng);

/// J* estimated by rolling the deterministic augmented map T*(s, a).
MonteCarloEstimate mc_return_augmented(const env::MixedMdp& env, const FixedPolicy& policy,
                                       double gamma, int episodes, int horizon, Rng& rng);

}  // namespace gdpg::theory

#endif  // GDPG_THEORY_HPP
