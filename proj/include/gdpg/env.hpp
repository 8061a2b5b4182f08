#ifndef GDPG_ENV_HPP
#define GDPG_ENV_HPP

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "gdpg/linalg.hpp"

namespace gdpg::env {

using Rng = std::mt19937_64;

struct StepResult {
  Vector next_state;
  double reward = 0.0;
  /// True only for genuine termination; the episode time limit is the
  /// caller's business.
  bool done = false;
  bool took_deterministic_branch = false;
};

/// Partial derivatives at (s, a), standard (numerator) layout:
/// t_s(i, j) = dT_i/ds_j, t_a(i, j) = dT_i/da_j.
struct Jacobians {
  Matrix t_s;
  Matrix t_a;
  Vector r_s;
  Vector r_a;
  Vector f_s;
  Vector f_a;
};

/// How the stochastic kernel p(.|s, a) depends on its arguments.
enum class KernelKind {
  /// p does not depend on (s, a); both score functions vanish.
  independent,
  /// Has a closed-form score d log p(s'|s,a) / d(s, a).
  analytic_score,
};

struct KernelScore {
  Vector wrt_state;
  Vector wrt_action;
};

/// Next state is T(s, a) with probability f(s, a), otherwise a draw from
/// p(.|s, a).
class MixedMdp {
 public:
  virtual ~MixedMdp() = default;

  virtual std::string id() const = 0;
  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual const Vector& action_low() const = 0;
  virtual const Vector& action_high() const = 0;
  virtual int max_episode_steps() const = 0;

  /// Draws s0 from p0.
  virtual Vector reset(Rng& rng) const = 0;
  virtual Vector deterministic_map(const Vector& s, const Vector& a) const = 0;
  /// f(s, a), always in [0, 1].
  virtual double mixing_coeff(const Vector& s, const Vector& a) const = 0;
  virtual Vector stochastic_sample(const Vector& s, const Vector& a, Rng& rng) const = 0;
  /// E[p(.|s, a)].
  virtual Vector stochastic_mean(const Vector& s, const Vector& a) const = 0;
  virtual double reward(const Vector& s, const Vector& a) const = 0;
  virtual bool is_terminal(const Vector& /*next_state*/) const { return false; }

  virtual bool has_analytic_jacobians() const { return false; }
  /// Throws UnsupportedCapability unless has_analytic_jacobians().
  virtual Jacobians analytic_jacobians(const Vector& s, const Vector& a) const;

  virtual KernelKind kernel_kind() const { return KernelKind::independent; }
  /// Throws UnsupportedCapability for kernels without a closed-form score.
  virtual KernelScore kernel_score(const Vector& s, const Vector& a, const Vector& next) const;

  /// True when f == 1 everywhere.
  virtual bool fully_deterministic() const { return false; }

  /// Samples the mixture. Draws the Bernoulli branch only when 0 < f < 1,
  /// so f == 0 and f == 1 consume no branch randomness.
  std::pair<Vector, bool> transition(const Vector& s, const Vector& a, Rng& rng) const;

  StepResult step(const Vector& s, const Vector& a, Rng& rng) const;

  /// T*(s, a) = f T(s, a) + (1 - f) E[p(.|s, a)].
  Vector augmented_map(const Vector& s, const Vector& a) const;

  bool action_in_box(const Vector& a) const;
  Vector clip_action(const Vector& a) const;

 protected:
  void check_inputs(const Vector& s, const Vector& a) const;
};

/// Central differences of T, r and f in s and a.
Jacobians finite_difference_jacobians(const MixedMdp& env, const Vector& s, const Vector& a,
                                      double h = 1e-6);

/// Analytic forms if the environment has them, finite differences otherwise.
Jacobians jacobians(const MixedMdp& env, const Vector& s, const Vector& a,
                    bool allow_finite_difference);

struct ComplexPointOptions {
  double termination_radius = 0.05;
  int max_steps = 100;
  /// Forces f == 1 (the stochastic branch never fires).
  bool force_deterministic = false;
};

/// 5-D point mass: T(s, a) = s + a, f(s, a) = |a|^2 / 0.05, stochastic
/// branch uniform on [-1, 1]^5, r(s, a) = -|s + a|.
class ComplexPointEnv final : public MixedMdp {
 public:
  static constexpr int kDim = 5;
  static constexpr double kActionBound = 0.1;
  static constexpr double kMixingScale = 0.05;

  explicit ComplexPointEnv(ComplexPointOptions options = {});

  std::string id() const override { return "complex_point"; }
  int state_dim() const override { return kDim; }
  int action_dim() const override { return kDim; }
  const Vector& action_low() const override { return low_; }
  const Vector& action_high() const override { return high_; }
  int max_episode_steps() const override { return options_.max_steps; }

  Vector reset(Rng& rng) const override;
  Vector deterministic_map(const Vector& s, const Vector& a) const override;
  double mixing_coeff(const Vector& s, const Vector& a) const override;
  Vector stochastic_sample(const Vector& s, const Vector& a, Rng& rng) const override;
  Vector stochastic_mean(const Vector& s, const Vector& a) const override;
  double reward(const Vector& s, const Vector& a) const override;
  bool is_terminal(const Vector& next_state) const override;

  bool has_analytic_jacobians() const override { return true; }
  Jacobians analytic_jacobians(const Vector& s, const Vector& a) const override;
  KernelScore kernel_score(const Vector& s, const Vector& a, const Vector& next) const override;
  bool fully_deterministic() const override { return options_.force_deterministic; }

  const ComplexPointOptions& options() const { return options_; }

 private:
  ComplexPointOptions options_;
  Vector low_;
  Vector high_;
};

/// Two-dimensional linear system whose value gradient diverges for gamma >= 1/4
/// under a constant policy: T(s, a) = (2s1 + 2s2 + a1, 2s1 + 2s2 + a2),
/// r(s, a) = -s.a, f == 1.
class LinearExample1Env final : public MixedMdp {
 public:
  LinearExample1Env();

  std::string id() const override { return "linear_example1"; }
  int state_dim() const override { return 2; }
  int action_dim() const override { return 2; }
  const Vector& action_low() const override { return low_; }
  const Vector& action_high() const override { return high_; }
  int max_episode_steps() const override { return 20; }

  Vector reset(Rng& rng) const override;
  Vector deterministic_map(const Vector& s, const Vector& a) const override;
  double mixing_coeff(const Vector&, const Vector&) const override { return 1.0; }
  Vector stochastic_sample(const Vector& s, const Vector& a, Rng& rng) const override;
  Vector stochastic_mean(const Vector& s, const Vector& a) const override;
  double reward(const Vector& s, const Vector& a) const override;

  bool has_analytic_jacobians() const override { return true; }
  Jacobians analytic_jacobians(const Vector& s, const Vector& a) const override;
  bool fully_deterministic() const override { return true; }

 private:
  Vector low_;
  Vector high_;
};

/// Rigid pendulum with observation (cos phi, sin phi, phi_dot), torque in
/// [-2, 2], g = 10, m = l = 1, dt = 0.05, speed clipped to +-8.
class PendulumEnv final : public MixedMdp {
 public:
  static constexpr double kGravity = 10.0;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;
  static constexpr double kDt = 0.05;
  static constexpr double kMaxSpeed = 8.0;
  static constexpr double kMaxTorque = 2.0;

  PendulumEnv();

  std::string id() const override { return "pendulum"; }
  int state_dim() const override { return 3; }
  int action_dim() const override { return 1; }
  const Vector& action_low() const override { return low_; }
  const Vector& action_high() const override { return high_; }
  int max_episode_steps() const override { return 200; }

  Vector reset(Rng& rng) const override;
  Vector deterministic_map(const Vector& s, const Vector& a) const override;
  double mixing_coeff(const Vector&, const Vector&) const override { return 1.0; }
  Vector stochastic_sample(const Vector& s, const Vector& a, Rng& rng) const override;
  Vector stochastic_mean(const Vector& s, const Vector& a) const override;
  double reward(const Vector& s, const Vector& a) const override;
  bool fully_deterministic() const override { return true; }

 private:
  Vector low_;
  Vector high_;
};

struct QuadraticConvexOptions {
  int dim = 3;
  /// Constant probability of the noiseless branch.
  double mixing = 0.5;
  double noise_sigma = 0.3;
  /// +1 gives r = s'Qs + a'Ra (value convex in s); -1 gives the concave
  /// cost-as-negative-reward form.
  double reward_sign = 1.0;
  int max_steps = 50;
};

/// Linear dynamics T(s, a) = A s + B a with a Gaussian stochastic branch
/// N(A s + B a, sigma^2 I) and quadratic reward. A has spectral norm < 1.
class QuadraticConvexEnv final : public MixedMdp {
 public:
  explicit QuadraticConvexEnv(QuadraticConvexOptions options = {});

  std::string id() const override { return "quadratic_convex"; }
  int state_dim() const override { return options_.dim; }
  int action_dim() const override { return options_.dim; }
  const Vector& action_low() const override { return low_; }
  const Vector& action_high() const override { return high_; }
  int max_episode_steps() const override { return options_.max_steps; }

  Vector reset(Rng& rng) const override;
  Vector deterministic_map(const Vector& s, const Vector& a) const override;
  double mixing_coeff(const Vector&, const Vector&) const override { return options_.mixing; }
  Vector stochastic_sample(const Vector& s, const Vector& a, Rng& rng) const override;
  Vector stochastic_mean(const Vector& s, const Vector& a) const override;
  double reward(const Vector& s, const Vector& a) const override;

  bool has_analytic_jacobians() const override { return true; }
  Jacobians analytic_jacobians(const Vector& s, const Vector& a) const override;
  KernelKind kernel_kind() const override { return KernelKind::analytic_score; }
  KernelScore kernel_score(const Vector& s, const Vector& a, const Vector& next) const override;
  bool fully_deterministic() const override { return options_.mixing == 1.0; }

  const Matrix& a_matrix() const { return a_; }
  const Matrix& b_matrix() const { return b_; }
  const Matrix& q_matrix() const { return q_; }
  const Matrix& r_matrix() const { return r_; }
  const QuadraticConvexOptions& options() const { return options_; }

 private:
  QuadraticConvexOptions options_;
  Matrix a_, b_, q_, r_;
  Vector low_, high_;
};

struct EnvOptions {
  ComplexPointOptions complex_point;
  QuadraticConvexOptions quadratic;
};

/// "complex_point", "linear_example1", "pendulum", "quadratic_convex".
std::unique_ptr<MixedMdp> make_env(const std::string& id, const EnvOptions& options = {});
std::vector<std::string> env_ids();

}  // namespace gdpg::env

#endif  // GDPG_ENV_HPP
