#include "gdpg/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace gdpg::env {

Jacobians MixedMdp::analytic_jacobians(const Vector&, const Vector&) const {
  throw UnsupportedCapability("environment '" + id() + "' has no analytic Jacobians");
}

KernelScore MixedMdp::kernel_score(const Vector&, const Vector&, const Vector&) const {
  throw UnsupportedCapability("environment '" + id() + "' has no closed-form kernel score");
}

bool MixedMdp::action_in_box(const Vector& a) const {
  return a.size() == action_dim() && (a.array() >= action_low().array()).all() &&
         (a.array() <= action_high().array()).all();
}

Vector MixedMdp::clip_action(const Vector& a) const {
  return a.cwiseMax(action_low()).cwiseMin(action_high());
}

void MixedMdp::check_inputs(const Vector& s, const Vector& a) const {
  if (s.size() != state_dim() || a.size() != action_dim()) {
    throw ContractViolation(id() + ": state/action dims " + std::to_string(s.size()) + "/" +
                            std::to_string(a.size()) + ", expected " +
                            std::to_string(state_dim()) + "/" + std::to_string(action_dim()));
  }
  require_finite(s, id() + " state");
  require_finite(a, id() + " action");
  if (!action_in_box(a)) throw ContractViolation(id() + ": action outside the action box");
}

std::pair<Vector, bool> MixedMdp::transition(const Vector& s, const Vector& a, Rng& rng) const {
  check_inputs(s, a);
  const double f = mixing_coeff(s, a);
  bool deterministic;
  if (f >= 1.0) {
    deterministic = true;
  } else if (f <= 0.0) {
    deterministic = false;
  } else {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    deterministic = u(rng) < f;
  }
  if (deterministic) return {deterministic_map(s, a), true};
  return {stochastic_sample(s, a, rng), false};
}

StepResult MixedMdp::step(const Vector& s, const Vector& a, Rng& rng) const {
  check_inputs(s, a);
  StepResult out;
  out.reward = reward(s, a);
  auto [next, det] = transition(s, a, rng);
  out.done = is_terminal(next);
  out.next_state = std::move(next);
  out.took_deterministic_branch = det;
  return out;
}

Vector MixedMdp::augmented_map(const Vector& s, const Vector& a) const {
  check_inputs(s, a);
  const double f = mixing_coeff(s, a);
  if (f >= 1.0) return deterministic_map(s, a);
  if (f <= 0.0) return stochastic_mean(s, a);
  return f * deterministic_map(s, a) + (1.0 - f) * stochastic_mean(s, a);
}

Jacobians finite_difference_jacobians(const MixedMdp& env, const Vector& s, const Vector& a,
                                      double h) {
  const int n = env.state_dim();
  const int m = env.action_dim();
  Jacobians j;
  j.t_s.resize(n, n);
  j.t_a.resize(n, m);
  j.r_s.resize(n);
  j.r_a.resize(m);
  j.f_s.resize(n);
  j.f_a.resize(m);
  for (int k = 0; k < n; ++k) {
    Vector sp = s, sm = s;
    sp[k] += h;
    sm[k] -= h;
    j.t_s.col(k) = (env.deterministic_map(sp, a) - env.deterministic_map(sm, a)) / (2 * h);
    j.r_s[k] = (env.reward(sp, a) - env.reward(sm, a)) / (2 * h);
    j.f_s[k] = (env.mixing_coeff(sp, a) - env.mixing_coeff(sm, a)) / (2 * h);
  }
  for (int k = 0; k < m; ++k) {
    Vector ap = a, am = a;
    ap[k] += h;
    am[k] -= h;
    j.t_a.col(k) = (env.deterministic_map(s, ap) - env.deterministic_map(s, am)) / (2 * h);
    j.r_a[k] = (env.reward(s, ap) - env.reward(s, am)) / (2 * h);
    j.f_a[k] = (env.mixing_coeff(s, ap) - env.mixing_coeff(s, am)) / (2 * h);
  }
  return j;
}

Jacobians jacobians(const MixedMdp& env, const Vector& s, const Vector& a,
                    bool allow_finite_difference) {
  if (env.has_analytic_jacobians()) return env.analytic_jacobians(s, a);
  if (!allow_finite_difference) {
    throw UnsupportedCapability("environment '" + env.id() + "' has no analytic Jacobians");
  }
  return finite_difference_jacobians(env, s, a);
}

// ---------------------------------------------------------------------------
// ComplexPoint

ComplexPointEnv::ComplexPointEnv(ComplexPointOptions options)
    : options_(options),
      low_(Vector::Constant(kDim, -kActionBound)),
      high_(Vector::Constant(kDim, kActionBound)) {
  require(options_.termination_radius >= 0.0, "complex_point: negative termination radius");
  require(options_.max_steps > 0, "complex_point: max_steps must be positive");
}

Vector ComplexPointEnv::reset(Rng& rng) const {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector s(kDim);
  for (int i = 0; i < kDim; ++i) s[i] = u(rng);
  return s;
}

Vector ComplexPointEnv::deterministic_map(const Vector& s, const Vector& a) const { return s + a; }

double ComplexPointEnv::mixing_coeff(const Vector&, const Vector& a) const {
  if (options_.force_deterministic) return 1.0;
  return std::clamp(a.squaredNorm() / kMixingScale, 0.0, 1.0);
}

Vector ComplexPointEnv::stochastic_sample(const Vector&, const Vector&, Rng& rng) const {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector s(kDim);
  for (int i = 0; i < kDim; ++i) s[i] = u(rng);
  return s;
}

Vector ComplexPointEnv::stochastic_mean(const Vector&, const Vector&) const {
  return Vector::Zero(kDim);
}

double ComplexPointEnv::reward(const Vector& s, const Vector& a) const { return -(s + a).norm(); }

bool ComplexPointEnv::is_terminal(const Vector& next_state) const {
  return next_state.norm() < options_.termination_radius;
}

Jacobians ComplexPointEnv::analytic_jacobians(const Vector& s, const Vector& a) const {
  check_inputs(s, a);
  Jacobians j;
  j.t_s = Matrix::Identity(kDim, kDim);
  j.t_a = Matrix::Identity(kDim, kDim);
  const Vector x = s + a;
  const double norm = x.norm();
  j.r_s = norm > 0.0 ? Vector(-x / norm) : Vector::Zero(kDim);
  j.r_a = j.r_s;
  j.f_s = Vector::Zero(kDim);
  // Zero where the clamp at 1 is active (only reachable at the exact corners).
  const double raw = a.squaredNorm() / kMixingScale;
  j.f_a = (options_.force_deterministic || raw > 1.0) ? Vector::Zero(kDim)
                                                      : Vector(2.0 * a / kMixingScale);
  return j;
}

KernelScore ComplexPointEnv::kernel_score(const Vector&, const Vector&, const Vector&) const {
  return {Vector::Zero(kDim), Vector::Zero(kDim)};
}

// ---------------------------------------------------------------------------
// Linear example

LinearExample1Env::LinearExample1Env()
    : low_(Vector::Constant(2, -std::numeric_limits<double>::infinity())),
      high_(Vector::Constant(2, std::numeric_limits<double>::infinity())) {}

Vector LinearExample1Env::reset(Rng& rng) const {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return Vector{{u(rng), u(rng)}};
}

Vector LinearExample1Env::deterministic_map(const Vector& s, const Vector& a) const {
  const double common = 2.0 * s[0] + 2.0 * s[1];
  return Vector{{common + a[0], common + a[1]}};
}

Vector LinearExample1Env::stochastic_sample(const Vector& s, const Vector& a, Rng&) const {
  return deterministic_map(s, a);
}

Vector LinearExample1Env::stochastic_mean(const Vector& s, const Vector& a) const {
  return deterministic_map(s, a);
}

double LinearExample1Env::reward(const Vector& s, const Vector& a) const { return -s.dot(a); }

Jacobians LinearExample1Env::analytic_jacobians(const Vector& s, const Vector& a) const {
  check_inputs(s, a);
  Jacobians j;
  j.t_s = Matrix::Constant(2, 2, 2.0);
  j.t_a = Matrix::Identity(2, 2);
  j.r_s = -a;
  j.r_a = -s;
  j.f_s = Vector::Zero(2);
  j.f_a = Vector::Zero(2);
  return j;
}

// ---------------------------------------------------------------------------
// Pendulum

namespace {
double angle_normalize(double x) {
  constexpr double pi = std::numbers::pi;
  return std::fmod(std::fmod(x + pi, 2 * pi) + 2 * pi, 2 * pi) - pi;
}
}  // namespace

PendulumEnv::PendulumEnv()
    : low_(Vector::Constant(1, -kMaxTorque)), high_(Vector::Constant(1, kMaxTorque)) {}

Vector PendulumEnv::reset(Rng& rng) const {
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> speed(-1.0, 1.0);
  const double phi = angle(rng);
  const double phidot = speed(rng);
  return Vector{{std::cos(phi), std::sin(phi), phidot}};
}

Vector PendulumEnv::deterministic_map(const Vector& s, const Vector& a) const {
  const double phi = std::atan2(s[1], s[0]);
  const double u = std::clamp(a[0], -kMaxTorque, kMaxTorque);
  double phidot = s[2] + (3.0 * kGravity / (2.0 * kLength) * std::sin(phi) +
                          3.0 / (kMass * kLength * kLength) * u) *
                             kDt;
  phidot = std::clamp(phidot, -kMaxSpeed, kMaxSpeed);
  const double next_phi = phi + phidot * kDt;
  return Vector{{std::cos(next_phi), std::sin(next_phi), phidot}};
}

Vector PendulumEnv::stochastic_sample(const Vector& s, const Vector& a, Rng&) const {
  return deterministic_map(s, a);
}

Vector PendulumEnv::stochastic_mean(const Vector& s, const Vector& a) const {
  return deterministic_map(s, a);
}

double PendulumEnv::reward(const Vector& s, const Vector& a) const {
  const double phi = angle_normalize(std::atan2(s[1], s[0]));
  const double u = std::clamp(a[0], -kMaxTorque, kMaxTorque);
  return -(phi * phi + 0.1 * s[2] * s[2] + 0.001 * u * u);
}

// ---------------------------------------------------------------------------
// Quadratic

QuadraticConvexEnv::QuadraticConvexEnv(QuadraticConvexOptions options) : options_(options) {
  const int n = options_.dim;
  require(n > 0, "quadratic_convex: dim must be positive");
  require(options_.mixing >= 0.0 && options_.mixing <= 1.0,
          "quadratic_convex: mixing must lie in [0, 1]");
  require(options_.noise_sigma > 0.0, "quadratic_convex: noise_sigma must be positive");
  require(options_.reward_sign == 1.0 || options_.reward_sign == -1.0,
          "quadratic_convex: reward_sign must be +1 or -1");
  // Row absolute sums <= 0.85 bound the spectral norm below 1.
  a_ = 0.6 * Matrix::Identity(n, n);
  for (int i = 0; i + 1 < n; ++i) {
    a_(i, i + 1) = 0.15;
    a_(i + 1, i) = -0.1;
  }
  b_ = 0.5 * Matrix::Identity(n, n);
  q_ = Matrix::Identity(n, n);
  r_ = 0.1 * Matrix::Identity(n, n);
  low_ = Vector::Constant(n, -std::numeric_limits<double>::infinity());
  high_ = Vector::Constant(n, std::numeric_limits<double>::infinity());
}

Vector QuadraticConvexEnv::reset(Rng& rng) const {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector s(options_.dim);
  for (int i = 0; i < options_.dim; ++i) s[i] = u(rng);
  return s;
}

Vector QuadraticConvexEnv::deterministic_map(const Vector& s, const Vector& a) const {
  return a_ * s + b_ * a;
}

Vector QuadraticConvexEnv::stochastic_sample(const Vector& s, const Vector& a, Rng& rng) const {
  std::normal_distribution<double> noise(0.0, options_.noise_sigma);
  Vector out = deterministic_map(s, a);
  for (int i = 0; i < options_.dim; ++i) out[i] += noise(rng);
  return out;
}

Vector QuadraticConvexEnv::stochastic_mean(const Vector& s, const Vector& a) const {
  return deterministic_map(s, a);
}

double QuadraticConvexEnv::reward(const Vector& s, const Vector& a) const {
  return options_.reward_sign * (s.dot(q_ * s) + a.dot(r_ * a));
}

Jacobians QuadraticConvexEnv::analytic_jacobians(const Vector& s, const Vector& a) const {
  check_inputs(s, a);
  Jacobians j;
  j.t_s = a_;
  j.t_a = b_;
  j.r_s = options_.reward_sign * (q_ + q_.transpose()) * s;
  j.r_a = options_.reward_sign * (r_ + r_.transpose()) * a;
  j.f_s = Vector::Zero(options_.dim);
  j.f_a = Vector::Zero(options_.dim);
  return j;
}

KernelScore QuadraticConvexEnv::kernel_score(const Vector& s, const Vector& a,
                                             const Vector& next) const {
  const double var = options_.noise_sigma * options_.noise_sigma;
  const Vector residual = (next - deterministic_map(s, a)) / var;
  return {a_.transpose() * residual, b_.transpose() * residual};
}

// ---------------------------------------------------------------------------

std::unique_ptr<MixedMdp> make_env(const std::string& id, const EnvOptions& options) {
  if (id == "complex_point") return std::make_unique<ComplexPointEnv>(options.complex_point);
  if (id == "linear_example1") return std::make_unique<LinearExample1Env>();
  if (id == "pendulum") return std::make_unique<PendulumEnv>();
  if (id == "quadratic_convex") return std::make_unique<QuadraticConvexEnv>(options.quadratic);
  throw ContractViolation("unknown environment id '" + id + "'");
}

std::vector<std::string> env_ids() {
  return {"complex_point", "linear_example1", "pendulum", "quadratic_convex"};
}

}  // namespace gdpg::env
