#include "gdpg/agent.hpp"

#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <mutex>
#include <unordered_set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace gdpg::agent {

Mode parse_mode(const std::string& name) {
  if (name == "gdpg") return Mode::gdpg;
  if (name == "ddpg") return Mode::ddpg;
  if (name == "mdpg") return Mode::mdpg;
  if (name == "augmented_only") return Mode::augmented_only;
  throw ContractViolation("unknown mode '" + name + "'");
}

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::gdpg: return "gdpg";
    case Mode::ddpg: return "ddpg";
    case Mode::mdpg: return "mdpg";
    case Mode::augmented_only: return "augmented_only";
  }
  return "?";
}

NoiseKind parse_noise(const std::string& name) {
  if (name == "ou" || name == "ornstein_uhlenbeck") return NoiseKind::ornstein_uhlenbeck;
  if (name == "gaussian") return NoiseKind::gaussian;
  throw ContractViolation("unknown noise kind '" + name + "'");
}

std::string to_string(NoiseKind kind) {
  return kind == NoiseKind::gaussian ? "gaussian" : "ou";
}

// ---------------------------------------------------------------------------
// Config

double GdpgConfig::q_weight() const {
  switch (mode) {
    case Mode::gdpg: return alpha;
    case Mode::ddpg: return 1.0;
    case Mode::mdpg:
    case Mode::augmented_only: return 0.0;
  }
  return 0.0;
}

double GdpgConfig::q_star_weight() const {
  switch (mode) {
    case Mode::gdpg: return 1.0 - alpha;
    case Mode::ddpg: return 0.0;
    case Mode::mdpg:
    case Mode::augmented_only: return 1.0;
  }
  return 0.0;
}

bool GdpgConfig::trains_q() const {
  if (mode == Mode::augmented_only) return false;
  // Mirrors trains_auxiliary(): a zero-weight Q never reaches the actor.
  return mode != Mode::gdpg || alpha != 0.0;
}

bool GdpgConfig::trains_auxiliary() const {
  if (!aux_updates || mode == Mode::ddpg) return false;
  // With a zero weight on Q* the auxiliary nets cannot reach the actor.
  return mode == Mode::mdpg || q_star_weight() != 0.0;
}

void GdpgConfig::validate() const {
  require(std::isfinite(alpha) && alpha >= 0.0, "alpha must be finite and >= 0");
  require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
  require(tau > 0.0 && tau <= 1.0, "tau must lie in (0, 1]");
  require(batch_size >= 1, "batch_size must be positive");
  require(actor_lr > 0.0 && critic_lr > 0.0 && transition_lr > 0.0,
          "learning rates must be positive");
  require(std::isfinite(transition_l2_coeff) && transition_l2_coeff >= 0.0,
          "transition_l2_coeff must be >= 0");
  require(buffer_capacity >= batch_size, "buffer_capacity must be at least batch_size");
  require(warmup_steps >= 0, "warmup_steps must be >= 0");
  require(total_steps >= 0, "total_steps must be >= 0");
  require(!hidden.empty(), "at least one hidden layer is required");
  for (int h : hidden) require(h >= 1, "hidden layer sizes must be positive");
  require(ou_theta >= 0.0 && ou_sigma >= 0.0 && gaussian_sigma >= 0.0,
          "noise parameters must be >= 0");
}

// ---------------------------------------------------------------------------
// Replay

Batch Batch::from(const std::vector<Transition>& transitions) {
  require(!transitions.empty(), "empty batch");
  const auto n = static_cast<Eigen::Index>(transitions.size());
  const auto sd = transitions[0].state.size();
  const auto ad = transitions[0].action.size();
  Batch b;
  b.states.resize(sd, n);
  b.actions.resize(ad, n);
  b.rewards.resize(n);
  b.next_states.resize(sd, n);
  b.done.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = transitions[static_cast<std::size_t>(i)];
    b.states.col(i) = t.state;
    b.actions.col(i) = t.action;
    b.rewards(i) = t.reward;
    b.next_states.col(i) = t.next_state;
    b.done(i) = t.done ? 1.0 : 0.0;
  }
  return b;
}

ReplayBuffer::ReplayBuffer(long capacity) : capacity_(capacity) {
  require(capacity >= 1, "buffer capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (size_ < capacity_) {
    ring_.push_back(std::move(t));
    ++size_;
    return;
  }
  ring_[static_cast<std::size_t>(head_)] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(long i) const {
  require(i >= 0 && i < size_, "replay index out of range");
  return ring_[static_cast<std::size_t>((head_ + i) % capacity_)];
}

std::vector<long> ReplayBuffer::sample_indices(int n, Rng& rng) const {
  require(n >= 1 && n <= size_, "cannot sample more transitions than stored");
  // Floyd's algorithm: n distinct indices in n draws.
  std::vector<long> picked;
  picked.reserve(static_cast<std::size_t>(n));
  std::unordered_set<long> seen;
  seen.reserve(static_cast<std::size_t>(n) * 2);
  for (long j = size_ - n; j < size_; ++j) {
    const long t = std::uniform_int_distribution<long>(0, j)(rng);
    const long pick = seen.count(t) ? j : t;
    seen.insert(pick);
    picked.push_back(pick);
  }
  return picked;
}

Batch ReplayBuffer::sample(int n, Rng& rng) const {
  const auto idx = sample_indices(n, rng);
  const auto& first = at(idx[0]);
  const auto sd = first.state.size();
  const auto ad = first.action.size();
  Batch b;
  b.states.resize(sd, n);
  b.actions.resize(ad, n);
  b.rewards.resize(n);
  b.next_states.resize(sd, n);
  b.done.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto& t = at(idx[static_cast<std::size_t>(i)]);
    b.states.col(i) = t.state;
    b.actions.col(i) = t.action;
    b.rewards(i) = t.reward;
    b.next_states.col(i) = t.next_state;
    b.done(i) = t.done ? 1.0 : 0.0;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Noise

NoiseProcess::NoiseProcess(NoiseKind kind, int dim, double theta, double sigma, double dt)
    : kind_(kind), theta_(theta), sigma_(sigma), dt_(dt), x_(Vector::Zero(dim)) {}

void NoiseProcess::reset() { x_.setZero(); }

Vector NoiseProcess::sample(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  if (kind_ == NoiseKind::gaussian) {
    for (Eigen::Index i = 0; i < x_.size(); ++i) x_(i) = sigma_ * normal(rng);
    return x_;
  }
  const double diffusion = sigma_ * std::sqrt(dt_);
  for (Eigen::Index i = 0; i < x_.size(); ++i)
    x_(i) += -theta_ * x_(i) * dt_ + diffusion * normal(rng);
  return x_;
}

// ---------------------------------------------------------------------------
// Agent

Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x9d2c5680u};
  return Rng(seq);
}

namespace {

enum Stream : std::uint64_t {
  kActorInit = 1,
  kCriticInit,
  kAugCriticInit,
  kTransitionInit,
  kNoise,
  kSample,
  kEnv,
};

std::vector<int> sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

Matrix stack(const Matrix& top, const Matrix& bottom) {
  Matrix m(top.rows() + bottom.rows(), top.cols());
  m << top, bottom;
  return m;
}

void check_loss(double loss, const char* what) {
  if (!std::isfinite(loss)) throw TrainingHalt(std::string("non-finite ") + what + " loss");
}

void step_or_halt(nn::ParamSet& params, const nn::ParamSet& grads, nn::AdamState& opt,
                  const char* what) {
  try {
    nn::adam_step(params, grads, opt);
  } catch (const nn::NumericalFailure&) {
    throw TrainingHalt(std::string("non-finite ") + what + " gradient");
  }
}

}  // namespace

GdpgAgent::GdpgAgent(const env::MixedMdp& env, GdpgConfig config, std::uint64_t seed)
    : config_(std::move(config)),
      state_dim_(env.state_dim()),
      action_dim_(env.action_dim()),
      action_low_(env.action_low()),
      action_high_(env.action_high()),
      buffer_(config_.buffer_capacity),
      noise_(config_.noise, env.action_dim(),
             config_.ou_theta,
             config_.noise == NoiseKind::gaussian ? config_.gaussian_sigma : config_.ou_sigma),
      noise_rng_(make_stream(seed, kNoise)),
      sample_rng_(make_stream(seed, kSample)) {
  config_.validate();
  bounded_actions_ = action_low_.allFinite() && action_high_.allFinite();
  action_scale_ = bounded_actions_ ? Vector(0.5 * (action_high_ - action_low_))
                                   : Vector(Vector::Ones(action_dim_));

  const int n = state_dim_, m = action_dim_;
  const auto& h = config_.hidden;
  {
    Rng r = make_stream(seed, kActorInit);
    actor_ = bounded_actions_
                 ? nn::Mlp::random(sizes(n, h, m), nn::OutputActivation::bounded_squash, r,
                                   action_low_, action_high_)
                 : nn::Mlp::random(sizes(n, h, m), nn::OutputActivation::identity, r);
  }
  {
    Rng r = make_stream(seed, kCriticInit);
    critic_ = nn::Mlp::random(sizes(n + m, h, 1), nn::OutputActivation::identity, r);
  }
  {
    Rng r = make_stream(seed, kAugCriticInit);
    aug_critic_ = nn::Mlp::random(sizes(n + m, h, 1), nn::OutputActivation::identity, r);
  }
  {
    Rng r = make_stream(seed, kTransitionInit);
    transition_ = nn::Mlp::random(sizes(n + m, h, n), nn::OutputActivation::identity, r);
  }
  target_actor_ = actor_;
  target_critic_ = critic_;
  target_aug_critic_ = aug_critic_;

  actor_opt_ = nn::AdamState::for_params(actor_.params(), config_.actor_lr);
  critic_opt_ = nn::AdamState::for_params(critic_.params(), config_.critic_lr);
  aug_critic_opt_ = nn::AdamState::for_params(aug_critic_.params(), config_.critic_lr);
  transition_opt_ = nn::AdamState::for_params(transition_.params(), config_.transition_lr);
}

Vector GdpgAgent::select_action(const Vector& s, bool explore) {
  require(s.size() == state_dim_, "state dimension mismatch");
  require_finite(s, "state");
  Vector a = nn::predict(actor_, s);
  if (!explore) return a;
  a += action_scale_.cwiseProduct(noise_.sample(noise_rng_));
  return a.cwiseMax(action_low_).cwiseMin(action_high_);
}

double GdpgAgent::critic_update(const Batch& batch) {
  const double n = static_cast<double>(batch.size());
  const Matrix next_actions = nn::forward(target_actor_, batch.next_states);
  const Matrix next_q = nn::forward(target_critic_, stack(batch.next_states, next_actions));
  const Eigen::RowVectorXd y =
      batch.rewards.array() +
      config_.gamma * (1.0 - batch.done.array()) * next_q.row(0).array();

  nn::ForwardCache cache;
  const Matrix q = nn::forward(critic_, stack(batch.states, batch.actions), &cache);
  const Eigen::RowVectorXd err = q.row(0) - y;
  const double loss = err.squaredNorm() / n;
  check_loss(loss, "critic");
  const Matrix upstream = (2.0 / n) * err;
  step_or_halt(critic_.params(), nn::grad_params(critic_, cache, upstream), critic_opt_,
               "critic");
  return loss;
}

double GdpgAgent::augmented_critic_update(const Batch& batch) {
  const double n = static_cast<double>(batch.size());
  const Matrix predicted_next = nn::forward(transition_, stack(batch.states, batch.actions));
  const Matrix next_actions = nn::forward(target_actor_, predicted_next);
  const Matrix next_q =
      nn::forward(target_aug_critic_, stack(predicted_next, next_actions));
  const Eigen::RowVectorXd y =
      batch.rewards.array() +
      config_.gamma * (1.0 - batch.done.array()) * next_q.row(0).array();

  nn::ForwardCache cache;
  const Matrix q = nn::forward(aug_critic_, stack(batch.states, batch.actions), &cache);
  const Eigen::RowVectorXd err = q.row(0) - y;
  const double loss = err.squaredNorm() / n;
  check_loss(loss, "augmented critic");
  const Matrix upstream = (2.0 / n) * err;
  step_or_halt(aug_critic_.params(), nn::grad_params(aug_critic_, cache, upstream),
               aug_critic_opt_, "augmented critic");
  return loss;
}

double GdpgAgent::transition_update(const Batch& batch) {
  const double n = static_cast<double>(batch.size());
  nn::ForwardCache cache;
  const Matrix pred = nn::forward(transition_, stack(batch.states, batch.actions), &cache);
  const Matrix err = pred - batch.next_states;
  const double loss = err.squaredNorm() / n;
  check_loss(loss, "transition");
  nn::ParamSet grads = nn::grad_params(transition_, cache, (2.0 / n) * err);
  if (config_.transition_l2_coeff > 0.0)
    grads.add_scaled(transition_.params(), 2.0 * config_.transition_l2_coeff);
  step_or_halt(transition_.params(), grads, transition_opt_, "transition");
  return loss;
}

Matrix GdpgAgent::critic_action_gradient(const nn::Mlp& critic, const Matrix& states,
                                         const Matrix& actions) {
  nn::ForwardCache cache;
  nn::forward(critic, stack(states, actions), &cache);
  const Matrix ones = Matrix::Ones(1, states.cols());
  const Matrix g = nn::grad_input(critic, cache, ones);
  return g.bottomRows(actions.rows());
}

nn::ParamSet GdpgAgent::actor_gradient(const Matrix& states, double w_q, double w_star) const {
  const double n = static_cast<double>(states.cols());
  nn::ForwardCache cache;
  const Matrix actions = nn::forward(actor_, states, &cache);
  // Each critic contributes its own parameter gradient; the weighted sum is
  // formed in parameter space so the update is exactly linear in the weights.
  nn::ParamSet total = nn::ParamSet::zeros_like(actor_.params());
  bool first = true;
  auto accumulate = [&](const nn::Mlp& critic, double weight) {
    if (weight == 0.0) return;
    const Matrix upstream = critic_action_gradient(critic, states, actions) / n;
    nn::ParamSet g = nn::grad_params(actor_, cache, upstream);
    if (first && weight == 1.0) {
      total = std::move(g);
    } else {
      total.add_scaled(g, weight);
    }
    first = false;
  };
  accumulate(aug_critic_, w_star);
  accumulate(critic_, w_q);
  return total;
}

double GdpgAgent::actor_update(const Batch& batch) {
  nn::ParamSet ascent =
      actor_gradient(batch.states, config_.q_weight(), config_.q_star_weight());
  if (!ascent.all_finite()) throw TrainingHalt("non-finite actor gradient");
  const double norm = std::sqrt(ascent.squared_norm());
  ascent *= -1.0;
  step_or_halt(actor_.params(), ascent, actor_opt_, "actor");
  return norm;
}

void GdpgAgent::soft_update_targets() {
  nn::soft_update(target_actor_.params(), actor_.params(), config_.tau);
  nn::soft_update(target_critic_.params(), critic_.params(), config_.tau);
  nn::soft_update(target_aug_critic_.params(), aug_critic_.params(), config_.tau);
}

void GdpgAgent::update_step() {
  const Batch batch = buffer_.sample(config_.batch_size, sample_rng_);
  if (config_.trains_q()) critic_update(batch);
  if (config_.trains_auxiliary()) {
    augmented_critic_update(batch);
    transition_update(batch);
  }
  actor_update(batch);
  soft_update_targets();
  ++updates_;
}

void GdpgAgent::for_each_network(
    const std::function<void(const std::string&, nn::Mlp&)>& fn) {
  fn("actor", actor_);
  fn("critic", critic_);
  fn("augmented_critic", aug_critic_);
  fn("transition", transition_);
  fn("target_actor", target_actor_);
  fn("target_critic", target_critic_);
  fn("target_augmented_critic", target_aug_critic_);
}

void GdpgAgent::for_each_network(
    const std::function<void(const std::string&, const nn::Mlp&)>& fn) const {
  fn("actor", actor_);
  fn("critic", critic_);
  fn("augmented_critic", aug_critic_);
  fn("transition", transition_);
  fn("target_actor", target_actor_);
  fn("target_critic", target_critic_);
  fn("target_augmented_critic", target_aug_critic_);
}

// ---------------------------------------------------------------------------
// Training loop

void keep_heap_resident() {
#if defined(__GLIBC__)
  // Minibatch temporaries are tens of kilobytes; without this glibc hands
  // them back to the kernel after each update and page-faults them in again,
  // which roughly doubles the cost of a training step.
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
    mallopt(M_TOP_PAD, 64 << 20);
  });
#endif
}

TrainResult train(const env::MixedMdp& env, const GdpgConfig& config, std::uint64_t seed,
                  const std::function<void(const EpisodeRecord&)>& on_episode,
                  GdpgAgent* agent_out) {
  config.validate();
  keep_heap_resident();
  std::optional<GdpgAgent> local;
  if (agent_out) {
    *agent_out = GdpgAgent(env, config, seed);
  } else {
    local.emplace(env, config, seed);
  }
  GdpgAgent& agent = agent_out ? *agent_out : *local;

  Rng env_rng = make_stream(seed, kEnv);
  Rng& explore_rng = agent.sample_rng();
  const Vector& low = env.action_low();
  const Vector& high = env.action_high();
  const bool bounded = low.allFinite() && high.allFinite();

  TrainResult result;
  std::deque<double> window;
  int episode = 0;

  Vector s = env.reset(env_rng);
  agent.noise().reset();
  double ep_return = 0.0;
  int ep_len = 0;

  for (long step = 0; step < config.total_steps; ++step) {
    Vector a;
    if (step < config.warmup_steps) {
      a.resize(env.action_dim());
      for (int i = 0; i < env.action_dim(); ++i) {
        const double lo = bounded ? low(i) : -1.0;
        const double hi = bounded ? high(i) : 1.0;
        a(i) = std::uniform_real_distribution<double>(lo, hi)(explore_rng);
      }
    } else {
      a = agent.select_action(s, true);
    }
    const env::StepResult res = env.step(s, a, env_rng);
    agent.buffer().push({s, a, res.reward, res.next_state, res.done});
    ep_return += res.reward;
    ++ep_len;

    if (step + 1 >= config.warmup_steps && agent.buffer().size() >= config.batch_size) {
      try {
        agent.update_step();
      } catch (const TrainingHalt& halt) {
        result.halt_message = halt.what();
        result.halt_step = step;
        return result;
      }
    }

    s = res.next_state;
    if (res.done || ep_len >= env.max_episode_steps()) {
      window.push_back(ep_return);
      if (window.size() > 100) window.pop_front();
      // Summed afresh so rounding does not depend on how long the run is.
      double mean = 0.0;
      for (double r : window) mean += r;
      mean /= static_cast<double>(window.size());
      EpisodeRecord rec{episode++, step + 1, ep_return, mean};
      result.episodes.push_back(rec);
      if (on_episode) on_episode(rec);
      s = env.reset(env_rng);
      agent.noise().reset();
      ep_return = 0.0;
      ep_len = 0;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   gdpg-checkpoint 1
//   network <name>
//   layers <k> <n0> <n1> ... <nk>
//   output identity|bounded_squash
//   bounds <m> <low_1..m> <high_1..m>      (bounded_squash only)
//   W <rows> <cols> <entries, row-major>   (one per layer)
//   b <rows> <entries>
//   end
//
// Numbers are printed with 17 significant digits so a round trip is exact.

namespace {

constexpr const char* kMagic = "gdpg-checkpoint";
constexpr int kVersion = 1;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T read_value(std::istream& in, const char* what) {
  T v{};
  if (!(in >> v)) throw ContractViolation(std::string("checkpoint: expected ") + what);
  return v;
}

void expect_token(std::istream& in, const std::string& token) {
  std::string got;
  if (!(in >> got) || got != token)
    throw ContractViolation("checkpoint: expected '" + token + "', got '" + got + "'");
}

}  // namespace

void write_network(std::ostream& out, const std::string& name, const nn::Mlp& net) {
  out << "network " << name << '\n';
  const auto& sizes = net.layer_sizes();
  out << "layers " << net.layer_count();
  for (int s : sizes) out << ' ' << s;
  out << '\n';
  const bool squash = net.output_activation() == nn::OutputActivation::bounded_squash;
  out << "output " << (squash ? "bounded_squash" : "identity") << '\n';
  if (squash) {
    out << "bounds " << net.out_low().size();
    for (Eigen::Index i = 0; i < net.out_low().size(); ++i) out << ' ' << num(net.out_low()(i));
    for (Eigen::Index i = 0; i < net.out_high().size(); ++i)
      out << ' ' << num(net.out_high()(i));
    out << '\n';
  }
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const Matrix& w = net.params().weights[l];
    out << "W " << w.rows() << ' ' << w.cols();
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) out << ' ' << num(w(r, c));
    out << '\n';
    const Vector& b = net.params().biases[l];
    out << "b " << b.size();
    for (Eigen::Index i = 0; i < b.size(); ++i) out << ' ' << num(b(i));
    out << '\n';
  }
  out << "end\n";
}

nn::Mlp read_network(std::istream& in, std::string* name) {
  expect_token(in, "network");
  const auto net_name = read_value<std::string>(in, "network name");
  if (name) *name = net_name;
  expect_token(in, "layers");
  const auto k = read_value<int>(in, "layer count");
  require(k >= 1 && k < 1000, "checkpoint: bad layer count");
  std::vector<int> sizes(static_cast<std::size_t>(k) + 1);
  for (auto& s : sizes) {
    s = read_value<int>(in, "layer size");
    require(s >= 1, "checkpoint: bad layer size");
  }
  expect_token(in, "output");
  const auto act = read_value<std::string>(in, "output activation");
  nn::Mlp net;
  if (act == "bounded_squash") {
    expect_token(in, "bounds");
    const auto m = read_value<int>(in, "bounds size");
    require(m == sizes.back(), "checkpoint: bounds size mismatch");
    Vector low(m), high(m);
    for (int i = 0; i < m; ++i) low(i) = read_value<double>(in, "bound");
    for (int i = 0; i < m; ++i) high(i) = read_value<double>(in, "bound");
    net = nn::Mlp(sizes, nn::OutputActivation::bounded_squash, low, high);
  } else if (act == "identity") {
    net = nn::Mlp(sizes, nn::OutputActivation::identity);
  } else {
    throw ContractViolation("checkpoint: unknown output activation '" + act + "'");
  }
  for (int l = 0; l < k; ++l) {
    expect_token(in, "W");
    const auto rows = read_value<long>(in, "rows");
    const auto cols = read_value<long>(in, "cols");
    Matrix& w = net.params().weights[static_cast<std::size_t>(l)];
    require(rows == w.rows() && cols == w.cols(), "checkpoint: weight shape mismatch");
    for (long r = 0; r < rows; ++r)
      for (long c = 0; c < cols; ++c) w(r, c) = read_value<double>(in, "weight");
    expect_token(in, "b");
    const auto len = read_value<long>(in, "bias length");
    Vector& b = net.params().biases[static_cast<std::size_t>(l)];
    require(len == b.size(), "checkpoint: bias shape mismatch");
    for (long i = 0; i < len; ++i) b(i) = read_value<double>(in, "bias");
  }
  expect_token(in, "end");
  return net;
}

void save_checkpoint(const GdpgAgent& agent, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot open checkpoint for writing: " + path);
  out << kMagic << ' ' << kVersion << '\n';
  agent.for_each_network(
      [&](const std::string& name, const nn::Mlp& net) { write_network(out, name, net); });
  require(static_cast<bool>(out), "failed writing checkpoint: " + path);
}

namespace {

void read_header(std::istream& in) {
  expect_token(in, kMagic);
  const auto version = read_value<int>(in, "version");
  require(version == kVersion, "checkpoint: unsupported version " + std::to_string(version));
}

}  // namespace

void load_checkpoint(GdpgAgent& agent, const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open checkpoint: " + path);
  read_header(in);
  agent.for_each_network([&](const std::string& name, nn::Mlp& net) {
    std::string got;
    nn::Mlp loaded = read_network(in, &got);
    require(got == name, "checkpoint: expected network '" + name + "', got '" + got + "'");
    require(loaded.same_architecture(net), "checkpoint: architecture mismatch for " + name);
    net = std::move(loaded);
  });
}

nn::Mlp load_actor(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open checkpoint: " + path);
  read_header(in);
  std::string name;
  while (true) {
    nn::Mlp net = read_network(in, &name);
    if (name == "actor") return net;
  }
}

}  // namespace gdpg::agent
