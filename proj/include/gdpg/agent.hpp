#ifndef GDPG_AGENT_HPP
#define GDPG_AGENT_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gdpg/env.hpp"
#include "gdpg/mlp.hpp"

namespace gdpg::agent {

using env::Rng;

enum class Mode {
  /// Actor follows (1 - alpha) grad Q* + alpha grad Q.
  gdpg,
  /// alpha = 1; the augmented critic and transition net are never trained.
  ddpg,
  /// Actor follows grad Q* only; Q is still trained for diagnostics.
  mdpg,
  /// alpha = 0 and Q is not trained.
  augmented_only,
};

Mode parse_mode(const std::string& name);
std::string to_string(Mode mode);

enum class NoiseKind { ornstein_uhlenbeck, gaussian };

NoiseKind parse_noise(const std::string& name);
std::string to_string(NoiseKind kind);

struct GdpgConfig {
  Mode mode = Mode::gdpg;
  double alpha = 0.5;
  double gamma = 0.99;
  double tau = 0.01;
  int batch_size = 128;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double transition_lr = 1e-3;
  double transition_l2_coeff = 1e-4;
  long buffer_capacity = 1000000;
  long warmup_steps = 1000;
  long total_steps = 50000;
  std::vector<int> hidden = {64, 64};
  NoiseKind noise = NoiseKind::ornstein_uhlenbeck;
  /// Noise scales are relative to the action half-width.
  double ou_theta = 0.15;
  double ou_sigma = 0.2;
  double gaussian_sigma = 0.1;
  /// When false, the augmented critic and transition net are never updated.
  bool aux_updates = true;

  /// Weight on grad_a Q in the actor update.
  /// Networks whose weight is zero in gdpg mode are not trained, so gdpg with
  /// alpha = 1 matches ddpg and alpha = 0 matches augmented_only.
  double q_weight() const;
  /// Weight on grad_a Q* in the actor update.
  double q_star_weight() const;
  bool trains_q() const;
  bool trains_auxiliary() const;

  /// Throws ContractViolation on out-of-range values.
  void validate() const;
};

struct Transition {
  Vector state;
  Vector action;
  double reward = 0.0;
  Vector next_state;
  bool done = false;
};

/// Minibatch in column layout (one transition per column).
struct Batch {
  Matrix states;
  Matrix actions;
  Eigen::RowVectorXd rewards;
  Matrix next_states;
  Eigen::RowVectorXd done;

  Eigen::Index size() const { return states.cols(); }
  static Batch from(const std::vector<Transition>& transitions);
};

/// Fixed-capacity FIFO ring of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(long capacity);

  void push(Transition t);
  long size() const { return size_; }
  long capacity() const { return capacity_; }
  /// i-th oldest stored transition.
  const Transition& at(long i) const;
  /// Uniform without replacement; requires n <= size().
  Batch sample(int n, Rng& rng) const;
  std::vector<long> sample_indices(int n, Rng& rng) const;

 private:
  long capacity_;
  long size_ = 0;
  long head_ = 0;
  std::vector<Transition> ring_;
};

/// Ornstein-Uhlenbeck (x += theta (0 - x) dt + sigma sqrt(dt) N(0, 1)) or
/// white Gaussian exploration noise.
class NoiseProcess {
 public:
  NoiseProcess(NoiseKind kind, int dim, double theta, double sigma, double dt = 1.0);

  void reset();
  Vector sample(Rng& rng);
  const Vector& state() const { return x_; }

 private:
  NoiseKind kind_;
  double theta_;
  double sigma_;
  double dt_;
  Vector x_;
};

/// Online and target networks, optimizer states, buffer and noise of one
/// training run.
class GdpgAgent {
 public:
  GdpgAgent(const env::MixedMdp& env, GdpgConfig config, std::uint64_t seed);

  const GdpgConfig& config() const { return config_; }
  GdpgConfig& mutable_config() { return config_; }

  Vector select_action(const Vector& s, bool explore);

  /// Each returns the loss before its optimizer step.
  double critic_update(const Batch& batch);
  double augmented_critic_update(const Batch& batch);
  /// Unregularized transition loss.
  double transition_update(const Batch& batch);
  /// Returns the norm of the applied ascent gradient.
  double actor_update(const Batch& batch);
  void soft_update_targets();

  /// Batch-mean ascent direction
  /// (1/N) sum_i grad_theta mu(s_i) (w_star grad_a Q*(s_i, a) + w_q grad_a Q(s_i, a)),
  /// a = mu(s_i). Zero weights skip their critic entirely.
  nn::ParamSet actor_gradient(const Matrix& states, double w_q, double w_star) const;

  /// grad_a Q(s, a) for one critic network, column per sample.
  static Matrix critic_action_gradient(const nn::Mlp& critic, const Matrix& states,
                                       const Matrix& actions);

  /// One full Algorithm-style update on a minibatch drawn from the buffer.
  void update_step();

  nn::Mlp& actor() { return actor_; }
  nn::Mlp& critic() { return critic_; }
  nn::Mlp& augmented_critic() { return aug_critic_; }
  nn::Mlp& transition_net() { return transition_; }
  nn::Mlp& target_actor() { return target_actor_; }
  nn::Mlp& target_critic() { return target_critic_; }
  nn::Mlp& target_augmented_critic() { return target_aug_critic_; }
  const nn::Mlp& actor() const { return actor_; }
  const nn::Mlp& critic() const { return critic_; }
  const nn::Mlp& augmented_critic() const { return aug_critic_; }
  const nn::Mlp& transition_net() const { return transition_; }
  const nn::Mlp& target_actor() const { return target_actor_; }
  const nn::Mlp& target_critic() const { return target_critic_; }
  const nn::Mlp& target_augmented_critic() const { return target_aug_critic_; }

  ReplayBuffer& buffer() { return buffer_; }
  NoiseProcess& noise() { return noise_; }
  Rng& sample_rng() { return sample_rng_; }
  long update_count() const { return updates_; }

  /// Applies `fn(name, net)` to every network in checkpoint order.
  void for_each_network(const std::function<void(const std::string&, nn::Mlp&)>& fn);
  void for_each_network(const std::function<void(const std::string&, const nn::Mlp&)>& fn) const;

 private:
  GdpgConfig config_;
  int state_dim_;
  int action_dim_;
  Vector action_low_;
  Vector action_high_;
  Vector action_scale_;
  bool bounded_actions_;

  nn::Mlp actor_, critic_, aug_critic_, transition_;
  nn::Mlp target_actor_, target_critic_, target_aug_critic_;
  nn::AdamState actor_opt_, critic_opt_, aug_critic_opt_, transition_opt_;

  ReplayBuffer buffer_;
  NoiseProcess noise_;
  Rng noise_rng_;
  Rng sample_rng_;
  long updates_ = 0;
};

/// Raised when a loss or gradient turns non-finite during training.
class TrainingHalt : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpisodeRecord {
  int episode = 0;
  /// Environment steps consumed when the episode ended.
  long steps = 0;
  double episode_return = 0.0;
  /// Mean return of the last min(100, episode + 1) episodes.
  double rolling100 = 0.0;
};

struct TrainResult {
  std::vector<EpisodeRecord> episodes;
  std::optional<std::string> halt_message;
  long halt_step = -1;
};

/// Runs config.total_steps environment steps: uniform-random actions during
/// warmup, then noisy policy actions with one update per step.
/// `on_episode`, when set, sees each record as it is produced.
TrainResult train(const env::MixedMdp& env, const GdpgConfig& config, std::uint64_t seed,
                  const std::function<void(const EpisodeRecord&)>& on_episode = {},
                  GdpgAgent* agent_out = nullptr);

/// Raises glibc's trim and mmap thresholds so per-update temporaries stay
/// mapped. Called by train(); idempotent and process-wide.
void keep_heap_resident();

/// Independent generator for (seed, stream).
Rng make_stream(std::uint64_t seed, std::uint64_t stream);

// Checkpoints -----------------------------------------------------------------

void write_network(std::ostream& out, const std::string& name, const nn::Mlp& net);
/// Reads one network block; throws ContractViolation on malformed input.
nn::Mlp read_network(std::istream& in, std::string* name = nullptr);

void save_checkpoint(const GdpgAgent& agent, const std::string& path);
/// Overwrites the agent's networks; shapes must match.
void load_checkpoint(GdpgAgent& agent, const std::string& path);
/// Reads only the "actor" network.
nn::Mlp load_actor(const std::string& path);

}  // namespace gdpg::agent

#endif  // GDPG_AGENT_HPP
