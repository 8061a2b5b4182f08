// Acceptance gate: runs each release criterion at its stated tolerance and
// prints one PASS/FAIL line per criterion. Exit status is non-zero when any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gdpg/agent.hpp"
#include "gdpg/env.hpp"
#include "gdpg/harness.hpp"
#include "gdpg/mlp.hpp"
#include "gdpg/theory.hpp"

namespace {

using namespace gdpg;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gdpg_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Vector random_vector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

double relative_error(const Vector& a, const Vector& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

// ---------------------------------------------------------------------------

Outcome example1_threshold() {
  harness::AnalyzeConfig c;
  c.env_id = "linear_example1";
  c.out_dir = scratch_dir("example1").string();
  c.gammas.clear();
  for (int i = 1; i <= 9; ++i) c.gammas.push_back(0.05 * i);
  const harness::AnalyzeOutput out = harness::analyze(c);

  bool verdicts_ok = true;
  for (const auto& v : out.verdicts) {
    if (std::abs(v.gamma - 0.25) < 1e-12) continue;
    const auto expected = v.gamma < 0.25 ? harness::Verdict::converged : harness::Verdict::diverged;
    verdicts_ok = verdicts_ok && v.verdict == expected;
  }

  // Partial sum of sum_k gamma^k 2^{2k-1} through the finite geometric formula.
  const double gamma = 0.2;
  const int terms = 60;
  const Vector theta = Vector::Ones(2);
  const double ratio = 4.0 * gamma;
  const double coefficient = 0.5 * ratio * (1.0 - std::pow(ratio, terms)) / (1.0 - ratio);
  const Vector oracle = -(theta + coefficient * theta.sum() * Vector::Ones(2));
  const Vector got = theory::example1_grad_value(theta, gamma, terms).partial_sum;
  double worst = 0.0;
  for (int i = 0; i < 2; ++i) worst = std::max(worst, std::abs(got[i] - oracle[i]) / std::abs(oracle[i]));
  const double limit = -(1.0 + 2.0 * 2.0 * gamma / (1.0 - 4.0 * gamma));

  return {verdicts_ok && worst < 1e-6,
          std::string("grid verdicts ") + (verdicts_ok ? "match" : "MISMATCH") +
              ", 60-term partial sum rel err " + fmt("%.2e", worst) + " (value " +
              fmt("%.9g", got[0]) + ", limit " + fmt("%.9g", limit) + ")"};
}

// Network shapes the library instantiates: actor, critics and transition
// net at the default width for every environment, plus the analysis actor.
std::vector<std::pair<std::vector<int>, nn::OutputActivation>> network_shapes() {
  std::vector<std::pair<std::vector<int>, nn::OutputActivation>> shapes;
  const agent::GdpgConfig defaults;
  for (const std::string& id : env::env_ids()) {
    const auto e = env::make_env(id);
    const int n = e->state_dim(), m = e->action_dim();
    const bool bounded = e->action_low().allFinite() && e->action_high().allFinite();
    auto with = [&](int in, int out) {
      std::vector<int> s{in};
      s.insert(s.end(), defaults.hidden.begin(), defaults.hidden.end());
      s.push_back(out);
      return s;
    };
    shapes.emplace_back(with(n, m), bounded ? nn::OutputActivation::bounded_squash
                                            : nn::OutputActivation::identity);
    shapes.emplace_back(with(n + m, 1), nn::OutputActivation::identity);
    shapes.emplace_back(with(n + m, n), nn::OutputActivation::identity);
  }
  shapes.emplace_back(std::vector<int>{5, 16, 16, 5}, nn::OutputActivation::bounded_squash);
  shapes.emplace_back(std::vector<int>{3, 16, 1}, nn::OutputActivation::bounded_squash);
  std::sort(shapes.begin(), shapes.end());
  shapes.erase(std::unique(shapes.begin(), shapes.end()), shapes.end());
  return shapes;
}

Outcome gradient_correctness() {
  const double h = 1e-5;
  double worst = 0.0;
  std::mt19937_64 rng(2024);
  for (const auto& [sizes, act] : network_shapes()) {
    const int in = sizes.front(), out = sizes.back();
    nn::Mlp net = nn::Mlp::random(sizes, act, rng, Vector::Constant(out, -1.5),
                                  Vector::Constant(out, 2.0));
    const Vector theta = net.params().flatten();
    for (int point = 0; point < 32; ++point) {
      const Vector x = random_vector(in, rng);
      const Vector u = random_vector(out, rng);
      nn::ForwardCache cache;
      nn::forward(net, Matrix(x), &cache);
      const Vector g_in = nn::grad_input(net, cache, Matrix(u)).col(0);
      const Vector g_par = nn::grad_params(net, cache, Matrix(u)).flatten();
      auto value = [&](const nn::Mlp& m, const Vector& xx) { return u.dot(nn::predict(m, xx)); };

      Vector fd_in(in);
      for (int i = 0; i < in; ++i) {
        Vector up = x, down = x;
        up[i] += h;
        down[i] -= h;
        fd_in[i] = (value(net, up) - value(net, down)) / (2 * h);
      }
      worst = std::max(worst, relative_error(g_in, fd_in));

      // Parameters: random directions plus randomly chosen coordinates.
      std::vector<Vector> dirs;
      for (int k = 0; k < 4; ++k) dirs.push_back(random_vector(theta.size(), rng).normalized());
      std::uniform_int_distribution<Eigen::Index> pick(0, theta.size() - 1);
      for (int k = 0; k < 4; ++k) dirs.push_back(Vector::Unit(theta.size(), pick(rng)));
      Vector analytic(static_cast<Eigen::Index>(dirs.size())), fd(analytic.size());
      nn::Mlp probe = net;
      for (std::size_t k = 0; k < dirs.size(); ++k) {
        probe.params().assign_flat(theta + h * dirs[k]);
        const double up = value(probe, x);
        probe.params().assign_flat(theta - h * dirs[k]);
        const double down = value(probe, x);
        fd[static_cast<Eigen::Index>(k)] = (up - down) / (2 * h);
        analytic[static_cast<Eigen::Index>(k)] = g_par.dot(dirs[k]);
      }
      worst = std::max(worst, relative_error(analytic, fd));
    }
  }
  return {worst < 1e-4, std::to_string(network_shapes().size()) + " shapes x 32 points, worst rel err " +
                            fmt("%.2e", worst)};
}

std::vector<Vector> unit_directions(std::size_t dim, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Vector> out;
  for (int i = 0; i < count; ++i) out.push_back(random_vector(static_cast<Eigen::Index>(dim), rng).normalized());
  return out;
}

theory::FixedPolicy random_actor(std::vector<int> sizes, const env::MixedMdp& e, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return theory::FixedPolicy::network(nn::Mlp::random(
      std::move(sizes), nn::OutputActivation::bounded_squash, rng, e.action_low(), e.action_high()));
}

Outcome deterministic_gradient() {
  env::ComplexPointEnv e({.force_deterministic = true});
  const theory::FixedPolicy policy = random_actor({5, 16, 16, 5}, e, 7);
  theory::GradientOptions o;
  o.gamma = 0.9;
  o.rollouts = 16;
  o.horizon = 50;
  const std::uint64_t seed = 99;
  env::Rng rng(seed);
  const Vector g = theory::policy_gradient_deterministic(e, policy, o, rng).gradient();

  // Exact J over the same start states: the deterministic variant consumes
  // randomness only in reset.
  auto objective = [&](const theory::FixedPolicy& p) {
    env::Rng r(seed);
    return theory::mc_return(e, p, o.gamma, o.rollouts, o.horizon, r).mean;
  };
  const auto dirs = unit_directions(policy.param_count(), 16, 5);
  const Vector theta = policy.parameters();
  const double h = 1e-5;
  Vector analytic(16), fd(16);
  double worst_single = 0.0;
  for (int i = 0; i < 16; ++i) {
    analytic[i] = g.dot(dirs[i]);
    fd[i] = (objective(policy.with_parameters(theta + h * dirs[i])) -
             objective(policy.with_parameters(theta - h * dirs[i]))) /
            (2 * h);
    worst_single = std::max(worst_single, std::abs(analytic[i] - fd[i]) / std::max(std::abs(fd[i]), 1e-12));
  }
  const double err = relative_error(analytic, fd);
  return {err < 1e-2, "16 directions, rel err " + fmt("%.2e", err) + " (worst single direction " +
                          fmt("%.2e", worst_single) + ")"};
}

Outcome degenerate_reductions() {
  theory::GradientOptions o;
  o.rollouts = 8;
  o.horizon = 20;
  o.mc_next_states = 4;
  o.value_rollouts = 8;

  env::ComplexPointEnv always({.force_deterministic = true});
  const auto actor = random_actor({5, 16, 16, 5}, always, 3);
  env::Rng a(11), b(11);
  const auto g1 = theory::policy_gradient_general(always, actor, o, a);
  const auto d1 = theory::policy_gradient_deterministic(always, actor, o, b);

  env::QuadraticConvexEnv never({.dim = 3, .mixing = 0.0});
  std::mt19937_64 init(4);
  nn::Mlp linear({3, 3}, nn::OutputActivation::identity);
  linear.params().assign_flat(0.3 * random_vector(static_cast<Eigen::Index>(linear.params().scalar_count()), init));
  const auto policy = theory::FixedPolicy::network(linear);
  env::Rng c(12), d(12);
  const auto g0 = theory::policy_gradient_general(never, policy, o, c);
  const auto s0 = theory::policy_gradient_stochastic(never, policy, o, d);

  auto identical = [](const theory::PolicyGradientEstimate& x, const theory::PolicyGradientEstimate& y) {
    if (x.trajectories.size() != y.trajectories.size()) return false;
    for (std::size_t i = 0; i < x.trajectories.size(); ++i)
      if (!(x.trajectories[i] == y.trajectories[i])) return false;
    return true;
  };
  const bool det_ok = identical(g1, d1);
  const bool sto_ok = identical(g0, s0) && s0.mean.stochastic.norm() > 0.0;
  return {det_ok && sto_ok, std::string("f=1 vs deterministic: ") + (det_ok ? "identical" : "DIFFER") +
                                ", f=0 vs stochastic: " + (sto_ok ? "identical" : "DIFFER") +
                                " (8 trajectories each)"};
}

Outcome condition_checkers() {
  harness::AnalyzeConfig c;
  c.env_id = "complex_point";
  c.out_dir = scratch_dir("complex_point_analyze").string();
  const harness::AnalyzeOutput out = harness::analyze(c);
  const auto& r = out.report;
  const bool ok = std::abs(r.gamma_threshold - 0.2) < 1e-12 && !r.cond_a1 && r.cond_a2 &&
                  r.worst_chain_radius <= 1.0 + 1e-9;
  return {ok, "threshold " + fmt("%.9g", r.gamma_threshold) + ", max f " + fmt("%.9g", r.max_mixing) +
                  ", A.1 " + (r.cond_a1 ? "true" : "false") + ", A.2 " + (r.cond_a2 ? "true" : "false") +
                  " (worst radius " + fmt("%.12g", r.worst_chain_radius) + ")"};
}

Outcome convex_lower_bound() {
  env::QuadraticConvexEnv e;
  std::mt19937_64 init(13);
  nn::Mlp linear({3, 3}, nn::OutputActivation::identity);
  linear.params().assign_flat(0.3 * random_vector(static_cast<Eigen::Index>(linear.params().scalar_count()), init));
  const auto policy = theory::FixedPolicy::network(linear);
  env::Rng a(8), b(9);
  const auto j = theory::mc_return(e, policy, 0.9, 10000, e.max_episode_steps(), a);
  const auto j_star = theory::mc_return_augmented(e, policy, 0.9, 10000, e.max_episode_steps(), b);
  const double se = std::hypot(j.std_error, j_star.std_error);
  return {j.mean >= j_star.mean - 3.0 * se, "J " + fmt("%.6g", j.mean) + ", J* " + fmt("%.6g", j_star.mean) +
                                                ", combined se " + fmt("%.3g", se) + " over 10^4 episodes"};
}

Outcome mode_identity() {
  env::ComplexPointEnv e;
  agent::GdpgConfig ddpg;
  ddpg.mode = agent::Mode::ddpg;
  ddpg.total_steps = 1000;
  ddpg.warmup_steps = 200;
  agent::GdpgConfig gdpg = ddpg;
  gdpg.mode = agent::Mode::gdpg;
  gdpg.alpha = 1.0;
  gdpg.aux_updates = false;
  agent::GdpgAgent a(e, ddpg, 0), b(e, gdpg, 0);
  agent::train(e, ddpg, 0, {}, &a);
  agent::train(e, gdpg, 0, {}, &b);
  const bool same = a.actor().params() == b.actor().params();
  return {same && a.update_count() > 0,
          std::string("actors ") + (same ? "bit-identical" : "DIFFER") + " after 1000 steps (" +
              std::to_string(a.update_count()) + " updates)"};
}

Outcome alpha_ranking() {
  harness::ExperimentConfig c;
  c.env_id = "complex_point";
  c.seeds = {0, 1, 2, 3, 4};
  c.agent.total_steps = 50000;
  c.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  c.out_dir = scratch_dir("alpha_sweep").string();
  const std::vector<double> alphas = {0.0, 0.5, 1.0, 2.0};
  const auto results = harness::sweep_alpha(c, alphas);

  std::vector<std::vector<double>> finals;
  std::string detail = "final rolling-100:";
  bool halted = false;
  for (const auto& r : results) {
    std::vector<double> f;
    for (const auto& run : r.output.runs) f.push_back(run.result.episodes.empty() ? 0.0 : run.result.episodes.back().rolling100);
    finals.push_back(f);
    halted = halted || r.output.halted();
    detail += " a=" + harness::format_number(r.alpha) + ":" + fmt("%.4g", r.output.final_mean());
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  const double m2 = mean(finals[3]);
  const bool two_worst = m2 < mean(finals[0]) && m2 < mean(finals[1]) && m2 < mean(finals[2]);

  // One-sided seed bootstrap of P(mean(0.5) >= mean(1)).
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> pick(0, finals[1].size() - 1);
  const int resamples = 10000;
  int wins = 0;
  for (int b = 0; b < resamples; ++b) {
    double half = 0.0, one = 0.0;
    for (std::size_t i = 0; i < finals[1].size(); ++i) {
      half += finals[1][pick(rng)];
      one += finals[2][pick(rng)];
    }
    if (half >= one) ++wins;
  }
  const double confidence = static_cast<double>(wins) / resamples;
  detail += std::string("; alpha=2 ") + (two_worst ? "worst" : "NOT worst") +
            "; P(a=0.5 >= a=1) = " + fmt("%.3f", confidence) + (halted ? "; a run HALTED" : "");
  return {two_worst && confidence >= 0.7 && !halted, detail};
}

Outcome transition_floor() {
  env::ComplexPointEnv e;
  agent::GdpgConfig c;
  agent::GdpgAgent agent(e, c, 21);
  env::Rng rng(8);
  std::uniform_real_distribution<double> small(-0.001, 0.001);
  const int updates = 3000, window = 500;
  double tail = 0.0;
  for (int u = 0; u < updates; ++u) {
    std::vector<agent::Transition> batch;
    for (int i = 0; i < c.batch_size; ++i) {
      const Vector s = e.reset(rng);
      Vector a(5);
      for (int k = 0; k < 5; ++k) a[k] = small(rng);
      const env::StepResult r = e.step(s, a, rng);
      batch.push_back({s, a, r.reward, r.next_state, r.done});
    }
    const double loss = agent.transition_update(agent::Batch::from(batch));
    if (u >= updates - window) tail += loss;
  }
  const double floor = 5.0 / 3.0;
  const double l3 = tail / window;
  return {std::abs(l3 - floor) <= 0.1 * floor,
          "mean L3 over last " + std::to_string(window) + " updates " + fmt("%.4f", l3) + " vs floor " +
              fmt("%.4f", floor)};
}

Outcome run_determinism() {
  std::vector<std::string> compared;
  bool same = true;
  for (const std::string env_id : {"complex_point", "quadratic_convex"}) {
    harness::ExperimentConfig c;
    c.env_id = env_id;
    c.seeds = {0, 1};
    c.agent.total_steps = 3000;
    c.workers = 2;
    const fs::path a = scratch_dir("determinism_a_" + env_id), b = scratch_dir("determinism_b_" + env_id);
    c.out_dir = a.string();
    const auto first = harness::run(c);
    c.out_dir = b.string();
    c.workers = 1;
    harness::run(c);
    for (const auto& f : first.files) {
      const fs::path name = fs::path(f).filename();
      same = same && slurp(a / name) == slurp(b / name) && !slurp(a / name).empty();
      compared.push_back(name.string());
    }
  }
  return {same, std::to_string(compared.size()) + " CSV files " + (same ? "byte-identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    const char* name;
    double budget_seconds;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {"example-1 convergence threshold", 1, example1_threshold},
      {"network gradients vs finite differences", 10, gradient_correctness},
      {"deterministic policy gradient vs exact rollouts", 60, deterministic_gradient},
      {"general gradient degenerate reductions", 60, degenerate_reductions},
      {"ComplexPoint condition checkers", 10, condition_checkers},
      {"convex return lower bound", 120, convex_lower_bound},
      {"ddpg / alpha=1 mode identity", 60, mode_identity},
      {"ComplexPoint alpha ranking", 1800, alpha_ranking},
      {"transition-net stochastic floor", 300, transition_floor},
      {"run determinism", 0, run_determinism},
  };
  // Optional arguments select criteria by number; the default runs all.
  std::vector<bool> selected(criteria.size(), argc == 1);
  for (int k = 1; k < argc; ++k) {
    const int index = std::atoi(argv[k]);
    if (index >= 1 && index <= static_cast<int>(criteria.size())) selected[static_cast<std::size_t>(index - 1)] = true;
  }
  int failures = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    ++ran;
    const auto& c = criteria[i];
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string timing = fmt("%.1fs", secs);
    if (c.budget_seconds > 0) {
      timing += " of " + fmt("%.0fs", c.budget_seconds);
      if (secs > c.budget_seconds) {
        timing += " OVER BUDGET";
        o.pass = false;
      }
    }
    if (!o.pass) ++failures;
    std::printf("%s [%zu] %s: %s [%s]\n", o.pass ? "PASS" : "FAIL", i + 1, c.name, o.detail.c_str(),
                timing.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria passed\n", ran - failures, ran);
  return failures == 0 ? 0 : 1;
}
