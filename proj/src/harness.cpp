#include "gdpg/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace gdpg::harness {

namespace fs = std::filesystem;

std::string ExperimentConfig::default_output_dir() {
  const char* env = std::getenv("GDPG_LAB_OUT");
  return env && *env ? std::string(env) : std::string("gdpg_out");
}

void ExperimentConfig::validate() const {
  const auto ids = env::env_ids();
  require(std::find(ids.begin(), ids.end(), env_id) != ids.end(),
          "unknown environment '" + env_id + "'");
  require(!seeds.empty(), "at least one seed is required");
  require(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() == seeds.size(),
          "seeds must be distinct");
  require(workers >= 1, "workers must be positive");
  require(eval_interval >= 1, "eval_interval must be positive");
  require(!out_dir.empty(), "output directory must not be empty");
  agent.validate();
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) parts.push_back(trim(item));
  return parts;
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ContractViolation(key + ": expected a number, got '" + value + "'");
}

long to_long(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ContractViolation(key + ": expected an integer, got '" + value + "'");
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ContractViolation(key + ": expected true/false, got '" + value + "'");
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& part : split(text, ',')) {
    require(!part.empty(), "empty entry in seed list '" + text + "'");
    const long v = to_long("seeds", part);
    require(v >= 0, "seeds must be non-negative");
    seeds.push_back(static_cast<std::uint64_t>(v));
  }
  return seeds;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> values;
  for (const auto& part : split(text, ',')) {
    require(!part.empty(), "empty entry in list '" + text + "'");
    values.push_back(to_double("list", part));
  }
  return values;
}

void apply_setting(ExperimentConfig& c, const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string value = trim(raw_value);
  auto& a = c.agent;
  if (key == "env") c.env_id = value;
  else if (key == "mode") a.mode = agent::parse_mode(value);
  else if (key == "alpha") a.alpha = to_double(key, value);
  else if (key == "gamma") a.gamma = to_double(key, value);
  else if (key == "tau") a.tau = to_double(key, value);
  else if (key == "batch_size") a.batch_size = static_cast<int>(to_long(key, value));
  else if (key == "actor_lr") a.actor_lr = to_double(key, value);
  else if (key == "critic_lr") a.critic_lr = to_double(key, value);
  else if (key == "transition_lr") a.transition_lr = to_double(key, value);
  else if (key == "transition_l2") a.transition_l2_coeff = to_double(key, value);
  else if (key == "buffer_capacity") a.buffer_capacity = to_long(key, value);
  else if (key == "warmup_steps") a.warmup_steps = to_long(key, value);
  else if (key == "steps") a.total_steps = to_long(key, value);
  else if (key == "hidden") {
    a.hidden.clear();
    for (const auto& p : split(value, ',')) a.hidden.push_back(static_cast<int>(to_long(key, p)));
  }
  else if (key == "noise") a.noise = agent::parse_noise(value);
  else if (key == "ou_theta") a.ou_theta = to_double(key, value);
  else if (key == "ou_sigma") a.ou_sigma = to_double(key, value);
  else if (key == "gaussian_sigma") a.gaussian_sigma = to_double(key, value);
  else if (key == "aux_updates") a.aux_updates = to_bool(key, value);
  else if (key == "seeds") c.seeds = parse_seed_list(value);
  else if (key == "out") c.out_dir = value;
  else if (key == "workers") c.workers = static_cast<int>(to_long(key, value));
  else if (key == "eval_interval") c.eval_interval = to_long(key, value);
  else if (key == "termination_radius")
    c.env_options.complex_point.termination_radius = to_double(key, value);
  else if (key == "complex_point_max_steps")
    c.env_options.complex_point.max_steps = static_cast<int>(to_long(key, value));
  else if (key == "quadratic_dim")
    c.env_options.quadratic.dim = static_cast<int>(to_long(key, value));
  else if (key == "quadratic_mixing") c.env_options.quadratic.mixing = to_double(key, value);
  else if (key == "quadratic_noise") c.env_options.quadratic.noise_sigma = to_double(key, value);
  else if (key == "quadratic_reward_sign")
    c.env_options.quadratic.reward_sign = to_double(key, value);
  else throw ContractViolation("unknown setting '" + key + "'");
}

void load_config_file(ExperimentConfig& config, const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open config file: " + path);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos,
            path + ":" + std::to_string(number) + ": expected key = value");
    apply_setting(config, line.substr(0, eq), line.substr(eq + 1));
  }
}

std::string format_number(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  return buf;
}

// ---------------------------------------------------------------------------
// Runs

namespace {

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double mean_of(const std::vector<double>& xs) {
  double m = 0.0;
  for (double x : xs) m += x;
  return xs.empty() ? 0.0 : m / static_cast<double>(xs.size());
}

/// Runs `jobs` on up to `workers` threads; the first exception is rethrown
/// after every thread has finished.
template <typename Job>
void run_parallel(std::size_t count, int workers, Job&& job) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(workers), count);
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot open for writing: " + path.string());
  body(out);
  require(static_cast<bool>(out), "failed writing " + path.string());
}

struct Job {
  double alpha;
  std::size_t seed_index;
};

std::vector<SeedRun> train_all(const ExperimentConfig& config, const std::vector<Job>& jobs,
                               const std::vector<agent::GdpgConfig>& agent_configs) {
  std::vector<SeedRun> runs(jobs.size());
  run_parallel(jobs.size(), config.workers, [&](std::size_t i) {
    const auto environment = env::make_env(config.env_id, config.env_options);
    const auto seed = config.seeds[jobs[i].seed_index];
    runs[i].seed = seed;
    runs[i].result = agent::train(*environment, agent_configs[i], seed);
  });
  return runs;
}

RunOutput finish(const ExperimentConfig& config, std::vector<SeedRun> runs,
                 const std::string& infix, const std::string& summary_name) {
  RunOutput out;
  out.runs = std::move(runs);
  out.summary = summarize(out.runs, config.agent.total_steps, config.eval_interval);
  const fs::path dir(config.out_dir);
  for (const auto& r : out.runs) {
    const auto path = dir / (config.env_id + infix + "_seed" + std::to_string(r.seed) + ".csv");
    write_file(path, [&](std::ostream& o) { write_run_csv(o, r); });
    out.files.push_back(path.string());
  }
  const auto summary_path = dir / summary_name;
  write_file(summary_path, [&](std::ostream& o) { write_summary_csv(o, out.summary); });
  out.files.push_back(summary_path.string());
  return out;
}

std::string alpha_tag(double alpha) { return "_alpha" + format_number(alpha); }

}  // namespace

std::vector<SummaryRow> summarize(const std::vector<SeedRun>& runs, long total_steps,
                                  long interval) {
  require(interval >= 1, "summary interval must be positive");
  std::vector<SummaryRow> rows;
  if (runs.empty()) return rows;
  std::vector<std::size_t> cursor(runs.size(), 0);
  for (long point = interval; point <= total_steps; point += interval) {
    std::vector<double> values;
    bool complete = true;
    for (std::size_t k = 0; k < runs.size(); ++k) {
      const auto& res = runs[k].result;
      if (res.halt_message && res.halt_step < point) {
        complete = false;
        break;
      }
      const auto& eps = res.episodes;
      while (cursor[k] < eps.size() && eps[cursor[k]].steps <= point) ++cursor[k];
      if (cursor[k] == 0) {
        complete = false;
        break;
      }
      values.push_back(eps[cursor[k] - 1].rolling100);
    }
    if (!complete) continue;
    rows.push_back({point, mean_of(values), sample_std(values)});
  }
  return rows;
}

void write_run_csv(std::ostream& out, const SeedRun& run) {
  out << "seed,episode,steps,return,rolling100\n";
  for (const auto& e : run.result.episodes) {
    out << run.seed << ',' << e.episode << ',' << e.steps << ',' << format_number(e.episode_return)
        << ',' << format_number(e.rolling100) << '\n';
  }
  if (run.result.halt_message) {
    out << "# halted at step " << run.result.halt_step << ": " << *run.result.halt_message
        << '\n';
  }
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "steps,mean_rolling100,std_rolling100\n";
  for (const auto& r : rows) {
    out << r.steps << ',' << format_number(r.mean_rolling100) << ','
        << format_number(r.std_rolling100) << '\n';
  }
}

bool RunOutput::halted() const {
  return std::any_of(runs.begin(), runs.end(),
                     [](const SeedRun& r) { return r.result.halt_message.has_value(); });
}

namespace {

std::vector<double> final_values(const std::vector<SeedRun>& runs) {
  std::vector<double> v;
  for (const auto& r : runs)
    if (!r.result.episodes.empty()) v.push_back(r.result.episodes.back().rolling100);
  return v;
}

}  // namespace

double RunOutput::final_mean() const {
  const auto v = final_values(runs);
  return v.empty() ? std::nan("") : mean_of(v);
}

double RunOutput::final_std() const { return sample_std(final_values(runs)); }

RunOutput run(const ExperimentConfig& config) {
  config.validate();
  fs::create_directories(config.out_dir);
  std::vector<Job> jobs;
  for (std::size_t k = 0; k < config.seeds.size(); ++k) jobs.push_back({config.agent.alpha, k});
  const std::vector<agent::GdpgConfig> configs(jobs.size(), config.agent);
  return finish(config, train_all(config, jobs, configs), "", "summary.csv");
}

std::vector<AlphaResult> sweep_alpha(const ExperimentConfig& config,
                                     const std::vector<double>& alphas) {
  require(!alphas.empty(), "alpha list must not be empty");
  require(std::set<double>(alphas.begin(), alphas.end()).size() == alphas.size(),
          "alpha values must be distinct");
  ExperimentConfig base = config;
  base.agent.mode = agent::Mode::gdpg;
  for (double a : alphas) {
    base.agent.alpha = a;
    base.validate();
  }
  fs::create_directories(base.out_dir);

  std::vector<Job> jobs;
  std::vector<agent::GdpgConfig> configs;
  for (double a : alphas) {
    for (std::size_t k = 0; k < base.seeds.size(); ++k) {
      jobs.push_back({a, k});
      configs.push_back(base.agent);
      configs.back().alpha = a;
    }
  }
  auto all = train_all(base, jobs, configs);

  std::vector<AlphaResult> results;
  const std::size_t per_alpha = base.seeds.size();
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    std::vector<SeedRun> runs(std::make_move_iterator(all.begin() + i * per_alpha),
                              std::make_move_iterator(all.begin() + (i + 1) * per_alpha));
    const auto tag = alpha_tag(alphas[i]);
    results.push_back({alphas[i], finish(base, std::move(runs), tag, "summary" + tag + ".csv")});
  }

  const auto path = fs::path(base.out_dir) / "alpha_comparison.csv";
  write_file(path, [&](std::ostream& o) {
    o << "alpha,final_mean_rolling100,final_std_rolling100,seeds,halted\n";
    for (const auto& r : results) {
      o << format_number(r.alpha) << ',' << format_number(r.output.final_mean()) << ','
        << format_number(r.output.final_std()) << ',' << r.output.runs.size() << ','
        << (r.output.halted() ? 1 : 0) << '\n';
    }
  });
  for (auto& r : results) r.output.files.push_back(path.string());
  return results;
}

// ---------------------------------------------------------------------------
// Analysis

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::converged: return "converged";
    case Verdict::diverged: return "diverged";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

void write_report(std::ostream& out, const std::string& env_id,
                  const theory::ConvergenceReport& r, const std::vector<GammaVerdict>& verdicts) {
  out << "env=" << env_id << '\n';
  out << "n=" << r.n << '\n';
  out << "c=" << format_number(r.c) << '\n';
  out << "gamma_threshold=" << format_number(r.gamma_threshold) << '\n';
  out << "max_mixing=" << format_number(r.max_mixing) << '\n';
  out << "general_gamma_threshold=" << format_number(r.general_gamma_threshold()) << '\n';
  out << "cond_a1=" << (r.cond_a1 ? "true" : "false") << '\n';
  out << "a1_margin=" << format_number(r.a1_margin) << '\n';
  out << "cond_a2=" << (r.cond_a2 ? "true" : "false") << '\n';
  out << "worst_chain_radius=" << format_number(r.worst_chain_radius) << '\n';
  out << "radii_converged=" << (r.radii_converged ? "true" : "false") << '\n';
  out << "samples_used=" << r.samples_used << '\n';
  out << "chains_used=" << r.chains_used << '\n';
  out << "jacobians=" << (r.finite_difference_jacobians ? "finite_difference" : "analytic")
      << '\n';
  for (const auto& v : verdicts)
    out << "verdict_gamma_" << format_number(v.gamma) << '=' << to_string(v.verdict) << '\n';
}

AnalyzeOutput analyze(const AnalyzeConfig& config) {
  const auto environment = env::make_env(config.env_id, config.env_options);
  const auto& e = *environment;
  require(config.state_samples >= 1, "state_samples must be positive");
  require(config.chain_length >= 1, "chain_length must be positive");
  require(!config.gammas.empty(), "gamma grid must not be empty");
  for (double g : config.gammas) require(g >= 0.0 && g < 1.0, "gamma must lie in [0, 1)");

  theory::FixedPolicy policy = [&] {
    if (!config.checkpoint.empty()) {
      nn::Mlp actor = agent::load_actor(config.checkpoint);
      require(actor.input_dim() == e.state_dim() && actor.output_dim() == e.action_dim(),
              "checkpoint actor does not fit environment " + config.env_id);
      return theory::FixedPolicy::network(std::move(actor));
    }
    if (config.constant_action) {
      require(config.constant_action->size() == e.action_dim(),
              "constant action has the wrong dimension");
      return theory::FixedPolicy::constant(*config.constant_action);
    }
    Vector theta = e.action_high();
    for (Eigen::Index i = 0; i < theta.size(); ++i)
      if (!std::isfinite(theta(i))) theta(i) = 1.0;
    return theory::FixedPolicy::constant(theta);
  }();

  const bool fd = !e.has_analytic_jacobians();
  env::Rng rng = agent::make_stream(config.seed, 0xa11a);
  AnalyzeOutput out;
  out.report =
      theory::convergence_report(e, policy, config.state_samples, config.chain_length, rng, fd);

  const bool example1 = config.env_id == "linear_example1" && policy.is_constant();
  for (double g : config.gammas) {
    Verdict v = Verdict::inconclusive;
    if (example1) {
      v = theory::example1_verdict(g) == theory::SeriesVerdict::converged ? Verdict::converged
                                                                          : Verdict::diverged;
    } else if (g < out.report.general_gamma_threshold() && out.report.cond_a2) {
      v = Verdict::converged;
    }
    out.verdicts.push_back({g, v});
  }

  const fs::path dir(config.out_dir);
  fs::create_directories(dir);
  const auto report_path = dir / (config.env_id + "_report.txt");
  write_file(report_path,
             [&](std::ostream& o) { write_report(o, config.env_id, out.report, out.verdicts); });
  out.files.push_back(report_path.string());

  const auto verdict_path = dir / (config.env_id + "_verdicts.csv");
  write_file(verdict_path, [&](std::ostream& o) {
    o << "gamma,verdict\n";
    for (const auto& v : out.verdicts) o << format_number(v.gamma) << ',' << to_string(v.verdict) << '\n';
  });
  out.files.push_back(verdict_path.string());

  if (example1) {
    const Vector theta = policy.parameters();
    const auto sums_path = dir / "example1_partial_sums.csv";
    write_file(sums_path, [&](std::ostream& o) {
      o << "gamma,terms,partial_sum_1,partial_sum_2,diverged\n";
      for (double g : config.gammas) {
        for (int t = 1; t <= config.series_terms; ++t) {
          const auto s = theory::example1_grad_value(theta, g, t);
          o << format_number(g) << ',' << t << ',' << format_number(s.partial_sum(0)) << ','
            << format_number(s.partial_sum(1)) << ',' << (s.diverged ? 1 : 0) << '\n';
        }
      }
    });
    out.files.push_back(sums_path.string());
  }
  return out;
}

}  // namespace gdpg::harness
