#ifndef GDPG_HARNESS_HPP
#define GDPG_HARNESS_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gdpg/agent.hpp"
#include "gdpg/env.hpp"
#include "gdpg/theory.hpp"

namespace gdpg::harness {

struct ExperimentConfig {
  std::string env_id = "complex_point";
  env::EnvOptions env_options;
  agent::GdpgConfig agent;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::string out_dir = default_output_dir();
  int workers = 1;
  /// Summary rows are taken every this many environment steps.
  long eval_interval = 1000;

  /// $GDPG_LAB_OUT if set, otherwise "gdpg_out".
  static std::string default_output_dir();

  /// Throws ContractViolation on an unknown env, duplicate or missing seeds,
  /// or an invalid agent configuration.
  void validate() const;
};

/// Applies one `key=value` setting. Keys mirror the config file format
/// documented in the README; unknown keys throw ContractViolation.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);

/// Reads `key = value` lines ('#' starts a comment) on top of `config`.
void load_config_file(ExperimentConfig& config, const std::string& path);

/// "0,1,2" -> {0, 1, 2}.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);
std::vector<double> parse_double_list(const std::string& text);

/// printf("%.9g").
std::string format_number(double value);

struct SummaryRow {
  long steps = 0;
  double mean_rolling100 = 0.0;
  /// Sample standard deviation across seeds; 0 with a single seed.
  double std_rolling100 = 0.0;
};

struct SeedRun {
  std::uint64_t seed = 0;
  agent::TrainResult result;
};

/// At every multiple of `interval` up to `total_steps`, aggregates each
/// seed's most recent rolling-100 value. A point is emitted only once every
/// seed has finished an episode, and only while no seed has halted.
std::vector<SummaryRow> summarize(const std::vector<SeedRun>& runs, long total_steps,
                                  long interval);

void write_run_csv(std::ostream& out, const SeedRun& run);
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);

struct RunOutput {
  std::vector<SeedRun> runs;
  std::vector<SummaryRow> summary;
  std::vector<std::string> files;

  bool halted() const;
  /// Mean and sample std of the last rolling-100 value per seed.
  double final_mean() const;
  double final_std() const;
};

/// Trains every seed (up to `workers` at a time), then writes
/// `<env>_seed<k>.csv` per seed and `summary.csv` into out_dir.
RunOutput run(const ExperimentConfig& config);

struct AlphaResult {
  double alpha = 0.0;
  RunOutput output;
};

/// Runs gdpg mode once per alpha with shared seeds. Per-alpha files are
/// `<env>_alpha<a>_seed<k>.csv` and `summary_alpha<a>.csv`; the comparison
/// goes to `alpha_comparison.csv`.
std::vector<AlphaResult> sweep_alpha(const ExperimentConfig& config,
                                     const std::vector<double>& alphas);

// ---------------------------------------------------------------------------
// Analysis

struct AnalyzeConfig {
  std::string env_id = "linear_example1";
  env::EnvOptions env_options;
  /// Constant policy mu(s) = theta; defaults to the upper action corner
  /// (all ones for unbounded boxes).
  std::optional<Vector> constant_action;
  /// Checkpoint whose actor is used instead of a constant policy.
  std::string checkpoint;
  std::vector<double> gammas = {0.1, 0.2, 0.3, 0.5, 0.9, 0.99};
  int state_samples = 64;
  int chain_length = 20;
  /// Length of the partial-sum table for linear_example1.
  int series_terms = 200;
  std::uint64_t seed = 0;
  std::string out_dir = ExperimentConfig::default_output_dir();
};

enum class Verdict { converged, diverged, inconclusive };
std::string to_string(Verdict v);

struct GammaVerdict {
  double gamma = 0.0;
  Verdict verdict = Verdict::inconclusive;
};

struct AnalyzeOutput {
  theory::ConvergenceReport report;
  std::vector<GammaVerdict> verdicts;
  std::vector<std::string> files;
};

/// Writes `<env>_report.txt` (key=value), `<env>_verdicts.csv`, and for
/// linear_example1 `example1_partial_sums.csv`. Environments without
/// analytic Jacobians are analysed with finite differences and never get a
/// "diverged" verdict.
AnalyzeOutput analyze(const AnalyzeConfig& config);

void write_report(std::ostream& out, const std::string& env_id,
                  const theory::ConvergenceReport& report,
                  const std::vector<GammaVerdict>& verdicts);

}  // namespace gdpg::harness

#endif  // GDPG_HARNESS_HPP
