#include <gtest/gtest.h>

#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gdpg/harness.hpp"

namespace gdpg::harness {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("gdpg_test_" + name)) {
    fs::remove_all(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string str() const { return path_.string(); }
  fs::path operator/(const std::string& f) const { return path_ / f; }

 private:
  fs::path path_;
};

ExperimentConfig quick_config(const std::string& out) {
  ExperimentConfig c;
  c.out_dir = out;
  c.seeds = {0};
  c.agent.hidden = {16, 16};
  c.agent.batch_size = 16;
  c.agent.warmup_steps = 100;
  c.agent.total_steps = 400;
  c.agent.buffer_capacity = 1000;
  c.eval_interval = 100;
  return c;
}

// ---------------------------------------------------------------------------
// Configuration

TEST(Config, RejectsDuplicateAndMissingSeeds) {
  ExperimentConfig c;
  c.seeds = {3, 3};
  EXPECT_THROW(c.validate(), ContractViolation);
  c.seeds = {};
  EXPECT_THROW(c.validate(), ContractViolation);
  c.seeds = {1, 2};
  EXPECT_NO_THROW(c.validate());
  c.env_id = "cartpole";
  EXPECT_THROW(c.validate(), ContractViolation);
}

TEST(Config, ParsesLists) {
  EXPECT_EQ(parse_seed_list("0, 1,7"), (std::vector<std::uint64_t>{0, 1, 7}));
  EXPECT_EQ(parse_double_list("0,0.5,2"), (std::vector<double>{0.0, 0.5, 2.0}));
  EXPECT_THROW(parse_seed_list("1,x"), ContractViolation);
  EXPECT_THROW(parse_seed_list("-1"), ContractViolation);
  EXPECT_TRUE(parse_double_list("").empty());
  EXPECT_THROW(parse_double_list("0.5,abc"), ContractViolation);
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(-5.0), "-5");
}

TEST(Config, AppliesSettings) {
  ExperimentConfig c;
  apply_setting(c, "alpha", "0.25");
  apply_setting(c, " hidden ", " 8,4 ");
  apply_setting(c, "mode", "mdpg");
  apply_setting(c, "noise", "gaussian");
  apply_setting(c, "aux_updates", "false");
  apply_setting(c, "termination_radius", "0.1");
  apply_setting(c, "quadratic_dim", "4");
  EXPECT_EQ(c.agent.alpha, 0.25);
  EXPECT_EQ(c.agent.hidden, (std::vector<int>{8, 4}));
  EXPECT_EQ(c.agent.mode, agent::Mode::mdpg);
  EXPECT_EQ(c.agent.noise, agent::NoiseKind::gaussian);
  EXPECT_FALSE(c.agent.aux_updates);
  EXPECT_EQ(c.env_options.complex_point.termination_radius, 0.1);
  EXPECT_EQ(c.env_options.quadratic.dim, 4);
  EXPECT_THROW(apply_setting(c, "learning_rate", "1"), ContractViolation);
  EXPECT_THROW(apply_setting(c, "alpha", "half"), ContractViolation);
}

TEST(Config, LoadsFile) {
  TempDir dir("config_file");
  fs::create_directories(dir.str());
  const fs::path file = dir / "exp.cfg";
  {
    std::ofstream out(file);
    out << "# ComplexPoint sweep\n\nenv = complex_point\nalpha=0.75   # trailing comment\n"
           "seeds = 4,5\nsteps = 1234\n";
  }
  ExperimentConfig c;
  load_config_file(c, file.string());
  EXPECT_EQ(c.env_id, "complex_point");
  EXPECT_EQ(c.agent.alpha, 0.75);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(c.agent.total_steps, 1234);
  {
    std::ofstream out(file);
    out << "alpha 0.5\n";
  }
  EXPECT_THROW(load_config_file(c, file.string()), ContractViolation);
  EXPECT_THROW(load_config_file(c, (dir / "missing.cfg").string()), ContractViolation);
}

// ---------------------------------------------------------------------------
// Summaries

agent::EpisodeRecord rec(int episode, long steps, double ret, double rolling) {
  return {episode, steps, ret, rolling};
}

TEST(Summarize, TakesLatestRollingValuePerSeed) {
  SeedRun a{0, {}}, b{1, {}};
  a.result.episodes = {rec(0, 50, -3, -3), rec(1, 150, -1, -2), rec(2, 250, -2, -2)};
  b.result.episodes = {rec(0, 120, -4, -4), rec(1, 190, -6, -5)};
  const auto rows = summarize({a, b}, 300, 100);
  // Step 100 is skipped: seed 1 has no finished episode yet.
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].steps, 200);
  EXPECT_DOUBLE_EQ(rows[0].mean_rolling100, (-2.0 + -5.0) / 2.0);
  EXPECT_DOUBLE_EQ(rows[0].std_rolling100, std::sqrt(4.5));
  EXPECT_EQ(rows[1].steps, 300);
  EXPECT_DOUBLE_EQ(rows[1].mean_rolling100, -3.5);
}

TEST(Summarize, StopsAtHalt) {
  SeedRun a{0, {}};
  a.result.episodes = {rec(0, 50, -3, -3)};
  a.result.halt_message = "non-finite critic loss";
  a.result.halt_step = 180;
  const auto rows = summarize({a}, 400, 100);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].steps, 100);
  EXPECT_EQ(rows[0].std_rolling100, 0.0);
}

TEST(RunCsv, HaltRowIsComment) {
  SeedRun a{2, {}};
  a.result.episodes = {rec(0, 10, -1.5, -1.5)};
  a.result.halt_message = "non-finite actor gradient";
  a.result.halt_step = 42;
  std::ostringstream out;
  write_run_csv(out, a);
  EXPECT_EQ(out.str(),
            "seed,episode,steps,return,rolling100\n2,0,10,-1.5,-1.5\n"
            "# halted at step 42: non-finite actor gradient\n");
}

// ---------------------------------------------------------------------------
// Runs

TEST(Run, ZeroStepsGivesHeaderOnlyCsv) {
  TempDir dir("zero_steps");
  ExperimentConfig c = quick_config(dir.str());
  c.agent.total_steps = 0;
  const RunOutput out = run(c);
  EXPECT_EQ(slurp(dir / "complex_point_seed0.csv"), "seed,episode,steps,return,rolling100\n");
  EXPECT_EQ(slurp(dir / "summary.csv"), "steps,mean_rolling100,std_rolling100\n");
  EXPECT_EQ(out.files.size(), 2u);
}

TEST(Run, RejectsDuplicateSeeds) {
  TempDir dir("dup_seeds");
  ExperimentConfig c = quick_config(dir.str());
  c.seeds = {1, 1};
  EXPECT_THROW(run(c), ContractViolation);
  EXPECT_FALSE(fs::exists(dir / "complex_point_seed1.csv"));
}

// Replays a warmup-only run from the published rng streams: uniform actions
// in the box from the sampling stream, environment draws from the env stream.
std::string replay_warmup_csv(std::uint64_t seed, long steps) {
  env::ComplexPointEnv e;
  env::Rng env_rng = agent::make_stream(seed, 7);
  env::Rng action_rng = agent::make_stream(seed, 6);
  std::ostringstream out;
  out << "seed,episode,steps,return,rolling100\n";
  std::deque<double> window;
  Vector s = e.reset(env_rng);
  double ret = 0.0;
  int len = 0, episode = 0;
  for (long t = 0; t < steps; ++t) {
    Vector a(5);
    for (int i = 0; i < 5; ++i)
      a[i] = std::uniform_real_distribution<double>(-0.1, 0.1)(action_rng);
    const env::StepResult r = e.step(s, a, env_rng);
    ret += r.reward;
    ++len;
    s = r.next_state;
    if (r.done || len >= 100) {
      window.push_back(ret);
      if (window.size() > 100) window.pop_front();
      double mean = 0.0;
      for (double x : window) mean += x;
      mean /= static_cast<double>(window.size());
      out << seed << ',' << episode++ << ',' << t + 1 << ',' << format_number(ret) << ','
          << format_number(mean) << '\n';
      s = e.reset(env_rng);
      ret = 0.0;
      len = 0;
    }
  }
  return out.str();
}

TEST(Run, GoldenWarmupOnlyCsv) {
  TempDir dir("golden");
  ExperimentConfig c = quick_config(dir.str());
  c.seeds = {3};
  c.agent.warmup_steps = 1000;
  c.agent.total_steps = 700;
  run(c);
  const std::string csv = slurp(dir / "complex_point_seed3.csv");
  EXPECT_EQ(csv, replay_warmup_csv(3, 700));
  EXPECT_GE(lines(csv).size(), 2u);
}

TEST(Run, WritesSchemaAndIsByteIdenticalOnRerun) {
  TempDir a("rerun_a"), b("rerun_b");
  ExperimentConfig c = quick_config(a.str());
  c.seeds = {0, 1};
  c.workers = 2;
  run(c);
  c.out_dir = b.str();
  c.workers = 1;
  run(c);
  for (const std::string f : {"complex_point_seed0.csv", "complex_point_seed1.csv", "summary.csv"}) {
    const std::string x = slurp(a / f);
    EXPECT_FALSE(x.empty()) << f;
    EXPECT_EQ(x, slurp(b / f)) << f;
  }
  const auto run_lines = lines(slurp(a / "complex_point_seed1.csv"));
  EXPECT_EQ(run_lines.front(), "seed,episode,steps,return,rolling100");
  for (std::size_t i = 1; i < run_lines.size(); ++i) {
    EXPECT_EQ(std::count(run_lines[i].begin(), run_lines[i].end(), ','), 4) << run_lines[i];
    EXPECT_EQ(run_lines[i].rfind("1,", 0), 0u);
  }
  const auto summary = lines(slurp(a / "summary.csv"));
  EXPECT_EQ(summary.front(), "steps,mean_rolling100,std_rolling100");
  EXPECT_GT(summary.size(), 1u);
}

TEST(Run, FinalStatistics) {
  RunOutput out;
  SeedRun a{0, {}}, b{1, {}};
  a.result.episodes = {rec(0, 10, -1, -1), rec(1, 20, -3, -2)};
  b.result.episodes = {rec(0, 10, -4, -4)};
  out.runs = {a, b};
  EXPECT_DOUBLE_EQ(out.final_mean(), -3.0);
  EXPECT_DOUBLE_EQ(out.final_std(), std::sqrt(2.0));
  EXPECT_FALSE(out.halted());
}

// ---------------------------------------------------------------------------
// Alpha sweep

TEST(SweepAlpha, SingleUnitAlphaEqualsDdpgRun) {
  TempDir sweep_dir("sweep_one"), run_dir("sweep_ddpg");
  ExperimentConfig c = quick_config(sweep_dir.str());
  const auto results = sweep_alpha(c, {1.0});
  ASSERT_EQ(results.size(), 1u);
  c.out_dir = run_dir.str();
  c.agent.mode = agent::Mode::ddpg;
  run(c);
  EXPECT_EQ(slurp(sweep_dir / "complex_point_alpha1_seed0.csv"), slurp(run_dir / "complex_point_seed0.csv"));
  EXPECT_EQ(slurp(sweep_dir / "summary_alpha1.csv"), slurp(run_dir / "summary.csv"));
  const auto comparison = lines(slurp(sweep_dir / "alpha_comparison.csv"));
  ASSERT_EQ(comparison.size(), 2u);
  EXPECT_EQ(comparison[0], "alpha,final_mean_rolling100,final_std_rolling100,seeds,halted");
  EXPECT_EQ(comparison[1].rfind("1,", 0), 0u);
}

TEST(SweepAlpha, RejectsEmptyOrRepeatedAlphas) {
  TempDir dir("sweep_bad");
  const ExperimentConfig c = quick_config(dir.str());
  EXPECT_THROW(sweep_alpha(c, {}), ContractViolation);
  EXPECT_THROW(sweep_alpha(c, {0.5, 0.5}), ContractViolation);
  EXPECT_THROW(sweep_alpha(c, {-1.0}), ContractViolation);
}

// ---------------------------------------------------------------------------
// Analysis

TEST(Analyze, LinearExampleVerdicts) {
  TempDir dir("analyze_linear");
  AnalyzeConfig c;
  c.out_dir = dir.str();
  c.gammas = {0.2, 0.3};
  const AnalyzeOutput out = analyze(c);
  ASSERT_EQ(out.verdicts.size(), 2u);
  EXPECT_EQ(out.verdicts[0].verdict, Verdict::converged);
  EXPECT_EQ(out.verdicts[1].verdict, Verdict::diverged);
  EXPECT_DOUBLE_EQ(out.report.gamma_threshold, 0.25);
  EXPECT_EQ(slurp(dir / "linear_example1_verdicts.csv"), "gamma,verdict\n0.2,converged\n0.3,diverged\n");
  const auto table = lines(slurp(dir / "example1_partial_sums.csv"));
  EXPECT_EQ(table.front(), "gamma,terms,partial_sum_1,partial_sum_2,diverged");
  EXPECT_EQ(table[1], "0.2,1,-1.8,-1.8,0");
  const std::string report = slurp(dir / "linear_example1_report.txt");
  EXPECT_NE(report.find("gamma_threshold=0.25\n"), std::string::npos);
  EXPECT_NE(report.find("verdict_gamma_0.3=diverged\n"), std::string::npos);
}

TEST(Analyze, ComplexPointConditions) {
  TempDir dir("analyze_cp");
  AnalyzeConfig c;
  c.env_id = "complex_point";
  c.out_dir = dir.str();
  const AnalyzeOutput out = analyze(c);
  EXPECT_DOUBLE_EQ(out.report.gamma_threshold, 0.2);
  EXPECT_FALSE(out.report.cond_a1);
  EXPECT_TRUE(out.report.cond_a2);
  EXPECT_FALSE(fs::exists(dir / "example1_partial_sums.csv"));
}

TEST(Analyze, PendulumUsesFiniteDifferences) {
  TempDir dir("analyze_pendulum");
  AnalyzeConfig c;
  c.env_id = "pendulum";
  c.out_dir = dir.str();
  c.state_samples = 8;
  const AnalyzeOutput out = analyze(c);
  EXPECT_TRUE(out.report.finite_difference_jacobians);
  EXPECT_GT(out.report.c, 0.0);
  for (const auto& v : out.verdicts) EXPECT_NE(v.verdict, Verdict::diverged);
  EXPECT_NE(slurp(dir / "pendulum_report.txt").find("jacobians=finite_difference"), std::string::npos);
}

TEST(Analyze, UsesCheckpointActor) {
  TempDir dir("analyze_ckpt");
  fs::create_directories(dir.str());
  env::ComplexPointEnv e;
  agent::GdpgConfig ac;
  ac.hidden = {8, 8};
  const agent::GdpgAgent a(e, ac, 1);
  const std::string path = (dir / "ckpt.txt").string();
  agent::save_checkpoint(a, path);
  AnalyzeConfig c;
  c.env_id = "complex_point";
  c.checkpoint = path;
  c.out_dir = dir.str();
  c.state_samples = 4;
  const AnalyzeOutput out = analyze(c);
  EXPECT_DOUBLE_EQ(out.report.c, 1.0);
  EXPECT_LT(out.report.max_mixing, 1.0);
}

}  // namespace
}  // namespace gdpg::harness
