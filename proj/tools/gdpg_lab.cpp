// gdpg_lab: train agents, sweep the actor-gradient weight, and analyse
// gradient existence for a fixed policy.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "gdpg/harness.hpp"

namespace {

using namespace gdpg;

struct CommonFlags {
  std::string config_file;
  std::string env;
  std::string mode;
  std::optional<double> alpha;
  std::optional<double> gamma;
  std::optional<long> steps;
  std::string seeds;
  std::string out;
  std::optional<int> workers;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_file, "key=value configuration file");
  cmd->add_option("--env", f.env, "environment id");
  cmd->add_option("--mode", f.mode, "gdpg, ddpg, mdpg or augmented_only");
  cmd->add_option("--alpha", f.alpha, "weight on the original critic's gradient");
  cmd->add_option("--gamma", f.gamma, "discount factor");
  cmd->add_option("--steps", f.steps, "environment steps per seed");
  cmd->add_option("--seeds", f.seeds, "comma-separated seed list");
  cmd->add_option("--out", f.out, "output directory (default $GDPG_LAB_OUT or gdpg_out)");
  cmd->add_option("--workers", f.workers, "concurrent training runs");
}

harness::ExperimentConfig build_config(const CommonFlags& f) {
  harness::ExperimentConfig c;
  if (!f.config_file.empty()) harness::load_config_file(c, f.config_file);
  if (!f.env.empty()) c.env_id = f.env;
  if (!f.mode.empty()) c.agent.mode = agent::parse_mode(f.mode);
  if (f.alpha) c.agent.alpha = *f.alpha;
  if (f.gamma) c.agent.gamma = *f.gamma;
  if (f.steps) c.agent.total_steps = *f.steps;
  if (!f.seeds.empty()) c.seeds = harness::parse_seed_list(f.seeds);
  if (!f.out.empty()) c.out_dir = f.out;
  if (f.workers) c.workers = *f.workers;
  return c;
}

int report_run(const harness::RunOutput& out) {
  for (const auto& f : out.files) std::cout << "wrote " << f << '\n';
  for (const auto& r : out.runs) {
    if (r.result.halt_message) {
      std::cerr << "seed " << r.seed << " halted at step " << r.result.halt_step << ": "
                << *r.result.halt_message << '\n';
    }
  }
  return out.halted() ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalized deterministic policy gradient lab"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  auto* run_cmd = app.add_subcommand("run", "train one configuration over several seeds");
  add_common(run_cmd, run_flags);

  CommonFlags sweep_flags;
  std::string alphas = "0,0.25,0.5,0.75,1,2";
  auto* sweep_cmd = app.add_subcommand("sweep-alpha", "train once per alpha with shared seeds");
  add_common(sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--alphas", alphas, "comma-separated alpha values");

  CommonFlags analyze_flags;
  std::string gammas;
  std::string theta;
  std::string checkpoint;
  int samples = 64;
  int chain_length = 20;
  int terms = 200;
  auto* analyze_cmd =
      app.add_subcommand("analyze", "convergence conditions and per-gamma verdicts");
  analyze_cmd->add_option("--env", analyze_flags.env, "environment id");
  analyze_cmd->add_option("--gamma", gammas, "comma-separated discount grid");
  analyze_cmd->add_option("--out", analyze_flags.out, "output directory");
  analyze_cmd->add_option("--theta", theta, "constant policy action, comma-separated");
  analyze_cmd->add_option("--checkpoint", checkpoint, "use the actor from this checkpoint");
  analyze_cmd->add_option("--samples", samples, "sampled chains");
  analyze_cmd->add_option("--chain-length", chain_length, "states per chain");
  analyze_cmd->add_option("--terms", terms, "partial-sum table length (linear_example1)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return report_run(harness::run(build_config(run_flags)));

    if (*sweep_cmd) {
      const auto results =
          harness::sweep_alpha(build_config(sweep_flags), harness::parse_double_list(alphas));
      int status = 0;
      for (const auto& r : results) {
        std::cout << "alpha=" << harness::format_number(r.alpha)
                  << " final_mean_rolling100=" << harness::format_number(r.output.final_mean())
                  << '\n';
        status = std::max(status, report_run(r.output));
      }
      return status;
    }

    if (*analyze_cmd) {
      harness::AnalyzeConfig c;
      if (!analyze_flags.env.empty()) c.env_id = analyze_flags.env;
      if (!analyze_flags.out.empty()) c.out_dir = analyze_flags.out;
      if (!gammas.empty()) c.gammas = harness::parse_double_list(gammas);
      if (!theta.empty()) {
        const auto values = harness::parse_double_list(theta);
        c.constant_action = Eigen::Map<const Vector>(values.data(),
                                                     static_cast<Eigen::Index>(values.size()));
      }
      c.checkpoint = checkpoint;
      c.state_samples = samples;
      c.chain_length = chain_length;
      c.series_terms = terms;
      const auto out = harness::analyze(c);
      harness::write_report(std::cout, c.env_id, out.report, out.verdicts);
      for (const auto& f : out.files) std::cout << "wrote " << f << '\n';
      return 0;
    }
  } catch (const ContractViolation& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const UnsupportedCapability& e) {
    std::cerr << "unsupported: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
