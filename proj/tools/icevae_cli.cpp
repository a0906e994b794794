// icevae: generate synthetic datasets, run the estimators and render tables.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "icevae/errors.hpp"
#include "icevae/experiment.hpp"

namespace fs = std::filesystem;
using icevae::experiment::ExperimentConfig;

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string mode;
};

// --config takes a JSON file or the name of a preset experiment.
ExperimentConfig resolve(const Flags& f) {
  ExperimentConfig c;
  if (f.config.empty()) {
    c = ExperimentConfig::named("table1");
  } else if (fs::exists(f.config)) {
    c = ExperimentConfig::load(f.config);
  } else {
    c = ExperimentConfig::named(f.config);
  }
  if (!f.out.empty()) c.output_dir = f.out;
  if (f.seed) c.master_seed = *f.seed;
  return c;
}

icevae::experiment::RunOptions run_options(const Flags& f) {
  icevae::experiment::RunOptions o;
  o.jobs = f.jobs;
  if (!f.mode.empty()) o.mode = icevae::parse_training_mode(f.mode);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-term treatment effect estimation from experimental and observational data"};
  app.require_subcommand(1);
  Flags flags;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", flags.config, "Experiment config JSON, or a preset: table1, beta_sweep, du_sweep, "
                                              "expsize_sweep, custom");
    cmd->add_option("--out", flags.out, "Output directory");
    cmd->add_option("--seed", flags.seed, "Master seed");
  };
  auto add_run = [&](CLI::App* cmd) {
    cmd->add_option("--jobs", flags.jobs, "Parallel jobs")->check(CLI::PositiveNumber);
    cmd->add_option("--mode", flags.mode, "ICEVAE training mode")->check(CLI::IsMember({"two_phase", "joint"}));
  };

  auto* generate = app.add_subcommand("generate", "Write the synthetic datasets of an experiment");
  add_common(generate);
  auto* run = app.add_subcommand("run", "Train and score every method on the generated datasets");
  add_common(run);
  add_run(run);
  auto* report = app.add_subcommand("report", "Render the result tables of an output directory");
  report->add_option("--out", flags.out, "Output directory holding reports")->required();
  auto* repro = app.add_subcommand("reproduce", "generate, run and report all four named experiments");
  repro->add_option("--out", flags.out, "Output root (default: out)");
  repro->add_option("--seed", flags.seed, "Master seed");
  add_run(repro);

  CLI11_PARSE(app, argc, argv);

  std::string stage = "config";
  try {
    if (*generate) {
      const auto c = resolve(flags);
      stage = "generate";
      icevae::experiment::cmd_generate(c);
      std::cout << "datasets written to " << c.output_dir.string() << '\n';
    } else if (*run) {
      const auto c = resolve(flags);
      const auto opts = run_options(flags);
      stage = "run";
      const auto reports = icevae::experiment::cmd_run(c, opts);
      std::cout << reports.size() << " reports written to " << (c.output_dir / "reports").string() << '\n';
    } else if (*report) {
      stage = "report";
      std::cout << icevae::experiment::cmd_report(flags.out);
    } else if (*repro) {
      const auto opts = run_options(flags);
      stage = "reproduce";
      icevae::experiment::reproduce(flags.out.empty() ? fs::path("out") : fs::path(flags.out), flags.seed.value_or(0),
                                    opts);
    }
  } catch (const icevae::ConfigError& e) {
    std::cerr << "icevae: " << stage << " failed: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "icevae: " << stage << " failed: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
