#pragma once
// Reproduction harness: named experiments, seeded replication loops and the
// generate / run / report pipeline over an output directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "icevae/data.hpp"
#include "icevae/metrics.hpp"
#include "icevae/model.hpp"

namespace icevae::experiment {

inline constexpr const char* kCodeVersion = "icevae 0.1.0";

inline const std::vector<std::string> kMethods = {"icevae", "s_learner", "t_learner", "equi_naive", "imputation"};
inline const std::vector<std::string> kExperiments = {"table1", "beta_sweep", "du_sweep", "expsize_sweep", "custom"};

/// One data-generating setting of an experiment, e.g. "beta_1.5".
struct Cell {
  std::string name;
  data::SynthConfig synth;
};

struct ExperimentConfig {
  std::string experiment = "table1";
  std::vector<int> scenarios = {1, 2, 3};  // table1 and custom
  std::vector<std::string> methods = kMethods;
  std::size_t replications = 5;
  std::uint64_t master_seed = 0;
  std::size_t n_o = 2000;
  std::size_t n_e = 2000;
  double beta = 3.0;        // custom only
  int d_u_levels = 5;       // custom only
  std::vector<double> betas = {1.0, 1.5, 3.0, 4.5, 5.0};
  std::vector<int> du_levels = {3, 4, 5, 6, 7};
  std::vector<std::size_t> n_e_values = {50, 150, 250, 500, 2000, 10000};
  double test_fraction = 0.2;
  bool export_scatter = false;
  std::filesystem::path output_dir = "out";
  /// Hyperparameter fields; an array value makes that field a grid axis.
  nlohmann::ordered_json hyperparameters = nlohmann::ordered_json::object();

  /// Preset for a named experiment. Throws ConfigError for unknown names.
  static ExperimentConfig named(const std::string& name);
  /// Throws ConfigError on unknown keys, bad types or invalid values.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;

  void validate() const;
  std::vector<Cell> cells() const;
  /// Cartesian product of the hyperparameter grid, in field declaration order.
  std::vector<Hyperparams> grid() const;
  /// FNV-1a 64 of the canonical JSON form, as 16 hex digits.
  std::string hash() const;
  std::vector<std::uint64_t> replication_seeds() const;
};

/// Seed of replication r: derive_seed(master, r).
std::uint64_t replication_seed(std::uint64_t master, std::size_t r);

std::filesystem::path dataset_path(const std::filesystem::path& out, const std::string& cell, std::size_t rep);

struct EvalInputs {
  data::Dataset obs_train;
  data::Dataset exp;
  data::Dataset test;
  data::GroundTruth test_truth;
};

/// Holds out test_fraction of the observational units.
EvalInputs prepare(const data::Dataset& ds, const data::GroundTruth& truth, double test_fraction,
                   std::uint64_t split_seed);

/// Fits one method and scores it on the held-out units. MCC is reported for
/// icevae only. When scatter_path is set and MCC applies, the latent scatter
/// data is written there.
eval::ReplicationResult evaluate_method(const std::string& method, const EvalInputs& in, const Hyperparams& hp,
                                        std::uint64_t seed, const std::optional<std::filesystem::path>& scatter_path = {});

struct RunOptions {
  std::size_t jobs = 1;
  std::optional<TrainingMode> mode;
};

void cmd_generate(const ExperimentConfig& config);
/// Returns the aggregated reports in cell, grid point, method order.
std::vector<eval::MetricsReport> cmd_run(const ExperimentConfig& config, const RunOptions& options = {});
/// Renders tables/<experiment>.csv and .txt under dir and returns the text table.
std::string cmd_report(const std::filesystem::path& dir);
/// generate + run + report for the four named experiments under out/<name>.
void reproduce(const std::filesystem::path& out, std::uint64_t master_seed, const RunOptions& options);

/// Rewrites out/manifest.json listing every file under out.
void write_manifest(const ExperimentConfig& config);

}  // namespace icevae::experiment
