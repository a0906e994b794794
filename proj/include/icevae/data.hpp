#pragma once
// Combined observational + experimental samples, synthetic benchmark
// generators with closed-form effect oracles, and the dataset file format.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace icevae::data {

enum class Group : std::uint8_t { observational, experimental };

/// One sampled unit. y is present exactly for observational units.
struct Unit {
  Group g = Group::observational;
  int u = 0;
  std::vector<double> x;
  int w = 0;
  std::vector<double> s;
  std::optional<double> y;

  friend bool operator==(const Unit&, const Unit&) = default;
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t d_x, std::size_t d_s) : d_x_(d_x), d_s_(d_s) {}

  /// Appends a unit after checking widths, w in {0,1} and the y/group rule.
  void add(Unit unit);

  std::size_t size() const { return units_.size(); }
  bool empty() const { return units_.empty(); }
  std::size_t d_x() const { return d_x_; }
  std::size_t d_s() const { return d_s_; }
  const Unit& operator[](std::size_t i) const { return units_[i]; }
  const std::vector<Unit>& units() const { return units_; }
  auto begin() const { return units_.begin(); }
  auto end() const { return units_.end(); }

  std::size_t count(Group g) const;
  std::size_t count(Group g, int w) const;
  std::vector<std::size_t> indices(Group g) const;
  Dataset subset(std::span<const std::size_t> idx) const;
  Dataset group(Group g) const { return subset(indices(g)); }
  /// Throws ConfigError unless both groups are non-empty.
  void require_both_groups() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::size_t d_x_ = 0;
  std::size_t d_s_ = 0;
  std::vector<Unit> units_;
};

/// Oracle values for one unit: latent confounders, tau(x), and both
/// short-term potential outcomes.
struct Truth {
  std::vector<double> z;
  double tau = 0.0;
  std::vector<double> s0;
  std::vector<double> s1;

  friend bool operator==(const Truth&, const Truth&) = default;
};

struct GroundTruth {
  std::size_t d_z = 0;
  std::vector<Truth> rows;

  std::size_t size() const { return rows.size(); }
  const Truth& operator[](std::size_t i) const { return rows[i]; }
  GroundTruth subset(std::span<const std::size_t> idx) const;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct SynthConfig {
  int scenario = 1;
  std::size_t n_o = 2000;
  std::size_t n_e = 2000;
  double beta = 3.0;       // scenario 4 only
  int d_u_levels = 5;      // scenario 5 only: U uniform on {0..d_u_levels-1}
  double noise_std_s = 1.0;
  double noise_std_y = 1.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError on an unknown scenario or invalid sizes.
  void validate() const;
  /// Number of U levels the scenario draws from.
  int u_levels() const { return scenario == 5 ? d_u_levels : 5; }

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

inline constexpr std::size_t kSynthDx = 2;
inline constexpr std::size_t kSynthDs = 1;
inline constexpr std::size_t kSynthDz = 2;

std::pair<Dataset, GroundTruth> generate(const SynthConfig& config);

struct Outcomes {
  double s;
  double y;
};

/// Short- and long-term outcome of a unit under treatment w for the given
/// structural noise draws.
Outcomes structural_outcomes(int scenario, double beta, int w, std::span<const double> x, std::span<const double> z,
                             double eps_s, double eps_y);

/// Closed-form E[Y(1) - Y(0) | X = x].
double true_ite(int scenario, double beta, std::span<const double> x);

struct SupportReport {
  std::size_t distinct_u = 0;
  bool satisfied = false;
};

/// Latent recovery needs at least 2*d_z + 1 distinct auxiliary values.
SupportReport validate_theorem1_support(const Dataset& ds, std::size_t d_z);

struct Split {
  Dataset train;
  GroundTruth train_truth;
  Dataset test;
  GroundTruth test_truth;
};

/// Holds out round(test_fraction * n_obs) observational units for testing;
/// every experimental unit stays in train. Deterministic in seed.
Split split(const Dataset& ds, const GroundTruth& truth, double test_fraction, std::uint64_t seed);

// Dataset file format. Header: g,u,w,x_1..x_dx,s_1..s_ds,y and optionally the
// truth block z_1..z_dz,tau,s0_1..s0_ds,s1_1..s1_ds. Reals use 17 significant
// digits, so read_csv(write_csv(ds)) reproduces every value.
void write_csv(const Dataset& ds, const GroundTruth* truth, const std::filesystem::path& path);

struct LoadedDataset {
  Dataset data;
  std::optional<GroundTruth> truth;
};

/// Throws ParseError naming the offending row and column.
LoadedDataset read_csv(const std::filesystem::path& path);

/// "<stem>.meta.json" next to a dataset file.
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);
void write_sidecar(const SynthConfig& config, const std::filesystem::path& csv_path);
SynthConfig read_sidecar(const std::filesystem::path& csv_path);

}  // namespace icevae::data
