#pragma once
// Effect-estimation errors, latent-recovery score and replication summaries.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "icevae/tensor.hpp"

namespace icevae::eval {

/// (tau_true - tau_hat)^2.
double ate_error(double tau_true, double tau_hat);
/// Mean squared difference. Throws UsageError on a length mismatch or empty input.
double pehe(std::span<const double> tau_true, std::span<const double> tau_hat);

enum class Correlation { spearman, pearson };

struct MccResult {
  double score = 0.0;
  std::vector<std::size_t> assignment;          // true column i matched to estimated column assignment[i]
  std::vector<double> matched;                  // |corr| per matched pair
  std::vector<std::vector<double>> abs_corr;    // d_z x d_z
};

/// Mean absolute correlation after optimal column matching. Throws
/// DimensionError on shape mismatch, UsageError for fewer than 3 rows and
/// DomainError when a column is constant.
MccResult mcc(const Tensor& z_true, const Tensor& z_hat, Correlation flavor = Correlation::spearman);

/// Permutation maximizing sum weight[i][p[i]] for a square matrix.
/// Exact for n <= 20, greedy beyond.
std::vector<std::size_t> max_weight_assignment(const std::vector<std::vector<double>>& weight);

/// Average ranks (ties share the mean rank), 1-based.
std::vector<double> ranks(std::span<const double> values);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample std, 0 for a single value
};
Summary summarize(std::span<const double> values);

struct ReplicationResult {
  std::uint64_t seed = 0;
  double ate_error = 0.0;
  std::optional<double> pehe;
  std::optional<double> mcc;
};

struct MetricsReport {
  std::string method;
  std::string scenario;
  std::vector<std::uint64_t> seeds;
  std::vector<double> ate_errors;
  std::vector<double> pehes;  // empty when the method has no per-unit estimate
  std::vector<double> mccs;   // empty when not applicable
  Summary ate;
  std::optional<Summary> pehe;
  std::optional<Summary> mcc;

  nlohmann::ordered_json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

/// Throws UsageError on an empty list or when an optional metric is present
/// for only some replications.
MetricsReport aggregate(std::string method, std::string scenario, std::span<const ReplicationResult> results);

/// Long-format scatter data: one block per (true_dim, est_dim) pair with a
/// matched flag from the assignment.
void scatter_export(const Tensor& z_true, const Tensor& z_hat, const MccResult& result, const std::string& path);

}  // namespace icevae::eval
