#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "icevae/data.hpp"
#include "icevae/errors.hpp"

namespace icevae::data {

void Dataset::add(Unit unit) {
  if (unit.x.size() != d_x_ || unit.s.size() != d_s_) {
    throw DimensionError("unit " + std::to_string(units_.size()) + " has widths (" + std::to_string(unit.x.size()) +
                         ", " + std::to_string(unit.s.size()) + "), dataset expects (" + std::to_string(d_x_) + ", " +
                         std::to_string(d_s_) + ")");
  }
  if (unit.w != 0 && unit.w != 1) throw DomainError("treatment must be 0 or 1");
  if (unit.y.has_value() != (unit.g == Group::observational)) {
    throw UsageError("long-term outcome must be present exactly for observational units");
  }
  units_.push_back(std::move(unit));
}

std::size_t Dataset::count(Group g) const {
  return static_cast<std::size_t>(std::count_if(units_.begin(), units_.end(), [g](const Unit& u) { return u.g == g; }));
}

std::size_t Dataset::count(Group g, int w) const {
  return static_cast<std::size_t>(
      std::count_if(units_.begin(), units_.end(), [g, w](const Unit& u) { return u.g == g && u.w == w; }));
}

std::vector<std::size_t> Dataset::indices(Group g) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < units_.size(); ++i)
    if (units_[i].g == g) out.push_back(i);
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> idx) const {
  Dataset out(d_x_, d_s_);
  out.units_.reserve(idx.size());
  for (std::size_t i : idx) out.units_.push_back(units_.at(i));
  return out;
}

void Dataset::require_both_groups() const {
  if (count(Group::observational) == 0) throw ConfigError("dataset has no observational units");
  if (count(Group::experimental) == 0) throw ConfigError("dataset has no experimental units");
}

GroundTruth GroundTruth::subset(std::span<const std::size_t> idx) const {
  GroundTruth out;
  out.d_z = d_z;
  out.rows.reserve(idx.size());
  for (std::size_t i : idx) out.rows.push_back(rows.at(i));
  return out;
}

void SynthConfig::validate() const {
  if (scenario < 1 || scenario > 5) throw ConfigError("unknown scenario " + std::to_string(scenario));
  if (n_o == 0 || n_e == 0) throw ConfigError("sample sizes must be positive");
  if (scenario == 5 && d_u_levels < 2) throw ConfigError("d_u_levels must be at least 2");
  if (!(noise_std_s > 0.0) || !(noise_std_y > 0.0)) throw ConfigError("noise stddevs must be positive");
  if (!std::isfinite(beta)) throw ConfigError("beta must be finite");
}

Outcomes structural_outcomes(int scenario, double beta, int w, std::span<const double> x, std::span<const double> z,
                             double eps_s, double eps_y) {
  const double wd = w;
  const double x_sum = x[0] + x[1];
  const double z_sum = z[0] + z[1];
  if (scenario == 3) {
    const double s = 1.0 + wd + (1.5 + 3.0 * wd) * x_sum + z_sum + eps_s;
    const double y = 2.0 + 3.0 * wd + (2.0 + 6.0 * wd) * x_sum + 2.0 * z_sum - s + eps_y;
    return {s, y};
  }
  const double s = 3.0 * wd + (2.0 + wd) * x_sum / 2.0 + z_sum / 2.0 + eps_s;
  double z_coef = 0.0;
  switch (scenario) {
    case 1:
      z_coef = 3.0;
      break;
    case 2:
      z_coef = 0.0;
      break;
    case 4:
      z_coef = beta;
      break;
    case 5:
      z_coef = 1.0;
      break;
    default:
      throw ConfigError("unknown scenario " + std::to_string(scenario));
  }
  const double y = 4.0 * wd + (1.0 + wd) * x_sum / 2.0 + s + z_coef * z_sum / 2.0 + eps_y;
  return {s, y};
}

double true_ite(int scenario, double /*beta*/, std::span<const double> x) {
  if (x.size() != kSynthDx) throw DimensionError("true_ite expects 2 covariates");
  const double x_sum = x[0] + x[1];
  switch (scenario) {
    case 1:
    case 2:
    case 4:
    case 5:
      return 7.0 + x_sum;
    case 3:
      return 2.0 + 3.0 * x_sum;
    default:
      throw ConfigError("unknown scenario " + std::to_string(scenario));
  }
}

std::pair<Dataset, GroundTruth> generate(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> level(0, config.u_levels() - 1);

  const int sc = config.scenario;
  // Scenario 1 is scenario 4 at beta = 3; scenarios 2 and 3 share its covariate and treatment model.
  const double beta = sc == 4 ? config.beta : 3.0;

  Dataset ds(kSynthDx, kSynthDs);
  GroundTruth truth;
  truth.d_z = kSynthDz;
  truth.rows.reserve(config.n_o + config.n_e);

  auto draw_unit = [&](Group g) {
    const int u = level(rng);
    const double ud = u;
    std::vector<double> z(2), x(2);
    if (sc == 5) {
      const double sd = std::sqrt(2.5);
      z[0] = -ud + sd * normal(rng);
      z[1] = 1.5 * ud + sd * normal(rng);
      x[0] = 0.8 * z[0] + 0.4 * z[1] - 1.8 * ud + normal(rng);
      x[1] = 0.4 * z[0] + 0.4 * z[1] + 1.8 * ud + normal(rng);
    } else {
      z[0] = -ud + normal(rng);
      z[1] = 2.0 * ud + normal(rng);
      x[0] = z[0] + 0.5 * ud + normal(rng);
      x[1] = 0.5 * z[1] + ud + normal(rng);
    }
    double logit = 0.0;
    if (g == Group::experimental) {
      logit = (x[0] + x[1]) / 2.0;
    } else {
      const double z_weight = sc == 5 ? 1.0 : beta;
      logit = (x[0] + x[1] + z_weight * (z[0] + z[1])) / 4.0;
    }
    const double p = 1.0 / (1.0 + std::exp(-logit));
    const int w = unif(rng) < p ? 1 : 0;
    const double eps_s = config.noise_std_s * normal(rng);
    const double eps_y = config.noise_std_y * normal(rng);
    const Outcomes o0 = structural_outcomes(sc, beta, 0, x, z, eps_s, eps_y);
    const Outcomes o1 = structural_outcomes(sc, beta, 1, x, z, eps_s, eps_y);
    const Outcomes& fact = w == 1 ? o1 : o0;

    Unit unit;
    unit.g = g;
    unit.u = u;
    unit.x = x;
    unit.w = w;
    unit.s = {fact.s};
    if (g == Group::observational) unit.y = fact.y;
    ds.add(std::move(unit));
    truth.rows.push_back(Truth{z, true_ite(sc, beta, x), {o0.s}, {o1.s}});
  };

  for (std::size_t i = 0; i < config.n_o; ++i) draw_unit(Group::observational);
  for (std::size_t i = 0; i < config.n_e; ++i) draw_unit(Group::experimental);
  return {std::move(ds), std::move(truth)};
}

SupportReport validate_theorem1_support(const Dataset& ds, std::size_t d_z) {
  std::set<int> levels;
  for (const Unit& u : ds) levels.insert(u.u);
  return {levels.size(), levels.size() >= 2 * d_z + 1};
}

Split split(const Dataset& ds, const GroundTruth& truth, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
  if (truth.size() != ds.size()) throw DimensionError("ground truth is not aligned with the dataset");
  std::vector<std::size_t> obs = ds.indices(Group::observational);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(obs.size())));
  if (n_test == 0 || n_test >= obs.size()) throw ConfigError("split leaves an empty partition");

  std::mt19937_64 rng(seed);
  std::shuffle(obs.begin(), obs.end(), rng);
  std::vector<std::size_t> test(obs.begin(), obs.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::sort(test.begin(), test.end());
  std::vector<bool> in_test(ds.size(), false);
  for (std::size_t i : test) in_test[i] = true;
  std::vector<std::size_t> train;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (!in_test[i]) train.push_back(i);
  return {ds.subset(train), truth.subset(train), ds.subset(test), truth.subset(test)};
}

}  // namespace icevae::data
