#pragma once
// Reference estimators built from plain MLP regressions.

#include <cstdint>
#include <span>
#include <vector>

#include "icevae/data.hpp"
#include "icevae/errors.hpp"
#include "icevae/model.hpp"
#include "icevae/nn.hpp"
#include "icevae/param_store.hpp"

namespace icevae::baselines {

/// Scalar MLP regression trained with a unit-variance Gaussian likelihood.
/// Features and target are standardized internally.
class Regressor {
 public:
  static Regressor fit(std::span<const std::vector<double>> features, std::span<const double> targets,
                       const Hyperparams& hp, std::uint64_t seed);

  std::size_t width() const { return scaler_.width(); }
  double predict(std::span<const double> features) const;
  std::vector<double> predict(std::span<const std::vector<double>> rows) const;

 private:
  ColumnScaler scaler_;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  mutable ParamStore params_;
  nn::Mlp net_;
};

struct SLearner {
  Regressor f;  // features [x, w]
  double ite(std::span<const double> x) const;
  std::vector<double> ite(std::span<const std::vector<double>> xs) const;
};

struct TLearner {
  Regressor f0;
  Regressor f1;
  double ite(std::span<const double> x) const;
  std::vector<double> ite(std::span<const std::vector<double>> xs) const;
};

struct EquiNaive {
  // Index [w] for each group; short-term regressions hold one per S column.
  std::vector<Regressor> s_obs[2];
  std::vector<Regressor> s_exp[2];
  Regressor y_obs[2];

  /// Observational minus experimental short-term contrast, averaged over S columns.
  double bias(std::span<const double> x) const;
  std::vector<double> bias(std::span<const std::vector<double>> xs) const;
  double ite(std::span<const double> x) const;
  std::vector<double> ite(std::span<const std::vector<double>> xs) const;
};

/// ATE-only estimator: imputes y on experimental units, then contrasts arms.
struct Imputation {
  Regressor g;  // features [w, x, s]
  double ate = 0.0;
};

SLearner s_learner(const data::Dataset& obs, const Hyperparams& hp);
TLearner t_learner(const data::Dataset& obs, const Hyperparams& hp);
EquiNaive equi_naive(const data::Dataset& obs, const data::Dataset& exp, const Hyperparams& hp);
Imputation imputation(const data::Dataset& obs, const data::Dataset& exp, const Hyperparams& hp);

template <class Estimator>
std::vector<double> ite_on(const Estimator& est, const data::Dataset& units) {
  std::vector<std::vector<double>> xs;
  xs.reserve(units.size());
  for (const auto& u : units) xs.push_back(u.x);
  return est.ite(std::span<const std::vector<double>>(xs));
}

template <class Estimator>
double ate_on(const Estimator& est, const data::Dataset& units) {
  const auto tau = ite_on(est, units);
  if (tau.empty()) throw UsageError("ate on an empty set");
  double sum = 0.0;
  for (double t : tau) sum += t;
  return sum / static_cast<double>(tau.size());
}

}  // namespace icevae::baselines
