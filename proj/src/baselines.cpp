#include "icevae/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "icevae/autodiff.hpp"
#include "icevae/errors.hpp"
#include "icevae/random.hpp"

namespace icevae::baselines {

using ad::Tape;
using ad::Var;
using data::Dataset;
using data::Group;

Regressor Regressor::fit(std::span<const std::vector<double>> features, std::span<const double> targets,
                         const Hyperparams& hp, std::uint64_t seed) {
  hp.validate();
  if (features.empty()) throw TrainingError("regression needs at least one sample");
  if (features.size() != targets.size()) throw DimensionError("feature and target counts differ");
  const std::size_t width = features.front().size();
  for (const auto& r : features) {
    if (r.size() != width) throw DimensionError("ragged feature rows");
  }

  Regressor reg;
  reg.scaler_ = ColumnScaler::fit(features, width);
  const double n = static_cast<double>(targets.size());
  reg.y_mean_ = std::accumulate(targets.begin(), targets.end(), 0.0) / n;
  double var = 0.0;
  for (double t : targets) var += (t - reg.y_mean_) * (t - reg.y_mean_);
  const double sd = std::sqrt(var / n);
  reg.y_scale_ = sd > 1e-12 ? sd : 1.0;

  std::mt19937_64 rng(derive_seed(seed, 0));
  reg.net_ = nn::Mlp(reg.params_, "regressor", width, hp.hidden_width, hp.n_layers, 1, rng);

  Tensor x = Tensor::matrix(features.size(), width);
  Tensor y = Tensor::matrix(features.size(), 1);
  for (std::size_t i = 0; i < features.size(); ++i) {
    reg.scaler_.to_model(features[i], std::span<double>(x.data() + i * width, width));
    y[i] = (targets[i] - reg.y_mean_) / reg.y_scale_;
  }

  std::mt19937_64 shuffle_rng(derive_seed(seed, 1));
  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const AdamConfig adam{hp.learning_rate};
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t rows = std::min(hp.batch_size, order.size() - start);
      Tensor xb = Tensor::matrix(rows, width);
      Tensor yb = Tensor::matrix(rows, 1);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t i = order[start + r];
        std::copy_n(x.data() + i * width, width, xb.data() + r * width);
        yb[r] = y[i];
      }
      Tape tape;
      Var pred = reg.net_.forward(tape, reg.params_, tape.constant(xb));
      Var loss = ad::scale(ad::sum(ad::square(pred - tape.constant(yb))), 0.5 / static_cast<double>(rows));
      tape.backward(loss);
      adam_step(reg.params_, adam);
    }
  }
  return reg;
}

std::vector<double> Regressor::predict(std::span<const std::vector<double>> rows) const {
  if (rows.empty()) return {};
  const std::size_t width = scaler_.width();
  Tensor x = Tensor::matrix(rows.size(), width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != width) throw DimensionError("regressor expects " + std::to_string(width) + " features");
    scaler_.to_model(rows[i], std::span<double>(x.data() + i * width, width));
  }
  Tape tape;
  const Tensor out = net_.forward(tape, params_, tape.constant(x)).value();
  std::vector<double> pred(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) pred[i] = out[i] * y_scale_ + y_mean_;
  return pred;
}

double Regressor::predict(std::span<const double> features) const {
  const std::vector<std::vector<double>> one{std::vector<double>(features.begin(), features.end())};
  return predict(std::span<const std::vector<double>>(one)).front();
}

namespace {

void require_arms(const Dataset& ds, Group g, const char* what) {
  if (ds.count(g, 0) == 0 || ds.count(g, 1) == 0) {
    throw TrainingError(std::string(what) + " data must contain both treatment arms");
  }
}

std::vector<double> with_w(std::span<const double> x, double w) {
  std::vector<double> f(x.begin(), x.end());
  f.push_back(w);
  return f;
}

struct Columns {
  std::vector<std::vector<double>> features;
  std::vector<double> targets;
};

Regressor fit_arm(const Dataset& ds, Group g, int w, const Hyperparams& hp, std::uint64_t seed,
                  double (*target)(const data::Unit&, std::size_t), std::size_t column = 0) {
  Columns c;
  for (const auto& u : ds) {
    if (u.g != g || u.w != w) continue;
    c.features.push_back(u.x);
    c.targets.push_back(target(u, column));
  }
  return Regressor::fit(c.features, c.targets, hp, seed);
}

double y_of(const data::Unit& u, std::size_t) { return *u.y; }
double s_of(const data::Unit& u, std::size_t j) { return u.s[j]; }

}  // namespace

namespace {

std::vector<double> minus(std::vector<double> a, const std::vector<double>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
  return a;
}

std::vector<std::vector<double>> with_w(std::span<const std::vector<double>> xs, double w) {
  std::vector<std::vector<double>> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(with_w(x, w));
  return out;
}

std::vector<std::vector<double>> one_row(std::span<const double> x) {
  return {std::vector<double>(x.begin(), x.end())};
}

}  // namespace

std::vector<double> SLearner::ite(std::span<const std::vector<double>> xs) const {
  return minus(f.predict(with_w(xs, 1.0)), f.predict(with_w(xs, 0.0)));
}

double SLearner::ite(std::span<const double> x) const { return ite(one_row(x)).front(); }

std::vector<double> TLearner::ite(std::span<const std::vector<double>> xs) const {
  return minus(f1.predict(xs), f0.predict(xs));
}

double TLearner::ite(std::span<const double> x) const { return ite(one_row(x)).front(); }

std::vector<double> EquiNaive::bias(std::span<const std::vector<double>> xs) const {
  const std::size_t d_s = s_obs[0].size();
  std::vector<double> b(xs.size(), 0.0);
  for (std::size_t j = 0; j < d_s; ++j) {
    const auto obs_contrast = minus(s_obs[1][j].predict(xs), s_obs[0][j].predict(xs));
    const auto exp_contrast = minus(s_exp[1][j].predict(xs), s_exp[0][j].predict(xs));
    for (std::size_t i = 0; i < xs.size(); ++i) b[i] += (obs_contrast[i] - exp_contrast[i]) / static_cast<double>(d_s);
  }
  return b;
}

double EquiNaive::bias(std::span<const double> x) const { return bias(one_row(x)).front(); }

std::vector<double> EquiNaive::ite(std::span<const std::vector<double>> xs) const {
  return minus(minus(y_obs[1].predict(xs), y_obs[0].predict(xs)), bias(xs));
}

double EquiNaive::ite(std::span<const double> x) const { return ite(one_row(x)).front(); }

SLearner s_learner(const Dataset& obs, const Hyperparams& hp) {
  require_arms(obs, Group::observational, "observational");
  Columns c;
  for (const auto& u : obs) {
    if (u.g != Group::observational) continue;
    c.features.push_back(with_w(u.x, u.w));
    c.targets.push_back(*u.y);
  }
  return {Regressor::fit(c.features, c.targets, hp, derive_seed(hp.seed, 101))};
}

TLearner t_learner(const Dataset& obs, const Hyperparams& hp) {
  require_arms(obs, Group::observational, "observational");
  return {fit_arm(obs, Group::observational, 0, hp, derive_seed(hp.seed, 201), y_of),
          fit_arm(obs, Group::observational, 1, hp, derive_seed(hp.seed, 202), y_of)};
}

EquiNaive equi_naive(const Dataset& obs, const Dataset& exp, const Hyperparams& hp) {
  require_arms(obs, Group::observational, "observational");
  require_arms(exp, Group::experimental, "experimental");
  if (obs.d_s() != exp.d_s() || obs.d_x() != exp.d_x()) throw DimensionError("group schemas differ");
  EquiNaive est;
  std::uint64_t counter = 300;
  for (int w = 0; w < 2; ++w) {
    for (std::size_t j = 0; j < obs.d_s(); ++j) {
      // Both groups share a seed so that their difference carries no init noise.
      const std::uint64_t seed = derive_seed(hp.seed, ++counter);
      est.s_obs[w].push_back(fit_arm(obs, Group::observational, w, hp, seed, s_of, j));
      est.s_exp[w].push_back(fit_arm(exp, Group::experimental, w, hp, seed, s_of, j));
    }
    est.y_obs[w] = fit_arm(obs, Group::observational, w, hp, derive_seed(hp.seed, ++counter), y_of);
  }
  return est;
}

Imputation imputation(const Dataset& obs, const Dataset& exp, const Hyperparams& hp) {
  require_arms(exp, Group::experimental, "experimental");
  auto features = [](const data::Unit& u) {
    std::vector<double> f{static_cast<double>(u.w)};
    f.insert(f.end(), u.x.begin(), u.x.end());
    f.insert(f.end(), u.s.begin(), u.s.end());
    return f;
  };
  Columns c;
  for (const auto& u : obs) {
    if (u.g != Group::observational) continue;
    c.features.push_back(features(u));
    c.targets.push_back(*u.y);
  }
  if (c.features.empty()) throw TrainingError("observational data is empty");
  Imputation est{Regressor::fit(c.features, c.targets, hp, derive_seed(hp.seed, 401))};

  std::vector<std::vector<double>> rows;
  std::vector<int> arm;
  for (const auto& u : exp) {
    if (u.g != Group::experimental) continue;
    rows.push_back(features(u));
    arm.push_back(u.w);
  }
  const auto y_hat = est.g.predict(rows);
  double sum[2] = {0.0, 0.0};
  double n[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < y_hat.size(); ++i) {
    sum[arm[i]] += y_hat[i];
    n[arm[i]] += 1.0;
  }
  est.ate = sum[1] / n[1] - sum[0] / n[0];
  return est;
}

}  // namespace icevae::baselines
