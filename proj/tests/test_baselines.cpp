#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "icevae/baselines.hpp"
#include "icevae/errors.hpp"

using namespace icevae;
using namespace icevae::baselines;
using data::Dataset;
using data::Group;

namespace {

Hyperparams hp_for_tests(std::size_t epochs = 60) {
  Hyperparams hp;
  hp.hidden_width = 32;
  hp.n_layers = 2;
  hp.epochs = epochs;
  hp.batch_size = 50;
  hp.learning_rate = 5e-3;
  hp.seed = 8;
  return hp;
}

using Outcome = double (*)(int w, double x1, double z, double noise);

// Observational and experimental units with one covariate; z confounds the
// observational assignment when confound is set.
Dataset make_data(std::size_t n_o, std::size_t n_e, Outcome s_fn, Outcome y_fn, double confound, std::uint64_t seed) {
  Dataset ds(1, 1);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  for (std::size_t i = 0; i < n_o + n_e; ++i) {
    const bool obs = i < n_o;
    const double x = normal(rng), z = normal(rng);
    const double logit = obs ? 0.5 * x + confound * z : 0.0;
    const int w = unif(rng) < 1.0 / (1.0 + std::exp(-logit)) ? 1 : 0;
    const double eps = normal(rng);
    data::Unit u{obs ? Group::observational : Group::experimental, 0, {x}, w, {s_fn(w, x, z, eps)}, std::nullopt};
    if (obs) u.y = y_fn(w, x, z, eps);
    ds.add(u);
  }
  return ds;
}

double zero_fn(int, double, double, double) { return 0.0; }

}  // namespace

TEST_CASE("regressor fits a linear map and checks widths") {
  std::vector<std::vector<double>> f;
  std::vector<double> t;
  for (int i = 0; i < 200; ++i) {
    const double a = (i % 20) / 10.0 - 1.0, b = (i / 20) / 5.0 - 1.0;
    f.push_back({a, b});
    t.push_back(2.0 * a - b + 3.0);
  }
  const Regressor r = Regressor::fit(f, t, hp_for_tests(150), 1);
  CHECK(r.width() == 2);
  const std::vector<double> probe{0.25, -0.5};
  CHECK(r.predict(probe) == doctest::Approx(4.0).epsilon(0.02));
  const std::vector<double> bad{1.0};
  CHECK_THROWS_AS(r.predict(bad), DimensionError);
  CHECK_THROWS_AS(Regressor::fit(f, std::vector<double>{1.0}, hp_for_tests(), 1), DimensionError);
}

TEST_CASE("s-learner recovers a separable unit effect and a null effect") {
  const Dataset unit = make_data(600, 0, zero_fn, [](int w, double, double, double) { return double(w); }, 0.0, 1);
  const auto s = s_learner(unit, hp_for_tests());
  CHECK(std::abs(ate_on(s, unit) - 1.0) < 0.05);

  const Dataset null = make_data(600, 0, zero_fn, [](int, double x, double, double) { return x; }, 0.0, 2);
  CHECK(std::abs(ate_on(s_learner(null, hp_for_tests()), null)) < 0.05);
}

TEST_CASE("t-learner recovers a constant effect pointwise and is deterministic") {
  const Dataset ds = make_data(800, 0, zero_fn, [](int w, double x, double, double) { return 2.0 * w + x; }, 0.0, 3);
  const auto t = t_learner(ds, hp_for_tests());
  for (double x : {-1.0, -0.3, 0.0, 0.6, 1.2}) {
    const std::vector<double> xv{x};
    CHECK(std::abs(t.ite(xv) - 2.0) < 0.1);
  }
  const auto t2 = t_learner(ds, hp_for_tests());
  CHECK(ite_on(t, ds) == ite_on(t2, ds));

  const Dataset same = make_data(800, 0, zero_fn, [](int, double, double, double noise) { return noise; }, 0.0, 4);
  CHECK(std::abs(ate_on(t_learner(same, hp_for_tests()), same)) < 0.1);
}

TEST_CASE("s- and t-learner agree without treatment interactions") {
  const Dataset ds =
      make_data(3000, 0, zero_fn, [](int w, double x, double, double e) { return 1.5 * w + x + 0.3 * e; }, 0.0, 5);
  CHECK(std::abs(ate_on(s_learner(ds, hp_for_tests()), ds) - ate_on(t_learner(ds, hp_for_tests()), ds)) < 0.1);
}

TEST_CASE("single-arm data is rejected") {
  Dataset ds(1, 1);
  ds.add({Group::observational, 0, {0.0}, 1, {0.0}, 1.0});
  ds.add({Group::observational, 0, {1.0}, 1, {0.0}, 2.0});
  CHECK_THROWS_AS(s_learner(ds, hp_for_tests(1)), TrainingError);
  CHECK_THROWS_AS(t_learner(ds, hp_for_tests(1)), TrainingError);
  const Dataset good = make_data(50, 50, zero_fn, zero_fn, 0.0, 6);
  CHECK_THROWS_AS(equi_naive(good.group(Group::observational), ds, hp_for_tests(1)), TrainingError);
  CHECK_THROWS_AS(imputation(good.group(Group::observational), ds, hp_for_tests(1)), TrainingError);
}

TEST_CASE("equi-naive removes an additive confounding bias shared by both horizons") {
  // Both outcomes carry the same bias term c*z, and z drives observational
  // assignment, so the short-term contrast gap equals the long-term one.
  auto s_fn = [](int w, double x, double z, double e) { return 1.0 * w + x + 2.0 * z + 0.2 * e; };
  auto y_fn = [](int w, double x, double z, double e) { return 3.0 * w + 0.5 * x + 2.0 * z + 0.2 * e; };
  const Dataset ds = make_data(3000, 3000, s_fn, y_fn, 1.5, 7);
  const auto est = equi_naive(ds.group(Group::observational), ds.group(Group::experimental), hp_for_tests());
  const Dataset test = ds.group(Group::observational);
  CHECK(std::abs(ate_on(est, test) - 3.0) < 0.2);
}

TEST_CASE("equi-naive bias vanishes when both groups are the same data") {
  const Dataset src = make_data(2000, 0, [](int w, double x, double, double e) { return w + x + 0.1 * e; },
                                [](int w, double x, double, double e) { return 2.0 * w + x + 0.1 * e; }, 0.0, 8);
  Dataset as_exp(1, 1);
  for (auto u : src) {
    u.g = Group::experimental;
    u.y.reset();
    as_exp.add(u);
  }
  const auto est = equi_naive(src, as_exp, hp_for_tests());
  std::vector<std::vector<double>> xs;
  for (int i = 0; i < 100; ++i) xs.push_back({-2.0 + 0.04 * i});
  const auto b = est.bias(xs);
  const auto small = std::count_if(b.begin(), b.end(), [](double v) { return std::abs(v) < 0.05; });
  CHECK(small >= 90);
}

TEST_CASE("equi-naive reduces to the observational contrast without short-term bias") {
  auto s_fn = [](int w, double x, double, double e) { return w + x + 0.1 * e; };
  const Dataset ds = make_data(2000, 2000, s_fn, [](int w, double x, double, double e) { return 2.0 * w + x + 0.1 * e; },
                               0.0, 9);
  const auto est = equi_naive(ds.group(Group::observational), ds.group(Group::experimental), hp_for_tests());
  std::vector<std::vector<double>> xs{{-1.0}, {0.0}, {1.0}};
  for (double b : est.bias(xs)) CHECK(std::abs(b) < 0.1);
  const auto ite = est.ite(xs);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    CHECK(ite[i] == doctest::Approx(est.y_obs[1].predict(xs[i]) - est.y_obs[0].predict(xs[i]) - est.bias(xs[i])));
  }
}

TEST_CASE("imputation with Y equal to S matches the experimental short-term contrast") {
  auto s_fn = [](int w, double x, double z, double e) { return 1.5 * w + x + 0.5 * z + 0.3 * e; };
  auto y_fn = [](int w, double x, double z, double e) { return 1.5 * w + x + 0.5 * z + 0.3 * e; };
  const Dataset ds = make_data(2000, 2000, s_fn, y_fn, 0.0, 10);
  const Dataset exp = ds.group(Group::experimental);
  const auto est = imputation(ds.group(Group::observational), exp, hp_for_tests());
  double sum[2] = {0, 0}, n[2] = {0, 0};
  for (const auto& u : exp) {
    sum[u.w] += u.s[0];
    n[u.w] += 1;
  }
  CHECK(std::abs(est.ate - (sum[1] / n[1] - sum[0] / n[0])) < 0.1);
}

TEST_CASE("imputation finds no effect when there is none") {
  auto s_fn = [](int, double x, double, double e) { return x + e; };
  auto y_fn = [](int, double x, double, double e) { return x + e + 0.5; };
  const Dataset ds = make_data(2000, 2000, s_fn, y_fn, 0.0, 11);
  const Dataset exp = ds.group(Group::experimental);
  const auto est = imputation(ds.group(Group::observational), exp, hp_for_tests());
  // Standard error of the difference in means of y ~ x + e across arms.
  const double se = std::sqrt(2.0 / (exp.size() / 2.0) * 2.0);
  CHECK(std::abs(est.ate) < 3.0 * se);
}
