#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "icevae/errors.hpp"
#include "icevae/metrics.hpp"

using namespace icevae;
using namespace icevae::eval;
namespace fs = std::filesystem;

namespace {

Tensor gaussian_matrix(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Tensor t = Tensor::matrix(n, d);
  for (double& v : t.values()) v = normal(rng);
  return t;
}

}  // namespace

TEST_CASE("ate error") {
  CHECK(ate_error(2.0, 1.5) == 0.25);
  CHECK(ate_error(3.7, 3.7) == 0.0);
  CHECK(ate_error(1.2, -0.4) == ate_error(-0.4, 1.2));
  CHECK_THROWS_AS(ate_error(INFINITY, 0.0), DomainError);
}

TEST_CASE("pehe") {
  const std::vector<double> a{1, 3}, b{2, 1};
  CHECK(pehe(a, b) == 2.5);
  CHECK(pehe(a, a) == 0.0);
  const std::vector<double> shifted{1.5, 3.5};
  CHECK(pehe(a, shifted) == 0.25);
  const std::vector<double> one{1};
  CHECK_THROWS_AS(pehe(a, one), UsageError);
}

TEST_CASE("average ranks share ties") {
  const std::vector<double> v{3.0, 1.0, 3.0, 2.0};
  CHECK(ranks(v) == std::vector<double>{3.5, 1.0, 3.5, 2.0});
}

TEST_CASE("mcc is invariant to permutation, sign and monotone maps") {
  const Tensor z = gaussian_matrix(500, 3, 1);
  Tensor t = Tensor::matrix(500, 3);
  for (std::size_t r = 0; r < 500; ++r) {
    t(r, 0) = z(r, 2);
    t(r, 1) = -z(r, 0);
    t(r, 2) = std::pow(z(r, 1), 3);
  }
  const auto res = mcc(z, t);
  CHECK(res.score == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(res.assignment == std::vector<std::size_t>{1, 2, 0});

  Tensor one = Tensor::matrix(100, 1), ex = Tensor::matrix(100, 1);
  for (std::size_t r = 0; r < 100; ++r) {
    one(r, 0) = std::sin(0.37 * r) + 0.01 * r;
    ex(r, 0) = std::exp(one(r, 0));
  }
  CHECK(mcc(one, ex).score == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mcc of independent noise is near zero") {
  CHECK(mcc(gaussian_matrix(10000, 2, 2), gaussian_matrix(10000, 2, 3)).score < 0.05);
}

TEST_CASE("mcc preconditions") {
  CHECK_THROWS_AS(mcc(Tensor::matrix(5, 2), Tensor::matrix(5, 3)), DimensionError);
  CHECK_THROWS_AS(mcc(gaussian_matrix(2, 1, 1), gaussian_matrix(2, 1, 2)), UsageError);
  Tensor constant = gaussian_matrix(10, 2, 4);
  for (std::size_t r = 0; r < 10; ++r) constant(r, 1) = 1.0;
  CHECK_THROWS_AS(mcc(constant, gaussian_matrix(10, 2, 5)), DomainError);
}

TEST_CASE("pearson flavor differs from spearman under nonlinear maps") {
  const Tensor z = gaussian_matrix(2000, 1, 6);
  Tensor t = Tensor::matrix(2000, 1);
  for (std::size_t r = 0; r < 2000; ++r) t(r, 0) = std::exp(2.0 * z(r, 0));
  CHECK(mcc(z, t, Correlation::spearman).score == doctest::Approx(1.0));
  CHECK(mcc(z, t, Correlation::pearson).score < 0.9);
}

TEST_CASE("assignment is optimal and a bijection") {
  const std::vector<std::vector<double>> w{{0.9, 0.8, 0.1}, {0.85, 0.1, 0.1}, {0.1, 0.7, 0.6}};
  const auto p = max_weight_assignment(w);
  CHECK(p == std::vector<std::size_t>{1, 0, 2});  // 0.8 + 0.85 + 0.6 beats the greedy 0.9 + 0.1 + 0.7

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + trial % 6;
    std::vector<std::vector<double>> m(n, std::vector<double>(n));
    for (auto& row : m)
      for (double& v : row) v = u(rng);
    const auto got = max_weight_assignment(m);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = -1.0;
    do {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += m[i][perm[i]];
      best = std::max(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    double s = 0.0;
    std::vector<std::size_t> sorted = got;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(sorted[i] == i);
      s += m[i][got[i]];
    }
    CHECK(s == doctest::Approx(best).epsilon(1e-12));
  }
  std::vector<std::vector<double>> big(25, std::vector<double>(25, 0.0));
  for (std::size_t i = 0; i < 25; ++i) big[i][(i + 3) % 25] = 1.0;
  const auto g = max_weight_assignment(big);
  for (std::size_t i = 0; i < 25; ++i) CHECK(g[i] == (i + 3) % 25);
}

TEST_CASE("aggregate uses the sample standard deviation") {
  std::vector<ReplicationResult> rs(3);
  for (int i = 0; i < 3; ++i) {
    rs[i].seed = i;
    rs[i].ate_error = i + 1.0;
    rs[i].pehe = 5.0;
  }
  const auto rep = aggregate("icevae", "synthetic1", rs);
  CHECK(rep.ate.mean == 2.0);
  CHECK(rep.ate.std == 1.0);
  REQUIRE(rep.pehe);
  CHECK(rep.pehe->mean == 5.0);
  CHECK(rep.pehe->std == 0.0);
  CHECK_FALSE(rep.mcc);

  std::reverse(rs.begin(), rs.end());
  const auto rev = aggregate("icevae", "synthetic1", rs);
  CHECK(rev.ate.mean == rep.ate.mean);
  CHECK(rev.ate.std == rep.ate.std);

  const auto single = aggregate("m", "s", std::span(rs).first(1));
  CHECK(single.ate.std == 0.0);
  CHECK_THROWS_AS(aggregate("m", "s", {}), UsageError);
  rs[1].pehe.reset();
  CHECK_THROWS_AS(aggregate("m", "s", rs), UsageError);
}

TEST_CASE("summaries stay consistent with the stored lists") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal(3.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ReplicationResult> rs(2 + trial % 5);
    for (auto& r : rs) {
      r.ate_error = normal(rng);
      r.mcc = normal(rng);
    }
    const auto rep = aggregate("m", "s", rs);
    const auto round = MetricsReport::from_json(nlohmann::json::parse(rep.to_json().dump()));
    CHECK(round.ate_errors == rep.ate_errors);
    CHECK(round.mccs == rep.mccs);
    CHECK(std::abs(round.ate.mean - rep.ate.mean) < 1e-12);
    CHECK(std::abs(round.mcc->std - rep.mcc->std) < 1e-12);
    CHECK(round.pehes.empty());
  }
}

TEST_CASE("scatter export writes one block per dimension pair") {
  const Tensor z = gaussian_matrix(100, 2, 9);
  Tensor t = Tensor::matrix(100, 2);
  for (std::size_t r = 0; r < 100; ++r) {
    t(r, 0) = z(r, 1);
    t(r, 1) = z(r, 0);
  }
  const auto res = mcc(z, t);
  const fs::path p = fs::temp_directory_path() / "icevae_scatter.csv";
  scatter_export(z, t, res, p.string());
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  CHECK(line == "true_dim,est_dim,true_value,est_value,matched");
  std::size_t rows = 0, matched = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() == 5);
    const std::size_t i = std::stoul(cells[0]), j = std::stoul(cells[1]);
    CHECK(std::stod(cells[2]) == z(rows % 100, i));
    CHECK(std::stod(cells[3]) == t(rows % 100, j));
    if (cells[4] == "1") {
      ++matched;
      CHECK(j == res.assignment[i]);
    }
    ++rows;
  }
  CHECK(rows == 400);
  CHECK(matched == 200);
}
