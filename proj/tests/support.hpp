#pragma once
// Straight-line reference formulas and a finite-difference gradient checker.
// Nothing here goes through the tape.

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "icevae/autodiff.hpp"
#include "icevae/param_store.hpp"
#include "icevae/tensor.hpp"

namespace oracle {

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double gaussian_nll(const std::vector<double>& x, const std::vector<double>& mu, const std::vector<double>& sd) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - mu[i];
    total += std::log(sd[i]) + 0.5 * std::log(2.0 * std::numbers::pi) + d * d / (2.0 * sd[i] * sd[i]);
  }
  return total;
}

inline double bernoulli_nll(const std::vector<double>& y, const std::vector<double>& logits) {
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = sigmoid(logits[i]);
    total -= y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
  }
  return total;
}

inline double kl_gauss(const std::vector<double>& mq, const std::vector<double>& sq, const std::vector<double>& mp,
                       const std::vector<double>& sp) {
  double total = 0.0;
  for (std::size_t i = 0; i < mq.size(); ++i) {
    const double d = mq[i] - mp[i];
    total += std::log(sp[i] / sq[i]) + (sq[i] * sq[i] + d * d) / (2.0 * sp[i] * sp[i]) - 0.5;
  }
  return total;
}

inline std::vector<double> as_vector(const icevae::Tensor& t) { return {t.values().begin(), t.values().end()}; }

/// Plain-loop forward of an Mlp stored under "<prefix>.w<k>" / "<prefix>.b<k>".
inline std::vector<std::vector<double>> mlp_forward(const icevae::ParamStore& store, const std::string& prefix,
                                                    std::vector<std::vector<double>> x) {
  for (std::size_t k = 0;; ++k) {
    const std::string w = prefix + ".w" + std::to_string(k);
    if (!store.contains(w)) break;
    const bool last = !store.contains(prefix + ".w" + std::to_string(k + 1));
    const icevae::Tensor& W = store.value(w);
    const icevae::Tensor& b = store.value(prefix + ".b" + std::to_string(k));
    for (auto& row : x) {
      std::vector<double> out(W.cols());
      for (std::size_t j = 0; j < W.cols(); ++j) {
        double acc = b[j];
        for (std::size_t i = 0; i < W.rows(); ++i) acc += row[i] * W(i, j);
        out[j] = last ? acc : std::max(0.0, acc);
      }
      row = std::move(out);
    }
  }
  return x;
}

inline std::vector<std::vector<double>> rows_of(const icevae::Tensor& t) {
  std::vector<std::vector<double>> out(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) out[r].push_back(t(r, c));
  }
  return out;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Compares store gradients of loss() against central differences on
/// `samples` randomly chosen parameter entries whose name starts with prefix.
inline GradCheck check_gradients(icevae::ParamStore& store,
                                 const std::function<icevae::ad::Var(icevae::ad::Tape&)>& loss,
                                 const std::string& prefix, std::size_t samples, std::uint64_t seed,
                                 double step = 1e-5) {
  store.zero_grad();
  {
    icevae::ad::Tape tape;
    tape.backward(loss(tape));
  }
  std::vector<std::pair<std::size_t, std::size_t>> pool;
  for (std::size_t e = 0; e < store.size(); ++e) {
    if (store.entry(e).name.rfind(prefix, 0) != 0) continue;
    for (std::size_t i = 0; i < store.entry(e).value.size(); ++i) pool.emplace_back(e, i);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  if (pool.size() > samples) pool.resize(samples);

  auto eval = [&] {
    icevae::ad::Tape tape;
    return loss(tape).value().item();
  };
  GradCheck res;
  for (const auto& [e, i] : pool) {
    double& w = store.entry(e).value[i];
    const double saved = w;
    w = saved + step;
    const double up = eval();
    w = saved - step;
    const double down = eval();
    w = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = store.entry(e).grad[i];
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    res.max_rel_error = std::max(res.max_rel_error, std::abs(numeric - analytic) / denom);
    ++res.checked;
  }
  store.zero_grad();
  return res;
}

}  // namespace oracle
