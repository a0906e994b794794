#pragma once
// Layers, probabilistic heads and likelihood terms built on the tape.

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "icevae/autodiff.hpp"

namespace icevae::nn {

using ad::Activation;
using ad::Tape;
using ad::Var;

/// Lower bound added to every softplus-parameterized standard deviation.
inline constexpr double kStddevFloor = 1e-4;

/// Output of a probabilistic head: a diagonal Gaussian (mean, stddev) or a
/// factorized Bernoulli held as logits.
struct DistHead {
  enum class Kind { gaussian, bernoulli };

  Kind kind = Kind::gaussian;
  Var mean;
  Var stddev;
  Var logits;

  static DistHead gaussian(Var mean, Var stddev);
  static DistHead bernoulli(Var logits);

  std::size_t dim() const;
  /// Success probabilities sigmoid(logits); Bernoulli heads only.
  Tensor prob() const;
};

/// softplus(raw) + kStddevFloor
Var stddev_from_raw(Var raw);
/// Splits a [mean | raw stddev] block of width 2*dim into a Gaussian head.
DistHead gaussian_from_raw(Var out, std::size_t dim);

/// sum_i ln sd_i + 0.5 ln(2 pi) + (x_i - mean_i)^2 / (2 sd_i^2). Throws
/// DomainError when any stddev is not positive.
Var gaussian_nll(Var x, const DistHead& head);
/// sum_i softplus(logit_i) - y_i * logit_i, i.e. -log Bern(y | sigmoid(logit)).
/// Throws DomainError unless every y is exactly 0 or 1.
Var bernoulli_nll(const Tensor& y, Var logits);
/// KL(q || p) between diagonal Gaussians, summed over every entry.
Var kl_diag_gaussians(const DistHead& q, const DistHead& p);
/// mean + stddev * noise.
Var reparam_sample(const DistHead& head, const Tensor& noise);

/// Column split of a feature block: Gaussian columns first, then binary ones.
struct FeatureLayout {
  std::size_t n_gaussian = 0;
  std::size_t n_binary = 0;

  std::size_t width() const { return n_gaussian + n_binary; }
  /// Width of a head emitting [mean | raw stddev] for Gaussian and logits for binary columns.
  std::size_t head_width() const { return 2 * n_gaussian + n_binary; }
};

/// Head over a mixed feature block.
struct MixedHead {
  std::optional<DistHead> gaussian;
  std::optional<DistHead> bernoulli;
};

MixedHead mixed_from_raw(Var out, const FeatureLayout& layout);
/// Negative log-likelihood of a target block laid out as described by the head.
Var mixed_nll(const Tensor& target, const MixedHead& head);

/// Fully connected network with ReLU hidden layers and a linear output.
/// Parameters live in a ParamStore under "<prefix>.w<k>" / "<prefix>.b<k>";
/// the Mlp itself only remembers their slots.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden_width,
      std::size_t hidden_layers, std::size_t out, std::mt19937_64& rng);

  Var forward(Tape& tape, ParamStore& store, Var x) const;

  std::size_t input_width() const { return in_; }
  std::size_t output_width() const { return out_; }
  std::size_t layer_count() const { return weights_.size(); }
  std::size_t weight_slot(std::size_t layer) const { return weights_.at(layer); }
  std::size_t bias_slot(std::size_t layer) const { return biases_.at(layer); }

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  std::vector<std::size_t> weights_;
  std::vector<std::size_t> biases_;
};

}  // namespace icevae::nn
