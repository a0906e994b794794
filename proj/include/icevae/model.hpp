#pragma once
// The long-term effect estimator: a two-head short-term potential outcome
// network fit on experimental data, an auxiliary-variable-conditioned VAE over
// (X, W, S) fit on observational data, and an outcome head p(Y | W, S, X, Z).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icevae/autodiff.hpp"
#include "icevae/data.hpp"
#include "icevae/nn.hpp"

namespace icevae {

enum class TrainingMode { two_phase, joint };

std::string_view to_string(TrainingMode mode);
TrainingMode parse_training_mode(std::string_view text);

struct Hyperparams {
  std::size_t d_z = 2;
  std::size_t hidden_width = 64;
  std::size_t n_layers = 3;  // hidden layers per network
  double learning_rate = 1e-3;
  std::size_t batch_size = 100;
  std::size_t epochs = 300;
  std::size_t mc_samples = 1;
  TrainingMode training_mode = TrainingMode::two_phase;
  /// Feed the observed factual s to the encoder instead of the stage-1 estimate.
  bool encoder_uses_observed_s = false;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Reorders a feature block so Gaussian columns precede binary ones and
/// standardizes the Gaussian columns. Binary columns pass through unchanged.
struct ColumnScaler {
  std::vector<std::size_t> order;  // model column k reads source column order[k]
  std::vector<double> mean;        // per model column
  std::vector<double> scale;
  nn::FeatureLayout layout;

  static ColumnScaler fit(std::span<const std::vector<double>> rows, std::size_t width);
  std::size_t width() const { return order.size(); }
  void to_model(std::span<const double> source, std::span<double> model) const;
  void to_source(std::span<const double> model, std::span<double> source) const;
};

struct ModelSchema {
  ColumnScaler x;
  ColumnScaler s;
  double y_mean = 0.0;
  double y_scale = 1.0;
  std::size_t u_levels = 0;  // one-hot width

  /// Scalers from every unit, y statistics from observational units.
  static ModelSchema fit(const data::Dataset& ds);
};

/// Short-term potential outcome network: shared trunk, one Gaussian head per arm.
struct ShortTermNet {
  ModelSchema schema;
  ParamStore params;
  nn::Mlp trunk;
  nn::Mlp head0;
  nn::Mlp head1;
  std::vector<double> trace;  // mean NLL per unit, one entry per epoch

  /// Both heads on model-space inputs [rows x d_x]; returns [mean | stddev] per arm.
  std::pair<nn::DistHead, nn::DistHead> heads(ad::Tape& tape, ad::Var x);
};

/// Encoder branches, prior, decoders and outcome head.
struct LatentNets {
  std::size_t d_z = 0;
  nn::FeatureLayout x_layout;
  nn::FeatureLayout s_layout;
  nn::Mlp encoder0;
  nn::Mlp encoder1;
  nn::Mlp prior;
  nn::Mlp x_decoder;
  nn::Mlp w_decoder;
  nn::Mlp s_decoder;
  nn::Mlp outcome;

  static LatentNets build(ParamStore& store, const ModelSchema& schema, const Hyperparams& hp, std::uint64_t seed);
};

/// Observational mini-batch in model space.
struct ObsBatch {
  Tensor x;         // rows x d_x
  Tensor w;         // rows x 1
  Tensor s;         // rows x d_s
  Tensor y;         // rows x 1
  Tensor u_onehot;  // rows x u_levels
  std::vector<std::uint8_t> treated;

  std::size_t rows() const { return treated.size(); }
};

/// Builds a batch from observational units. Throws UsageError on experimental units.
ObsBatch make_obs_batch(const data::Dataset& ds, std::span<const std::size_t> idx, const ModelSchema& schema);
Tensor one_hot(std::span<const int> u, std::size_t levels);

struct ElboTerms {
  ad::Var neg_elbo;  // kl + recon, summed over the batch
  ad::Var kl;
  ad::Var recon;     // reconstruction NLL averaged over Monte-Carlo draws
  nn::DistHead posterior;
  nn::DistHead prior;
  std::vector<ad::Var> z_samples;
};

/// Negative ELBO of an observational batch. s_hat0/s_hat1 are the stage-1
/// potential predictions in model space; mc_noise holds one standard-normal
/// rows x d_z tensor per Monte-Carlo draw.
ElboTerms elbo_batch(ad::Tape& tape, ParamStore& store, const LatentNets& nets, const ObsBatch& batch, ad::Var s_hat0,
                     ad::Var s_hat1, std::span<const Tensor> mc_noise);

/// Gaussian NLL of y under the outcome head, averaged over the z draws.
ad::Var outcome_loss(ad::Tape& tape, ParamStore& store, const LatentNets& nets, const ObsBatch& batch,
                     std::span<const ad::Var> z_samples);

inline double total_loss(double neg_elbo, double l_s, double l_y) { return neg_elbo + l_s + l_y; }
ad::Var total_loss(ad::Var neg_elbo, ad::Var l_s, ad::Var l_y);

struct EpochLoss {
  std::size_t epoch = 0;
  double neg_elbo = 0.0;
  double kl = 0.0;
  double recon = 0.0;
  double l_y = 0.0;
  double l_s = 0.0;
  double total = 0.0;
};

struct TrainedIcevae {
  Hyperparams hp;
  ModelSchema schema;
  ShortTermNet short_term;
  ParamStore latent_params;
  LatentNets latent;
  std::vector<EpochLoss> trace;  // per-unit means, one row per epoch
};

/// Fits the short-term network on experimental units. Uses the given schema
/// for scaling, or fits one on exp when none is given. Throws TrainingError
/// when either arm is missing.
ShortTermNet train_short_term(const data::Dataset& exp, const Hyperparams& hp,
                              const ModelSchema* schema = nullptr);

/// Potential short-term means (s0_hat, s1_hat) in data units for one covariate vector.
std::pair<std::vector<double>, std::vector<double>> predict_potential_s(ShortTermNet& net,
                                                                        std::span<const double> x);

/// Two-phase or joint fit. Prints a warning to stderr when the auxiliary
/// variable has fewer than 2*d_z + 1 levels.
TrainedIcevae train(const data::Dataset& obs, const data::Dataset& exp, const Hyperparams& hp);
/// Convenience overload splitting a combined dataset by group.
TrainedIcevae train(const data::Dataset& combined, const Hyperparams& hp);

/// tau_hat(x) = mu_y(1, s1_hat, x, z_hat) - mu_y(0, s0_hat, x, z_hat). z_hat is
/// the posterior mean of the branch for w_observed when given, otherwise the
/// prior mean of p(Z | U). Data units.
double infer_ite(TrainedIcevae& model, std::span<const double> x, int u, std::optional<int> w_observed,
                 std::span<const double> s_observed = {});
/// Batched tau_hat for every unit, selecting the encoder branch by each unit's observed w.
std::vector<double> infer_ite(TrainedIcevae& model, const data::Dataset& units);
/// Mean of infer_ite over the units. Throws UsageError on an empty set.
double infer_ate(TrainedIcevae& model, const data::Dataset& test);
/// Posterior means rows x d_z for every unit, branch chosen by the observed w.
Tensor latent_means(TrainedIcevae& model, const data::Dataset& units);

/// Writes epoch,neg_elbo,kl,recon,l_y,l_s,total.
void write_trace_csv(const std::vector<EpochLoss>& trace, const std::string& path);

}  // namespace icevae
