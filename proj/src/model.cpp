#include "icevae/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

#include "icevae/errors.hpp"
#include "icevae/random.hpp"

namespace icevae {

using ad::Tape;
using ad::Var;
using data::Dataset;
using data::Group;
using nn::DistHead;

std::string_view to_string(TrainingMode mode) { return mode == TrainingMode::joint ? "joint" : "two_phase"; }

TrainingMode parse_training_mode(std::string_view text) {
  if (text == "two_phase") return TrainingMode::two_phase;
  if (text == "joint") return TrainingMode::joint;
  throw ConfigError("unknown training mode '" + std::string(text) + "'");
}

void Hyperparams::validate() const {
  if (d_z < 1) throw ConfigError("d_z must be at least 1");
  if (hidden_width < 1 || n_layers < 1) throw ConfigError("networks need at least one hidden layer");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1 || epochs < 1) throw ConfigError("batch_size and epochs must be positive");
  if (mc_samples < 1) throw ConfigError("mc_samples must be at least 1");
}

// ---------------------------------------------------------------------------
// Feature scaling

ColumnScaler ColumnScaler::fit(std::span<const std::vector<double>> rows, std::size_t width) {
  ColumnScaler sc;
  std::vector<std::size_t> gaussian, binary;
  for (std::size_t j = 0; j < width; ++j) {
    const bool is_binary = !rows.empty() && std::all_of(rows.begin(), rows.end(), [j](const std::vector<double>& r) {
      return r[j] == 0.0 || r[j] == 1.0;
    });
    (is_binary ? binary : gaussian).push_back(j);
  }
  sc.layout = {gaussian.size(), binary.size()};
  sc.order = gaussian;
  sc.order.insert(sc.order.end(), binary.begin(), binary.end());
  sc.mean.assign(width, 0.0);
  sc.scale.assign(width, 1.0);
  const double n = static_cast<double>(rows.size());
  for (std::size_t k = 0; k < gaussian.size() && !rows.empty(); ++k) {
    const std::size_t j = gaussian[k];
    double m = 0.0;
    for (const auto& r : rows) m += r[j];
    m /= n;
    double v = 0.0;
    for (const auto& r : rows) v += (r[j] - m) * (r[j] - m);
    const double sd = std::sqrt(v / n);
    sc.mean[k] = m;
    sc.scale[k] = sd > 1e-12 ? sd : 1.0;
  }
  return sc;
}

void ColumnScaler::to_model(std::span<const double> source, std::span<double> model) const {
  for (std::size_t k = 0; k < order.size(); ++k) model[k] = (source[order[k]] - mean[k]) / scale[k];
}

void ColumnScaler::to_source(std::span<const double> model, std::span<double> source) const {
  for (std::size_t k = 0; k < order.size(); ++k) source[order[k]] = model[k] * scale[k] + mean[k];
}

ModelSchema ModelSchema::fit(const Dataset& ds) {
  if (ds.empty()) throw ConfigError("cannot fit feature scaling on an empty dataset");
  ModelSchema schema;
  std::vector<std::vector<double>> xs, ss;
  xs.reserve(ds.size());
  ss.reserve(ds.size());
  double y_sum = 0.0, y_sq = 0.0;
  std::size_t n_y = 0;
  int max_u = 0;
  for (const auto& u : ds) {
    if (u.u < 0) throw ConfigError("auxiliary codes must be non-negative integers");
    max_u = std::max(max_u, u.u);
    xs.push_back(u.x);
    ss.push_back(u.s);
    if (u.y) {
      y_sum += *u.y;
      y_sq += *u.y * *u.y;
      ++n_y;
    }
  }
  schema.x = ColumnScaler::fit(xs, ds.d_x());
  schema.s = ColumnScaler::fit(ss, ds.d_s());
  schema.u_levels = static_cast<std::size_t>(max_u) + 1;
  if (n_y > 0) {
    schema.y_mean = y_sum / static_cast<double>(n_y);
    const double var = y_sq / static_cast<double>(n_y) - schema.y_mean * schema.y_mean;
    schema.y_scale = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  return schema;
}

Tensor one_hot(std::span<const int> u, std::size_t levels) {
  Tensor out = Tensor::matrix(u.size(), levels);
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (u[i] >= 0 && static_cast<std::size_t>(u[i]) < levels) out(i, static_cast<std::size_t>(u[i])) = 1.0;
  }
  return out;
}

namespace {

// Model-space matrices for a whole dataset; mini-batches gather rows from it.
struct Design {
  Tensor x, s, w, y, u_onehot;
  std::vector<std::uint8_t> treated;
};

Design make_design(const Dataset& ds, std::span<const std::size_t> idx, const ModelSchema& schema) {
  const std::size_t n = idx.size();
  Design d;
  d.x = Tensor::matrix(n, ds.d_x());
  d.s = Tensor::matrix(n, ds.d_s());
  d.w = Tensor::matrix(n, 1);
  d.y = Tensor::matrix(n, 1);
  d.treated.resize(n);
  std::vector<int> u(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& unit = ds[idx[r]];
    schema.x.to_model(unit.x, std::span<double>(d.x.data() + r * ds.d_x(), ds.d_x()));
    schema.s.to_model(unit.s, std::span<double>(d.s.data() + r * ds.d_s(), ds.d_s()));
    d.w[r] = unit.w;
    d.treated[r] = static_cast<std::uint8_t>(unit.w);
    if (unit.y) d.y[r] = (*unit.y - schema.y_mean) / schema.y_scale;
    u[r] = unit.u;
  }
  d.u_onehot = one_hot(u, schema.u_levels);
  return d;
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

Tensor gather_rows(const Tensor& m, std::span<const std::size_t> idx) {
  const std::size_t c = m.cols();
  Tensor out = Tensor::matrix(idx.size(), c);
  for (std::size_t r = 0; r < idx.size(); ++r) std::copy_n(m.data() + idx[r] * c, c, out.data() + r * c);
  return out;
}

ObsBatch gather_batch(const Design& d, std::span<const std::size_t> idx) {
  ObsBatch b;
  b.x = gather_rows(d.x, idx);
  b.w = gather_rows(d.w, idx);
  b.s = gather_rows(d.s, idx);
  b.y = gather_rows(d.y, idx);
  b.u_onehot = gather_rows(d.u_onehot, idx);
  b.treated.resize(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) b.treated[r] = d.treated[idx[r]];
  return b;
}

Tensor standard_normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor t = Tensor::matrix(rows, cols);
  for (double& v : t.values()) v = normal(rng);
  return t;
}

DistHead select_head(std::span<const std::uint8_t> treated, const DistHead& h1, const DistHead& h0) {
  return DistHead::gaussian(ad::select_rows(treated, h1.mean, h0.mean),
                            ad::select_rows(treated, h1.stddev, h0.stddev));
}

void check_arms(const Dataset& ds, Group g, const char* what) {
  if (ds.count(g, 0) == 0 || ds.count(g, 1) == 0) {
    throw TrainingError(std::string(what) + " data must contain both treatment arms");
  }
}

// Stage-1 predictions for a design (model space), as plain tensors.
std::pair<Tensor, Tensor> short_term_means(ShortTermNet& net, const Tensor& x) {
  Tape tape;
  auto [h0, h1] = net.heads(tape, tape.constant(x));
  return {h0.mean.value(), h1.mean.value()};
}

}  // namespace

ObsBatch make_obs_batch(const Dataset& ds, std::span<const std::size_t> idx, const ModelSchema& schema) {
  for (std::size_t i : idx) {
    if (ds[i].g != Group::observational) throw UsageError("observational batch contains an experimental unit");
  }
  return gather_batch(make_design(ds, idx, schema), iota_indices(idx.size()));
}

// ---------------------------------------------------------------------------
// Networks

std::pair<DistHead, DistHead> ShortTermNet::heads(Tape& tape, Var x) {
  const std::size_t d_s = schema.s.width();
  Var h = ad::activate(trunk.forward(tape, params, x), ad::Activation::relu);
  return {nn::gaussian_from_raw(head0.forward(tape, params, h), d_s),
          nn::gaussian_from_raw(head1.forward(tape, params, h), d_s)};
}

LatentNets LatentNets::build(ParamStore& store, const ModelSchema& schema, const Hyperparams& hp, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t dx = schema.x.width(), ds = schema.s.width(), du = schema.u_levels, dz = hp.d_z;
  const std::size_t hw = hp.hidden_width, hl = hp.n_layers;
  LatentNets n;
  n.d_z = dz;
  n.x_layout = schema.x.layout;
  n.s_layout = schema.s.layout;
  n.encoder0 = nn::Mlp(store, "encoder0", dx + ds + du, hw, hl, 2 * dz, rng);
  n.encoder1 = nn::Mlp(store, "encoder1", dx + ds + du, hw, hl, 2 * dz, rng);
  n.prior = nn::Mlp(store, "prior", du, hw, hl, 2 * dz, rng);
  n.x_decoder = nn::Mlp(store, "x_decoder", dz + du, hw, hl, schema.x.layout.head_width(), rng);
  n.w_decoder = nn::Mlp(store, "w_decoder", dx + dz, hw, hl, 1, rng);
  n.s_decoder = nn::Mlp(store, "s_decoder", 1 + dx + dz, hw, hl, schema.s.layout.head_width(), rng);
  n.outcome = nn::Mlp(store, "outcome", 1 + ds + dx + dz, hw, hl, 2, rng);
  return n;
}

// ---------------------------------------------------------------------------
// Objective

ElboTerms elbo_batch(Tape& tape, ParamStore& store, const LatentNets& nets, const ObsBatch& batch, Var s_hat0,
                     Var s_hat1, std::span<const Tensor> mc_noise) {
  if (mc_noise.empty()) throw UsageError("elbo_batch needs at least one Monte-Carlo draw");
  const std::size_t dz = nets.d_z;
  Var x = tape.constant(batch.x);
  Var w = tape.constant(batch.w);
  Var u = tape.constant(batch.u_onehot);

  const DistHead q0 = nn::gaussian_from_raw(nets.encoder0.forward(tape, store, ad::concat_cols({x, s_hat0, u})), dz);
  const DistHead q1 = nn::gaussian_from_raw(nets.encoder1.forward(tape, store, ad::concat_cols({x, s_hat1, u})), dz);

  ElboTerms terms;
  terms.posterior = select_head(batch.treated, q1, q0);
  terms.prior = nn::gaussian_from_raw(nets.prior.forward(tape, store, u), dz);
  terms.kl = nn::kl_diag_gaussians(terms.posterior, terms.prior);

  std::optional<Var> recon_sum;
  for (const Tensor& noise : mc_noise) {
    Var z = nn::reparam_sample(terms.posterior, noise);
    terms.z_samples.push_back(z);
    const auto x_head = nn::mixed_from_raw(nets.x_decoder.forward(tape, store, ad::concat_cols({z, u})), nets.x_layout);
    Var w_logit = nets.w_decoder.forward(tape, store, ad::concat_cols({x, z}));
    const auto s_head =
        nn::mixed_from_raw(nets.s_decoder.forward(tape, store, ad::concat_cols({w, x, z})), nets.s_layout);
    Var r = nn::mixed_nll(batch.x, x_head) + nn::bernoulli_nll(batch.w, w_logit) + nn::mixed_nll(batch.s, s_head);
    recon_sum = recon_sum ? *recon_sum + r : r;
  }
  terms.recon = ad::scale(*recon_sum, 1.0 / static_cast<double>(mc_noise.size()));
  terms.neg_elbo = terms.kl + terms.recon;
  return terms;
}

Var outcome_loss(Tape& tape, ParamStore& store, const LatentNets& nets, const ObsBatch& batch,
                 std::span<const Var> z_samples) {
  if (z_samples.empty()) throw UsageError("outcome_loss needs at least one latent draw");
  Var x = tape.constant(batch.x);
  Var w = tape.constant(batch.w);
  Var s = tape.constant(batch.s);
  Var y = tape.constant(batch.y);
  std::optional<Var> total;
  for (const Var& z : z_samples) {
    const DistHead head = nn::gaussian_from_raw(nets.outcome.forward(tape, store, ad::concat_cols({w, s, x, z})), 1);
    Var nll = nn::gaussian_nll(y, head);
    total = total ? *total + nll : nll;
  }
  return ad::scale(*total, 1.0 / static_cast<double>(z_samples.size()));
}

Var total_loss(Var neg_elbo, Var l_s, Var l_y) { return neg_elbo + l_s + l_y; }

// ---------------------------------------------------------------------------
// Training

namespace {

ShortTermNet build_short_term(const ModelSchema& schema, const Hyperparams& hp) {
  ShortTermNet net;
  net.schema = schema;
  std::mt19937_64 rng(derive_seed(hp.seed, 1));
  const std::size_t dx = schema.x.width(), ds = schema.s.width();
  net.trunk = nn::Mlp(net.params, "trunk", dx, hp.hidden_width, hp.n_layers - 1, hp.hidden_width, rng);
  net.head0 = nn::Mlp(net.params, "head0", hp.hidden_width, hp.hidden_width, 0, 2 * ds, rng);
  net.head1 = nn::Mlp(net.params, "head1", hp.hidden_width, hp.hidden_width, 0, 2 * ds, rng);
  return net;
}

// Factual-arm NLL of an experimental batch (summed).
Var short_term_nll(Tape& tape, ShortTermNet& net, const Design& d, std::span<const std::size_t> idx) {
  Var x = tape.constant(gather_rows(d.x, idx));
  std::vector<std::uint8_t> treated(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) treated[r] = d.treated[idx[r]];
  auto [h0, h1] = net.heads(tape, x);
  return nn::gaussian_nll(tape.constant(gather_rows(d.s, idx)), select_head(treated, h1, h0));
}

std::vector<std::vector<std::size_t>> batches(std::vector<std::size_t>& order, std::size_t batch_size,
                                              std::mt19937_64& rng) {
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<Tensor> draw_noise(std::size_t draws, std::size_t rows, std::size_t dz, std::mt19937_64& rng) {
  std::vector<Tensor> out;
  for (std::size_t m = 0; m < draws; ++m) out.push_back(standard_normal(rows, dz, rng));
  return out;
}

void require_group(const Dataset& ds, Group g, const char* what) {
  if (ds.empty()) throw TrainingError(std::string(what) + " data is empty");
  for (const auto& u : ds) {
    if (u.g != g) throw UsageError(std::string(what) + " data contains units from the other group");
  }
}

}  // namespace

ShortTermNet train_short_term(const Dataset& exp, const Hyperparams& hp, const ModelSchema* schema) {
  hp.validate();
  require_group(exp, Group::experimental, "experimental");
  check_arms(exp, Group::experimental, "experimental");
  ShortTermNet net = build_short_term(schema ? *schema : ModelSchema::fit(exp), hp);
  const Design d = make_design(exp, iota_indices(exp.size()), net.schema);
  std::mt19937_64 shuffle_rng(derive_seed(hp.seed, 2));
  std::vector<std::size_t> order = iota_indices(exp.size());
  const AdamConfig adam{hp.learning_rate};
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    double nll_sum = 0.0;
    for (const auto& b : batches(order, hp.batch_size, shuffle_rng)) {
      Tape tape;
      Var nll = short_term_nll(tape, net, d, b);
      tape.backward(ad::scale(nll, 1.0 / static_cast<double>(b.size())));
      adam_step(net.params, adam);
      nll_sum += nll.value().item();
    }
    net.trace.push_back(nll_sum / static_cast<double>(exp.size()));
  }
  return net;
}

std::pair<std::vector<double>, std::vector<double>> predict_potential_s(ShortTermNet& net, std::span<const double> x) {
  const std::size_t dx = net.schema.x.width(), ds = net.schema.s.width();
  if (x.size() != dx) throw DimensionError("predict_potential_s: covariate width mismatch");
  Tensor xm = Tensor::matrix(1, dx);
  net.schema.x.to_model(x, xm.values());
  auto [m0, m1] = short_term_means(net, xm);
  std::vector<double> s0(ds), s1(ds);
  net.schema.s.to_source(m0.values(), s0);
  net.schema.s.to_source(m1.values(), s1);
  return {s0, s1};
}

TrainedIcevae train(const Dataset& obs, const Dataset& exp, const Hyperparams& hp) {
  hp.validate();
  require_group(obs, Group::observational, "observational");
  require_group(exp, Group::experimental, "experimental");
  check_arms(exp, Group::experimental, "experimental");
  if (obs.d_x() != exp.d_x() || obs.d_s() != exp.d_s()) throw DimensionError("group schemas differ");

  std::vector<std::size_t> all_idx;
  Dataset combined(obs.d_x(), obs.d_s());
  for (const auto& u : obs) combined.add(u);
  for (const auto& u : exp) combined.add(u);
  const auto support = data::validate_theorem1_support(combined, hp.d_z);
  if (!support.satisfied) {
    std::cerr << "warning: auxiliary variable has " << support.distinct_u << " distinct values, fewer than 2*d_z+1 = "
              << 2 * hp.d_z + 1 << "; the latent confounders may not be identifiable\n";
  }

  TrainedIcevae model;
  model.hp = hp;
  model.schema = ModelSchema::fit(combined);
  model.latent = LatentNets::build(model.latent_params, model.schema, hp, derive_seed(hp.seed, 3));

  const Design obs_d = make_design(obs, iota_indices(obs.size()), model.schema);
  const Design exp_d = make_design(exp, iota_indices(exp.size()), model.schema);
  const double n_obs = static_cast<double>(obs.size());
  std::mt19937_64 shuffle_rng(derive_seed(hp.seed, 4));
  std::mt19937_64 noise_rng(derive_seed(hp.seed, 5));
  std::mt19937_64 exp_rng(derive_seed(hp.seed, 6));
  const AdamConfig adam{hp.learning_rate};
  std::vector<std::size_t> obs_order = iota_indices(obs.size());

  if (hp.training_mode == TrainingMode::two_phase) {
    model.short_term = train_short_term(exp, hp, &model.schema);
    auto [shat0, shat1] = short_term_means(model.short_term, obs_d.x);
    if (hp.encoder_uses_observed_s) shat0 = shat1 = obs_d.s;
    const double l_s = model.short_term.trace.back();

    for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
      EpochLoss row;
      row.epoch = epoch + 1;
      for (const auto& b : batches(obs_order, hp.batch_size, shuffle_rng)) {
        Tape tape;
        const ObsBatch batch = gather_batch(obs_d, b);
        const auto noise = draw_noise(hp.mc_samples, b.size(), hp.d_z, noise_rng);
        const ElboTerms terms = elbo_batch(tape, model.latent_params, model.latent, batch,
                                           tape.constant(gather_rows(shat0, b)), tape.constant(gather_rows(shat1, b)),
                                           noise);
        Var l_y = outcome_loss(tape, model.latent_params, model.latent, batch, terms.z_samples);
        tape.backward(ad::scale(terms.neg_elbo + l_y, 1.0 / static_cast<double>(b.size())));
        adam_step(model.latent_params, adam);
        row.neg_elbo += terms.neg_elbo.value().item();
        row.kl += terms.kl.value().item();
        row.recon += terms.recon.value().item();
        row.l_y += l_y.value().item();
      }
      row.neg_elbo /= n_obs;
      row.kl /= n_obs;
      row.recon /= n_obs;
      row.l_y /= n_obs;
      row.l_s = l_s;
      row.total = total_loss(row.neg_elbo, row.l_s, row.l_y);
      model.trace.push_back(row);
    }
    return model;
  }

  // Joint mode: every step combines an experimental batch for the short-term
  // loss with an observational batch for the ELBO and outcome terms.
  model.short_term = build_short_term(model.schema, hp);
  std::vector<std::size_t> exp_order = iota_indices(exp.size());
  std::vector<std::vector<std::size_t>> exp_batches;
  std::size_t exp_cursor = 0;
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    EpochLoss row;
      row.epoch = epoch + 1;
    double l_s_sum = 0.0;
    std::size_t l_s_units = 0;
    for (const auto& b : batches(obs_order, hp.batch_size, shuffle_rng)) {
      if (exp_cursor == exp_batches.size()) {
        exp_batches = batches(exp_order, hp.batch_size, exp_rng);
        exp_cursor = 0;
      }
      const auto& eb = exp_batches[exp_cursor++];
      Tape tape;
      Var l_s = short_term_nll(tape, model.short_term, exp_d, eb);
      const ObsBatch batch = gather_batch(obs_d, b);
      Var s0, s1;
      if (hp.encoder_uses_observed_s) {
        s0 = s1 = tape.constant(batch.s);
      } else {
        auto [h0, h1] = model.short_term.heads(tape, tape.constant(batch.x));
        s0 = h0.mean;
        s1 = h1.mean;
      }
      const auto noise = draw_noise(hp.mc_samples, b.size(), hp.d_z, noise_rng);
      const ElboTerms terms = elbo_batch(tape, model.latent_params, model.latent, batch, s0, s1, noise);
      Var l_y = outcome_loss(tape, model.latent_params, model.latent, batch, terms.z_samples);
      Var objective = ad::scale(terms.neg_elbo + l_y, 1.0 / static_cast<double>(b.size())) +
                      ad::scale(l_s, 1.0 / static_cast<double>(eb.size()));
      tape.backward(objective);
      adam_step(model.short_term.params, adam);
      adam_step(model.latent_params, adam);
      row.neg_elbo += terms.neg_elbo.value().item();
      row.kl += terms.kl.value().item();
      row.recon += terms.recon.value().item();
      row.l_y += l_y.value().item();
      l_s_sum += l_s.value().item();
      l_s_units += eb.size();
    }
    row.neg_elbo /= n_obs;
    row.kl /= n_obs;
    row.recon /= n_obs;
    row.l_y /= n_obs;
    row.l_s = l_s_sum / static_cast<double>(l_s_units);
    row.total = total_loss(row.neg_elbo, row.l_s, row.l_y);
    model.short_term.trace.push_back(row.l_s);
    model.trace.push_back(row);
  }
  return model;
}

TrainedIcevae train(const Dataset& combined, const Hyperparams& hp) {
  return train(combined.group(Group::observational), combined.group(Group::experimental), hp);
}

// ---------------------------------------------------------------------------
// Inference

namespace {

struct InferenceInputs {
  Tensor x, s, u_onehot;
  std::vector<std::uint8_t> treated;
  std::vector<std::uint8_t> known_w;
};

// Posterior (or prior, where w is unknown) means and both short-term predictions.
struct LatentView {
  Tensor z;
  Tensor shat0, shat1;
};

LatentView latent_view(TrainedIcevae& model, const InferenceInputs& in) {
  const std::size_t n = in.treated.size();
  LatentView v;
  std::tie(v.shat0, v.shat1) = short_term_means(model.short_term, in.x);
  Tensor enc_s0 = model.hp.encoder_uses_observed_s ? in.s : v.shat0;
  Tensor enc_s1 = model.hp.encoder_uses_observed_s ? in.s : v.shat1;

  Tape tape;
  ParamStore& store = model.latent_params;
  const auto& nets = model.latent;
  Var x = tape.constant(in.x);
  Var u = tape.constant(in.u_onehot);
  Var m0 = ad::slice_cols(nets.encoder0.forward(tape, store, ad::concat_cols({x, tape.constant(enc_s0), u})), 0,
                          nets.d_z);
  Var m1 = ad::slice_cols(nets.encoder1.forward(tape, store, ad::concat_cols({x, tape.constant(enc_s1), u})), 0,
                          nets.d_z);
  Var prior = ad::slice_cols(nets.prior.forward(tape, store, u), 0, nets.d_z);
  Var post = ad::select_rows(in.treated, m1, m0);
  v.z = ad::select_rows(in.known_w, post, prior).value();
  (void)n;
  return v;
}

InferenceInputs inputs_from(const Dataset& units, const ModelSchema& schema) {
  const Design d = make_design(units, iota_indices(units.size()), schema);
  return {d.x, d.s, d.u_onehot, d.treated, std::vector<std::uint8_t>(units.size(), 1)};
}

std::vector<double> ite_from(TrainedIcevae& model, const InferenceInputs& in) {
  const std::size_t n = in.treated.size();
  const LatentView v = latent_view(model, in);
  Tape tape;
  Var x = tape.constant(in.x);
  Var z = tape.constant(v.z);
  Var ones = tape.constant(Tensor::matrix(n, 1, 1.0));
  Var zeros = tape.constant(Tensor::matrix(n, 1, 0.0));
  const auto& nets = model.latent;
  ParamStore& store = model.latent_params;
  Var y1 = nets.outcome.forward(tape, store, ad::concat_cols({ones, tape.constant(v.shat1), x, z}));
  Var y0 = nets.outcome.forward(tape, store, ad::concat_cols({zeros, tape.constant(v.shat0), x, z}));
  std::vector<double> tau(n);
  for (std::size_t i = 0; i < n; ++i) tau[i] = (y1.value()(i, 0) - y0.value()(i, 0)) * model.schema.y_scale;
  return tau;
}

}  // namespace

double infer_ite(TrainedIcevae& model, std::span<const double> x, int u, std::optional<int> w_observed,
                 std::span<const double> s_observed) {
  const auto& schema = model.schema;
  if (x.size() != schema.x.width()) throw DimensionError("infer_ite: covariate width mismatch");
  InferenceInputs in;
  in.x = Tensor::matrix(1, schema.x.width());
  schema.x.to_model(x, in.x.values());
  in.s = Tensor::matrix(1, schema.s.width());
  if (!s_observed.empty()) {
    if (s_observed.size() != schema.s.width()) throw DimensionError("infer_ite: short-term width mismatch");
    schema.s.to_model(s_observed, in.s.values());
  }
  const int uu = u;
  in.u_onehot = one_hot(std::span<const int>(&uu, 1), schema.u_levels);
  in.treated = {static_cast<std::uint8_t>(w_observed.value_or(0) == 1)};
  in.known_w = {static_cast<std::uint8_t>(w_observed.has_value())};
  return ite_from(model, in).front();
}

std::vector<double> infer_ite(TrainedIcevae& model, const Dataset& units) {
  if (units.empty()) return {};
  return ite_from(model, inputs_from(units, model.schema));
}

double infer_ate(TrainedIcevae& model, const Dataset& test) {
  if (test.empty()) throw UsageError("infer_ate on an empty test set");
  const auto tau = infer_ite(model, test);
  return std::accumulate(tau.begin(), tau.end(), 0.0) / static_cast<double>(tau.size());
}

Tensor latent_means(TrainedIcevae& model, const Dataset& units) {
  if (units.empty()) throw UsageError("latent_means on an empty dataset");
  return latent_view(model, inputs_from(units, model.schema)).z;
}

void write_trace_csv(const std::vector<EpochLoss>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  out << "epoch,neg_elbo,kl,recon,l_y,l_s,total\n";
  for (const auto& r : trace) {
    out << r.epoch << ',' << r.neg_elbo << ',' << r.kl << ',' << r.recon << ',' << r.l_y << ',' << r.l_s << ','
        << r.total << '\n';
  }
}

}  // namespace icevae
