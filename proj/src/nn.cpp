#include "icevae/nn.hpp"

#include <cmath>
#include <numbers>

#include "icevae/errors.hpp"

namespace icevae::nn {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)

void require_shape(Var a, Var b, const char* what) {
  if (!a.value().same_shape(b.value())) throw DimensionError(std::string(what) + ": shape mismatch");
}

void require_positive(Var sd, const char* what) {
  for (double v : sd.value().values()) {
    if (!(v > 0.0)) throw DomainError(std::string(what) + ": stddev must be positive");
  }
}

template <typename Fn>
void accumulate(Tape& t, Var v, Fn&& fn) {
  if (t.requires_grad(v.id())) fn(t.grad(v.id()));
}

}  // namespace

DistHead DistHead::gaussian(Var mean, Var stddev) {
  require_shape(mean, stddev, "DistHead::gaussian");
  DistHead h;
  h.kind = Kind::gaussian;
  h.mean = mean;
  h.stddev = stddev;
  return h;
}

DistHead DistHead::bernoulli(Var logits) {
  DistHead h;
  h.kind = Kind::bernoulli;
  h.logits = logits;
  return h;
}

std::size_t DistHead::dim() const { return kind == Kind::gaussian ? mean.cols() : logits.cols(); }

Tensor DistHead::prob() const {
  if (kind != Kind::bernoulli) throw UsageError("prob() on a Gaussian head");
  Tensor p = logits.value();
  for (double& v : p.values()) v = ad::sigmoid(v);
  return p;
}

Var stddev_from_raw(Var raw) { return ad::add_scalar(ad::activate(raw, Activation::softplus), kStddevFloor); }

DistHead gaussian_from_raw(Var out, std::size_t dim) {
  if (out.cols() != 2 * dim) throw DimensionError("gaussian head expects 2*dim columns");
  return DistHead::gaussian(ad::slice_cols(out, 0, dim), stddev_from_raw(ad::slice_cols(out, dim, dim)));
}

Var gaussian_nll(Var x, const DistHead& head) {
  if (head.kind != DistHead::Kind::gaussian) throw UsageError("gaussian_nll needs a Gaussian head");
  require_shape(x, head.mean, "gaussian_nll");
  require_positive(head.stddev, "gaussian_nll");
  const Tensor& xv = x.value();
  const Tensor& mu = head.mean.value();
  const Tensor& sd = head.stddev.value();
  double total = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double r = (xv[i] - mu[i]) / sd[i];
    total += std::log(sd[i]) + kHalfLog2Pi + 0.5 * r * r;
  }
  Var mean = head.mean;
  Var stddev = head.stddev;
  return x.tape().record("gaussian_nll", Tensor::scalar(total), {x, mean, stddev},
                         [x, mean, stddev](Tape& t, std::size_t self) {
                           const double g = t.grad(self)[0];
                           const Tensor& xv = x.value();
                           const Tensor& mu = mean.value();
                           const Tensor& sd = stddev.value();
                           const std::size_t n = xv.size();
                           accumulate(t, x, [&](Tensor& gx) {
                             for (std::size_t i = 0; i < n; ++i) gx[i] += g * (xv[i] - mu[i]) / (sd[i] * sd[i]);
                           });
                           accumulate(t, mean, [&](Tensor& gm) {
                             for (std::size_t i = 0; i < n; ++i) gm[i] -= g * (xv[i] - mu[i]) / (sd[i] * sd[i]);
                           });
                           accumulate(t, stddev, [&](Tensor& gs) {
                             for (std::size_t i = 0; i < n; ++i) {
                               const double d = xv[i] - mu[i];
                               gs[i] += g * (1.0 / sd[i] - d * d / (sd[i] * sd[i] * sd[i]));
                             }
                           });
                         });
}

Var bernoulli_nll(const Tensor& y, Var logits) {
  const Tensor& lv = logits.value();
  if (!y.same_shape(lv)) throw DimensionError("bernoulli_nll: shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw DomainError("bernoulli_nll: targets must be 0 or 1");
    total += ad::softplus(lv[i]) - y[i] * lv[i];
  }
  return logits.tape().record("bernoulli_nll", Tensor::scalar(total), {logits}, [y, logits](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    const Tensor& lv = logits.value();
    accumulate(t, logits, [&](Tensor& gl) {
      for (std::size_t i = 0; i < y.size(); ++i) gl[i] += g * (ad::sigmoid(lv[i]) - y[i]);
    });
  });
}

Var kl_diag_gaussians(const DistHead& q, const DistHead& p) {
  if (q.kind != DistHead::Kind::gaussian || p.kind != DistHead::Kind::gaussian) {
    throw UsageError("kl_diag_gaussians needs Gaussian heads");
  }
  require_shape(q.mean, p.mean, "kl_diag_gaussians");
  require_positive(q.stddev, "kl_diag_gaussians");
  require_positive(p.stddev, "kl_diag_gaussians");
  const Tensor& mq = q.mean.value();
  const Tensor& sq = q.stddev.value();
  const Tensor& mp = p.mean.value();
  const Tensor& sp = p.stddev.value();
  double total = 0.0;
  for (std::size_t i = 0; i < mq.size(); ++i) {
    const double d = mq[i] - mp[i];
    total += std::log(sp[i] / sq[i]) + (sq[i] * sq[i] + d * d) / (2.0 * sp[i] * sp[i]) - 0.5;
  }
  Var qm = q.mean, qs = q.stddev, pm = p.mean, ps = p.stddev;
  return qm.tape().record("kl_diag_gaussians", Tensor::scalar(total), {qm, qs, pm, ps},
                          [qm, qs, pm, ps](Tape& t, std::size_t self) {
                            const double g = t.grad(self)[0];
                            const Tensor& mq = qm.value();
                            const Tensor& sq = qs.value();
                            const Tensor& mp = pm.value();
                            const Tensor& sp = ps.value();
                            const std::size_t n = mq.size();
                            accumulate(t, qm, [&](Tensor& gv) {
                              for (std::size_t i = 0; i < n; ++i) gv[i] += g * (mq[i] - mp[i]) / (sp[i] * sp[i]);
                            });
                            accumulate(t, pm, [&](Tensor& gv) {
                              for (std::size_t i = 0; i < n; ++i) gv[i] -= g * (mq[i] - mp[i]) / (sp[i] * sp[i]);
                            });
                            accumulate(t, qs, [&](Tensor& gv) {
                              for (std::size_t i = 0; i < n; ++i) gv[i] += g * (sq[i] / (sp[i] * sp[i]) - 1.0 / sq[i]);
                            });
                            accumulate(t, ps, [&](Tensor& gv) {
                              for (std::size_t i = 0; i < n; ++i) {
                                const double d = mq[i] - mp[i];
                                gv[i] += g * (1.0 / sp[i] - (sq[i] * sq[i] + d * d) / (sp[i] * sp[i] * sp[i]));
                              }
                            });
                          });
}

Var reparam_sample(const DistHead& head, const Tensor& noise) {
  if (head.kind != DistHead::Kind::gaussian) throw UsageError("reparam_sample needs a Gaussian head");
  const Tensor& mu = head.mean.value();
  const Tensor& sd = head.stddev.value();
  if (!noise.same_shape(mu)) throw DimensionError("reparam_sample: noise shape mismatch");
  Tensor out = Tensor::matrix(mu.rows(), mu.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mu[i] + sd[i] * noise[i];
  Var mean = head.mean, stddev = head.stddev;
  return mean.tape().record("reparam_sample", std::move(out), {mean, stddev},
                            [mean, stddev, noise](Tape& t, std::size_t self) {
                              const Tensor& g = t.grad(self);
                              accumulate(t, mean, [&](Tensor& gm) {
                                for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
                              });
                              accumulate(t, stddev, [&](Tensor& gs) {
                                for (std::size_t i = 0; i < g.size(); ++i) gs[i] += g[i] * noise[i];
                              });
                            });
}

MixedHead mixed_from_raw(Var out, const FeatureLayout& layout) {
  if (out.cols() != layout.head_width()) throw DimensionError("mixed head width mismatch");
  MixedHead h;
  if (layout.n_gaussian > 0) {
    h.gaussian = DistHead::gaussian(ad::slice_cols(out, 0, layout.n_gaussian),
                                    stddev_from_raw(ad::slice_cols(out, layout.n_gaussian, layout.n_gaussian)));
  }
  if (layout.n_binary > 0) {
    h.bernoulli = DistHead::bernoulli(ad::slice_cols(out, 2 * layout.n_gaussian, layout.n_binary));
  }
  return h;
}

Var mixed_nll(const Tensor& target, const MixedHead& head) {
  const std::size_t ng = head.gaussian ? head.gaussian->dim() : 0;
  const std::size_t nb = head.bernoulli ? head.bernoulli->dim() : 0;
  if (target.cols() != ng + nb) throw DimensionError("mixed_nll: target width mismatch");
  const std::size_t rows = target.rows();
  auto block = [&](std::size_t begin, std::size_t count) {
    Tensor b = Tensor::matrix(rows, count);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < count; ++j) b(r, j) = target(r, begin + j);
    return b;
  };
  std::optional<Var> total;
  if (head.gaussian) {
    Tape& tape = head.gaussian->mean.tape();
    total = gaussian_nll(tape.constant(ng == target.cols() ? target : block(0, ng)), *head.gaussian);
  }
  if (head.bernoulli) {
    Var b = bernoulli_nll(nb == target.cols() ? target : block(ng, nb), head.bernoulli->logits);
    total = total ? ad::add(*total, b) : b;
  }
  if (!total) throw UsageError("mixed_nll: empty head");
  return *total;
}

Mlp::Mlp(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden_width,
         std::size_t hidden_layers, std::size_t out, std::mt19937_64& rng)
    : in_(in), out_(out) {
  std::size_t fan_in = in;
  for (std::size_t l = 0; l <= hidden_layers; ++l) {
    const std::size_t fan_out = l == hidden_layers ? out : hidden_width;
    const std::string k = std::to_string(l);
    weights_.push_back(store.add_glorot(prefix + ".w" + k, fan_in, fan_out, rng));
    biases_.push_back(store.add(prefix + ".b" + k, Tensor::matrix(1, fan_out)));
    fan_in = fan_out;
  }
}

Var Mlp::forward(Tape& tape, ParamStore& store, Var x) const {
  if (x.cols() != in_) {
    throw DimensionError("Mlp expects " + std::to_string(in_) + " input columns, got " + std::to_string(x.cols()));
  }
  Var h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const bool last = l + 1 == weights_.size();
    h = ad::dense(h, tape.param(store, weights_[l]), tape.param(store, biases_[l]),
                  last ? Activation::identity : Activation::relu);
  }
  return h;
}

}  // namespace icevae::nn
