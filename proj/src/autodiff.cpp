#include "icevae/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "icevae/errors.hpp"
#include "icevae/simd/kernels.hpp"

namespace icevae::ad {

const Tensor& Var::value() const { return tape_->value(id_); }

Tensor Var::grad() const {
  if (tape_->has_grad(id_)) return tape_->grad(id_);
  return Tensor(value().shape(), 0.0);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.op = "constant";
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.op = "variable";
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::param(ParamStore& store, std::size_t index) {
  Node n;
  n.value = store.entry(index).value;
  n.op = "param";
  n.requires_grad = true;
  ParamStore* sp = &store;
  n.backward = [sp, index](Tape& t, std::size_t self) { sp->accumulate_grad(index, t.grad(self).values()); };
  return push(std::move(n));
}

Var Tape::record(std::string_view op, Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
  return record(op, std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
}

Var Tape::record(std::string_view op, Tensor value, std::span<const Var> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  for (const Var& p : parents) {
    if (&p.tape() != this) throw UsageError("operands recorded on different tapes");
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.grad_ready) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.grad_ready = true;
  }
  return n.grad;
}

void Tape::backward(Var root) {
  if (&root.tape() != this) throw UsageError("backward root belongs to another tape");
  if (value(root.id()).size() != 1) throw UsageError("backward requires a scalar root");
  for (auto& n : nodes_) n.grad_ready = false;
  grad(root.id())[0] = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.grad_ready || !n.requires_grad || !n.backward) continue;
    n.backward(*this, i);
  }
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

void require_same_shape(Var a, Var b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw DimensionError(std::string(op) + ": shape " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

Tensor like(const Tensor& t) { return Tensor::matrix(t.rows(), t.cols()); }

// Accumulates into a parent's gradient slot when the parent needs one.
template <typename Fn>
void accumulate(Tape& t, Var parent, Fn&& fn) {
  if (!t.requires_grad(parent.id())) return;
  fn(t.grad(parent.id()));
}

template <typename Fn>
Var unary(std::string_view op, Var a, Fn&& forward, Tape::BackwardFn backward) {
  const Tensor& av = a.value();
  Tensor out = like(av);
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = forward(av[i]);
  return a.tape().record(op, std::move(out), {a}, std::move(backward));
}

void apply_activation(Activation act, std::span<double> v) {
  switch (act) {
    case Activation::identity:
      break;
    case Activation::relu:
      for (double& x : v) x = x > 0.0 ? x : 0.0;
      break;
    case Activation::tanh:
      for (double& x : v) x = std::tanh(x);
      break;
    case Activation::softplus:
      for (double& x : v) x = softplus(x);
      break;
    case Activation::sigmoid:
      for (double& x : v) x = sigmoid(x);
      break;
  }
}

// d(out)/d(pre-activation) expressed through the activation output y.
void activation_backward(Activation act, std::span<const double> y, std::span<double> g) {
  switch (act) {
    case Activation::identity:
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = y[i] > 0.0 ? g[i] : 0.0;
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - y[i] * y[i];
      break;
    case Activation::softplus:
      // sigmoid(z) = 1 - exp(-softplus(z))
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= -std::expm1(-y[i]);
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= y[i] * (1.0 - y[i]);
      break;
  }
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape().record("add", std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    accumulate(t, a, [&](Tensor& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i]; });
    accumulate(t, b, [&](Tensor& gb) { for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i]; });
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape().record("sub", std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    accumulate(t, a, [&](Tensor& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i]; });
    accumulate(t, b, [&](Tensor& gb) { for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i]; });
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape().record("mul", std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    accumulate(t, a, [&](Tensor& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i]; });
    accumulate(t, b, [&](Tensor& gb) { for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i]; });
  });
}

Var scale(Var a, double factor) {
  return unary("scale", a, [factor](double x) { return x * factor; }, [a, factor](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    accumulate(t, a, [&](Tensor& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor; });
  });
}

Var add_scalar(Var a, double offset) {
  return unary("add_scalar", a, [offset](double x) { return x + offset; }, [a](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    accumulate(t, a, [&](Tensor& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i]; });
  });
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: " + std::to_string(av.rows()) + "x" + std::to_string(av.cols()) + " times " +
                         std::to_string(bv.rows()) + "x" + std::to_string(bv.cols()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out = Tensor::matrix(m, n);
  simd::gemm_nn(m, k, n, av.values(), bv.values(), out.values());
  return a.tape().record("matmul", std::move(out), {a, b}, [a, b, m, k, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    accumulate(t, a, [&](Tensor& ga) { simd::gemm_nt(m, n, k, g.values(), b.value().values(), ga.values()); });
    accumulate(t, b, [&](Tensor& gb) { simd::gemm_tn(m, k, n, a.value().values(), g.values(), gb.values()); });
  });
}

Var add_row(Var a, Var row) {
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) throw DimensionError("add_row: row width mismatch");
  Tensor out = av;
  const std::size_t c = av.cols();
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] += rv[j];
  return a.tape().record("add_row", std::move(out), {a, row}, [a, row, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    accumulate(t, a, [&](Tensor& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i]; });
    accumulate(t, row, [&](Tensor& gr) {
      for (std::size_t i = 0; i < g.size(); ++i) gr[i % c] += g[i];
    });
  });
}

Var activate(Var a, Activation act) {
  Tensor out = a.value();
  apply_activation(act, out.values());
  return a.tape().record("activate", std::move(out), {a}, [a, act](Tape& t, std::size_t self) {
    Tensor g = t.grad(self);
    activation_backward(act, t.value(self).values(), g.values());
    accumulate(t, a, [&](Tensor& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i]; });
  });
}

Var log(Var a) {
  for (double v : a.value().values()) {
    if (!(v > 0.0)) throw DomainError("log of a non-positive value");
  }
  return unary("log", a, [](double x) { return std::log(x); }, [a](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = a.value();
    accumulate(t, a, [&](Tensor& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / av[i]; });
  });
}

Var exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [a](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    accumulate(t, a, [&](Tensor& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i]; });
  });
}

Var square(Var a) {
  return unary("square", a, [](double x) { return x * x; }, [a](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = a.value();
    accumulate(t, a, [&](Tensor& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * g[i] * av[i]; });
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape().record("sum", Tensor::scalar(s), {a}, [a](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    accumulate(t, a, [&](Tensor& ga) { for (double& v : ga.values()) v += g; });
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  const std::size_t rows = parts[0].rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    total += p.cols();
  }
  Tensor out = Tensor::matrix(rows, total);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    const std::size_t c = pv.cols();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(pv.data() + r * c, c, out.data() + r * total + offset);
    offset += c;
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  return parts[0].tape().record("concat_cols", std::move(out), parts,
                                [owned, rows, total](Tape& t, std::size_t self) {
                                  const Tensor& g = t.grad(self);
                                  std::size_t off = 0;
                                  for (const Var& p : owned) {
                                    const std::size_t c = p.cols();
                                    accumulate(t, p, [&](Tensor& gp) {
                                      for (std::size_t r = 0; r < rows; ++r)
                                        for (std::size_t j = 0; j < c; ++j) gp[r * c + j] += g[r * total + off + j];
                                    });
                                    off += c;
                                  }
                                });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  const std::size_t c = av.cols();
  if (count == 0 || begin + count > c) throw DimensionError("slice_cols: range outside the operand");
  const std::size_t rows = av.rows();
  Tensor out = Tensor::matrix(rows, count);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(av.data() + r * c + begin, count, out.data() + r * count);
  return a.tape().record("slice_cols", std::move(out), {a}, [a, begin, count, c, rows](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    accumulate(t, a, [&](Tensor& ga) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < count; ++j) ga[r * c + begin + j] += g[r * count + j];
    });
  });
}

Var select_rows(std::span<const std::uint8_t> take_a, Var a, Var b) {
  require_same_shape(a, b, "select_rows");
  if (take_a.size() != a.rows()) throw DimensionError("select_rows: mask length differs from row count");
  const std::size_t c = a.cols();
  Tensor out = b.value();
  const Tensor& av = a.value();
  for (std::size_t r = 0; r < take_a.size(); ++r) {
    if (take_a[r]) std::copy_n(av.data() + r * c, c, out.data() + r * c);
  }
  std::vector<std::uint8_t> mask(take_a.begin(), take_a.end());
  return a.tape().record("select_rows", std::move(out), {a, b}, [a, b, c, mask](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    accumulate(t, a, [&](Tensor& ga) {
      for (std::size_t r = 0; r < mask.size(); ++r)
        if (mask[r])
          for (std::size_t j = 0; j < c; ++j) ga[r * c + j] += g[r * c + j];
    });
    accumulate(t, b, [&](Tensor& gb) {
      for (std::size_t r = 0; r < mask.size(); ++r)
        if (!mask[r])
          for (std::size_t j = 0; j < c; ++j) gb[r * c + j] += g[r * c + j];
    });
  });
}

Var dense(Var input, Var weight, Var bias, Activation act) {
  const Tensor& xv = input.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  if (xv.cols() != wv.rows()) {
    throw DimensionError("dense: input has " + std::to_string(xv.cols()) + " columns, weight has " +
                         std::to_string(wv.rows()) + " rows");
  }
  if (bv.size() != wv.cols()) throw DimensionError("dense: bias width differs from weight columns");
  const std::size_t m = xv.rows(), k = xv.cols(), n = wv.cols();
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t r = 0; r < m; ++r) std::copy_n(bv.data(), n, out.data() + r * n);
  simd::gemm_nn(m, k, n, xv.values(), wv.values(), out.values());
  apply_activation(act, out.values());
  return input.tape().record(
      "dense", std::move(out), {input, weight, bias}, [input, weight, bias, act, m, k, n](Tape& t, std::size_t self) {
        Tensor dz = t.grad(self);
        activation_backward(act, t.value(self).values(), dz.values());
        accumulate(t, input,
                   [&](Tensor& gx) { simd::gemm_nt(m, n, k, dz.values(), weight.value().values(), gx.values()); });
        accumulate(t, weight,
                   [&](Tensor& gw) { simd::gemm_tn(m, k, n, input.value().values(), dz.values(), gw.values()); });
        accumulate(t, bias, [&](Tensor& gb) {
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < n; ++j) gb[j] += dz[r * n + j];
        });
      });
}

}  // namespace icevae::ad
