#pragma once
// Reverse-mode automatic differentiation over a linear tape of 2-D tensors.
//
// A Tape owns every intermediate value. Operations append nodes in evaluation
// order, so a single reverse sweep visits each node after all of its
// consumers. Var is a small handle (tape pointer + node index) and is only
// valid while its tape lives and has not been cleared.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "icevae/param_store.hpp"
#include "icevae/tensor.hpp"

namespace icevae::ad {

class Tape;

class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  /// Gradient from the last backward(); zeros when the node was not reached.
  Tensor grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient (data, frozen inputs).
  Var constant(Tensor value);
  /// Leaf that receives a gradient, readable through Var::grad().
  Var variable(Tensor value);
  /// Leaf bound to a parameter slot; backward() accumulates into the store.
  Var param(ParamStore& store, std::size_t index);
  Var param(ParamStore& store, const std::string& name) { return param(store, store.index_of(name)); }

  /// Propagates d(root)/d(node) to every node reachable from a scalar root and
  /// adds parameter gradients into their ParamStore slots. Node gradients are
  /// recomputed from scratch on every call; store gradients accumulate.
  void backward(Var root);

  /// Appends an operation node. requires_grad is inherited from the parents.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(std::string_view op, Tensor value, std::span<const Var> parents, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::string_view op(std::size_t id) const { return nodes_[id].op; }
  /// Gradient slot of a node, allocated (zeroed) on first use.
  Tensor& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return nodes_[id].grad_ready; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool grad_ready = false;
    bool requires_grad = false;
    std::string_view op;
    BackwardFn backward;
  };
  Var push(Node node);
  std::vector<Node> nodes_;
};

enum class Activation { identity, relu, tanh, softplus, sigmoid };

// Elementwise and structural primitives.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var matmul(Var a, Var b);
/// a[r x c] + row[1 x c] broadcast over rows.
Var add_row(Var a, Var row);
Var activate(Var a, Activation act);
Var log(Var a);
Var exp(Var a);
Var square(Var a);
Var sum(Var a);
Var mean(Var a);
Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
/// Row r of the result is a's row when take_a[r] != 0, else b's row.
Var select_rows(std::span<const std::uint8_t> take_a, Var a, Var b);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(Var a, double k) { return scale(a, k); }
inline Var operator*(double k, Var a) { return scale(a, k); }
inline Var operator+(Var a, double k) { return add_scalar(a, k); }

/// activation(input * weight + bias). weight is in x out, bias 1 x out.
Var dense(Var input, Var weight, Var bias, Activation act);

// Scalar helpers shared by the tape ops and the model code.
double softplus(double x);
double sigmoid(double x);

}  // namespace icevae::ad
