#ifndef DPF_TAPE_HPP
#define DPF_TAPE_HPP

#include <functional>
#include <optional>
#include <vector>

#include "dpf/tensor.hpp"

namespace dpf {

/// Reverse-mode tape. Nodes are appended in topological order (parents
/// precede children); backward visits each node exactly once in reverse.
/// A tape is confined to one filter run on one worker and discarded after
/// backward.
class Tape {
 public:
  using Vjp = std::function<void(const Array& grad_out, Tape& tape)>;

  Tape();
  /// Process-unique id; lets parameter bindings detect stale tapes.
  std::uint64_t id() const { return id_; }

  /// Registers a leaf node (typically a model parameter).
  Tensor leaf(Array data, Shape shape);
  Tensor leaf(const Tensor& constant);

  /// Appends an interior node; used by the op library.
  Index append(std::vector<Index> parents, Vjp vjp);

  /// Runs the backward pass from a scalar loss. Gradients are then
  /// queryable through grad(); calling backward twice on one tape is an
  /// error.
  void backward(const Tensor& loss);

  /// Gradient of the last backward() loss w.r.t. t; zeros if untouched.
  Array grad(const Tensor& t) const;

  void accumulate(Index node, const Array& g);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<Index> parents;
    Vjp vjp;
  };
  std::vector<Node> nodes_;
  std::vector<std::optional<Array>> grads_;
  bool ran_backward_ = false;
  std::uint64_t id_;
};

// ---- Op library -----------------------------------------------------------
// Free functions; inputs must be tape-free or share one tape. Elementwise
// binaries broadcast with trailing-dimension alignment.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor pow(const Tensor& x, double exponent);
Tensor sqrt(const Tensor& x);

/// Reductions keep the reduced axis with extent 1.
Tensor sum(const Tensor& x, int axis);
Tensor mean(const Tensor& x, int axis);
Tensor logsumexp(const Tensor& x, int axis);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor broadcast_to(const Tensor& x, const Shape& shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
/// Stacks equal-shape tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& parts);
Tensor transpose2d(const Tensor& x);
Tensor diag_part(const Tensor& x);

/// C = A·B where B is 2-D (N×P) and A has trailing extent N; all leading
/// axes of A are treated as rows.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Row-wise solve S·zᵢ = rᵢ with S lower-triangular; r has trailing
/// extent D. Differentiable in both S and r.
Tensor trisolve_lower(const Tensor& s, const Tensor& r);

/// out[b,k,...] = x[b, idx(b,k), ...]; indices are constants, gradient
/// scatter-adds into the chosen ancestors.
Tensor gather_ancestors(const Tensor& x, const IndexMatrix& idx);

/// Identity in value, zero in gradient.
Tensor stop_gradient(const Tensor& x);

/// Identity forward; backward clamps each gradient element to [-c, c].
Tensor clip_gradient(const Tensor& x, double c);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
inline Tensor operator+(double a, const Tensor& b) { return add(Tensor::scalar(a), b); }
inline Tensor operator-(const Tensor& a, double b) { return sub(a, Tensor::scalar(b)); }
inline Tensor operator-(double a, const Tensor& b) { return sub(Tensor::scalar(a), b); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
inline Tensor operator*(double a, const Tensor& b) { return mul(Tensor::scalar(a), b); }
inline Tensor operator/(const Tensor& a, double b) { return div(a, Tensor::scalar(b)); }
inline Tensor operator/(double a, const Tensor& b) { return div(Tensor::scalar(a), b); }

}  // namespace dpf

#endif
