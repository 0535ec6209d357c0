#ifndef DPF_TENSOR_HPP
#define DPF_TENSOR_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dpf/errors.hpp"

namespace dpf {

using Index = std::int64_t;
using Shape = std::vector<Index>;
using Array = Eigen::ArrayXd;
using IndexMatrix = Eigen::Array<Index, Eigen::Dynamic, Eigen::Dynamic>;

class Tape;

inline Index shape_numel(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

/// Row-major strides.
inline Shape shape_strides(const Shape& s) {
  Shape st(s.size());
  Index acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

/// Dense 64-bit float tensor with row-major layout and an optional handle
/// into the active tape. A tensor without a node participates in forward
/// arithmetic but contributes no gradient.
struct Tensor {
  Shape shape;
  Array data;
  Tape* tape = nullptr;
  Index node = -1;

  Tensor() = default;
  Tensor(Shape s, Array d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_numel(shape))
      throw ContractError("tensor data length " + std::to_string(data.size()) +
                          " does not match shape " + shape_str(shape));
  }

  Index numel() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  Index dim(int i) const {
    if (i < 0) i += rank();
    return shape[static_cast<std::size_t>(i)];
  }
  bool on_tape() const { return tape != nullptr && node >= 0; }

  double value() const {
    if (numel() != 1)
      throw ContractError("value() requires a scalar tensor, got shape " + shape_str(shape));
    return data[0];
  }

  static Tensor scalar(double v) {
    Array a(1);
    a[0] = v;
    return Tensor({}, std::move(a));
  }
  static Tensor full(Shape s, double v) {
    Array a = Array::Constant(shape_numel(s), v);
    return Tensor(std::move(s), std::move(a));
  }
  static Tensor zeros(Shape s) { return full(std::move(s), 0.0); }
};

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

/// Trailing-dimension broadcast result shape; throws on incompatibility.
inline Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t n = std::max(a.size(), b.size());
  Shape out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Index da = i < n - a.size() ? 1 : a[i - (n - a.size())];
    const Index db = i < n - b.size() ? 1 : b[i - (n - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ContractError("shapes " + shape_str(a) + " and " + shape_str(b) +
                          " are not broadcast-compatible");
    out[i] = std::max(da, db);
  }
  return out;
}

}  // namespace dpf

#endif
