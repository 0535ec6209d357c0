#include "dpf/tape.hpp"
#include <atomic>

#include <algorithm>
#include <cmath>
#include <limits>

namespace dpf {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRowMat = Eigen::Map<RowMat>;
using ConstMapRowMat = Eigen::Map<const RowMat>;

Tape* common_tape(std::initializer_list<const Tensor*> ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->on_tape()) continue;
    if (tape == nullptr) tape = t->tape;
    else if (tape != t->tape)
      throw ContractError("operands live on different tapes");
  }
  return tape;
}

int normalize_axis(int axis, int rank) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank)
    throw ContractError("axis " + std::to_string(axis) + " out of range for rank " +
                        std::to_string(rank));
  return axis;
}

// Strides aligned to a broadcast output; 0 where the input dimension is 1.
Shape broadcast_strides(const Shape& in, const Shape& out) {
  const std::size_t pad = out.size() - in.size();
  Shape in_strides = shape_strides(in);
  Shape st(out.size(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i < pad) continue;
    const Index d = in[i - pad];
    st[i] = (d == 1 && out[i] != 1) ? 0 : in_strides[i - pad];
  }
  return st;
}

// Calls fn(out_flat, a_flat, b_flat) over every element of the broadcast
// result, odometer-style (no per-element div/mod).
template <class F>
void for_each_broadcast2(const Shape& out, const Shape& sa, const Shape& sb, F&& fn) {
  const Index n = shape_numel(out);
  if (n == 0) return;
  const int r = static_cast<int>(out.size());
  if (r == 0) {
    fn(0, 0, 0);
    return;
  }
  const Shape stra = broadcast_strides(sa, out);
  const Shape strb = broadcast_strides(sb, out);
  std::vector<Index> counter(r, 0);
  Index ia = 0, ib = 0;
  for (Index io = 0; io < n; ++io) {
    fn(io, ia, ib);
    for (int d = r - 1; d >= 0; --d) {
      ++counter[d];
      ia += stra[d];
      ib += strb[d];
      if (counter[d] < out[d]) break;
      ia -= stra[d] * out[d];
      ib -= strb[d] * out[d];
      counter[d] = 0;
    }
  }
}

// Sums g (laid out as g_shape) down to target_shape (broadcast inverse).
Array reduce_to(const Array& g, const Shape& g_shape, const Shape& target) {
  if (g_shape == target) return g;
  Array out = Array::Zero(shape_numel(target));
  for_each_broadcast2(g_shape, target, target,
                      [&](Index io, Index it, Index) { out[it] += g[io]; });
  return out;
}

struct BinaryEnv {
  Array a, b;
  Shape sa, sb, so;
};

template <class FwdF>
Tensor binary_op(const Tensor& a, const Tensor& b, FwdF&& fwd, Tape::Vjp (*make_vjp)(BinaryEnv, Index, Index)) {
  Shape so = broadcast_shapes(a.shape, b.shape);
  Array out(shape_numel(so));
  if (a.shape == b.shape) {
    for (Index i = 0; i < out.size(); ++i) out[i] = fwd(a.data[i], b.data[i]);
  } else {
    for_each_broadcast2(so, a.shape, b.shape, [&](Index io, Index ia, Index ib) {
      out[io] = fwd(a.data[ia], b.data[ib]);
    });
  }
  Tensor res(so, std::move(out));
  Tape* tape = common_tape({&a, &b});
  if (tape != nullptr) {
    BinaryEnv env{a.data, b.data, a.shape, b.shape, so};
    res.tape = tape;
    res.node = tape->append({a.node, b.node}, make_vjp(std::move(env), a.node, b.node));
  }
  return res;
}

template <class UnaryVjp>
Tensor unary_op(const Tensor& x, Array out, UnaryVjp&& vjp) {
  Tensor res(x.shape, std::move(out));
  if (x.on_tape()) {
    res.tape = x.tape;
    res.node = x.tape->append({x.node}, std::forward<UnaryVjp>(vjp));
  }
  return res;
}

struct AxisSplit {
  Index outer, extent, inner;
};

AxisSplit axis_split(const Shape& s, int axis) {
  AxisSplit sp{1, s[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) sp.outer *= s[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) sp.inner *= s[i];
  return sp;
}

}  // namespace

Tape::Tape() {
  static std::atomic<std::uint64_t> next{1};
  id_ = next.fetch_add(1);
}

Tensor Tape::leaf(Array data, Shape shape) {
  Tensor t(std::move(shape), std::move(data));
  t.tape = this;
  t.node = append({}, nullptr);
  return t;
}

Tensor Tape::leaf(const Tensor& constant) { return leaf(constant.data, constant.shape); }

Index Tape::append(std::vector<Index> /*parents*/, Vjp vjp) {
  nodes_.push_back(Node{{}, std::move(vjp)});
  return static_cast<Index>(nodes_.size()) - 1;
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape));
  if (ran_backward_) throw ContractError("backward: tape already consumed");
  if (!loss.on_tape()) {
    // Fully detached loss: every gradient is zero.
    ran_backward_ = true;
    grads_.assign(nodes_.size(), std::nullopt);
    return;
  }
  if (loss.tape != this) throw ContractError("backward: loss is not recorded on this tape");
  ran_backward_ = true;
  grads_.assign(nodes_.size(), std::nullopt);
  grads_[static_cast<std::size_t>(loss.node)] = Array::Ones(1);
  for (Index i = loss.node; i >= 0; --i) {
    auto& g = grads_[static_cast<std::size_t>(i)];
    if (!g.has_value()) continue;
    const auto& vjp = nodes_[static_cast<std::size_t>(i)].vjp;
    if (vjp) vjp(*g, *this);
  }
}

Array Tape::grad(const Tensor& t) const {
  if (!ran_backward_) throw ContractError("grad: backward has not been run");
  if (t.on_tape() && t.tape == this) {
    const auto& g = grads_[static_cast<std::size_t>(t.node)];
    if (g.has_value()) return *g;
  }
  return Array::Zero(t.numel());
}

void Tape::accumulate(Index node, const Array& g) {
  if (node < 0) return;
  auto& slot = grads_[static_cast<std::size_t>(node)];
  if (slot.has_value()) *slot += g;
  else slot = g;
}

// ---- elementwise binaries ---------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x + y; },
      +[](BinaryEnv env, Index na, Index nb) -> Tape::Vjp {
        return [env = std::move(env), na, nb](const Array& g, Tape& tape) {
          tape.accumulate(na, reduce_to(g, env.so, env.sa));
          tape.accumulate(nb, reduce_to(g, env.so, env.sb));
        };
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x - y; },
      +[](BinaryEnv env, Index na, Index nb) -> Tape::Vjp {
        return [env = std::move(env), na, nb](const Array& g, Tape& tape) {
          tape.accumulate(na, reduce_to(g, env.so, env.sa));
          tape.accumulate(nb, reduce_to(-g, env.so, env.sb));
        };
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x * y; },
      +[](BinaryEnv env, Index na, Index nb) -> Tape::Vjp {
        return [env = std::move(env), na, nb](const Array& g, Tape& tape) {
          if (na >= 0) {
            Array ga(g.size());
            for_each_broadcast2(env.so, env.sa, env.sb,
                                [&](Index io, Index, Index ib) { ga[io] = g[io] * env.b[ib]; });
            tape.accumulate(na, reduce_to(ga, env.so, env.sa));
          }
          if (nb >= 0) {
            Array gb(g.size());
            for_each_broadcast2(env.so, env.sa, env.sb,
                                [&](Index io, Index ia, Index) { gb[io] = g[io] * env.a[ia]; });
            tape.accumulate(nb, reduce_to(gb, env.so, env.sb));
          }
        };
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x / y; },
      +[](BinaryEnv env, Index na, Index nb) -> Tape::Vjp {
        return [env = std::move(env), na, nb](const Array& g, Tape& tape) {
          if (na >= 0) {
            Array ga(g.size());
            for_each_broadcast2(env.so, env.sa, env.sb,
                                [&](Index io, Index, Index ib) { ga[io] = g[io] / env.b[ib]; });
            tape.accumulate(na, reduce_to(ga, env.so, env.sa));
          }
          if (nb >= 0) {
            Array gb(g.size());
            for_each_broadcast2(env.so, env.sa, env.sb, [&](Index io, Index ia, Index ib) {
              const double bv = env.b[ib];
              gb[io] = -g[io] * env.a[ia] / (bv * bv);
            });
            tape.accumulate(nb, reduce_to(gb, env.so, env.sb));
          }
        };
      });
}

// ---- elementwise unaries ----------------------------------------------------

Tensor neg(const Tensor& x) {
  return unary_op(x, -x.data, [n = x.node](const Array& g, Tape& tape) {
    tape.accumulate(n, -g);
  });
}

Tensor exp(const Tensor& x) {
  Array out = x.data.exp();
  return unary_op(x, out, [n = x.node, out](const Array& g, Tape& tape) {
    tape.accumulate(n, g * out);
  });
}

Tensor log(const Tensor& x) {
  return unary_op(x, x.data.log(), [n = x.node, v = x.data](const Array& g, Tape& tape) {
    tape.accumulate(n, g / v);
  });
}

Tensor pow(const Tensor& x, double exponent) {
  Array out = x.data.pow(exponent);
  return unary_op(x, out, [n = x.node, v = x.data, exponent](const Array& g, Tape& tape) {
    tape.accumulate(n, g * exponent * v.pow(exponent - 1.0));
  });
}

Tensor sqrt(const Tensor& x) {
  Array out = x.data.sqrt();
  return unary_op(x, out, [n = x.node, out](const Array& g, Tape& tape) {
    tape.accumulate(n, g * 0.5 / out);
  });
}

Tensor clip_gradient(const Tensor& x, double c) {
  if (c <= 0.0) throw ContractError("clip_gradient: clip value must be positive");
  return unary_op(x, x.data, [n = x.node, c](const Array& g, Tape& tape) {
    tape.accumulate(n, g.cwiseMin(c).cwiseMax(-c));
  });
}

Tensor stop_gradient(const Tensor& x) {
  Tensor t(x.shape, x.data);
  return t;
}

// ---- reductions -------------------------------------------------------------

Tensor sum(const Tensor& x, int axis) {
  const int ax = normalize_axis(axis, x.rank());
  const AxisSplit sp = axis_split(x.shape, ax);
  Shape so = x.shape;
  so[static_cast<std::size_t>(ax)] = 1;
  Array out = Array::Zero(sp.outer * sp.inner);
  for (Index o = 0; o < sp.outer; ++o)
    for (Index e = 0; e < sp.extent; ++e)
      for (Index i = 0; i < sp.inner; ++i)
        out[o * sp.inner + i] += x.data[(o * sp.extent + e) * sp.inner + i];
  Tensor res(so, std::move(out));
  if (x.on_tape()) {
    res.tape = x.tape;
    res.node = x.tape->append({x.node}, [n = x.node, sp](const Array& g, Tape& tape) {
      Array gx(sp.outer * sp.extent * sp.inner);
      for (Index o = 0; o < sp.outer; ++o)
        for (Index e = 0; e < sp.extent; ++e)
          for (Index i = 0; i < sp.inner; ++i)
            gx[(o * sp.extent + e) * sp.inner + i] = g[o * sp.inner + i];
      tape.accumulate(n, gx);
    });
  }
  return res;
}

Tensor mean(const Tensor& x, int axis) {
  const int ax = normalize_axis(axis, x.rank());
  const double scale = 1.0 / static_cast<double>(x.shape[static_cast<std::size_t>(ax)]);
  return mul(sum(x, ax), Tensor::scalar(scale));
}

Tensor logsumexp(const Tensor& x, int axis) {
  const int ax = normalize_axis(axis, x.rank());
  const AxisSplit sp = axis_split(x.shape, ax);
  Shape so = x.shape;
  so[static_cast<std::size_t>(ax)] = 1;
  Array out(sp.outer * sp.inner);
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  for (Index o = 0; o < sp.outer; ++o) {
    for (Index i = 0; i < sp.inner; ++i) {
      double m = kNegInf;
      for (Index e = 0; e < sp.extent; ++e)
        m = std::max(m, x.data[(o * sp.extent + e) * sp.inner + i]);
      if (m == kNegInf) {
        out[o * sp.inner + i] = kNegInf;
        continue;
      }
      double acc = 0.0;
      for (Index e = 0; e < sp.extent; ++e)
        acc += std::exp(x.data[(o * sp.extent + e) * sp.inner + i] - m);
      out[o * sp.inner + i] = m + std::log(acc);
    }
  }
  Tensor res(so, out);
  if (x.on_tape()) {
    res.tape = x.tape;
    res.node = x.tape->append(
        {x.node}, [n = x.node, sp, v = x.data, out](const Array& g, Tape& tape) {
          Array gx = Array::Zero(v.size());
          for (Index o = 0; o < sp.outer; ++o)
            for (Index i = 0; i < sp.inner; ++i) {
              const double lse = out[o * sp.inner + i];
              if (!std::isfinite(lse)) continue;
              const double go = g[o * sp.inner + i];
              for (Index e = 0; e < sp.extent; ++e) {
                const Index ix = (o * sp.extent + e) * sp.inner + i;
                gx[ix] = go * std::exp(v[ix] - lse);
              }
            }
          tape.accumulate(n, gx);
        });
  }
  return res;
}

Tensor sum_all(const Tensor& x) {
  Array out(1);
  out[0] = x.data.sum();
  Tensor res({}, std::move(out));
  if (x.on_tape()) {
    res.tape = x.tape;
    res.node = x.tape->append({x.node}, [n = x.node, m = x.numel()](const Array& g, Tape& tape) {
      tape.accumulate(n, Array::Constant(m, g[0]));
    });
  }
  return res;
}

Tensor mean_all(const Tensor& x) {
  return mul(sum_all(x), Tensor::scalar(1.0 / static_cast<double>(x.numel())));
}

// ---- shape ops --------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw ContractError("reshape: cannot view " + shape_str(x.shape) + " as " + shape_str(shape));
  Tensor res(std::move(shape), x.data);
  if (x.on_tape()) {
    res.tape = x.tape;
    res.node = x.tape->append({x.node}, [n = x.node](const Array& g, Tape& tape) {
      tape.accumulate(n, g);
    });
  }
  return res;
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  const Shape so = broadcast_shapes(x.shape, shape);
  if (so != shape)
    throw ContractError("broadcast_to: " + shape_str(x.shape) + " does not broadcast to " +
                        shape_str(shape));
  Array out(shape_numel(so));
  for_each_broadcast2(so, x.shape, x.shape,
                      [&](Index io, Index ia, Index) { out[io] = x.data[ia]; });
  Tensor res(so, std::move(out));
  if (x.on_tape()) {
    res.tape = x.tape;
    res.node = x.tape->append({x.node}, [n = x.node, sx = x.shape, so](const Array& g, Tape& tape) {
      tape.accumulate(n, reduce_to(g, so, sx));
    });
  }
  return res;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const int rank = parts.front().rank();
  const int ax = normalize_axis(axis, rank);
  Shape so = parts.front().shape;
  Index total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != rank) throw ContractError("concat: rank mismatch");
    for (int d = 0; d < rank; ++d)
      if (d != ax && p.shape[static_cast<std::size_t>(d)] != so[static_cast<std::size_t>(d)])
        throw ContractError("concat: shape mismatch " + shape_str(p.shape) + " vs " +
                            shape_str(so));
    total += p.shape[static_cast<std::size_t>(ax)];
  }
  so[static_cast<std::size_t>(ax)] = total;
  const AxisSplit sp = axis_split(so, ax);
  Array out(shape_numel(so));
  Index offset = 0;
  std::vector<Index> extents;
  for (const Tensor& p : parts) {
    const Index ext = p.shape[static_cast<std::size_t>(ax)];
    extents.push_back(ext);
    for (Index o = 0; o < sp.outer; ++o)
      for (Index e = 0; e < ext; ++e)
        for (Index i = 0; i < sp.inner; ++i)
          out[(o * sp.extent + offset + e) * sp.inner + i] =
              p.data[(o * ext + e) * sp.inner + i];
    offset += ext;
  }
  Tensor res(so, std::move(out));
  Tape* tape = nullptr;
  for (const Tensor& p : parts)
    if (p.on_tape()) {
      if (tape && tape != p.tape) throw ContractError("concat: operands on different tapes");
      tape = p.tape;
    }
  if (tape != nullptr) {
    std::vector<Index> nodes;
    for (const Tensor& p : parts) nodes.push_back(p.node);
    res.tape = tape;
    res.node = tape->append({}, [nodes, extents, sp](const Array& g, Tape& tp) {
      Index off = 0;
      for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
        const Index ext = extents[pi];
        if (nodes[pi] >= 0) {
          Array gp(sp.outer * ext * sp.inner);
          for (Index o = 0; o < sp.outer; ++o)
            for (Index e = 0; e < ext; ++e)
              for (Index i = 0; i < sp.inner; ++i)
                gp[(o * ext + e) * sp.inner + i] = g[(o * sp.extent + off + e) * sp.inner + i];
          tp.accumulate(nodes[pi], gp);
        }
        off += ext;
      }
    });
  }
  return res;
}

Tensor stack(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("stack: no inputs");
  std::vector<Tensor> lifted;
  lifted.reserve(parts.size());
  for (const Tensor& p : parts) {
    Shape s = p.shape;
    s.insert(s.begin(), 1);
    lifted.push_back(reshape(p, std::move(s)));
  }
  return concat(lifted, 0);
}

Tensor transpose2d(const Tensor& x) {
  if (x.rank() != 2) throw ContractError("transpose2d: expected rank 2, got " + shape_str(x.shape));
  const Index m = x.shape[0], n = x.shape[1];
  Array out(m * n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) out[j * m + i] = x.data[i * n + j];
  Tensor res({n, m}, std::move(out));
  if (x.on_tape()) {
    res.tape = x.tape;
    res.node = x.tape->append({x.node}, [nn = x.node, m, n](const Array& g, Tape& tape) {
      Array gx(m * n);
      for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < n; ++j) gx[i * n + j] = g[j * m + i];
      tape.accumulate(nn, gx);
    });
  }
  return res;
}

Tensor diag_part(const Tensor& x) {
  if (x.rank() != 2 || x.shape[0] != x.shape[1])
    throw ContractError("diag_part: expected square matrix, got " + shape_str(x.shape));
  const Index d = x.shape[0];
  Array out(d);
  for (Index i = 0; i < d; ++i) out[i] = x.data[i * d + i];
  Tensor res({d}, std::move(out));
  if (x.on_tape()) {
    res.tape = x.tape;
    res.node = x.tape->append({x.node}, [n = x.node, d](const Array& g, Tape& tape) {
      Array gx = Array::Zero(d * d);
      for (Index i = 0; i < d; ++i) gx[i * d + i] = g[i];
      tape.accumulate(n, gx);
    });
  }
  return res;
}

// ---- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (b.rank() != 2)
    throw ContractError("matmul: right operand must be 2-D, got " + shape_str(b.shape));
  if (a.rank() < 1 || a.dim(-1) != b.shape[0])
    throw ContractError("matmul: inner extents disagree, " + shape_str(a.shape) + " vs " +
                        shape_str(b.shape));
  const Index n = b.shape[0], p = b.shape[1];
  const Index rows = a.numel() / n;
  ConstMapRowMat am(a.data.data(), rows, n);
  ConstMapRowMat bm(b.data.data(), n, p);
  Array out(rows * p);
  MapRowMat(out.data(), rows, p) = am * bm;
  Shape so(a.shape.begin(), a.shape.end() - 1);
  so.push_back(p);
  Tensor res(std::move(so), std::move(out));
  Tape* tape = common_tape({&a, &b});
  if (tape != nullptr) {
    res.tape = tape;
    res.node = tape->append(
        {a.node, b.node},
        [na = a.node, nb = b.node, av = a.data, bv = b.data, rows, n, p](const Array& g, Tape& tp) {
          ConstMapRowMat gm(g.data(), rows, p);
          ConstMapRowMat am2(av.data(), rows, n);
          ConstMapRowMat bm2(bv.data(), n, p);
          if (na >= 0) {
            Array ga(rows * n);
            MapRowMat(ga.data(), rows, n) = gm * bm2.transpose();
            tp.accumulate(na, ga);
          }
          if (nb >= 0) {
            Array gb(n * p);
            MapRowMat(gb.data(), n, p) = am2.transpose() * gm;
            tp.accumulate(nb, gb);
          }
        });
  }
  return res;
}

Tensor trisolve_lower(const Tensor& s, const Tensor& r) {
  if (s.rank() != 2 || s.shape[0] != s.shape[1])
    throw ContractError("trisolve_lower: S must be square, got " + shape_str(s.shape));
  const Index d = s.shape[0];
  if (r.rank() < 1 || r.dim(-1) != d)
    throw ContractError("trisolve_lower: trailing extent of r must be " + std::to_string(d) +
                        ", got " + shape_str(r.shape));
  for (Index i = 0; i < d; ++i)
    if (s.data[i * d + i] <= 0.0)
      throw ContractError("trisolve_lower: non-positive diagonal entry at " + std::to_string(i));
  const Index rows = r.numel() / d;
  ConstMapRowMat sm(s.data.data(), d, d);
  ConstMapRowMat rm(r.data.data(), rows, d);
  Array out(rows * d);
  // z_i = S^{-1} r_i, i.e. Z^T = S^{-1} R^T.
  MapRowMat zm(out.data(), rows, d);
  zm.transpose() = sm.triangularView<Eigen::Lower>().solve(rm.transpose());
  Tensor res(r.shape, out);
  Tape* tape = common_tape({&s, &r});
  if (tape != nullptr) {
    res.tape = tape;
    res.node = tape->append(
        {s.node, r.node},
        [ns = s.node, nr = r.node, sv = s.data, zv = out, rows, d](const Array& g, Tape& tp) {
          ConstMapRowMat sm2(sv.data(), d, d);
          ConstMapRowMat gm(g.data(), rows, d);
          // grad_r rows are S^{-T} g_i.
          RowMat gr(rows, d);
          gr.transpose() =
              sm2.transpose().triangularView<Eigen::Upper>().solve(gm.transpose());
          if (nr >= 0) {
            Array out_r(rows * d);
            MapRowMat(out_r.data(), rows, d) = gr;
            tp.accumulate(nr, out_r);
          }
          if (ns >= 0) {
            ConstMapRowMat zm2(zv.data(), rows, d);
            Array out_s(d * d);
            MapRowMat os(out_s.data(), d, d);
            os = -(gr.transpose() * zm2);
            // The solve never reads the strict upper triangle.
            os.triangularView<Eigen::StrictlyUpper>().setZero();
            tp.accumulate(ns, out_s);
          }
        });
  }
  return res;
}

// ---- gather -----------------------------------------------------------------

Tensor gather_ancestors(const Tensor& x, const IndexMatrix& idx) {
  if (x.rank() < 2)
    throw ContractError("gather_ancestors: expected rank >= 2, got " + shape_str(x.shape));
  const Index b = x.shape[0], k = x.shape[1];
  if (idx.rows() != b)
    throw ContractError("gather_ancestors: batch extents disagree");
  const Index k_out = idx.cols();
  Index rest = 1;
  for (int i = 2; i < x.rank(); ++i) rest *= x.shape[static_cast<std::size_t>(i)];
  Shape so = x.shape;
  so[1] = k_out;
  Array out(b * k_out * rest);
  for (Index bi = 0; bi < b; ++bi)
    for (Index ki = 0; ki < k_out; ++ki) {
      const Index a = idx(bi, ki);
      if (a < 0 || a >= k)
        throw ContractError("gather_ancestors: index " + std::to_string(a) + " out of range");
      out.segment((bi * k_out + ki) * rest, rest) = x.data.segment((bi * k + a) * rest, rest);
    }
  Tensor res(so, std::move(out));
  if (x.on_tape()) {
    res.tape = x.tape;
    res.node =
        x.tape->append({x.node}, [n = x.node, idx, b, k, k_out, rest](const Array& g, Tape& tp) {
          Array gx = Array::Zero(b * k * rest);
          for (Index bi = 0; bi < b; ++bi)
            for (Index ki = 0; ki < k_out; ++ki)
              gx.segment((bi * k + idx(bi, ki)) * rest, rest) +=
                  g.segment((bi * k_out + ki) * rest, rest);
          tp.accumulate(n, gx);
        });
  }
  return res;
}

}  // namespace dpf
