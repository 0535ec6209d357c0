#ifndef DPF_CONSTRAINTS_HPP
#define DPF_CONSTRAINTS_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "dpf/tensor.hpp"

namespace dpf {

/// Projects a raw square matrix onto the lower-triangular positive-diagonal
/// Cholesky factors: zeroes the strict upper triangle, flips the sign of
/// negative diagonal entries, and clamps exactly-zero diagonal entries to
/// `floor` (reported through `floored` when given, otherwise warned on
/// stderr). Identity on already-valid input. Applied out-of-tape.
Tensor constrain_cholesky(const Tensor& raw, double floor = 1e-8, bool* floored = nullptr);

/// Divides by the spectral radius when it exceeds max_radius; the result then
/// has radius exactly 1, not max_radius. Identity otherwise.
Tensor constrain_spectral_radius(const Tensor& raw, double max_radius);

/// Spectral radius of a square matrix.
double spectral_radius(const Tensor& m);

/// Sign-flips negatives and clamps exact zeros to `floor`, elementwise; the
/// one-dimensional case of the Cholesky rule.
Tensor constrain_positive(const Tensor& raw, double floor = 1e-8);

/// Clamps elementwise to [lo, hi].
Tensor constrain_interval(const Tensor& raw, double lo, double hi);

/// Lazily recomputed value invalidated when any watched version counter
/// changes (parameters bump their version on update()).
template <class T>
class CachedValue {
 public:
  using Compute = std::function<T()>;
  using Stamp = std::function<std::uint64_t()>;

  CachedValue(Compute compute, Stamp stamp)
      : compute_(std::move(compute)), stamp_(std::move(stamp)) {}

  const T& get() const {
    const std::uint64_t now = stamp_();
    if (!value_ || seen_ != now) {
      value_ = compute_();
      seen_ = now;
    }
    return *value_;
  }

 private:
  Compute compute_;
  Stamp stamp_;
  mutable std::optional<T> value_;
  mutable std::uint64_t seen_ = ~0ull;
};

}  // namespace dpf

#endif
