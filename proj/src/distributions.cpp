#include "dpf/distributions.hpp"

#include <cmath>
#include <limits>

namespace dpf {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Normalised per-row weights as a plain array; throws on degenerate rows.
Array row_weights(const Tensor& log_weights) {
  if (log_weights.rank() != 2)
    throw ContractError("expected log-weights of shape (B,K), got " + shape_str(log_weights.shape));
  const Index b = log_weights.shape[0], k = log_weights.shape[1];
  Array w(b * k);
  for (Index bi = 0; bi < b; ++bi) {
    double m = -std::numeric_limits<double>::infinity();
    for (Index ki = 0; ki < k; ++ki) m = std::max(m, log_weights.data[bi * k + ki]);
    if (!std::isfinite(m))
      throw NumericalError("degenerate weights: batch row " + std::to_string(bi) +
                           " has no finite log-weight");
    double acc = 0.0;
    for (Index ki = 0; ki < k; ++ki) acc += std::exp(log_weights.data[bi * k + ki] - m);
    for (Index ki = 0; ki < k; ++ki)
      w[bi * k + ki] = std::exp(log_weights.data[bi * k + ki] - m) / acc;
  }
  return w;
}

}  // namespace

std::pair<Tensor, Tensor> log_normalise(const Tensor& log_weights) {
  Tensor norm = logsumexp(log_weights, -1);
  for (Index i = 0; i < norm.numel(); ++i)
    if (!std::isfinite(norm.data[i]))
      throw NumericalError("degenerate weights: log-normaliser is not finite at row " +
                           std::to_string(i));
  return {sub(log_weights, norm), norm};
}

Tensor gaussian_sample_around(const Tensor& mean, const Tensor& cholesky, Rng& rng) {
  const Index d = cholesky.shape.at(0);
  if (cholesky.rank() != 2 || cholesky.shape[1] != d)
    throw ContractError("cholesky must be square, got " + shape_str(cholesky.shape));
  if (mean.dim(-1) != d)
    throw ContractError("mean trailing extent " + shape_str(mean.shape) +
                        " does not match cholesky " + shape_str(cholesky.shape));
  Tensor eps(mean.shape, rng.normals(mean.numel()));
  return add(mean, matmul(eps, transpose2d(cholesky)));
}

Tensor gaussian_log_density_around(const Tensor& mean, const Tensor& cholesky,
                                   const Tensor& x) {
  const Index d = cholesky.shape.at(0);
  Tensor resid = sub(x, mean);
  Tensor z = trisolve_lower(cholesky, resid);
  Tensor quad = sum(mul(z, z), -1);                          // (..., 1)
  Tensor log_det = sum(log(diag_part(cholesky)), 0);         // (1)
  Tensor out = mul(add(add(quad, mul(log_det, Tensor::scalar(2.0))),
                       Tensor::scalar(static_cast<double>(d) * kLog2Pi)),
                   Tensor::scalar(-0.5));
  Shape s(out.shape.begin(), out.shape.end() - 1);
  return reshape(out, std::move(s));
}

MultivariateGaussian::MultivariateGaussian(Tensor mean_, Tensor cholesky_)
    : mean(std::move(mean_)), cholesky(std::move(cholesky_)) {
  const Index d = mean.numel();
  if (cholesky.rank() != 2 || cholesky.shape[0] != d || cholesky.shape[1] != d)
    throw ContractError("cholesky shape " + shape_str(cholesky.shape) +
                        " does not match mean of dimension " + std::to_string(d));
  for (Index i = 0; i < d; ++i) {
    if (cholesky.data[i * d + i] <= 0.0)
      throw ContractError("cholesky diagonal must be positive");
    for (Index j = i + 1; j < d; ++j)
      if (cholesky.data[i * d + j] != 0.0)
        throw ContractError("cholesky must be lower-triangular");
  }
}

Tensor MultivariateGaussian::sample(const Shape& batch_dims, Rng& rng) const {
  Shape s = batch_dims;
  s.push_back(dim());
  Tensor eps(s, rng.normals(shape_numel(s)));
  return add(mean, matmul(eps, transpose2d(cholesky)));
}

Tensor MultivariateGaussian::log_density(const Tensor& x) const {
  if (x.dim(-1) != dim())
    throw ContractError("sample trailing extent " + shape_str(x.shape) +
                        " does not match distribution dimension " + std::to_string(dim()));
  return gaussian_log_density_around(mean, cholesky, x);
}

IndexMatrix categorical_sample(const Tensor& log_weights, Index count, Rng& rng) {
  const Index b = log_weights.shape.at(0), k = log_weights.shape.at(1);
  const Array w = row_weights(log_weights);
  IndexMatrix idx(b, count);
  std::vector<double> cdf(static_cast<std::size_t>(k));
  for (Index bi = 0; bi < b; ++bi) {
    double acc = 0.0;
    for (Index ki = 0; ki < k; ++ki) {
      acc += w[bi * k + ki];
      cdf[static_cast<std::size_t>(ki)] = acc;
    }
    cdf[static_cast<std::size_t>(k - 1)] = 1.0;
    for (Index c = 0; c < count; ++c) {
      const double u = rng.uniform();
      const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      idx(bi, c) = std::min<Index>(k - 1, it - cdf.begin());
    }
  }
  return idx;
}

IndexMatrix systematic_sample(const Tensor& log_weights, Rng& rng) {
  const Index b = log_weights.shape.at(0), k = log_weights.shape.at(1);
  const Array w = row_weights(log_weights);
  IndexMatrix idx(b, k);
  for (Index bi = 0; bi < b; ++bi) {
    const double u = rng.uniform();
    double acc = w[bi * k];
    Index j = 0;
    for (Index c = 0; c < k; ++c) {
      const double point = (u + static_cast<double>(c)) / static_cast<double>(k);
      while (point > acc && j < k - 1) {
        ++j;
        acc += w[bi * k + j];
      }
      idx(bi, c) = j;
    }
  }
  return idx;
}

}  // namespace dpf
