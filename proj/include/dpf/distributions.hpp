#ifndef DPF_DISTRIBUTIONS_HPP
#define DPF_DISTRIBUTIONS_HPP

#include <utility>

#include "dpf/random.hpp"
#include "dpf/tape.hpp"

namespace dpf {

/// Normalises log-weights along the trailing axis. Returns the normalised
/// log-weights and the log-normaliser (keepdim, extent 1); the latter is the
/// building block of the likelihood factors. Throws on a fully degenerate
/// (all minus-infinity) row.
std::pair<Tensor, Tensor> log_normalise(const Tensor& log_weights);

/// Reparametrised draw: mean + eps * cholesky^T with eps standard normal and
/// recorded as a constant, so gradient flows to mean and cholesky only.
/// mean has trailing extent D; cholesky is D x D lower-triangular.
Tensor gaussian_sample_around(const Tensor& mean, const Tensor& cholesky, Rng& rng);

/// Log N(x; mean, cholesky cholesky^T) per row; differentiable in all three.
/// mean and x broadcast against each other on their leading axes.
Tensor gaussian_log_density_around(const Tensor& mean, const Tensor& cholesky, const Tensor& x);

/// Fixed-parameter multivariate Gaussian; mean (D), cholesky (D x D) with
/// positive diagonal. The tensors may live on a tape when learnable.
struct MultivariateGaussian {
  Tensor mean;
  Tensor cholesky;

  MultivariateGaussian(Tensor mean_, Tensor cholesky_);

  Index dim() const { return mean.dim(-1); }
  /// Sample of shape (batch_dims..., D).
  Tensor sample(const Shape& batch_dims, Rng& rng) const;
  Tensor log_density(const Tensor& x) const;
};

/// I.i.d. ancestor draws per batch row from normalised log-weights (B x K);
/// indices carry no gradient.
IndexMatrix categorical_sample(const Tensor& log_weights, Index count, Rng& rng);

/// Stratified inverse-CDF draws at (u + k)/K with one shared uniform per
/// batch row; marginally unbiased.
IndexMatrix systematic_sample(const Tensor& log_weights, Rng& rng);

}  // namespace dpf

#endif
