#include "dpf/models.hpp"

#include <cmath>

namespace dpf {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;

Tensor expand_mean(const Tensor& mean, Index b, Index k) {
  const Index d = mean.numel();
  return broadcast_to(reshape(mean, {1, 1, d}), {b, k, d});
}
}  // namespace

Tensor squeeze_last(const Tensor& x) {
  if (x.rank() == 0 || x.dim(-1) != 1)
    throw ContractError("squeeze_last: trailing extent must be 1, got " + shape_str(x.shape));
  Shape s(x.shape.begin(), x.shape.end() - 1);
  return reshape(x, std::move(s));
}

Tensor diag_gaussian_log_density(const Tensor& mean, const Tensor& variances, const Tensor& x) {
  const Index d = variances.numel();
  Tensor resid = sub(x, mean);
  Tensor quad = sum(div(mul(resid, resid), variances), -1);      // (...,1)
  Tensor log_det = sum(log(variances), 0);                       // (1)
  Tensor out = mul(add(add(quad, log_det), Tensor::scalar(static_cast<double>(d) * kLog2Pi)),
                   Tensor::scalar(-0.5));
  return squeeze_last(out);
}

// ---- linear-Gaussian components ----------------------------------------------

GaussianPrior::GaussianPrior(ParameterPtr mean, ParameterPtr cholesky, Rng rng)
    : mean_(std::move(mean)), cholesky_(std::move(cholesky)), rng_(rng) {}

Tensor GaussianPrior::sample(Index batch_size, Index n_particles, const Context&) {
  return gaussian_sample_around(expand_mean(mean_->tensor(), batch_size, n_particles),
                                cholesky_->tensor(), rng_);
}

Tensor GaussianPrior::log_density(const Tensor& state, const Context&) {
  return gaussian_log_density_around(mean_->tensor(), cholesky_->tensor(), state);
}

LinearGaussianDynamic::LinearGaussianDynamic(ParameterPtr weight, ParameterPtr bias,
                                             ParameterPtr cholesky, Rng rng)
    : weight_(std::move(weight)), bias_(std::move(bias)), cholesky_(std::move(cholesky)),
      rng_(rng) {}

Tensor LinearGaussianDynamic::mean_of(const Tensor& prev_state) const {
  return add(matmul(prev_state, transpose2d(weight_->tensor())), bias_->tensor());
}

Tensor LinearGaussianDynamic::sample(const Tensor& prev_state, const Context&) {
  return gaussian_sample_around(mean_of(prev_state), cholesky_->tensor(), rng_);
}

Tensor LinearGaussianDynamic::log_density(const Tensor& prev_state, const Tensor& state,
                                          const Context&) {
  return gaussian_log_density_around(mean_of(prev_state), cholesky_->tensor(), state);
}

LinearGaussianObservation::LinearGaussianObservation(ParameterPtr weight, ParameterPtr cholesky,
                                                     Rng rng)
    : weight_(std::move(weight)), cholesky_(std::move(cholesky)), rng_(rng) {}

Tensor LinearGaussianObservation::score(const Tensor& state, const Tensor& observation,
                                        const Context&) {
  Tensor mean = matmul(state, transpose2d(weight_->tensor()));  // (B,K,Dy)
  const Index b = observation.shape.at(0), dy = observation.dim(-1);
  Tensor y = reshape(observation, {b, 1, dy});
  return gaussian_log_density_around(mean, cholesky_->tensor(), y);
}

Tensor LinearGaussianObservation::sample(const Tensor& state, const Context&) {
  return gaussian_sample_around(matmul(state, transpose2d(weight_->tensor())),
                                cholesky_->tensor(), rng_);
}

// ---- stochastic volatility -----------------------------------------------------

SvPrior::SvPrior(ParameterPtr alpha, ParameterPtr sigma, Rng rng)
    : alpha_(std::move(alpha)), sigma_(std::move(sigma)), rng_(rng) {}

Tensor SvPrior::stationary_sd() const {
  Tensor a = alpha_->tensor(), s = sigma_->tensor();
  return sqrt(div(mul(s, s), sub(Tensor::scalar(1.0), mul(a, a))));
}

Tensor SvPrior::sample(Index batch_size, Index n_particles, const Context&) {
  Tensor eps({batch_size, n_particles, 1}, rng_.normals(batch_size * n_particles));
  return mul(eps, stationary_sd());
}

Tensor SvPrior::log_density(const Tensor& state, const Context&) {
  Tensor sd = stationary_sd();
  Tensor z = div(state, sd);
  Tensor per = sub(mul(add(mul(z, z), Tensor::scalar(kLog2Pi)), Tensor::scalar(-0.5)), log(sd));
  return squeeze_last(per);
}

SvDynamic::SvDynamic(ParameterPtr alpha, ParameterPtr sigma, Rng rng)
    : alpha_(std::move(alpha)), sigma_(std::move(sigma)), rng_(rng) {}

Tensor SvDynamic::sample(const Tensor& prev_state, const Context&) {
  Tensor eps(prev_state.shape, rng_.normals(prev_state.numel()));
  return add(mul(alpha_->tensor(), prev_state), mul(sigma_->tensor(), eps));
}

Tensor SvDynamic::log_density(const Tensor& prev_state, const Tensor& state, const Context&) {
  Tensor sd = sigma_->tensor();
  Tensor z = div(sub(state, mul(alpha_->tensor(), prev_state)), sd);
  Tensor per = sub(mul(add(mul(z, z), Tensor::scalar(kLog2Pi)), Tensor::scalar(-0.5)), log(sd));
  return squeeze_last(per);
}

SvObservation::SvObservation(ParameterPtr beta, Rng rng) : beta_(std::move(beta)), rng_(rng) {}

Tensor SvObservation::score(const Tensor& state, const Tensor& observation, const Context&) {
  // log N(y; 0, beta^2 exp(x)).
  const Index b = observation.shape.at(0);
  Tensor y = reshape(observation, {b, 1, 1});
  Tensor log_sd = add(log(beta_->tensor()), mul(state, Tensor::scalar(0.5)));
  Tensor z = mul(y, exp(neg(log_sd)));
  Tensor per = sub(mul(add(mul(z, z), Tensor::scalar(kLog2Pi)), Tensor::scalar(-0.5)), log_sd);
  return squeeze_last(per);
}

Tensor SvObservation::sample(const Tensor& state, const Context&) {
  Tensor eps(state.shape, rng_.normals(state.numel()));
  Tensor sd = mul(beta_->tensor(), exp(mul(state, Tensor::scalar(0.5))));
  return mul(sd, eps);
}

// ---- learned proposal -----------------------------------------------------------

LearnedDiagonalProposal::LearnedDiagonalProposal(Tensor transition, ParameterPtr phi_g,
                                                 ParameterPtr phi_h, ParameterPtr phi_s, Rng rng)
    : transition_t_(transpose2d(transition)), phi_g_(std::move(phi_g)),
      phi_h_(std::move(phi_h)), phi_s_(std::move(phi_s)), rng_(rng) {
  const Index d_x = transition_t_.shape[0];
  if (phi_g_->value().size() != d_x || phi_s_->value().size() != d_x)
    throw ContractError("phi_G and phi_S must have length d_x");
  if (phi_h_->value().size() > d_x)
    throw ContractError("phi_H longer than the state dimension");
}

Tensor LearnedDiagonalProposal::mean_of(const Tensor& prev_state,
                                        const Tensor& observation) const {
  const Index d_x = transition_t_.shape[0];
  const Index b = observation.shape.at(0);
  const Index d_y = observation.dim(-1);
  Tensor drift = mul(matmul(prev_state, transition_t_), phi_g_->tensor());  // G A x
  Tensor hy = mul(reshape(observation, {b, 1, d_y}), phi_h_->tensor());     // (B,1,Dy)
  if (d_y < d_x) hy = concat({hy, Tensor::zeros({b, 1, d_x - d_y})}, -1);
  return add(drift, hy);
}

Tensor LearnedDiagonalProposal::sample(const Tensor& prev_state, const Tensor& observation,
                                       const Context&) {
  Tensor mean = mean_of(prev_state, observation);
  Tensor eps(mean.shape, rng_.normals(mean.numel()));
  return add(mean, mul(eps, sqrt(phi_s_->tensor())));
}

Tensor LearnedDiagonalProposal::log_density(const Tensor& prev_state, const Tensor& state,
                                            const Tensor& observation, const Context&) {
  return diag_gaussian_log_density(mean_of(prev_state, observation), phi_s_->tensor(), state);
}

ProposalInit locally_optimal_proposal_init(Index d_x, Index d_y) {
  ProposalInit init;
  init.phi_g = Array::Ones(d_x);
  init.phi_s = Array::Ones(d_x);
  init.phi_g.head(d_y) = 0.5;
  init.phi_s.head(d_y) = 0.5;
  init.phi_h = Array::Constant(d_y, 0.5);
  return init;
}

std::shared_ptr<LearnedDiagonalProposal> make_learned_lgssm_proposal(const Tensor& transition,
                                                                     const ProposalInit& init,
                                                                     Rng rng) {
  auto positive = [](const Tensor& t) { return constrain_positive(t); };
  auto phi_g = std::make_shared<Parameter>(
      "proposal.phi_g", Tensor({static_cast<Index>(init.phi_g.size())}, init.phi_g));
  auto phi_h = std::make_shared<Parameter>(
      "proposal.phi_h", Tensor({static_cast<Index>(init.phi_h.size())}, init.phi_h));
  auto phi_s = std::make_shared<Parameter>(
      "proposal.phi_s", Tensor({static_cast<Index>(init.phi_s.size())}, init.phi_s), positive);
  return std::make_shared<LearnedDiagonalProposal>(transition, phi_g, phi_h, phi_s, rng);
}

// ---- factories --------------------------------------------------------------------

Tensor lgssm_transition(Index d_x) {
  Array a(d_x * d_x);
  for (Index i = 0; i < d_x; ++i)
    for (Index j = 0; j < d_x; ++j)
      a[i * d_x + j] = std::pow(0.38, static_cast<double>(std::abs(i - j) + 1));
  return Tensor({d_x, d_x}, std::move(a));
}

FilteringModel make_lgssm(Index d_x, Index d_y, std::uint64_t seed) {
  if (d_y > d_x)
    throw ContractError("make_lgssm: d_y = " + std::to_string(d_y) +
                        " exceeds d_x = " + std::to_string(d_x));
  Rng master(seed);
  auto chol = [](const Tensor& t) { return constrain_cholesky(t); };
  auto spectral = [](const Tensor& t) { return constrain_spectral_radius(t, 0.99); };

  Array eye_x(d_x * d_x);
  eye_x.setZero();
  for (Index i = 0; i < d_x; ++i) eye_x[i * d_x + i] = 1.0;
  Array eye_y(d_y * d_y);
  eye_y.setZero();
  for (Index i = 0; i < d_y; ++i) eye_y[i * d_y + i] = 1.0;
  Array h(d_y * d_x);
  h.setZero();
  for (Index i = 0; i < d_y; ++i) h[i * d_x + i] = 1.0;

  auto prior_mean = std::make_shared<Parameter>("prior.mean", Tensor::zeros({d_x}));
  auto prior_chol = std::make_shared<Parameter>("prior.cholesky", Tensor({d_x, d_x}, eye_x), chol);
  auto weight = std::make_shared<Parameter>("dynamic.weight", lgssm_transition(d_x), spectral);
  auto bias = std::make_shared<Parameter>("dynamic.bias", Tensor::zeros({d_x}));
  auto q_chol = std::make_shared<Parameter>("dynamic.cholesky", Tensor({d_x, d_x}, eye_x), chol);
  auto h_param = std::make_shared<Parameter>("observation.weight", Tensor({d_y, d_x}, h));
  auto r_chol =
      std::make_shared<Parameter>("observation.cholesky", Tensor({d_y, d_y}, eye_y), chol);

  return FilteringModel(
      std::make_shared<GaussianPrior>(prior_mean, prior_chol, master.split("prior")),
      std::make_shared<LinearGaussianDynamic>(weight, bias, q_chol, master.split("dynamic")),
      std::make_shared<LinearGaussianObservation>(h_param, r_chol, master.split("observation")));
}

FilteringModel make_stochastic_volatility(double alpha, double beta, double sigma,
                                          std::uint64_t seed) {
  Rng master(seed);
  auto clip_ar = [](const Tensor& t) { return constrain_interval(t, 1e-3, 1.0 - 1e-3); };
  auto positive = [](const Tensor& t) { return constrain_positive(t); };
  auto a = std::make_shared<Parameter>("alpha", Tensor({1}, Array::Constant(1, alpha)), clip_ar);
  auto b = std::make_shared<Parameter>("beta", Tensor({1}, Array::Constant(1, beta)), positive);
  auto s = std::make_shared<Parameter>("sigma", Tensor({1}, Array::Constant(1, sigma)), positive);
  return FilteringModel(std::make_shared<SvPrior>(a, s, master.split("prior")),
                        std::make_shared<SvDynamic>(a, s, master.split("dynamic")),
                        std::make_shared<SvObservation>(b, master.split("observation")));
}

}  // namespace dpf
