#ifndef DPF_MODELS_HPP
#define DPF_MODELS_HPP

#include "dpf/distributions.hpp"
#include "dpf/model.hpp"

namespace dpf {

/// Drops a trailing extent-1 axis.
Tensor squeeze_last(const Tensor& x);

/// Log density of a diagonal Gaussian with per-dimension variances,
/// summed over the trailing axis. mean/x broadcast; variances has shape (D).
Tensor diag_gaussian_log_density(const Tensor& mean, const Tensor& variances, const Tensor& x);

/// N(mean, chol cholT) prior over (B x K x D) states.
class GaussianPrior : public PriorComponent {
 public:
  GaussianPrior(ParameterPtr mean, ParameterPtr cholesky, Rng rng);
  Tensor sample(Index batch_size, Index n_particles, const Context& ctx) override;
  bool has_log_density() const override { return true; }
  Tensor log_density(const Tensor& state, const Context& ctx) override;
  std::vector<ParameterPtr> parameters() const override { return {mean_, cholesky_}; }

 private:
  ParameterPtr mean_, cholesky_;
  Rng rng_;
};

/// x_t ~ N(W x_{t-1} + b, chol cholT); W optionally capped in spectral
/// radius to keep the process stable.
class LinearGaussianDynamic : public DynamicComponent {
 public:
  LinearGaussianDynamic(ParameterPtr weight, ParameterPtr bias, ParameterPtr cholesky, Rng rng);
  Tensor sample(const Tensor& prev_state, const Context& ctx) override;
  bool has_log_density() const override { return true; }
  Tensor log_density(const Tensor& prev_state, const Tensor& state, const Context& ctx) override;
  std::vector<ParameterPtr> parameters() const override { return {weight_, bias_, cholesky_}; }

 private:
  Tensor mean_of(const Tensor& prev_state) const;
  ParameterPtr weight_, bias_, cholesky_;
  Rng rng_;
};

/// y_t ~ N(H x_t, chol cholT).
class LinearGaussianObservation : public ObservationComponent {
 public:
  LinearGaussianObservation(ParameterPtr weight, ParameterPtr cholesky, Rng rng);
  Tensor score(const Tensor& state, const Tensor& observation, const Context& ctx) override;
  bool has_sample() const override { return true; }
  Tensor sample(const Tensor& state, const Context& ctx) override;
  std::vector<ParameterPtr> parameters() const override { return {weight_, cholesky_}; }

 private:
  ParameterPtr weight_, cholesky_;
  Rng rng_;
};

// ---- stochastic volatility --------------------------------------------------
// x_t = a x_{t-1} + s q_t;  y_t = b exp(x_t / 2) r_t, with q, r standard
// normal and x_0 ~ N(0, s^2 / (1 - a^2)).

class SvPrior : public PriorComponent {
 public:
  SvPrior(ParameterPtr alpha, ParameterPtr sigma, Rng rng);
  Tensor sample(Index batch_size, Index n_particles, const Context& ctx) override;
  bool has_log_density() const override { return true; }
  Tensor log_density(const Tensor& state, const Context& ctx) override;
  std::vector<ParameterPtr> parameters() const override { return {alpha_, sigma_}; }

 private:
  Tensor stationary_sd() const;
  ParameterPtr alpha_, sigma_;
  Rng rng_;
};

class SvDynamic : public DynamicComponent {
 public:
  SvDynamic(ParameterPtr alpha, ParameterPtr sigma, Rng rng);
  Tensor sample(const Tensor& prev_state, const Context& ctx) override;
  bool has_log_density() const override { return true; }
  Tensor log_density(const Tensor& prev_state, const Tensor& state, const Context& ctx) override;
  std::vector<ParameterPtr> parameters() const override { return {alpha_, sigma_}; }

 private:
  ParameterPtr alpha_, sigma_;
  Rng rng_;
};

class SvObservation : public ObservationComponent {
 public:
  SvObservation(ParameterPtr beta, Rng rng);
  Tensor score(const Tensor& state, const Tensor& observation, const Context& ctx) override;
  bool has_sample() const override { return true; }
  Tensor sample(const Tensor& state, const Context& ctx) override;
  std::vector<ParameterPtr> parameters() const override { return {beta_}; }

 private:
  ParameterPtr beta_;
  Rng rng_;
};

// ---- learned proposal --------------------------------------------------------

/// Gaussian proposal N(G A x_{t-1} + H y_t, diag(phi_S)) with diagonal G and
/// S parameterised by vectors phi_G, phi_S of length d_x, and H a d_x x d_y
/// matrix carrying phi_H (length d_y <= d_x) on its leading diagonal. Fully
/// reparametrised; contains the locally optimal proposal for the reference
/// linear-Gaussian model.
class LearnedDiagonalProposal : public ProposalComponent {
 public:
  LearnedDiagonalProposal(Tensor transition, ParameterPtr phi_g, ParameterPtr phi_h,
                          ParameterPtr phi_s, Rng rng);
  Tensor sample(const Tensor& prev_state, const Tensor& observation, const Context& ctx) override;
  Tensor log_density(const Tensor& prev_state, const Tensor& state, const Tensor& observation,
                     const Context& ctx) override;
  std::vector<ParameterPtr> parameters() const override { return {phi_g_, phi_h_, phi_s_}; }

 private:
  Tensor mean_of(const Tensor& prev_state, const Tensor& observation) const;
  Tensor transition_t_;  // A^T, constant
  ParameterPtr phi_g_, phi_h_, phi_s_;
  Rng rng_;
};

struct ProposalInit {
  Array phi_g, phi_h, phi_s;
};

/// Weight-variance-minimising setting for the reference model: phi_G = phi_S
/// = 1/2 on observed coordinates and 1 elsewhere, phi_H = 1/2.
ProposalInit locally_optimal_proposal_init(Index d_x, Index d_y);

std::shared_ptr<LearnedDiagonalProposal> make_learned_lgssm_proposal(
    const Tensor& transition, const ProposalInit& init, Rng rng);

// ---- factories ----------------------------------------------------------------

/// Reference linear-Gaussian model: A_ij = 0.38^(|i-j|+1), H picks the first
/// d_y state coordinates, unit noise covariances, standard normal prior.
/// Requires d_y <= d_x.
FilteringModel make_lgssm(Index d_x, Index d_y, std::uint64_t seed);

/// The transition matrix used by make_lgssm.
Tensor lgssm_transition(Index d_x);

FilteringModel make_stochastic_volatility(double alpha, double beta, double sigma,
                                          std::uint64_t seed);

}  // namespace dpf

#endif
