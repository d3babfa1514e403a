#pragma once

#include <Eigen/Dense>
#include <vector>

#include "envelope/objectives.hpp"
#include "envelope/rng.hpp"

namespace envelope {

/// Prior scales for the projected-data covariance regression. An empty S_A
/// or nu_A <= 0 resolves to the defaults I_s and s + 2.
struct CovRegHyper {
  double tau_eta2 = 100.0;  // normal prior variance on mean coefficients
  double tau_B2 = 100.0;    // normal prior variance on covariance coefficients
  Eigen::MatrixXd S_A;      // inverse-Wishart scale for the baseline covariance
  double nu_A = 0.0;        // inverse-Wishart degrees of freedom
  bool sample_coefficients = true;  // when false, eta and B stay fixed at their current values

  Eigen::MatrixXd resolved_S_A(Eigen::Index s) const;
  double resolved_nu_A(Eigen::Index s) const;
};

/// State of the augmented sampler for
///   z_i = x_i eta + sum_k gamma_ik (B_k x_i)^T + e_i,   e_i ~ N(0, A),
/// whose marginal covariance is Psi_x = sum_k B_k x x^T B_k^T + A.
struct CovRegState {
  Eigen::MatrixXd eta;             // q x s
  std::vector<Eigen::MatrixXd> B;  // K matrices, s x q
  Eigen::MatrixXd A;               // s x s SPD
  Eigen::MatrixXd gamma;           // n x K latent factors
  CovRegHyper hyper;

  Eigen::Index n() const { return gamma.rows(); }
  Eigen::Index q() const { return eta.rows(); }
  Eigen::Index s() const { return eta.cols(); }
  Eigen::Index K() const { return (Eigen::Index)B.size(); }
};

/// Zero-initialized state (eta = 0, B = 0, A = I, gamma = 0).
CovRegState make_initial_state(Eigen::Index n, Eigen::Index q, Eigen::Index s, Eigen::Index K,
                               CovRegHyper hyper = {});

/// State drawn from the prior; used by joint-distribution sampler checks.
CovRegState sample_prior_state(Eigen::Index n, Eigen::Index q, Eigen::Index s, Eigen::Index K,
                               CovRegHyper hyper, Rng& rng);

/// Psi_x = sum_k (B_k x)(B_k x)^T + A.
Eigen::MatrixXd psi_of_x(const std::vector<Eigen::MatrixXd>& B, const Eigen::MatrixXd& A,
                         const Eigen::VectorXd& x);

/// A ~ inverse-Wishart(scale, dof) via a Bartlett-decomposed Wishart draw.
Eigen::MatrixXd sample_inverse_wishart(const Eigen::MatrixXd& scale, double dof, Rng& rng);

/// Projected data simulated from the augmented model at the given state.
Eigen::MatrixXd simulate_data(const CovRegState& state, const Eigen::MatrixXd& X, Rng& rng);

/// Log density of Z under the augmented model (gamma treated as given),
/// up to an additive constant.
double augmented_loglik(const CovRegState& state, const Eigen::MatrixXd& Z,
                        const Eigen::MatrixXd& X);

/// One full sweep of the three conjugate blocks: latent factors, stacked
/// (eta, B) coefficients, then the baseline covariance A.
CovRegState gibbs_step(const CovRegState& state, const Eigen::MatrixXd& Z,
                       const Eigen::MatrixXd& X, Rng& rng);

struct CovRegDraw {
  Eigen::MatrixXd eta;
  std::vector<Eigen::MatrixXd> B;
  Eigen::MatrixXd A;
  int iteration = 0;
  double log_post = 0.0;
};

struct CovRegSamples {
  std::vector<CovRegDraw> draws;
};

/// Runs the chain for n_iter sweeps, discarding `burn` and keeping every
/// thin-th draw afterwards. Deterministic given the rng seed. The final
/// chain state is written back into `state` so callers can warm-start.
CovRegSamples sample_posterior(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& X,
                               CovRegState& state, int n_iter, int burn, int thin, Rng& rng);

/// Pooled posterior moments per observation:
///   K_i = mean over draws of Psi_{x_i}^{-1},
///   M_i = mean over draws of (x_i eta) Psi_{x_i}^{-1}.
/// Parallel over observations; each observation's average runs in draw order,
/// so the result does not depend on the thread count.
PosteriorMoments posterior_moments(const CovRegSamples& samples, const Eigen::MatrixXd& X);

/// Plain-loop reference implementation kept for testing and benchmarking.
PosteriorMoments posterior_moments_serial(const CovRegSamples& samples, const Eigen::MatrixXd& X);

}  // namespace envelope
