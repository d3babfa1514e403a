#pragma once

#include <Eigen/Dense>
#include <vector>

#include "envelope/stiefel.hpp"

namespace envelope {

/// Symmetric prior scale matrix, either an explicit matrix or the scalar
/// shorthand c*I whose dimension adapts to wherever it is used.
class SymmetricPrior {
 public:
  static SymmetricPrior scaled_identity(double c);
  static SymmetricPrior dense(Eigen::MatrixXd S);

  bool is_scaled_identity() const { return scaled_; }
  double scale() const { return c_; }
  Eigen::MatrixXd materialize(Eigen::Index dim) const;

  /// X^T U X without materializing U when it is c*I.
  Eigen::MatrixXd congruence(const Eigen::MatrixXd& X) const;

 private:
  bool scaled_ = true;
  double c_ = 0.0;
  Eigen::MatrixXd S_;
};

struct PriorConfig {
  SymmetricPrior U0 = SymmetricPrior::scaled_identity(1.0);
  double nu0 = 3.0;
  SymmetricPrior U1 = SymmetricPrior::scaled_identity(1.0);
  double nu1 = 3.0;
  SymmetricPrior Lambda0 = SymmetricPrior::scaled_identity(1.0);  // q x q, PSD
  double alpha = 2.0;
  double kappa = 1.0;

  void validate() const;
};

/// Known projected-data means phi_{x_i} (rows) and covariance inverses
/// Psi_{x_i}^{-1}; both objectives consume the inverse directly.
struct ProjectedParams {
  Eigen::MatrixXd phi;                   // n x s
  std::vector<Eigen::MatrixXd> psi_inv;  // n matrices, s x s SPD

  void validate() const;
};

/// Posterior expectations feeding the M-step: M_i = E[phi_i Psi_i^{-1}] and
/// K_i = E[Psi_i^{-1}].
struct PosteriorMoments {
  Eigen::MatrixXd M;               // n x s
  std::vector<Eigen::MatrixXd> K;  // n matrices, s x s SPD

  void validate() const;
};

struct GroupPrior {
  SymmetricPrior U = SymmetricPrior::scaled_identity(1.0);
  double nu = 3.0;
};

// Marginal log-likelihood for (V, Vperp) with the complement covariance
// integrated out against its inverse-Wishart prior:
//   -1/2 sum_i [y_i V Psi_i^{-1} V^T y_i^T - 2 phi_i Psi_i^{-1} V^T y_i^T]
//   - (n + nu0)/2 log| Vperp^T (Y^T Y + U0) Vperp |
// All V-independent constants are dropped.
double general_marginal_loglik(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V,
                               const Eigen::MatrixXd& Vperp, const ProjectedParams& params,
                               const SymmetricPrior& U0, double nu0);
Eigen::MatrixXd general_marginal_grad_v(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V,
                                        const ProjectedParams& params);
Eigen::MatrixXd general_marginal_grad_vperp(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Vperp,
                                            const SymmetricPrior& U0, double nu0);

// Spiked variant: the isotropic complement variance is integrated against an
// inverse-Gamma(alpha, kappa) prior, leaving
//   -1/2 sum_i [...] - (n(p-s)/2 + alpha) log(||Y||_F^2/2 - ||YV||_F^2/2 + kappa).
double spiked_marginal_loglik(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V,
                              const ProjectedParams& params, double alpha, double kappa);
Eigen::MatrixXd spiked_marginal_grad(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V,
                                     const ProjectedParams& params, double alpha, double kappa);

// Same functional form with posterior moments in place of known parameters.
double mstep_objective(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V,
                       const PosteriorMoments& moments, double alpha, double kappa);
Eigen::MatrixXd mstep_gradient(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V,
                               const PosteriorMoments& moments, double alpha, double kappa);

// Response-envelope marginal log-likelihood (constant projected covariance,
// conjugate normal/inverse-Wishart priors, eta prior centered at zero):
//   -(n + nu1)/2 log|V^T (A + U1) V| - (n + nu0)/2 log|Vperp^T (Y^T Y + U0) Vperp|
// with B_n = (X^T X + Lambda0)^{-1} X^T Y and
//      A = (Y - X B_n)^T (Y - X B_n) + B_n^T Lambda0 B_n.
double response_envelope_loglik(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& X,
                                const Eigen::MatrixXd& V, const Eigen::MatrixXd& Vperp,
                                const PriorConfig& priors);
Eigen::MatrixXd response_envelope_grad_v(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& X,
                                         const Eigen::MatrixXd& V, const PriorConfig& priors);
Eigen::MatrixXd response_envelope_grad_vperp(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Vperp,
                                             const PriorConfig& priors);

// Grouped spiked model sharing one subspace:
//   sum_k [ -(n_k + nu_k)/2 log|V^T (Y_k^T Y_k + U_k) V|
//           - (n_k(p-s)/2 + alpha) log(tr[(I - V V^T) Y_k^T Y_k]/2 + kappa) ].
double shared_subspace_loglik(const std::vector<Eigen::MatrixXd>& groups, const Eigen::MatrixXd& V,
                              const std::vector<GroupPrior>& priors, double alpha, double kappa);
Eigen::MatrixXd shared_subspace_grad(const std::vector<Eigen::MatrixXd>& groups,
                                     const Eigen::MatrixXd& V, const std::vector<GroupPrior>& priors,
                                     double alpha, double kappa);

}  // namespace envelope
