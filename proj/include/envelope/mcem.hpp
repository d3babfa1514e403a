#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "envelope/covreg.hpp"
#include "envelope/objectives.hpp"
#include "envelope/stiefel.hpp"

namespace envelope {

struct McmcConfig {
  int n_iter = 2000;
  int burn = 1000;
  int thin = 1;
  int chains = 1;
  // Later E-steps warm-start from the previous chain state with a reduced
  // budget.
  int warm_iter = 500;
  int warm_burn = 100;
};

struct FitConfig {
  int s = 0;                 // envelope dimension; 0 selects via select_rank
  int em_max_iters = 50;
  double em_tol = 1e-3;      // threshold on the projector distance between iterates
  McmcConfig mcmc;
  OptimizerConfig optimizer;
  PriorConfig priors;
  CovRegHyper covreg_hyper;
  int cov_rank = 1;          // K, number of covariance-regression rank terms
  std::uint64_t seed = 0;
  std::optional<Eigen::MatrixXd> init_V;  // overrides init_basis when set

  void validate() const;
};

struct EmIterationRecord {
  int iteration = 0;
  std::vector<double> mstep_trace;  // objective values along the subspace search
  double objective = 0.0;           // objective at the accepted basis
  double subspace_step = 0.0;       // || V_t V_t^T - V_{t-1} V_{t-1}^T ||_F
};

struct EnvelopeFit {
  StiefelBasis V_hat;
  double sigma2_hat = 0.0;
  CovRegSamples samples;            // posterior draws conditional on V_hat
  std::vector<EmIterationRecord> trace;
  FitConfig config;
  Eigen::RowVectorXd y_means;       // column offsets removed before fitting
  bool converged = false;
};

/// Hard singular-value threshold for the working rank: keep singular values
/// above omega(beta) times the median singular value, with beta = min(n,p) /
/// max(n,p) and omega the quartic approximation of the asymptotically
/// MSE-optimal coefficient for unknown noise level.
int select_rank(const Eigen::MatrixXd& Y);

/// Initial basis: an orthonormal basis of the OLS coefficient rows, completed
/// with leading right singular vectors of the regression residual.
StiefelBasis init_basis(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& X, int s);

/// Posterior mean of the isotropic complement variance at the given basis:
/// (||Y||_F^2/2 - ||YV||_F^2/2 + kappa) / (n(p-s)/2 + alpha - 1).
double estimate_sigma2(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V, double alpha,
                       double kappa);

/// Alternates Monte Carlo posterior-moment estimation on the projected data
/// with subspace maximization until the projector distance between
/// consecutive bases falls below em_tol. Deterministic given cfg.seed.
EnvelopeFit fit(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& X, FitConfig cfg);

/// Projected fitted covariance (inverse of the pooled posterior mean
/// precision) or, with projected_only = false, the full p x p covariance
/// V Psi V^T + sigma2 (I - V V^T).
Eigen::MatrixXd fitted_covariance(const EnvelopeFit& fit, const Eigen::VectorXd& x,
                                  bool projected_only);

}  // namespace envelope
