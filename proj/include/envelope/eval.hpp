#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "envelope/mcem.hpp"
#include "envelope/stiefel.hpp"

namespace envelope {

struct SimConfig {
  int n = 100;
  int p = 25;
  int s = 4;
  int q = 4;
  double tau = 3.0;     // scale of the mean coefficients
  double sigma2 = 1.0;  // isotropic complement variance
  int K = -1;           // covariance rank terms; -1 means K = q, 0 means none
  std::uint64_t seed = 0;

  int rank_terms() const { return K >= 0 ? K : q; }
  void validate() const;
};

struct SimTruth {
  StiefelBasis V;
  Eigen::MatrixXd eta;                  // q x s
  std::vector<Eigen::MatrixXd> Gamma;   // K matrices, s x q
  double sigma2 = 0.0;
  std::vector<Eigen::MatrixXd> Psi_x;   // per observation, includes the sigma2 bump
};

struct SimData {
  Eigen::MatrixXd Y;
  Eigen::MatrixXd X;
  SimTruth truth;
};

/// Draws (Y, X) from the joint mean/covariance regression model: X and the
/// covariance coefficients have i.i.d. standard normal entries, the mean
/// coefficients have scale tau, the basis is uniform on the Stiefel manifold,
/// and Cov(y_i | x_i) = V Psi_{x_i} V^T + sigma2 (I - V V^T).
SimData simulate(const SimConfig& cfg);

/// Projected covariance at x implied by the generating parameters,
/// sum_k Gamma_k x x^T Gamma_k^T + sigma2 I.
Eigen::MatrixXd truth_psi(const SimTruth& truth, const Eigen::VectorXd& x);

/// One observation y | x drawn from the generating parameters; simulate()
/// builds its rows through this.
Eigen::VectorXd simulate_observation(const SimTruth& truth, const Eigen::VectorXd& x, Rng& rng);

/// tr(Psi^{-1} Psi_hat) - log|Psi^{-1} Psi_hat| - d. Nonnegative, zero only
/// at equality; invariant under joint congruence of both arguments.
double steins_loss(const Eigen::MatrixXd& Psi, const Eigen::MatrixXd& Psi_hat);

/// Ascending principal angles between span(V1) and span(V2): arccos of the
/// singular values of V1^T V2, clipped into [0, 1].
Eigen::VectorXd principal_angles(const StiefelBasis& V1, const StiefelBasis& V2);

struct ExperimentRow {
  std::string experiment;
  double param = 0.0;           // assumed dimension or covariate count
  double mean_pct_increase = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  int replicates = 0;
  // Raw loss-difference summary; used by the no-signal control check.
  double mean_diff = 0.0;
  double se_diff = 0.0;
};

/// Average Stein loss of the fit against the simulation truth, evaluated in
/// the true material frame: (1/n) sum_i L(Psi_i, W Psi_hat_i W^T +
/// sigma2_hat (I - W W^T)) with W = V_true^T V_hat.
double average_stein_loss(const EnvelopeFit& fit, const SimData& data);

/// Percentage increase in Stein risk when fitting at assumed dimensions
/// s_tilde relative to the generating dimension, over M replicate datasets,
/// with percentile bootstrap intervals. Replicates run in parallel with
/// derived per-replicate seeds and are reduced in replicate order.
std::vector<ExperimentRow> misspecification_experiment(const SimConfig& base,
                                                       const std::vector<int>& s_tilde_list,
                                                       int replicates, std::uint64_t seed,
                                                       const FitConfig& fit_template);

/// Percentage increase in Stein risk of the two-stage estimate (basis from
/// the residual SVD only, then covariance regression on the projected data)
/// relative to the joint EM fit, per covariate count in q_list.
std::vector<ExperimentRow> two_stage_experiment(const SimConfig& base,
                                                const std::vector<int>& q_list, int replicates,
                                                std::uint64_t seed, const FitConfig& fit_template);

}  // namespace envelope
