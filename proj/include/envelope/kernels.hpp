#pragma once

#include <Eigen/Dense>
#include <vector>

namespace envelope::kernels {

/// Per-observation accumulations shared by the marginal log-likelihoods and
/// the M-step objective. With w_i = y_i V:
///   quad  = sum_i w_i K_i w_i^T
///   cross = sum_i M_i w_i^T
struct ObsTerms {
  double quad = 0.0;
  double cross = 0.0;
};

/// OpenMP-parallel version. Observations are split into fixed-size blocks
/// whose partial sums are combined pairwise in block order, so the result
/// does not depend on the number of threads.
ObsTerms obs_terms(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V,
                   const std::vector<Eigen::MatrixXd>& K, const Eigen::MatrixXd& M);

/// Plain-loop reference implementation kept for testing and benchmarking.
ObsTerms obs_terms_serial(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V,
                          const std::vector<Eigen::MatrixXd>& K, const Eigen::MatrixXd& M);

/// sum_i y_i^T (M_i - w_i K_i), the observation part of the M-step gradient.
Eigen::MatrixXd obs_grad(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V,
                         const std::vector<Eigen::MatrixXd>& K, const Eigen::MatrixXd& M);

Eigen::MatrixXd obs_grad_serial(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V,
                                const std::vector<Eigen::MatrixXd>& K, const Eigen::MatrixXd& M);

}  // namespace envelope::kernels
