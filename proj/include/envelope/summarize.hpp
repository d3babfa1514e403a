#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "envelope/mcem.hpp"

namespace envelope {

struct EigenSample {
  int draw = 0;
  double lambda1 = 0.0;  // largest eigenvalue of the restricted 2 x 2 covariance
  double angle = 0.0;    // orientation of its leading eigenvector, in [-pi/2, pi/2)
};

struct ContrastRotation {
  StiefelBasis V_tilde;  // rotated basis, same span as V_hat
  Eigen::MatrixXd R;     // s x s orthogonal, columns ordered by descending contrast
};

/// Posterior mean of the projected covariance at x (mean of draws, not the
/// inverse of the mean precision).
Eigen::MatrixXd posterior_mean_projected_cov(const CovRegSamples& samples,
                                             const Eigen::VectorXd& x);

/// Change of basis whose leading directions maximize the difference between
/// the posterior mean projected covariances at x_a and x_b. Column signs are
/// fixed by making the first nonzero entry of each eigenvector positive.
ContrastRotation rotate_to_contrast(const EnvelopeFit& fit, const Eigen::VectorXd& x_a,
                                    const Eigen::VectorXd& x_b);

/// Per-draw largest eigenvalue and principal-axis orientation of the
/// rotated projected covariance restricted to the two given coordinates.
std::vector<EigenSample> eigen_summary(const EnvelopeFit& fit, const StiefelBasis& V_tilde,
                                       const Eigen::VectorXd& x, std::pair<int, int> dims);

struct Loading {
  int feature = 0;
  double d1 = 0.0;
  double d2 = 0.0;
  double norm = 0.0;
};

/// Rows of the rotated basis restricted to two coordinates, ranked by
/// Euclidean norm (ties broken by feature index), top_m returned.
std::vector<Loading> biplot_loadings(const EnvelopeFit& fit, const StiefelBasis& V_tilde,
                                     std::pair<int, int> dims, int top_m);

}  // namespace envelope
