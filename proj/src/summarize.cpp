#include "envelope/summarize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "envelope/errors.hpp"

namespace envelope {

Eigen::MatrixXd posterior_mean_projected_cov(const CovRegSamples& samples,
                                             const Eigen::VectorXd& x) {
  if (samples.draws.empty())
    throw std::invalid_argument("posterior_mean_projected_cov: no draws");
  const Eigen::Index s = samples.draws.front().A.rows();
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(s, s);
  for (const auto& d : samples.draws) mean += psi_of_x(d.B, d.A, x);
  mean /= double(samples.draws.size());
  return 0.5 * (mean + mean.transpose());
}

ContrastRotation rotate_to_contrast(const EnvelopeFit& fit, const Eigen::VectorXd& x_a,
                                    const Eigen::VectorXd& x_b) {
  if (fit.samples.draws.empty())
    throw std::invalid_argument("rotate_to_contrast: fit has no posterior draws");
  if (x_a.size() != x_b.size())
    throw std::invalid_argument("rotate_to_contrast: contrast vectors differ in length");

  const Eigen::MatrixXd Pa = posterior_mean_projected_cov(fit.samples, x_a);
  const Eigen::MatrixXd Pb = posterior_mean_projected_cov(fit.samples, x_b);
  const Eigen::MatrixXd D = Pa - Pb;
  if (D.cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, Pa.cwiseAbs().maxCoeff()))
    throw NumericError("rotate_to_contrast: contrast has no covariance signal");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(D);
  if (es.info() != Eigen::Success) throw NumericError("rotate_to_contrast: eigensolve failed");
  const Eigen::Index s = D.rows();

  ContrastRotation out;
  out.R.resize(s, s);
  for (Eigen::Index j = 0; j < s; ++j) {
    Eigen::VectorXd col = es.eigenvectors().col(s - 1 - j);  // descending eigenvalue order
    for (Eigen::Index i = 0; i < s; ++i) {
      if (std::abs(col(i)) > 1e-12) {
        if (col(i) < 0) col = -col;
        break;
      }
    }
    out.R.col(j) = col;
  }
  out.V_tilde = StiefelBasis(fit.V_hat.matrix() * out.R);
  return out;
}

namespace {

void check_dims_pair(std::pair<int, int> dims, Eigen::Index s, const char* who) {
  if (dims.first < 0 || dims.second < 0 || dims.first >= s || dims.second >= s ||
      dims.first == dims.second)
    throw std::invalid_argument(std::string(who) + ": dims must be distinct indices below s");
}

// Largest eigenvalue and leading-axis orientation of a symmetric 2x2
// [[a, c], [c, b]]; the angle is wrapped into [-pi/2, pi/2) since the
// eigenvector is a line, not a direction.
EigenSample summarize_2x2(double a, double b, double c) {
  EigenSample e;
  const double half_diff = 0.5 * (a - b);
  const double root = std::sqrt(half_diff * half_diff + c * c);
  e.lambda1 = 0.5 * (a + b) + root;
  double vx, vy;
  if (std::abs(c) < 1e-300) {
    vx = (a >= b) ? 1.0 : 0.0;
    vy = (a >= b) ? 0.0 : 1.0;
  } else {
    vx = c;
    vy = e.lambda1 - a;
  }
  double theta = std::atan2(vy, vx);
  while (theta >= M_PI / 2) theta -= M_PI;
  while (theta < -M_PI / 2) theta += M_PI;
  e.angle = theta;
  return e;
}

}  // namespace

std::vector<EigenSample> eigen_summary(const EnvelopeFit& fit, const StiefelBasis& V_tilde,
                                       const Eigen::VectorXd& x, std::pair<int, int> dims) {
  if (fit.samples.draws.empty()) throw std::invalid_argument("eigen_summary: no draws");
  check_dims_pair(dims, V_tilde.cols(), "eigen_summary");
  const Eigen::MatrixXd R = fit.V_hat.matrix().transpose() * V_tilde.matrix();

  std::vector<EigenSample> out(fit.samples.draws.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t d = 0; d < (std::ptrdiff_t)fit.samples.draws.size(); ++d) {
    const auto& draw = fit.samples.draws[d];
    const Eigen::MatrixXd T = R.transpose() * psi_of_x(draw.B, draw.A, x) * R;
    EigenSample e = summarize_2x2(T(dims.first, dims.first), T(dims.second, dims.second),
                                  T(dims.first, dims.second));
    e.draw = (int)d;
    out[d] = e;
  }
  return out;
}

std::vector<Loading> biplot_loadings(const EnvelopeFit& fit, const StiefelBasis& V_tilde,
                                     std::pair<int, int> dims, int top_m) {
  (void)fit;
  check_dims_pair(dims, V_tilde.cols(), "biplot_loadings");
  const Eigen::Index p = V_tilde.rows();
  if (top_m < 0 || top_m > p)
    throw std::invalid_argument("biplot_loadings: top_m must lie in [0, p]");

  std::vector<Loading> all(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const double d1 = V_tilde.matrix()(i, dims.first);
    const double d2 = V_tilde.matrix()(i, dims.second);
    all[i] = {(int)i, d1, d2, std::hypot(d1, d2)};
  }
  std::stable_sort(all.begin(), all.end(), [](const Loading& a, const Loading& b) {
    if (a.norm != b.norm) return a.norm > b.norm;
    return a.feature < b.feature;
  });
  all.resize(top_m);
  return all;
}

}  // namespace envelope
