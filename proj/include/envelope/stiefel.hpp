#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace envelope {

/// Semi-orthogonal p x s basis (V^T V = I). Construction validates
/// orthonormality to 1e-10 entrywise; use orthonormalize() to build one
/// from an arbitrary full-column-rank matrix.
class StiefelBasis {
 public:
  static constexpr double kOrthTol = 1e-10;

  StiefelBasis() = default;
  explicit StiefelBasis(Eigen::MatrixXd m);

  const Eigen::MatrixXd& matrix() const { return m_; }
  Eigen::Index rows() const { return m_.rows(); }
  Eigen::Index cols() const { return m_.cols(); }

 private:
  Eigen::MatrixXd m_;
};

/// Thin QR of M with the diagonal of R made nonnegative, so that an already
/// orthonormal input is returned unchanged. Throws NumericError when the
/// numerical rank of M falls short of its column count.
StiefelBasis orthonormalize(const Eigen::MatrixXd& M);

/// Orthonormal basis of the orthogonal complement of span(V), p x (p-s).
StiefelBasis complete_basis(const StiefelBasis& V);

/// Tangent-space projection A V with A = G V^T - V G^T, for G the Euclidean
/// gradient at V. V^T (A V) is skew-symmetric.
Eigen::MatrixXd riemannian_gradient(const StiefelBasis& V, const Eigen::MatrixXd& G);

/// Curvilinear step Y(tau) = (I + tau/2 A)^{-1} (I - tau/2 A) V along the
/// descent direction of G, evaluated through the 2s x 2s Woodbury form so the
/// cost stays O(p s^2). Y(0) = V and dY/dtau(0) = -A V. If the inner system
/// is singular, tau is halved up to 30 times before failing.
StiefelBasis cayley_retract(const StiefelBasis& V, const Eigen::MatrixXd& G, double tau);

struct OptimizerConfig {
  int max_iters = 500;
  double grad_tol = 1e-6;       // norm of the Riemannian gradient
  double step_init = 1.0;
  double armijo_c = 1e-4;
  double backtrack_factor = 0.5;
  int nonmonotone_window = 0;   // 0 = strictly monotone line search
  bool bb_step = true;          // Barzilai-Borwein initial step after iter 1

  void validate() const;        // throws std::invalid_argument on bad bounds
};

struct StiefelResult {
  StiefelBasis V;
  std::vector<double> trace;    // objective at V0 and after each accepted step
  int iterations = 0;
  double grad_norm = 0.0;
};

/// Maximizes a smooth objective over the Stiefel manifold with a curvilinear
/// Armijo backtracking search (internally minimizes the negated objective).
/// With nonmonotone_window = 0 the stored trace is nondecreasing.
StiefelResult maximize_on_stiefel(
    const std::function<double(const Eigen::MatrixXd&)>& objective,
    const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>& euclidean_grad,
    const StiefelBasis& V0, const OptimizerConfig& cfg = {});

}  // namespace envelope
