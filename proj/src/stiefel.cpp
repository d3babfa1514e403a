#include "envelope/stiefel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "envelope/errors.hpp"

namespace envelope {

namespace {

double orth_residual(const Eigen::MatrixXd& m) {
  const Eigen::Index s = m.cols();
  return (m.transpose() * m - Eigen::MatrixXd::Identity(s, s)).cwiseAbs().maxCoeff();
}

}  // namespace

StiefelBasis::StiefelBasis(Eigen::MatrixXd m) : m_(std::move(m)) {
  if (m_.cols() < 1 || m_.cols() > m_.rows())
    throw std::invalid_argument("StiefelBasis: need 1 <= s <= p, got " +
                                std::to_string(m_.rows()) + "x" + std::to_string(m_.cols()));
  const double res = orth_residual(m_);
  if (!(res < kOrthTol))
    throw NumericError("StiefelBasis: columns not orthonormal, ||V^T V - I||_max = " +
                       std::to_string(res));
}

StiefelBasis orthonormalize(const Eigen::MatrixXd& M) {
  const Eigen::Index p = M.rows(), s = M.cols();
  if (s < 1 || s > p)
    throw std::invalid_argument("orthonormalize: need 1 <= s <= p");

  // Rank check on the singular values before trusting QR.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  const double smax = svd.singularValues()(0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s; ++i)
    if (svd.singularValues()(i) > 1e-10 * std::max(1.0, smax)) ++rank;
  if (rank < s) {
    std::ostringstream os;
    os << "orthonormalize: matrix is rank deficient, " << (s - rank)
       << " of " << s << " columns dependent";
    throw NumericError(os.str());
  }

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(p, s);
  const Eigen::MatrixXd R = qr.matrixQR().topRows(s).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < s; ++j)
    if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
  return StiefelBasis(std::move(Q));
}

StiefelBasis complete_basis(const StiefelBasis& V) {
  const Eigen::Index p = V.rows(), s = V.cols();
  if (s >= p) throw std::invalid_argument("complete_basis: complement is empty for s = p");
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(V.matrix());
  Eigen::MatrixXd Q = qr.householderQ();
  return StiefelBasis(Q.rightCols(p - s));
}

Eigen::MatrixXd riemannian_gradient(const StiefelBasis& V, const Eigen::MatrixXd& G) {
  if (G.rows() != V.rows() || G.cols() != V.cols())
    throw std::invalid_argument("riemannian_gradient: G must match V's dimensions");
  const Eigen::MatrixXd& Vm = V.matrix();
  // A V with A = G V^T - V G^T, assembled without the p x p intermediate.
  return G * (Vm.transpose() * Vm) - Vm * (G.transpose() * Vm);
}

namespace {

// Y(tau) = V - tau U (I + tau/2 Z^T U)^{-1} Z^T V  with U = [G V], Z = [V -G],
// so that U Z^T = G V^T - V G^T = A. Returns false if the inner system is
// numerically singular at this tau.
bool cayley_curve(const Eigen::MatrixXd& V, const Eigen::MatrixXd& U, const Eigen::MatrixXd& ZtU,
                  const Eigen::MatrixXd& ZtV, double tau, Eigen::MatrixXd& out) {
  const Eigen::Index m = ZtU.rows();
  Eigen::MatrixXd inner = Eigen::MatrixXd::Identity(m, m) + 0.5 * tau * ZtU;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(inner);
  const double rcond_proxy = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  if (!(rcond_proxy > 1e-14 * std::max(1.0, inner.cwiseAbs().maxCoeff()))) return false;
  out = V - tau * (U * lu.solve(ZtV));
  return out.allFinite();
}

}  // namespace

StiefelBasis cayley_retract(const StiefelBasis& V, const Eigen::MatrixXd& G, double tau) {
  if (G.rows() != V.rows() || G.cols() != V.cols())
    throw std::invalid_argument("cayley_retract: G must match V's dimensions");
  if (tau < 0.0) throw std::invalid_argument("cayley_retract: tau must be >= 0");
  if (tau == 0.0) return V;

  const Eigen::MatrixXd& Vm = V.matrix();
  const Eigen::Index p = Vm.rows(), s = Vm.cols();
  Eigen::MatrixXd U(p, 2 * s), Z(p, 2 * s);
  U << G, Vm;
  Z << Vm, -G;
  const Eigen::MatrixXd ZtU = Z.transpose() * U;
  const Eigen::MatrixXd ZtV = Z.transpose() * Vm;

  Eigen::MatrixXd Y;
  for (int attempt = 0; attempt <= 30; ++attempt) {
    if (cayley_curve(Vm, U, ZtU, ZtV, tau, Y)) {
      if (orth_residual(Y) > 1e-12) return orthonormalize(Y);
      return StiefelBasis(std::move(Y));
    }
    tau *= 0.5;
  }
  throw NumericError("cayley_retract: inner 2s x 2s system singular after 30 halvings");
}

void OptimizerConfig::validate() const {
  if (max_iters < 1) throw std::invalid_argument("OptimizerConfig: max_iters must be positive");
  if (!(grad_tol > 0)) throw std::invalid_argument("OptimizerConfig: grad_tol must be positive");
  if (!(step_init > 0)) throw std::invalid_argument("OptimizerConfig: step_init must be positive");
  if (!(armijo_c > 0 && armijo_c < 1))
    throw std::invalid_argument("OptimizerConfig: armijo_c must lie in (0,1)");
  if (!(backtrack_factor > 0 && backtrack_factor < 1))
    throw std::invalid_argument("OptimizerConfig: backtrack_factor must lie in (0,1)");
  if (nonmonotone_window < 0)
    throw std::invalid_argument("OptimizerConfig: nonmonotone_window must be >= 0");
}

StiefelResult maximize_on_stiefel(
    const std::function<double(const Eigen::MatrixXd&)>& objective,
    const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>& euclidean_grad,
    const StiefelBasis& V0, const OptimizerConfig& cfg) {
  cfg.validate();

  Eigen::MatrixXd V = V0.matrix();
  const Eigen::Index p = V.rows(), s = V.cols();
  double f = objective(V);
  if (!std::isfinite(f)) throw NumericError("maximize_on_stiefel: objective not finite at V0");

  StiefelResult result;
  result.trace.push_back(f);

  Eigen::MatrixXd prev_V, prev_R;
  bool have_prev = false;

  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    result.iterations = iter;
    const Eigen::MatrixXd Gm = -euclidean_grad(V);  // gradient of the negated objective
    if (!Gm.allFinite()) throw NumericError("maximize_on_stiefel: gradient not finite");

    Eigen::MatrixXd U(p, 2 * s), Z(p, 2 * s);
    U << Gm, V;
    Z << V, -Gm;
    const Eigen::MatrixXd ZtU = Z.transpose() * U;
    const Eigen::MatrixXd ZtV = Z.transpose() * V;
    const Eigen::MatrixXd R = U * ZtV;  // A V, Riemannian gradient of the negated objective

    result.grad_norm = R.norm();
    if (result.grad_norm < cfg.grad_tol) break;

    // Exact slope of the negated objective along the curve at tau = 0 is
    // -||A||_F^2 / 2 = -tr(Gm^T A V).
    const double half_A_sq = (U.transpose() * U).cwiseProduct(Z.transpose() * Z).sum() * 0.5;

    double tau = cfg.step_init;
    if (cfg.bb_step && have_prev) {
      const Eigen::MatrixXd S = V - prev_V;
      const Eigen::MatrixXd W = R - prev_R;
      const double sw = std::abs(S.cwiseProduct(W).sum());
      const double ss = S.squaredNorm();
      if (sw > 1e-300 && std::isfinite(ss / sw)) tau = std::clamp(ss / sw, 1e-12, 1e12);
    }

    // Reference value for the (non)monotone Armijo test on the maximized
    // objective: minimum over the last nonmonotone_window+1 accepted values.
    double f_ref = f;
    const int window = std::min<int>(cfg.nonmonotone_window, (int)result.trace.size() - 1);
    for (int k = 0; k < window; ++k)
      f_ref = std::min(f_ref, result.trace[result.trace.size() - 2 - k]);

    bool accepted = false;
    bool last_fail_nonfinite = false;
    Eigen::MatrixXd Y;
    double f_new = 0.0;
    for (int bt = 0; bt <= 30; ++bt) {
      if (!cayley_curve(V, U, ZtU, ZtV, tau, Y)) {
        last_fail_nonfinite = true;
        tau *= 0.5;
        continue;
      }
      if (orth_residual(Y) > 1e-12) Y = orthonormalize(Y).matrix();
      f_new = objective(Y);
      if (!std::isfinite(f_new)) {
        last_fail_nonfinite = true;
        tau *= cfg.backtrack_factor;
        continue;
      }
      last_fail_nonfinite = false;
      if (f_new >= f_ref + cfg.armijo_c * tau * half_A_sq) {
        accepted = true;
        break;
      }
      tau *= cfg.backtrack_factor;
    }
    if (!accepted) {
      if (last_fail_nonfinite)
        throw NumericError("maximize_on_stiefel: objective not finite after 30 step shrinks");
      break;  // no admissible step left; current iterate is the answer
    }

    prev_V = V;
    prev_R = R;
    have_prev = true;
    V = Y;
    f = f_new;
    result.trace.push_back(f);
  }

  result.V = (orth_residual(V) > StiefelBasis::kOrthTol) ? orthonormalize(V) : StiefelBasis(V);
  return result;
}

}  // namespace envelope
