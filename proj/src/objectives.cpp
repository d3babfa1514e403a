#include "envelope/objectives.hpp"

#include <cmath>
#include <stdexcept>

#include "envelope/errors.hpp"
#include "envelope/kernels.hpp"

namespace envelope {

namespace {

// log det of a symmetric positive definite matrix; throws NumericError with
// the caller's context when the Cholesky factorization fails.
double spd_logdet(const Eigen::MatrixXd& S, const char* context) {
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success)
    throw NumericError(std::string(context) + ": matrix not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double residual_energy(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V, double kappa) {
  const double d = 0.5 * Y.squaredNorm() - 0.5 * (Y * V).squaredNorm() + kappa;
  if (!(d > 0)) throw NumericError("spiked objective: residual energy term not positive");
  return d;
}

Eigen::MatrixXd phi_times_psi_inv(const ProjectedParams& params) {
  Eigen::MatrixXd M(params.phi.rows(), params.phi.cols());
  for (Eigen::Index i = 0; i < M.rows(); ++i) M.row(i) = params.phi.row(i) * params.psi_inv[i];
  return M;
}

}  // namespace

SymmetricPrior SymmetricPrior::scaled_identity(double c) {
  if (!(c >= 0)) throw std::invalid_argument("SymmetricPrior: scale must be >= 0");
  SymmetricPrior p;
  p.scaled_ = true;
  p.c_ = c;
  return p;
}

SymmetricPrior SymmetricPrior::dense(Eigen::MatrixXd S) {
  if (S.rows() != S.cols() || (S - S.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw std::invalid_argument("SymmetricPrior: matrix must be symmetric");
  SymmetricPrior p;
  p.scaled_ = false;
  p.S_ = std::move(S);
  return p;
}

Eigen::MatrixXd SymmetricPrior::materialize(Eigen::Index dim) const {
  if (scaled_) return c_ * Eigen::MatrixXd::Identity(dim, dim);
  if (S_.rows() != dim)
    throw std::invalid_argument("SymmetricPrior: dimension mismatch, have " +
                                std::to_string(S_.rows()) + " need " + std::to_string(dim));
  return S_;
}

Eigen::MatrixXd SymmetricPrior::congruence(const Eigen::MatrixXd& X) const {
  if (scaled_) return c_ * (X.transpose() * X);
  if (S_.rows() != X.rows()) throw std::invalid_argument("SymmetricPrior: dimension mismatch");
  return X.transpose() * S_ * X;
}

void PriorConfig::validate() const {
  if (!(nu0 > 0) || !(nu1 > 0)) throw std::invalid_argument("PriorConfig: nu0, nu1 must be positive");
  if (!(alpha > 0) || !(kappa > 0))
    throw std::invalid_argument("PriorConfig: alpha, kappa must be positive");
}

void ProjectedParams::validate() const {
  if ((Eigen::Index)psi_inv.size() != phi.rows())
    throw std::invalid_argument("ProjectedParams: phi rows and psi_inv count must agree");
  for (const auto& m : psi_inv)
    if (m.rows() != phi.cols() || m.cols() != phi.cols())
      throw std::invalid_argument("ProjectedParams: psi_inv entries must be s x s");
}

void PosteriorMoments::validate() const {
  if ((Eigen::Index)K.size() != M.rows())
    throw std::invalid_argument("PosteriorMoments: M rows and K count must agree");
  for (const auto& m : K)
    if (m.rows() != M.cols() || m.cols() != M.cols())
      throw std::invalid_argument("PosteriorMoments: K entries must be s x s");
}

double general_marginal_loglik(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V,
                               const Eigen::MatrixXd& Vperp, const ProjectedParams& params,
                               const SymmetricPrior& U0, double nu0) {
  params.validate();
  const Eigen::Index n = Y.rows(), p = Y.cols();
  if (V.rows() != p || Vperp.rows() != p || V.cols() + Vperp.cols() != p)
    throw std::invalid_argument("general_marginal_loglik: V and Vperp must partition R^p");
  if (params.phi.rows() != n) throw std::invalid_argument("general_marginal_loglik: params size != n");
  if ((V.transpose() * Vperp).cwiseAbs().maxCoeff() > 1e-5)
    throw std::invalid_argument("general_marginal_loglik: V and Vperp are not orthogonal");

  const auto terms = kernels::obs_terms(Y, V, params.psi_inv, phi_times_psi_inv(params));

  const Eigen::MatrixXd W = Y * Vperp;
  Eigen::MatrixXd Sperp = W.transpose() * W + U0.congruence(Vperp);
  const double ld = spd_logdet(Sperp, "general_marginal_loglik (is U0 positive definite?)");
  return -0.5 * (terms.quad - 2.0 * terms.cross) - 0.5 * (n + nu0) * ld;
}

Eigen::MatrixXd general_marginal_grad_v(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V,
                                        const ProjectedParams& params) {
  params.validate();
  return kernels::obs_grad(Y, V, params.psi_inv, phi_times_psi_inv(params));
}

Eigen::MatrixXd general_marginal_grad_vperp(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Vperp,
                                            const SymmetricPrior& U0, double nu0) {
  const Eigen::Index n = Y.rows();
  const Eigen::MatrixXd SV = Y.transpose() * (Y * Vperp) + U0.materialize(Y.cols()) * Vperp;
  Eigen::MatrixXd inner = Vperp.transpose() * SV;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(inner);
  if (llt.info() != Eigen::Success)
    throw NumericError("general_marginal_grad_vperp: inner matrix not positive definite");
  return -(n + nu0) * (SV * llt.solve(Eigen::MatrixXd::Identity(inner.rows(), inner.cols())));
}

double spiked_marginal_loglik(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V,
                              const ProjectedParams& params, double alpha, double kappa) {
  params.validate();
  const Eigen::Index n = Y.rows(), p = Y.cols(), s = V.cols();
  if (s >= p) throw std::invalid_argument("spiked_marginal_loglik: requires s < p");
  if (!(kappa > 0)) throw std::invalid_argument("spiked_marginal_loglik: kappa must be positive");
  if (params.phi.rows() != n) throw std::invalid_argument("spiked_marginal_loglik: params size != n");

  const auto terms = kernels::obs_terms(Y, V, params.psi_inv, phi_times_psi_inv(params));
  const double cr = 0.5 * double(n) * double(p - s) + alpha;
  return -0.5 * (terms.quad - 2.0 * terms.cross) - cr * std::log(residual_energy(Y, V, kappa));
}

Eigen::MatrixXd spiked_marginal_grad(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V,
                                     const ProjectedParams& params, double alpha, double kappa) {
  params.validate();
  const Eigen::Index n = Y.rows(), p = Y.cols(), s = V.cols();
  const double cr = 0.5 * double(n) * double(p - s) + alpha;
  const double D = residual_energy(Y, V, kappa);
  Eigen::MatrixXd g = kernels::obs_grad(Y, V, params.psi_inv, phi_times_psi_inv(params));
  g.noalias() += (cr / D) * (Y.transpose() * (Y * V));
  return g;
}

double mstep_objective(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V,
                       const PosteriorMoments& moments, double alpha, double kappa) {
  moments.validate();
  const Eigen::Index n = Y.rows(), p = Y.cols(), s = V.cols();
  if (s >= p) throw std::invalid_argument("mstep_objective: requires s < p");
  if (moments.M.rows() != n) throw std::invalid_argument("mstep_objective: moments size != n");

  const auto terms = kernels::obs_terms(Y, V, moments.K, moments.M);
  const double cr = 0.5 * double(n) * double(p - s) + alpha;
  return -0.5 * (terms.quad - 2.0 * terms.cross) - cr * std::log(residual_energy(Y, V, kappa));
}

Eigen::MatrixXd mstep_gradient(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V,
                               const PosteriorMoments& moments, double alpha, double kappa) {
  moments.validate();
  const Eigen::Index n = Y.rows(), p = Y.cols(), s = V.cols();
  const double cr = 0.5 * double(n) * double(p - s) + alpha;
  const double D = residual_energy(Y, V, kappa);
  Eigen::MatrixXd g = kernels::obs_grad(Y, V, moments.K, moments.M);
  g.noalias() += (cr / D) * (Y.transpose() * (Y * V));
  return g;
}

namespace {

// Posterior regression pieces shared by the response-envelope objective:
// B_n and A as defined in the header comment.
struct RegressionPieces {
  Eigen::MatrixXd Bn;
  Eigen::MatrixXd A;
};

RegressionPieces regression_pieces(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& X,
                                   const SymmetricPrior& Lambda0) {
  const Eigen::Index q = X.cols();
  const Eigen::MatrixXd L0 = Lambda0.materialize(q);
  Eigen::MatrixXd Lam = X.transpose() * X + L0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(Lam);
  if (!lu.isInvertible())
    throw NumericError("response_envelope_loglik: X^T X + Lambda0 is singular; "
                       "use a strictly positive definite Lambda0");
  RegressionPieces rp;
  rp.Bn = lu.solve(X.transpose() * Y);
  const Eigen::MatrixXd R = Y - X * rp.Bn;
  rp.A = R.transpose() * R + rp.Bn.transpose() * L0 * rp.Bn;
  return rp;
}

}  // namespace

double response_envelope_loglik(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& X,
                                const Eigen::MatrixXd& V, const Eigen::MatrixXd& Vperp,
                                const PriorConfig& priors) {
  priors.validate();
  const Eigen::Index n = Y.rows(), p = Y.cols(), q = X.cols();
  if (X.rows() != n) throw std::invalid_argument("response_envelope_loglik: Y and X row counts differ");
  if (V.rows() != p || Vperp.rows() != p || V.cols() + Vperp.cols() != p)
    throw std::invalid_argument("response_envelope_loglik: V and Vperp must partition R^p");
  (void)q;

  const auto rp = regression_pieces(Y, X, priors.Lambda0);
  const Eigen::MatrixXd Sv = V.transpose() * rp.A * V + priors.U1.congruence(V);
  const Eigen::MatrixXd W = Y * Vperp;
  const Eigen::MatrixXd Sp = W.transpose() * W + priors.U0.congruence(Vperp);

  const double c1 = 0.5 * (n + priors.nu1);
  const double c2 = 0.5 * (n + priors.nu0);
  return -c1 * spd_logdet(Sv, "response_envelope_loglik (material term)") -
         c2 * spd_logdet(Sp, "response_envelope_loglik (complement term)");
}

Eigen::MatrixXd response_envelope_grad_v(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& X,
                                         const Eigen::MatrixXd& V, const PriorConfig& priors) {
  const Eigen::Index n = Y.rows();
  const auto rp = regression_pieces(Y, X, priors.Lambda0);
  const Eigen::MatrixXd SV = rp.A * V + priors.U1.materialize(Y.cols()) * V;
  Eigen::MatrixXd inner = V.transpose() * SV;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(inner);
  if (llt.info() != Eigen::Success)
    throw NumericError("response_envelope_grad_v: inner matrix not positive definite");
  return -(n + priors.nu1) * (SV * llt.solve(Eigen::MatrixXd::Identity(inner.rows(), inner.cols())));
}

Eigen::MatrixXd response_envelope_grad_vperp(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Vperp,
                                             const PriorConfig& priors) {
  return general_marginal_grad_vperp(Y, Vperp, priors.U0, priors.nu0);
}

double shared_subspace_loglik(const std::vector<Eigen::MatrixXd>& groups, const Eigen::MatrixXd& V,
                              const std::vector<GroupPrior>& priors, double alpha, double kappa) {
  if (groups.empty()) throw std::invalid_argument("shared_subspace_loglik: empty group list");
  if (priors.size() != groups.size())
    throw std::invalid_argument("shared_subspace_loglik: one prior per group required");
  const Eigen::Index p = V.rows(), s = V.cols();
  if (s >= p) throw std::invalid_argument("shared_subspace_loglik: requires s < p");
  if (!(kappa > 0) || !(alpha > 0))
    throw std::invalid_argument("shared_subspace_loglik: alpha, kappa must be positive");

  double total = 0.0;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const Eigen::MatrixXd& Yk = groups[k];
    if (Yk.cols() != p) throw std::invalid_argument("shared_subspace_loglik: group column mismatch");
    const Eigen::Index nk = Yk.rows();
    const Eigen::MatrixXd Wk = Yk * V;
    const Eigen::MatrixXd Sk = Wk.transpose() * Wk + priors[k].U.congruence(V);
    const double Dk = 0.5 * (Yk.squaredNorm() - Wk.squaredNorm()) + kappa;
    if (!(Dk > 0)) throw NumericError("shared_subspace_loglik: residual energy not positive");
    total += -0.5 * (nk + priors[k].nu) * spd_logdet(Sk, "shared_subspace_loglik") -
             (0.5 * double(nk) * double(p - s) + alpha) * std::log(Dk);
  }
  return total;
}

Eigen::MatrixXd shared_subspace_grad(const std::vector<Eigen::MatrixXd>& groups,
                                     const Eigen::MatrixXd& V, const std::vector<GroupPrior>& priors,
                                     double alpha, double kappa) {
  if (groups.empty()) throw std::invalid_argument("shared_subspace_grad: empty group list");
  const Eigen::Index p = V.rows(), s = V.cols();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(p, s);
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const Eigen::MatrixXd& Yk = groups[k];
    const Eigen::Index nk = Yk.rows();
    const Eigen::MatrixXd YkV = Yk * V;
    const Eigen::MatrixXd SkV = Yk.transpose() * YkV + priors[k].U.materialize(p) * V;
    Eigen::MatrixXd inner = V.transpose() * SkV;
    inner = 0.5 * (inner + inner.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(inner);
    if (llt.info() != Eigen::Success)
      throw NumericError("shared_subspace_grad: inner matrix not positive definite");
    const double Dk = 0.5 * (Yk.squaredNorm() - YkV.squaredNorm()) + kappa;
    const double ck = 0.5 * double(nk) * double(p - s) + alpha;
    g.noalias() += -(nk + priors[k].nu) * (SkV * llt.solve(Eigen::MatrixXd::Identity(s, s)));
    g.noalias() += (ck / Dk) * (Yk.transpose() * YkV);
  }
  return g;
}

}  // namespace envelope
