#pragma once

// Brute-force marginalization oracles for the objective functions, built from
// fully normalized densities and nested quadrature only. They share no
// algebra with the implementations they check: every evaluation assembles the
// complete p x p Gaussian density and integrates the priors numerically.

#include <Eigen/Dense>
#include <cmath>

#include "quadrature.hpp"

namespace testsupport {

inline double log_mvn(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                      const Eigen::MatrixXd& Sigma) {
  const Eigen::Index p = y.size();
  Eigen::LLT<Eigen::MatrixXd> llt(Sigma);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const Eigen::VectorXd d = y - mu;
  const double quad = d.dot(llt.solve(d));
  return -0.5 * (double(p) * std::log(2.0 * M_PI) + logdet + quad);
}

/// log inverse-gamma(shape, scale) density at x.
inline double log_invgamma(double x, double shape, double scale) {
  if (!(x > 0)) return -INFINITY;
  return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

/// Marginal over the complement variance psi0 (one complement direction, so
/// the inverse-Wishart prior is inverse-gamma(nu0/2, u0/2)). V and Vp are
/// p-vectors spanning the material and immaterial directions; phi and psi
/// hold the known projected means and variances per observation.
inline double oracle_general_marginal(const Eigen::MatrixXd& Y, const Eigen::VectorXd& V,
                                      const Eigen::VectorXd& Vp, const Eigen::VectorXd& phi,
                                      const Eigen::VectorXd& psi, double u0, double nu0) {
  const Eigen::Index n = Y.rows();
  auto log_joint = [&](double t0) {
    const double s0 = std::exp(t0);
    const Eigen::MatrixXd Sigma_base = s0 * (Vp * Vp.transpose());
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::MatrixXd Sigma = psi(i) * (V * V.transpose()) + Sigma_base;
      ll += log_mvn(Y.row(i).transpose(), phi(i) * V, Sigma);
    }
    return ll + log_invgamma(s0, 0.5 * nu0, 0.5 * u0) + t0;  // + t0: d psi0 = e^t dt
  };
  return log_integral(log_joint, -16.0, 16.0);
}

/// Marginal over the isotropic complement variance sigma2 with an
/// inverse-gamma(alpha, kappa) prior; any p, one material direction.
inline double oracle_spiked_marginal(const Eigen::MatrixXd& Y, const Eigen::VectorXd& V,
                                     const Eigen::VectorXd& phi, const Eigen::VectorXd& psi,
                                     double alpha, double kappa) {
  const Eigen::Index n = Y.rows(), p = Y.cols();
  const Eigen::MatrixXd P = V * V.transpose();
  const Eigen::MatrixXd Pc = Eigen::MatrixXd::Identity(p, p) - P;
  auto log_joint = [&](double t) {
    const double s2 = std::exp(t);
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      ll += log_mvn(Y.row(i).transpose(), phi(i) * V, psi(i) * P + s2 * Pc);
    return ll + log_invgamma(s2, alpha, kappa) + t;
  };
  return log_integral(log_joint, -16.0, 16.0);
}

/// Full three-level marginalization of the constant-covariance model at
/// p = 2, s = 1, q = 1: the scalar mean coefficient eta carries the prior
/// N(0, psi1 / lambda0), and the two variances carry inverse-gamma priors.
inline double oracle_response_envelope(const Eigen::MatrixXd& Y, const Eigen::VectorXd& X,
                                       const Eigen::VectorXd& V, const Eigen::VectorXd& Vp,
                                       double u0, double nu0, double u1, double nu1,
                                       double lambda0) {
  const Eigen::Index n = Y.rows();
  auto over_psi0 = [&](double t0) {
    const double s0 = std::exp(t0);
    auto over_psi1 = [&](double t1) {
      const double s1 = std::exp(t1);
      const Eigen::MatrixXd Sigma = s1 * (V * V.transpose()) + s0 * (Vp * Vp.transpose());
      Eigen::LLT<Eigen::MatrixXd> llt(Sigma);
      const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
      auto over_eta = [&](double eta) {
        double ll = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const Eigen::VectorXd d = Y.row(i).transpose() - eta * X(i) * V;
          ll += -0.5 * (2.0 * std::log(2.0 * M_PI) + logdet + d.dot(llt.solve(d)));
        }
        // normal prior on eta, variance psi1 / lambda0
        ll += -0.5 * std::log(2.0 * M_PI * s1 / lambda0) - 0.5 * eta * eta * lambda0 / s1;
        return ll;
      };
      return log_integral(over_eta, -60.0, 60.0, 512, 1e-10) +
             log_invgamma(s1, 0.5 * nu1, 0.5 * u1) + t1;
    };
    return log_integral(over_psi1, -14.0, 14.0, 256, 1e-10) +
           log_invgamma(s0, 0.5 * nu0, 0.5 * u0) + t0;
  };
  return log_integral(over_psi0, -14.0, 14.0, 256, 1e-10);
}

/// Two-level marginalization of a single group of the grouped spiked model at
/// p = 2, s = 1: projected variance psi ~ inverse-gamma(nu/2, u/2) (the
/// one-dimensional inverse-Wishart) and complement variance sigma2 ~
/// inverse-gamma(alpha, kappa).
inline double oracle_shared_subspace_group(const Eigen::MatrixXd& Yk, const Eigen::VectorXd& V,
                                           double uk, double nuk, double alpha, double kappa) {
  const Eigen::Index n = Yk.rows(), p = Yk.cols();
  const Eigen::MatrixXd P = V * V.transpose();
  const Eigen::MatrixXd Pc = Eigen::MatrixXd::Identity(p, p) - P;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(p);
  auto over_psi = [&](double t1) {
    const double s1 = std::exp(t1);
    auto over_sigma2 = [&](double t0) {
      const double s0 = std::exp(t0);
      const Eigen::MatrixXd Sigma = s1 * P + s0 * Pc;
      double ll = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) ll += log_mvn(Yk.row(i).transpose(), zero, Sigma);
      return ll + log_invgamma(s0, alpha, kappa) + t0;
    };
    return log_integral(over_sigma2, -14.0, 14.0, 256, 1e-10) +
           log_invgamma(s1, 0.5 * nuk, 0.5 * uk) + t1;
  };
  return log_integral(over_psi, -14.0, 14.0, 256, 1e-10);
}

/// Central finite differences of a matrix-argument scalar function.
template <class F>
Eigen::MatrixXd finite_difference_gradient(F f, const Eigen::MatrixXd& V, double h = 1e-6) {
  Eigen::MatrixXd g(V.rows(), V.cols());
  Eigen::MatrixXd W = V;
  for (Eigen::Index i = 0; i < V.rows(); ++i)
    for (Eigen::Index j = 0; j < V.cols(); ++j) {
      W(i, j) = V(i, j) + h;
      const double fp = f(W);
      W(i, j) = V(i, j) - h;
      const double fm = f(W);
      W(i, j) = V(i, j);
      g(i, j) = (fp - fm) / (2.0 * h);
    }
  return g;
}

}  // namespace testsupport
