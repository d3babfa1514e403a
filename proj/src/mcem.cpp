#include "envelope/mcem.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "envelope/errors.hpp"
#include "envelope/rng.hpp"

namespace envelope {

void FitConfig::validate() const {
  if (s < 0) throw std::invalid_argument("FitConfig: s must be >= 0 (0 = auto)");
  if (em_max_iters < 0) throw std::invalid_argument("FitConfig: em_max_iters must be >= 0");
  if (!(em_tol > 0)) throw std::invalid_argument("FitConfig: em_tol must be positive");
  if (mcmc.chains < 1) throw std::invalid_argument("FitConfig: need at least one chain");
  if (cov_rank < 0) throw std::invalid_argument("FitConfig: cov_rank must be >= 0");
  optimizer.validate();
  priors.validate();
}

int select_rank(const Eigen::MatrixXd& Y) {
  const Eigen::Index n = Y.rows(), p = Y.cols();
  if (n == 0 || p == 0) return 0;
  if (Y.norm() == 0.0) return 0;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(Y);
  const Eigen::VectorXd sv = svd.singularValues();
  const Eigen::Index m = sv.size();

  Eigen::VectorXd sorted = sv;  // BDCSVD returns descending order already
  const double median =
      (m % 2 == 1) ? sorted(m / 2) : 0.5 * (sorted(m / 2 - 1) + sorted(m / 2));
  if (median == 0.0) {
    // Data of rank below m/2; every strictly positive singular value is signal.
    int r = 0;
    for (Eigen::Index i = 0; i < m; ++i)
      if (sorted(i) > 1e-12 * sorted(0)) ++r;
    return r;
  }

  const double beta = double(std::min(n, p)) / double(std::max(n, p));
  const double omega = 0.56 * beta * beta * beta - 0.95 * beta * beta + 1.82 * beta + 1.43;
  const double threshold = omega * median;

  int rank = 0;
  for (Eigen::Index i = 0; i < m; ++i)
    if (sorted(i) > threshold) ++rank;
  return rank;
}

StiefelBasis init_basis(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& X, int s) {
  const Eigen::Index n = Y.rows(), p = Y.cols(), q = X.cols();
  if (s < 1 || s > p) throw std::invalid_argument("init_basis: need 1 <= s <= p");
  if (q > 0 && X.rows() != n) throw std::invalid_argument("init_basis: Y and X row counts differ");

  Eigen::MatrixXd cols(p, 0);
  Eigen::MatrixXd residual = Y;

  if (q > 0 && X.norm() > 0.0) {
    Eigen::MatrixXd XtX = X.transpose() * X;
    Eigen::LLT<Eigen::MatrixXd> llt(XtX);
    if (llt.info() != Eigen::Success) {
      std::cerr << "init_basis: X^T X is singular, adding 1e-8 ridge\n";
      XtX += 1e-8 * Eigen::MatrixXd::Identity(q, q);
      llt.compute(XtX);
      if (llt.info() != Eigen::Success) throw NumericError("init_basis: X^T X not factorizable");
    }
    const Eigen::MatrixXd beta = llt.solve(X.transpose() * Y);  // q x p
    residual = Y - X * beta;

    // Orthonormal basis of the coefficient rows, rank-revealing.
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(beta.transpose());
    qr.setThreshold(1e-10);
    const Eigen::Index r = std::min<Eigen::Index>(qr.rank(), s);
    if (r > 0)
      cols = (qr.householderQ() * Eigen::MatrixXd::Identity(p, r)).eval();
  }

  if (cols.cols() < s) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(residual, Eigen::ComputeThinV);
    const Eigen::MatrixXd Vr = svd.matrixV();
    Eigen::MatrixXd out(p, s);
    Eigen::Index have = cols.cols();
    out.leftCols(have) = cols;
    for (Eigen::Index j = 0; j < Vr.cols() && have < s; ++j) {
      Eigen::VectorXd w = Vr.col(j);
      w -= out.leftCols(have) * (out.leftCols(have).transpose() * w);
      const double nw = w.norm();
      if (nw > 1e-8) out.col(have++) = w / nw;
    }
    // Residual had too little rank; fill the remaining directions from the
    // complement of what we have.
    if (have < s) {
      const StiefelBasis comp = complete_basis(StiefelBasis(out.leftCols(have)));
      out.rightCols(s - have) = comp.matrix().leftCols(s - have);
      have = s;
    }
    cols = out;
  }

  return orthonormalize(cols.leftCols(s));
}

double estimate_sigma2(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V, double alpha,
                       double kappa) {
  const Eigen::Index n = Y.rows(), p = Y.cols(), s = V.cols();
  if (V.rows() != p) throw std::invalid_argument("estimate_sigma2: V rows must equal Y cols");
  const double denom = 0.5 * double(n) * double(p - s) + alpha - 1.0;
  if (!(denom > 0))
    throw std::invalid_argument("estimate_sigma2: requires n(p-s)/2 + alpha > 1");
  const double num = 0.5 * Y.squaredNorm() - 0.5 * (Y * V).squaredNorm() + kappa;
  return num / denom;
}

namespace {

// || V1 V1^T - V2 V2^T ||_F computed as sqrt(2s - 2 ||V1^T V2||_F^2); exact
// for feasible bases and never materializes the p x p projectors.
double projector_distance(const Eigen::MatrixXd& V1, const Eigen::MatrixXd& V2) {
  const double cross = (V1.transpose() * V2).squaredNorm();
  const double arg = double(V1.cols()) + double(V2.cols()) - 2.0 * cross;
  return std::sqrt(std::max(arg, 0.0));
}

struct EStepResult {
  CovRegSamples samples;
  PosteriorMoments moments;
};

EStepResult run_estep(const Eigen::MatrixXd& Yc, const Eigen::MatrixXd& X,
                      const Eigen::MatrixXd& V, const FitConfig& cfg,
                      std::vector<CovRegState>& chain_states, int n_iter, int burn,
                      std::uint64_t stream_base) {
  const Eigen::MatrixXd Z = Yc * V;
  CovRegSamples pooled;
  for (int c = 0; c < cfg.mcmc.chains; ++c) {
    Rng rng = make_rng(derive_seed(cfg.seed, stream_base + std::uint64_t(c)));
    CovRegSamples s =
        sample_posterior(Z, X, chain_states[c], n_iter, burn, cfg.mcmc.thin, rng);
    pooled.draws.insert(pooled.draws.end(), std::make_move_iterator(s.draws.begin()),
                        std::make_move_iterator(s.draws.end()));
  }
  EStepResult r;
  r.moments = posterior_moments(pooled, X);
  r.samples = std::move(pooled);
  return r;
}

}  // namespace

EnvelopeFit fit(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& X, FitConfig cfg) {
  cfg.validate();
  const Eigen::Index n = Y.rows(), p = Y.cols();
  if (n < 2) throw std::invalid_argument("fit: need at least two observations");
  if (X.rows() != n) throw std::invalid_argument("fit: Y and X row counts differ");

  EnvelopeFit out;
  out.y_means = Y.colwise().mean();
  const Eigen::MatrixXd Yc = Y.rowwise() - out.y_means;

  int s = cfg.s;
  if (s == 0) {
    s = select_rank(Yc);
    if (s == 0)
      throw std::invalid_argument("fit: automatic rank selection found no material subspace");
  }
  if (s >= std::min(n, p))
    throw std::invalid_argument("fit: envelope dimension must satisfy s < min(n, p)");
  cfg.s = s;

  StiefelBasis V = cfg.init_V ? StiefelBasis(*cfg.init_V) : init_basis(Yc, X, s);
  if (V.rows() != p || V.cols() != s)
    throw std::invalid_argument("fit: init_V has the wrong dimensions");

  const double alpha = cfg.priors.alpha, kappa = cfg.priors.kappa;
  std::vector<CovRegState> chain_states(
      cfg.mcmc.chains, make_initial_state(n, X.cols(), s, cfg.cov_rank, cfg.covreg_hyper));

  bool converged = false;
  for (int t = 1; t <= cfg.em_max_iters; ++t) {
    const int iters = (t == 1) ? cfg.mcmc.n_iter : cfg.mcmc.warm_iter;
    const int burn = (t == 1) ? cfg.mcmc.burn : cfg.mcmc.warm_burn;
    EStepResult es = run_estep(Yc, X, V.matrix(), cfg, chain_states, iters, burn,
                               (std::uint64_t(t) << 16));

    const PosteriorMoments& mom = es.moments;
    auto objective = [&](const Eigen::MatrixXd& W) {
      return mstep_objective(Yc, W, mom, alpha, kappa);
    };
    auto gradient = [&](const Eigen::MatrixXd& W) {
      return mstep_gradient(Yc, W, mom, alpha, kappa);
    };
    StiefelResult opt = maximize_on_stiefel(objective, gradient, V, cfg.optimizer);

    EmIterationRecord rec;
    rec.iteration = t;
    rec.mstep_trace = opt.trace;
    rec.objective = opt.trace.back();
    rec.subspace_step = projector_distance(opt.V.matrix(), V.matrix());
    out.trace.push_back(std::move(rec));

    V = opt.V;
    if (out.trace.back().subspace_step < cfg.em_tol) {
      converged = true;
      break;
    }
  }

  // Posterior draws conditional on the final basis, at the full budget.
  EStepResult final_es =
      run_estep(Yc, X, V.matrix(), cfg, chain_states, cfg.mcmc.n_iter, cfg.mcmc.burn,
                (std::uint64_t(cfg.em_max_iters + 1) << 16) | 0x8000u);

  out.V_hat = V;
  out.sigma2_hat = estimate_sigma2(Yc, V.matrix(), alpha, kappa);
  out.samples = std::move(final_es.samples);
  out.config = cfg;
  out.converged = converged;
  return out;
}

Eigen::MatrixXd fitted_covariance(const EnvelopeFit& fit, const Eigen::VectorXd& x,
                                  bool projected_only) {
  if (fit.samples.draws.empty())
    throw std::invalid_argument("fitted_covariance: fit has no posterior draws");
  const Eigen::Index s = fit.V_hat.cols();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(s, s);

  Eigen::MatrixXd Kbar = Eigen::MatrixXd::Zero(s, s);
  for (const auto& d : fit.samples.draws) {
    Eigen::LLT<Eigen::MatrixXd> llt(psi_of_x(d.B, d.A, x));
    if (llt.info() != Eigen::Success)
      throw NumericError("fitted_covariance: draw covariance not positive definite");
    Kbar += llt.solve(id);
  }
  Kbar /= double(fit.samples.draws.size());
  Kbar = 0.5 * (Kbar + Kbar.transpose());

  Eigen::LLT<Eigen::MatrixXd> kllt(Kbar);
  if (kllt.info() != Eigen::Success)
    throw NumericError("fitted_covariance: posterior mean precision is singular");
  Eigen::MatrixXd psi_hat = kllt.solve(id);
  psi_hat = 0.5 * (psi_hat + psi_hat.transpose());
  if (projected_only) return psi_hat;

  const Eigen::MatrixXd& V = fit.V_hat.matrix();
  const Eigen::Index p = V.rows();
  Eigen::MatrixXd full = V * psi_hat * V.transpose() +
                         fit.sigma2_hat * (Eigen::MatrixXd::Identity(p, p) - V * V.transpose());
  return 0.5 * (full + full.transpose());
}

}  // namespace envelope
