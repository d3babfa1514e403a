#include "envelope/covreg.hpp"

#include <cmath>
#include <stdexcept>

#include "envelope/errors.hpp"

namespace envelope {

namespace {

Eigen::LLT<Eigen::MatrixXd> llt_with_jitter(Eigen::MatrixXd S, const char* context) {
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() == Eigen::Success) return llt;
  S += 1e-8 * Eigen::MatrixXd::Identity(S.rows(), S.cols());
  llt.compute(S);
  if (llt.info() != Eigen::Success)
    throw NumericError(std::string(context) + ": conditional precision not positive definite");
  return llt;
}

// Draw from N(mu, P^{-1}) given the Cholesky factorization P = L L^T:
// x = mu + L^{-T} xi.
Eigen::VectorXd precision_normal(const Eigen::VectorXd& mu, const Eigen::LLT<Eigen::MatrixXd>& llt,
                                 Rng& rng) {
  Eigen::VectorXd xi(mu.size());
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = draw_normal(rng);
  return mu + llt.matrixU().solve(xi);
}

}  // namespace

Eigen::MatrixXd CovRegHyper::resolved_S_A(Eigen::Index s) const {
  if (S_A.size() == 0) return Eigen::MatrixXd::Identity(s, s);
  if (S_A.rows() != s || S_A.cols() != s)
    throw std::invalid_argument("CovRegHyper: S_A must be s x s");
  return S_A;
}

double CovRegHyper::resolved_nu_A(Eigen::Index s) const {
  return nu_A > 0 ? nu_A : double(s) + 2.0;
}

CovRegState make_initial_state(Eigen::Index n, Eigen::Index q, Eigen::Index s, Eigen::Index K,
                               CovRegHyper hyper) {
  if (n < 1 || q < 1 || s < 1 || K < 0)
    throw std::invalid_argument("make_initial_state: need n, q, s >= 1 and K >= 0");
  CovRegState st;
  st.eta = Eigen::MatrixXd::Zero(q, s);
  st.B.assign(K, Eigen::MatrixXd::Zero(s, q));
  st.A = Eigen::MatrixXd::Identity(s, s);
  st.gamma = Eigen::MatrixXd::Zero(n, K);
  st.hyper = std::move(hyper);
  return st;
}

CovRegState sample_prior_state(Eigen::Index n, Eigen::Index q, Eigen::Index s, Eigen::Index K,
                               CovRegHyper hyper, Rng& rng) {
  CovRegState st = make_initial_state(n, q, s, K, std::move(hyper));
  st.eta = std::sqrt(st.hyper.tau_eta2) * gaussian_matrix(q, s, rng);
  for (auto& b : st.B) b = std::sqrt(st.hyper.tau_B2) * gaussian_matrix(s, q, rng);
  st.A = sample_inverse_wishart(st.hyper.resolved_S_A(s), st.hyper.resolved_nu_A(s), rng);
  st.gamma = gaussian_matrix(n, K, rng);
  return st;
}

Eigen::MatrixXd psi_of_x(const std::vector<Eigen::MatrixXd>& B, const Eigen::MatrixXd& A,
                         const Eigen::VectorXd& x) {
  if (A.rows() != A.cols()) throw std::invalid_argument("psi_of_x: A must be square");
  Eigen::MatrixXd psi = A;
  for (const auto& Bk : B) {
    if (Bk.rows() != A.rows() || Bk.cols() != x.size())
      throw std::invalid_argument("psi_of_x: B_k must be s x q");
    const Eigen::VectorXd w = Bk * x;
    psi.noalias() += w * w.transpose();
  }
  return psi;
}

Eigen::MatrixXd sample_inverse_wishart(const Eigen::MatrixXd& scale, double dof, Rng& rng) {
  const Eigen::Index d = scale.rows();
  if (scale.cols() != d) throw std::invalid_argument("sample_inverse_wishart: scale must be square");
  if (!(dof > double(d) - 1.0))
    throw std::invalid_argument("sample_inverse_wishart: need dof > d - 1");
  Eigen::LLT<Eigen::MatrixXd> llt(scale);
  if (llt.info() != Eigen::Success)
    throw NumericError("sample_inverse_wishart: scale not positive definite");

  // W = (C T)(C T)^T ~ Wishart(scale^{-1}, dof) with C C^T = scale^{-1}; the
  // returned draw is W^{-1}.
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    T(i, i) = std::sqrt(draw_chi_squared(rng, dof - double(i)));
    for (Eigen::Index j = 0; j < i; ++j) T(i, j) = draw_normal(rng);
  }
  const Eigen::MatrixXd C = llt.matrixU().solve(Eigen::MatrixXd::Identity(d, d));  // L^{-T}
  const Eigen::MatrixXd M = C * T;
  Eigen::LLT<Eigen::MatrixXd> mllt(M * M.transpose());
  if (mllt.info() != Eigen::Success)
    throw NumericError("sample_inverse_wishart: degenerate Wishart draw");
  Eigen::MatrixXd A = mllt.solve(Eigen::MatrixXd::Identity(d, d));
  return 0.5 * (A + A.transpose());
}

Eigen::MatrixXd simulate_data(const CovRegState& state, const Eigen::MatrixXd& X, Rng& rng) {
  const Eigen::Index n = state.n(), s = state.s();
  if (X.rows() != n || X.cols() != state.q())
    throw std::invalid_argument("simulate_data: X must be n x q");
  Eigen::LLT<Eigen::MatrixXd> llt(state.A);
  if (llt.info() != Eigen::Success) throw NumericError("simulate_data: A not positive definite");
  const Eigen::MatrixXd LAt = llt.matrixL().toDenseMatrix().transpose();

  Eigen::MatrixXd Z = X * state.eta;
  for (Eigen::Index k = 0; k < state.K(); ++k)
    Z.noalias() += state.gamma.col(k).asDiagonal() * (X * state.B[k].transpose());
  Z.noalias() += gaussian_matrix(n, s, rng) * LAt;
  return Z;
}

double augmented_loglik(const CovRegState& state, const Eigen::MatrixXd& Z,
                        const Eigen::MatrixXd& X) {
  const Eigen::Index n = state.n();
  if (Z.rows() != n || Z.cols() != state.s())
    throw std::invalid_argument("augmented_loglik: Z must be n x s");
  Eigen::MatrixXd R = Z - X * state.eta;
  for (Eigen::Index k = 0; k < state.K(); ++k)
    R.noalias() -= state.gamma.col(k).asDiagonal() * (X * state.B[k].transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(state.A);
  if (llt.info() != Eigen::Success) throw NumericError("augmented_loglik: A not positive definite");
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double quad = llt.solve(R.transpose()).cwiseProduct(R.transpose()).sum();
  return -0.5 * double(n) * logdet - 0.5 * quad;
}

namespace {

double log_posterior(const CovRegState& st, const Eigen::MatrixXd& Z, const Eigen::MatrixXd& X) {
  const Eigen::Index s = st.s();
  double lp = augmented_loglik(st, Z, X);
  lp += -0.5 * st.gamma.squaredNorm();
  lp += -0.5 * st.eta.squaredNorm() / st.hyper.tau_eta2;
  for (const auto& b : st.B) lp += -0.5 * b.squaredNorm() / st.hyper.tau_B2;
  Eigen::LLT<Eigen::MatrixXd> llt(st.A);
  const double logdetA = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double nuA = st.hyper.resolved_nu_A(s);
  lp += -0.5 * (nuA + s + 1.0) * logdetA -
        0.5 * llt.solve(st.hyper.resolved_S_A(s)).trace();
  return lp;
}

void draw_latent_factors(CovRegState& st, const Eigen::MatrixXd& Z, const Eigen::MatrixXd& X,
                         Rng& rng) {
  const Eigen::Index n = st.n(), s = st.s(), K = st.K();
  if (K == 0) return;
  Eigen::LLT<Eigen::MatrixXd> allt = llt_with_jitter(st.A, "gibbs_step (A)");
  Eigen::MatrixXd W(s, K);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < K; ++k) W.col(k) = st.B[k] * X.row(i).transpose();
    const Eigen::MatrixXd AiW = allt.solve(W);
    Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(K, K) + W.transpose() * AiW;
    Q = 0.5 * (Q + Q.transpose());
    const Eigen::VectorXd r = (Z.row(i) - X.row(i) * st.eta).transpose();
    Eigen::LLT<Eigen::MatrixXd> qllt = llt_with_jitter(Q, "gibbs_step (latent factors)");
    const Eigen::VectorXd mu = qllt.solve(AiW.transpose() * r);
    st.gamma.row(i) = precision_normal(mu, qllt, rng).transpose();
  }
}

// Stacked coefficient block: rows of the design are [x_i, gamma_i1 x_i, ...,
// gamma_iK x_i] and the coefficient matrix is [eta; B_1^T; ...; B_K^T].
Eigen::MatrixXd coefficient_design(const CovRegState& st, const Eigen::MatrixXd& X) {
  const Eigen::Index n = st.n(), q = st.q(), K = st.K();
  Eigen::MatrixXd C(n, q * (K + 1));
  C.leftCols(q) = X;
  for (Eigen::Index k = 0; k < K; ++k)
    C.middleCols(q * (k + 1), q) = st.gamma.col(k).asDiagonal() * X;
  return C;
}

void scatter_coefficients(const Eigen::MatrixXd& Theta, CovRegState& st) {
  const Eigen::Index q = st.q();
  st.eta = Theta.topRows(q);
  for (Eigen::Index k = 0; k < st.K(); ++k)
    st.B[k] = Theta.middleRows(q * (k + 1), q).transpose();
}

// vec(Theta) | rest ~ N with precision A^{-1} (x) C^T C + D0^{-1}. When the
// two prior variances coincide the precision diagonalizes through the
// eigenbases of A^{-1} and C^T C, avoiding the dense (ms)^3 factorization.
void draw_coefficients(CovRegState& st, const Eigen::MatrixXd& Z, const Eigen::MatrixXd& X,
                       Rng& rng) {
  const Eigen::Index q = st.q(), s = st.s(), K = st.K();
  const Eigen::Index m = q * (K + 1);
  const Eigen::MatrixXd C = coefficient_design(st, X);
  const Eigen::MatrixXd CtC = C.transpose() * C;
  Eigen::LLT<Eigen::MatrixXd> allt = llt_with_jitter(st.A, "gibbs_step (A)");
  const Eigen::MatrixXd Ainv = allt.solve(Eigen::MatrixXd::Identity(s, s));
  const Eigen::MatrixXd Bmat = C.transpose() * Z * Ainv;  // m x s, vec gives the linear term

  Eigen::VectorXd prior_prec(m);
  prior_prec.head(q).setConstant(1.0 / st.hyper.tau_eta2);
  if (K > 0) prior_prec.tail(m - q).setConstant(1.0 / st.hyper.tau_B2);

  Eigen::MatrixXd Theta(m, s);
  if (st.hyper.tau_eta2 == st.hyper.tau_B2 || K == 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(0.5 * (Ainv + Ainv.transpose()));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ec(CtC);
    if (ea.info() != Eigen::Success || ec.info() != Eigen::Success)
      throw NumericError("gibbs_step: coefficient eigensolve failed");
    const Eigen::MatrixXd Bt = ec.eigenvectors().transpose() * Bmat * ea.eigenvectors();
    Eigen::MatrixXd Tt(m, s);
    const double tau_inv = 1.0 / st.hyper.tau_eta2;
    for (Eigen::Index j = 0; j < s; ++j)
      for (Eigen::Index i = 0; i < m; ++i) {
        const double d = ea.eigenvalues()(j) * ec.eigenvalues()(i) + tau_inv;
        if (!(d > 0)) throw NumericError("gibbs_step: coefficient precision not positive definite");
        Tt(i, j) = Bt(i, j) / d + draw_normal(rng) / std::sqrt(d);
      }
    Theta = ec.eigenvectors() * Tt * ea.eigenvectors().transpose();
  } else {
    Eigen::MatrixXd P(m * s, m * s);
    for (Eigen::Index j = 0; j < s; ++j)
      for (Eigen::Index i = 0; i < s; ++i) P.block(i * m, j * m, m, m) = Ainv(i, j) * CtC;
    P.diagonal() += prior_prec.replicate(s, 1);
    Eigen::LLT<Eigen::MatrixXd> pllt = llt_with_jitter(P, "gibbs_step (coefficients)");
    const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(Bmat.data(), m * s);
    const Eigen::VectorXd theta = precision_normal(pllt.solve(b), pllt, rng);
    Theta = Eigen::Map<const Eigen::MatrixXd>(theta.data(), m, s);
  }
  scatter_coefficients(Theta, st);
}

void draw_baseline_covariance(CovRegState& st, const Eigen::MatrixXd& Z, const Eigen::MatrixXd& X,
                              Rng& rng) {
  const Eigen::Index s = st.s();
  Eigen::MatrixXd R = Z - coefficient_design(st, X) * [&] {
    Eigen::MatrixXd Theta(st.q() * (st.K() + 1), s);
    Theta.topRows(st.q()) = st.eta;
    for (Eigen::Index k = 0; k < st.K(); ++k)
      Theta.middleRows(st.q() * (k + 1), st.q()) = st.B[k].transpose();
    return Theta;
  }();
  const Eigen::MatrixXd scale = st.hyper.resolved_S_A(s) + R.transpose() * R;
  st.A = sample_inverse_wishart(scale, st.hyper.resolved_nu_A(s) + double(st.n()), rng);
}

}  // namespace

CovRegState gibbs_step(const CovRegState& state, const Eigen::MatrixXd& Z,
                       const Eigen::MatrixXd& X, Rng& rng) {
  if (Z.rows() != state.n() || Z.cols() != state.s())
    throw std::invalid_argument("gibbs_step: Z must be n x s");
  if (X.rows() != state.n() || X.cols() != state.q())
    throw std::invalid_argument("gibbs_step: X must be n x q");
  CovRegState st = state;
  draw_latent_factors(st, Z, X, rng);
  if (st.hyper.sample_coefficients) draw_coefficients(st, Z, X, rng);
  draw_baseline_covariance(st, Z, X, rng);
  return st;
}

CovRegSamples sample_posterior(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& X,
                               CovRegState& state, int n_iter, int burn, int thin, Rng& rng) {
  if (burn < 0 || n_iter <= burn)
    throw std::invalid_argument("sample_posterior: need n_iter > burn >= 0");
  if (thin < 1) throw std::invalid_argument("sample_posterior: thin must be >= 1");

  CovRegSamples out;
  out.draws.reserve((n_iter - burn + thin - 1) / thin);
  for (int t = 1; t <= n_iter; ++t) {
    state = gibbs_step(state, Z, X, rng);
    if (t > burn && (t - burn - 1) % thin == 0)
      out.draws.push_back({state.eta, state.B, state.A, t, log_posterior(state, Z, X)});
  }
  return out;
}

namespace {

void moments_for_range(const CovRegSamples& samples, const Eigen::MatrixXd& X, Eigen::Index lo,
                       Eigen::Index hi, Eigen::MatrixXd& M, std::vector<Eigen::MatrixXd>& K) {
  const Eigen::Index s = samples.draws.front().A.rows();
  const double nd = double(samples.draws.size());
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(s, s);
  for (Eigen::Index i = lo; i < hi; ++i) {
    Eigen::MatrixXd Ki = Eigen::MatrixXd::Zero(s, s);
    Eigen::RowVectorXd Mi = Eigen::RowVectorXd::Zero(s);
    const Eigen::VectorXd x = X.row(i).transpose();
    for (const auto& d : samples.draws) {
      const Eigen::MatrixXd psi = psi_of_x(d.B, d.A, x);
      Eigen::LLT<Eigen::MatrixXd> llt(psi);
      if (llt.info() != Eigen::Success)
        throw NumericError("posterior_moments: draw covariance not positive definite");
      const Eigen::MatrixXd psi_inv = llt.solve(id);
      Ki += psi_inv;
      Mi += (X.row(i) * d.eta) * psi_inv;
    }
    K[i] = 0.5 * (Ki + Ki.transpose()) / nd;
    M.row(i) = Mi / nd;
  }
}

}  // namespace

PosteriorMoments posterior_moments_serial(const CovRegSamples& samples, const Eigen::MatrixXd& X) {
  if (samples.draws.empty()) throw std::invalid_argument("posterior_moments: no draws");
  const Eigen::Index n = X.rows(), s = samples.draws.front().A.rows();
  PosteriorMoments out;
  out.M.resize(n, s);
  out.K.resize(n);
  moments_for_range(samples, X, 0, n, out.M, out.K);
  return out;
}

PosteriorMoments posterior_moments(const CovRegSamples& samples, const Eigen::MatrixXd& X) {
  if (samples.draws.empty()) throw std::invalid_argument("posterior_moments: no draws");
  const Eigen::Index n = X.rows(), s = samples.draws.front().A.rows();
  PosteriorMoments out;
  out.M.resize(n, s);
  out.K.resize(n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) moments_for_range(samples, X, i, i + 1, out.M, out.K);
  return out;
}

}  // namespace envelope
