#include <doctest.h>

#include <cmath>
#include <vector>

#include "envelope/covreg.hpp"
#include "envelope/errors.hpp"
#include "envelope/rng.hpp"

using namespace envelope;

namespace {

// Standard error of a correlated series by batch means.
double batch_means_se(const std::vector<double>& x, int batches = 50) {
  const int m = (int)x.size() / batches;
  std::vector<double> bm;
  for (int b = 0; b < batches; ++b) {
    double acc = 0;
    for (int i = 0; i < m; ++i) acc += x[b * m + i];
    bm.push_back(acc / m);
  }
  double mean = 0;
  for (double v : bm) mean += v;
  mean /= batches;
  double var = 0;
  for (double v : bm) var += (v - mean) * (v - mean);
  var /= (batches - 1);
  return std::sqrt(var / batches);
}

double mean_of(const std::vector<double>& x) {
  double m = 0;
  for (double v : x) m += v;
  return m / double(x.size());
}

}  // namespace

TEST_SUITE("covreg") {

TEST_CASE("psi_of_x basics") {
  const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd x(1);
  x << 2.0;

  CHECK((psi_of_x({}, A, x) - A).cwiseAbs().maxCoeff() == 0.0);

  Eigen::MatrixXd B1(2, 1);
  B1 << 1, 0;
  const Eigen::MatrixXd psi = psi_of_x({B1}, A, x);
  Eigen::MatrixXd expected(2, 2);
  expected << 5, 0, 0, 1;
  CHECK((psi - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("psi_of_x is symmetric and no less definite than A") {
  Rng rng = make_rng(211);
  for (int rep = 0; rep < 10; ++rep) {
    const int s = 3, q = 2, K = 2;
    std::vector<Eigen::MatrixXd> B;
    for (int k = 0; k < K; ++k) B.push_back(gaussian_matrix(s, q, rng));
    const Eigen::MatrixXd G = gaussian_matrix(s, s, rng);
    const Eigen::MatrixXd A = G * G.transpose() + 0.5 * Eigen::MatrixXd::Identity(s, s);
    const Eigen::VectorXd x = gaussian_matrix(q, 1, rng).col(0);
    const Eigen::MatrixXd psi = psi_of_x(B, A, x);
    CHECK((psi - psi.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ep(psi), ea(A);
    CHECK(ep.eigenvalues().minCoeff() >= ea.eigenvalues().minCoeff() - 1e-10);
  }
}

TEST_CASE("inverse-Wishart sampler has the right mean") {
  Rng rng = make_rng(223);
  const int d = 3;
  Eigen::MatrixXd S(d, d);
  S << 2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0;
  const double dof = 9.0;
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(d, d);
  const int draws = 40000;
  for (int i = 0; i < draws; ++i) mean += sample_inverse_wishart(S, dof, rng);
  mean /= draws;
  const Eigen::MatrixXd expected = S / (dof - d - 1);
  CHECK((mean - expected).norm() / expected.norm() < 0.05);
}

TEST_CASE("baseline covariance block matches the conjugate closed form at K = 0") {
  // With no rank terms and coefficients held at zero the chain reduces to
  // A | Z ~ inverse-Wishart(S_A + Z^T Z, nu_A + n).
  Rng rng = make_rng(227);
  const int n = 40, q = 1, s = 2;
  CovRegHyper hyper;
  hyper.nu_A = 8.0;
  hyper.sample_coefficients = false;
  CovRegState state = make_initial_state(n, q, s, 0, hyper);
  const Eigen::MatrixXd X = gaussian_matrix(n, q, rng);
  const Eigen::MatrixXd Z = gaussian_matrix(n, s, rng);

  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(s, s);
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) {
    state = gibbs_step(state, Z, X, rng);
    mean += state.A;
  }
  mean /= draws;
  const Eigen::MatrixXd expected =
      (Eigen::MatrixXd::Identity(s, s) + Z.transpose() * Z) / (hyper.nu_A + n - s - 1);
  CHECK((mean - expected).norm() / expected.norm() < 0.05);
}

TEST_CASE("no-data posterior shrinks the coefficients toward zero") {
  Rng rng = make_rng(229);
  const int n = 30, q = 1, s = 2, K = 1;
  CovRegHyper hyper;
  hyper.tau_eta2 = 1.0;
  hyper.tau_B2 = 1.0;
  CovRegState state = make_initial_state(n, q, s, K, hyper);
  const Eigen::MatrixXd X = gaussian_matrix(n, q, rng);
  const Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(n, s);

  Eigen::MatrixXd eta_mean = Eigen::MatrixXd::Zero(q, s);
  const int draws = 4000;
  for (int i = 0; i < draws; ++i) {
    state = gibbs_step(state, Z, X, rng);
    eta_mean += state.eta;
  }
  eta_mean /= draws;
  CHECK(eta_mean.norm() < 1.0);  // well under the prior sd
}

TEST_CASE("sample_posterior is deterministic and validates its budget") {
  Rng rng = make_rng(233);
  const int n = 15, q = 2, s = 2, K = 1;
  const Eigen::MatrixXd X = gaussian_matrix(n, q, rng);
  const Eigen::MatrixXd Z = gaussian_matrix(n, s, rng);

  CovRegState s1 = make_initial_state(n, q, s, K);
  CovRegState s2 = make_initial_state(n, q, s, K);
  Rng r1 = make_rng(99), r2 = make_rng(99);
  const CovRegSamples a = sample_posterior(Z, X, s1, 60, 20, 2, r1);
  const CovRegSamples b = sample_posterior(Z, X, s2, 60, 20, 2, r2);
  REQUIRE(a.draws.size() == b.draws.size());
  CHECK(a.draws.size() == 20);
  for (std::size_t i = 0; i < a.draws.size(); ++i) {
    CHECK((a.draws[i].A - b.draws[i].A).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.draws[i].eta - b.draws[i].eta).cwiseAbs().maxCoeff() == 0.0);
  }

  CovRegState s3 = make_initial_state(n, q, s, K);
  CHECK_THROWS_AS(sample_posterior(Z, X, s3, 20, 20, 1, r1), std::invalid_argument);
}

TEST_CASE("posterior covariance recovers the generating process") {
  // Synthetic data with known coefficients; the posterior mean of Psi_x
  // should land within 15% Frobenius error at test points.
  Rng rng = make_rng(239);
  const int n = 500, q = 1, s = 2, K = 1;
  Eigen::MatrixXd eta_true(q, s);
  eta_true << 1.0, -0.5;
  Eigen::MatrixXd B_true(s, q);
  B_true << 1.2, -0.8;
  Eigen::MatrixXd A_true(s, s);
  A_true << 1.0, 0.3, 0.3, 0.8;

  const Eigen::MatrixXd X = gaussian_matrix(n, q, rng);
  Eigen::MatrixXd Z(n, s);
  Eigen::LLT<Eigen::MatrixXd> allt(A_true);
  for (int i = 0; i < n; ++i) {
    const double g = draw_normal(rng);
    Eigen::VectorXd e(s);
    for (int j = 0; j < s; ++j) e(j) = draw_normal(rng);
    Z.row(i) = X.row(i) * eta_true +
               (g * (B_true * X.row(i).transpose()) + allt.matrixL() * e).transpose();
  }

  CovRegHyper hyper;
  CovRegState state = make_initial_state(n, q, s, K, hyper);
  Rng chain_rng = make_rng(57);
  const CovRegSamples samples = sample_posterior(Z, X, state, 3000, 1000, 2, chain_rng);

  for (double xv : {-1.5, -0.5, 0.0, 0.5, 1.5}) {
    Eigen::VectorXd x(1);
    x << xv;
    const Eigen::MatrixXd truth = psi_of_x({B_true}, A_true, x);
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(s, s);
    for (const auto& d : samples.draws) mean += psi_of_x(d.B, d.A, x);
    mean /= double(samples.draws.size());
    CHECK((mean - truth).norm() / truth.norm() < 0.15);
  }

  // Moment stability: halving the draw count moves K_i by well under 2%.
  CovRegSamples half;
  half.draws.assign(samples.draws.begin(),
                    samples.draws.begin() + (std::ptrdiff_t)samples.draws.size() / 2);
  const PosteriorMoments m_half = posterior_moments(half, X);
  const PosteriorMoments m_full = posterior_moments(samples, X);
  double worst = 0.0;
  for (int i = 0; i < n; ++i)
    worst = std::max(worst, (m_half.K[i] - m_full.K[i]).norm() / m_full.K[i].norm());
  CHECK(worst < 0.02);
}

TEST_CASE("posterior_moments on explicit draws") {
  Eigen::MatrixXd X(2, 1);
  X << 1.0, -2.0;

  CovRegDraw d1;
  d1.eta = Eigen::MatrixXd::Constant(1, 2, 0.5);
  d1.A = Eigen::MatrixXd::Identity(2, 2);

  SUBCASE("single draw reproduces that draw exactly") {
    CovRegSamples s;
    s.draws = {d1};
    const PosteriorMoments m = posterior_moments(s, X);
    CHECK((m.K[0] - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((m.M.row(0) - (X.row(0) * d1.eta) * Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <
          1e-15);
  }

  SUBCASE("two draws average the precisions") {
    CovRegDraw d2 = d1;
    d2.A = Eigen::MatrixXd::Identity(2, 2) / 3.0;  // inverse is 3 I
    CovRegSamples s;
    s.draws = {d1, d2};
    const PosteriorMoments m = posterior_moments(s, X);
    CHECK((m.K[0] - 2.0 * Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("parallel and serial moment paths agree") {
    CovRegDraw d2 = d1;
    d2.A = 2.0 * Eigen::MatrixXd::Identity(2, 2);
    CovRegSamples s;
    s.draws = {d1, d2};
    const PosteriorMoments a = posterior_moments(s, X);
    const PosteriorMoments b = posterior_moments_serial(s, X);
    CHECK((a.M - b.M).cwiseAbs().maxCoeff() == 0.0);
    for (int i = 0; i < 2; ++i) CHECK((a.K[i] - b.K[i]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("flipping the sign of B_k and the matching latent column is invisible") {
  Rng rng = make_rng(241);
  const int n = 12, q = 2, s = 2, K = 2;
  CovRegState st = sample_prior_state(n, q, s, K, CovRegHyper{1.0, 1.0, {}, 8.0, true}, rng);
  const Eigen::MatrixXd X = gaussian_matrix(n, q, rng);
  const Eigen::MatrixXd Z = simulate_data(st, X, rng);

  const double base = augmented_loglik(st, Z, X);
  CovRegState flipped = st;
  flipped.B[1] = -flipped.B[1];
  flipped.gamma.col(1) = -flipped.gamma.col(1);
  CHECK(std::abs(augmented_loglik(flipped, Z, X) - base) < 1e-10);
}

TEST_CASE("joint-distribution check: the transition kernel preserves the prior") {
  // Alternate data simulation and one Gibbs sweep; the marginal law of the
  // parameters must stay at the prior, so the long-run mean of A_11 matches
  // the analytic inverse-Wishart mean within 3 batch-means standard errors.
  const int n = 30, q = 1, s = 2, K = 1;
  CovRegHyper hyper;
  hyper.tau_eta2 = 1.0;
  hyper.tau_B2 = 1.0;
  hyper.nu_A = 10.0;  // finite variance for A entries
  const double prior_mean_A11 = 1.0 / (hyper.nu_A - s - 1);

  Rng rng = make_rng(251);
  const Eigen::MatrixXd X = gaussian_matrix(n, q, rng);
  CovRegState st = sample_prior_state(n, q, s, K, hyper, rng);

  const int cycles = 60000, warm = 2000;
  std::vector<double> a11;
  a11.reserve(cycles - warm);
  for (int t = 0; t < cycles; ++t) {
    const Eigen::MatrixXd Z = simulate_data(st, X, rng);
    st = gibbs_step(st, Z, X, rng);
    if (t >= warm) a11.push_back(st.A(0, 0));
  }
  const double mean = mean_of(a11);
  const double se = batch_means_se(a11);
  INFO("mean ", mean, " prior ", prior_mean_A11, " se ", se);
  CHECK(std::abs(mean - prior_mean_A11) < 3.0 * se);
}

TEST_CASE("unequal prior scales exercise the dense coefficient path") {
  Rng rng = make_rng(257);
  const int n = 200, q = 1, s = 2, K = 1;
  CovRegHyper hyper;
  hyper.tau_eta2 = 25.0;
  hyper.tau_B2 = 4.0;  // forces the dense (ms)^2 precision route
  Eigen::MatrixXd eta_true(q, s);
  eta_true << 2.0, -1.0;

  const Eigen::MatrixXd X = gaussian_matrix(n, q, rng);
  Eigen::MatrixXd Z(n, s);
  for (int i = 0; i < n; ++i) {
    Eigen::RowVectorXd e(s);
    for (int j = 0; j < s; ++j) e(j) = 0.3 * draw_normal(rng);
    Z.row(i) = X.row(i) * eta_true + e;
  }
  CovRegState state = make_initial_state(n, q, s, K, hyper);
  Rng chain_rng = make_rng(31);
  const CovRegSamples samples = sample_posterior(Z, X, state, 1500, 500, 1, chain_rng);
  Eigen::MatrixXd eta_mean = Eigen::MatrixXd::Zero(q, s);
  for (const auto& d : samples.draws) eta_mean += d.eta;
  eta_mean /= double(samples.draws.size());
  CHECK((eta_mean - eta_true).norm() < 0.15);
}

}  // TEST_SUITE
