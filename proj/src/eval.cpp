#include "envelope/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "envelope/errors.hpp"
#include "envelope/rng.hpp"

namespace envelope {

void SimConfig::validate() const {
  if (n < 1 || p < 1 || q < 1) throw std::invalid_argument("SimConfig: dims must be positive");
  if (s < 1 || s > p) throw std::invalid_argument("SimConfig: need 1 <= s <= p");
  if (!(tau >= 0)) throw std::invalid_argument("SimConfig: tau must be >= 0");
  if (!(sigma2 > 0)) throw std::invalid_argument("SimConfig: sigma2 must be positive");
}

Eigen::MatrixXd truth_psi(const SimTruth& truth, const Eigen::VectorXd& x) {
  const Eigen::Index s = truth.V.cols();
  Eigen::MatrixXd psi = truth.sigma2 * Eigen::MatrixXd::Identity(s, s);
  for (const auto& g : truth.Gamma) {
    const Eigen::VectorXd w = g * x;
    psi.noalias() += w * w.transpose();
  }
  return psi;
}

Eigen::VectorXd simulate_observation(const SimTruth& truth, const Eigen::VectorXd& x, Rng& rng) {
  const Eigen::MatrixXd& V = truth.V.matrix();
  const Eigen::Index p = V.rows(), s = V.cols();
  const Eigen::MatrixXd psi = truth_psi(truth, x);
  Eigen::LLT<Eigen::MatrixXd> llt(psi);

  Eigen::VectorXd xi(s);
  for (Eigen::Index j = 0; j < s; ++j) xi(j) = draw_normal(rng);
  const Eigen::VectorXd u = llt.matrixL() * xi;
  Eigen::VectorXd w(p);
  for (Eigen::Index j = 0; j < p; ++j) w(j) = draw_normal(rng);
  const double sigma = std::sqrt(truth.sigma2);
  const Eigen::VectorXd eps = V * u + sigma * (w - V * (V.transpose() * w));
  return V * (truth.eta.transpose() * x) + eps;
}

SimData simulate(const SimConfig& cfg) {
  cfg.validate();
  const int n = cfg.n, p = cfg.p, s = cfg.s, q = cfg.q, K = cfg.rank_terms();
  Rng rng = make_rng(cfg.seed);

  SimData out;
  out.truth.V = orthonormalize(gaussian_matrix(p, s, rng));
  out.truth.eta = cfg.tau * gaussian_matrix(q, s, rng);
  out.truth.Gamma.reserve(K);
  for (int k = 0; k < K; ++k) out.truth.Gamma.push_back(gaussian_matrix(s, q, rng));
  out.truth.sigma2 = cfg.sigma2;
  out.X = gaussian_matrix(n, q, rng);

  out.Y.resize(n, p);
  out.truth.Psi_x.reserve(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = out.X.row(i).transpose();
    out.truth.Psi_x.push_back(truth_psi(out.truth, x));
    out.Y.row(i) = simulate_observation(out.truth, x, rng).transpose();
  }
  return out;
}

double steins_loss(const Eigen::MatrixXd& Psi, const Eigen::MatrixXd& Psi_hat) {
  const Eigen::Index d = Psi.rows();
  if (Psi.cols() != d || Psi_hat.rows() != d || Psi_hat.cols() != d)
    throw std::invalid_argument("steins_loss: arguments must be square with equal dimension");
  if ((Psi - Psi.transpose()).cwiseAbs().maxCoeff() > 1e-8 ||
      (Psi_hat - Psi_hat.transpose()).cwiseAbs().maxCoeff() > 1e-8)
    throw std::invalid_argument("steins_loss: arguments must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> lt(Psi), lh(Psi_hat);
  if (lt.info() != Eigen::Success || lh.info() != Eigen::Success)
    throw std::invalid_argument("steins_loss: arguments must be positive definite");

  const double tr = lt.solve(Psi_hat).trace();
  const double logdet_t = 2.0 * lt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double logdet_h = 2.0 * lh.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return tr - (logdet_h - logdet_t) - double(d);
}

Eigen::VectorXd principal_angles(const StiefelBasis& V1, const StiefelBasis& V2) {
  if (V1.rows() != V2.rows() || V1.cols() != V2.cols())
    throw std::invalid_argument("principal_angles: bases must share p and s");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(V1.matrix().transpose() * V2.matrix());
  Eigen::VectorXd angles = svd.singularValues();
  for (Eigen::Index i = 0; i < angles.size(); ++i)
    angles(i) = std::acos(std::clamp(angles(i), 0.0, 1.0));
  return angles;  // singular values descend, so angles ascend
}

namespace {

// Average Stein loss in the true material frame, Psi_hat taken as the inverse
// of the pooled posterior mean precision.
double frame_loss(const Eigen::MatrixXd& V_hat, double sigma2_hat, const CovRegSamples& samples,
                  const SimData& data) {
  const Eigen::Index n = data.X.rows();
  const Eigen::Index s = data.truth.V.cols();
  const Eigen::MatrixXd W = data.truth.V.matrix().transpose() * V_hat;  // s x s_hat
  const Eigen::MatrixXd tail = sigma2_hat * (Eigen::MatrixXd::Identity(s, s) - W * W.transpose());

  const PosteriorMoments mom = posterior_moments(samples, data.X);
  double total = 0.0;
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(V_hat.cols(), V_hat.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::LLT<Eigen::MatrixXd> llt(mom.K[i]);
    if (llt.info() != Eigen::Success)
      throw NumericError("frame_loss: posterior mean precision not positive definite");
    Eigen::MatrixXd psi_hat = llt.solve(id);
    Eigen::MatrixXd C = W * psi_hat * W.transpose() + tail;
    C = 0.5 * (C + C.transpose());
    total += steins_loss(data.truth.Psi_x[i], C);
  }
  return total / double(n);
}

struct BootSummary {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double se = 0.0;
};

double percentile(std::vector<double> sorted, double prob) {
  const double idx = prob * double(sorted.size() - 1);
  const std::size_t lo = (std::size_t)std::floor(idx);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = idx - double(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

BootSummary bootstrap_mean(const std::vector<double>& v, std::uint64_t seed, int resamples = 1000) {
  BootSummary b;
  const std::size_t m = v.size();
  for (double x : v) b.mean += x;
  b.mean /= double(m);

  Rng rng = make_rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, m - 1);
  std::vector<double> means(resamples);
  for (int r = 0; r < resamples; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) acc += v[pick(rng)];
    means[r] = acc / double(m);
  }
  std::sort(means.begin(), means.end());
  b.lo = percentile(means, 0.025);
  b.hi = percentile(means, 0.975);
  double var = 0.0;
  double mb = 0.0;
  for (double x : means) mb += x;
  mb /= double(resamples);
  for (double x : means) var += (x - mb) * (x - mb);
  b.se = std::sqrt(var / double(resamples - 1));
  return b;
}

}  // namespace

double average_stein_loss(const EnvelopeFit& fit, const SimData& data) {
  return frame_loss(fit.V_hat.matrix(), fit.sigma2_hat, fit.samples, data);
}

std::vector<ExperimentRow> misspecification_experiment(const SimConfig& base,
                                                       const std::vector<int>& s_tilde_list,
                                                       int replicates, std::uint64_t seed,
                                                       const FitConfig& fit_template) {
  base.validate();
  if (replicates < 1) throw std::invalid_argument("misspecification_experiment: replicates >= 1");
  if (std::find(s_tilde_list.begin(), s_tilde_list.end(), base.s) == s_tilde_list.end())
    throw std::invalid_argument(
        "misspecification_experiment: the generating dimension must appear in s_tilde_list");

  const int nS = (int)s_tilde_list.size();
  std::vector<std::vector<double>> losses(replicates, std::vector<double>(nS, 0.0));

#pragma omp parallel for schedule(dynamic)
  for (int m = 0; m < replicates; ++m) {
    SimConfig c = base;
    c.seed = derive_seed(seed, 0xD100u + std::uint64_t(m));
    const SimData data = simulate(c);
    for (int j = 0; j < nS; ++j) {
      FitConfig fc = fit_template;
      fc.s = s_tilde_list[j];
      fc.cov_rank = c.rank_terms();
      fc.seed = derive_seed(seed, (std::uint64_t(m) << 20) | std::uint64_t(j));
      const EnvelopeFit f = fit(data.Y, data.X, fc);
      losses[m][j] = average_stein_loss(f, data);
    }
  }

  const int base_idx =
      (int)(std::find(s_tilde_list.begin(), s_tilde_list.end(), base.s) - s_tilde_list.begin());
  std::vector<ExperimentRow> rows;
  for (int j = 0; j < nS; ++j) {
    std::vector<double> pct(replicates), diff(replicates);
    for (int m = 0; m < replicates; ++m) {
      diff[m] = losses[m][j] - losses[m][base_idx];
      pct[m] = 100.0 * diff[m] / losses[m][base_idx];
    }
    const BootSummary bp = bootstrap_mean(pct, derive_seed(seed, 0xB000u + std::uint64_t(j)));
    const BootSummary bd = bootstrap_mean(diff, derive_seed(seed, 0xB800u + std::uint64_t(j)));
    rows.push_back({"misspecification", double(s_tilde_list[j]), bp.mean, bp.lo, bp.hi, replicates,
                    bd.mean, bd.se});
  }
  return rows;
}

namespace {

// Two-stage estimate: basis from the SVD of the OLS residual only, then the
// covariance regression sampled on the projected data.
double two_stage_loss(const SimData& data, int s, const FitConfig& tmpl, std::uint64_t seed) {
  const Eigen::Index n = data.Y.rows(), q = data.X.cols();
  const Eigen::RowVectorXd ybar = data.Y.colwise().mean();
  const Eigen::MatrixXd Yc = data.Y.rowwise() - ybar;

  Eigen::MatrixXd XtX = data.X.transpose() * data.X;
  Eigen::LLT<Eigen::MatrixXd> llt(XtX);
  if (llt.info() != Eigen::Success) {
    XtX += 1e-8 * Eigen::MatrixXd::Identity(q, q);
    llt.compute(XtX);
    if (llt.info() != Eigen::Success) throw NumericError("two_stage_loss: X^T X not factorizable");
  }
  const Eigen::MatrixXd resid = Yc - data.X * llt.solve(data.X.transpose() * Yc);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(resid, Eigen::ComputeThinV);
  const StiefelBasis V2 = orthonormalize(svd.matrixV().leftCols(s));

  CovRegState state =
      make_initial_state(n, q, s, tmpl.cov_rank, tmpl.covreg_hyper);
  Rng rng = make_rng(seed);
  const CovRegSamples samples = sample_posterior(Yc * V2.matrix(), data.X, state,
                                                 tmpl.mcmc.n_iter, tmpl.mcmc.burn, tmpl.mcmc.thin, rng);
  const double sigma2 =
      estimate_sigma2(Yc, V2.matrix(), tmpl.priors.alpha, tmpl.priors.kappa);
  return frame_loss(V2.matrix(), sigma2, samples, data);
}

}  // namespace

std::vector<ExperimentRow> two_stage_experiment(const SimConfig& base,
                                                const std::vector<int>& q_list, int replicates,
                                                std::uint64_t seed, const FitConfig& fit_template) {
  base.validate();
  if (replicates < 1) throw std::invalid_argument("two_stage_experiment: replicates >= 1");
  if (q_list.empty()) throw std::invalid_argument("two_stage_experiment: q_list is empty");

  std::vector<ExperimentRow> rows;
  for (std::size_t jq = 0; jq < q_list.size(); ++jq) {
    const int q = q_list[jq];
    std::vector<double> pct(replicates), diff(replicates);

#pragma omp parallel for schedule(dynamic)
    for (int m = 0; m < replicates; ++m) {
      SimConfig c = base;
      c.q = q;
      c.seed = derive_seed(seed, 0xE000u + (std::uint64_t(jq) << 24) + std::uint64_t(m));
      const SimData data = simulate(c);

      FitConfig fc = fit_template;
      fc.s = base.s;
      fc.cov_rank = c.rank_terms();
      fc.seed = derive_seed(seed, (std::uint64_t(jq) << 28) | (std::uint64_t(m) << 4) | 1u);
      const EnvelopeFit joint = fit(data.Y, data.X, fc);
      const double l_joint = average_stein_loss(joint, data);

      FitConfig tc = fc;
      const double l_two = two_stage_loss(
          data, base.s, tc, derive_seed(seed, (std::uint64_t(jq) << 28) | (std::uint64_t(m) << 4) | 2u));

      diff[m] = l_two - l_joint;
      pct[m] = 100.0 * diff[m] / l_joint;
    }

    const BootSummary bp = bootstrap_mean(pct, derive_seed(seed, 0xF000u + std::uint64_t(jq)));
    const BootSummary bd = bootstrap_mean(diff, derive_seed(seed, 0xF800u + std::uint64_t(jq)));
    rows.push_back(
        {"two_stage", double(q), bp.mean, bp.lo, bp.hi, replicates, bd.mean, bd.se});
  }
  return rows;
}

}  // namespace envelope
