#include "envelope/kernels.hpp"

#include <stdexcept>

namespace envelope::kernels {

namespace {

constexpr Eigen::Index kBlock = 256;

void check_dims(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V,
                const std::vector<Eigen::MatrixXd>& K, const Eigen::MatrixXd& M) {
  const Eigen::Index n = Y.rows(), s = V.cols();
  if (V.rows() != Y.cols()) throw std::invalid_argument("kernels: V rows must equal Y cols");
  if ((Eigen::Index)K.size() != n || M.rows() != n || M.cols() != s)
    throw std::invalid_argument("kernels: per-observation terms must have n entries of width s");
}

template <class T, class Combine>
T pairwise_combine(std::vector<T> parts, Combine comb) {
  // Fixed-shape pairwise reduction over block partials.
  while (parts.size() > 1) {
    std::vector<T> next;
    next.reserve((parts.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < parts.size(); i += 2) next.push_back(comb(parts[i], parts[i + 1]));
    if (parts.size() % 2 == 1) next.push_back(parts.back());
    parts.swap(next);
  }
  return parts.front();
}

}  // namespace

ObsTerms obs_terms_serial(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V,
                          const std::vector<Eigen::MatrixXd>& K, const Eigen::MatrixXd& M) {
  check_dims(Y, V, K, M);
  ObsTerms t;
  Eigen::RowVectorXd w(V.cols());
  for (Eigen::Index i = 0; i < Y.rows(); ++i) {
    w.noalias() = Y.row(i) * V;
    t.quad += w * K[i] * w.transpose();
    t.cross += M.row(i).dot(w);
  }
  return t;
}

ObsTerms obs_terms(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V,
                   const std::vector<Eigen::MatrixXd>& K, const Eigen::MatrixXd& M) {
  check_dims(Y, V, K, M);
  const Eigen::Index n = Y.rows();
  const Eigen::Index nblocks = (n + kBlock - 1) / kBlock;
  if (nblocks <= 1) return obs_terms_serial(Y, V, K, M);

  std::vector<ObsTerms> parts(nblocks);
#pragma omp parallel for schedule(static)
  for (Eigen::Index b = 0; b < nblocks; ++b) {
    const Eigen::Index lo = b * kBlock, hi = std::min(n, lo + kBlock);
    ObsTerms t;
    Eigen::RowVectorXd w(V.cols());
    for (Eigen::Index i = lo; i < hi; ++i) {
      w.noalias() = Y.row(i) * V;
      t.quad += w * K[i] * w.transpose();
      t.cross += M.row(i).dot(w);
    }
    parts[b] = t;
  }
  return pairwise_combine(std::move(parts), [](const ObsTerms& a, const ObsTerms& b) {
    return ObsTerms{a.quad + b.quad, a.cross + b.cross};
  });
}

Eigen::MatrixXd obs_grad_serial(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V,
                                const std::vector<Eigen::MatrixXd>& K, const Eigen::MatrixXd& M) {
  check_dims(Y, V, K, M);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(V.rows(), V.cols());
  Eigen::RowVectorXd w(V.cols()), z(V.cols());
  for (Eigen::Index i = 0; i < Y.rows(); ++i) {
    w.noalias() = Y.row(i) * V;
    z.noalias() = M.row(i) - w * K[i];
    g.noalias() += Y.row(i).transpose() * z;
  }
  return g;
}

Eigen::MatrixXd obs_grad(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& V,
                         const std::vector<Eigen::MatrixXd>& K, const Eigen::MatrixXd& M) {
  check_dims(Y, V, K, M);
  const Eigen::Index n = Y.rows();
  const Eigen::Index nblocks = (n + kBlock - 1) / kBlock;
  if (nblocks <= 1) return obs_grad_serial(Y, V, K, M);

  std::vector<Eigen::MatrixXd> parts(nblocks);
#pragma omp parallel for schedule(static)
  for (Eigen::Index b = 0; b < nblocks; ++b) {
    const Eigen::Index lo = b * kBlock, hi = std::min(n, lo + kBlock);
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(V.rows(), V.cols());
    Eigen::RowVectorXd w(V.cols()), z(V.cols());
    for (Eigen::Index i = lo; i < hi; ++i) {
      w.noalias() = Y.row(i) * V;
      z.noalias() = M.row(i) - w * K[i];
      g.noalias() += Y.row(i).transpose() * z;
    }
    parts[b] = std::move(g);
  }
  return pairwise_combine(std::move(parts),
                          [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a + b).eval(); });
}

}  // namespace envelope::kernels
