// Times the OpenMP accumulation kernels against their serial reference
// implementations. Run with OMP_NUM_THREADS set, or pass a thread count.

#include <omp.h>

#include <cstdio>
#include <cstdlib>
#include <vector>

#include "envelope/covreg.hpp"
#include "envelope/kernels.hpp"
#include "envelope/rng.hpp"

using namespace envelope;

namespace {

struct Case {
  int n, p, s, draws;
};

template <class F>
double time_best_of(F f, int reps = 5) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const double t0 = omp_get_wtime();
    f();
    best = std::min(best, omp_get_wtime() - t0);
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) omp_set_num_threads(std::atoi(argv[1]));
  std::printf("threads = %d\n", omp_get_max_threads());
  std::printf("%-22s %8s %8s %8s %10s %10s %8s\n", "kernel", "n", "p", "s", "serial_ms",
              "omp_ms", "speedup");

  const std::vector<Case> cases = {{2048, 100, 8, 0}, {4096, 500, 12, 0}, {8192, 2000, 16, 0}};
  for (const auto& c : cases) {
    Rng rng = make_rng(42);
    const Eigen::MatrixXd Y = gaussian_matrix(c.n, c.p, rng);
    const Eigen::MatrixXd V = orthonormalize(gaussian_matrix(c.p, c.s, rng)).matrix();
    Eigen::MatrixXd M = gaussian_matrix(c.n, c.s, rng);
    std::vector<Eigen::MatrixXd> K(c.n);
    for (int i = 0; i < c.n; ++i) {
      const Eigen::MatrixXd G = gaussian_matrix(c.s, c.s, rng);
      K[i] = G * G.transpose() + Eigen::MatrixXd::Identity(c.s, c.s);
    }

    volatile double sink = 0;
    const double ts = time_best_of([&] { sink = sink + kernels::obs_terms_serial(Y, V, K, M).quad; });
    const double tp = time_best_of([&] { sink = sink + kernels::obs_terms(Y, V, K, M).quad; });
    std::printf("%-22s %8d %8d %8d %10.3f %10.3f %8.2f\n", "obs_terms", c.n, c.p, c.s,
                1e3 * ts, 1e3 * tp, ts / tp);

    const double gs = time_best_of([&] { sink = sink + kernels::obs_grad_serial(Y, V, K, M)(0, 0); });
    const double gp = time_best_of([&] { sink = sink + kernels::obs_grad(Y, V, K, M)(0, 0); });
    std::printf("%-22s %8d %8d %8d %10.3f %10.3f %8.2f\n", "obs_grad", c.n, c.p, c.s,
                1e3 * gs, 1e3 * gp, gs / gp);
  }

  // Posterior moment averaging: n observations x D draws of s x s solves.
  {
    const int n = 400, q = 4, s = 8, Kr = 2, draws = 400;
    Rng rng = make_rng(7);
    const Eigen::MatrixXd X = gaussian_matrix(n, q, rng);
    CovRegSamples samples;
    for (int d = 0; d < draws; ++d) {
      CovRegDraw dr;
      dr.eta = gaussian_matrix(q, s, rng);
      for (int k = 0; k < Kr; ++k) dr.B.push_back(gaussian_matrix(s, q, rng));
      const Eigen::MatrixXd G = gaussian_matrix(s, s, rng);
      dr.A = G * G.transpose() + Eigen::MatrixXd::Identity(s, s);
      dr.iteration = d;
      samples.draws.push_back(std::move(dr));
    }
    volatile double sink = 0;
    const double ms = time_best_of([&] { sink = sink + posterior_moments_serial(samples, X).M(0, 0); }, 3);
    const double mp = time_best_of([&] { sink = sink + posterior_moments(samples, X).M(0, 0); }, 3);
    std::printf("%-22s %8d %8d %8d %10.3f %10.3f %8.2f\n", "posterior_moments", n, draws, s,
                1e3 * ms, 1e3 * mp, ms / mp);
  }
  return 0;
}
