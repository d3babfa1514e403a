// Command-line front end: simulate / rank / fit / summarize / eval.
// Exit codes: 0 success, 2 usage or validation error, 3 data error,
// 4 numerical failure.

#include <CLI11.hpp>
#include <omp.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "envelope/errors.hpp"
#include "envelope/eval.hpp"
#include "envelope/io.hpp"
#include "envelope/mcem.hpp"
#include "envelope/summarize.hpp"

namespace fs = std::filesystem;
using namespace envelope;

namespace {

std::vector<double> parse_doubles(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string field;
  while (std::getline(ss, field, ',')) {
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end == field.c_str() || *end != '\0')
      throw std::invalid_argument(std::string(what) + ": cannot parse '" + field + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument(std::string(what) + ": empty list");
  return out;
}

std::vector<int> parse_ints(const std::string& text, const char* what) {
  std::vector<int> out;
  for (double v : parse_doubles(text, what)) out.push_back((int)v);
  return out;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> numbered_names(const std::string& prefix, Eigen::Index count) {
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < count; ++j) names.push_back(prefix + std::to_string(j + 1));
  return names;
}

struct SimulateArgs {
  SimConfig cfg;
  std::string out;
};

int run_simulate(const SimulateArgs& a) {
  if (a.cfg.s >= a.cfg.p) throw std::invalid_argument("s must be < p");
  a.cfg.validate();
  fs::create_directories(a.out);
  const SimData data = simulate(a.cfg);
  io::write_csv(a.out + "/Y.csv", data.Y, numbered_names("y", data.Y.cols()));
  io::write_csv(a.out + "/X.csv", data.X, numbered_names("x", data.X.cols()));
  io::write_truth(a.out + "/truth.json", a.cfg, data.truth);
  std::cout << "wrote " << a.out << "/Y.csv, X.csv, truth.json\n";
  return 0;
}

struct RankArgs {
  std::string y_path;
};

int run_rank(const RankArgs& a) {
  const auto y = io::read_csv(a.y_path);
  std::cout << select_rank(y.values) << "\n";
  return 0;
}

struct FitArgs {
  std::string y_path, x_path, out;
  FitConfig cfg;
};

int run_fit(const FitArgs& a) {
  const auto y = io::read_csv(a.y_path);
  const auto x = io::read_csv(a.x_path);
  if (y.values.rows() != x.values.rows())
    throw DataError("fit: Y has " + std::to_string(y.values.rows()) + " rows but X has " +
                    std::to_string(x.values.rows()));
  fs::create_directories(a.out);
  const EnvelopeFit f = fit(y.values, x.values, a.cfg);
  const std::string samples_path = a.out + "/samples.json";
  io::write_samples(samples_path, f.samples);
  io::write_fit(a.out + "/fit.json", f, samples_path);
  std::cout << "fit: s = " << f.config.s << ", sigma2_hat = " << f.sigma2_hat
            << ", em_iterations = " << f.trace.size()
            << (f.converged ? " (converged)" : " (maximum iterations reached)") << "\n";
  return 0;
}

struct SummarizeArgs {
  std::string fit_path, contrast, dims_text = "1,2", out;
  std::vector<std::string> at;
  int top_m = 10;
};

int run_summarize(const SummarizeArgs& a) {
  const EnvelopeFit f = io::read_fit(a.fit_path);

  const auto semi = a.contrast.find(';');
  if (semi == std::string::npos)
    throw std::invalid_argument(
        "summarize: --contrast expects \"xa_1,..,xa_q;xb_1,..,xb_q\"");
  const Eigen::VectorXd xa = to_vector(parse_doubles(a.contrast.substr(0, semi), "contrast"));
  const Eigen::VectorXd xb = to_vector(parse_doubles(a.contrast.substr(semi + 1), "contrast"));
  if (xa.size() != xb.size())
    throw std::invalid_argument("summarize: contrast sides have different lengths");

  const auto dims_list = parse_ints(a.dims_text, "dims");
  if (dims_list.size() != 2) throw std::invalid_argument("summarize: --dims expects two indices");
  const std::pair<int, int> dims{dims_list[0] - 1, dims_list[1] - 1};

  const ContrastRotation rot = rotate_to_contrast(f, xa, xb);
  fs::create_directories(a.out);

  std::ofstream eig(a.out + "/eigensamples.csv");
  if (!eig) throw DataError("summarize: cannot open " + a.out + "/eigensamples.csv");
  eig << "draw,lambda1,angle,label\n";
  std::ofstream cont(a.out + "/contours.csv");
  if (!cont) throw DataError("summarize: cannot open " + a.out + "/contours.csv");
  cont << "label,c11,c12,c22\n";

  for (const auto& label : a.at) {
    const Eigen::VectorXd x = to_vector(parse_doubles(label, "at"));
    if (x.size() != xa.size())
      throw std::invalid_argument("summarize: evaluation point length differs from contrast");
    for (const auto& e : eigen_summary(f, rot.V_tilde, x, dims))
      eig << e.draw << "," << io::format_double(e.lambda1) << "," << io::format_double(e.angle)
          << "," << csv_quote(label) << "\n";
    const Eigen::MatrixXd T =
        rot.R.transpose() * posterior_mean_projected_cov(f.samples, x) * rot.R;
    cont << csv_quote(label) << "," << io::format_double(T(dims.first, dims.first)) << ","
         << io::format_double(T(dims.first, dims.second)) << ","
         << io::format_double(T(dims.second, dims.second)) << "\n";
  }

  std::ofstream load(a.out + "/loadings.csv");
  if (!load) throw DataError("summarize: cannot open " + a.out + "/loadings.csv");
  load << "feature,dim1,dim2,norm\n";
  for (const auto& l : biplot_loadings(f, rot.V_tilde, dims, a.top_m))
    load << (l.feature + 1) << "," << io::format_double(l.d1) << "," << io::format_double(l.d2)
         << "," << io::format_double(l.norm) << "\n";

  std::cout << "wrote " << a.out << "/eigensamples.csv, loadings.csv, contours.csv\n";
  return 0;
}

struct EvalArgs {
  std::string mode;
  std::string fit_path, truth_path, x_path, out;
  SimConfig sim;
  std::string stilde_text = "8,12", qlist_text = "1,2,3,4";
  int replicates = 20;
  std::uint64_t seed = 0;
  FitConfig fit_cfg;
};

int run_eval_losses(const EvalArgs& a) {
  const EnvelopeFit f = io::read_fit(a.fit_path);
  const io::TruthManifest t = io::read_truth(a.truth_path);
  const auto x = io::read_csv(a.x_path);
  if (x.values.cols() != t.truth.eta.rows())
    throw DataError("eval: X column count does not match the truth manifest");
  if (f.V_hat.rows() != t.truth.V.rows())
    throw DataError("eval: fit and truth manifest disagree on the feature count");

  const Eigen::Index n = x.values.rows();
  const int s = (int)t.truth.V.cols();
  const Eigen::MatrixXd W = t.truth.V.matrix().transpose() * f.V_hat.matrix();
  const Eigen::MatrixXd tail =
      f.sigma2_hat * (Eigen::MatrixXd::Identity(s, s) - W * W.transpose());

  Eigen::MatrixXd table(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd xi = x.values.row(i).transpose();
    const Eigen::MatrixXd psi_true = truth_psi(t.truth, xi);
    const Eigen::MatrixXd psi_hat = fitted_covariance(f, xi, /*projected_only=*/true);
    Eigen::MatrixXd C = W * psi_hat * W.transpose() + tail;
    C = 0.5 * (C + C.transpose());
    table(i, 0) = double(i + 1);
    table(i, 1) = steins_loss(psi_true, C);
  }
  io::write_csv(a.out, table, {"observation", "stein_loss"});
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

int run_eval(const EvalArgs& a) {
  if (a.mode == "losses") return run_eval_losses(a);
  if (a.mode == "misspec") {
    const auto rows = misspecification_experiment(a.sim, parse_ints(a.stilde_text, "stilde"),
                                                  a.replicates, a.seed, a.fit_cfg);
    io::write_experiment_csv(a.out, rows);
  } else if (a.mode == "two-stage") {
    const auto rows = two_stage_experiment(a.sim, parse_ints(a.qlist_text, "qlist"),
                                           a.replicates, a.seed, a.fit_cfg);
    io::write_experiment_csv(a.out, rows);
  } else {
    throw std::invalid_argument("eval: --mode must be losses, misspec or two-stage");
  }
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

void add_fit_options(CLI::App* cmd, FitConfig& cfg, bool with_s_and_seed = true) {
  if (with_s_and_seed) {
    cmd->add_option("--s", cfg.s, "Envelope dimension (0 = select automatically)");
    cmd->add_option("--seed", cfg.seed, "RNG seed");
  }
  cmd->add_option("--em-max-iters", cfg.em_max_iters, "Maximum EM iterations");
  cmd->add_option("--em-tol", cfg.em_tol, "Projector-distance convergence threshold");
  cmd->add_option("--mcmc-iters", cfg.mcmc.n_iter, "Gibbs sweeps for the first and final chains");
  cmd->add_option("--mcmc-burn", cfg.mcmc.burn, "Burn-in sweeps");
  cmd->add_option("--mcmc-thin", cfg.mcmc.thin, "Keep every thin-th draw");
  cmd->add_option("--chains", cfg.mcmc.chains, "Independent chains pooled per E-step");
  cmd->add_option("--warm-iters", cfg.mcmc.warm_iter, "Gibbs sweeps for warm-started E-steps");
  cmd->add_option("--warm-burn", cfg.mcmc.warm_burn, "Burn-in for warm-started E-steps");
  cmd->add_option("--cov-rank", cfg.cov_rank, "Rank terms K in the covariance regression");
  cmd->add_option("--alpha", cfg.priors.alpha, "Inverse-gamma shape for the complement variance");
  cmd->add_option("--kappa", cfg.priors.kappa, "Inverse-gamma scale for the complement variance");
  cmd->add_option("--tau-eta2", cfg.covreg_hyper.tau_eta2, "Prior variance of mean coefficients");
  cmd->add_option("--tau-b2", cfg.covreg_hyper.tau_B2, "Prior variance of covariance coefficients");
  cmd->add_option("--nu-a", cfg.covreg_hyper.nu_A, "Inverse-Wishart dof for the baseline (0 = s+2)");
  cmd->add_option("--opt-max-iters", cfg.optimizer.max_iters, "Subspace search iteration cap");
  cmd->add_option("--grad-tol", cfg.optimizer.grad_tol, "Subspace search gradient tolerance");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Envelope-based joint mean and covariance regression"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a key=value config file");

  int threads = 1;
  app.add_option("--threads", threads, "Worker threads (1 = bit-reproducible)")
      ->capture_default_str();

  SimulateArgs sim;
  auto* csim = app.add_subcommand("simulate", "Draw a dataset from the simulation model");
  csim->add_option("--n", sim.cfg.n, "Observations")->capture_default_str();
  csim->add_option("--p", sim.cfg.p, "Features")->capture_default_str();
  csim->add_option("--s", sim.cfg.s, "Envelope dimension")->capture_default_str();
  csim->add_option("--q", sim.cfg.q, "Covariates")->capture_default_str();
  csim->add_option("--tau", sim.cfg.tau, "Mean coefficient scale")->capture_default_str();
  csim->add_option("--sigma2", sim.cfg.sigma2, "Complement variance")->capture_default_str();
  csim->add_option("--K", sim.cfg.K, "Covariance rank terms (-1 = q, 0 = none)")->capture_default_str();
  csim->add_option("--seed", sim.cfg.seed, "RNG seed")->capture_default_str();
  csim->add_option("--out", sim.out, "Output directory")->required();

  RankArgs rank;
  auto* crank = app.add_subcommand("rank", "Print the selected envelope dimension");
  crank->add_option("--y", rank.y_path, "Response matrix CSV")->required();

  FitArgs fita;
  auto* cfit = app.add_subcommand("fit", "Fit the envelope by Monte Carlo EM");
  cfit->add_option("--y", fita.y_path, "Response matrix CSV")->required();
  cfit->add_option("--x", fita.x_path, "Covariate matrix CSV")->required();
  cfit->add_option("--out", fita.out, "Output directory")->required();
  add_fit_options(cfit, fita.cfg);

  SummarizeArgs summ;
  auto* csum = app.add_subcommand("summarize", "Posterior eigen-summaries on a contrast rotation");
  csum->add_option("--fit", summ.fit_path, "fit.json path")->required();
  csum->add_option("--contrast", summ.contrast, "\"xa_1,..,xa_q;xb_1,..,xb_q\"")->required();
  csum->add_option("--at", summ.at, "Evaluation covariate vector (repeatable)")->required();
  csum->add_option("--dims", summ.dims_text, "Two 1-based rotated coordinates")
      ->capture_default_str();
  csum->add_option("--top-m", summ.top_m, "Loadings to keep")->capture_default_str();
  csum->add_option("--out", summ.out, "Output directory")->required();

  EvalArgs eval;
  auto* ceval = app.add_subcommand("eval", "Stein-loss evaluation and simulation experiments");
  ceval->add_option("--mode", eval.mode, "losses | misspec | two-stage")->required();
  ceval->add_option("--fit", eval.fit_path, "fit.json (losses mode)");
  ceval->add_option("--truth", eval.truth_path, "truth.json (losses mode)");
  ceval->add_option("--x", eval.x_path, "Covariate CSV (losses mode)");
  ceval->add_option("--out", eval.out, "Output CSV")->required();
  ceval->add_option("--n", eval.sim.n, "Observations")->capture_default_str();
  ceval->add_option("--p", eval.sim.p, "Features")->capture_default_str();
  ceval->add_option("--s", eval.sim.s, "Generating envelope dimension")->capture_default_str();
  ceval->add_option("--q", eval.sim.q, "Covariates")->capture_default_str();
  ceval->add_option("--tau", eval.sim.tau, "Mean coefficient scale")->capture_default_str();
  ceval->add_option("--sigma2", eval.sim.sigma2, "Complement variance")->capture_default_str();
  ceval->add_option("--stilde", eval.stilde_text, "Assumed dimensions (misspec mode)")
      ->capture_default_str();
  ceval->add_option("--qlist", eval.qlist_text, "Covariate counts (two-stage mode)")
      ->capture_default_str();
  ceval->add_option("--replicates", eval.replicates, "Replicate datasets")->capture_default_str();
  ceval->add_option("--seed", eval.seed, "Experiment seed")->capture_default_str();
  add_fit_options(ceval, eval.fit_cfg, /*with_s_and_seed=*/false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  omp_set_num_threads(std::max(1, threads));

  try {
    if (csim->parsed()) return run_simulate(sim);
    if (crank->parsed()) return run_rank(rank);
    if (cfit->parsed()) return run_fit(fita);
    if (csum->parsed()) return run_summarize(summ);
    if (ceval->parsed()) return run_eval(eval);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
