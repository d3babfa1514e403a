#include "envelope/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "envelope/errors.hpp"

namespace envelope::io {

using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_csv(const std::string& path, const Eigen::MatrixXd& m,
               const std::vector<std::string>& colnames) {
  if ((Eigen::Index)colnames.size() != m.cols())
    throw std::invalid_argument("write_csv: one column name per column required");
  std::ofstream out(path);
  if (!out) throw DataError("write_csv: cannot open " + path);
  for (std::size_t j = 0; j < colnames.size(); ++j)
    out << (j ? "," : "") << colnames[j];
  out << "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      out << (j ? "," : "") << format_double(m(i, j));
    out << "\n";
  }
  if (!out) throw DataError("write_csv: write failed for " + path);
}

CsvData read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("read_csv: cannot open " + path);

  CsvData data;
  std::string line;
  if (!std::getline(in, line)) throw DataError("read_csv: " + path + " is empty");
  {
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) data.colnames.push_back(field);
  }
  const std::size_t ncol = data.colnames.size();
  if (ncol == 0) throw DataError("read_csv: " + path + " has an empty header");

  std::vector<double> values;
  std::size_t nrow = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++nrow;
    std::stringstream ss(line);
    std::string field;
    std::size_t col = 0;
    while (std::getline(ss, field, ',')) {
      ++col;
      if (col > ncol)
        throw DataError("read_csv: " + path + " row " + std::to_string(nrow) +
                        " has more than " + std::to_string(ncol) + " columns");
      char* end = nullptr;
      const double v = std::strtod(field.c_str(), &end);
      if (end == field.c_str() || *end != '\0')
        throw DataError("read_csv: " + path + " row " + std::to_string(nrow) + " col " +
                        std::to_string(col) + ": cannot parse '" + field + "'");
      values.push_back(v);
    }
    if (col != ncol)
      throw DataError("read_csv: " + path + " row " + std::to_string(nrow) + " has " +
                      std::to_string(col) + " columns, expected " + std::to_string(ncol));
  }

  data.values.resize(nrow, ncol);
  for (std::size_t i = 0; i < nrow; ++i)
    for (std::size_t j = 0; j < ncol; ++j) data.values(i, j) = values[i * ncol + j];
  return data;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data(m.size());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data[i * m.cols() + c] = m(i, c);
  j["data"] = data;
  return j;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if ((Eigen::Index)data.size() != rows * cols) throw DataError("matrix_from_json: size mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = data[i * cols + c];
  return m;
}

json config_to_json(const FitConfig& c) {
  json j;
  j["s"] = c.s;
  j["em_max_iters"] = c.em_max_iters;
  j["em_tol"] = c.em_tol;
  j["mcmc"] = {{"n_iter", c.mcmc.n_iter}, {"burn", c.mcmc.burn},   {"thin", c.mcmc.thin},
               {"chains", c.mcmc.chains}, {"warm_iter", c.mcmc.warm_iter},
               {"warm_burn", c.mcmc.warm_burn}};
  j["optimizer"] = {{"max_iters", c.optimizer.max_iters},
                    {"grad_tol", c.optimizer.grad_tol},
                    {"step_init", c.optimizer.step_init},
                    {"armijo_c", c.optimizer.armijo_c},
                    {"backtrack_factor", c.optimizer.backtrack_factor},
                    {"nonmonotone_window", c.optimizer.nonmonotone_window},
                    {"bb_step", c.optimizer.bb_step}};
  j["priors"] = {{"nu0", c.priors.nu0},
                 {"nu1", c.priors.nu1},
                 {"alpha", c.priors.alpha},
                 {"kappa", c.priors.kappa}};
  j["covreg_hyper"] = {{"tau_eta2", c.covreg_hyper.tau_eta2},
                       {"tau_B2", c.covreg_hyper.tau_B2},
                       {"nu_A", c.covreg_hyper.nu_A}};
  j["cov_rank"] = c.cov_rank;
  j["seed"] = c.seed;
  return j;
}

FitConfig config_from_json(const json& j) {
  FitConfig c;
  c.s = j.at("s").get<int>();
  c.em_max_iters = j.at("em_max_iters").get<int>();
  c.em_tol = j.at("em_tol").get<double>();
  const auto& m = j.at("mcmc");
  c.mcmc.n_iter = m.at("n_iter").get<int>();
  c.mcmc.burn = m.at("burn").get<int>();
  c.mcmc.thin = m.at("thin").get<int>();
  c.mcmc.chains = m.at("chains").get<int>();
  c.mcmc.warm_iter = m.at("warm_iter").get<int>();
  c.mcmc.warm_burn = m.at("warm_burn").get<int>();
  const auto& o = j.at("optimizer");
  c.optimizer.max_iters = o.at("max_iters").get<int>();
  c.optimizer.grad_tol = o.at("grad_tol").get<double>();
  c.optimizer.step_init = o.at("step_init").get<double>();
  c.optimizer.armijo_c = o.at("armijo_c").get<double>();
  c.optimizer.backtrack_factor = o.at("backtrack_factor").get<double>();
  c.optimizer.nonmonotone_window = o.at("nonmonotone_window").get<int>();
  c.optimizer.bb_step = o.at("bb_step").get<bool>();
  const auto& pr = j.at("priors");
  c.priors.nu0 = pr.at("nu0").get<double>();
  c.priors.nu1 = pr.at("nu1").get<double>();
  c.priors.alpha = pr.at("alpha").get<double>();
  c.priors.kappa = pr.at("kappa").get<double>();
  const auto& h = j.at("covreg_hyper");
  c.covreg_hyper.tau_eta2 = h.at("tau_eta2").get<double>();
  c.covreg_hyper.tau_B2 = h.at("tau_B2").get<double>();
  c.covreg_hyper.nu_A = h.at("nu_A").get<double>();
  c.cov_rank = j.at("cov_rank").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

json load_json(const std::string& path, const char* who) {
  std::ifstream in(path);
  if (!in) throw DataError(std::string(who) + ": cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw DataError(std::string(who) + ": " + path + " is not valid JSON: " + e.what());
  }
  return j;
}

void dump_json(const std::string& path, const json& j, const char* who) {
  std::ofstream out(path);
  if (!out) throw DataError(std::string(who) + ": cannot open " + path);
  out << j.dump(2) << "\n";
  if (!out) throw DataError(std::string(who) + ": write failed for " + path);
}

}  // namespace

void write_fit(const std::string& path, const EnvelopeFit& fit, const std::string& samples_path) {
  json j;
  j["schema_version"] = 1;
  j["V_hat"] = matrix_to_json(fit.V_hat.matrix());
  j["sigma2_hat"] = fit.sigma2_hat;
  j["converged"] = fit.converged;
  j["y_means"] = std::vector<double>(fit.y_means.data(), fit.y_means.data() + fit.y_means.size());
  j["config"] = config_to_json(fit.config);
  j["samples_path"] = samples_path;
  json trace = json::array();
  for (const auto& r : fit.trace) {
    trace.push_back({{"iteration", r.iteration},
                     {"objective", r.objective},
                     {"subspace_step", r.subspace_step},
                     {"mstep_trace", r.mstep_trace}});
  }
  j["trace"] = trace;
  dump_json(path, j, "write_fit");
}

EnvelopeFit read_fit(const std::string& path) {
  const json j = load_json(path, "read_fit");
  EnvelopeFit fit;
  try {
    if (j.at("schema_version").get<int>() != 1)
      throw DataError("read_fit: unsupported schema_version in " + path);
    fit.V_hat = StiefelBasis(matrix_from_json(j.at("V_hat")));
    fit.sigma2_hat = j.at("sigma2_hat").get<double>();
    fit.converged = j.at("converged").get<bool>();
    const auto ym = j.at("y_means").get<std::vector<double>>();
    fit.y_means = Eigen::Map<const Eigen::RowVectorXd>(ym.data(), ym.size());
    fit.config = config_from_json(j.at("config"));
    for (const auto& r : j.at("trace")) {
      EmIterationRecord rec;
      rec.iteration = r.at("iteration").get<int>();
      rec.objective = r.at("objective").get<double>();
      rec.subspace_step = r.at("subspace_step").get<double>();
      rec.mstep_trace = r.at("mstep_trace").get<std::vector<double>>();
      fit.trace.push_back(std::move(rec));
    }
    const std::string spath = j.at("samples_path").get<std::string>();
    if (!spath.empty()) fit.samples = read_samples(spath);
  } catch (const json::exception& e) {
    throw DataError("read_fit: " + path + " is missing fields: " + e.what());
  }
  return fit;
}

void write_samples(const std::string& path, const CovRegSamples& samples) {
  json draws = json::array();
  for (const auto& d : samples.draws) {
    json dj;
    dj["iteration"] = d.iteration;
    dj["log_post"] = d.log_post;
    dj["eta"] = matrix_to_json(d.eta);
    json bs = json::array();
    for (const auto& b : d.B) bs.push_back(matrix_to_json(b));
    dj["B"] = bs;
    dj["A"] = matrix_to_json(d.A);
    draws.push_back(std::move(dj));
  }
  json j;
  j["schema_version"] = 1;
  j["draws"] = draws;
  dump_json(path, j, "write_samples");
}

CovRegSamples read_samples(const std::string& path) {
  const json j = load_json(path, "read_samples");
  CovRegSamples samples;
  try {
    for (const auto& dj : j.at("draws")) {
      CovRegDraw d;
      d.iteration = dj.at("iteration").get<int>();
      d.log_post = dj.at("log_post").get<double>();
      d.eta = matrix_from_json(dj.at("eta"));
      for (const auto& bj : dj.at("B")) d.B.push_back(matrix_from_json(bj));
      d.A = matrix_from_json(dj.at("A"));
      samples.draws.push_back(std::move(d));
    }
  } catch (const json::exception& e) {
    throw DataError("read_samples: " + path + " is malformed: " + e.what());
  }
  return samples;
}

void write_truth(const std::string& path, const SimConfig& cfg, const SimTruth& truth) {
  json j;
  j["schema_version"] = 1;
  j["seed"] = cfg.seed;
  j["dims"] = {{"n", cfg.n}, {"p", cfg.p}, {"s", cfg.s}, {"q", cfg.q}, {"K", cfg.rank_terms()}};
  j["tau"] = cfg.tau;
  j["sigma2"] = cfg.sigma2;
  j["V"] = matrix_to_json(truth.V.matrix());
  j["eta"] = matrix_to_json(truth.eta);
  json gs = json::array();
  for (const auto& g : truth.Gamma) gs.push_back(matrix_to_json(g));
  j["Gamma"] = gs;
  dump_json(path, j, "write_truth");
}

TruthManifest read_truth(const std::string& path) {
  const json j = load_json(path, "read_truth");
  TruthManifest t;
  try {
    t.cfg.seed = j.at("seed").get<std::uint64_t>();
    const auto& d = j.at("dims");
    t.cfg.n = d.at("n").get<int>();
    t.cfg.p = d.at("p").get<int>();
    t.cfg.s = d.at("s").get<int>();
    t.cfg.q = d.at("q").get<int>();
    t.cfg.K = d.at("K").get<int>();
    t.cfg.tau = j.at("tau").get<double>();
    t.cfg.sigma2 = j.at("sigma2").get<double>();
    t.truth.V = StiefelBasis(matrix_from_json(j.at("V")));
    t.truth.eta = matrix_from_json(j.at("eta"));
    for (const auto& g : j.at("Gamma")) t.truth.Gamma.push_back(matrix_from_json(g));
    t.truth.sigma2 = t.cfg.sigma2;
  } catch (const json::exception& e) {
    throw DataError("read_truth: " + path + " is malformed: " + e.what());
  }
  return t;
}

void write_experiment_csv(const std::string& path, const std::vector<ExperimentRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("write_experiment_csv: cannot open " + path);
  out << "experiment,param,mean_pct_increase,ci_lo,ci_hi,M\n";
  for (const auto& r : rows)
    out << r.experiment << "," << format_double(r.param) << ","
        << format_double(r.mean_pct_increase) << "," << format_double(r.ci_lo) << ","
        << format_double(r.ci_hi) << "," << r.replicates << "\n";
  if (!out) throw DataError("write_experiment_csv: write failed for " + path);
}

}  // namespace envelope::io
