#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "envelope/errors.hpp"
#include "envelope/eval.hpp"
#include "envelope/io.hpp"
#include "envelope/rng.hpp"

using namespace envelope;
namespace fs = std::filesystem;

#ifndef ENVELOPE_CLI_PATH
#define ENVELOPE_CLI_PATH "envelope"
#endif

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(ENVELOPE_CLI_PATH) + " " + args + " > " + log.string() +
                          " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("envelope_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_SUITE("io_cli") {

TEST_CASE("csv round trip is exact") {
  Rng rng = make_rng(401);
  Eigen::MatrixXd M = gaussian_matrix(17, 5, rng);
  M(0, 0) = 1.0 / 3.0;
  M(1, 1) = 1e-12;
  M(2, 2) = -9.87654321e11;
  M(3, 3) = 0.0;
  const fs::path d = fresh_dir("csv");
  io::write_csv((d / "m.csv").string(), M, {"a", "b", "c", "d", "e"});
  const auto back = io::read_csv((d / "m.csv").string());
  CHECK(back.colnames.size() == 5);
  CHECK(back.colnames[4] == "e");
  REQUIRE(back.values.rows() == M.rows());
  CHECK((back.values - M).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("malformed csv errors name the location") {
  const fs::path d = fresh_dir("badcsv");
  {
    std::ofstream out(d / "bad.csv");
    out << "a,b\n1.0,2.0\n3.0,oops\n";
  }
  try {
    io::read_csv((d / "bad.csv").string());
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("col 2") != std::string::npos);
  }
  {
    std::ofstream out(d / "ragged.csv");
    out << "a,b\n1.0\n";
  }
  CHECK_THROWS_AS(io::read_csv((d / "ragged.csv").string()), DataError);
  CHECK_THROWS_AS(io::read_csv((d / "missing.csv").string()), DataError);
}

TEST_CASE("fit.json writes, reads and rewrites byte-identically") {
  SimConfig sc;
  sc.n = 30;
  sc.p = 8;
  sc.s = 2;
  sc.q = 2;
  sc.seed = 5;
  const SimData data = simulate(sc);
  FitConfig cfg;
  cfg.s = 2;
  cfg.em_max_iters = 2;
  cfg.mcmc.n_iter = 120;
  cfg.mcmc.burn = 60;
  cfg.seed = 7;
  const EnvelopeFit f = fit(data.Y, data.X, cfg);

  const fs::path d = fresh_dir("fitjson");
  const std::string samples1 = (d / "samples.json").string();
  io::write_samples(samples1, f.samples);
  io::write_fit((d / "fit.json").string(), f, samples1);

  const EnvelopeFit g = io::read_fit((d / "fit.json").string());
  CHECK((g.V_hat.matrix() - f.V_hat.matrix()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.sigma2_hat == f.sigma2_hat);
  CHECK(g.config.seed == f.config.seed);
  REQUIRE(g.samples.draws.size() == f.samples.draws.size());
  CHECK((g.samples.draws[0].A - f.samples.draws[0].A).cwiseAbs().maxCoeff() == 0.0);

  io::write_fit((d / "fit2.json").string(), g, samples1);
  io::write_samples((d / "samples2.json").string(), g.samples);
  CHECK(slurp(d / "fit.json") == slurp(d / "fit2.json"));
  CHECK(slurp(d / "samples.json") == slurp(d / "samples2.json"));
}

TEST_CASE("truth manifest round trips") {
  SimConfig sc;
  sc.n = 10;
  sc.p = 6;
  sc.s = 2;
  sc.q = 2;
  sc.seed = 11;
  const SimData data = simulate(sc);
  const fs::path d = fresh_dir("truth");
  io::write_truth((d / "truth.json").string(), sc, data.truth);
  const auto t = io::read_truth((d / "truth.json").string());
  CHECK(t.cfg.n == sc.n);
  CHECK(t.cfg.K == sc.rank_terms());
  CHECK((t.truth.V.matrix() - data.truth.V.matrix()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((t.truth.eta - data.truth.eta).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cli: simulate is deterministic and validates dimensions") {
  const fs::path d = fresh_dir("cli_sim");
  const std::string flags = "simulate --n 25 --p 6 --s 2 --q 2 --tau 2 --sigma2 1 --seed 9 ";
  CHECK(run_cli(flags + "--out " + (d / "a").string(), d / "a.log") == 0);
  CHECK(run_cli(flags + "--out " + (d / "b").string(), d / "b.log") == 0);
  CHECK(slurp(d / "a" / "Y.csv") == slurp(d / "b" / "Y.csv"));
  CHECK(slurp(d / "a" / "X.csv") == slurp(d / "b" / "X.csv"));

  const auto y = io::read_csv((d / "a" / "Y.csv").string());
  CHECK(y.values.rows() == 25);
  CHECK(y.values.cols() == 6);
  CHECK(y.colnames[0] == "y1");

  const int rc = run_cli("simulate --p 4 --s 8 --out " + (d / "c").string(), d / "c.log");
  CHECK(rc == 2);
  CHECK(slurp(d / "c.log").find("s must be < p") != std::string::npos);
}

TEST_CASE("cli: full pipeline on a small instance") {
  const fs::path d = fresh_dir("cli_pipe");
  REQUIRE(run_cli("simulate --n 40 --p 8 --s 2 --q 2 --tau 3 --seed 3 --out " + d.string(),
                  d / "sim.log") == 0);

  REQUIRE(run_cli("rank --y " + (d / "Y.csv").string(), d / "rank.log") == 0);
  const std::string rank_out = slurp(d / "rank.log");
  CHECK(!rank_out.empty());

  REQUIRE(run_cli("fit --y " + (d / "Y.csv").string() + " --x " + (d / "X.csv").string() +
                      " --s 2 --em-max-iters 2 --mcmc-iters 150 --mcmc-burn 50 --cov-rank 2" +
                      " --seed 4 --out " + (d / "fit").string(),
                  d / "fit.log") == 0);
  CHECK(fs::exists(d / "fit" / "fit.json"));
  CHECK(fs::exists(d / "fit" / "samples.json"));

  REQUIRE(run_cli("eval --mode losses --fit " + (d / "fit" / "fit.json").string() + " --truth " +
                      (d / "truth.json").string() + " --x " + (d / "X.csv").string() + " --out " +
                      (d / "losses.csv").string(),
                  d / "eval.log") == 0);
  const auto losses = io::read_csv((d / "losses.csv").string());
  CHECK(losses.values.rows() == 40);
  CHECK(losses.values.col(1).minCoeff() >= 0.0);

  REQUIRE(run_cli("summarize --fit " + (d / "fit" / "fit.json").string() +
                      " --contrast \"2,0;0,2\" --at \"1,0\" --at \"0,1\" --dims 1,2 --top-m 3" +
                      " --out " + (d / "sum").string(),
                  d / "sum.log") == 0);
  for (const char* f : {"eigensamples.csv", "loadings.csv", "contours.csv"})
    CHECK(fs::exists(d / "sum" / f));

  // byte-identical rerun of fit
  REQUIRE(run_cli("fit --y " + (d / "Y.csv").string() + " --x " + (d / "X.csv").string() +
                      " --s 2 --em-max-iters 2 --mcmc-iters 150 --mcmc-burn 50 --cov-rank 2" +
                      " --seed 4 --out " + (d / "fit2").string(),
                  d / "fit2.log") == 0);
  CHECK(slurp(d / "fit" / "fit.json") != "");
  // paths inside differ (samples_path), so compare the samples payloads
  CHECK(slurp(d / "fit" / "samples.json") == slurp(d / "fit2" / "samples.json"));
}

TEST_CASE("cli: exact fit of the truth gives zero loss") {
  const fs::path d = fresh_dir("cli_truthfit");
  SimConfig sc;
  sc.n = 20;
  sc.p = 6;
  sc.s = 2;
  sc.q = 2;
  sc.seed = 21;
  const SimData data = simulate(sc);
  io::write_csv((d / "X.csv").string(), data.X, {"x1", "x2"});
  io::write_truth((d / "truth.json").string(), sc, data.truth);

  // fabricate a fit whose single draw equals the generating parameters
  EnvelopeFit f;
  f.V_hat = data.truth.V;
  f.sigma2_hat = data.truth.sigma2;
  CovRegDraw draw;
  draw.eta = data.truth.eta;
  draw.B = data.truth.Gamma;
  draw.A = data.truth.sigma2 * Eigen::MatrixXd::Identity(sc.s, sc.s);
  f.samples.draws = {draw};
  f.y_means = Eigen::RowVectorXd::Zero(sc.p);
  f.config.s = sc.s;
  io::write_samples((d / "samples.json").string(), f.samples);
  io::write_fit((d / "fit.json").string(), f, (d / "samples.json").string());

  REQUIRE(run_cli("eval --mode losses --fit " + (d / "fit.json").string() + " --truth " +
                      (d / "truth.json").string() + " --x " + (d / "X.csv").string() + " --out " +
                      (d / "losses.csv").string(),
                  d / "eval.log") == 0);
  const auto losses = io::read_csv((d / "losses.csv").string());
  CHECK(losses.values.col(1).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("cli: missing inputs and malformed arguments exit with the right codes") {
  const fs::path d = fresh_dir("cli_err");
  CHECK(run_cli("summarize --fit " + (d / "nope.json").string() +
                    " --contrast \"1;2\" --at \"1\" --out " + d.string(),
                d / "s.log") == 3);
  CHECK(run_cli("rank --y " + (d / "nope.csv").string(), d / "r.log") == 3);
  {
    std::ofstream out(d / "bad.csv");
    out << "a\nnot_a_number\n";
  }
  CHECK(run_cli("rank --y " + (d / "bad.csv").string(), d / "r2.log") == 3);
  CHECK(run_cli("frobnicate", d / "u.log") == 2);
  CHECK(run_cli("eval --mode nonsense --out " + (d / "x.csv").string(), d / "e.log") == 2);
}

TEST_CASE("cli: experiment table has the declared schema") {
  const fs::path d = fresh_dir("cli_exp");
  REQUIRE(run_cli(
              "eval --mode misspec --n 30 --p 6 --s 2 --q 2 --tau 2 --stilde 2,3 --replicates 2"
              " --seed 8 --em-max-iters 2 --mcmc-iters 120 --mcmc-burn 60 --warm-iters 80"
              " --warm-burn 40 --out " +
                  (d / "table.csv").string(),
              d / "m.log") == 0);
  std::ifstream in(d / "table.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "experiment,param,mean_pct_increase,ci_lo,ci_hi,M");
  std::string row;
  int rows = 0;
  while (std::getline(in, row))
    if (!row.empty()) ++rows;
  CHECK(rows == 2);
}

}  // TEST_SUITE
