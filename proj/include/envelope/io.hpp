#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "envelope/eval.hpp"
#include "envelope/mcem.hpp"

namespace envelope::io {

/// CSV with a single header row; values are written with 17 significant
/// digits so that read(write(M)) reproduces M exactly.
void write_csv(const std::string& path, const Eigen::MatrixXd& m,
               const std::vector<std::string>& colnames);

struct CsvData {
  std::vector<std::string> colnames;
  Eigen::MatrixXd values;
};

/// Throws DataError naming the offending row/column on malformed input.
CsvData read_csv(const std::string& path);

std::string format_double(double v);  // 17 significant digits

/// fit.json: schema_version, the basis row-major, sigma2, the EM trace, a
/// config echo and the centering offsets. Writing then reading then writing
/// again is byte-identical.
void write_fit(const std::string& path, const EnvelopeFit& fit, const std::string& samples_path);
EnvelopeFit read_fit(const std::string& path);

void write_samples(const std::string& path, const CovRegSamples& samples);
CovRegSamples read_samples(const std::string& path);

/// Simulation manifest: seed, dimensions and the generating parameters.
void write_truth(const std::string& path, const SimConfig& cfg, const SimTruth& truth);
struct TruthManifest {
  SimConfig cfg;
  SimTruth truth;
};
TruthManifest read_truth(const std::string& path);

void write_experiment_csv(const std::string& path, const std::vector<ExperimentRow>& rows);

}  // namespace envelope::io
