#pragma once

#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "flowrecon/imaging.hpp"
#include "flowrecon/metrics.hpp"
#include "flowrecon/reconstruct.hpp"

namespace flowrecon {

struct Metrics {
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double ssim = std::numeric_limits<double>::quiet_NaN();
};

Metrics score(const Tensor& estimate, const Tensor& truth);

/// Reconstructs an image from noisy measurements at regularization weight mu.
using Reconstructor = std::function<Tensor(const ComplexTensor& measurements, double mu)>;

struct BiasVarianceResult {
  double mu = 0.0;
  std::size_t d = 0;
  Tensor bias;       // mean estimate minus truth
  Tensor variance;   // unbiased per-pixel sample variance
  double avg_sq_bias = 0.0;
  double avg_variance = 0.0;
  std::string error;  // non-empty when this mu was aborted
};

/// d noise realizations per mu; realization i uses seed derive_seed(noise.seed, i)
/// for every mu, so the curve compares weights on identical noise.
std::vector<BiasVarianceResult> bias_variance(const Reconstructor& recon, const Tensor& truth, const MriOperator& op,
                                              const NoiseModel& noise, std::size_t d, const std::vector<double>& mus);

struct SweepPoint {
  std::string method;
  std::string mask;
  double snr_db = std::numeric_limits<double>::infinity();
  std::size_t k = 0;
  double mu = 0.0;
  double lambda = 0.0;
};

struct SweepRow {
  SweepPoint point;
  Metrics metrics;
  std::string error;
};

struct SweepResult {
  std::vector<SweepRow> rows;   // grid order
  std::size_t best = npos;      // index of the lowest-RMSE successful row
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
};

/// Evaluates every grid point (possibly in parallel); a failing cell is
/// recorded with its error and skipped when choosing the best row.
SweepResult sweep(const std::function<Metrics(const SweepPoint&)>& method, const std::vector<SweepPoint>& grid);

/// Shortest decimal text that round-trips the double (17 significant digits).
std::string format_number(double v);

void write_metrics_csv(std::ostream& out, const std::vector<SweepRow>& rows);
void write_bias_variance_csv(std::ostream& out, const std::vector<BiasVarianceResult>& rows);
void write_trace_csv(std::ostream& out, const std::vector<LossTerms>& trace);
void write_truncation_csv(std::ostream& out, const std::string& transform, const std::vector<TruncationRow>& rows,
                          bool header = true);

}  // namespace flowrecon
