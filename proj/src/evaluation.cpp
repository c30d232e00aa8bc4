#include "flowrecon/evaluation.hpp"

#include <cmath>
#include <cstdio>

#include "flowrecon/parallel.hpp"

namespace flowrecon {

Metrics score(const Tensor& estimate, const Tensor& truth) { return Metrics{rmse(estimate, truth), ssim(estimate, truth)}; }

std::vector<BiasVarianceResult> bias_variance(const Reconstructor& recon, const Tensor& truth, const MriOperator& op,
                                              const NoiseModel& noise, std::size_t d, const std::vector<double>& mus) {
  if (d < 2) throw ConfigError("bias_variance: need at least 2 noise realizations");
  if (mus.empty()) throw ConfigError("bias_variance: empty mu sweep");
  const auto clean = op.apply(truth);
  std::vector<ComplexTensor> measurements(d);
  for (std::size_t i = 0; i < d; ++i) {
    Rng rng(derive_seed(noise.seed, i));
    measurements[i] = add_noise(op, clean, noise.snr_db, rng);
  }

  std::vector<BiasVarianceResult> out;
  for (double mu : mus) {
    BiasVarianceResult r;
    r.mu = mu;
    r.d = d;
    std::vector<Tensor> estimates(d);
    try {
      parallel_for(d, [&](std::size_t i) {
        estimates[i] = recon(measurements[i], mu);
        require_same_shape(estimates[i].shape(), truth.shape(), "bias_variance estimate");
      });
    } catch (const std::exception& e) {
      r.error = e.what();
      out.push_back(std::move(r));
      continue;
    }
    // Welford: identical estimates give exactly zero variance and a mean equal to them.
    Tensor mean = estimates[0];
    Tensor m2(truth.shape());
    for (std::size_t i = 1; i < d; ++i) {
      const double count = static_cast<double>(i + 1);
      for (std::size_t p = 0; p < truth.size(); ++p) {
        const double x = estimates[i].data()[p];
        const double delta = x - mean.data()[p];
        mean.data()[p] += delta / count;
        m2.data()[p] += delta * (x - mean.data()[p]);
      }
    }
    r.bias = mean - truth;
    r.variance = (1.0 / static_cast<double>(d - 1)) * m2;
    const double n = static_cast<double>(truth.size());
    for (std::size_t p = 0; p < truth.size(); ++p) {
      r.avg_sq_bias += r.bias.data()[p] * r.bias.data()[p];
      r.avg_variance += r.variance.data()[p];
    }
    r.avg_sq_bias /= n;
    r.avg_variance /= n;
    out.push_back(std::move(r));
  }
  return out;
}

SweepResult sweep(const std::function<Metrics(const SweepPoint&)>& method, const std::vector<SweepPoint>& grid) {
  if (grid.empty()) throw ConfigError("sweep: empty grid");
  SweepResult result;
  result.rows.resize(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    auto& row = result.rows[i];
    row.point = grid[i];
    try {
      row.metrics = method(grid[i]);
    } catch (const std::exception& e) {
      row.error = e.what();
      row.metrics = Metrics{};
    }
  });
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const auto& row = result.rows[i];
    if (!row.error.empty() || !std::isfinite(row.metrics.rmse)) continue;
    if (result.best == SweepResult::npos || row.metrics.rmse < result.rows[result.best].metrics.rmse) result.best = i;
  }
  return result;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

// Quotes a text field only when it would break the row.
std::string field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

}  // namespace

void write_metrics_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "method,mask,snr_db,k,mu,lambda,rmse,ssim\n";
  for (const auto& r : rows) {
    const auto& p = r.point;
    out << field(p.method) << ',' << field(p.mask) << ',' << format_number(p.snr_db) << ',' << p.k << ','
        << format_number(p.mu) << ',' << format_number(p.lambda) << ',' << format_number(r.metrics.rmse) << ','
        << format_number(r.metrics.ssim) << '\n';
  }
}

void write_bias_variance_csv(std::ostream& out, const std::vector<BiasVarianceResult>& rows) {
  out << "mu,avg_sq_bias,avg_variance,d\n";
  for (const auto& r : rows) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out << format_number(r.mu) << ',' << format_number(r.error.empty() ? r.avg_sq_bias : nan) << ','
        << format_number(r.error.empty() ? r.avg_variance : nan) << ',' << r.d << '\n';
  }
}

void write_trace_csv(std::ostream& out, const std::vector<LossTerms>& trace) {
  out << "iteration,data_term,tv_term,total\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out << i << ',' << format_number(trace[i].data) << ',' << format_number(trace[i].tv) << ','
        << format_number(trace[i].total) << '\n';
  }
}

void write_truncation_csv(std::ostream& out, const std::string& transform, const std::vector<TruncationRow>& rows,
                          bool header) {
  if (header) out << "transform,fraction,mean_rmse,mean_ssim\n";
  for (const auto& r : rows) {
    out << field(transform) << ',' << format_number(r.fraction) << ',' << format_number(r.mean_rmse) << ','
        << format_number(r.mean_ssim) << '\n';
  }
}

}  // namespace flowrecon
