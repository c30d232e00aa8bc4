#include "flowrecon/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "flowrecon/fft.hpp"

namespace flowrecon {
namespace {

constexpr double kRatioTolerance = 0.10;

bool ratio_ok(const SamplingMask& m) {
  const double r = m.achieved_ratio();
  return std::abs(r - m.nominal_ratio) <= kRatioTolerance * m.nominal_ratio;
}

void check_request(std::size_t extent, double ratio) {
  if (extent == 0) throw ConfigError("mask extent must be positive");
  if (!(ratio >= 1.0) || !std::isfinite(ratio)) throw ConfigError("mask acceleration must be a finite value >= 1");
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::size_t SamplingMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

double SamplingMask::achieved_ratio() const {
  const auto m = count();
  return m == 0 ? std::numeric_limits<double>::infinity() : static_cast<double>(bits.size()) / static_cast<double>(m);
}

bool SamplingMask::sampled_fft(std::size_t row, std::size_t col) const {
  return at((row + extent / 2) % extent, (col + extent / 2) % extent);
}

SamplingMask full_mask(std::size_t extent) {
  check_request(extent, 1.0);
  return SamplingMask{extent, std::vector<std::uint8_t>(extent * extent, 1), 1.0, "full", 0};
}

SamplingMask poisson_disc_mask(std::size_t extent, double ratio, double calibration_radius, Rng& rng) {
  check_request(extent, ratio);
  const std::uint64_t seed = rng.next();
  const double n = static_cast<double>(extent);
  const double calib = calibration_radius < 0 ? 0.08 * n : calibration_radius;
  SamplingMask base{extent, std::vector<std::uint8_t>(extent * extent, 0), ratio,
                    "poisson_disc(R=" + fmt(ratio) + ", calibration_radius=" + fmt(calib) + ")", seed};
  if (ratio == 1.0) {
    base.bits.assign(base.bits.size(), 1);
    return base;
  }

  const double c = static_cast<double>(extent / 2);
  auto dist = [&](std::size_t idx) {
    return std::hypot(static_cast<double>(idx / extent) - c, static_cast<double>(idx % extent) - c);
  };
  std::vector<std::size_t> calibration, candidates;
  for (std::size_t i = 0; i < extent * extent; ++i) (dist(i) <= calib ? calibration : candidates).push_back(i);
  // One dart order per mask, shared by every slope tried.
  Rng order_rng(seed);
  for (std::size_t i = candidates.size(); i > 1; --i) {
    std::swap(candidates[i - 1],
              candidates[static_cast<std::size_t>(order_rng.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);
  }

  auto generate = [&](double slope) {
    SamplingMask m = base;
    std::vector<std::size_t> accepted = calibration;
    for (auto i : calibration) m.bits[i] = 1;
    for (auto p : candidates) {
      const double r = slope * dist(p);
      const double py = static_cast<double>(p / extent), px = static_cast<double>(p % extent);
      bool free = true;
      for (auto q : accepted) {
        const double dy = py - static_cast<double>(q / extent), dx = px - static_cast<double>(q % extent);
        if (dx * dx + dy * dy < r * r) {
          free = false;
          break;
        }
      }
      if (free) {
        accepted.push_back(p);
        m.bits[p] = 1;
      }
    }
    return m;
  };

  const double target = n * n / ratio;
  double lo = 0.0, hi = 0.05;
  while (static_cast<double>(generate(hi).count()) > target) {
    hi *= 2.0;
    if (hi > 1e3) break;
  }
  for (int iter = 0; iter < 60; ++iter) {
    const double mid = 0.5 * (lo + hi);
    auto m = generate(mid);
    if (ratio_ok(m)) return m;
    (static_cast<double>(m.count()) > target ? lo : hi) = mid;
  }
  for (double s : {lo, hi}) {
    auto m = generate(s);
    if (ratio_ok(m)) return m;
  }
  throw MaskGenerationError("poisson_disc_mask: cannot reach R=" + fmt(ratio) + " within 10% at extent " +
                            std::to_string(extent));
}

SamplingMask cartesian_mask(std::size_t extent, double ratio, std::size_t center_lines, Rng& rng) {
  check_request(extent, ratio);
  const std::uint64_t seed = rng.next();
  SamplingMask m{extent, std::vector<std::uint8_t>(extent * extent, 0), ratio,
                 "cartesian(R=" + fmt(ratio) + ", center_lines=" + std::to_string(center_lines) + ")", seed};
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(extent) / ratio)));
  const std::size_t band = std::min(center_lines, extent);
  std::vector<bool> column(extent, false);
  const std::size_t first = extent / 2 - std::min(extent / 2, band / 2);
  for (std::size_t j = 0; j < band; ++j) column[first + j] = true;
  std::vector<std::size_t> rest;
  for (std::size_t j = 0; j < extent; ++j) {
    if (!column[j]) rest.push_back(j);
  }
  Rng pick(seed);
  for (std::size_t k = band; k < keep && !rest.empty(); ++k) {
    const auto idx = static_cast<std::size_t>(pick.uniform_int(0, static_cast<std::int64_t>(rest.size() - 1)));
    column[rest[idx]] = true;
    rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(idx));
  }
  for (std::size_t r = 0; r < extent; ++r) {
    for (std::size_t j = 0; j < extent; ++j) m.bits[r * extent + j] = column[j] ? 1 : 0;
  }
  if (!ratio_ok(m)) {
    throw MaskGenerationError("cartesian_mask: " + std::to_string(m.count() / extent) + " columns give R=" +
                              fmt(m.achieved_ratio()) + ", outside 10% of " + fmt(ratio));
  }
  return m;
}

std::string to_pbm(const SamplingMask& mask) {
  std::ostringstream os;
  os << "P1\n" << mask.extent << ' ' << mask.extent << '\n';
  for (std::size_t r = 0; r < mask.extent; ++r) {
    for (std::size_t c = 0; c < mask.extent; ++c) os << (c ? " " : "") << (mask.at(r, c) ? '1' : '0');
    os << '\n';
  }
  return os.str();
}

void write_pbm(const std::string& path, const SamplingMask& mask) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << to_pbm(mask);
  if (!out) throw IoError("failed writing '" + path + "'");
}

MriOperator::MriOperator(SamplingMask mask, ChannelMode mode) : mask_(std::move(mask)), mode_(mode) {
  const auto n = mask_.extent;
  if (n == 0 || mask_.bits.size() != n * n) throw DimensionError("MriOperator: mask is not a square grid");
  fft_mask_.resize(n * n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) fft_mask_[r * n + c] = mask_.sampled_fft(r, c) ? 1.0 : 0.0;
  }
}

Shape MriOperator::image_shape() const {
  return Shape{mode_ == ChannelMode::Real ? 1u : 2u, mask_.extent, mask_.extent};
}

ComplexTensor MriOperator::apply(const Tensor& f) const {
  require_same_shape(f.shape(), image_shape(), "MriOperator::apply image");
  ComplexTensor x(measurement_shape());
  const auto plane = x.size();
  if (mode_ == ChannelMode::Real) {
    for (std::size_t i = 0; i < plane; ++i) x.data()[i] = f.data()[i];
  } else {
    for (std::size_t i = 0; i < plane; ++i) x.data()[i] = {f.data()[i], f.data()[plane + i]};
  }
  auto g = fft2(x);
  for (std::size_t i = 0; i < plane; ++i) g.data()[i] *= fft_mask_[i];
  return g;
}

Tensor MriOperator::adjoint(const ComplexTensor& g) const {
  require_same_shape(g.shape(), measurement_shape(), "MriOperator::adjoint measurement");
  ComplexTensor masked = g;
  const auto plane = masked.size();
  for (std::size_t i = 0; i < plane; ++i) masked.data()[i] *= fft_mask_[i];
  const auto x = ifft2(masked);
  Tensor f(image_shape());
  for (std::size_t i = 0; i < plane; ++i) {
    f.data()[i] = x.data()[i].real();
    if (mode_ == ChannelMode::TwoChannel) f.data()[plane + i] = x.data()[i].imag();
  }
  return f;
}

ComplexTensor add_noise(const MriOperator& op, const ComplexTensor& g, double snr_db, Rng& rng) {
  require_same_shape(g.shape(), op.measurement_shape(), "add_noise measurement");
  if (std::isinf(snr_db) && snr_db > 0) return g;
  if (!std::isfinite(snr_db)) throw ConfigError("add_noise: SNR must be finite or +inf");
  const auto n = op.mask().extent;
  double power = 0.0;
  std::size_t m = 0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      if (op.mask().sampled_fft(r, c)) {
        power += std::norm(g.data()[r * n + c]);
        ++m;
      }
    }
  }
  if (m == 0 || power == 0.0) throw DegenerateSignalError("add_noise: measurement has zero signal power");
  const double variance = power / static_cast<double>(m) * std::pow(10.0, -snr_db / 10.0);
  const double sd = std::sqrt(variance / 2.0);
  ComplexTensor out = g;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      if (!op.mask().sampled_fft(r, c)) continue;
      const double re = rng.normal(), im = rng.normal();
      out.data()[r * n + c] += std::complex<double>(sd * re, sd * im);
    }
  }
  return out;
}

ComplexTensor add_noise(const MriOperator& op, const ComplexTensor& g, const NoiseModel& model) {
  Rng rng(model.seed);
  return add_noise(op, g, model.snr_db, rng);
}

}  // namespace flowrecon
