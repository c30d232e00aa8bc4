#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "flowrecon/error.hpp"
#include "flowrecon/rng.hpp"
#include "flowrecon/tensor.hpp"

namespace flowrecon {

/// A mask generator could not reach the requested acceleration.
class MaskGenerationError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Noise requested for a measurement with no signal power.
class DegenerateSignalError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Binary k-space sampling pattern on an extent x extent grid, stored with
/// the zero frequency at (extent/2, extent/2).
struct SamplingMask {
  std::size_t extent = 0;
  std::vector<std::uint8_t> bits;  // row-major, centered
  double nominal_ratio = 1.0;
  std::string descriptor;
  std::uint64_t seed = 0;

  std::size_t count() const;
  double achieved_ratio() const;  // n / m
  bool at(std::size_t row, std::size_t col) const { return bits[row * extent + col] != 0; }
  /// Mask value at an unshifted FFT index (zero frequency at (0, 0)).
  bool sampled_fft(std::size_t row, std::size_t col) const;
};

SamplingMask full_mask(std::size_t extent);

/// Fully sampled calibration disc plus variable-density dart throwing whose
/// exclusion radius grows linearly with distance from the center; the slope
/// is bisected until the ratio is within 10% of `ratio`. A negative
/// calibration radius selects the default of 8% of the extent.
SamplingMask poisson_disc_mask(std::size_t extent, double ratio, double calibration_radius, Rng& rng);
/// Full columns: a center band of `center_lines` plus uniformly random columns.
SamplingMask cartesian_mask(std::size_t extent, double ratio, std::size_t center_lines, Rng& rng);

/// Plain-text PBM ("P1"); 1 marks a sampled location.
std::string to_pbm(const SamplingMask& mask);
void write_pbm(const std::string& path, const SamplingMask& mask);

enum class ChannelMode { Real, TwoChannel };

/// H f = mask * fft2(f). In two-channel mode f has channels (re, im).
class MriOperator {
 public:
  MriOperator(SamplingMask mask, ChannelMode mode = ChannelMode::Real);

  const SamplingMask& mask() const { return mask_; }
  ChannelMode mode() const { return mode_; }
  Shape image_shape() const;
  Shape measurement_shape() const { return Shape{1, mask_.extent, mask_.extent}; }
  std::size_t measurement_count() const { return mask_.count(); }

  ComplexTensor apply(const Tensor& f) const;
  Tensor adjoint(const ComplexTensor& g) const;
  /// Operator norm squared ||H||^2 (1 unless the mask is empty).
  double norm_squared() const { return mask_.count() > 0 ? 1.0 : 0.0; }

 private:
  SamplingMask mask_;
  ChannelMode mode_;
  std::vector<double> fft_mask_;  // unshifted layout
};

struct NoiseModel {
  double snr_db = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
};

/// Circular complex Gaussian noise on sampled entries only, variance
/// mean(|g_sampled|^2) * 10^(-snr/10) split equally between real and
/// imaginary parts. +inf SNR returns g unchanged.
ComplexTensor add_noise(const MriOperator& op, const ComplexTensor& g, double snr_db, Rng& rng);
ComplexTensor add_noise(const MriOperator& op, const ComplexTensor& g, const NoiseModel& model);

}  // namespace flowrecon
