#pragma once

#include "flowrecon/tensor.hpp"

namespace flowrecon {

/// ||a - b||_2 / sqrt(n).
double rmse(const Tensor& estimate, const Tensor& truth);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean SSIM over all valid window positions (no padding), averaged over
/// channels. The dynamic range is max - min of `truth` (1 if it is flat).
double ssim(const Tensor& estimate, const Tensor& truth, const SsimOptions& options = {});
/// Same with an explicit dynamic range; symmetric in its two images.
double ssim(const Tensor& a, const Tensor& b, double data_range, const SsimOptions& options = {});

}  // namespace flowrecon
