#pragma once

#include <cstdint>
#include <vector>

#include "flowrecon/rng.hpp"
#include "flowrecon/tensor.hpp"

namespace flowrecon {

/// Random-ellipse phantom distribution used as the training and test corpus.
struct PhantomConfig {
  std::size_t extent = 32;
  std::size_t min_ellipses = 3;
  std::size_t max_ellipses = 7;
  double body_intensity_min = 0.5;
  double body_intensity_max = 0.8;
  double feature_intensity_min = 0.1;
  double feature_intensity_max = 0.35;
  double feature_axis_min = 0.08;   // fraction of the half extent
  double feature_axis_max = 0.35;
  double center_spread = 0.45;      // feature centers within this radius
  bool smooth_background = false;
  double background_level = 0.05;
  std::uint64_t seed = 1;

  void validate() const;
};

/// One phantom with values in [0, 1]. The first ellipse is a large body
/// outline; the rest are features added with random sign inside it.
Tensor gen_phantom(const PhantomConfig& config, Rng& rng);
/// Forces the ellipse count (0 gives a background-only image).
Tensor gen_phantom(const PhantomConfig& config, Rng& rng, std::size_t ellipse_count);

/// `count` phantoms drawn from one stream seeded by (config.seed, stream).
std::vector<Tensor> gen_dataset(const PhantomConfig& config, std::size_t count, std::uint64_t stream = 0);

}  // namespace flowrecon
