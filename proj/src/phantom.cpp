#include "flowrecon/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "flowrecon/error.hpp"

namespace flowrecon {
namespace {

struct Ellipse {
  double cx, cy, a, b, cos_t, sin_t, intensity;

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double u = dx * cos_t + dy * sin_t;
    const double v = -dx * sin_t + dy * cos_t;
    return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
  }
};

Ellipse random_ellipse(Rng& rng, double cx, double cy, double axis_lo, double axis_hi, double intensity) {
  const double theta = rng.uniform(0.0, std::numbers::pi);
  return Ellipse{cx, cy, rng.uniform(axis_lo, axis_hi), rng.uniform(axis_lo, axis_hi), std::cos(theta),
                 std::sin(theta), intensity};
}

}  // namespace

void PhantomConfig::validate() const {
  if (extent == 0) throw ConfigError("phantom.extent must be positive");
  if (min_ellipses > max_ellipses) throw ConfigError("phantom.min_ellipses exceeds phantom.max_ellipses");
  if (body_intensity_min > body_intensity_max || feature_intensity_min > feature_intensity_max ||
      feature_axis_min > feature_axis_max) {
    throw ConfigError("phantom: a range has min > max");
  }
}

Tensor gen_phantom(const PhantomConfig& config, Rng& rng) {
  const auto count = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(config.min_ellipses), static_cast<std::int64_t>(config.max_ellipses)));
  return gen_phantom(config, rng, count);
}

Tensor gen_phantom(const PhantomConfig& config, Rng& rng, std::size_t ellipse_count) {
  config.validate();
  std::vector<Ellipse> ellipses;
  if (ellipse_count > 0) {
    ellipses.push_back(random_ellipse(rng, rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), 0.6, 0.9,
                                      rng.uniform(config.body_intensity_min, config.body_intensity_max)));
  }
  for (std::size_t e = 1; e < ellipse_count; ++e) {
    const double r = config.center_spread * std::sqrt(rng.uniform());
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    ellipses.push_back(random_ellipse(rng, r * std::cos(phi), r * std::sin(phi), config.feature_axis_min,
                                      config.feature_axis_max,
                                      sign * rng.uniform(config.feature_intensity_min, config.feature_intensity_max)));
  }
  double bg_fx = 0.0, bg_fy = 0.0, bg_phase = 0.0;
  if (config.smooth_background) {
    bg_fx = rng.uniform(0.5, 1.5);
    bg_fy = rng.uniform(0.5, 1.5);
    bg_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }

  const std::size_t n = config.extent;
  Tensor img(Shape{1, n, n});
  constexpr int kSub = 2;  // 2x2 supersampling per pixel
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      double acc = 0.0;
      for (int sy = 0; sy < kSub; ++sy) {
        for (int sx = 0; sx < kSub; ++sx) {
          const double px = 2.0 * (static_cast<double>(x) + (sx + 0.5) / kSub) / static_cast<double>(n) - 1.0;
          const double py = 2.0 * (static_cast<double>(y) + (sy + 0.5) / kSub) / static_cast<double>(n) - 1.0;
          double v = 0.0;
          for (const auto& e : ellipses) {
            if (e.contains(px, py)) v += e.intensity;
          }
          if (config.smooth_background) {
            v += config.background_level * (1.0 + std::sin(bg_fx * px + bg_fy * py + bg_phase)) * 0.5;
          }
          acc += v;
        }
      }
      img.at(0, y, x) = std::clamp(acc / (kSub * kSub), 0.0, 1.0);
    }
  }
  return img;
}

std::vector<Tensor> gen_dataset(const PhantomConfig& config, std::size_t count, std::uint64_t stream) {
  Rng rng(derive_seed(config.seed, stream));
  std::vector<Tensor> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(gen_phantom(config, rng));
  return out;
}

}  // namespace flowrecon
