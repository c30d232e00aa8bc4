#include "flowrecon/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "flowrecon/error.hpp"

namespace flowrecon {

double rmse(const Tensor& estimate, const Tensor& truth) {
  require_same_shape(estimate.shape(), truth.shape(), "rmse");
  double se = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = estimate.data()[i] - truth.data()[i];
    se += d * d;
  }
  return std::sqrt(se / static_cast<double>(truth.size()));
}

double ssim(const Tensor& estimate, const Tensor& truth, const SsimOptions& options) {
  const auto [lo, hi] = std::minmax_element(truth.data().begin(), truth.data().end());
  const double range = *hi - *lo;
  return ssim(estimate, truth, range > 0 ? range : 1.0, options);
}

double ssim(const Tensor& a, const Tensor& b, double data_range, const SsimOptions& options) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  const std::size_t win = options.window;
  if (win == 0 || a.height() < win || a.width() < win) {
    throw ConfigError("ssim: image " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                      " is smaller than the " + std::to_string(win) + "x" + std::to_string(win) + " window");
  }
  if (!(data_range > 0)) throw ConfigError("ssim: data range must be positive");

  std::vector<double> w(win * win);
  const double half = static_cast<double>(win - 1) / 2.0;
  double total = 0.0;
  for (std::size_t y = 0; y < win; ++y) {
    for (std::size_t x = 0; x < win; ++x) {
      const double dy = static_cast<double>(y) - half, dx = static_cast<double>(x) - half;
      w[y * win + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * options.sigma * options.sigma));
      total += w[y * win + x];
    }
  }
  for (auto& v : w) v /= total;

  const double c1 = (options.k1 * data_range) * (options.k1 * data_range);
  const double c2 = (options.k2 * data_range) * (options.k2 * data_range);
  const std::size_t oh = a.height() - win + 1, ow = a.width() - win + 1;
  double acc = 0.0;
  for (std::size_t c = 0; c < a.channels(); ++c) {
    for (std::size_t y0 = 0; y0 < oh; ++y0) {
      for (std::size_t x0 = 0; x0 < ow; ++x0) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (std::size_t y = 0; y < win; ++y) {
          for (std::size_t x = 0; x < win; ++x) {
            const double wt = w[y * win + x];
            const double va = a.at(c, y0 + y, x0 + x), vb = b.at(c, y0 + y, x0 + x);
            ma += wt * va;
            mb += wt * vb;
            saa += wt * va * va;
            sbb += wt * vb * vb;
            sab += wt * va * vb;
          }
        }
        const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
        acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
      }
    }
  }
  return acc / static_cast<double>(a.channels() * oh * ow);
}

}  // namespace flowrecon
