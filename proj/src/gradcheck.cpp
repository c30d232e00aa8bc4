#include "flowrecon/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace flowrecon {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& loss, const Tensor& x, double h) {
  if (!(h > 0)) throw ConfigError("finite_diff_grad: step must be positive");
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = loss(probe);
    probe[i] = orig - h;
    const double down = loss(probe);
    probe[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  double diff = 0.0, scale = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return diff / scale;
}

}  // namespace flowrecon
