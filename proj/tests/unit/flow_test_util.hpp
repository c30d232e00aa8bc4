#pragma once

#include <cmath>
#include <numeric>
#include <limits>
#include <vector>

#include "flowrecon/flow.hpp"

namespace flowrecon::testing {

inline FlowConfig small_config(std::size_t h, std::size_t w, std::size_t levels, std::size_t steps = 4,
                               std::size_t hidden = 8) {
  FlowConfig c;
  c.image = Shape{1, h, w};
  c.levels = levels;
  c.steps_per_level = steps;
  c.hidden_channels = hidden;
  return c;
}

/// Replaces every 1x1 mixing with the identity matrix.
inline void make_mixing_identity(MultiscaleFlow& flow) {
  for (auto& lvl : flow.levels()) {
    for (auto& layer : lvl.layers) {
      if (auto* mix = std::get_if<InvMix1x1>(&layer)) {
        const auto n = mix->channels();
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        mix->set_fixed(perm, std::vector<double>(n, 1.0));
        for (auto& p : mix->params()) std::fill(p.values->begin(), p.values->end(), 0.0);
      }
    }
  }
}

inline LatentVector random_latent(const MultiscaleFlow& flow, Rng& rng, double scale = 1.0) {
  LatentVector z = flow.zeros();
  for (auto& v : z.values()) v = scale * rng.laplace();
  return z;
}

inline Tensor random_image(const Shape& s, Rng& rng) {
  Tensor t(s);
  for (auto& v : t.data()) v = rng.uniform();
  return t;
}

/// ln|det A| by Gaussian elimination with partial pivoting (row-major n x n).
inline double log_abs_det(std::vector<double> a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a[i * n + k]) > std::abs(a[p * n + k])) p = i;
    for (std::size_t j = 0; j < n; ++j) std::swap(a[k * n + j], a[p * n + j]);
    acc += std::log(std::abs(a[k * n + k]));
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a[i * n + k] / a[k * n + k];
      for (std::size_t j = k; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
    }
  }
  return acc;
}

/// Full Jacobian dG/dz assembled column by column with central differences.
inline std::vector<double> numeric_jacobian(const MultiscaleFlow& flow, const LatentVector& z, double h = 1e-5) {
  const std::size_t n = z.size();
  std::vector<double> jac(n * n);
  for (std::size_t j = 0; j < n; ++j) {
    LatentVector up = z, down = z;
    up[j] += h;
    down[j] -= h;
    const auto fu = flow.forward(up).image;
    const auto fd = flow.forward(down).image;
    for (std::size_t i = 0; i < n; ++i) jac[i * n + j] = (fu[i] - fd[i]) / (2 * h);
  }
  return jac;
}

}  // namespace flowrecon::testing
