#pragma once

#include <vector>

#include "flowrecon/imaging.hpp"
#include "flowrecon/tensor.hpp"

namespace flowrecon {

struct TvConfig {
  double epsilon = 1e-6;           // smoothing for the differentiable surrogate
  std::size_t prox_max_iter = 100;
  double prox_tolerance = 1e-8;    // relative change of the dual variable

  void validate() const;
};

/// Anisotropic TV: sum of |horizontal| + |vertical| neighbor differences per
/// channel, with no differences across the border.
double tv(const Tensor& f);
/// Smoothed TV: sum of sqrt(d^2 + eps^2) over the same differences.
double tv_smooth(const Tensor& f, double epsilon);
Tensor tv_grad(const Tensor& f, const TvConfig& config);

struct ProxResult {
  Tensor x;
  bool converged = false;
  std::size_t iterations = 0;
};

/// argmin_x 0.5 ||x - y||^2 + tau * tv(x) by dual fast gradient projection.
/// Returns the iterate with the lowest primal objective seen.
ProxResult tv_prox(const Tensor& y, double tau, const TvConfig& config);

struct FistaResult {
  Tensor image;
  std::vector<double> loss;  // objective after each iteration, loss[0] at the start
  std::size_t restarts = 0;
};

/// Largest eigenvalue of H^T H by power iteration.
double operator_norm_squared(const MriOperator& op, std::size_t iterations = 50, std::uint64_t seed = 1);

/// Minimizes ||g - H f||^2 + lambda * tv(f) with monotone FISTA (momentum is
/// reset whenever the prox step does not decrease the objective).
FistaResult fista_pls_tv(const MriOperator& op, const ComplexTensor& g, double lambda, std::size_t iterations,
                         const TvConfig& tv_config = {});

/// Orthonormal multilevel Haar coefficients. Sections 0..L-2 hold the detail
/// bands of analysis stages 1..L-1; section L-1 holds the stage-L details
/// followed by the coarsest approximation. Each stage stores its bands as
/// (horizontal, vertical, diagonal) planes, channel-major.
struct HaarPyramid {
  Shape shape;
  std::size_t levels = 0;
  std::vector<std::vector<double>> sections;

  std::vector<double> flat() const;
  std::size_t size() const;
};

HaarPyramid haar_forward(const Tensor& f, std::size_t levels);
Tensor haar_inverse(const HaarPyramid& p);
/// Zeros sections 1..i (finest first); i must be < levels.
HaarPyramid haar_truncate(const HaarPyramid& p, std::size_t i);

}  // namespace flowrecon
