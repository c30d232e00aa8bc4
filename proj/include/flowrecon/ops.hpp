#pragma once

#include <functional>
#include <span>
#include <vector>

#include "flowrecon/tensor.hpp"

namespace flowrecon {

/// Convolution weights laid out [out][in][ky][kx] with an odd square extent.
struct ConvKernel {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t extent = 1;
  std::vector<double> weights;

  ConvKernel() = default;
  ConvKernel(std::size_t out, std::size_t in, std::size_t k)
      : out_channels(out), in_channels(in), extent(k), weights(out * in * k * k, 0.0) {}
  double& at(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) {
    return weights[((o * in_channels + i) * extent + ky) * extent + kx];
  }
  double at(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) const {
    return weights[((o * in_channels + i) * extent + ky) * extent + kx];
  }
};

struct ConvGrads {
  Tensor input;
  std::vector<double> weights;
  std::vector<double> bias;
};

/// Same-padded, zero-boundary 2-D cross-correlation plus per-channel bias.
Tensor conv2d(const Tensor& x, const ConvKernel& kernel, std::span<const double> bias);
/// Pullback of conv2d for the output cotangent `dy`.
ConvGrads conv2d_vjp(const Tensor& x, const ConvKernel& kernel, const Tensor& dy);

/// ln(1 + e^x) evaluated as max(x, 0) + log1p(e^-|x|).
double softplus(double x);
double sigmoid(double x);
Tensor softplus(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Elementwise pullbacks: dy * f'(x).
Tensor softplus_vjp(const Tensor& x, const Tensor& dy);
Tensor sigmoid_vjp(const Tensor& x, const Tensor& dy);

/// A differentiable map together with its vector-Jacobian product.
struct DiffOp {
  std::function<Tensor(const Tensor&)> forward;
  std::function<Tensor(const Tensor& x, const Tensor& cotangent)> vjp;
};

DiffOp conv2d_op(ConvKernel kernel, std::vector<double> bias);
DiffOp softplus_op();
DiffOp sigmoid_op();
/// Composition: first `inner`, then `outer`.
DiffOp compose(DiffOp outer, DiffOp inner);

}  // namespace flowrecon
