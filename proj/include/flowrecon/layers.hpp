#pragma once

#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "flowrecon/ops.hpp"
#include "flowrecon/rng.hpp"
#include "flowrecon/tensor.hpp"

namespace flowrecon {

/// Named reference to a parameter array owned by a layer.
struct ParamRef {
  std::string name;
  std::vector<double>* values;
};

/// Gradient accumulators for one layer, aligned with its params() order.
/// An empty span means "do not accumulate".
using GradSlots = std::span<std::vector<double>>;

// Every layer is written in the generative direction (latent -> image):
//   forward:  x -> y,  logdet += ln|det dy/dx|
//   inverse:  y -> x,  logdet -= ln|det dy/dx|
// forward_vjp / inverse_vjp pull back a cotangent on the output together with
// a scalar cotangent on the accumulated logdet.

/// Per-channel affine map y = exp(log_scale) * x + bias.
class ActNorm {
 public:
  static constexpr std::size_t kParamSlots = 2;
  ActNorm() = default;
  explicit ActNorm(std::size_t channels);

  Tensor forward(const Tensor& x, double& logdet) const;
  Tensor inverse(const Tensor& y, double& logdet) const;
  Tensor forward_vjp(const Tensor& x, const Tensor& dy, double dlogdet, GradSlots grads) const;
  Tensor inverse_vjp(const Tensor& y, const Tensor& dx, double dlogdet, GradSlots grads) const;

  /// Sets bias/scale so that inverse() maps `samples` to zero mean, unit variance per channel.
  void initialize_from(std::span<const Tensor> samples);

  std::vector<ParamRef> params();
  std::size_t channels() const { return log_scale_.size(); }
  std::vector<double>& log_scale() { return log_scale_; }
  std::vector<double>& bias() { return bias_; }

 private:
  std::vector<double> log_scale_;
  std::vector<double> bias_;
};

/// Invertible 1x1 channel mixing W = P * L * (U + diag(sign * exp(log_diag))),
/// L unit lower triangular, U strictly upper, P a fixed permutation.
class InvMix1x1 {
 public:
  static constexpr std::size_t kParamSlots = 3;
  InvMix1x1() = default;
  /// Initialized to a random rotation.
  InvMix1x1(std::size_t channels, Rng& rng);

  Tensor forward(const Tensor& x, double& logdet) const;
  Tensor inverse(const Tensor& y, double& logdet) const;
  Tensor forward_vjp(const Tensor& x, const Tensor& dy, double dlogdet, GradSlots grads) const;
  Tensor inverse_vjp(const Tensor& y, const Tensor& dx, double dlogdet, GradSlots grads) const;

  std::vector<ParamRef> params();
  std::size_t channels() const { return channels_; }
  /// Dense W, row-major.
  std::vector<double> matrix() const;
  std::vector<double> inverse_matrix() const;
  const std::vector<std::size_t>& permutation() const { return perm_; }
  const std::vector<double>& signs() const { return sign_; }
  void set_fixed(std::vector<std::size_t> perm, std::vector<double> sign);

 private:
  void accumulate_matrix_grad(const std::vector<double>& dw, double dlogdet_plane, GradSlots grads) const;

  std::size_t channels_ = 0;
  std::vector<std::size_t> perm_;  // row i of W is row perm_[i] of L*U
  std::vector<double> sign_;
  std::vector<double> lower_;      // C x C, strict lower part used
  std::vector<double> upper_;      // C x C, strict upper part used
  std::vector<double> log_diag_;
};

/// Affine coupling: one channel half passes through, the other is scaled by
/// gamma = c + (1 - c) * sigmoid(s + shift) in (c, 1] and shifted by t, where
/// (s, t) come from a conv-softplus-conv-softplus-conv network of the pass half.
class AffineCoupling {
 public:
  static constexpr std::size_t kParamSlots = 6;
  AffineCoupling() = default;
  AffineCoupling(std::size_t channels, std::size_t hidden, bool pass_first, double floor, double shift,
                 Rng& rng);

  Tensor forward(const Tensor& x, double& logdet) const;
  Tensor inverse(const Tensor& y, double& logdet) const;
  Tensor forward_vjp(const Tensor& x, const Tensor& dy, double dlogdet, GradSlots grads) const;
  Tensor inverse_vjp(const Tensor& y, const Tensor& dx, double dlogdet, GradSlots grads) const;

  /// Per-element scale computed from the pass-through half of `x`.
  Tensor scales(const Tensor& x) const;

  std::vector<ParamRef> params();
  std::size_t channels() const { return channels_; }
  bool pass_first() const { return pass_first_; }
  double floor() const { return floor_; }
  double shift() const { return shift_; }
  /// True while the output convolution is still all zeros (identity coupling up to gamma0).
  bool output_is_zero() const;

 private:
  struct NetTrace {
    Tensor input, pre1, pre2, hidden1, hidden2, out;
  };
  std::pair<Tensor, Tensor> split(const Tensor& x) const;
  Tensor merge(const Tensor& pass, const Tensor& other) const;
  NetTrace run_net(const Tensor& pass) const;
  Tensor net_backward(const NetTrace& tr, const Tensor& dout, GradSlots grads) const;
  double gamma(double s_raw) const;
  double gamma_slope(double s_raw) const;

  std::size_t channels_ = 0;
  bool pass_first_ = true;
  double floor_ = 0.05;
  double shift_ = 2.0;
  ConvKernel k1_, k2_, k3_;
  std::vector<double> b1_, b2_, b3_;
};

using Layer = std::variant<ActNorm, InvMix1x1, AffineCoupling>;

/// (C, H, W) -> (4C, H/2, W/2); output channel 4c + 2dy + dx.
Tensor squeeze(const Tensor& x);
Tensor unsqueeze(const Tensor& x);

}  // namespace flowrecon
