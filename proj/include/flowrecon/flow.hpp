#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "flowrecon/layers.hpp"
#include "flowrecon/rng.hpp"
#include "flowrecon/tensor.hpp"

namespace flowrecon {

struct FlowConfig {
  Shape image{1, 32, 32};
  std::size_t levels = 3;
  std::size_t steps_per_level = 4;
  std::size_t hidden_channels = 32;
  double scale_floor = 0.05;
  double scale_shift = 2.0;

  void validate() const;
  friend bool operator==(const FlowConfig&, const FlowConfig&) = default;
};

/// Flat latent in canonical order (z^(1), ..., z^(L)); z^(1) is the
/// finest-scale section, emitted by the first split.
class LatentVector {
 public:
  LatentVector() = default;
  LatentVector(std::vector<std::size_t> section_sizes, std::vector<double> values);
  LatentVector(std::vector<std::size_t> section_sizes, double fill = 0.0);

  std::size_t size() const { return values_.size(); }
  std::size_t section_count() const { return sizes_.size(); }
  const std::vector<std::size_t>& section_sizes() const { return sizes_; }
  std::size_t section_offset(std::size_t l) const;
  std::span<double> section(std::size_t l);
  std::span<const double> section(std::size_t l) const;
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<double> values_;
};

struct ImageWithLogdet {
  Tensor image;
  double logdet = 0.0;
};

struct LatentWithLogdet {
  LatentVector z;
  double logdet = 0.0;
};

struct FlowLevel {
  Shape shape;                   // after squeeze
  std::size_t latent_channels;   // channels emitted into z^(l)
  std::vector<Layer> layers;     // encoding order: actnorm, mix, coupling per step
};

/// Standard i.i.d. Laplace prior: log p(z) = -sum|z_i| - n ln 2.
double laplace_log_prob(std::span<const double> z);

/// Multiscale invertible generator G: latent -> image.
class MultiscaleFlow {
 public:
  MultiscaleFlow() = default;
  MultiscaleFlow(FlowConfig config, std::uint64_t seed);

  const FlowConfig& config() const { return config_; }
  std::size_t dimension() const { return config_.image.size(); }
  std::vector<std::size_t> section_sizes() const;
  const std::vector<FlowLevel>& levels() const { return levels_; }
  std::vector<FlowLevel>& levels() { return levels_; }
  LatentVector zeros() const { return LatentVector(section_sizes()); }

  /// f = G(z) and ln|det dG/dz|. `layer_logdets`, when given, receives each
  /// layer's contribution in generative order.
  ImageWithLogdet forward(const LatentVector& z, std::vector<double>* layer_logdets = nullptr) const;
  /// z = G^{-1}(f) and ln|det dG/dz| at that z.
  LatentWithLogdet inverse(const Tensor& f) const;
  Tensor sample(Rng& rng, double temperature) const;
  double log_prob(const Tensor& f) const;

  /// Pullback of a cotangent on f = G(z) to a cotangent on z.
  LatentVector vjp_latent(const LatentVector& z, const Tensor& cotangent) const;
  /// Same pullback, also returning G(z) from the shared forward pass.
  LatentVector forward_and_vjp(const LatentVector& z, const std::function<Tensor(const Tensor&)>& cotangent_of,
                               Tensor* image_out) const;

  /// Negative log-likelihood -log p_f(f) and its gradient with respect to
  /// every parameter (aligned with parameters()).
  double nll_with_grad(const Tensor& f, std::vector<std::vector<double>>* grads) const;

  std::vector<ParamRef> parameters();
  std::vector<std::vector<double>> zero_grads();
  std::size_t parameter_count();

  /// Data-dependent ActNorm initialization from a batch of images.
  void initialize_actnorm(std::span<const Tensor> batch);
  /// Adds N(0, scale^2) noise to every parameter (used to emulate trained weights in tests).
  void perturb_parameters(Rng& rng, double scale);

  std::string layer_name(std::size_t level, std::size_t layer) const;

 private:
  Tensor latent_section_tensor(const LatentVector& z, std::size_t level) const;

  FlowConfig config_;
  std::vector<FlowLevel> levels_;
};

}  // namespace flowrecon
