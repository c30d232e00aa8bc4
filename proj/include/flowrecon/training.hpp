#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flowrecon/adam.hpp"
#include "flowrecon/error.hpp"
#include "flowrecon/flow.hpp"
#include "flowrecon/phantom.hpp"

namespace flowrecon {

class TrainingError : public NumericError {
 public:
  using NumericError::NumericError;
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  std::size_t dataset_size = 200;
  AdamHyper adam{1e-3, 0.9, 0.999, 1e-8};
  std::uint64_t seed = 1;

  void validate() const;
};

/// Mean over the batch of ln|det dG/dz| - log p_z(z), z = G^{-1}(f).
double nll(const MultiscaleFlow& flow, std::span<const Tensor> batch);

struct NllGradient {
  double value = 0.0;
  std::vector<std::vector<double>> grads;  // aligned with MultiscaleFlow::parameters()
};

/// Batch-mean NLL and its parameter gradient. Per-sample work may run in
/// parallel; the reduction is in sample order.
NllGradient nll_and_grad(MultiscaleFlow& flow, std::span<const Tensor> batch);

struct TrainResult {
  double initial_nll = 0.0;             // dataset mean before the first update
  std::vector<double> epoch_nll;        // mean batch NLL per epoch
};

/// Maximum-likelihood training on a phantom dataset drawn from `phantoms`.
TrainResult train(MultiscaleFlow& flow, const TrainConfig& config, const PhantomConfig& phantoms);
/// Same, on an explicit dataset.
TrainResult train(MultiscaleFlow& flow, const TrainConfig& config, std::span<const Tensor> dataset);

}  // namespace flowrecon
