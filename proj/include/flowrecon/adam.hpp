#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace flowrecon {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;

  AdamState() = default;
  AdamState(std::size_t size, AdamHyper h)
      : hyper(h), first_moment(size, 0.0), second_moment(size, 0.0) {}
};

/// One bias-corrected Adam update of `params` in place. Throws NumericError
/// (naming the iteration) on a non-finite gradient.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad);

}  // namespace flowrecon
