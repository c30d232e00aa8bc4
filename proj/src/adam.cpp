#include "flowrecon/adam.hpp"

#include <cmath>
#include <string>

#include "flowrecon/error.hpp"

namespace flowrecon {

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad) {
  const std::size_t n = params.size();
  if (grad.size() != n || state.first_moment.size() != n || state.second_moment.size() != n) {
    throw DimensionError("adam_step: parameter, gradient and moment lengths differ");
  }
  const auto t = state.step + 1;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericError("adam_step: non-finite gradient at iteration " + std::to_string(t) +
                         ", component " + std::to_string(i));
    }
  }
  const auto& hp = state.hyper;
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < n; ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = hp.beta1 * m + (1.0 - hp.beta1) * grad[i];
    v = hp.beta2 * v + (1.0 - hp.beta2) * grad[i] * grad[i];
    const double mhat = m / c1;
    const double vhat = v / c2;
    params[i] -= hp.learning_rate * mhat / (std::sqrt(vhat) + hp.epsilon);
  }
  state.step = t;
}

}  // namespace flowrecon
