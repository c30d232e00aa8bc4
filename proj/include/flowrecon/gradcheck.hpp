#pragma once

#include <functional>

#include "flowrecon/tensor.hpp"

namespace flowrecon {

/// Central-difference gradient of a scalar function of a tensor.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& loss, const Tensor& x,
                        double h = 1e-5);

/// Max-norm relative error ||a - b||_inf / max(||b||_inf, floor).
double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-12);

}  // namespace flowrecon
