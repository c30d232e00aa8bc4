#pragma once

#include "flowrecon/tensor.hpp"

namespace flowrecon {

/// Unitary 2-D DFT of every channel (scaled by 1/sqrt(height*width)).
/// Height and width must be powers of two.
ComplexTensor fft2(const ComplexTensor& x);
ComplexTensor ifft2(const ComplexTensor& x);

ComplexTensor to_complex(const Tensor& x);
Tensor real_part(const ComplexTensor& x);

}  // namespace flowrecon
