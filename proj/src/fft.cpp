#include "flowrecon/fft.hpp"

#include <cmath>
#include <numbers>

namespace flowrecon {
namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 transform, unnormalized. sign = -1 forward.
void fft1d(std::complex<double>* a, std::size_t n, std::size_t stride, int sign,
           std::vector<std::complex<double>>& buf) {
  buf.resize(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = a[i * stride];
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(buf[i], buf[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w(std::cos(ang * k), std::sin(ang * k));
        const auto u = buf[i + k];
        const auto v = buf[i + k + len / 2] * w;
        buf[i + k] = u + v;
        buf[i + k + len / 2] = u - v;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) a[i * stride] = buf[i];
}

ComplexTensor transform(const ComplexTensor& x, int sign) {
  const auto h = x.height();
  const auto w = x.width();
  if (!is_pow2(h) || !is_pow2(w)) {
    throw DimensionError("fft2 requires power-of-two extents, got " + to_string(x.shape()));
  }
  ComplexTensor out = x;
  std::vector<std::complex<double>> buf;
  const double scale = 1.0 / std::sqrt(static_cast<double>(h * w));
  for (std::size_t c = 0; c < x.channels(); ++c) {
    auto* plane = out.channel(c).data();
    for (std::size_t y = 0; y < h; ++y) fft1d(plane + y * w, w, 1, sign, buf);
    for (std::size_t col = 0; col < w; ++col) fft1d(plane + col, h, w, sign, buf);
  }
  for (auto& v : out.data()) v *= scale;
  return out;
}

}  // namespace

ComplexTensor fft2(const ComplexTensor& x) { return transform(x, -1); }
ComplexTensor ifft2(const ComplexTensor& x) { return transform(x, +1); }

ComplexTensor to_complex(const Tensor& x) {
  ComplexTensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i];
  return out;
}

Tensor real_part(const ComplexTensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i].real();
  return out;
}

}  // namespace flowrecon
