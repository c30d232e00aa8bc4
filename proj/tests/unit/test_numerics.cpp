#include <cmath>
#include <numbers>

#include "doctest.h"
#include "flowrecon/adam.hpp"
#include "flowrecon/fft.hpp"
#include "flowrecon/gradcheck.hpp"
#include "flowrecon/ops.hpp"
#include "flowrecon/rng.hpp"

using namespace flowrecon;

namespace {

Tensor random_tensor(Shape s, Rng& rng) {
  Tensor t(s);
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

ComplexTensor random_complex(Shape s, Rng& rng) {
  ComplexTensor t(s);
  for (auto& v : t.data()) v = {rng.normal(), rng.normal()};
  return t;
}

// O(n^2) unitary DFT by direct summation.
ComplexTensor direct_dft(const ComplexTensor& x) {
  const auto h = x.height(), w = x.width();
  ComplexTensor out(x.shape());
  for (std::size_t u = 0; u < h; ++u) {
    for (std::size_t v = 0; v < w; ++v) {
      std::complex<long double> acc = 0;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t xx = 0; xx < w; ++xx) {
          const long double ang = -2.0L * std::numbers::pi_v<long double> *
                                  (static_cast<long double>(u * y) / h + static_cast<long double>(v * xx) / w);
          acc += std::complex<long double>(x.at(0, y, xx).real(), x.at(0, y, xx).imag()) *
                 std::complex<long double>(std::cos(ang), std::sin(ang));
        }
      }
      acc /= std::sqrt(static_cast<long double>(h * w));
      out.at(0, u, v) = {static_cast<double>(acc.real()), static_cast<double>(acc.imag())};
    }
  }
  return out;
}

// Quadruple loop same-padded convolution.
Tensor loop_conv(const Tensor& x, const ConvKernel& k, const std::vector<double>& b) {
  Tensor y(Shape{k.out_channels, x.height(), x.width()});
  const int r = static_cast<int>(k.extent / 2);
  for (std::size_t o = 0; o < k.out_channels; ++o) {
    for (int yy = 0; yy < static_cast<int>(x.height()); ++yy) {
      for (int xx = 0; xx < static_cast<int>(x.width()); ++xx) {
        double acc = b[o];
        for (std::size_t i = 0; i < k.in_channels; ++i) {
          for (int ky = 0; ky < static_cast<int>(k.extent); ++ky) {
            for (int kx = 0; kx < static_cast<int>(k.extent); ++kx) {
              const int sy = yy + ky - r, sx = xx + kx - r;
              if (sy < 0 || sx < 0 || sy >= static_cast<int>(x.height()) || sx >= static_cast<int>(x.width())) continue;
              acc += k.at(o, i, static_cast<std::size_t>(ky), static_cast<std::size_t>(kx)) *
                     x.at(i, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
            }
          }
        }
        y.at(o, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)) = acc;
      }
    }
  }
  return y;
}

ConvKernel random_kernel(std::size_t out, std::size_t in, std::size_t k, Rng& rng) {
  ConvKernel kern(out, in, k);
  for (auto& v : kern.weights) v = rng.normal();
  return kern;
}

double max_abs_diff(const ComplexTensor& a, const ComplexTensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// <u, J v> with J v by central differences, against <vjp(x, u), v>.
void check_adjoint(const DiffOp& op, const Tensor& x, Rng& rng) {
  const Tensor y = op.forward(x);
  const Tensor u = random_tensor(y.shape(), rng);
  const Tensor v = random_tensor(x.shape(), rng);
  const double h = 1e-5;
  const Tensor jv = (1.0 / (2 * h)) * (op.forward(x + h * v) - op.forward(x - h * v));
  const double lhs = dot(u.values(), jv.values());
  const double rhs = dot(op.vjp(x, u).values(), v.values());
  CHECK(std::abs(lhs - rhs) <= 1e-8 * std::max(1.0, std::abs(lhs)));
}

}  // namespace

TEST_CASE("fft2 of a constant 2x2 image is a scaled DC term") {
  ComplexTensor x(Shape{1, 2, 2}, std::complex<double>(1.0, 0.0));
  const auto X = fft2(x);
  CHECK(X[0].real() == doctest::Approx(2.0).epsilon(1e-15));
  for (std::size_t i = 1; i < 4; ++i) CHECK(std::abs(X[i]) < 1e-15);
}

TEST_CASE("fft2 is unitary and inverted by ifft2") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_complex(Shape{2, 16, 8}, rng);
    const auto X = fft2(x);
    CHECK(std::abs(norm2(X.values()) - norm2(x.values())) <= 1e-12 * norm2(x.values()));
    CHECK(max_abs_diff(ifft2(X), x) <= 1e-12);
  }
}

TEST_CASE("fft2 matches a direct-summation DFT") {
  Rng rng(11);
  const auto x = random_complex(Shape{1, 8, 8}, rng);
  CHECK(max_abs_diff(fft2(x), direct_dft(x)) <= 1e-10);
  const auto y = random_complex(Shape{1, 4, 8}, rng);
  CHECK(max_abs_diff(fft2(y), direct_dft(y)) <= 1e-10);
}

TEST_CASE("fft2 rejects non power-of-two extents") {
  CHECK_THROWS_AS(fft2(ComplexTensor(Shape{1, 6, 8})), DimensionError);
  CHECK_THROWS_AS(ifft2(ComplexTensor(Shape{1, 8, 3})), DimensionError);
}

TEST_CASE("conv2d identity and zero kernels") {
  Rng rng(3);
  const auto x = random_tensor(Shape{1, 5, 7}, rng);
  ConvKernel id(1, 1, 1);
  id.weights[0] = 1.0;
  const auto y = conv2d(x, id, std::vector<double>{0.0});
  CHECK(y.data() == x.data());
  ConvKernel zero(3, 1, 3);
  const auto z = conv2d(x, zero, std::vector<double>(3, 0.0));
  CHECK(z.shape() == Shape{3, 5, 7});
  for (double v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("conv2d matches the nested-loop oracle") {
  Rng rng(5);
  const auto x = random_tensor(Shape{2, 5, 5}, rng);
  const auto k = random_kernel(3, 2, 3, rng);
  std::vector<double> b{0.1, -0.2, 0.3};
  const auto y = conv2d(x, k, b);
  const auto ref = loop_conv(x, k, b);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - ref[i]) <= 1e-12);
  const auto k5 = random_kernel(1, 2, 5, rng);
  const auto y5 = conv2d(x, k5, std::vector<double>{0.0});
  const auto ref5 = loop_conv(x, k5, {0.0});
  for (std::size_t i = 0; i < y5.size(); ++i) CHECK(std::abs(y5[i] - ref5[i]) <= 1e-12);
}

TEST_CASE("conv2d error paths") {
  Tensor x(Shape{2, 4, 4});
  CHECK_THROWS_AS(conv2d(x, ConvKernel(1, 3, 3), std::vector<double>{0.0}), DimensionError);
  CHECK_THROWS_AS(conv2d(x, ConvKernel(1, 2, 2), std::vector<double>{0.0}), DimensionError);
}

TEST_CASE("softplus and sigmoid values") {
  CHECK(softplus(0.0) == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  CHECK(sigmoid(0.0) == 0.5);
  const long double ref50 = 50.0L + std::log1p(std::exp(-50.0L));
  CHECK(std::abs(softplus(50.0) - static_cast<double>(ref50)) <= 1e-12);
  CHECK(std::isfinite(softplus(1000.0)));
  CHECK(softplus(1000.0) == 1000.0);
  CHECK(softplus(-1000.0) >= 0.0);
  CHECK(sigmoid(-800.0) > 0.0 - 1e-300);
  CHECK(sigmoid(800.0) <= 1.0);
}

TEST_CASE("adam: zero gradient from a fresh state is a fixed point") {
  AdamState st(3, AdamHyper{});
  std::vector<double> p{1.0, -2.0, 3.0};
  const auto orig = p;
  std::vector<double> g(3, 0.0);
  for (int i = 0; i < 50; ++i) adam_step(st, p, g);
  CHECK(p == orig);
  CHECK(st.step == 50);
}

TEST_CASE("adam: the first bias-corrected step has magnitude alpha") {
  for (double g : {3.0, -0.25, 1e-3}) {
    AdamState st(1, AdamHyper{0.1, 0.9, 0.999, 1e-8});
    std::vector<double> p{0.0};
    adam_step(st, p, std::vector<double>{g});
    CHECK(p[0] == doctest::Approx(-0.1 * (g > 0 ? 1 : -1)).epsilon(1e-5));
  }
}

TEST_CASE("adam: two-step trace matches hand execution") {
  const double a = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  // step 1: m = 0.1, v = 0.001; mhat = 1, vhat = 1
  double x = 0.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    m = b1 * m + (1 - b1) * 1.0;
    v = b2 * v + (1 - b2) * 1.0;
    x -= a * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
  }
  AdamState st(1, AdamHyper{a, b1, b2, eps});
  std::vector<double> p{0.0};
  adam_step(st, p, std::vector<double>{1.0});
  adam_step(st, p, std::vector<double>{1.0});
  CHECK(std::abs(p[0] - x) <= 1e-12);
  CHECK(std::abs(p[0] - (-0.2 / (1 + eps))) <= 1e-12);
}

TEST_CASE("adam rejects non-finite gradients naming the iteration") {
  AdamState st(2, AdamHyper{});
  std::vector<double> p{0.0, 0.0};
  adam_step(st, p, std::vector<double>{1.0, 1.0});
  try {
    adam_step(st, p, std::vector<double>{1.0, NAN});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("iteration 2") != std::string::npos);
  }
}

TEST_CASE("finite_diff_grad basics") {
  Tensor x(Shape{1, 1, 2}, {1.0, 2.0});
  const auto g = finite_diff_grad([](const Tensor& t) { return dot(t.values(), t.values()); }, x, 1e-5);
  CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(g[1] == doctest::Approx(4.0).epsilon(1e-8));
  const auto c = finite_diff_grad([](const Tensor&) { return 3.5; }, x, 1e-5);
  CHECK(c[0] == 0.0);
  CHECK(c[1] == 0.0);
  CHECK_THROWS_AS(finite_diff_grad([](const Tensor&) { return 0.0; }, x, 0.0), ConfigError);
}

TEST_CASE("reverse-mode gradient of a conv-softplus composite matches finite differences") {
  Rng rng(21);
  const auto x = random_tensor(Shape{2, 5, 5}, rng);
  const auto k1 = random_kernel(3, 2, 3, rng);
  const auto k2 = random_kernel(2, 3, 3, rng);
  const DiffOp net = compose(softplus_op(), compose(conv2d_op(k2, {0.1, 0.2}),
                                                    compose(softplus_op(), conv2d_op(k1, {0.0, 0.1, -0.1}))));
  const auto w = random_tensor(Shape{2, 5, 5}, rng);
  auto loss = [&](const Tensor& t) { return dot(w.values(), net.forward(t).values()); };
  const auto fd = finite_diff_grad(loss, x, 1e-5);
  const auto rev = net.vjp(x, w);
  CHECK(relative_error(rev.values(), fd.values()) < 1e-5);
}

TEST_CASE("every DiffOp satisfies the adjoint identity") {
  Rng rng(33);
  const auto x = random_tensor(Shape{2, 6, 4}, rng);
  check_adjoint(conv2d_op(random_kernel(3, 2, 3, rng), {0.5, 0.0, -0.5}), x, rng);
  check_adjoint(conv2d_op(random_kernel(2, 2, 1, rng), {0.0, 0.0}), x, rng);
  check_adjoint(softplus_op(), x, rng);
  check_adjoint(sigmoid_op(), x, rng);
  check_adjoint(compose(sigmoid_op(), conv2d_op(random_kernel(2, 2, 3, rng), {0.0, 0.0})), x, rng);
}

TEST_CASE("vjp is linear in the cotangent") {
  Rng rng(41);
  const auto x = random_tensor(Shape{2, 4, 4}, rng);
  const auto op = compose(softplus_op(), conv2d_op(random_kernel(2, 2, 3, rng), {0.0, 0.0}));
  const auto u1 = random_tensor(Shape{2, 4, 4}, rng);
  const auto u2 = random_tensor(Shape{2, 4, 4}, rng);
  const auto lhs = op.vjp(x, 2.0 * u1 + u2);
  const auto rhs = 2.0 * op.vjp(x, u1) + op.vjp(x, u2);
  CHECK(relative_error(lhs.values(), rhs.values()) < 1e-12);
}
