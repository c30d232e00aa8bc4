#include "flowrecon/ops.hpp"

#include <Eigen/Core>
#include <cmath>

namespace flowrecon {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using ConstMapRow = Eigen::Map<const RowMat>;

void check_kernel(const Tensor& x, const ConvKernel& kernel) {
  if (kernel.extent % 2 == 0) throw DimensionError("conv2d: kernel extent must be odd");
  if (x.channels() != kernel.in_channels) {
    throw DimensionError("conv2d: input has " + std::to_string(x.channels()) +
                         " channels, kernel expects " + std::to_string(kernel.in_channels));
  }
  if (kernel.weights.size() != kernel.out_channels * kernel.in_channels * kernel.extent * kernel.extent) {
    throw DimensionError("conv2d: kernel weight count does not match its extents");
  }
}

// Rows indexed by (in, ky, kx), columns by output pixel.
RowMat im2col(const Tensor& x, std::size_t k) {
  const auto h = x.height(), w = x.width();
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  RowMat col = RowMat::Zero(static_cast<Eigen::Index>(x.channels() * k * k),
                            static_cast<Eigen::Index>(h * w));
  for (std::size_t c = 0; c < x.channels(); ++c) {
    const double* src = x.channel(c).data();
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* dst = col.row(static_cast<Eigen::Index>((c * k + ky) * k + kx)).data();
        const auto dy = static_cast<std::ptrdiff_t>(ky) - r;
        const auto dx = static_cast<std::ptrdiff_t>(kx) - r;
        for (std::size_t y = 0; y < h; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y) + dy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          const std::size_t x0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dx));
          const std::size_t x1 = static_cast<std::size_t>(
              std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w), static_cast<std::ptrdiff_t>(w) - dx));
          for (std::size_t xx = x0; xx < x1; ++xx) {
            dst[y * w + xx] = src[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(xx) + dx)];
          }
        }
      }
    }
  }
  return col;
}

Tensor col2im(const RowMat& col, const Shape& shape, std::size_t k) {
  const auto h = shape.height, w = shape.width;
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  Tensor out(shape);
  for (std::size_t c = 0; c < shape.channels; ++c) {
    double* dst = out.channel(c).data();
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* src = col.row(static_cast<Eigen::Index>((c * k + ky) * k + kx)).data();
        const auto dy = static_cast<std::ptrdiff_t>(ky) - r;
        const auto dx = static_cast<std::ptrdiff_t>(kx) - r;
        for (std::size_t y = 0; y < h; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y) + dy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          const std::size_t x0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dx));
          const std::size_t x1 = static_cast<std::size_t>(
              std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w), static_cast<std::ptrdiff_t>(w) - dx));
          for (std::size_t xx = x0; xx < x1; ++xx) {
            dst[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(xx) + dx)] += src[y * w + xx];
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

Tensor conv2d(const Tensor& x, const ConvKernel& kernel, std::span<const double> bias) {
  check_kernel(x, kernel);
  if (bias.size() != kernel.out_channels) throw DimensionError("conv2d: bias length mismatch");
  const auto pixels = static_cast<Eigen::Index>(x.shape().plane());
  const auto rows = static_cast<Eigen::Index>(kernel.in_channels * kernel.extent * kernel.extent);
  const auto outs = static_cast<Eigen::Index>(kernel.out_channels);
  Tensor y(Shape{kernel.out_channels, x.height(), x.width()});
  MapRow ym(y.data().data(), outs, pixels);
  ConstMapRow km(kernel.weights.data(), outs, rows);
  if (kernel.extent == 1) {
    ym.noalias() = km * ConstMapRow(x.data().data(), rows, pixels);
  } else {
    ym.noalias() = km * im2col(x, kernel.extent);
  }
  for (Eigen::Index o = 0; o < outs; ++o) ym.row(o).array() += bias[static_cast<std::size_t>(o)];
  return y;
}

ConvGrads conv2d_vjp(const Tensor& x, const ConvKernel& kernel, const Tensor& dy) {
  check_kernel(x, kernel);
  require_same_shape(dy.shape(), Shape{kernel.out_channels, x.height(), x.width()}, "conv2d_vjp cotangent");
  const auto pixels = static_cast<Eigen::Index>(x.shape().plane());
  const auto rows = static_cast<Eigen::Index>(kernel.in_channels * kernel.extent * kernel.extent);
  const auto outs = static_cast<Eigen::Index>(kernel.out_channels);
  ConstMapRow dym(dy.data().data(), outs, pixels);
  ConstMapRow km(kernel.weights.data(), outs, rows);

  ConvGrads g;
  g.weights.assign(kernel.weights.size(), 0.0);
  g.bias.assign(kernel.out_channels, 0.0);
  MapRow gw(g.weights.data(), outs, rows);
  // Plain loop: Eigen's vectorized sum peels by address alignment, which
  // would make results depend on where the buffer was allocated.
  for (std::size_t o = 0; o < kernel.out_channels; ++o) {
    const auto plane = dy.channel(o);
    double s = 0.0;
    for (double v : plane) s += v;
    g.bias[o] = s;
  }

  if (kernel.extent == 1) {
    ConstMapRow xm(x.data().data(), rows, pixels);
    gw.noalias() = dym * xm.transpose();
    g.input = Tensor(x.shape());
    MapRow(g.input.data().data(), rows, pixels).noalias() = km.transpose() * dym;
  } else {
    const RowMat col = im2col(x, kernel.extent);
    gw.noalias() = dym * col.transpose();
    const RowMat dcol = km.transpose() * dym;
    g.input = col2im(dcol, x.shape(), kernel.extent);
  }
  return g;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor softplus(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = softplus(x[i]);
  return y;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
  return y;
}

Tensor softplus_vjp(const Tensor& x, const Tensor& dy) {
  require_same_shape(x.shape(), dy.shape(), "softplus_vjp");
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = dy[i] * sigmoid(x[i]);
  return dx;
}

Tensor sigmoid_vjp(const Tensor& x, const Tensor& dy) {
  require_same_shape(x.shape(), dy.shape(), "sigmoid_vjp");
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = sigmoid(x[i]);
    dx[i] = dy[i] * s * (1.0 - s);
  }
  return dx;
}

DiffOp conv2d_op(ConvKernel kernel, std::vector<double> bias) {
  DiffOp op;
  op.forward = [kernel, bias](const Tensor& x) { return conv2d(x, kernel, bias); };
  op.vjp = [kernel](const Tensor& x, const Tensor& u) { return conv2d_vjp(x, kernel, u).input; };
  return op;
}

DiffOp softplus_op() {
  return DiffOp{[](const Tensor& x) { return softplus(x); },
                [](const Tensor& x, const Tensor& u) { return softplus_vjp(x, u); }};
}

DiffOp sigmoid_op() {
  return DiffOp{[](const Tensor& x) { return sigmoid(x); },
                [](const Tensor& x, const Tensor& u) { return sigmoid_vjp(x, u); }};
}

DiffOp compose(DiffOp outer, DiffOp inner) {
  DiffOp op;
  op.forward = [outer, inner](const Tensor& x) { return outer.forward(inner.forward(x)); };
  op.vjp = [outer, inner](const Tensor& x, const Tensor& u) {
    return inner.vjp(x, outer.vjp(inner.forward(x), u));
  };
  return op;
}

}  // namespace flowrecon
