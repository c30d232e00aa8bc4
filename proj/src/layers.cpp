#include "flowrecon/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace flowrecon {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using ConstMapRow = Eigen::Map<const RowMat>;

void add_to(std::vector<double>& acc, const std::vector<double>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
}

// out = M * x applied to each pixel's channel vector.
Tensor mix_channels(const std::vector<double>& m, const Tensor& x) {
  const auto c = static_cast<Eigen::Index>(x.channels());
  const auto p = static_cast<Eigen::Index>(x.shape().plane());
  Tensor out(x.shape());
  MapRow(out.data().data(), c, p).noalias() = ConstMapRow(m.data(), c, c) * ConstMapRow(x.data().data(), c, p);
  return out;
}

Tensor mix_channels_transposed(const std::vector<double>& m, const Tensor& x) {
  const auto c = static_cast<Eigen::Index>(x.channels());
  const auto p = static_cast<Eigen::Index>(x.shape().plane());
  Tensor out(x.shape());
  MapRow(out.data().data(), c, p).noalias() =
      ConstMapRow(m.data(), c, c).transpose() * ConstMapRow(x.data().data(), c, p);
  return out;
}

// sum over pixels of a x b^T
std::vector<double> outer_sum(const Tensor& a, const Tensor& b) {
  const auto c = static_cast<Eigen::Index>(a.channels());
  const auto p = static_cast<Eigen::Index>(a.shape().plane());
  std::vector<double> out(static_cast<std::size_t>(c * c));
  MapRow(out.data(), c, c).noalias() =
      ConstMapRow(a.data().data(), c, p) * ConstMapRow(b.data().data(), c, p).transpose();
  return out;
}

void fill_normal(std::vector<double>& v, Rng& rng, double stddev) {
  for (auto& x : v) x = stddev * rng.normal();
}

}  // namespace

// ---------------------------------------------------------------- ActNorm

ActNorm::ActNorm(std::size_t channels) : log_scale_(channels, 0.0), bias_(channels, 0.0) {}

Tensor ActNorm::forward(const Tensor& x, double& logdet) const {
  Tensor y(x.shape());
  for (std::size_t c = 0; c < x.channels(); ++c) {
    const double s = std::exp(log_scale_[c]);
    auto in = x.channel(c);
    auto out = y.channel(c);
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = s * in[i] + bias_[c];
    logdet += static_cast<double>(x.shape().plane()) * log_scale_[c];
  }
  return y;
}

Tensor ActNorm::inverse(const Tensor& y, double& logdet) const {
  Tensor x(y.shape());
  for (std::size_t c = 0; c < y.channels(); ++c) {
    const double inv = std::exp(-log_scale_[c]);
    auto in = y.channel(c);
    auto out = x.channel(c);
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = (in[i] - bias_[c]) * inv;
    logdet -= static_cast<double>(y.shape().plane()) * log_scale_[c];
  }
  return x;
}

Tensor ActNorm::forward_vjp(const Tensor& x, const Tensor& dy, double dlogdet, GradSlots grads) const {
  Tensor dx(x.shape());
  const auto plane = static_cast<double>(x.shape().plane());
  for (std::size_t c = 0; c < x.channels(); ++c) {
    const double s = std::exp(log_scale_[c]);
    auto in = x.channel(c);
    auto g = dy.channel(c);
    auto out = dx.channel(c);
    double gs = 0.0, gb = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) {
      out[i] = s * g[i];
      gs += g[i] * in[i] * s;
      gb += g[i];
    }
    if (!grads.empty()) {
      grads[0][c] += gs + plane * dlogdet;
      grads[1][c] += gb;
    }
  }
  return dx;
}

Tensor ActNorm::inverse_vjp(const Tensor& y, const Tensor& dx, double dlogdet, GradSlots grads) const {
  Tensor dy(y.shape());
  const auto plane = static_cast<double>(y.shape().plane());
  for (std::size_t c = 0; c < y.channels(); ++c) {
    const double inv = std::exp(-log_scale_[c]);
    auto in = y.channel(c);
    auto g = dx.channel(c);
    auto out = dy.channel(c);
    double gs = 0.0, gb = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) {
      out[i] = g[i] * inv;
      gs -= g[i] * (in[i] - bias_[c]) * inv;
      gb -= g[i] * inv;
    }
    if (!grads.empty()) {
      grads[0][c] += gs - plane * dlogdet;
      grads[1][c] += gb;
    }
  }
  return dy;
}

void ActNorm::initialize_from(std::span<const Tensor> samples) {
  if (samples.empty()) return;
  for (std::size_t c = 0; c < channels(); ++c) {
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (const auto& s : samples) {
      for (double v : s.channel(c)) {
        sum += v;
        sq += v * v;
        ++count;
      }
    }
    const double mean = sum / static_cast<double>(count);
    const double var = std::max(sq / static_cast<double>(count) - mean * mean, 0.0);
    bias_[c] = mean;
    log_scale_[c] = 0.5 * std::log(var + 1e-6);
  }
}

std::vector<ParamRef> ActNorm::params() { return {{"log_scale", &log_scale_}, {"bias", &bias_}}; }

// -------------------------------------------------------------- InvMix1x1

InvMix1x1::InvMix1x1(std::size_t channels, Rng& rng)
    : channels_(channels),
      perm_(channels),
      sign_(channels, 1.0),
      lower_(channels * channels, 0.0),
      upper_(channels * channels, 0.0),
      log_diag_(channels, 0.0) {
  const std::size_t n = channels;
  // random rotation by Gram-Schmidt on a Gaussian matrix
  std::vector<double> q(n * n);
  fill_normal(q, rng, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < n; ++k) d += q[i * n + k] * q[j * n + k];
      for (std::size_t k = 0; k < n; ++k) q[i * n + k] -= d * q[j * n + k];
    }
    double nrm = 0.0;
    for (std::size_t k = 0; k < n; ++k) nrm += q[i * n + k] * q[i * n + k];
    nrm = std::sqrt(nrm);
    for (std::size_t k = 0; k < n; ++k) q[i * n + k] /= nrm;
  }
  // LU with partial pivoting: LU[i] = Q[piv[i]]
  std::vector<std::size_t> piv(n);
  for (std::size_t i = 0; i < n; ++i) piv[i] = i;
  std::vector<double> a = q;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t best = k;
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(a[i * n + k]) > std::abs(a[best * n + k])) best = i;
    }
    if (best != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[k * n + j], a[best * n + j]);
      std::swap(piv[k], piv[best]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      a[i * n + k] /= a[k * n + k];
      for (std::size_t j = k + 1; j < n; ++j) a[i * n + j] -= a[i * n + k] * a[k * n + j];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    perm_[piv[i]] = i;
    for (std::size_t j = 0; j < n; ++j) {
      if (j < i) lower_[i * n + j] = a[i * n + j];
      if (j > i) upper_[i * n + j] = a[i * n + j];
    }
    const double d = a[i * n + i];
    sign_[i] = d < 0 ? -1.0 : 1.0;
    log_diag_[i] = std::log(std::abs(d));
  }
}

void InvMix1x1::set_fixed(std::vector<std::size_t> perm, std::vector<double> sign) {
  perm_ = std::move(perm);
  sign_ = std::move(sign);
  channels_ = perm_.size();
}

std::vector<double> InvMix1x1::matrix() const {
  const std::size_t n = channels_;
  std::vector<double> lu(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      // (L U)_ij = sum_k L_ik U_kj, k <= min(i, j)
      for (std::size_t k = 0; k <= std::min(i, j); ++k) {
        const double l = k == i ? 1.0 : lower_[i * n + k];
        const double u = k == j ? sign_[k] * std::exp(log_diag_[k]) : upper_[k * n + j];
        s += l * u;
      }
      lu[i * n + j] = s;
    }
  }
  std::vector<double> w(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) w[i * n + j] = lu[perm_[i] * n + j];
  }
  return w;
}

std::vector<double> InvMix1x1::inverse_matrix() const {
  // W^{-1} = U^{-1} L^{-1} P^{-1}; solve column by column.
  const std::size_t n = channels_;
  std::vector<double> inv(n * n, 0.0);
  std::vector<double> col(n);
  for (std::size_t j = 0; j < n; ++j) {
    // e_j through P^{-1}: (P^{-1} e_j) has a one at perm_[j]
    std::fill(col.begin(), col.end(), 0.0);
    col[perm_[j]] = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < i; ++k) col[i] -= lower_[i * n + k] * col[k];
    }
    for (std::size_t ii = n; ii-- > 0;) {
      for (std::size_t k = ii + 1; k < n; ++k) col[ii] -= upper_[ii * n + k] * col[k];
      col[ii] /= sign_[ii] * std::exp(log_diag_[ii]);
    }
    for (std::size_t i = 0; i < n; ++i) inv[i * n + j] = col[i];
  }
  return inv;
}

Tensor InvMix1x1::forward(const Tensor& x, double& logdet) const {
  double s = 0.0;
  for (double v : log_diag_) s += v;
  logdet += static_cast<double>(x.shape().plane()) * s;
  return mix_channels(matrix(), x);
}

Tensor InvMix1x1::inverse(const Tensor& y, double& logdet) const {
  double s = 0.0;
  for (double v : log_diag_) s += v;
  logdet -= static_cast<double>(y.shape().plane()) * s;
  return mix_channels(inverse_matrix(), y);
}

void InvMix1x1::accumulate_matrix_grad(const std::vector<double>& dw, double dlogdet_plane,
                                       GradSlots grads) const {
  const std::size_t n = channels_;
  // W = P M, M = L U  =>  dM = P^T dW, dL = dM U^T, dU = L^T dM
  std::vector<double> dm(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) dm[perm_[i] * n + j] = dw[i * n + j];
  }
  auto l_at = [&](std::size_t i, std::size_t k) { return i == k ? 1.0 : (k < i ? lower_[i * n + k] : 0.0); };
  auto u_at = [&](std::size_t k, std::size_t j) {
    return k == j ? sign_[k] * std::exp(log_diag_[k]) : (j > k ? upper_[k * n + j] : 0.0);
  };
  auto& g_lower = grads[0];
  auto& g_upper = grads[1];
  auto& g_logd = grads[2];
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double s = 0.0;
      for (std::size_t k = j; k < n; ++k) s += dm[i * n + k] * u_at(j, k);
      g_lower[i * n + j] += s;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = i; k < n; ++k) s += l_at(k, i) * dm[k * n + j];
      if (j > i) {
        g_upper[i * n + j] += s;
      } else {
        g_logd[i] += s * sign_[i] * std::exp(log_diag_[i]) + dlogdet_plane;
      }
    }
  }
}

Tensor InvMix1x1::forward_vjp(const Tensor& x, const Tensor& dy, double dlogdet, GradSlots grads) const {
  const auto w = matrix();
  if (!grads.empty()) {
    accumulate_matrix_grad(outer_sum(dy, x), static_cast<double>(x.shape().plane()) * dlogdet, grads);
  }
  return mix_channels_transposed(w, dy);
}

Tensor InvMix1x1::inverse_vjp(const Tensor& y, const Tensor& dx, double dlogdet, GradSlots grads) const {
  const auto winv = inverse_matrix();
  Tensor dy = mix_channels_transposed(winv, dx);
  if (!grads.empty()) {
    const Tensor x = mix_channels(winv, y);
    auto dw = outer_sum(dy, x);
    for (auto& v : dw) v = -v;
    accumulate_matrix_grad(dw, -static_cast<double>(y.shape().plane()) * dlogdet, grads);
  }
  return dy;
}

std::vector<ParamRef> InvMix1x1::params() {
  return {{"lower", &lower_}, {"upper", &upper_}, {"log_diag", &log_diag_}};
}

// --------------------------------------------------------- AffineCoupling

AffineCoupling::AffineCoupling(std::size_t channels, std::size_t hidden, bool pass_first, double floor,
                               double shift, Rng& rng)
    : channels_(channels),
      pass_first_(pass_first),
      floor_(floor),
      shift_(shift),
      k1_(hidden, channels / 2, 3),
      k2_(hidden, hidden, 3),
      k3_(channels, hidden, 3),
      b1_(hidden, 0.0),
      b2_(hidden, 0.0),
      b3_(channels, 0.0) {
  if (channels < 2 || channels % 2 != 0) throw DimensionError("coupling needs an even channel count");
  fill_normal(k1_.weights, rng, 1.0 / std::sqrt(static_cast<double>(9 * (channels / 2))));
  fill_normal(k2_.weights, rng, 1.0 / std::sqrt(static_cast<double>(9 * hidden)));
}

std::pair<Tensor, Tensor> AffineCoupling::split(const Tensor& x) const {
  const std::size_t half = channels_ / 2;
  const Shape hs{half, x.height(), x.width()};
  Tensor first(hs), second(hs);
  const auto plane = x.shape().plane();
  std::copy_n(x.data().begin(), half * plane, first.data().begin());
  std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(half * plane), half * plane, second.data().begin());
  if (pass_first_) return {std::move(first), std::move(second)};
  return {std::move(second), std::move(first)};
}

Tensor AffineCoupling::merge(const Tensor& pass, const Tensor& other) const {
  const Tensor& first = pass_first_ ? pass : other;
  const Tensor& second = pass_first_ ? other : pass;
  Tensor out(Shape{channels_, pass.height(), pass.width()});
  std::copy(first.data().begin(), first.data().end(), out.data().begin());
  std::copy(second.data().begin(), second.data().end(),
            out.data().begin() + static_cast<std::ptrdiff_t>(first.size()));
  return out;
}

AffineCoupling::NetTrace AffineCoupling::run_net(const Tensor& pass) const {
  NetTrace tr;
  tr.input = pass;
  tr.pre1 = conv2d(pass, k1_, b1_);
  tr.hidden1 = softplus(tr.pre1);
  tr.pre2 = conv2d(tr.hidden1, k2_, b2_);
  tr.hidden2 = softplus(tr.pre2);
  tr.out = conv2d(tr.hidden2, k3_, b3_);
  return tr;
}

Tensor AffineCoupling::net_backward(const NetTrace& tr, const Tensor& dout, GradSlots grads) const {
  auto g3 = conv2d_vjp(tr.hidden2, k3_, dout);
  auto g2 = conv2d_vjp(tr.hidden1, k2_, softplus_vjp(tr.pre2, g3.input));
  auto g1 = conv2d_vjp(tr.input, k1_, softplus_vjp(tr.pre1, g2.input));
  if (!grads.empty()) {
    add_to(grads[0], g1.weights);
    add_to(grads[1], g1.bias);
    add_to(grads[2], g2.weights);
    add_to(grads[3], g2.bias);
    add_to(grads[4], g3.weights);
    add_to(grads[5], g3.bias);
  }
  return std::move(g1.input);
}

// Arguments below -30 are clamped so that gamma stays strictly above the floor
// in floating point.
constexpr double kMinScaleArg = -30.0;

double AffineCoupling::gamma(double s_raw) const {
  return floor_ + (1.0 - floor_) * sigmoid(std::max(s_raw + shift_, kMinScaleArg));
}

double AffineCoupling::gamma_slope(double s_raw) const {
  if (s_raw + shift_ < kMinScaleArg) return 0.0;
  const double s = sigmoid(s_raw + shift_);
  return (1.0 - floor_) * s * (1.0 - s);
}

bool AffineCoupling::output_is_zero() const {
  auto zero = [](double v) { return v == 0.0; };
  return std::all_of(k3_.weights.begin(), k3_.weights.end(), zero) && std::all_of(b3_.begin(), b3_.end(), zero);
}

Tensor AffineCoupling::scales(const Tensor& x) const {
  auto [pass, other] = split(x);
  const auto tr = run_net(pass);
  Tensor g(other.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = gamma(tr.out[i]);
  return g;
}

Tensor AffineCoupling::forward(const Tensor& x, double& logdet) const {
  auto [pass, other] = split(x);
  const auto tr = run_net(pass);
  const std::size_t m = other.size();
  double ld = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double g = gamma(tr.out[i]);
    other[i] = other[i] * g + tr.out[m + i];
    ld += std::log(g);
  }
  logdet += ld;
  return merge(pass, other);
}

Tensor AffineCoupling::inverse(const Tensor& y, double& logdet) const {
  auto [pass, other] = split(y);
  const auto tr = run_net(pass);
  const std::size_t m = other.size();
  double ld = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double g = gamma(tr.out[i]);
    other[i] = (other[i] - tr.out[m + i]) / g;
    ld += std::log(g);
  }
  logdet -= ld;
  return merge(pass, other);
}

Tensor AffineCoupling::forward_vjp(const Tensor& x, const Tensor& dy, double dlogdet, GradSlots grads) const {
  auto [pass, other] = split(x);
  auto [dpass, dother] = split(dy);
  const auto tr = run_net(pass);
  const std::size_t m = other.size();
  Tensor dout(tr.out.shape());
  Tensor dx_other(other.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const double s = tr.out[i];
    const double g = gamma(s);
    const double dgamma = dother[i] * other[i] + dlogdet / g;
    dout[i] = dgamma * gamma_slope(s);
    dout[m + i] = dother[i];
    dx_other[i] = dother[i] * g;
  }
  Tensor dx_pass = net_backward(tr, dout, grads);
  for (std::size_t i = 0; i < dx_pass.size(); ++i) dx_pass[i] += dpass[i];
  return merge(dx_pass, dx_other);
}

Tensor AffineCoupling::inverse_vjp(const Tensor& y, const Tensor& dx, double dlogdet, GradSlots grads) const {
  auto [pass, other] = split(y);
  auto [dpass, dother] = split(dx);
  const auto tr = run_net(pass);
  const std::size_t m = other.size();
  Tensor dout(tr.out.shape());
  Tensor dy_other(other.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const double s = tr.out[i];
    const double g = gamma(s);
    const double x_other = (other[i] - tr.out[m + i]) / g;
    const double dgamma = -dother[i] * x_other / g - dlogdet / g;
    dout[i] = dgamma * gamma_slope(s);
    dout[m + i] = -dother[i] / g;
    dy_other[i] = dother[i] / g;
  }
  Tensor dy_pass = net_backward(tr, dout, grads);
  for (std::size_t i = 0; i < dy_pass.size(); ++i) dy_pass[i] += dpass[i];
  return merge(dy_pass, dy_other);
}

std::vector<ParamRef> AffineCoupling::params() {
  return {{"conv1.weight", &k1_.weights}, {"conv1.bias", &b1_}, {"conv2.weight", &k2_.weights},
          {"conv2.bias", &b2_},           {"conv3.weight", &k3_.weights}, {"conv3.bias", &b3_}};
}

// ---------------------------------------------------------------- squeeze

Tensor squeeze(const Tensor& x) {
  if (x.height() % 2 != 0 || x.width() % 2 != 0) throw DimensionError("squeeze needs even extents");
  const std::size_t h = x.height() / 2, w = x.width() / 2;
  Tensor out(Shape{4 * x.channels(), h, w});
  for (std::size_t c = 0; c < x.channels(); ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            out.at(4 * c + 2 * dy + dx, y, xx) = x.at(c, 2 * y + dy, 2 * xx + dx);
          }
        }
      }
    }
  }
  return out;
}

Tensor unsqueeze(const Tensor& x) {
  if (x.channels() % 4 != 0) throw DimensionError("unsqueeze needs a channel count divisible by 4");
  const std::size_t c_out = x.channels() / 4;
  Tensor out(Shape{c_out, 2 * x.height(), 2 * x.width()});
  for (std::size_t c = 0; c < c_out; ++c) {
    for (std::size_t y = 0; y < x.height(); ++y) {
      for (std::size_t xx = 0; xx < x.width(); ++xx) {
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            out.at(c, 2 * y + dy, 2 * xx + dx) = x.at(4 * c + 2 * dy + dx, y, xx);
          }
        }
      }
    }
  }
  return out;
}

}  // namespace flowrecon
