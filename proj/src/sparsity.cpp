#include "flowrecon/sparsity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace flowrecon {
namespace {

/// Dual variable of the anisotropic TV: one value per horizontal and per
/// vertical difference. h has width-1 columns, v has height-1 rows.
struct Dual {
  Shape shape;
  std::vector<double> h, v;

  explicit Dual(const Shape& s)
      : shape(s),
        h(s.channels * s.height * (s.width - 1), 0.0),
        v(s.channels * (s.height - 1) * s.width, 0.0) {}
};

std::size_t hidx(const Shape& s, std::size_t c, std::size_t y, std::size_t x) {
  return (c * s.height + y) * (s.width - 1) + x;
}
std::size_t vidx(const Shape& s, std::size_t c, std::size_t y, std::size_t x) {
  return (c * (s.height - 1) + y) * s.width + x;
}

// D f, with d = f(y, x+1) - f(y, x) and f(y+1, x) - f(y, x)
void apply_d(const Tensor& f, Dual& out) {
  const auto& s = f.shape();
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t y = 0; y < s.height; ++y) {
      for (std::size_t x = 0; x < s.width; ++x) {
        if (x + 1 < s.width) out.h[hidx(s, c, y, x)] = f.at(c, y, x + 1) - f.at(c, y, x);
        if (y + 1 < s.height) out.v[vidx(s, c, y, x)] = f.at(c, y + 1, x) - f.at(c, y, x);
      }
    }
  }
}

// D^T p
Tensor apply_dt(const Dual& p) {
  const auto& s = p.shape;
  Tensor out(s);
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t y = 0; y < s.height; ++y) {
      for (std::size_t x = 0; x < s.width; ++x) {
        if (x + 1 < s.width) {
          const double q = p.h[hidx(s, c, y, x)];
          out.at(c, y, x + 1) += q;
          out.at(c, y, x) -= q;
        }
        if (y + 1 < s.height) {
          const double q = p.v[vidx(s, c, y, x)];
          out.at(c, y + 1, x) += q;
          out.at(c, y, x) -= q;
        }
      }
    }
  }
  return out;
}

template <class F>
void for_each_difference(const Tensor& f, F&& fn) {
  const auto& s = f.shape();
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t y = 0; y < s.height; ++y) {
      for (std::size_t x = 0; x < s.width; ++x) {
        if (x + 1 < s.width) fn(c, y, x, c, y, x + 1);
        if (y + 1 < s.height) fn(c, y, x, c, y + 1, x);
      }
    }
  }
}

double prox_objective(const Tensor& x, const Tensor& y, double tau) {
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) d += (x.data()[i] - y.data()[i]) * (x.data()[i] - y.data()[i]);
  return 0.5 * d + tau * tv(x);
}

double pls_objective(const MriOperator& op, const ComplexTensor& g, const Tensor& f, double lambda) {
  const auto hf = op.apply(f);
  double r = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) r += std::norm(g.data()[i] - hf.data()[i]);
  return r + lambda * tv(f);
}

}  // namespace

void TvConfig::validate() const {
  if (!(epsilon > 0)) throw ConfigError("tv epsilon must be positive");
  if (prox_max_iter == 0) throw ConfigError("tv prox iteration cap must be positive");
  if (!(prox_tolerance >= 0)) throw ConfigError("tv prox tolerance must be non-negative");
}

double tv(const Tensor& f) {
  const auto& s = f.shape();
  double acc = 0.0;
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t y = 0; y < s.height; ++y) {
      for (std::size_t x = 0; x < s.width; ++x) {
        const double h = x + 1 < s.width ? std::abs(f.at(c, y, x) - f.at(c, y, x + 1)) : 0.0;
        const double v = y + 1 < s.height ? std::abs(f.at(c, y, x) - f.at(c, y + 1, x)) : 0.0;
        acc += h + v;
      }
    }
  }
  return acc;
}

double tv_smooth(const Tensor& f, double epsilon) {
  double acc = 0.0;
  for_each_difference(f, [&](auto c0, auto y0, auto x0, auto c1, auto y1, auto x1) {
    acc += std::hypot(f.at(c1, y1, x1) - f.at(c0, y0, x0), epsilon);
  });
  return acc;
}

Tensor tv_grad(const Tensor& f, const TvConfig& config) {
  config.validate();
  Tensor g(f.shape());
  for_each_difference(f, [&](auto c0, auto y0, auto x0, auto c1, auto y1, auto x1) {
    const double d = f.at(c1, y1, x1) - f.at(c0, y0, x0);
    const double w = d / std::hypot(d, config.epsilon);
    g.at(c1, y1, x1) += w;
    g.at(c0, y0, x0) -= w;
  });
  return g;
}

ProxResult tv_prox(const Tensor& y, double tau, const TvConfig& config) {
  config.validate();
  if (!(tau >= 0)) throw ConfigError("tv_prox: tau must be non-negative");
  if (tau == 0.0) return ProxResult{y, true, 0};

  // Dual in q = tau * p: x = y - D^T q with |q| <= tau componentwise.
  // The dual gradient is Lipschitz with constant ||D||^2 <= 8.
  const auto& s = y.shape();
  Dual q(s), r(s), q_prev(s), dx(s);
  double t = 1.0;
  ProxResult best{y, false, 0};
  double best_obj = prox_objective(y, y, tau);
  for (std::size_t k = 1; k <= config.prox_max_iter; ++k) {
    const Tensor x_r = y - apply_dt(r);
    apply_d(x_r, dx);
    q_prev.h.swap(q.h);
    q_prev.v.swap(q.v);
    double change = 0.0, norm = 0.0;
    auto update = [&](std::vector<double>& qv, const std::vector<double>& rv, const std::vector<double>& dv,
                      const std::vector<double>& pv) {
      for (std::size_t i = 0; i < qv.size(); ++i) {
        qv[i] = std::clamp(rv[i] + dv[i] / 8.0, -tau, tau);
        change += (qv[i] - pv[i]) * (qv[i] - pv[i]);
        norm += qv[i] * qv[i];
      }
    };
    update(q.h, r.h, dx.h, q_prev.h);
    update(q.v, r.v, dx.v, q_prev.v);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / t_next;
    for (std::size_t i = 0; i < q.h.size(); ++i) r.h[i] = q.h[i] + beta * (q.h[i] - q_prev.h[i]);
    for (std::size_t i = 0; i < q.v.size(); ++i) r.v[i] = q.v[i] + beta * (q.v[i] - q_prev.v[i]);
    t = t_next;

    Tensor x = y - apply_dt(q);
    const double obj = prox_objective(x, y, tau);
    if (obj <= best_obj) {
      best_obj = obj;
      best.x = std::move(x);
    }
    best.iterations = k;
    if (std::sqrt(change) <= config.prox_tolerance * std::max(std::sqrt(norm), 1e-300)) {
      best.converged = true;
      break;
    }
  }
  return best;
}

double operator_norm_squared(const MriOperator& op, std::size_t iterations, std::uint64_t seed) {
  Rng rng(seed);
  Tensor v(op.image_shape());
  for (auto& x : v.data()) x = rng.normal();
  double lambda = 0.0;
  for (std::size_t k = 0; k < iterations; ++k) {
    const double n = norm2(v.values());
    if (n == 0.0) return 0.0;
    v = (1.0 / n) * v;
    Tensor w = op.adjoint(op.apply(v));
    lambda = dot(w.values(), v.values());
    v = std::move(w);
  }
  return lambda;
}

FistaResult fista_pls_tv(const MriOperator& op, const ComplexTensor& g, double lambda, std::size_t iterations,
                         const TvConfig& tv_config) {
  if (!(lambda >= 0)) throw ConfigError("fista_pls_tv: lambda must be non-negative");
  require_same_shape(g.shape(), op.measurement_shape(), "fista_pls_tv measurement");
  const double lip = 2.0 * operator_norm_squared(op);
  if (!(lip > 0)) throw NumericError("fista_pls_tv: operator has zero norm");
  const Tensor hg = op.adjoint(g);

  FistaResult out;
  Tensor x = Tensor(op.image_shape());
  Tensor y = x;
  double t = 1.0;
  double fx = pls_objective(op, g, x, lambda);
  out.loss.push_back(fx);
  for (std::size_t k = 1; k <= iterations; ++k) {
    // gradient of ||g - H y||^2 is 2 H^T (H y - g)
    const Tensor grad = 2.0 * (op.adjoint(op.apply(y)) - hg);
    const Tensor step = y - (1.0 / lip) * grad;
    Tensor z = tv_prox(step, lambda / lip, tv_config).x;
    const double fz = pls_objective(op, g, z, lambda);
    if (!std::isfinite(fz)) throw NumericError("fista_pls_tv: non-finite loss at iteration " + std::to_string(k));

    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    Tensor x_prev = x;
    if (fz <= fx) {
      x = z;
      fx = fz;
      y = x + ((t - 1.0) / t_next) * (x - x_prev);
      t = t_next;
    } else {
      // objective went up: keep x and restart momentum
      ++out.restarts;
      y = x;
      t = 1.0;
    }
    out.loss.push_back(fx);
  }
  out.image = std::move(x);
  return out;
}

std::size_t HaarPyramid::size() const {
  std::size_t n = 0;
  for (const auto& s : sections) n += s.size();
  return n;
}

std::vector<double> HaarPyramid::flat() const {
  std::vector<double> out;
  out.reserve(size());
  for (const auto& s : sections) out.insert(out.end(), s.begin(), s.end());
  return out;
}

HaarPyramid haar_forward(const Tensor& f, std::size_t levels) {
  const auto& s = f.shape();
  if (levels == 0) throw ConfigError("haar_forward: at least one level is required");
  const std::size_t div = std::size_t{1} << levels;
  if (s.height % div != 0 || s.width % div != 0) {
    throw DimensionError("haar_forward: " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                         " is not divisible by 2^" + std::to_string(levels));
  }
  HaarPyramid p{s, levels, {}};
  Tensor a = f;
  for (std::size_t l = 0; l < levels; ++l) {
    const std::size_t h = a.height() / 2, w = a.width() / 2;
    Tensor next(Shape{s.channels, h, w});
    std::vector<double> details;
    details.reserve(3 * s.channels * h * w);
    std::vector<double> bands[3];
    for (auto& b : bands) b.resize(s.channels * h * w);
    for (std::size_t c = 0; c < s.channels; ++c) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const double a00 = a.at(c, 2 * y, 2 * x), a01 = a.at(c, 2 * y, 2 * x + 1);
          const double a10 = a.at(c, 2 * y + 1, 2 * x), a11 = a.at(c, 2 * y + 1, 2 * x + 1);
          const std::size_t i = (c * h + y) * w + x;
          next.at(c, y, x) = 0.5 * (a00 + a01 + a10 + a11);
          bands[0][i] = 0.5 * (a00 - a01 + a10 - a11);
          bands[1][i] = 0.5 * (a00 + a01 - a10 - a11);
          bands[2][i] = 0.5 * (a00 - a01 - a10 + a11);
        }
      }
    }
    for (auto& b : bands) details.insert(details.end(), b.begin(), b.end());
    p.sections.push_back(std::move(details));
    a = std::move(next);
  }
  auto& last = p.sections.back();
  last.insert(last.end(), a.values().begin(), a.values().end());
  return p;
}

Tensor haar_inverse(const HaarPyramid& p) {
  const auto& s = p.shape;
  if (p.levels == 0 || p.sections.size() != p.levels || p.size() != s.size()) {
    throw DimensionError("haar_inverse: pyramid does not match its shape");
  }
  const std::size_t div = std::size_t{1} << p.levels;
  const std::size_t ch = s.height / div, cw = s.width / div;
  const auto& last = p.sections.back();
  const std::size_t approx = s.channels * ch * cw;
  Tensor a(Shape{s.channels, ch, cw},
           std::vector<double>(last.end() - static_cast<std::ptrdiff_t>(approx), last.end()));
  for (std::size_t l = p.levels; l-- > 0;) {
    const std::size_t h = a.height(), w = a.width();
    const std::size_t band = s.channels * h * w;
    const auto& d = p.sections[l];
    Tensor up(Shape{s.channels, 2 * h, 2 * w});
    for (std::size_t c = 0; c < s.channels; ++c) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t i = (c * h + y) * w + x;
          const double ll = a.at(c, y, x), lh = d[i], hl = d[band + i], hh = d[2 * band + i];
          up.at(c, 2 * y, 2 * x) = 0.5 * (ll + lh + hl + hh);
          up.at(c, 2 * y, 2 * x + 1) = 0.5 * (ll - lh + hl - hh);
          up.at(c, 2 * y + 1, 2 * x) = 0.5 * (ll + lh - hl - hh);
          up.at(c, 2 * y + 1, 2 * x + 1) = 0.5 * (ll - lh - hl + hh);
        }
      }
    }
    a = std::move(up);
  }
  return a;
}

HaarPyramid haar_truncate(const HaarPyramid& p, std::size_t i) {
  if (i >= p.levels) {
    throw ConfigError("haar_truncate: level " + std::to_string(i) + " out of range [0, " + std::to_string(p.levels) +
                      ")");
  }
  HaarPyramid out = p;
  for (std::size_t l = 0; l < i; ++l) std::fill(out.sections[l].begin(), out.sections[l].end(), 0.0);
  return out;
}

}  // namespace flowrecon
