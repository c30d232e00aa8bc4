#include "flowrecon/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "flowrecon/metrics.hpp"

namespace flowrecon {
namespace {

// Flow parameters straight from construction: the last coupling conv is zero.
bool looks_untrained(const MultiscaleFlow& flow) {
  for (const auto& lvl : flow.levels()) {
    for (const auto& layer : lvl.layers) {
      if (const auto* c = std::get_if<AffineCoupling>(&layer); c && !c->output_is_zero()) return false;
    }
  }
  return true;
}

std::size_t count_to_keep(const std::vector<std::size_t>& sizes, double fraction, std::size_t& zeroed_sections) {
  std::size_t n = 0;
  for (auto s : sizes) n += s;
  std::size_t kept = n;
  for (std::size_t l = 0; l <= sizes.size(); ++l) {
    if (std::abs(static_cast<double>(kept) - fraction * static_cast<double>(n)) < 0.5) {
      zeroed_sections = l;
      return kept;
    }
    if (l < sizes.size()) kept -= sizes[l];
  }
  std::ostringstream os;
  os << "fraction " << fraction << " does not align with a section boundary; valid fractions:";
  for (double f : valid_fractions(sizes)) os << ' ' << f;
  throw ConfigError(os.str());
}

class ReconLoop {
 public:
  ReconLoop(const MultiscaleFlow& flow, const MriOperator& op, const ComplexTensor& g, const ReconConfig& cfg)
      : flow_(flow), op_(op), g_(g), cfg_(cfg), adam_(flow.dimension(), AdamHyper{cfg.learning_rate, 0.9, 0.999, 1e-8}) {}

  // One Adam step; returns the new iterate (unprojected).
  LatentVector step(const LatentVector& z, std::size_t iteration) {
    auto og = objective_and_grad(flow_, op_, g_, z, cfg_.mu, cfg_.lambda, cfg_.tv_epsilon);
    if (!std::isfinite(og.value)) {
      throw NumericError("reconstruction: non-finite loss at iteration " + std::to_string(iteration));
    }
    LatentVector next = z;
    try {
      adam_step(adam_, next.values(), og.grad.values());
    } catch (const NumericError& e) {
      throw NumericError("reconstruction: " + std::string(e.what()));
    }
    return next;
  }

 private:
  const MultiscaleFlow& flow_;
  const MriOperator& op_;
  const ComplexTensor& g_;
  const ReconConfig& cfg_;
  AdamState adam_;
};

bool window_converged(const std::vector<LossTerms>& trace, const ReconConfig& cfg) {
  if (cfg.window == 0 || trace.size() <= cfg.window) return false;
  const double now = trace.back().total, then = trace[trace.size() - 1 - cfg.window].total;
  return std::abs(now - then) <= cfg.tolerance * std::max(std::abs(then), 1e-300);
}

void require_finite_terms(const LossTerms& t, std::size_t iteration) {
  if (!std::isfinite(t.total)) {
    throw NumericError("reconstruction: non-finite loss at iteration " + std::to_string(iteration));
  }
}

}  // namespace

void ReconConfig::validate(std::size_t n) const {
  const auto kk = resolved_k(n);
  if (kk < 1 || kk > n) throw ConfigError("recon.k must lie in [1, " + std::to_string(n) + "]");
  if (!(mu >= 0) || !(lambda >= 0)) throw ConfigError("recon.mu and recon.lambda must be non-negative");
  if (!(learning_rate > 0)) throw ConfigError("recon.learning_rate must be positive");
  if (!(tv_epsilon > 0)) throw ConfigError("recon.tv_epsilon must be positive");
  if (!(tolerance >= 0)) throw ConfigError("recon.tolerance must be non-negative");
}

LatentVector project(const LatentVector& z, std::size_t k) {
  const auto n = z.size();
  if (k < 1 || k > n) {
    throw ConfigError("project: k = " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  }
  LatentVector out = z;
  std::fill(out.values().begin(), out.values().begin() + static_cast<std::ptrdiff_t>(n - k), 0.0);
  return out;
}

LossTerms loss_terms(const MultiscaleFlow& flow, const MriOperator& op, const ComplexTensor& g,
                     const LatentVector& z, double mu) {
  const auto f = flow.forward(z).image;
  const auto hf = op.apply(f);
  require_same_shape(g.shape(), hf.shape(), "loss measurement");
  double r = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) r += std::norm(g.data()[i] - hf.data()[i]);
  LossTerms t;
  t.data = r / static_cast<double>(f.size());
  t.tv = tv(f);
  t.total = t.data + mu * t.tv;
  return t;
}

double loss_total(const MultiscaleFlow& flow, const MriOperator& op, const ComplexTensor& g,
                  const LatentVector& z, double mu) {
  return loss_terms(flow, op, g, z, mu).total;
}

ObjectiveGrad objective_and_grad(const MultiscaleFlow& flow, const MriOperator& op, const ComplexTensor& g,
                                 const LatentVector& z, double mu, double lambda, double tv_epsilon) {
  require_same_shape(g.shape(), op.measurement_shape(), "objective measurement");
  const Tensor hg = op.adjoint(g);
  TvConfig tvc;
  tvc.epsilon = tv_epsilon;
  double value = 0.0;
  ObjectiveGrad out;
  out.grad = flow.forward_and_vjp(
      z,
      [&](const Tensor& f) {
        const auto hf = op.apply(f);
        double r = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) r += std::norm(g.data()[i] - hf.data()[i]);
        value = r;
        // d/df ||g - H f||^2 = 2 H^T (H f - g)
        Tensor cot = 2.0 * (op.adjoint(hf) - hg);
        if (mu > 0) {
          value += mu * tv_smooth(f, tv_epsilon);
          axpy(mu, tv_grad(f, tvc).values(), cot.values());
        }
        return cot;
      },
      &out.image);
  if (lambda > 0) {
    double l1 = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      l1 += std::abs(z[i]);
      out.grad[i] += lambda * (z[i] > 0 ? 1.0 : (z[i] < 0 ? -1.0 : 0.0));
    }
    value += lambda * (l1 + static_cast<double>(z.size()) * std::numbers::ln2);
  }
  out.value = value;
  return out;
}

ReconResult inn_proj_tv(const MultiscaleFlow& flow, const MriOperator& op, const ComplexTensor& g,
                        const ReconConfig& config, const IterateObserver& observer) {
  const auto n = flow.dimension();
  config.validate(n);
  require_same_shape(flow.config().image, op.image_shape(), "flow image vs operator image");
  const auto k = config.resolved_k(n);

  ReconResult result;
  if (looks_untrained(flow)) result.warnings.push_back("flow looks untrained (all final coupling weights are zero)");
  LatentVector z = flow.zeros();
  result.trace.push_back(loss_terms(flow, op, g, z, config.mu));
  require_finite_terms(result.trace.back(), 0);
  ReconLoop loop(flow, op, g, config);
  for (std::size_t it = 1; it <= config.max_iterations; ++it) {
    z = project(loop.step(z, it), k);
    if (observer) observer(it, z);
    result.trace.push_back(loss_terms(flow, op, g, z, config.mu));
    require_finite_terms(result.trace.back(), it);
    result.iterations = it;
    if (window_converged(result.trace, config)) {
      result.converged = true;
      break;
    }
  }
  result.image = flow.forward(z).image;
  result.latent = std::move(z);
  return result;
}

ReconResult debias(const MultiscaleFlow& flow, const MriOperator& op, const ComplexTensor& g,
                   const ReconResult& init, const ReconConfig& config, std::size_t iterations) {
  if (iterations == 0) return init;
  config.validate(flow.dimension());
  ReconResult result;
  result.warnings = init.warnings;
  LatentVector z = init.latent;
  LatentVector best = z;
  result.trace.push_back(loss_terms(flow, op, g, z, config.mu));
  double best_data = result.trace.back().data;
  ReconLoop loop(flow, op, g, config);
  for (std::size_t it = 1; it <= iterations; ++it) {
    z = loop.step(z, it);
    result.trace.push_back(loss_terms(flow, op, g, z, config.mu));
    require_finite_terms(result.trace.back(), it);
    if (result.trace.back().data < best_data) {
      best_data = result.trace.back().data;
      best = z;
    }
  }
  result.iterations = iterations;
  result.converged = init.converged;
  result.image = flow.forward(best).image;
  result.latent = std::move(best);
  return result;
}

std::vector<double> valid_fractions(const std::vector<std::size_t>& section_sizes) {
  std::size_t n = 0;
  for (auto s : section_sizes) n += s;
  std::vector<double> out;
  std::size_t kept = n;
  for (std::size_t l = 0; l < section_sizes.size(); ++l) {
    out.push_back(static_cast<double>(kept) / static_cast<double>(n));
    kept -= section_sizes[l];
  }
  return out;
}

std::vector<TruncationRow> truncation_study(const MultiscaleFlow& flow, const std::vector<Tensor>& images,
                                            const std::vector<double>& fractions) {
  if (images.empty()) throw ConfigError("truncation_study: no images");
  const auto sizes = flow.section_sizes();
  std::vector<TruncationRow> rows;
  for (double fraction : fractions) {
    std::size_t zeroed = 0;
    const auto kept = count_to_keep(sizes, fraction, zeroed);
    TruncationRow row{fraction, 0.0, 0.0};
    for (const auto& img : images) {
      const auto z = project(flow.inverse(img).z, kept);
      const auto rec = flow.forward(z).image;
      row.mean_rmse += rmse(rec, img);
      row.mean_ssim += ssim(rec, img);
    }
    row.mean_rmse /= static_cast<double>(images.size());
    row.mean_ssim /= static_cast<double>(images.size());
    rows.push_back(row);
  }
  return rows;
}

std::vector<TruncationRow> haar_truncation_study(const std::vector<Tensor>& images, std::size_t levels,
                                                 const std::vector<double>& fractions) {
  if (images.empty()) throw ConfigError("haar_truncation_study: no images");
  std::vector<std::size_t> sizes;
  for (const auto& s : haar_forward(images.front(), levels).sections) sizes.push_back(s.size());
  std::vector<TruncationRow> rows;
  for (double fraction : fractions) {
    std::size_t zeroed = 0;
    count_to_keep(sizes, fraction, zeroed);
    TruncationRow row{fraction, 0.0, 0.0};
    for (const auto& img : images) {
      const auto rec = haar_inverse(haar_truncate(haar_forward(img, levels), zeroed));
      row.mean_rmse += rmse(rec, img);
      row.mean_ssim += ssim(rec, img);
    }
    row.mean_rmse /= static_cast<double>(images.size());
    row.mean_ssim /= static_cast<double>(images.size());
    rows.push_back(row);
  }
  return rows;
}

}  // namespace flowrecon
