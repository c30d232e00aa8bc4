#include "flowrecon/flow.hpp"

#include <cmath>
#include <numbers>

namespace flowrecon {
namespace {

template <typename... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <typename... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

const char* kind_name(const Layer& layer) {
  return std::visit(Overloaded{[](const ActNorm&) { return "actnorm"; },
                               [](const InvMix1x1&) { return "mix"; },
                               [](const AffineCoupling&) { return "coupling"; }},
                    layer);
}

std::vector<ParamRef> layer_params(Layer& layer) {
  return std::visit([](auto& l) { return l.params(); }, layer);
}

std::size_t param_slots(const Layer& layer) {
  return std::visit([](const auto& l) { return std::decay_t<decltype(l)>::kParamSlots; }, layer);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  Tensor out(Shape{a.channels() + b.channels(), a.height(), a.width()});
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

Tensor take_channels(const Tensor& x, std::size_t first, std::size_t count) {
  Tensor out(Shape{count, x.height(), x.width()});
  const auto plane = x.shape().plane();
  std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(first * plane), count * plane, out.data().begin());
  return out;
}

}  // namespace

void FlowConfig::validate() const {
  if (levels == 0) throw ConfigError("flow.levels must be positive");
  if (steps_per_level == 0) throw ConfigError("flow.steps must be positive");
  if (hidden_channels == 0) throw ConfigError("flow.hidden must be positive");
  if (image.channels == 0) throw ConfigError("flow.channels must be positive");
  if (!(scale_floor > 0.0 && scale_floor < 1.0)) throw ConfigError("flow.scale_floor must lie in (0, 1)");
  const std::size_t div = std::size_t{1} << levels;
  if (image.height % div != 0 || image.width % div != 0) {
    throw ConfigError("flow: image extents " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                      " are not divisible by 2^levels = " + std::to_string(div));
  }
}

// ----------------------------------------------------------- LatentVector

LatentVector::LatentVector(std::vector<std::size_t> section_sizes, std::vector<double> values)
    : sizes_(std::move(section_sizes)), values_(std::move(values)) {
  std::size_t total = 0;
  for (auto s : sizes_) total += s;
  if (total != values_.size()) {
    throw DimensionError("latent length " + std::to_string(values_.size()) + " does not match section total " +
                         std::to_string(total));
  }
}

LatentVector::LatentVector(std::vector<std::size_t> section_sizes, double fill) : sizes_(std::move(section_sizes)) {
  std::size_t total = 0;
  for (auto s : sizes_) total += s;
  values_.assign(total, fill);
}

std::size_t LatentVector::section_offset(std::size_t l) const {
  std::size_t off = 0;
  for (std::size_t i = 0; i < l; ++i) off += sizes_[i];
  return off;
}

std::span<double> LatentVector::section(std::size_t l) {
  return std::span<double>(values_).subspan(section_offset(l), sizes_.at(l));
}

std::span<const double> LatentVector::section(std::size_t l) const {
  return std::span<const double>(values_).subspan(section_offset(l), sizes_.at(l));
}

double laplace_log_prob(std::span<const double> z) {
  double s = 0.0;
  for (double v : z) s += std::abs(v);
  return -s - static_cast<double>(z.size()) * std::numbers::ln2;
}

// -------------------------------------------------------- MultiscaleFlow

MultiscaleFlow::MultiscaleFlow(FlowConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  Shape shape = config_.image;
  for (std::size_t l = 0; l < config_.levels; ++l) {
    FlowLevel level;
    level.shape = Shape{shape.channels * 4, shape.height / 2, shape.width / 2};
    const bool last = l + 1 == config_.levels;
    level.latent_channels = last ? level.shape.channels : level.shape.channels / 2;
    for (std::size_t s = 0; s < config_.steps_per_level; ++s) {
      level.layers.emplace_back(ActNorm(level.shape.channels));
      level.layers.emplace_back(InvMix1x1(level.shape.channels, rng));
      level.layers.emplace_back(AffineCoupling(level.shape.channels, config_.hidden_channels, s % 2 == 0,
                                               config_.scale_floor, config_.scale_shift, rng));
    }
    shape = Shape{level.shape.channels - level.latent_channels, level.shape.height, level.shape.width};
    levels_.push_back(std::move(level));
  }
}

std::vector<std::size_t> MultiscaleFlow::section_sizes() const {
  std::vector<std::size_t> sizes;
  for (const auto& lvl : levels_) sizes.push_back(lvl.latent_channels * lvl.shape.plane());
  return sizes;
}

std::string MultiscaleFlow::layer_name(std::size_t level, std::size_t layer) const {
  return "level" + std::to_string(level + 1) + ".step" + std::to_string(layer / 3) + "." +
         kind_name(levels_[level].layers[layer]);
}

Tensor MultiscaleFlow::latent_section_tensor(const LatentVector& z, std::size_t level) const {
  const auto& lvl = levels_[level];
  const auto sec = z.section(level);
  return Tensor(Shape{lvl.latent_channels, lvl.shape.height, lvl.shape.width}, std::vector<double>(sec.begin(), sec.end()));
}

ImageWithLogdet MultiscaleFlow::forward(const LatentVector& z, std::vector<double>* layer_logdets) const {
  if (z.size() != dimension() || z.section_sizes() != section_sizes()) {
    throw DimensionError("forward: latent of length " + std::to_string(z.size()) + " does not fit flow dimension " +
                         std::to_string(dimension()));
  }
  ImageWithLogdet out;
  Tensor h;
  for (std::size_t l = levels_.size(); l-- > 0;) {
    const auto& lvl = levels_[l];
    Tensor x = latent_section_tensor(z, l);
    if (l + 1 < levels_.size()) x = concat_channels(x, h);
    for (std::size_t i = lvl.layers.size(); i-- > 0;) {
      const double before = out.logdet;
      x = std::visit([&](const auto& layer) { return layer.forward(x, out.logdet); }, lvl.layers[i]);
      require_finite(x.values(), "forward pass, layer " + layer_name(l, i));
      if (layer_logdets) layer_logdets->push_back(out.logdet - before);
    }
    h = unsqueeze(x);
  }
  out.image = std::move(h);
  return out;
}

LatentWithLogdet MultiscaleFlow::inverse(const Tensor& f) const {
  require_same_shape(f.shape(), config_.image, "inverse: image");
  std::vector<double> values;
  values.reserve(dimension());
  double logdet_inv = 0.0;
  Tensor h = f;
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    const auto& lvl = levels_[l];
    Tensor x = squeeze(h);
    for (std::size_t i = 0; i < lvl.layers.size(); ++i) {
      x = std::visit([&](const auto& layer) { return layer.inverse(x, logdet_inv); }, lvl.layers[i]);
      require_finite(x.values(), "inverse pass, layer " + layer_name(l, i));
    }
    const auto emitted = x.values().first(lvl.latent_channels * lvl.shape.plane());
    values.insert(values.end(), emitted.begin(), emitted.end());
    if (l + 1 < levels_.size()) h = take_channels(x, lvl.latent_channels, lvl.shape.channels - lvl.latent_channels);
  }
  return {LatentVector(section_sizes(), std::move(values)), -logdet_inv};
}

Tensor MultiscaleFlow::sample(Rng& rng, double temperature) const {
  if (temperature < 0) throw ConfigError("sample: temperature must be non-negative");
  LatentVector z = zeros();
  for (auto& v : z.values()) v = temperature * rng.laplace();
  return forward(z).image;
}

double MultiscaleFlow::log_prob(const Tensor& f) const {
  const auto inv = inverse(f);
  return laplace_log_prob(inv.z.values()) - inv.logdet;
}

LatentVector MultiscaleFlow::forward_and_vjp(const LatentVector& z,
                                             const std::function<Tensor(const Tensor&)>& cotangent_of,
                                             Tensor* image_out) const {
  if (z.size() != dimension()) throw DimensionError("vjp_latent: latent length mismatch");
  // tape of layer inputs, generative order
  std::vector<std::vector<Tensor>> tape(levels_.size());
  Tensor h;
  double logdet = 0.0;
  for (std::size_t l = levels_.size(); l-- > 0;) {
    const auto& lvl = levels_[l];
    Tensor x = latent_section_tensor(z, l);
    if (l + 1 < levels_.size()) x = concat_channels(x, h);
    tape[l].resize(lvl.layers.size());
    for (std::size_t i = lvl.layers.size(); i-- > 0;) {
      tape[l][i] = x;
      x = std::visit([&](const auto& layer) { return layer.forward(x, logdet); }, lvl.layers[i]);
      require_finite(x.values(), "forward pass, layer " + layer_name(l, i));
    }
    h = unsqueeze(x);
  }
  const Tensor cot = cotangent_of(h);
  require_same_shape(cot.shape(), config_.image, "vjp_latent: cotangent");
  if (image_out) *image_out = std::move(h);

  std::vector<double> dz;
  dz.reserve(dimension());
  Tensor dh = cot;
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    const auto& lvl = levels_[l];
    Tensor dx = squeeze(dh);
    for (std::size_t i = 0; i < lvl.layers.size(); ++i) {
      dx = std::visit([&](const auto& layer) { return layer.forward_vjp(tape[l][i], dx, 0.0, GradSlots{}); },
                      lvl.layers[i]);
    }
    const auto emitted = dx.values().first(lvl.latent_channels * lvl.shape.plane());
    dz.insert(dz.end(), emitted.begin(), emitted.end());
    if (l + 1 < levels_.size()) dh = take_channels(dx, lvl.latent_channels, lvl.shape.channels - lvl.latent_channels);
  }
  return LatentVector(section_sizes(), std::move(dz));
}

LatentVector MultiscaleFlow::vjp_latent(const LatentVector& z, const Tensor& cotangent) const {
  return forward_and_vjp(z, [&](const Tensor&) { return cotangent; }, nullptr);
}

double MultiscaleFlow::nll_with_grad(const Tensor& f, std::vector<std::vector<double>>* grads) const {
  require_same_shape(f.shape(), config_.image, "nll: image");
  std::vector<std::vector<Tensor>> tape(levels_.size());
  double logdet_inv = 0.0;
  std::vector<double> zvals;
  zvals.reserve(dimension());
  Tensor h = f;
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    const auto& lvl = levels_[l];
    Tensor x = squeeze(h);
    tape[l].resize(lvl.layers.size());
    for (std::size_t i = 0; i < lvl.layers.size(); ++i) {
      tape[l][i] = x;
      x = std::visit([&](const auto& layer) { return layer.inverse(x, logdet_inv); }, lvl.layers[i]);
      require_finite(x.values(), "inverse pass, layer " + layer_name(l, i));
    }
    const auto emitted = x.values().first(lvl.latent_channels * lvl.shape.plane());
    zvals.insert(zvals.end(), emitted.begin(), emitted.end());
    if (l + 1 < levels_.size()) h = take_channels(x, lvl.latent_channels, lvl.shape.channels - lvl.latent_channels);
  }
  // -log p_f(f) = -log p_z(z) + ln|det dG/dz| = -log p_z(z) - logdet_inv
  const double nll = -laplace_log_prob(zvals) - logdet_inv;
  if (!grads) return nll;

  // Parameter slots are laid out level by level, layer by layer (see parameters()).
  std::vector<std::size_t> slot_start;
  {
    std::size_t slot = 0;
    for (const auto& lvl : levels_) {
      for (const auto& layer : lvl.layers) {
        slot_start.push_back(slot);
        slot += param_slots(layer);
      }
    }
  }
  std::size_t flat_layer = slot_start.size();
  std::size_t zoff = dimension();
  Tensor dh;
  for (std::size_t l = levels_.size(); l-- > 0;) {
    const auto& lvl = levels_[l];
    const std::size_t count = lvl.latent_channels * lvl.shape.plane();
    zoff -= count;
    Tensor dzsec(Shape{lvl.latent_channels, lvl.shape.height, lvl.shape.width});
    for (std::size_t i = 0; i < count; ++i) {
      const double v = zvals[zoff + i];
      dzsec[i] = v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
    }
    Tensor dx = l + 1 < levels_.size() ? concat_channels(dzsec, dh) : dzsec;
    for (std::size_t i = lvl.layers.size(); i-- > 0;) {
      --flat_layer;
      const std::size_t nslots = param_slots(lvl.layers[i]);
      GradSlots slots(grads->data() + slot_start[flat_layer], nslots);
      dx = std::visit([&](const auto& layer) { return layer.inverse_vjp(tape[l][i], dx, -1.0, slots); },
                      lvl.layers[i]);
    }
    dh = unsqueeze(dx);
  }
  return nll;
}

std::vector<ParamRef> MultiscaleFlow::parameters() {
  std::vector<ParamRef> out;
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    for (std::size_t i = 0; i < levels_[l].layers.size(); ++i) {
      const auto prefix = layer_name(l, i) + ".";
      for (auto& p : layer_params(levels_[l].layers[i])) out.push_back({prefix + p.name, p.values});
    }
  }
  return out;
}

std::vector<std::vector<double>> MultiscaleFlow::zero_grads() {
  std::vector<std::vector<double>> g;
  for (auto& p : parameters()) g.emplace_back(p.values->size(), 0.0);
  return g;
}

std::size_t MultiscaleFlow::parameter_count() {
  std::size_t n = 0;
  for (auto& p : parameters()) n += p.values->size();
  return n;
}

void MultiscaleFlow::initialize_actnorm(std::span<const Tensor> batch) {
  std::vector<Tensor> hs(batch.begin(), batch.end());
  for (auto& h : hs) require_same_shape(h.shape(), config_.image, "initialize_actnorm");
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    auto& lvl = levels_[l];
    for (auto& h : hs) h = squeeze(h);
    for (std::size_t i = 0; i < lvl.layers.size(); ++i) {
      if (auto* an = std::get_if<ActNorm>(&lvl.layers[i])) an->initialize_from(hs);
      for (auto& h : hs) {
        double ld = 0.0;
        h = std::visit([&](const auto& layer) { return layer.inverse(h, ld); }, lvl.layers[i]);
      }
    }
    if (l + 1 < levels_.size()) {
      for (auto& h : hs) h = take_channels(h, lvl.latent_channels, lvl.shape.channels - lvl.latent_channels);
    }
  }
}

void MultiscaleFlow::perturb_parameters(Rng& rng, double scale) {
  for (auto& p : parameters()) {
    for (auto& v : *p.values) v += scale * rng.normal();
  }
}

}  // namespace flowrecon
