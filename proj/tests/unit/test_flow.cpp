#include <cmath>
#include <numbers>

#include "doctest.h"
#include "flowrecon/gradcheck.hpp"
#include "flowrecon/ops.hpp"
#include "unit/flow_test_util.hpp"

using namespace flowrecon;
using namespace flowrecon::testing;

namespace {

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double gamma0(const FlowConfig& c) { return c.scale_floor + (1 - c.scale_floor) * sigmoid(c.scale_shift); }

std::size_t transformed_count(const MultiscaleFlow& flow) {
  std::size_t count = 0;
  for (const auto& lvl : flow.levels()) count += flow.config().steps_per_level * lvl.shape.size() / 2;
  return count;
}

}  // namespace

TEST_CASE("section sizes add up to the image dimension") {
  for (std::size_t levels = 1; levels <= 5; ++levels) {
    for (std::size_t ch : {1, 2}) {
      FlowConfig c = small_config(32, 32, levels, 1, 2);
      c.image.channels = ch;
      MultiscaleFlow flow(c, 1);
      const auto sizes = flow.section_sizes();
      CHECK(sizes.size() == levels);
      CHECK(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}) == c.image.size());
    }
  }
  MultiscaleFlow l3(small_config(32, 32, 3, 1, 2), 1);
  CHECK(l3.section_sizes() == std::vector<std::size_t>{512, 256, 256});
  MultiscaleFlow l5(small_config(32, 32, 5, 1, 2), 1);
  CHECK(l5.section_sizes() == std::vector<std::size_t>{512, 256, 128, 64, 64});
}

TEST_CASE("flow configuration validation") {
  CHECK_THROWS_AS(MultiscaleFlow(small_config(32, 32, 6), 1), ConfigError);
  CHECK_THROWS_AS(MultiscaleFlow(small_config(12, 16, 3), 1), ConfigError);
  FlowConfig bad = small_config(8, 8, 1);
  bad.scale_floor = 1.0;
  CHECK_THROWS_AS(MultiscaleFlow(bad, 1), ConfigError);
}

TEST_CASE("fresh network: logdet is the transformed count times ln gamma0") {
  const auto cfg = small_config(8, 8, 2);
  MultiscaleFlow flow(cfg, 3);
  Rng rng(4);
  const auto z = random_latent(flow, rng);
  const auto out = flow.forward(z);
  // the random rotations contribute ln|det| = 0
  const double expected = static_cast<double>(transformed_count(flow)) * std::log(gamma0(cfg));
  CHECK(std::abs(out.logdet - expected) < 1e-10);
}

TEST_CASE("fresh coupling inverse divides the transformed half by gamma0") {
  Rng rng(5);
  const double c = 0.05, s0 = 2.0;
  AffineCoupling cp(4, 8, true, c, s0, rng);
  Tensor y(Shape{4, 3, 3});
  for (auto& v : y.data()) v = rng.normal();
  double ld = 0.0;
  const auto x = cp.inverse(y, ld);
  const double g0 = c + (1 - c) * sigmoid(s0);
  for (std::size_t i = 0; i < 18; ++i) CHECK(x[i] == y[i]);
  for (std::size_t i = 18; i < 36; ++i) CHECK(std::abs(x[i] - y[i] / g0) < 1e-15);
  CHECK(std::abs(ld + 18 * std::log(g0)) < 1e-12);
}

TEST_CASE("round trips with perturbed parameters") {
  MultiscaleFlow flow(small_config(16, 16, 3, 2, 8), 6);
  Rng rng(7);
  flow.perturb_parameters(rng, 0.05);
  for (int i = 0; i < 25; ++i) {
    const auto z = random_latent(flow, rng);
    const auto f = flow.forward(z);
    const auto back = flow.inverse(f.image);
    CHECK(max_abs_diff(back.z.values(), z.values()) <= 1e-8);
    CHECK(std::abs(back.logdet - f.logdet) <= 1e-10);

    const auto img = random_image(flow.config().image, rng);
    const auto zi = flow.inverse(img);
    const auto again = flow.forward(zi.z);
    CHECK(max_abs_diff(again.image.values(), img.values()) <= 1e-8);
    CHECK(std::abs(zi.logdet - again.logdet) <= 1e-10);
  }
}

TEST_CASE("logdet matches the numerically assembled Jacobian on a 4x4 two-level flow") {
  MultiscaleFlow flow(small_config(4, 4, 2, 4, 8), 8);
  Rng rng(9);
  flow.perturb_parameters(rng, 0.1);
  for (int trial = 0; trial < 3; ++trial) {
    const auto z = random_latent(flow, rng);
    const double analytic = flow.forward(z).logdet;
    const double numeric = log_abs_det(numeric_jacobian(flow, z), 16);
    CHECK(std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric)) < 1e-4);
  }
}

TEST_CASE("logdet is the sum of per-layer contributions") {
  MultiscaleFlow flow(small_config(8, 8, 3, 2, 4), 10);
  Rng rng(11);
  flow.perturb_parameters(rng, 0.05);
  const auto z = random_latent(flow, rng);
  std::vector<double> parts;
  const double total = flow.forward(z, &parts).logdet;
  CHECK(parts.size() == 3 * 2 * 3);
  double s = 0.0;
  for (double p : parts) s += p;
  CHECK(std::abs(s - total) <= 1e-10);
}

TEST_CASE("coupling scales stay in (c, 1]") {
  Rng rng(12);
  AffineCoupling cp(4, 8, false, 0.05, 2.0, rng);
  for (auto& p : cp.params()) {
    for (auto& v : *p.values) v += 2.0 * rng.normal();
  }
  Tensor x(Shape{4, 6, 6});
  for (int trial = 0; trial < 20; ++trial) {
    for (auto& v : x.data()) v = 5.0 * rng.normal();
    const auto g = cp.scales(x);
    for (double v : g.data()) {
      CHECK(v > 0.05);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("sampling") {
  MultiscaleFlow flow(small_config(8, 8, 2), 13);
  Rng a(99), b(99), c(5);
  const auto zero_image = flow.forward(flow.zeros()).image;
  const auto t0 = flow.sample(c, 0.0);
  CHECK(t0.data() == zero_image.data());
  const auto s1 = flow.sample(a, 0.8);
  const auto s2 = flow.sample(b, 0.8);
  CHECK(s1.shape() == flow.config().image);
  CHECK(s1.data() == s2.data());
  for (double v : s1.data()) CHECK(std::isfinite(v));
  CHECK_THROWS_AS(flow.sample(c, -1.0), ConfigError);
}

TEST_CASE("log_prob is the change of variables with the Laplace prior") {
  MultiscaleFlow flow(small_config(8, 8, 2), 14);
  Rng rng(15);
  flow.perturb_parameters(rng, 0.05);
  const auto z = random_latent(flow, rng);
  const auto out = flow.forward(z);
  CHECK(std::abs(flow.log_prob(out.image) - (laplace_log_prob(z.values()) - out.logdet)) < 1e-8);
}

TEST_CASE("doubling the ActNorm scale shifts log_prob by -n ln 2 plus the prior change") {
  // couplings stay at initialization so their logdet does not depend on the input
  MultiscaleFlow flow(small_config(8, 8, 1, 1, 4), 16);
  Rng rng(17);
  for (auto& layer : flow.levels()[0].layers) {
    if (auto* an = std::get_if<ActNorm>(&layer)) {
      for (auto& p : an->params())
        for (auto& v : *p.values) v += 0.3 * rng.normal();
    }
  }
  const auto f = random_image(flow.config().image, rng);
  const double before = flow.log_prob(f);
  const auto z_before = flow.inverse(f).z;
  for (auto& layer : flow.levels()[0].layers) {
    if (auto* an = std::get_if<ActNorm>(&layer)) {
      for (auto& v : an->log_scale()) v += std::numbers::ln2;
    }
  }
  const double after = flow.log_prob(f);
  const auto z_after = flow.inverse(f).z;
  const double n = static_cast<double>(flow.dimension());
  const double prior_change = laplace_log_prob(z_after.values()) - laplace_log_prob(z_before.values());
  CHECK(std::abs((after - before) - (-n * std::numbers::ln2 + prior_change)) < 1e-8);
}

TEST_CASE("fresh single-level flow with identity mixing has a closed-form log_prob") {
  const auto cfg = small_config(8, 8, 1, 4, 4);
  MultiscaleFlow flow(cfg, 18);
  make_mixing_identity(flow);
  Rng rng(19);
  const auto f = random_image(cfg.image, rng);
  // four alternating couplings scale every component by gamma0 exactly twice
  const double g0 = gamma0(cfg);
  double abs_sum = 0.0;
  for (double v : f.data()) abs_sum += std::abs(v);
  const double n = static_cast<double>(f.size());
  const double expected = -abs_sum / (g0 * g0) - n * std::numbers::ln2 - 2 * n * std::log(g0);
  CHECK(std::abs(flow.log_prob(f) - expected) < 1e-8);
}

TEST_CASE("vjp_latent matches finite differences and is linear") {
  MultiscaleFlow flow(small_config(4, 4, 2, 2, 6), 20);
  Rng rng(21);
  flow.perturb_parameters(rng, 0.1);
  const auto z = random_latent(flow, rng);
  Tensor u(flow.config().image);
  for (auto& v : u.data()) v = rng.normal();

  const auto zero = flow.vjp_latent(z, Tensor(flow.config().image));
  for (double v : zero.values()) CHECK(v == 0.0);

  const auto rev = flow.vjp_latent(z, u);
  const Tensor zt(Shape{1, 1, z.size()}, z.values());
  auto loss = [&](const Tensor& t) {
    return dot(u.values(), flow.forward(LatentVector(z.section_sizes(), t.data())).image.values());
  };
  const auto fd = finite_diff_grad(loss, zt, 1e-5);
  CHECK(relative_error(rev.values(), fd.values()) < 1e-5);

  Tensor u2(flow.config().image);
  for (auto& v : u2.data()) v = rng.normal();
  const auto a = flow.vjp_latent(z, 3.0 * u + u2);
  const auto b1 = flow.vjp_latent(z, u);
  const auto b2 = flow.vjp_latent(z, u2);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - (3.0 * b1[i] + b2[i])) < 1e-10);
}

TEST_CASE("shape and finiteness errors") {
  MultiscaleFlow flow(small_config(8, 8, 2), 22);
  CHECK_THROWS_AS(flow.forward(LatentVector({10}, 0.0)), DimensionError);
  CHECK_THROWS_AS(flow.inverse(Tensor(Shape{1, 4, 8})), DimensionError);
  auto z = flow.zeros();
  z[3] = std::numeric_limits<double>::quiet_NaN();
  try {
    flow.forward(z);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("layer level") != std::string::npos);
  }
}

TEST_CASE("ActNorm data initialization normalizes the first batch") {
  MultiscaleFlow flow(small_config(8, 8, 1, 1, 4), 23);
  Rng rng(24);
  std::vector<Tensor> batch;
  for (int i = 0; i < 8; ++i) {
    Tensor t = random_image(flow.config().image, rng);
    for (auto& v : t.data()) v = 3.0 * v + 1.5;
    batch.push_back(t);
  }
  flow.initialize_actnorm(batch);
  const auto& an = std::get<ActNorm>(flow.levels()[0].layers[0]);
  for (std::size_t c = 0; c < an.channels(); ++c) {
    double sum = 0, sq = 0, count = 0;
    for (const auto& b : batch) {
      double ld = 0;
      const auto x = an.inverse(squeeze(b), ld);
      for (double v : x.channel(c)) {
        sum += v;
        sq += v * v;
        count += 1;
      }
    }
    CHECK(std::abs(sum / count) < 1e-10);
    CHECK(std::abs(sq / count - 1.0) < 1e-4);
  }
}
