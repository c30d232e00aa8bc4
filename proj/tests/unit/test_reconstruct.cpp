#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "flow_test_util.hpp"
#include "flowrecon/metrics.hpp"
#include "flowrecon/reconstruct.hpp"

using namespace flowrecon;
using namespace flowrecon::testing;

namespace {

MultiscaleFlow toy_flow(std::size_t extent, std::size_t levels, std::uint64_t seed) {
  MultiscaleFlow flow(small_config(extent, extent, levels, 2, 8), seed);
  Rng rng(seed + 100);
  flow.perturb_parameters(rng, 0.05);
  return flow;
}

}  // namespace

TEST_CASE("latent projection") {
  Rng rng(1);
  MultiscaleFlow flow(small_config(8, 8, 2), 1);
  const auto n = flow.dimension();
  const auto z = random_latent(flow, rng);
  CHECK(project(z, n).values() == z.values());
  const auto one = project(z, 1);
  for (std::size_t i = 0; i + 1 < n; ++i) CHECK(one[i] == 0.0);
  CHECK(one[n - 1] == z[n - 1]);
  for (int t = 0; t < 1000; ++t) {
    const auto zz = random_latent(flow, rng);
    const auto k = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(n)));
    const auto once = project(zz, k);
    CHECK(project(once, k).values() == once.values());
  }
  CHECK_THROWS_AS(project(z, 0), ConfigError);
  CHECK_THROWS_AS(project(z, n + 1), ConfigError);
}

TEST_CASE("loss terms") {
  const auto flow = toy_flow(8, 2, 2);
  Rng rng(3);
  MriOperator full(full_mask(8));
  const auto z = random_latent(flow, rng, 0.3);
  const auto g = full.apply(flow.forward(z).image);
  CHECK(std::abs(loss_total(flow, full, g, z, 0.0)) < 1e-10);

  MriOperator h(poisson_disc_mask(8, 2.0, -1.0, rng));
  const auto g2 = h.apply(random_image(flow.config().image, rng));
  const double mu = 0.037;
  const auto t = loss_terms(flow, h, g2, z, mu);
  const auto f = flow.forward(z).image;
  const auto hf = h.apply(f);
  double r = 0.0;
  for (std::size_t i = 0; i < hf.size(); ++i) r += std::norm(g2.data()[i] - hf.data()[i]);
  CHECK(t.data == doctest::Approx(r / 64.0).epsilon(1e-14));
  CHECK(t.tv == tv(f));
  CHECK(t.total == t.data + mu * t.tv);
  CHECK(loss_total(flow, h, g2, z, mu) == t.total);
}

TEST_CASE("objective gradient in z matches finite differences on a 4x4 flow") {
  const auto flow = toy_flow(4, 2, 4);
  Rng rng(5);
  SamplingMask m{4, std::vector<std::uint8_t>(16, 0), 2.0, "tiny", 0};
  for (std::size_t i = 0; i < 16; i += 2) m.bits[i] = 1;
  MriOperator h(m);
  const auto g = add_noise(h, h.apply(random_image(flow.config().image, rng)), 20.0, rng);
  auto z = random_latent(flow, rng, 0.5);
  for (auto& v : z.values()) v += v >= 0 ? 0.05 : -0.05;  // keep |z| away from the kink
  const double mu = 0.1, lambda = 0.02, eps = 1e-2;
  const auto og = objective_and_grad(flow, h, g, z, mu, lambda, eps);
  double worst = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    auto up = z, down = z;
    const double step = 1e-6;
    up[i] += step;
    down[i] -= step;
    const double fd = (objective_and_grad(flow, h, g, up, mu, lambda, eps).value -
                       objective_and_grad(flow, h, g, down, mu, lambda, eps).value) /
                      (2 * step);
    worst = std::max(worst, std::abs(fd - og.grad[i]) / std::max(1.0, std::abs(fd)));
  }
  MESSAGE("worst relative error ", worst);
  CHECK(worst < 1e-4);
  CHECK(std::ranges::equal(og.image.values(), flow.forward(z).image.values()));
}

TEST_CASE("every projected iterate satisfies the subspace constraint") {
  const auto flow = toy_flow(8, 2, 6);
  Rng rng(7);
  MriOperator h(poisson_disc_mask(8, 2.0, -1.0, rng));
  const auto g = h.apply(random_image(flow.config().image, rng));
  const auto n = flow.dimension();
  for (std::size_t k : {std::size_t{1}, std::size_t{16}, std::size_t{23}, n / 2, n}) {
    ReconConfig cfg;
    cfg.k = k;
    cfg.mu = 0.01;
    cfg.max_iterations = 40;
    double worst = 0.0;
    std::size_t seen = 0;
    const auto r = inn_proj_tv(flow, h, g, cfg, [&](std::size_t, const LatentVector& z) {
      ++seen;
      for (std::size_t i = 0; i < n - k; ++i) worst = std::max(worst, std::abs(z[i]));
    });
    CHECK(worst == 0.0);
    CHECK(seen == r.iterations);
    CHECK(r.trace.size() == r.iterations + 1);
    CHECK(std::ranges::equal(r.image.values(), flow.forward(r.latent).image.values()));
    for (std::size_t i = 0; i < n - k; ++i) CHECK(r.latent[i] == 0.0);
  }
}

TEST_CASE("reconstruction starts at zero, lowers the loss and is deterministic") {
  const auto flow = toy_flow(8, 2, 8);
  Rng rng(9);
  MriOperator h(poisson_disc_mask(8, 2.0, -1.0, rng));
  const auto g = h.apply(random_image(flow.config().image, rng));
  ReconConfig cfg;
  cfg.mu = 0.005;
  cfg.max_iterations = 60;
  const auto a = inn_proj_tv(flow, h, g, cfg);
  const auto b = inn_proj_tv(flow, h, g, cfg);
  CHECK(a.trace[0].total == loss_total(flow, h, g, flow.zeros(), cfg.mu));
  CHECK(a.trace.back().total < a.trace.front().total);
  CHECK(a.latent.values() == b.latent.values());
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].total == b.trace[i].total);
  CHECK(a.warnings.empty());
}

TEST_CASE("trace replays from archived iterates") {
  const auto flow = toy_flow(8, 2, 10);
  Rng rng(11);
  MriOperator h(poisson_disc_mask(8, 2.0, -1.0, rng));
  const auto g = h.apply(random_image(flow.config().image, rng));
  ReconConfig cfg;
  cfg.mu = 0.02;
  cfg.max_iterations = 15;
  std::vector<LatentVector> iterates{flow.zeros()};
  const auto r = inn_proj_tv(flow, h, g, cfg, [&](std::size_t, const LatentVector& z) { iterates.push_back(z); });
  REQUIRE(iterates.size() == r.trace.size());
  for (std::size_t i = 0; i < iterates.size(); ++i) CHECK(loss_total(flow, h, g, iterates[i], cfg.mu) == r.trace[i].total);
}

TEST_CASE("k = n with a full mask inverts an in-range image") {
  const auto flow = toy_flow(8, 2, 12);
  Rng rng(13);
  MriOperator h(full_mask(8));
  const auto truth = flow.forward(random_latent(flow, rng, 0.5)).image;
  ReconConfig cfg;
  cfg.k = flow.dimension();
  cfg.max_iterations = 2000;
  const auto r = inn_proj_tv(flow, h, h.apply(truth), cfg);
  MESSAGE("rmse ", rmse(r.image, truth), " after ", r.iterations, " iterations");
  CHECK(rmse(r.image, truth) < 1e-3);
}

TEST_CASE("projected estimate is no worse than pure truncation") {
  const auto flow = toy_flow(8, 2, 14);
  Rng rng(15);
  MriOperator h(full_mask(8));
  const auto truth = random_image(flow.config().image, rng);
  const auto k = flow.dimension() / 4;
  const auto truncated = flow.forward(project(flow.inverse(truth).z, k)).image;
  ReconConfig cfg;
  cfg.k = k;
  cfg.max_iterations = 2000;
  const auto r = inn_proj_tv(flow, h, h.apply(truth), cfg);
  MESSAGE("projected ", rmse(r.image, truth), " truncation ", rmse(truncated, truth));
  CHECK(rmse(r.image, truth) <= rmse(truncated, truth) + 1e-3);
}

TEST_CASE("debiasing") {
  const auto flow = toy_flow(8, 2, 16);
  Rng rng(17);
  MriOperator h(poisson_disc_mask(8, 2.0, -1.0, rng));
  const auto truth = flow.forward(project(random_latent(flow, rng, 0.5), 16)).image;
  const auto g = h.apply(truth);
  ReconConfig cfg;
  cfg.k = 16;
  cfg.max_iterations = 300;
  const auto proj = inn_proj_tv(flow, h, g, cfg);

  const auto same = debias(flow, h, g, proj, cfg, 0);
  CHECK(same.latent.values() == proj.latent.values());
  CHECK(same.trace.size() == proj.trace.size());

  const auto deb = debias(flow, h, g, proj, cfg, 50);
  CHECK(deb.trace.size() == 51);
  CHECK(deb.trace.front().total == proj.trace.back().total);
  const double before = loss_terms(flow, h, g, proj.latent, 0.0).data;
  const double after = loss_terms(flow, h, g, deb.latent, 0.0).data;
  CHECK(after <= before + 1e-8);
}

TEST_CASE("debiasing in the inverse-crime setting does not raise the error") {
  const auto flow = toy_flow(8, 2, 20);
  Rng rng(21);
  MriOperator h(full_mask(8));
  const auto truth = flow.forward(project(random_latent(flow, rng, 0.5), 16)).image;
  const auto g = h.apply(truth);
  ReconConfig cfg;
  cfg.k = 16;
  cfg.max_iterations = 300;
  const auto proj = inn_proj_tv(flow, h, g, cfg);
  const auto deb = debias(flow, h, g, proj, cfg, 100);
  MESSAGE("projected ", rmse(proj.image, truth), " debiased ", rmse(deb.image, truth));
  CHECK(rmse(deb.image, truth) <= rmse(proj.image, truth) + 1e-6);
}

TEST_CASE("untrained flows trigger a warning") {
  MultiscaleFlow flow(small_config(8, 8, 2), 1);
  MriOperator h(full_mask(8));
  Rng rng(1);
  ReconConfig cfg;
  cfg.max_iterations = 2;
  const auto r = inn_proj_tv(flow, h, h.apply(random_image(flow.config().image, rng)), cfg);
  CHECK(r.warnings.size() == 1);
}

TEST_CASE("reconstruction argument checks") {
  const auto flow = toy_flow(8, 2, 1);
  MriOperator h(full_mask(8));
  ComplexTensor g(h.measurement_shape());
  ReconConfig cfg;
  cfg.k = flow.dimension() + 1;
  CHECK_THROWS_AS(inn_proj_tv(flow, h, g, cfg), ConfigError);
  cfg.k = 0;
  cfg.mu = -1;
  CHECK_THROWS_AS(inn_proj_tv(flow, h, g, cfg), ConfigError);
  cfg.mu = 0;
  CHECK_THROWS_AS(inn_proj_tv(flow, MriOperator(full_mask(16)), ComplexTensor(Shape{1, 16, 16}), cfg), DimensionError);
}

TEST_CASE("truncation study") {
  const auto flow = toy_flow(16, 3, 18);
  Rng rng(19);
  std::vector<Tensor> images;
  for (int i = 0; i < 3; ++i) images.push_back(random_image(flow.config().image, rng));

  CHECK(valid_fractions(flow.section_sizes()) == std::vector<double>{1.0, 0.5, 0.25});
  const auto rows = truncation_study(flow, images, {1.0, 0.5, 0.25});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].mean_rmse < 1e-10);
  CHECK(rows[0].mean_ssim == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(rows[1].mean_rmse > 0.0);

  try {
    truncation_study(flow, images, {0.3});
    FAIL("expected a configuration error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("0.25") != std::string::npos);
  }

  const auto haar = haar_truncation_study(images, 3, {1.0, 0.25, 0.0625});
  REQUIRE(haar.size() == 3);
  CHECK(haar[0].mean_rmse < 1e-12);
  CHECK(haar[1].mean_rmse <= haar[2].mean_rmse);
  CHECK_THROWS_AS(haar_truncation_study(images, 3, {0.5}), ConfigError);
}
