#include "commands.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

#include "config.hpp"
#include "flowrecon/archive.hpp"
#include "flowrecon/checkpoint.hpp"
#include "flowrecon/evaluation.hpp"
#include "flowrecon/training.hpp"
#include "output.hpp"

namespace flowrecon::app {
namespace {

// Stream indices under the master seed.
enum SeedStream : std::uint64_t { kFlowInit = 1, kPhantoms = 2, kShuffle = 3, kMask = 4, kNoise = 5, kSampling = 6 };
constexpr std::uint64_t kHeldOutStream = 1;  // phantom stream for evaluation images (training uses 0)

struct Options {
  std::string config;
  std::string out;
  std::string checkpoint;
  std::string method;
  std::string fractions;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

class Context {
 public:
  Context(ExperimentConfig cfg, std::ostream& log) : cfg_(std::move(cfg)), log_(log) {
    out_dir_ = cfg_.text("run.out");
    seed_ = cfg_.seed("run.seed");
  }

  const ExperimentConfig& cfg() const { return cfg_; }
  std::ostream& log() { return log_; }
  std::uint64_t stream_seed(SeedStream s) const { return derive_seed(seed_, s); }

  std::string path(const std::string& name) const { return (std::filesystem::path(out_dir_) / name).string(); }

  void begin() {
    make_directory(out_dir_);
    write_text(path("config.resolved.ini"), cfg_.resolved());
  }

  FlowConfig flow_config() const {
    FlowConfig f;
    const auto extent = cfg_.count("flow.extent");
    f.image = Shape{cfg_.count("flow.channels"), extent, extent};
    f.levels = cfg_.count("flow.levels");
    f.steps_per_level = cfg_.count("flow.steps_per_level");
    f.hidden_channels = cfg_.count("flow.hidden_channels");
    f.scale_floor = cfg_.number("flow.scale_floor");
    f.scale_shift = cfg_.number("flow.scale_shift");
    if (f.image.channels != 1 && f.image.channels != 2) throw ConfigError("config key 'flow.channels' must be 1 or 2");
    f.validate();
    return f;
  }

  PhantomConfig phantom_config() const {
    PhantomConfig p;
    p.extent = cfg_.count("flow.extent");
    p.min_ellipses = cfg_.count("phantom.min_ellipses");
    p.max_ellipses = cfg_.count("phantom.max_ellipses");
    p.body_intensity_min = cfg_.number("phantom.body_intensity_min");
    p.body_intensity_max = cfg_.number("phantom.body_intensity_max");
    p.feature_intensity_min = cfg_.number("phantom.feature_intensity_min");
    p.feature_intensity_max = cfg_.number("phantom.feature_intensity_max");
    p.feature_axis_min = cfg_.number("phantom.feature_axis_min");
    p.feature_axis_max = cfg_.number("phantom.feature_axis_max");
    p.center_spread = cfg_.number("phantom.center_spread");
    p.smooth_background = cfg_.flag("phantom.smooth_background");
    p.background_level = cfg_.number("phantom.background_level");
    p.seed = stream_seed(kPhantoms);
    p.validate();
    return p;
  }

  /// Phantoms shaped for the flow; two-channel flows get a random linear phase.
  std::vector<Tensor> phantoms(std::size_t count, std::uint64_t stream) const {
    const auto pc = phantom_config();
    auto images = gen_dataset(pc, count, stream);
    const auto channels = cfg_.count("flow.channels");
    if (channels == 1) return images;
    Rng rng(derive_seed(pc.seed, 1000 + stream));
    for (auto& img : images) {
      const double a = rng.uniform(-0.5, 0.5) * std::numbers::pi, b = rng.uniform(-0.5, 0.5) * std::numbers::pi;
      const double c = rng.uniform(0.0, 2.0 * std::numbers::pi);
      Tensor two(Shape{2, img.height(), img.width()});
      for (std::size_t y = 0; y < img.height(); ++y) {
        for (std::size_t x = 0; x < img.width(); ++x) {
          const double u = 2.0 * static_cast<double>(x) / static_cast<double>(img.width()) - 1.0;
          const double v = 2.0 * static_cast<double>(y) / static_cast<double>(img.height()) - 1.0;
          const double phase = a * u + b * v + c;
          two.at(0, y, x) = img.at(0, y, x) * std::cos(phase);
          two.at(1, y, x) = img.at(0, y, x) * std::sin(phase);
        }
      }
      img = std::move(two);
    }
    return images;
  }

  std::vector<Tensor> held_out(std::size_t count) const { return phantoms(count, kHeldOutStream); }

  TrainConfig train_config() const {
    TrainConfig t;
    t.epochs = cfg_.count("training.epochs");
    t.batch_size = cfg_.count("training.batch_size");
    t.dataset_size = cfg_.count("training.dataset_size");
    t.adam = AdamHyper{cfg_.number("training.learning_rate"), cfg_.number("training.beta1"),
                       cfg_.number("training.beta2"), cfg_.number("training.epsilon")};
    t.seed = stream_seed(kShuffle);
    t.validate();
    return t;
  }

  std::string checkpoint_path() const {
    const auto& p = cfg_.text("training.checkpoint");
    return p.empty() ? path("checkpoint.flowck") : p;
  }

  MultiscaleFlow load_flow() const {
    const auto path = checkpoint_path();
    if (!std::filesystem::exists(path)) {
      throw IoError("checkpoint '" + path + "' not found (config key 'training.checkpoint'); run `train` first");
    }
    auto ck = load_checkpoint(path);
    if (!(ck.flow.config() == flow_config())) {
      throw ConfigError("checkpoint '" + path + "' geometry does not match the [flow] section");
    }
    return std::move(ck.flow);
  }

  ChannelMode channel_mode() const {
    const auto& m = cfg_.text("mask.channel_mode");
    ChannelMode mode;
    if (m == "real") {
      mode = ChannelMode::Real;
    } else if (m == "two-channel") {
      mode = ChannelMode::TwoChannel;
    } else {
      throw ConfigError("config key 'mask.channel_mode' must be 'real' or 'two-channel', got '" + m + "'");
    }
    const auto channels = cfg_.count("flow.channels");
    if ((mode == ChannelMode::TwoChannel) != (channels == 2)) {
      throw ConfigError("config key 'mask.channel_mode' conflicts with flow.channels = " + std::to_string(channels));
    }
    return mode;
  }

  SamplingMask mask(double ratio) const {
    Rng rng(stream_seed(kMask));
    const auto extent = cfg_.count("flow.extent");
    const auto& type = cfg_.text("mask.type");
    if (type == "poisson") return poisson_disc_mask(extent, ratio, cfg_.number("mask.calibration_radius"), rng);
    if (type == "cartesian") return cartesian_mask(extent, ratio, cfg_.count("mask.center_lines"), rng);
    if (type == "full") return full_mask(extent);
    throw ConfigError("config key 'mask.type' must be poisson, cartesian or full, got '" + type + "'");
  }

  std::string mask_label(double ratio) const {
    const auto& type = cfg_.text("mask.type");
    return type == "full" ? type : type + "-R" + format_number(ratio);
  }

  MriOperator op(double ratio) const { return MriOperator(mask(ratio), channel_mode()); }

  ReconConfig recon_config() const {
    ReconConfig r;
    r.k = cfg_.count("recon.k");
    r.mu = cfg_.number("recon.mu");
    r.lambda = cfg_.number("recon.lambda");
    r.learning_rate = cfg_.number("recon.learning_rate");
    r.max_iterations = cfg_.count("recon.max_iterations");
    r.tolerance = cfg_.number("recon.tolerance");
    r.window = cfg_.count("recon.window");
    r.tv_epsilon = cfg_.number("recon.tv_epsilon");
    r.seed = seed_;
    return r;
  }

  TvConfig tv_config() const {
    TvConfig t;
    t.epsilon = cfg_.number("recon.tv_epsilon");
    t.prox_max_iter = cfg_.count("recon.prox_iterations");
    return t;
  }

  ComplexTensor measure(const MriOperator& h, const Tensor& truth, double snr_db) const {
    Rng rng(stream_seed(kNoise));
    return add_noise(h, h.apply(truth), snr_db, rng);
  }

 private:
  ExperimentConfig cfg_;
  std::ostream& log_;
  std::string out_dir_;
  std::uint64_t seed_ = 0;
};

const std::string& require_method(const std::string& m) {
  if (m != "inn" && m != "pls-tv") throw ConfigError("config key 'recon.method' must be 'inn' or 'pls-tv', got '" + m + "'");
  return m;
}

/// One reconstruction by either method. For PLS-TV the TV weight is mu.
struct Estimate {
  Tensor image;
  ReconResult inn;  // empty for PLS-TV
  FistaResult fista;
};

Estimate reconstruct_with(const Context& ctx, const std::string& method, const MultiscaleFlow* flow,
                          const MriOperator& h, const ComplexTensor& g, const ReconConfig& rc, std::ostream* warn) {
  Estimate e;
  if (method == "pls-tv") {
    e.fista = fista_pls_tv(h, g, rc.mu, ctx.cfg().count("recon.fista_iterations"), ctx.tv_config());
    e.image = e.fista.image;
    return e;
  }
  e.inn = inn_proj_tv(*flow, h, g, rc);
  const auto debias_iters = ctx.cfg().count("recon.debias_iterations");
  if (debias_iters > 0) e.inn = debias(*flow, h, g, e.inn, rc, debias_iters);
  if (warn) {
    for (const auto& w : e.inn.warnings) *warn << "warning: " << w << '\n';
  }
  e.image = e.inn.image;
  return e;
}

Tensor target_image(const Context& ctx, const MultiscaleFlow* flow, const ReconConfig& rc) {
  const auto index = ctx.cfg().count("recon.target_index");
  auto images = ctx.held_out(index + 1);
  Tensor truth = images[index];
  const auto& kind = ctx.cfg().text("recon.target");
  if (kind == "phantom") return truth;
  if (kind == "projected") {
    if (!flow) throw ConfigError("config key 'recon.target' = projected needs a trained flow");
    return flow->forward(project(flow->inverse(truth).z, rc.resolved_k(flow->dimension()))).image;
  }
  throw ConfigError("config key 'recon.target' must be 'phantom' or 'projected', got '" + kind + "'");
}

std::string csv_text(const std::function<void(std::ostream&)>& writer) {
  std::ostringstream os;
  writer(os);
  return os.str();
}

// ---- subcommands -----------------------------------------------------------

void cmd_gen_data(Context& ctx) {
  const auto count = ctx.cfg().count("training.dataset_size");
  const auto images = ctx.phantoms(count, 0);
  ArrayArchive ar;
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "phantom_%04zu", i);
    ar.add(name, images[i]);
    if (i < 8) write_pgm(ctx.path(std::string(name) + ".pgm"), images[i]);
  }
  ar.save(ctx.path("dataset.flowar"));
  ctx.log() << "wrote " << images.size() << " phantoms to " << ctx.path("dataset.flowar") << '\n';
}

void cmd_train(Context& ctx) {
  MultiscaleFlow flow(ctx.flow_config(), ctx.stream_seed(kFlowInit));
  const auto tc = ctx.train_config();
  const auto data = ctx.phantoms(tc.dataset_size, 0);
  const auto result = train(flow, tc, std::span<const Tensor>(data));
  const double final_nll = result.epoch_nll.empty() ? result.initial_nll : result.epoch_nll.back();
  save_checkpoint(ctx.checkpoint_path(), flow, TrainingMetadata{tc.epochs, final_nll});
  write_text(ctx.path("train_history.csv"), csv_text([&](std::ostream& os) {
               os << "epoch,nll\n0," << format_number(result.initial_nll) << '\n';
               for (std::size_t e = 0; e < result.epoch_nll.size(); ++e) {
                 os << e + 1 << ',' << format_number(result.epoch_nll[e]) << '\n';
               }
             }));
  ctx.log() << "trained " << tc.epochs << " epochs: nll " << result.initial_nll << " -> " << final_nll
            << "; checkpoint " << ctx.checkpoint_path() << '\n';
}

void cmd_sample(Context& ctx) {
  const auto flow = ctx.load_flow();
  Rng rng(ctx.stream_seed(kSampling));
  const auto count = ctx.cfg().count("sample.count");
  const double temperature = ctx.cfg().number("sample.temperature");
  ArrayArchive ar;
  for (std::size_t i = 0; i < count; ++i) {
    const auto img = flow.sample(rng, temperature);
    const std::string name = "sample_" + std::to_string(i);
    ar.add(name, img);
    write_pgm(ctx.path(name + ".pgm"), img);
  }
  ar.save(ctx.path("samples.flowar"));
  ctx.log() << "wrote " << count << " samples\n";
}

void cmd_mask(Context& ctx) {
  const double ratio = ctx.cfg().number("mask.ratio");
  const auto m = ctx.mask(ratio);
  write_pbm(ctx.path("mask.pbm"), m);
  ArrayArchive ar;
  std::vector<double> bits(m.bits.begin(), m.bits.end());
  ar.add(NamedArray{"mask", {m.extent, m.extent}, bits});
  ar.save(ctx.path("mask.flowar"));
  write_text(ctx.path("mask.csv"), csv_text([&](std::ostream& os) {
               os << "type,nominal_ratio,achieved_ratio,sampled,total\n"
                  << ctx.cfg().text("mask.type") << ',' << format_number(m.nominal_ratio) << ','
                  << format_number(m.achieved_ratio()) << ',' << m.count() << ',' << m.bits.size() << '\n';
             }));
  ctx.log() << m.descriptor << ": achieved R = " << m.achieved_ratio() << '\n';
}

void cmd_reconstruct(Context& ctx, std::ostream& err) {
  const auto& method = require_method(ctx.cfg().text("recon.method"));
  const double ratio = ctx.cfg().number("mask.ratio");
  const double snr = ctx.cfg().number("noise.snr_db");
  std::optional<MultiscaleFlow> flow;
  if (method == "inn" || ctx.cfg().text("recon.target") == "projected") flow = ctx.load_flow();
  const auto rc = ctx.recon_config();
  const auto h = ctx.op(ratio);
  const auto truth = target_image(ctx, flow ? &*flow : nullptr, rc);
  const auto g = ctx.measure(h, truth, snr);
  const auto est = reconstruct_with(ctx, method, flow ? &*flow : nullptr, h, g, rc, &err);

  const auto metrics = score(est.image, truth);
  const std::size_t k = method == "inn" ? rc.resolved_k(flow->dimension()) : 0;
  write_text(ctx.path("metrics.csv"), csv_text([&](std::ostream& os) {
               write_metrics_csv(os, {SweepRow{SweepPoint{method, ctx.mask_label(ratio), snr, k, rc.mu, rc.lambda},
                                               metrics, ""}});
             }));
  if (method == "inn") {
    write_text(ctx.path("trace.csv"), csv_text([&](std::ostream& os) { write_trace_csv(os, est.inn.trace); }));
  } else {
    write_text(ctx.path("trace.csv"), csv_text([&](std::ostream& os) {
                 os << "iteration,objective\n";
                 for (std::size_t i = 0; i < est.fista.loss.size(); ++i) os << i << ',' << format_number(est.fista.loss[i]) << '\n';
               }));
  }
  ArrayArchive ar;
  ar.add("estimate", est.image);
  ar.add("truth", truth);
  if (method == "inn") ar.add(NamedArray{"latent", {est.inn.latent.size()}, est.inn.latent.values()});
  ar.save(ctx.path("reconstruction.flowar"));
  write_pgm(ctx.path("estimate.pgm"), est.image);
  write_pgm(ctx.path("truth.pgm"), truth);
  ctx.log() << method << " rmse=" << format_number(metrics.rmse) << " ssim=" << format_number(metrics.ssim) << '\n';
}

void cmd_truncate_study(Context& ctx) {
  const auto flow = ctx.load_flow();
  std::vector<double> fractions;
  for (double pct : ctx.cfg().numbers("evaluation.fractions")) fractions.push_back(pct / 100.0);
  const auto images = ctx.held_out(ctx.cfg().count("evaluation.test_images"));
  const auto rows = truncation_study(flow, images, fractions);
  write_text(ctx.path("truncation.csv"), csv_text([&](std::ostream& os) { write_truncation_csv(os, "inn", rows); }));

  auto haar_levels = ctx.cfg().count("evaluation.haar_levels");
  if (haar_levels == 0) haar_levels = flow.config().levels;
  std::vector<std::size_t> sizes;
  for (const auto& s : haar_forward(images.front(), haar_levels).sections) sizes.push_back(s.size());
  const auto haar_rows = haar_truncation_study(images, haar_levels, valid_fractions(sizes));
  write_text(ctx.path("truncation_haar.csv"),
             csv_text([&](std::ostream& os) { write_truncation_csv(os, "haar", haar_rows); }));

  const auto z = flow.inverse(images.front()).z;
  write_pgm(ctx.path("original.pgm"), images.front());
  for (double f : fractions) {
    const auto kept = static_cast<std::size_t>(std::llround(f * static_cast<double>(z.size())));
    write_pgm(ctx.path("truncated_" + format_number(100.0 * f) + ".pgm"), flow.forward(project(z, kept)).image);
  }
  for (const auto& r : rows) {
    ctx.log() << "kept " << 100.0 * r.fraction << "%: rmse " << r.mean_rmse << " ssim " << r.mean_ssim << '\n';
  }
}

void cmd_bias_variance(Context& ctx, std::ostream& err) {
  const auto& method = require_method(ctx.cfg().text("recon.method"));
  std::optional<MultiscaleFlow> flow;
  if (method == "inn" || ctx.cfg().text("recon.target") == "projected") flow = ctx.load_flow();
  const auto rc = ctx.recon_config();
  const auto h = ctx.op(ctx.cfg().number("mask.ratio"));
  const auto truth = target_image(ctx, flow ? &*flow : nullptr, rc);
  const double snr = ctx.cfg().number("noise.snr_db");
  if (!std::isfinite(snr)) throw ConfigError("config key 'noise.snr_db' must be finite for bias-variance");
  const Reconstructor recon = [&](const ComplexTensor& g, double mu) {
    ReconConfig c = rc;
    c.mu = mu;
    return reconstruct_with(ctx, method, flow ? &*flow : nullptr, h, g, c, nullptr).image;
  };
  const auto rows = bias_variance(recon, truth, h, NoiseModel{snr, ctx.stream_seed(kNoise)},
                                  ctx.cfg().count("evaluation.realizations"), ctx.cfg().numbers("evaluation.mus"));
  write_text(ctx.path("bias_variance.csv"), csv_text([&](std::ostream& os) { write_bias_variance_csv(os, rows); }));
  ArrayArchive ar;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].error.empty()) {
      err << "mu " << rows[i].mu << " failed: " << rows[i].error << '\n';
      continue;
    }
    ar.add("bias_" + std::to_string(i), rows[i].bias);
    ar.add("variance_" + std::to_string(i), rows[i].variance);
  }
  ar.save(ctx.path("bias_variance.flowar"));
  for (const auto& r : rows) {
    ctx.log() << "mu " << r.mu << ": avg sq bias " << r.avg_sq_bias << ", avg variance " << r.avg_variance << '\n';
  }
}

void cmd_sweep(Context& ctx) {
  const auto methods = ctx.cfg().words("sweep.methods");
  for (const auto& m : methods) require_method(m);
  std::optional<MultiscaleFlow> flow;
  const bool needs_flow = std::find(methods.begin(), methods.end(), "inn") != methods.end() ||
                          ctx.cfg().text("recon.target") == "projected";
  if (needs_flow) flow = ctx.load_flow();
  const auto base = ctx.recon_config();
  const auto truth = target_image(ctx, flow ? &*flow : nullptr, base);

  std::vector<SweepPoint> grid;
  for (const auto& method : methods) {
    for (double ratio : ctx.cfg().numbers("sweep.ratios")) {
      for (double snr : ctx.cfg().numbers("sweep.snrs")) {
        for (double mu : ctx.cfg().numbers("sweep.mus")) {
          if (method == "pls-tv") {
            grid.push_back(SweepPoint{method, ctx.mask_label(ratio), snr, 0, mu, 0.0});
            continue;
          }
          for (double k : ctx.cfg().numbers("sweep.ks")) {
            for (double lambda : ctx.cfg().numbers("sweep.lambdas")) {
              if (k < 0 || k != std::floor(k)) throw ConfigError("config key 'sweep.ks' must hold non-negative integers");
              ReconConfig rc = base;
              rc.k = static_cast<std::size_t>(k);
              grid.push_back(SweepPoint{method, ctx.mask_label(ratio), snr, rc.resolved_k(flow->dimension()), mu, lambda});
            }
          }
        }
      }
    }
  }
  // Ratios are recovered from the grid labels through this table.
  std::map<std::string, double> ratio_of;
  for (double ratio : ctx.cfg().numbers("sweep.ratios")) ratio_of[ctx.mask_label(ratio)] = ratio;

  const auto result = sweep(
      [&](const SweepPoint& p) {
        const auto h = ctx.op(ratio_of.at(p.mask));
        const auto g = ctx.measure(h, truth, p.snr_db);
        ReconConfig rc = base;
        rc.k = p.k;
        rc.mu = p.mu;
        rc.lambda = p.lambda;
        return score(reconstruct_with(ctx, p.method, flow ? &*flow : nullptr, h, g, rc, nullptr).image, truth);
      },
      grid);
  write_text(ctx.path("metrics.csv"), csv_text([&](std::ostream& os) { write_metrics_csv(os, result.rows); }));
  for (const auto& row : result.rows) {
    if (!row.error.empty()) ctx.log() << "cell " << row.point.method << " failed: " << row.error << '\n';
  }
  if (result.best != SweepResult::npos) {
    write_text(ctx.path("best.csv"),
               csv_text([&](std::ostream& os) { write_metrics_csv(os, {result.rows[result.best]}); }));
    const auto& b = result.rows[result.best];
    ctx.log() << "best: " << b.point.method << " " << b.point.mask << " snr " << b.point.snr_db << " k " << b.point.k
              << " mu " << b.point.mu << " lambda " << b.point.lambda << " rmse " << b.metrics.rmse << '\n';
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Subspace-projected reconstruction with a multiscale invertible generator"};
  app.require_subcommand(1);
  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "INI experiment configuration")->required();
    sub->add_option("--seed", opt.seed, "master seed (overrides run.seed)");
    sub->add_option("--out", opt.out, "output directory (overrides run.out)");
    sub->add_option("--checkpoint", opt.checkpoint, "checkpoint path (overrides training.checkpoint)");
    return sub;
  };
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-data", "generate the phantom training set"},
      {"train", "train the flow and write a checkpoint"},
      {"sample", "draw images from a trained flow"},
      {"mask", "generate a k-space sampling mask"},
      {"reconstruct", "reconstruct one target from simulated measurements"},
      {"truncate-study", "latent truncation study with a Haar comparison"},
      {"bias-variance", "pixelwise bias and variance over noise realizations"},
      {"sweep", "grid search over methods and parameters"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) subs[name] = add_common(app.add_subcommand(name, help));
  for (auto* s : {subs["reconstruct"], subs["bias-variance"]}) {
    s->add_option("--method", opt.method, "inn or pls-tv (overrides recon.method)");
  }
  subs["truncate-study"]->add_option("--fractions", opt.fractions,
                                     "kept percentages, comma separated (overrides evaluation.fractions)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }
  for (auto* s : app.get_subcommands()) opt.seed_given = s->count("--seed") > 0;

  try {
    auto cfg = ExperimentConfig::load(opt.config);
    if (opt.seed_given) cfg.set("run.seed", std::to_string(opt.seed));
    if (!opt.out.empty()) cfg.set("run.out", opt.out);
    if (!opt.checkpoint.empty()) cfg.set("training.checkpoint", opt.checkpoint);
    if (!opt.method.empty()) cfg.set("recon.method", opt.method);
    if (!opt.fractions.empty()) cfg.set("evaluation.fractions", opt.fractions);

    Context ctx(std::move(cfg), out);
    ctx.begin();
    const auto name = app.get_subcommands().front()->get_name();
    if (name == "gen-data") cmd_gen_data(ctx);
    else if (name == "train") cmd_train(ctx);
    else if (name == "sample") cmd_sample(ctx);
    else if (name == "mask") cmd_mask(ctx);
    else if (name == "reconstruct") cmd_reconstruct(ctx, err);
    else if (name == "truncate-study") cmd_truncate_study(ctx);
    else if (name == "bias-variance") cmd_bias_variance(ctx, err);
    else if (name == "sweep") cmd_sweep(ctx);
    return kOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumericError;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kOtherError;
  }
}

}  // namespace flowrecon::app
