#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "app/commands.hpp"
#include "app/config.hpp"
#include "app/output.hpp"

using namespace flowrecon;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("flowrecon_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write_config(const fs::path& dir, const std::string& body) {
  const auto path = dir / "experiment.ini";
  std::ofstream(path) << "[run]\nout = " << (dir / "out").string() << "\n" << body;
  return path.string();
}

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = app::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

const char* kTiny =
    "[flow]\nextent = 16\nlevels = 2\nsteps_per_level = 1\nhidden_channels = 4\n"
    "[training]\nepochs = 1\ndataset_size = 8\nbatch_size = 4\n"
    "[mask]\ntype = poisson\nratio = 4\n"
    "[noise]\nsnr_db = 30\n"
    "[recon]\nmax_iterations = 20\nfista_iterations = 20\n"
    "[evaluation]\ntest_images = 2\nfractions = 50\nrealizations = 2\nmus = 0,0.01\n"
    "[sweep]\nmethods = inn,pls-tv\nratios = 4\nsnrs = 30\nmus = 0,0.01\n";

}  // namespace

TEST_CASE("PGM of a flat 2x2 image is a P5 header with an all-zero body") {
  Tensor flat(Shape{1, 2, 2});
  for (auto& v : flat.data()) v = 0.3;
  const auto pgm = app::encode_pgm(flat);
  CHECK(pgm.bytes == std::string("P5 2 2 65535\n") + std::string(8, '\0'));
}

TEST_CASE("PGM samples follow the documented range mapping, big-endian") {
  Tensor img(Shape{1, 1, 4});
  const double v[] = {-1.0, -0.5, 0.0, 1.0};
  for (int i = 0; i < 4; ++i) img.at(0, 0, i) = v[i];
  const auto pgm = app::encode_pgm(img);
  CHECK(pgm.lo == -1.0);
  CHECK(pgm.hi == 1.0);
  // round(65535 * (v + 1) / 2): 0, 16383.75 -> 16384, 32767.5 -> 32768, 65535
  const unsigned expected[] = {0, 16384, 32768, 65535};
  const std::string header = "P5 4 1 65535\n";
  REQUIRE(pgm.bytes.size() == header.size() + 8);
  for (int i = 0; i < 4; ++i) {
    const auto hi = static_cast<unsigned char>(pgm.bytes[header.size() + 2 * i]);
    const auto lo = static_cast<unsigned char>(pgm.bytes[header.size() + 2 * i + 1]);
    CHECK(hi * 256u + lo == expected[i]);
  }
}

TEST_CASE("config parsing: comments, overrides and key-naming errors") {
  std::istringstream in("# comment\n[flow]\n; another\nextent = 16\n[recon]\nmu = 0.5\n");
  auto cfg = app::ExperimentConfig::parse(in, "inline");
  CHECK(cfg.count("flow.extent") == 16);
  CHECK(cfg.number("recon.mu") == 0.5);
  CHECK(cfg.count("flow.levels") == 3);  // default
  CHECK(std::isinf(cfg.number("noise.snr_db")));
  cfg.set("recon.mu", "0.25");
  CHECK(cfg.number("recon.mu") == 0.25);
  CHECK_THROWS_AS(cfg.set("recon.nope", "1"), ConfigError);

  std::istringstream bad("[flow]\nextent = lots\n");
  auto cfg2 = app::ExperimentConfig::parse(bad, "inline");
  try {
    (void)cfg2.count("flow.extent");
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("flow.extent") != std::string::npos);
  }
}

TEST_CASE("exit codes: parse error, unknown key, bad value, missing checkpoint") {
  const auto dir = fresh_dir("exit");
  CHECK(cli({"mask"}).code == app::kConfigError);  // --config is required
  CHECK(cli({"--help"}).code == app::kOk);

  const auto unknown = cli({"mask", "--config", write_config(dir, "[mask]\nratoi = 4\n")});
  CHECK(unknown.code == app::kConfigError);
  CHECK(unknown.err.find("mask.ratoi") != std::string::npos);

  const auto bad_type = cli({"mask", "--config", write_config(dir, "[mask]\ntype = spiral\n")});
  CHECK(bad_type.code == app::kConfigError);
  CHECK(bad_type.err.find("mask.type") != std::string::npos);

  const auto no_ckpt = cli({"sample", "--config", write_config(dir, kTiny), "--checkpoint", (dir / "absent").string()});
  CHECK(no_ckpt.code == app::kIoError);
  CHECK(no_ckpt.err.find("training.checkpoint") != std::string::npos);

  const auto no_file = cli({"mask", "--config", (dir / "missing.ini").string()});
  CHECK(no_file.code == app::kIoError);

  const auto conflict = cli({"reconstruct", "--method", "pls-tv", "--config", write_config(dir, "[mask]\nchannel_mode = two-channel\n")});
  CHECK(conflict.code == app::kConfigError);
  CHECK(conflict.err.find("mask.channel_mode") != std::string::npos);
}

TEST_CASE("reconstruct --method pls-tv on a full noiseless mask reports RMSE below 1e-6") {
  const auto dir = fresh_dir("plstv");
  const auto config =
      write_config(dir, "[flow]\nextent = 16\n[mask]\ntype = full\n[recon]\nmu = 0\nfista_iterations = 50\n");
  const auto run = cli({"reconstruct", "--config", config, "--method", "pls-tv"});
  REQUIRE_MESSAGE(run.code == 0, run.err);
  const auto rows = parse_csv(slurp(dir / "out" / "metrics.csv"));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == std::vector<std::string>{"method", "mask", "snr_db", "k", "mu", "lambda", "rmse", "ssim"});
  CHECK(rows[1][0] == "pls-tv");
  CHECK(rows[1][1] == "full");
  CHECK(std::stod(rows[1][6]) < 1e-6);
  CHECK(fs::exists(dir / "out" / "estimate.pgm"));
  CHECK(fs::exists(dir / "out" / "estimate.pgm.range.json"));
  CHECK(fs::exists(dir / "out" / "config.resolved.ini"));
}

TEST_CASE("truncate-study --fractions 50,25,12.5,6.25 writes a 4-row CSV and per-fraction images") {
  const auto dir = fresh_dir("truncate");
  const auto config = write_config(
      dir, "[flow]\nextent = 32\nlevels = 5\nsteps_per_level = 1\nhidden_channels = 4\n"
           "[training]\nepochs = 0\ndataset_size = 4\n[evaluation]\ntest_images = 2\n");
  REQUIRE(cli({"train", "--config", config}).code == 0);
  const auto run = cli({"truncate-study", "--config", config, "--fractions", "50,25,12.5,6.25"});
  REQUIRE_MESSAGE(run.code == 0, run.err);
  const auto rows = parse_csv(slurp(dir / "out" / "truncation.csv"));
  REQUIRE(rows.size() == 5);
  const std::string fractions[] = {"0.5", "0.25", "0.125", "0.0625"};
  for (int i = 0; i < 4; ++i) {
    CHECK(rows[i + 1][0] == "inn");
    CHECK(rows[i + 1][1] == fractions[i]);
  }
  for (const char* pct : {"50", "25", "12.5", "6.25"}) {
    CHECK(fs::exists(dir / "out" / ("truncated_" + std::string(pct) + ".pgm")));
  }
  const auto haar = parse_csv(slurp(dir / "out" / "truncation_haar.csv"));
  CHECK(haar.size() > 1);
  CHECK(haar[0] == rows[0]);

  const auto misaligned = cli({"truncate-study", "--config", config, "--fractions", "30"});
  CHECK(misaligned.code == app::kConfigError);
}

TEST_CASE("--seed overrides the config and is recorded in the resolved copy") {
  const auto dir = fresh_dir("seed");
  const auto config = write_config(dir, kTiny);
  REQUIRE(cli({"mask", "--config", config, "--seed", "99"}).code == 0);
  CHECK(slurp(dir / "out" / "config.resolved.ini").find("seed = 99") != std::string::npos);
}

TEST_CASE("every subcommand repeated with the same config gives byte-identical CSVs") {
  const auto dir = fresh_dir("repro");
  const std::vector<std::string> commands = {"gen-data", "train",         "sample",        "mask",
                                             "reconstruct", "truncate-study", "bias-variance", "sweep"};
  std::map<std::string, std::string> first;
  for (int pass = 0; pass < 2; ++pass) {
    const auto out = dir / ("pass" + std::to_string(pass));
    const auto config = write_config(dir, kTiny);
    for (const auto& c : commands) {
      const auto run = cli({c, "--config", config, "--out", out.string()});
      INFO(c);
      REQUIRE_MESSAGE(run.code == 0, run.err);
    }
    for (const auto& entry : fs::directory_iterator(out)) {
      const auto name = entry.path().filename().string();
      if (entry.path().extension() != ".csv" && entry.path().extension() != ".flowck") continue;
      if (pass == 0) {
        first[name] = slurp(entry.path());
      } else {
        INFO(name);
        CHECK(first.at(name) == slurp(entry.path()));
      }
    }
  }
  CHECK(first.count("metrics.csv") == 1);
  CHECK(first.count("bias_variance.csv") == 1);
  CHECK(first.count("train_history.csv") == 1);
}
