#include "config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "flowrecon/error.hpp"

namespace flowrecon::app {
namespace {

struct Entry {
  const char* key;
  const char* value;
};

// Schema and defaults, in the order the resolved copy is written.
constexpr Entry kSchema[] = {
    {"run.seed", "1"},
    {"run.out", "runs/default"},

    {"flow.channels", "1"},
    {"flow.extent", "32"},
    {"flow.levels", "3"},
    {"flow.steps_per_level", "4"},
    {"flow.hidden_channels", "32"},
    {"flow.scale_floor", "0.05"},
    {"flow.scale_shift", "2"},

    {"phantom.min_ellipses", "3"},
    {"phantom.max_ellipses", "7"},
    {"phantom.body_intensity_min", "0.5"},
    {"phantom.body_intensity_max", "0.8"},
    {"phantom.feature_intensity_min", "0.1"},
    {"phantom.feature_intensity_max", "0.35"},
    {"phantom.feature_axis_min", "0.08"},
    {"phantom.feature_axis_max", "0.35"},
    {"phantom.center_spread", "0.45"},
    {"phantom.smooth_background", "false"},
    {"phantom.background_level", "0.05"},

    {"training.epochs", "20"},
    {"training.batch_size", "16"},
    {"training.dataset_size", "200"},
    {"training.learning_rate", "0.001"},
    {"training.beta1", "0.9"},
    {"training.beta2", "0.999"},
    {"training.epsilon", "1e-8"},
    {"training.checkpoint", ""},

    {"sample.count", "8"},
    {"sample.temperature", "0.7"},

    {"mask.type", "poisson"},
    {"mask.ratio", "8"},
    {"mask.calibration_radius", "-1"},
    {"mask.center_lines", "4"},
    {"mask.channel_mode", "real"},

    {"noise.snr_db", "inf"},

    {"recon.method", "inn"},
    {"recon.target", "phantom"},
    {"recon.target_index", "0"},
    {"recon.k", "0"},
    {"recon.mu", "0"},
    {"recon.lambda", "0"},
    {"recon.learning_rate", "0.01"},
    {"recon.max_iterations", "2000"},
    {"recon.tolerance", "1e-8"},
    {"recon.window", "25"},
    {"recon.tv_epsilon", "1e-6"},
    {"recon.debias_iterations", "0"},
    {"recon.fista_iterations", "300"},
    {"recon.prox_iterations", "100"},

    {"evaluation.test_images", "10"},
    {"evaluation.fractions", "50,25"},
    {"evaluation.haar_levels", "0"},
    {"evaluation.realizations", "25"},
    {"evaluation.mus", "0,0.001,0.003,0.01,0.03"},

    {"sweep.methods", "inn"},
    {"sweep.ratios", "8"},
    {"sweep.snrs", "inf"},
    {"sweep.ks", "0"},
    {"sweep.mus", "0"},
    {"sweep.lambdas", "0"},
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& raw) {
  const auto s = trim(raw);
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || s.empty()) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + raw + "'");
  }
  return v;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  for (const auto& e : kSchema) values_[e.key] = e.value;
}

ExperimentConfig ExperimentConfig::parse(std::istream& in, const std::string& origin) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("malformed config " + origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config key '" + section + "' must belong to a [section]");
    for (const auto& [key, value] : body) cfg.set(section + "." + key, value.data());
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  return parse(in, "'" + path + "'");
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = trim(value);
}

const std::string& ExperimentConfig::text(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double ExperimentConfig::number(const std::string& key) const { return parse_double(key, text(key)); }

std::size_t ExperimentConfig::count(const std::string& key) const {
  const double v = number(key);
  if (!(v >= 0) || v != std::floor(v) || v > 1e15) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + text(key) + "'");
  }
  return static_cast<std::size_t>(v);
}

std::uint64_t ExperimentConfig::seed(const std::string& key) const {
  const auto& s = text(key);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("config key '" + key + "': expected an unsigned integer seed, got '" + s + "'");
  }
  return v;
}

bool ExperimentConfig::flag(const std::string& key) const {
  const auto& s = text(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + s + "'");
}

std::vector<double> ExperimentConfig::numbers(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(text(key))) out.push_back(parse_double(key, item));
  if (out.empty()) throw ConfigError("config key '" + key + "': expected a comma-separated list of numbers");
  return out;
}

std::vector<std::string> ExperimentConfig::words(const std::string& key) const {
  auto out = split_list(text(key));
  if (out.empty()) throw ConfigError("config key '" + key + "': expected a comma-separated list");
  return out;
}

std::string ExperimentConfig::resolved() const {
  std::ostringstream os;
  std::string section;
  for (const auto& e : kSchema) {
    const std::string key = e.key;
    const auto dot = key.find('.');
    const auto sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) os << '\n';
      os << '[' << sec << "]\n";
      section = sec;
    }
    os << key.substr(dot + 1) << " = " << values_.at(key) << '\n';
  }
  return os.str();
}

}  // namespace flowrecon::app
