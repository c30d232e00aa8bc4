#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <string>
#include <vector>

namespace flowrecon::app {

/// Experiment configuration: INI sections of `key = value` pairs. Every key
/// has a default; unknown sections or keys are rejected.
class ExperimentConfig {
 public:
  ExperimentConfig();

  static ExperimentConfig parse(std::istream& in, const std::string& origin);
  static ExperimentConfig load(const std::string& path);

  /// Overrides one "section.key"; throws ConfigError for unknown keys.
  void set(const std::string& key, const std::string& value);

  const std::string& text(const std::string& key) const;
  double number(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  std::uint64_t seed(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> numbers(const std::string& key) const;
  std::vector<std::string> words(const std::string& key) const;

  /// Every key (defaults included) in schema order; re-parsing gives the same config.
  std::string resolved() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace flowrecon::app
