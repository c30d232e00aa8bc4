#pragma once

#include <string>

#include "flowrecon/tensor.hpp"

namespace flowrecon::app {

struct PgmImage {
  std::string bytes;  // header plus big-endian 16-bit samples
  double lo = 0.0;
  double hi = 0.0;
};

/// Binary 16-bit PGM of a single-channel image: header "P5 w h 65535\n",
/// samples round(65535 (v - lo) / (hi - lo)) with lo/hi the image range
/// (all zero when the image is flat).
PgmImage encode_pgm(const Tensor& image);
/// Writes `path` plus `path.range.json` holding lo and hi. Two-channel
/// images are written as their magnitude.
void write_pgm(const std::string& path, const Tensor& image);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);
void make_directory(const std::string& path);

}  // namespace flowrecon::app
