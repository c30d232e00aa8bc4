#include "output.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "flowrecon/error.hpp"

namespace flowrecon::app {

PgmImage encode_pgm(const Tensor& image) {
  if (image.channels() != 1) throw DimensionError("PGM output needs a single-channel image");
  PgmImage out;
  const auto [lo, hi] = std::minmax_element(image.data().begin(), image.data().end());
  out.lo = *lo;
  out.hi = *hi;
  std::ostringstream os;
  os << "P5 " << image.width() << ' ' << image.height() << " 65535\n";
  const double span = out.hi - out.lo;
  for (double v : image.values()) {
    const auto q = span > 0 ? static_cast<unsigned>(std::lround(65535.0 * (v - out.lo) / span)) : 0u;
    os.put(static_cast<char>((q >> 8) & 0xff));
    os.put(static_cast<char>(q & 0xff));
  }
  out.bytes = os.str();
  return out;
}

void write_pgm(const std::string& path, const Tensor& image) {
  Tensor plane = image;
  if (image.channels() == 2) {
    plane = Tensor(Shape{1, image.height(), image.width()});
    for (std::size_t i = 0; i < plane.size(); ++i) plane.data()[i] = std::hypot(image.data()[i], image.data()[plane.size() + i]);
  }
  const auto pgm = encode_pgm(plane);
  write_text(path, pgm.bytes);
  nlohmann::json range = {{"lo", pgm.lo}, {"hi", pgm.hi}};
  write_text(path + ".range.json", range.dump() + "\n");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void make_directory(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory '" + path + "': " + ec.message());
}

}  // namespace flowrecon::app
