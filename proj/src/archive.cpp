#include "flowrecon/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace flowrecon {
namespace {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

// Guards allocation against corrupt length fields.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

void read_exact(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw ArchiveError(ArchiveError::Kind::Payload, std::string("truncated archive while reading ") + what);
  }
}

}  // namespace

void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t read_u64(std::istream& in, const char* what) {
  std::uint64_t v = 0;
  read_exact(in, reinterpret_cast<char*>(&v), sizeof v, what);
  return v;
}

void write_array(std::ostream& out, const NamedArray& a) {
  write_u64(out, a.name.size());
  out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
  write_u64(out, a.extents.size());
  for (auto e : a.extents) write_u64(out, e);
  out.write(reinterpret_cast<const char*>(a.values.data()), static_cast<std::streamsize>(a.values.size() * sizeof(double)));
}

NamedArray read_array(std::istream& in) {
  NamedArray a;
  const auto name_len = read_u64(in, "array name length");
  if (name_len > 4096) throw ArchiveError(ArchiveError::Kind::Payload, "array name length out of range");
  a.name.resize(name_len);
  read_exact(in, a.name.data(), name_len, "array name");
  const auto rank = read_u64(in, "array rank");
  if (rank > 8) throw ArchiveError(ArchiveError::Kind::Payload, "array '" + a.name + "' has invalid rank");
  std::uint64_t count = 1;
  for (std::uint64_t r = 0; r < rank; ++r) {
    a.extents.push_back(read_u64(in, "array extent"));
    if (a.extents.back() != 0 && count > kMaxElements / a.extents.back()) {
      throw ArchiveError(ArchiveError::Kind::Payload, "array '" + a.name + "' is too large");
    }
    count *= a.extents.back();
  }
  a.values.resize(count);
  read_exact(in, reinterpret_cast<char*>(a.values.data()), count * sizeof(double), "array payload");
  return a;
}

NamedArray to_array(const std::string& name, const Tensor& t) {
  const auto& s = t.shape();
  return NamedArray{name, {s.channels, s.height, s.width}, std::vector<double>(t.values().begin(), t.values().end())};
}

Tensor to_tensor(const NamedArray& a) {
  if (a.extents.size() != 3) {
    throw ArchiveError(ArchiveError::Kind::Payload, "array '" + a.name + "' is not a rank-3 image");
  }
  return Tensor(Shape{a.extents[0], a.extents[1], a.extents[2]}, a.values);
}

void ArrayArchive::add(NamedArray a) {
  if (contains(a.name)) throw ArchiveError(ArchiveError::Kind::Duplicate, "duplicate array name '" + a.name + "'");
  arrays_.push_back(std::move(a));
}

const NamedArray& ArrayArchive::get(const std::string& name) const {
  for (const auto& a : arrays_) {
    if (a.name == name) return a;
  }
  throw ArchiveError(ArchiveError::Kind::Payload, "archive has no array named '" + name + "'");
}

bool ArrayArchive::contains(const std::string& name) const {
  for (const auto& a : arrays_) {
    if (a.name == name) return true;
  }
  return false;
}

void ArrayArchive::write(std::ostream& out) const {
  out.write(kMagic, 8);
  write_u64(out, arrays_.size());
  for (const auto& a : arrays_) write_array(out, a);
}

ArrayArchive ArrayArchive::read(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kMagic, 6) != 0) {
    throw ArchiveError(ArchiveError::Kind::Header, "not an array archive (bad magic)");
  }
  if (std::memcmp(magic + 6, kMagic + 6, 2) != 0) {
    throw ArchiveError(ArchiveError::Kind::Version,
                       "unsupported archive version '" + std::string(magic + 6, 2) + "'");
  }
  ArrayArchive archive;
  const auto count = read_u64(in, "array count");
  for (std::uint64_t i = 0; i < count; ++i) archive.add(read_array(in));
  return archive;
}

void ArrayArchive::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write(out);
  if (!out) throw IoError("failed writing '" + path + "'");
}

ArrayArchive ArrayArchive::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read(in);
}

}  // namespace flowrecon
