#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "flowrecon/error.hpp"
#include "flowrecon/tensor.hpp"

namespace flowrecon {

/// Array record shared by checkpoints and archives:
/// u64 name length, name bytes, u64 rank, rank x u64 extents, f64 payload (all little-endian).
struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> extents;
  std::vector<double> values;
};

class ArchiveError : public IoError {
 public:
  enum class Kind { Header, Payload, Version, Duplicate };
  ArchiveError(Kind kind, const std::string& what) : IoError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

void write_u64(std::ostream& out, std::uint64_t v);
std::uint64_t read_u64(std::istream& in, const char* what);
void write_array(std::ostream& out, const NamedArray& a);
NamedArray read_array(std::istream& in);

NamedArray to_array(const std::string& name, const Tensor& t);
Tensor to_tensor(const NamedArray& a);

/// "FLOWAR01", u64 count, then the array records.
class ArrayArchive {
 public:
  static constexpr char kMagic[9] = "FLOWAR01";

  void add(NamedArray a);
  void add(const std::string& name, const Tensor& t) { add(to_array(name, t)); }
  const NamedArray& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<NamedArray>& arrays() const { return arrays_; }

  void save(const std::string& path) const;
  static ArrayArchive load(const std::string& path);
  void write(std::ostream& out) const;
  static ArrayArchive read(std::istream& in);

 private:
  std::vector<NamedArray> arrays_;
};

}  // namespace flowrecon
