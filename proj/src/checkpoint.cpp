#include "flowrecon/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>

namespace flowrecon {
namespace {

constexpr char kMagic[9] = "FLOWCK01";
constexpr int kFormatVersion = 1;

nlohmann::json descriptor(const FlowConfig& c, const TrainingMetadata& meta) {
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  j["image"] = {c.image.channels, c.image.height, c.image.width};
  j["levels"] = c.levels;
  j["steps_per_level"] = c.steps_per_level;
  j["hidden_channels"] = c.hidden_channels;
  j["scale_floor"] = c.scale_floor;
  j["scale_shift"] = c.scale_shift;
  j["training"] = {{"epochs", meta.epochs}, {"nll", meta.nll}};
  return j;
}

template <class F>
void for_each_mix(MultiscaleFlow& flow, F&& f) {
  auto& levels = flow.levels();
  for (std::size_t l = 0; l < levels.size(); ++l) {
    for (std::size_t i = 0; i < levels[l].layers.size(); ++i) {
      if (auto* mix = std::get_if<InvMix1x1>(&levels[l].layers[i])) f(flow.layer_name(l, i), *mix);
    }
  }
}

}  // namespace

void write_checkpoint(std::ostream& out, MultiscaleFlow& flow, const TrainingMetadata& meta) {
  const std::string desc = descriptor(flow.config(), meta).dump();
  std::vector<NamedArray> arrays;
  for (const auto& p : flow.parameters()) arrays.push_back({p.name, {p.values->size()}, *p.values});
  for_each_mix(flow, [&](const std::string& name, InvMix1x1& mix) {
    const auto& perm = mix.permutation();
    arrays.push_back({name + ".permutation", {perm.size()}, std::vector<double>(perm.begin(), perm.end())});
    arrays.push_back({name + ".sign", {mix.signs().size()}, mix.signs()});
  });
  out.write(kMagic, 8);
  write_u64(out, desc.size());
  out.write(desc.data(), static_cast<std::streamsize>(desc.size()));
  write_u64(out, arrays.size());
  for (const auto& a : arrays) write_array(out, a);
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kMagic, 6) != 0) {
    throw ArchiveError(ArchiveError::Kind::Header, "not a checkpoint (bad magic)");
  }
  if (std::memcmp(magic + 6, kMagic + 6, 2) != 0) {
    throw ArchiveError(ArchiveError::Kind::Version, "unsupported checkpoint version '" + std::string(magic + 6, 2) + "'");
  }
  const auto len = read_u64(in, "descriptor length");
  if (len > (1u << 20)) throw ArchiveError(ArchiveError::Kind::Header, "descriptor length out of range");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (static_cast<std::uint64_t>(in.gcount()) != len) {
    throw ArchiveError(ArchiveError::Kind::Payload, "truncated checkpoint descriptor");
  }

  FlowConfig config;
  TrainingMetadata meta;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format_version").get<int>() != kFormatVersion) {
      throw ArchiveError(ArchiveError::Kind::Version,
                         "unsupported checkpoint format_version " + j.at("format_version").dump());
    }
    const auto img = j.at("image").get<std::vector<std::size_t>>();
    if (img.size() != 3) throw ArchiveError(ArchiveError::Kind::Header, "descriptor image must have 3 extents");
    config.image = Shape{img[0], img[1], img[2]};
    config.levels = j.at("levels").get<std::size_t>();
    config.steps_per_level = j.at("steps_per_level").get<std::size_t>();
    config.hidden_channels = j.at("hidden_channels").get<std::size_t>();
    config.scale_floor = j.at("scale_floor").get<double>();
    config.scale_shift = j.at("scale_shift").get<double>();
    meta.epochs = j.at("training").at("epochs").get<std::size_t>();
    meta.nll = j.at("training").at("nll").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ArchiveError(ArchiveError::Kind::Header, std::string("malformed checkpoint descriptor: ") + e.what());
  }
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw ArchiveError(ArchiveError::Kind::Header, std::string("checkpoint geometry invalid: ") + e.what());
  }

  ArrayArchive arrays;
  const auto count = read_u64(in, "array count");
  for (std::uint64_t i = 0; i < count; ++i) arrays.add(read_array(in));

  Checkpoint ck{MultiscaleFlow(config, 0), meta};
  auto take = [&](const std::string& name, std::size_t expected) -> const std::vector<double>& {
    const auto& a = arrays.get(name);
    if (a.values.size() != expected) {
      throw ArchiveError(ArchiveError::Kind::Payload, "array '" + name + "' has " + std::to_string(a.values.size()) +
                                                          " values, expected " + std::to_string(expected));
    }
    return a.values;
  };
  for (auto& p : ck.flow.parameters()) *p.values = take(p.name, p.values->size());
  for_each_mix(ck.flow, [&](const std::string& name, InvMix1x1& mix) {
    const auto n = mix.permutation().size();
    const auto& pv = take(name + ".permutation", n);
    std::vector<std::size_t> perm;
    std::vector<bool> seen(n, false);
    for (double v : pv) {
      if (v < 0 || v >= static_cast<double>(n) || v != static_cast<double>(static_cast<std::size_t>(v)) ||
          seen[static_cast<std::size_t>(v)]) {
        throw ArchiveError(ArchiveError::Kind::Payload, "array '" + name + ".permutation' is not a permutation");
      }
      seen[static_cast<std::size_t>(v)] = true;
      perm.push_back(static_cast<std::size_t>(v));
    }
    mix.set_fixed(std::move(perm), take(name + ".sign", n));
  });
  return ck;
}

void save_checkpoint(const std::string& path, MultiscaleFlow& flow, const TrainingMetadata& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_checkpoint(out, flow, meta);
  if (!out) throw IoError("failed writing '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace flowrecon
