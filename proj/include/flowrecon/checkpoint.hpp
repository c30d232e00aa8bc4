#pragma once

#include <string>

#include "flowrecon/archive.hpp"
#include "flowrecon/flow.hpp"

namespace flowrecon {

struct TrainingMetadata {
  std::size_t epochs = 0;
  double nll = 0.0;
};

struct Checkpoint {
  MultiscaleFlow flow;
  TrainingMetadata metadata;
};

/// "FLOWCK01", u64 descriptor length, descriptor (JSON text with the flow
/// geometry, format version and training metadata), u64 array count, then
/// one array record per parameter, plus the fixed mixing permutations/signs.
void save_checkpoint(const std::string& path, MultiscaleFlow& flow, const TrainingMetadata& meta);
Checkpoint load_checkpoint(const std::string& path);

void write_checkpoint(std::ostream& out, MultiscaleFlow& flow, const TrainingMetadata& meta);
Checkpoint read_checkpoint(std::istream& in);

}  // namespace flowrecon
