#pragma once

#include <memory>
#include <vector>

#include "roomprobe/probe/probe.hpp"

namespace roomprobe::io {

/// Trained-probe artifact. Besides the parameters it embeds everything
/// needed to reproduce its evaluation: the probe config, the boundary
/// margin, the split seed and counts, and the dataset it was trained from.
inline constexpr uint16_t kProbeVersion = 1;

struct ProbeArtifact {
  probe::ProbeConfig config;
  std::string tap_name;
  uint8_t margin = 0;
  uint64_t split_seed = 0;
  int64_t n_train = 0;
  int64_t n_test = 0;
  std::string dataset_id;  // content id of the source dataset file
};

std::vector<uint8_t> serialize_probe(const probe::Probe& p, const ProbeArtifact& art);

struct LoadedProbe {
  std::unique_ptr<probe::Probe> probe;
  ProbeArtifact artifact;
};

LoadedProbe deserialize_probe(const std::vector<uint8_t>& bytes);

}  // namespace roomprobe::io
