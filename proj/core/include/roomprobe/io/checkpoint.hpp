#pragma once

#include <memory>
#include <string>
#include <vector>

#include "roomprobe/agent/agent.hpp"
#include "roomprobe/ppo/ppo.hpp"

namespace roomprobe::io {

/// Agent checkpoint: format version, AgentConfig echo, named f32 parameter
/// blobs (little-endian), and training metadata. Round-trips bit-exactly.
inline constexpr uint16_t kCheckpointVersion = 1;

std::vector<uint8_t> serialize_checkpoint(const agent::AgentNet& net, const ppo::CheckpointMeta& meta);

struct LoadedCheckpoint {
  std::unique_ptr<agent::AgentNet> net;
  ppo::CheckpointMeta meta;
  std::string checkpoint_id;  // content hash of the bytes
};

LoadedCheckpoint deserialize_checkpoint(const std::vector<uint8_t>& bytes);

}  // namespace roomprobe::io
