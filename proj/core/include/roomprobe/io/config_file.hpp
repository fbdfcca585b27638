#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "roomprobe/agent/agent.hpp"
#include "roomprobe/env/room.hpp"
#include "roomprobe/ppo/ppo.hpp"
#include "roomprobe/probe/probe.hpp"

namespace roomprobe::io {

/// Validation failures carry the offending field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Flat `section.key = value` text; '#' starts a comment.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text);
  static KeyValues parse_file(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;  // comma separated
  const std::map<std::string, std::string>& all() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

struct ProbeSpec {
  std::string tap;
  probe::ProbeConfig config;
};

struct ExperimentConfig {
  env::RoomConfig room;
  agent::AgentConfig agent;
  ppo::PPOConfig ppo;
  std::vector<ProbeSpec> probes;
  int margin = 0;
  int64_t n_collect = 230000;
  int64_t n_train = 200000;
  int64_t n_test = 30000;
  int collect_envs = 16;
  uint64_t seed_train = 1;
  uint64_t seed_collect = 2;
  uint64_t seed_probe = 3;
  std::string output_dir = "out";

  /// Parses and cross-validates (crop sizes agree, margin follows the
  /// crop-size protocol, action counts line up). Throws ConfigError.
  static ExperimentConfig from_kv(const KeyValues& kv);
  static ExperimentConfig from_file(const std::string& path);
};

/// Boundary margin implied by the observation crop: 9 -> 0, 5 -> 2, 3 -> 1.
int margin_for_crop(int crop_size);

}  // namespace roomprobe::io
