#include "roomprobe/io/config_file.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace roomprobe::io {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

KeyValues KeyValues::parse(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno), "expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno), "empty key");
    kv.values_[key] = value;
  }
  return kv;
}

KeyValues KeyValues::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config", "cannot open '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return parse(os.str());
}

std::string KeyValues::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string KeyValues::require(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "required key missing");
  return it->second;
}

int64_t KeyValues::get_int(const std::string& key, int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t pos = 0;
    const int64_t v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected an integer, got '" + it->second + "'");
  }
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a number, got '" + it->second + "'");
  }
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError(key, "expected true/false, got '" + it->second + "'");
}

std::vector<std::string> KeyValues::get_list(const std::string& key) const {
  std::vector<std::string> out;
  auto it = values_.find(key);
  if (it == values_.end()) return out;
  std::istringstream in(it->second);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int margin_for_crop(int crop_size) {
  switch (crop_size) {
    case 9: return 0;
    case 5: return 2;
    case 3: return 1;
    default: throw ConfigError("room.crop_size", "must be 3, 5 or 9, got " + std::to_string(crop_size));
  }
}

ExperimentConfig ExperimentConfig::from_kv(const KeyValues& kv) {
  ExperimentConfig c;

  const std::string kind_s = kv.get("room.kind", "random");
  const auto kind = env::parse_room_kind(kind_s);
  if (!kind) throw ConfigError("room.kind", "must be random|monster|trap|ultimate, got '" + kind_s + "'");
  c.room = env::RoomConfig::for_kind(*kind);

  const int crop = static_cast<int>(kv.get_int("room.crop_size", 3));
  if (crop != 3 && crop != 5 && crop != 9)
    throw ConfigError("room.crop_size", "must be 3, 5 or 9, got " + std::to_string(crop));
  c.room.crop_size = crop;

  const std::string act = kv.get("room.action_set", "cardinal4");
  if (act == "cardinal4")
    c.room.action_set = env::ActionSet::kCardinal4;
  else if (act == "cardinal8")
    c.room.action_set = env::ActionSet::kCardinal8;
  else
    throw ConfigError("room.action_set", "must be cardinal4|cardinal8, got '" + act + "'");
  c.room.monster_kill_prob = kv.get_double("room.monster_kill_prob", c.room.monster_kill_prob);

  c.agent.lstm = kv.get_bool("agent.lstm", true);
  c.agent.use_full_map = kv.get_bool("agent.use_full_map", false);
  c.agent.use_relu = kv.get_bool("agent.use_relu", false);
  c.agent.embed_dim = static_cast<int>(kv.get_int("agent.embed_dim", c.agent.embed_dim));
  c.agent.hidden_dim = static_cast<int>(kv.get_int("agent.hidden_dim", c.agent.hidden_dim));
  c.agent.lstm_size = static_cast<int>(kv.get_int("agent.lstm_size", c.agent.lstm_size));
  c.agent.crop_size = c.room.crop_size;
  c.agent.n_actions = c.room.n_actions();
  c.room.full_map = c.agent.use_full_map;

  c.ppo.gamma = kv.get_double("ppo.gamma", c.ppo.gamma);
  c.ppo.gae_lambda = kv.get_double("ppo.gae_lambda", c.ppo.gae_lambda);
  c.ppo.clip_eps = kv.get_double("ppo.clip_eps", c.ppo.clip_eps);
  c.ppo.epochs_per_batch = static_cast<int>(kv.get_int("ppo.epochs_per_batch", c.ppo.epochs_per_batch));
  c.ppo.minibatch_size = static_cast<int>(kv.get_int("ppo.minibatch_size", c.ppo.minibatch_size));
  c.ppo.rollout_length = static_cast<int>(kv.get_int("ppo.rollout_length", c.ppo.rollout_length));
  c.ppo.n_workers = static_cast<int>(kv.get_int("ppo.n_workers", c.ppo.n_workers));
  c.ppo.lr = static_cast<float>(kv.get_double("ppo.lr", c.ppo.lr));
  c.ppo.value_coef = static_cast<float>(kv.get_double("ppo.value_coef", c.ppo.value_coef));
  c.ppo.entropy_coef = static_cast<float>(kv.get_double("ppo.entropy_coef", c.ppo.entropy_coef));
  c.ppo.bptt_chunk = static_cast<int>(kv.get_int("ppo.bptt_chunk", c.ppo.bptt_chunk));
  c.ppo.max_env_steps = kv.get_int("ppo.max_env_steps", c.ppo.max_env_steps);
  c.ppo.convergence_return = kv.get_double("ppo.convergence_return", c.ppo.convergence_return);
  try {
    c.ppo.validate();
  } catch (const std::exception& e) {
    throw ConfigError("ppo", e.what());
  }

  const int implied = margin_for_crop(crop);
  c.margin = static_cast<int>(kv.get_int("probe.margin", implied));
  if (c.margin != implied)
    throw ConfigError("probe.margin", "crop " + std::to_string(crop) + " implies margin " + std::to_string(implied) +
                                          ", got " + std::to_string(c.margin));

  c.n_collect = kv.get_int("probe.n_collect", c.n_collect);
  c.n_train = kv.get_int("probe.n_train", c.n_train);
  c.n_test = kv.get_int("probe.n_test", c.n_test);
  c.collect_envs = static_cast<int>(kv.get_int("probe.collect_envs", c.collect_envs));
  if (c.n_collect < 1) throw ConfigError("probe.n_collect", "must be positive");

  std::vector<std::string> taps = kv.get_list("probe.taps");
  if (taps.empty()) taps = c.agent.lstm ? std::vector<std::string>{"lstm_hidden", "lstm_cell"}
                                        : std::vector<std::string>{"conv1", "conv2", "conv3", "conv4", "conv5",
                                                                   "linear1", "linear2"};
  for (const auto& t : taps) {
    try {
      agent::tap_dim(c.agent, t);
    } catch (const std::exception& e) {
      throw ConfigError("probe.taps", e.what());
    }
  }
  std::vector<std::string> archs = kv.get_list("probe.archs");
  if (archs.empty()) archs = {"linear"};
  const double lr_linear = kv.get_double("probe.lr.linear", 0.001);
  const double lr_mlp3 = kv.get_double("probe.lr.mlp3", 0.0001);
  const int epochs = static_cast<int>(kv.get_int("probe.epochs", 50));
  const int batch = static_cast<int>(kv.get_int("probe.batch_size", 1024));
  const int hidden = static_cast<int>(kv.get_int("probe.hidden_dim", 256));
  for (const auto& tap : taps) {
    for (const auto& arch : archs) {
      ProbeSpec spec;
      spec.tap = tap;
      if (arch == "linear") {
        spec.config = probe::ProbeConfig::linear(static_cast<float>(lr_linear));
      } else if (arch == "mlp3") {
        spec.config = probe::ProbeConfig::mlp3(static_cast<float>(lr_mlp3));
      } else {
        throw ConfigError("probe.archs", "must be linear|mlp3, got '" + arch + "'");
      }
      spec.config.epochs = epochs;
      spec.config.batch_size = batch;
      spec.config.hidden_dim = hidden;
      c.probes.push_back(std::move(spec));
    }
  }

  c.seed_train = static_cast<uint64_t>(kv.get_int("seeds.train", 1));
  c.seed_collect = static_cast<uint64_t>(kv.get_int("seeds.collect", 2));
  c.seed_probe = static_cast<uint64_t>(kv.get_int("seeds.probe", 3));
  c.output_dir = kv.get("output_dir", "out");
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from_kv(KeyValues::parse_file(path));
}

}  // namespace roomprobe::io
