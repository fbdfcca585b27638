#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "roomprobe/agent/agent.hpp"
#include "roomprobe/env/room.hpp"
#include "roomprobe/nn/layers.hpp"

namespace roomprobe::probe {

inline constexpr int kGridClasses = 15;  // coordinate alphabet per axis

/// Expected accuracy of uniform guessing over the surviving coordinate
/// alphabet: 1 / (15 - 2 * margin).
double chance_level(int margin);

struct DatasetMeta {
  std::string map_kind;
  int crop_size = 0;
  std::string checkpoint_id;
  uint64_t seed = 0;
};

/// (activation vector, room-relative x, y) records for one tap.
struct ActivationDataset {
  std::string tap_name;
  int activation_dim = 0;
  uint8_t margin = 0;
  std::vector<float> activations;  // size() * activation_dim
  std::vector<uint8_t> xs, ys;
  DatasetMeta meta;

  int64_t size() const { return static_cast<int64_t>(xs.size()); }
  const float* record(int64_t i) const { return activations.data() + i * activation_dim; }
  void append(const float* act, uint8_t x, uint8_t y) {
    activations.insert(activations.end(), act, act + activation_dim);
    xs.push_back(x);
    ys.push_back(y);
  }
};

/// Runs the agent with sampled actions over fresh seeded episodes and
/// records the requested taps plus the room position at every step,
/// exactly n records per tap. Unknown tap names error listing valid taps.
std::vector<ActivationDataset> collect_activations(const agent::AgentNet& net, const env::RoomConfig& room,
                                                   const std::vector<std::string>& taps, int64_t n, uint64_t seed,
                                                   int n_envs = 16);

/// Drops records with x or y within `margin` of either edge.
ActivationDataset filter_boundary(const ActivationDataset& d, int margin);

/// Disjoint seeded shuffle split. When the dataset is smaller than
/// n_train + n_test, both shrink proportionally (floor arithmetic on the
/// requested ratio).
std::pair<ActivationDataset, ActivationDataset> split_dataset(const ActivationDataset& d, int64_t n_train,
                                                              int64_t n_test, uint64_t seed);

enum class ProbeArch { kLinear, kMlp3 };
std::string probe_arch_name(ProbeArch a);

struct ProbeConfig {
  ProbeArch arch = ProbeArch::kLinear;
  int hidden_dim = 256;  // mlp3 only
  float lr = 1e-3f;
  int epochs = 50;
  int batch_size = 1024;
  uint64_t seed = 0;

  static ProbeConfig linear(float lr = 1e-3f);
  static ProbeConfig mlp3(float lr = 1e-4f);
};

/// Two 15-way heads (x then y) on a shared trunk; a single linear layer
/// for the linear arch, 3 linear layers with ReLUs for mlp3.
class Probe {
 public:
  Probe(ProbeArch arch, int in_dim, int hidden_dim, uint64_t seed);

  /// [B, in_dim] -> logits [B, 30]; x head is cols 0..14, y head 15..29.
  nn::VarF forward(const nn::VarF& x) const;

  ProbeArch arch() const { return arch_; }
  int in_dim() const { return in_dim_; }
  int hidden_dim() const { return hidden_dim_; }
  nn::ParamSet<float>& params() { return params_; }
  const nn::ParamSet<float>& params() const { return params_; }

 private:
  ProbeArch arch_;
  int in_dim_;
  int hidden_dim_;
  nn::ParamSet<float> params_;
  nn::LinearLayer<float> l1_, l2_, l3_;
};

/// Minimizes the summed cross-entropy of both heads with Adam over
/// seeded-shuffled minibatches. Aborts on non-finite loss.
Probe train_probe(const ActivationDataset& train, const ProbeConfig& config);

struct ProbeReport {
  double acc_x = 0.0, acc_y = 0.0, acc_mean = 0.0;
  double chance = 0.0;
  int64_t n_test = 0;
  std::string tap_name;
  std::string arch;

  std::string csv_row() const;
};
inline constexpr const char* kReportCsvHeader = "tap,arch,acc_x,acc_y,acc_mean,chance,n_test";

/// Argmax per head (lowest-index tie-break) against the true coordinates.
ProbeReport evaluate_probe(const Probe& p, const ActivationDataset& test);

}  // namespace roomprobe::probe
