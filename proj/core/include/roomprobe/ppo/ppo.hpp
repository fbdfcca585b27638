#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "roomprobe/agent/agent.hpp"
#include "roomprobe/env/room.hpp"
#include "roomprobe/nn/adam.hpp"
#include "roomprobe/ppo/gae.hpp"

namespace roomprobe::ppo {

struct PPOConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  int epochs_per_batch = 4;
  int minibatch_size = 1024;
  int rollout_length = 128;  // steps per worker per iteration
  int n_workers = 16;
  float lr = 2.5e-4f;
  float value_coef = 0.5f;
  float entropy_coef = 0.01f;
  int bptt_chunk = 32;
  int64_t max_env_steps = 5'000'000;
  double convergence_return = 0.8;
  int convergence_window = 100;

  void validate() const;
};

/// One iteration's worth of experience from all workers. Rows are indexed
/// worker-major: record (w, t) lives at w * T + t.
struct TrajectoryBatch {
  int n_workers = 0;
  int T = 0;
  int crop_size = 0;
  bool has_map = false;

  nn::IntTensor crops;            // [W*T, k, k]
  nn::IntTensor maps;             // [W*T, canvas] when has_map
  std::vector<int> actions;       // W*T
  std::vector<float> logp;        // W*T, at collection time
  std::vector<float> values;      // W*T, at collection time
  std::vector<float> rewards;     // W*T
  std::vector<uint8_t> dones;     // W*T
  std::vector<float> bootstrap;   // W, V of the post-rollout state

  // LSTM state snapshots at bptt-chunk starts: row w * n_chunks + c.
  int chunk_len = 0;
  nn::TensorF h0, c0;

  // Filled by prepare_targets.
  std::vector<float> advantages;
  std::vector<float> value_targets;

  int64_t size() const { return static_cast<int64_t>(n_workers) * T; }
};

/// Steps a bank of environments with a frozen policy snapshot; episodes
/// auto-reset on done with per-worker seed streams derived from the base
/// seed. Also tracks recent completed-episode statistics.
class RolloutCollector {
 public:
  RolloutCollector(const env::RoomConfig& room, const PPOConfig& cfg, uint64_t seed, int stats_window);

  TrajectoryBatch collect(const agent::AgentNet& net, int T);

  int completed_episodes() const { return total_episodes_; }
  int window_size() const { return static_cast<int>(recent_returns_.size()); }
  double mean_return() const;
  double mean_episode_length() const;

 private:
  void reset_worker(int w);

  env::RoomConfig room_;
  PPOConfig cfg_;
  uint64_t base_seed_;
  std::vector<std::unique_ptr<env::RoomEnv>> envs_;
  std::vector<env::Observation> cur_obs_;
  agent::LstmStateBatch lstm_state_;
  std::vector<uint64_t> episode_counter_;
  std::vector<double> ep_return_;
  std::vector<int> ep_len_;
  nn::Rng action_rng_;
  std::deque<double> recent_returns_;
  std::deque<int> recent_lens_;
  int stats_window_;
  int total_episodes_ = 0;
};

/// GAE over each worker's window followed by whole-batch advantage
/// normalization (mean 0, std 1).
void prepare_targets(TrajectoryBatch& batch, double gamma, double lambda);

struct LossReport {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

/// Clipped-surrogate update: epochs_per_batch passes of shuffled
/// minibatches (contiguous bptt chunks for recurrent configs), one Adam
/// step per minibatch, global grad-norm clip 0.5. Aborts on non-finite
/// loss. Advantages must already be normalized.
LossReport ppo_update(agent::AgentNet& net, const TrajectoryBatch& batch, const PPOConfig& cfg,
                      nn::AdamState<float>& adam, nn::Rng& shuffle_rng);

struct IterationMetrics {
  int iter = 0;
  int64_t env_steps = 0;
  double mean_return = 0.0;
  double mean_ep_len = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_frac = 0.0;
};

/// CSV header matching IterationMetrics rows.
inline constexpr const char* kMetricsCsvHeader = "iter,env_steps,mean_return,mean_ep_len,policy_loss,value_loss,entropy,clip_frac";
std::string metrics_csv_row(const IterationMetrics& m);

struct CheckpointMeta {
  int64_t env_steps = 0;
  double mean_return = 0.0;
};

/// Artifact emission is delegated to the caller (the CLI owns all
/// filesystem writes); either callback may be empty.
struct TrainCallbacks {
  std::function<void(const IterationMetrics&)> on_iteration;
  std::function<void(const agent::AgentNet&, const CheckpointMeta&, bool is_best)> on_checkpoint;
};

struct TrainResult {
  bool converged = false;
  int64_t env_steps = 0;
  int iterations = 0;
  double final_mean_return = 0.0;
  double best_mean_return = 0.0;
};

/// Collect -> GAE -> update until the convergence criterion (mean return
/// over the trailing episode window) or the step budget. Emits metrics per
/// iteration and best/final checkpoints through the callbacks.
TrainResult train(const env::RoomConfig& room, const agent::AgentConfig& agent_cfg, const PPOConfig& ppo_cfg,
                  uint64_t seed, agent::AgentNet& net, const TrainCallbacks& callbacks);

}  // namespace roomprobe::ppo
