#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "roomprobe/env/room.hpp"
#include "roomprobe/nn/layers.hpp"

namespace roomprobe::agent {

struct AgentConfig {
  int embed_dim = 64;
  std::array<int, 5> conv_channels = {16, 16, 16, 16, 8};
  int hidden_dim = 256;
  bool lstm = false;
  int lstm_size = 512;
  bool use_full_map = false;
  int crop_size = 9;
  int n_actions = 8;
  int glyph_vocab = env::kGlyphVocab;
  bool use_relu = false;  // default nonlinearity is ELU

  /// Map + 9x9 crop, feedforward, 8 actions.
  static AgentConfig experiment1();
  /// 5x5 crop only, LSTM, 4 actions.
  static AgentConfig experiment2();
  /// 3x3 crop only, LSTM, 4 actions.
  static AgentConfig experiment3();

  int conv_out_channels() const { return conv_channels.back(); }
  int crop_feat_dim() const { return conv_out_channels() * crop_size * crop_size; }
  int map_feat_dim() const { return conv_out_channels() * env::kCanvasRows * env::kCanvasCols; }
  int trunk_in_dim() const { return crop_feat_dim() + (use_full_map ? map_feat_dim() : 0); }
  int head_in_dim() const { return lstm ? lstm_size : hidden_dim; }

  bool operator==(const AgentConfig&) const = default;
};

/// Named post-nonlinearity activations captured during a forward pass.
/// conv1..conv5 read the map stream when present, otherwise the crop
/// stream; lstm taps exist only on recurrent configs.
struct ActivationTaps {
  std::vector<std::pair<std::string, nn::TensorF>> entries;  // each [batch, dim]

  const nn::TensorF* find(const std::string& name) const {
    for (const auto& [n, t] : entries)
      if (n == name) return &t;
    return nullptr;
  }
};

/// Tap names valid for a config, in report order.
std::vector<std::string> tap_names(const AgentConfig& config);
/// Activation vector length of a named tap; throws on unknown names,
/// listing the valid ones.
int tap_dim(const AgentConfig& config, const std::string& name);

struct LstmStateBatch {
  nn::TensorF h, c;
  static LstmStateBatch zeros(int batch, int size) {
    LstmStateBatch s;
    s.h = nn::TensorF::zeros({batch, size});
    s.c = nn::TensorF::zeros({batch, size});
    return s;
  }
  void reset_row(int r) {
    const int64_t S = h.cols();
    for (int64_t i = 0; i < S; ++i) {
      h[r * S + i] = 0.0f;
      c[r * S + i] = 0.0f;
    }
  }
};

struct ForwardResult {
  nn::TensorF logits;  // [batch, n_actions]
  nn::TensorF values;  // [batch]
  LstmStateBatch next_state;
  ActivationTaps taps;
};

enum class SelectMode { kSample, kGreedy };

/// Sample draws from softmax(logits); greedy takes the argmax with
/// lowest-index tie-break. Returns (action, log prob of that action).
std::pair<int, float> select_action(const nn::TensorF& logits, nn::Rng& rng, SelectMode mode);

/// The actor-critic network of the paper's figure: shared glyph embedding,
/// one 5-layer conv stack per input stream, two trunk linears, optional
/// LSTM, and parallel action/value heads.
class AgentNet {
 public:
  AgentNet(AgentConfig config, uint64_t seed);

  const AgentConfig& config() const { return config_; }
  nn::ParamSet<float>& params() { return params_; }
  const nn::ParamSet<float>& params() const { return params_; }
  int64_t param_count() const { return params_.count(); }

  /// Acting path; no gradients are recorded. `state` must be present iff
  /// the config has an LSTM. Tap names in `tap_filter` are captured
  /// (empty filter captures none).
  ForwardResult forward_batch(const std::vector<env::Observation>& obs, const LstmStateBatch* state,
                              const std::vector<std::string>& tap_filter = {}) const;

  /// Training path for recurrent configs: `n_chunks` sequences of length
  /// `chunk_len` in time-major row order (row = t * n_chunks + j). The
  /// LSTM starts from (h0, c0) and restarts from zero after done steps,
  /// replaying the collection-time state evolution.
  struct TrainOut {
    nn::VarF logits;  // [N, n_actions]
    nn::VarF values;  // [N]
  };
  TrainOut train_forward_sequences(const nn::IntTensor& crop_ids, const nn::IntTensor* map_ids, int n_chunks,
                                   int chunk_len, const nn::TensorF& h0, const nn::TensorF& c0,
                                   const std::vector<uint8_t>& done) const;

  /// Training path for feedforward configs; rows are independent.
  TrainOut train_forward(const nn::IntTensor& crop_ids, const nn::IntTensor* map_ids) const;

 private:
  nn::VarF activate(const nn::VarF& x) const;
  nn::VarF trunk(const nn::IntTensor& crop_ids, const nn::IntTensor* map_ids, ActivationTaps* taps,
                 const std::vector<std::string>* filter) const;

  AgentConfig config_;
  nn::ParamSet<float> params_;
  nn::EmbeddingLayer<float> embed_;
  std::vector<nn::Conv3x3Layer<float>> map_convs_;
  std::vector<nn::Conv3x3Layer<float>> crop_convs_;
  nn::LinearLayer<float> linear1_, linear2_;
  nn::LstmCell<float> lstm_;
  nn::LinearLayer<float> action_head_, value_head_;
};

/// Deterministic construction from (config, seed).
std::unique_ptr<AgentNet> build_agent(const AgentConfig& config, uint64_t seed);

}  // namespace roomprobe::agent
