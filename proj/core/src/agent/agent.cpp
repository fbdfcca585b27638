#include "roomprobe/agent/agent.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace roomprobe::agent {

using nn::IntTensor;
using nn::TensorF;
using nn::VarF;

AgentConfig AgentConfig::experiment1() {
  AgentConfig c;
  c.lstm = false;
  c.use_full_map = true;
  c.crop_size = 9;
  c.n_actions = 8;
  return c;
}

AgentConfig AgentConfig::experiment2() {
  AgentConfig c;
  c.lstm = true;
  c.use_full_map = false;
  c.crop_size = 5;
  c.n_actions = 4;
  return c;
}

AgentConfig AgentConfig::experiment3() {
  AgentConfig c = experiment2();
  c.crop_size = 3;
  return c;
}

std::vector<std::string> tap_names(const AgentConfig& config) {
  std::vector<std::string> names = {"conv1", "conv2", "conv3", "conv4", "conv5", "linear1", "linear2"};
  if (config.lstm) {
    names.push_back("lstm_hidden");
    names.push_back("lstm_cell");
  }
  return names;
}

int tap_dim(const AgentConfig& config, const std::string& name) {
  const int64_t hw = config.use_full_map ? env::kCanvasRows * env::kCanvasCols
                                         : static_cast<int64_t>(config.crop_size) * config.crop_size;
  if (name == "conv1" || name == "conv2" || name == "conv3" || name == "conv4")
    return static_cast<int>(config.conv_channels[0] * hw);
  if (name == "conv5") return static_cast<int>(config.conv_channels[4] * hw);
  if (name == "linear1" || name == "linear2") return config.hidden_dim;
  if (config.lstm && (name == "lstm_hidden" || name == "lstm_cell")) return config.lstm_size;
  std::ostringstream os;
  os << "unknown tap '" << name << "'; valid taps:";
  for (const auto& n : tap_names(config)) os << " " << n;
  throw std::invalid_argument(os.str());
}

std::pair<int, float> select_action(const TensorF& logits, nn::Rng& rng, SelectMode mode) {
  if (mode == SelectMode::kGreedy) {
    const int a = nn::argmax_lowest(logits.ptr(), logits.numel());
    TensorF p = nn::softmax_probs(logits);
    return {a, std::log(p[a])};
  }
  return nn::categorical(logits, rng);
}

namespace {

bool wants(const std::vector<std::string>* filter, const char* name) {
  if (!filter) return false;
  return std::find(filter->begin(), filter->end(), name) != filter->end();
}

void record_tap(ActivationTaps* taps, const std::vector<std::string>* filter, const std::string& name,
                const VarF& v, int batch) {
  if (!taps || !wants(filter, name.c_str())) return;
  TensorF flat({batch, static_cast<int>(v.value().numel() / batch)}, v.value().data);
  taps->entries.emplace_back(name, std::move(flat));
}

}  // namespace

AgentNet::AgentNet(AgentConfig config, uint64_t seed) : config_(config) {
  nn::Rng rng(seed);
  const float trunk_gain = std::sqrt(2.0f);
  embed_ = nn::EmbeddingLayer<float>::init(params_, "embed", config_.glyph_vocab, config_.embed_dim, rng);
  if (config_.use_full_map) {
    int in_ch = config_.embed_dim;
    for (int i = 0; i < 5; ++i) {
      map_convs_.push_back(nn::Conv3x3Layer<float>::init(params_, "map_conv" + std::to_string(i + 1),
                                                         config_.conv_channels[i], in_ch, trunk_gain, rng));
      in_ch = config_.conv_channels[i];
    }
  }
  {
    int in_ch = config_.embed_dim;
    for (int i = 0; i < 5; ++i) {
      crop_convs_.push_back(nn::Conv3x3Layer<float>::init(params_, "crop_conv" + std::to_string(i + 1),
                                                          config_.conv_channels[i], in_ch, trunk_gain, rng));
      in_ch = config_.conv_channels[i];
    }
  }
  linear1_ = nn::LinearLayer<float>::init(params_, "linear1", config_.hidden_dim, config_.trunk_in_dim(),
                                          trunk_gain, rng);
  linear2_ = nn::LinearLayer<float>::init(params_, "linear2", config_.hidden_dim, config_.hidden_dim, trunk_gain, rng);
  if (config_.lstm) lstm_ = nn::LstmCell<float>::init(params_, "lstm", config_.hidden_dim, config_.lstm_size, rng);
  // Near-uniform initial policy; unit-gain value head.
  action_head_ = nn::LinearLayer<float>::init(params_, "action_head", config_.n_actions, config_.head_in_dim(),
                                              0.01f, rng);
  value_head_ = nn::LinearLayer<float>::init(params_, "value_head", 1, config_.head_in_dim(), 1.0f, rng);
}

std::unique_ptr<AgentNet> build_agent(const AgentConfig& config, uint64_t seed) {
  return std::make_unique<AgentNet>(config, seed);
}

VarF AgentNet::activate(const VarF& x) const { return config_.use_relu ? nn::relu(x) : nn::elu(x); }

VarF AgentNet::trunk(const IntTensor& crop_ids, const IntTensor* map_ids, ActivationTaps* taps,
                     const std::vector<std::string>* filter) const {
  const int B = crop_ids.dim(0);
  if (crop_ids.dim(1) != config_.crop_size || crop_ids.dim(2) != config_.crop_size)
    throw std::invalid_argument("agent forward: crop " + nn::shape_str(crop_ids.shape) + " does not match config crop " +
                                std::to_string(config_.crop_size));
  if (config_.use_full_map && map_ids == nullptr)
    throw std::invalid_argument("agent forward: config uses the full map but no map observation was given");

  // Conv taps follow the map stream when it exists (its sizes are the
  // documented ones), else the crop stream.
  const bool tap_crop_stream = !config_.use_full_map;

  VarF crop_x = embed_(crop_ids);
  for (int i = 0; i < 5; ++i) {
    crop_x = activate(crop_convs_[i](crop_x));
    if (tap_crop_stream) record_tap(taps, filter, "conv" + std::to_string(i + 1), crop_x, B);
  }
  VarF feat = nn::reshape(crop_x, {B, config_.crop_feat_dim()});

  if (config_.use_full_map) {
    if (map_ids->dim(1) != env::kCanvasRows || map_ids->dim(2) != env::kCanvasCols)
      throw std::invalid_argument("agent forward: map observation " + nn::shape_str(map_ids->shape) +
                                  " does not match the canvas");
    VarF map_x = embed_(*map_ids);
    for (int i = 0; i < 5; ++i) {
      map_x = activate(map_convs_[i](map_x));
      record_tap(taps, filter, "conv" + std::to_string(i + 1), map_x, B);
    }
    VarF map_feat = nn::reshape(map_x, {B, config_.map_feat_dim()});
    feat = nn::concat_cols(map_feat, feat);
  }

  VarF h1 = activate(linear1_(feat));
  record_tap(taps, filter, "linear1", h1, B);
  VarF h2 = activate(linear2_(h1));
  record_tap(taps, filter, "linear2", h2, B);
  return h2;
}

ForwardResult AgentNet::forward_batch(const std::vector<env::Observation>& obs, const LstmStateBatch* state,
                                      const std::vector<std::string>& tap_filter) const {
  nn::NoGradGuard ng;
  const int B = static_cast<int>(obs.size());
  if (B == 0) throw std::invalid_argument("agent forward: empty observation batch");
  if (config_.lstm && state == nullptr) throw std::invalid_argument("agent forward: recurrent config needs lstm state");
  if (!config_.lstm && state != nullptr)
    throw std::invalid_argument("agent forward: feedforward config takes no lstm state");

  const int k = config_.crop_size;
  IntTensor crop_ids({B, k, k});
  for (int b = 0; b < B; ++b) {
    if (obs[b].crop_size != k)
      throw std::invalid_argument("agent forward: observation crop " + std::to_string(obs[b].crop_size) +
                                  " does not match config crop " + std::to_string(k));
    std::memcpy(crop_ids.data.data() + static_cast<int64_t>(b) * k * k, obs[b].crop.data(),
                sizeof(int32_t) * k * k);
  }
  IntTensor map_ids;
  const IntTensor* map_ptr = nullptr;
  if (config_.use_full_map) {
    map_ids = IntTensor({B, env::kCanvasRows, env::kCanvasCols});
    for (int b = 0; b < B; ++b) {
      if (!obs[b].has_full_map)
        throw std::invalid_argument("agent forward: config uses the full map but observation has none");
      std::memcpy(map_ids.data.data() + static_cast<int64_t>(b) * env::kCanvasRows * env::kCanvasCols,
                  obs[b].full_map.data(), sizeof(int32_t) * env::kCanvasRows * env::kCanvasCols);
    }
    map_ptr = &map_ids;
  }

  ForwardResult res;
  VarF features = trunk(crop_ids, map_ptr, &res.taps, &tap_filter);
  VarF head_in = features;
  if (config_.lstm) {
    VarF h_prev = VarF::constant(state->h);
    VarF c_prev = VarF::constant(state->c);
    auto [h, c] = lstm_.step(features, h_prev, c_prev);
    res.next_state.h = h.value();
    res.next_state.c = c.value();
    record_tap(&res.taps, &tap_filter, "lstm_hidden", h, B);
    record_tap(&res.taps, &tap_filter, "lstm_cell", c, B);
    head_in = h;
  }
  res.logits = action_head_(head_in).value();
  VarF v = value_head_(head_in);
  res.values = TensorF({B}, v.value().data);
  return res;
}

AgentNet::TrainOut AgentNet::train_forward_sequences(const IntTensor& crop_ids, const IntTensor* map_ids,
                                                     int n_chunks, int chunk_len, const TensorF& h0,
                                                     const TensorF& c0, const std::vector<uint8_t>& done) const {
  if (!config_.lstm) throw std::logic_error("train_forward_sequences requires a recurrent config");
  const int N = crop_ids.dim(0);
  if (N != n_chunks * chunk_len) throw std::invalid_argument("train_forward_sequences: rows != n_chunks * chunk_len");
  if (static_cast<int>(done.size()) != N) throw std::invalid_argument("train_forward_sequences: done size mismatch");

  VarF features = trunk(crop_ids, map_ids, nullptr, nullptr);
  // Input-side gate pre-activation for the whole batch in one GEMM; the
  // recurrent part scans per step.
  VarF xgates = nn::linear(features, lstm_.Wx, lstm_.b);

  VarF h = VarF::constant(h0);
  VarF c = VarF::constant(c0);
  std::vector<VarF> h_steps;
  h_steps.reserve(chunk_len);
  const int S = config_.lstm_size;
  for (int t = 0; t < chunk_len; ++t) {
    VarF gates = nn::add(nn::slice_rows(xgates, t * n_chunks, (t + 1) * n_chunks), nn::linear_nobias(h, lstm_.Wh));
    VarF i = nn::sigmoid(nn::slice_cols(gates, 0, S));
    VarF f = nn::sigmoid(nn::slice_cols(gates, S, 2 * S));
    VarF g = nn::tanh_(nn::slice_cols(gates, 2 * S, 3 * S));
    VarF o = nn::sigmoid(nn::slice_cols(gates, 3 * S, 4 * S));
    c = nn::add(nn::mul(f, c), nn::mul(i, g));
    h = nn::mul(o, nn::tanh_(c));
    h_steps.push_back(h);
    // Episodes that ended at step t restart from zero state.
    std::vector<float> keep(n_chunks, 1.0f);
    bool any_done = false;
    for (int j = 0; j < n_chunks; ++j)
      if (done[t * n_chunks + j]) {
        keep[j] = 0.0f;
        any_done = true;
      }
    if (any_done && t + 1 < chunk_len) {
      h = nn::mul_rows(h, keep);
      c = nn::mul_rows(c, keep);
    }
  }
  VarF H = nn::stack_rows(h_steps);  // [N, S], time-major like the inputs

  TrainOut out;
  out.logits = action_head_(H);
  out.values = nn::reshape(value_head_(H), {N});
  return out;
}

AgentNet::TrainOut AgentNet::train_forward(const IntTensor& crop_ids, const IntTensor* map_ids) const {
  if (config_.lstm) throw std::logic_error("train_forward is for feedforward configs");
  const int N = crop_ids.dim(0);
  VarF features = trunk(crop_ids, map_ids, nullptr, nullptr);
  TrainOut out;
  out.logits = action_head_(features);
  out.values = nn::reshape(value_head_(features), {N});
  return out;
}

}  // namespace roomprobe::agent
