#include "roomprobe/probe/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "roomprobe/nn/adam.hpp"

namespace roomprobe::probe {

using nn::TensorF;
using nn::VarF;

double chance_level(int margin) {
  if (margin < 0 || margin > 2) throw std::invalid_argument("chance_level: margin must be 0, 1 or 2");
  return 1.0 / (kGridClasses - 2 * margin);
}

std::string probe_arch_name(ProbeArch a) { return a == ProbeArch::kLinear ? "linear" : "mlp3"; }

ProbeConfig ProbeConfig::linear(float lr) {
  ProbeConfig c;
  c.arch = ProbeArch::kLinear;
  c.lr = lr;
  return c;
}

ProbeConfig ProbeConfig::mlp3(float lr) {
  ProbeConfig c;
  c.arch = ProbeArch::kMlp3;
  c.lr = lr;
  return c;
}

std::vector<ActivationDataset> collect_activations(const agent::AgentNet& net, const env::RoomConfig& room,
                                                   const std::vector<std::string>& taps, int64_t n, uint64_t seed,
                                                   int n_envs) {
  if (taps.empty()) throw std::invalid_argument("collect_activations: no taps requested");
  if (n < 1) throw std::invalid_argument("collect_activations: n must be positive");
  const agent::AgentConfig& acfg = net.config();
  if (acfg.crop_size != room.crop_size || acfg.use_full_map != room.full_map || acfg.n_actions != room.n_actions())
    throw std::invalid_argument("collect_activations: checkpoint config does not match the room config");

  std::vector<ActivationDataset> out;
  for (const auto& t : taps) {
    ActivationDataset d;
    d.tap_name = t;
    d.activation_dim = agent::tap_dim(acfg, t);  // throws on unknown taps
    d.meta.map_kind = env::room_kind_name(room.kind);
    d.meta.crop_size = room.crop_size;
    d.meta.seed = seed;
    d.activations.reserve(static_cast<size_t>(n) * d.activation_dim);
    d.xs.reserve(n);
    d.ys.reserve(n);
    out.push_back(std::move(d));
  }

  std::vector<std::unique_ptr<env::RoomEnv>> envs;
  std::vector<env::Observation> obs(n_envs);
  std::vector<uint64_t> episode(n_envs, 0);
  for (int w = 0; w < n_envs; ++w) {
    envs.push_back(std::make_unique<env::RoomEnv>(room));
    obs[w] = envs[w]->reset(nn::mix_seed(seed + w, w, episode[w]++));
  }
  agent::LstmStateBatch state;
  if (acfg.lstm) state = agent::LstmStateBatch::zeros(n_envs, acfg.lstm_size);
  nn::Rng action_rng(nn::mix_seed(seed, 0xAB5EED));

  int64_t count = 0;
  while (count < n) {
    agent::ForwardResult fwd = net.forward_batch(obs, acfg.lstm ? &state : nullptr, taps);
    for (int w = 0; w < n_envs && count < n; ++w) {
      auto [x, y] = envs[w]->room_position();
      for (auto& d : out) {
        const TensorF* tap = fwd.taps.find(d.tap_name);
        d.append(tap->ptr() + static_cast<int64_t>(w) * d.activation_dim, static_cast<uint8_t>(x),
                 static_cast<uint8_t>(y));
      }
      ++count;
    }
    if (count >= n) break;
    for (int w = 0; w < n_envs; ++w) {
      const int A = acfg.n_actions;
      TensorF row({A});
      std::memcpy(row.ptr(), fwd.logits.ptr() + static_cast<int64_t>(w) * A, sizeof(float) * A);
      auto [a, lp] = nn::categorical(row, action_rng);
      env::StepResult sr = envs[w]->step(a);
      if (sr.done) {
        obs[w] = envs[w]->reset(nn::mix_seed(seed + w, w, episode[w]++));
        if (acfg.lstm) state.reset_row(w);
      } else {
        obs[w] = std::move(sr.obs);
      }
    }
    if (acfg.lstm) {
      agent::LstmStateBatch next = std::move(fwd.next_state);
      for (int w = 0; w < n_envs; ++w)
        if (envs[w]->state().steps == 0) next.reset_row(w);  // freshly reset
      state = std::move(next);
    }
  }
  return out;
}

ActivationDataset filter_boundary(const ActivationDataset& d, int margin) {
  if (margin < 0 || margin > 2) throw std::invalid_argument("filter_boundary: margin must be 0, 1 or 2");
  ActivationDataset out;
  out.tap_name = d.tap_name;
  out.activation_dim = d.activation_dim;
  out.margin = static_cast<uint8_t>(margin);
  out.meta = d.meta;
  const int lo = margin, hi = kGridClasses - 1 - margin;
  for (int64_t i = 0; i < d.size(); ++i) {
    if (d.xs[i] < lo || d.xs[i] > hi || d.ys[i] < lo || d.ys[i] > hi) continue;
    out.append(d.record(i), d.xs[i], d.ys[i]);
  }
  if (out.size() == 0) throw std::runtime_error("filter_boundary: no records survive margin " + std::to_string(margin));
  return out;
}

std::pair<ActivationDataset, ActivationDataset> split_dataset(const ActivationDataset& d, int64_t n_train,
                                                              int64_t n_test, uint64_t seed) {
  if (n_train < 1 || n_test < 1) throw std::invalid_argument("split_dataset: counts must be positive");
  int64_t train_n = n_train, test_n = n_test;
  if (n_train + n_test > d.size()) {
    // Proportional shrink preserving the requested ratio.
    train_n = d.size() * n_train / (n_train + n_test);
    test_n = d.size() * n_test / (n_train + n_test);
    if (train_n < 1 || test_n < 1)
      throw std::runtime_error("split_dataset: only " + std::to_string(d.size()) + " records for requested " +
                               std::to_string(n_train) + "/" + std::to_string(n_test) + " split");
  }

  std::vector<int64_t> perm(d.size());
  for (int64_t i = 0; i < d.size(); ++i) perm[i] = i;
  nn::Rng rng(seed);
  for (int64_t i = 0; i + 1 < static_cast<int64_t>(perm.size()); ++i) {
    const int64_t j = i + static_cast<int64_t>(rng.below(perm.size() - i));
    std::swap(perm[i], perm[j]);
  }

  auto take = [&](int64_t from, int64_t count) {
    ActivationDataset s;
    s.tap_name = d.tap_name;
    s.activation_dim = d.activation_dim;
    s.margin = d.margin;
    s.meta = d.meta;
    s.activations.reserve(count * d.activation_dim);
    for (int64_t i = from; i < from + count; ++i) s.append(d.record(perm[i]), d.xs[perm[i]], d.ys[perm[i]]);
    return s;
  };
  return {take(0, train_n), take(train_n, test_n)};
}

Probe::Probe(ProbeArch arch, int in_dim, int hidden_dim, uint64_t seed)
    : arch_(arch), in_dim_(in_dim), hidden_dim_(hidden_dim) {
  nn::Rng rng(seed);
  const float gain = std::sqrt(2.0f);
  if (arch_ == ProbeArch::kLinear) {
    l1_ = nn::LinearLayer<float>::init(params_, "l1", 2 * kGridClasses, in_dim_, 1.0f, rng);
  } else {
    l1_ = nn::LinearLayer<float>::init(params_, "l1", hidden_dim_, in_dim_, gain, rng);
    l2_ = nn::LinearLayer<float>::init(params_, "l2", hidden_dim_, hidden_dim_, gain, rng);
    l3_ = nn::LinearLayer<float>::init(params_, "l3", 2 * kGridClasses, hidden_dim_, 1.0f, rng);
  }
}

VarF Probe::forward(const VarF& x) const {
  if (x.value().cols() != in_dim_)
    throw std::invalid_argument("probe forward: input dim " + std::to_string(x.value().cols()) +
                                " does not match probe dim " + std::to_string(in_dim_));
  if (arch_ == ProbeArch::kLinear) return l1_(x);
  return l3_(nn::relu(l2_(nn::relu(l1_(x)))));
}

Probe train_probe(const ActivationDataset& train, const ProbeConfig& config) {
  if (train.size() == 0) throw std::invalid_argument("train_probe: empty training set");
  Probe probe(config.arch, train.activation_dim, config.hidden_dim, nn::mix_seed(config.seed, 0x9B0BE));

  nn::AdamState<float> adam;
  {
    std::vector<TensorF*> ps;
    for (auto& v : probe.params().vars) ps.push_back(&v.mutable_value());
    adam = nn::AdamState<float>::for_params(ps, config.lr);
  }
  nn::Rng shuffle_rng(nn::mix_seed(config.seed, 0x5081FFL));

  const int64_t N = train.size();
  const int D = train.activation_dim;
  std::vector<int64_t> ids(N);
  for (int64_t i = 0; i < N; ++i) ids[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int64_t i = 0; i + 1 < N; ++i) {
      const int64_t j = i + static_cast<int64_t>(shuffle_rng.below(N - i));
      std::swap(ids[i], ids[j]);
    }
    for (int64_t start = 0; start < N; start += config.batch_size) {
      const int B = static_cast<int>(std::min<int64_t>(config.batch_size, N - start));
      TensorF xb({B, D});
      std::vector<int> tx(B), ty(B);
      for (int j = 0; j < B; ++j) {
        const int64_t r = ids[start + j];
        std::memcpy(xb.ptr() + static_cast<int64_t>(j) * D, train.record(r), sizeof(float) * D);
        tx[j] = train.xs[r];
        ty[j] = train.ys[r];
      }
      VarF logits = probe.forward(VarF::constant(std::move(xb)));
      VarF loss = nn::add(nn::mean_all(nn::cross_entropy_rows(nn::slice_cols(logits, 0, kGridClasses), tx)),
                          nn::mean_all(nn::cross_entropy_rows(nn::slice_cols(logits, kGridClasses, 2 * kGridClasses), ty)));
      if (!std::isfinite(loss.value()[0]))
        throw std::runtime_error("train_probe: non-finite loss at epoch " + std::to_string(epoch));
      nn::backward(loss);
      nn::adam_step(probe.params().vars, adam);
      probe.params().zero_grad();
    }
  }
  return probe;
}

std::string ProbeReport::csv_row() const {
  std::ostringstream os;
  os << tap_name << "," << arch << "," << acc_x << "," << acc_y << "," << acc_mean << "," << chance << "," << n_test;
  return os.str();
}

ProbeReport evaluate_probe(const Probe& p, const ActivationDataset& test) {
  if (test.size() == 0) throw std::invalid_argument("evaluate_probe: empty test set");
  if (test.activation_dim != p.in_dim())
    throw std::invalid_argument("evaluate_probe: dataset dim " + std::to_string(test.activation_dim) +
                                " does not match probe dim " + std::to_string(p.in_dim()));
  nn::NoGradGuard ng;
  const int64_t N = test.size();
  const int D = test.activation_dim;
  int64_t hit_x = 0, hit_y = 0;
  const int64_t block = 4096;
  for (int64_t start = 0; start < N; start += block) {
    const int B = static_cast<int>(std::min(block, N - start));
    TensorF xb({B, D});
    std::memcpy(xb.ptr(), test.record(start), sizeof(float) * B * D);
    VarF out = p.forward(VarF::constant(std::move(xb)));
    const TensorF& logits = out.value();
    for (int j = 0; j < B; ++j) {
      const float* row = logits.ptr() + static_cast<int64_t>(j) * 2 * kGridClasses;
      if (nn::argmax_lowest(row, kGridClasses) == test.xs[start + j]) ++hit_x;
      if (nn::argmax_lowest(row + kGridClasses, kGridClasses) == test.ys[start + j]) ++hit_y;
    }
  }
  ProbeReport r;
  r.acc_x = static_cast<double>(hit_x) / N;
  r.acc_y = static_cast<double>(hit_y) / N;
  r.acc_mean = 0.5 * (r.acc_x + r.acc_y);
  r.chance = chance_level(test.margin);
  r.n_test = N;
  r.tap_name = test.tap_name;
  r.arch = probe_arch_name(p.arch());
  return r;
}

}  // namespace roomprobe::probe
