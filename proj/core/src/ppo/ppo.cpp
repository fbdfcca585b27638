#include "roomprobe/ppo/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "roomprobe/nn/adam.hpp"

namespace roomprobe::ppo {

using nn::IntTensor;
using nn::TensorF;
using nn::VarF;

void PPOConfig::validate() const {
  if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("ppo config: gamma must be in [0,1]");
  if (gae_lambda < 0.0 || gae_lambda > 1.0) throw std::invalid_argument("ppo config: gae_lambda must be in [0,1]");
  if (clip_eps <= 0.0 || clip_eps >= 1.0) throw std::invalid_argument("ppo config: clip_eps must be in (0,1)");
  if (n_workers < 1) throw std::invalid_argument("ppo config: n_workers must be >= 1");
  if (rollout_length < 1) throw std::invalid_argument("ppo config: rollout_length must be >= 1");
  if (bptt_chunk < 1 || rollout_length % bptt_chunk != 0)
    throw std::invalid_argument("ppo config: rollout_length must be a multiple of bptt_chunk");
  if (minibatch_size < 1 || minibatch_size % bptt_chunk != 0)
    throw std::invalid_argument("ppo config: minibatch_size must be a multiple of bptt_chunk");
}

RolloutCollector::RolloutCollector(const env::RoomConfig& room, const PPOConfig& cfg, uint64_t seed,
                                   int stats_window)
    : room_(room),
      cfg_(cfg),
      base_seed_(seed),
      action_rng_(nn::mix_seed(seed, 0xAC7104)),
      stats_window_(stats_window) {
  envs_.reserve(cfg.n_workers);
  cur_obs_.resize(cfg.n_workers);
  episode_counter_.assign(cfg.n_workers, 0);
  ep_return_.assign(cfg.n_workers, 0.0);
  ep_len_.assign(cfg.n_workers, 0);
  for (int w = 0; w < cfg.n_workers; ++w) {
    envs_.push_back(std::make_unique<env::RoomEnv>(room));
    reset_worker(w);
  }
}

void RolloutCollector::reset_worker(int w) {
  // Disjoint per-worker episode seed streams.
  const uint64_t s = nn::mix_seed(base_seed_ + static_cast<uint64_t>(w), w, episode_counter_[w]++);
  cur_obs_[w] = envs_[w]->reset(s);
  ep_return_[w] = 0.0;
  ep_len_[w] = 0;
}

double RolloutCollector::mean_return() const {
  if (recent_returns_.empty()) return 0.0;
  double s = 0.0;
  for (double r : recent_returns_) s += r;
  return s / static_cast<double>(recent_returns_.size());
}

double RolloutCollector::mean_episode_length() const {
  if (recent_lens_.empty()) return 0.0;
  double s = 0.0;
  for (int l : recent_lens_) s += l;
  return s / static_cast<double>(recent_lens_.size());
}

TrajectoryBatch RolloutCollector::collect(const agent::AgentNet& net, int T) {
  const agent::AgentConfig& acfg = net.config();
  const int W = cfg_.n_workers;
  const int k = acfg.crop_size;
  const bool lstm = acfg.lstm;
  const int L = cfg_.bptt_chunk;
  const int n_chunks = lstm ? T / L : 0;

  TrajectoryBatch b;
  b.n_workers = W;
  b.T = T;
  b.crop_size = k;
  b.has_map = acfg.use_full_map;
  b.crops = IntTensor({W * T, k, k});
  if (b.has_map) b.maps = IntTensor({W * T, env::kCanvasRows, env::kCanvasCols});
  b.actions.resize(static_cast<size_t>(W) * T);
  b.logp.resize(static_cast<size_t>(W) * T);
  b.values.resize(static_cast<size_t>(W) * T);
  b.rewards.resize(static_cast<size_t>(W) * T);
  b.dones.assign(static_cast<size_t>(W) * T, 0);
  b.bootstrap.resize(W);
  if (lstm) {
    b.chunk_len = L;
    b.h0 = TensorF::zeros({W * n_chunks, acfg.lstm_size});
    b.c0 = TensorF::zeros({W * n_chunks, acfg.lstm_size});
    if (lstm_state_.h.data.empty()) lstm_state_ = agent::LstmStateBatch::zeros(W, acfg.lstm_size);
  }

  for (int t = 0; t < T; ++t) {
    if (lstm && t % L == 0) {
      const int ci = t / L;
      const int S = acfg.lstm_size;
      for (int w = 0; w < W; ++w) {
        std::memcpy(b.h0.ptr() + (static_cast<int64_t>(w) * n_chunks + ci) * S, lstm_state_.h.ptr() + static_cast<int64_t>(w) * S,
                    sizeof(float) * S);
        std::memcpy(b.c0.ptr() + (static_cast<int64_t>(w) * n_chunks + ci) * S, lstm_state_.c.ptr() + static_cast<int64_t>(w) * S,
                    sizeof(float) * S);
      }
    }

    agent::ForwardResult fwd = net.forward_batch(cur_obs_, lstm ? &lstm_state_ : nullptr);

    std::vector<int> done_now;
    for (int w = 0; w < W; ++w) {
      const int64_t row = static_cast<int64_t>(w) * T + t;
      std::memcpy(b.crops.data.data() + row * k * k, cur_obs_[w].crop.data(), sizeof(int32_t) * k * k);
      if (b.has_map)
        std::memcpy(b.maps.data.data() + row * env::kCanvasRows * env::kCanvasCols, cur_obs_[w].full_map.data(),
                    sizeof(int32_t) * env::kCanvasRows * env::kCanvasCols);

      const int A = acfg.n_actions;
      TensorF logits_row({A});
      std::memcpy(logits_row.ptr(), fwd.logits.ptr() + static_cast<int64_t>(w) * A, sizeof(float) * A);
      auto [a, lp] = nn::categorical(logits_row, action_rng_);
      b.actions[row] = a;
      b.logp[row] = lp;
      b.values[row] = fwd.values[w];

      env::StepResult sr = envs_[w]->step(a);
      b.rewards[row] = static_cast<float>(sr.reward);
      ep_return_[w] += sr.reward;
      ep_len_[w] += 1;
      if (sr.done) {
        b.dones[row] = 1;
        recent_returns_.push_back(ep_return_[w]);
        recent_lens_.push_back(ep_len_[w]);
        while (static_cast<int>(recent_returns_.size()) > stats_window_) {
          recent_returns_.pop_front();
          recent_lens_.pop_front();
        }
        ++total_episodes_;
        reset_worker(w);
        done_now.push_back(w);
      } else {
        cur_obs_[w] = std::move(sr.obs);
      }
    }
    if (lstm) {
      lstm_state_ = std::move(fwd.next_state);
      for (int w : done_now) lstm_state_.reset_row(w);
    }
  }

  agent::ForwardResult fin = net.forward_batch(cur_obs_, lstm ? &lstm_state_ : nullptr);
  for (int w = 0; w < W; ++w) b.bootstrap[w] = fin.values[w];
  return b;
}

void prepare_targets(TrajectoryBatch& batch, double gamma, double lambda) {
  const int W = batch.n_workers, T = batch.T;
  batch.advantages.resize(static_cast<size_t>(W) * T);
  batch.value_targets.resize(static_cast<size_t>(W) * T);
  for (int w = 0; w < W; ++w) {
    std::vector<double> r(T), v(T);
    std::vector<uint8_t> d(T);
    for (int t = 0; t < T; ++t) {
      r[t] = batch.rewards[static_cast<size_t>(w) * T + t];
      v[t] = batch.values[static_cast<size_t>(w) * T + t];
      d[t] = batch.dones[static_cast<size_t>(w) * T + t];
    }
    auto [adv, tgt] = compute_gae(r, v, d, batch.bootstrap[w], gamma, lambda);
    for (int t = 0; t < T; ++t) {
      batch.advantages[static_cast<size_t>(w) * T + t] = static_cast<float>(adv[t]);
      batch.value_targets[static_cast<size_t>(w) * T + t] = static_cast<float>(tgt[t]);
    }
  }
  normalize_advantages(batch.advantages);
}

namespace {

struct MinibatchLoss {
  double policy_loss, value_loss, entropy, clip_fraction;
};

MinibatchLoss apply_minibatch(agent::AgentNet& net, agent::AgentNet::TrainOut out, const std::vector<int>& actions,
                              const std::vector<float>& logp_old, const std::vector<float>& adv,
                              const std::vector<float>& targets, const PPOConfig& cfg,
                              nn::AdamState<float>& adam, const char* where) {
  const int N = static_cast<int>(actions.size());
  VarF logp_new = nn::gather_cols(nn::log_softmax(out.logits), actions);
  VarF ratio = nn::exp_(nn::sub(logp_new, VarF::constant(TensorF({N}, logp_old))));
  TensorF adv_t({N}, adv);
  VarF surr1 = nn::mul_const(ratio, adv_t);
  VarF surr2 = nn::mul_const(nn::clamp(ratio, 1.0f - static_cast<float>(cfg.clip_eps), 1.0f + static_cast<float>(cfg.clip_eps)), adv_t);
  VarF policy_obj = nn::mean_all(nn::minimum(surr1, surr2));
  VarF value_loss = nn::mean_all(nn::square(nn::sub(out.values, VarF::constant(TensorF({N}, targets)))));
  VarF ent = nn::mean_all(nn::entropy_rows(out.logits));
  VarF loss = nn::sub(nn::add(nn::scale(value_loss, cfg.value_coef), nn::scale(ent, -cfg.entropy_coef)), policy_obj);

  if (!std::isfinite(loss.value()[0])) {
    std::ostringstream os;
    os << "ppo_update: non-finite loss in " << where << " (policy=" << policy_obj.value()[0]
       << " value=" << value_loss.value()[0] << " entropy=" << ent.value()[0] << ")";
    throw std::runtime_error(os.str());
  }

  nn::backward(loss);
  nn::clip_grad_norm(net.params().vars, 0.5f);
  nn::adam_step(net.params().vars, adam);
  net.params().zero_grad();

  int clipped = 0;
  for (int i = 0; i < N; ++i)
    if (std::abs(ratio.value()[i] - 1.0f) > cfg.clip_eps) ++clipped;

  return {-static_cast<double>(policy_obj.value()[0]), value_loss.value()[0], ent.value()[0],
          static_cast<double>(clipped) / N};
}

void shuffle_ids(std::vector<int>& ids, nn::Rng& rng) {
  for (size_t i = 0; i + 1 < ids.size(); ++i) {
    const size_t j = i + rng.below(ids.size() - i);
    std::swap(ids[i], ids[j]);
  }
}

}  // namespace

LossReport ppo_update(agent::AgentNet& net, const TrajectoryBatch& batch, const PPOConfig& cfg,
                      nn::AdamState<float>& adam, nn::Rng& shuffle_rng) {
  if (batch.advantages.empty()) throw std::logic_error("ppo_update: prepare_targets must run first");
  const agent::AgentConfig& acfg = net.config();
  const int W = batch.n_workers, T = batch.T, k = batch.crop_size;
  const int64_t canvas = static_cast<int64_t>(env::kCanvasRows) * env::kCanvasCols;

  LossReport total;
  int n_updates = 0;

  if (acfg.lstm) {
    const int L = batch.chunk_len;
    const int n_chunks_pw = T / L;
    const int total_chunks = W * n_chunks_pw;
    const int chunks_per_mb = std::max(1, cfg.minibatch_size / L);
    const int S = acfg.lstm_size;

    std::vector<int> ids(total_chunks);
    for (int i = 0; i < total_chunks; ++i) ids[i] = i;

    for (int epoch = 0; epoch < cfg.epochs_per_batch; ++epoch) {
      shuffle_ids(ids, shuffle_rng);
      for (int start = 0; start < total_chunks; start += chunks_per_mb) {
        const int M = std::min(chunks_per_mb, total_chunks - start);
        const int N = M * L;
        IntTensor crops({N, k, k});
        IntTensor maps;
        if (batch.has_map) maps = IntTensor({N, env::kCanvasRows, env::kCanvasCols});
        std::vector<int> actions(N);
        std::vector<float> logp(N), adv(N), tgt(N);
        std::vector<uint8_t> done(N);
        TensorF h0({M, S}), c0({M, S});

        for (int j = 0; j < M; ++j) {
          const int cid = ids[start + j];
          const int w = cid / n_chunks_pw;
          const int ci = cid % n_chunks_pw;
          std::memcpy(h0.ptr() + static_cast<int64_t>(j) * S, batch.h0.ptr() + static_cast<int64_t>(cid) * S,
                      sizeof(float) * S);
          std::memcpy(c0.ptr() + static_cast<int64_t>(j) * S, batch.c0.ptr() + static_cast<int64_t>(cid) * S,
                      sizeof(float) * S);
          for (int t = 0; t < L; ++t) {
            const int64_t src = static_cast<int64_t>(w) * T + ci * L + t;
            const int64_t dst = static_cast<int64_t>(t) * M + j;  // time-major
            std::memcpy(crops.data.data() + dst * k * k, batch.crops.data.data() + src * k * k,
                        sizeof(int32_t) * k * k);
            if (batch.has_map)
              std::memcpy(maps.data.data() + dst * canvas, batch.maps.data.data() + src * canvas,
                          sizeof(int32_t) * canvas);
            actions[dst] = batch.actions[src];
            logp[dst] = batch.logp[src];
            adv[dst] = batch.advantages[src];
            tgt[dst] = batch.value_targets[src];
            done[dst] = batch.dones[src];
          }
        }

        auto out = net.train_forward_sequences(crops, batch.has_map ? &maps : nullptr, M, L, h0, c0, done);
        std::ostringstream where;
        where << "epoch " << epoch << " chunk-minibatch at " << start;
        auto ml = apply_minibatch(net, std::move(out), actions, logp, adv, tgt, cfg, adam, where.str().c_str());
        total.policy_loss += ml.policy_loss;
        total.value_loss += ml.value_loss;
        total.entropy += ml.entropy;
        total.clip_fraction += ml.clip_fraction;
        ++n_updates;
      }
    }
  } else {
    const int n_rows = W * T;
    std::vector<int> ids(n_rows);
    for (int i = 0; i < n_rows; ++i) ids[i] = i;

    for (int epoch = 0; epoch < cfg.epochs_per_batch; ++epoch) {
      shuffle_ids(ids, shuffle_rng);
      for (int start = 0; start < n_rows; start += cfg.minibatch_size) {
        const int N = std::min(cfg.minibatch_size, n_rows - start);
        IntTensor crops({N, k, k});
        IntTensor maps;
        if (batch.has_map) maps = IntTensor({N, env::kCanvasRows, env::kCanvasCols});
        std::vector<int> actions(N);
        std::vector<float> logp(N), adv(N), tgt(N);
        for (int j = 0; j < N; ++j) {
          const int64_t src = ids[start + j];
          std::memcpy(crops.data.data() + static_cast<int64_t>(j) * k * k, batch.crops.data.data() + src * k * k,
                      sizeof(int32_t) * k * k);
          if (batch.has_map)
            std::memcpy(maps.data.data() + static_cast<int64_t>(j) * canvas, batch.maps.data.data() + src * canvas,
                        sizeof(int32_t) * canvas);
          actions[j] = batch.actions[src];
          logp[j] = batch.logp[src];
          adv[j] = batch.advantages[src];
          tgt[j] = batch.value_targets[src];
        }
        auto out = net.train_forward(crops, batch.has_map ? &maps : nullptr);
        std::ostringstream where;
        where << "epoch " << epoch << " minibatch at " << start;
        auto ml = apply_minibatch(net, std::move(out), actions, logp, adv, tgt, cfg, adam, where.str().c_str());
        total.policy_loss += ml.policy_loss;
        total.value_loss += ml.value_loss;
        total.entropy += ml.entropy;
        total.clip_fraction += ml.clip_fraction;
        ++n_updates;
      }
    }
  }

  total.policy_loss /= n_updates;
  total.value_loss /= n_updates;
  total.entropy /= n_updates;
  total.clip_fraction /= n_updates;
  return total;
}

std::string metrics_csv_row(const IterationMetrics& m) {
  std::ostringstream os;
  os << m.iter << "," << m.env_steps << "," << m.mean_return << "," << m.mean_ep_len << "," << m.policy_loss << ","
     << m.value_loss << "," << m.entropy << "," << m.clip_frac;
  return os.str();
}

TrainResult train(const env::RoomConfig& room, const agent::AgentConfig& agent_cfg, const PPOConfig& ppo_cfg,
                  uint64_t seed, agent::AgentNet& net, const TrainCallbacks& callbacks) {
  ppo_cfg.validate();
  if (net.config() != agent_cfg) throw std::invalid_argument("train: net was built with a different agent config");
  if (agent_cfg.n_actions != room.n_actions())
    throw std::invalid_argument("train: agent n_actions does not match the room action set");
  if (agent_cfg.crop_size != room.crop_size)
    throw std::invalid_argument("train: agent crop size does not match the room config");
  if (agent_cfg.use_full_map != room.full_map)
    throw std::invalid_argument("train: agent/room disagree about full-map observations");

  RolloutCollector collector(room, ppo_cfg, nn::mix_seed(seed, 0xC0113C7), ppo_cfg.convergence_window);
  nn::AdamState<float> adam;
  {
    std::vector<TensorF*> ps;
    for (auto& v : net.params().vars) ps.push_back(&v.mutable_value());
    adam = nn::AdamState<float>::for_params(ps, ppo_cfg.lr);
  }
  nn::Rng shuffle_rng(nn::mix_seed(seed, 0x5077FF1E));

  TrainResult res;
  double best = -std::numeric_limits<double>::infinity();
  while (res.env_steps < ppo_cfg.max_env_steps) {
    TrajectoryBatch batch = collector.collect(net, ppo_cfg.rollout_length);
    res.env_steps += batch.size();
    prepare_targets(batch, ppo_cfg.gamma, ppo_cfg.gae_lambda);
    LossReport rep = ppo_update(net, batch, ppo_cfg, adam, shuffle_rng);
    res.iterations += 1;

    IterationMetrics m;
    m.iter = res.iterations;
    m.env_steps = res.env_steps;
    m.mean_return = collector.mean_return();
    m.mean_ep_len = collector.mean_episode_length();
    m.policy_loss = rep.policy_loss;
    m.value_loss = rep.value_loss;
    m.entropy = rep.entropy;
    m.clip_frac = rep.clip_fraction;
    if (callbacks.on_iteration) callbacks.on_iteration(m);

    res.final_mean_return = m.mean_return;
    if (collector.window_size() > 0 && m.mean_return > best) {
      best = m.mean_return;
      res.best_mean_return = best;
      if (callbacks.on_checkpoint) callbacks.on_checkpoint(net, {res.env_steps, best}, true);
    }
    if (collector.window_size() >= ppo_cfg.convergence_window && m.mean_return >= ppo_cfg.convergence_return) {
      res.converged = true;
      break;
    }
  }
  if (callbacks.on_checkpoint) callbacks.on_checkpoint(net, {res.env_steps, res.final_mean_return}, false);
  return res;
}

}  // namespace roomprobe::ppo
