#include <benchmark/benchmark.h>

#include "roomprobe/ppo/ppo.hpp"

using namespace roomprobe;

namespace {

env::RoomConfig exp3_room() {
  env::RoomConfig r = env::RoomConfig::for_kind(env::RoomKind::kRandom);
  r.crop_size = 3;
  r.action_set = env::ActionSet::kCardinal4;
  return r;
}

void BM_EnvStep(benchmark::State& state) {
  env::RoomEnv e(env::RoomConfig::for_kind(env::RoomKind::kUltimate));
  e.reset(1);
  nn::Rng rng(2);
  for (auto _ : state) {
    if (e.done()) e.reset(rng.u64());
    benchmark::DoNotOptimize(e.step(rng.index(8)));
  }
}
BENCHMARK(BM_EnvStep);

void BM_AgentForwardBatch16(benchmark::State& state) {
  auto net = agent::build_agent(agent::AgentConfig::experiment3(), 3);
  env::RoomConfig room = exp3_room();
  std::vector<env::RoomEnv> envs;
  std::vector<env::Observation> obs;
  for (int i = 0; i < 16; ++i) {
    envs.emplace_back(room);
    obs.push_back(envs.back().reset(i));
  }
  auto lstm = agent::LstmStateBatch::zeros(16, 512);
  for (auto _ : state) {
    auto out = net->forward_batch(obs, &lstm);
    benchmark::DoNotOptimize(out.logits);
  }
}
BENCHMARK(BM_AgentForwardBatch16);

void BM_Conv2dForwardCrop9(benchmark::State& state) {
  nn::Rng rng(5);
  nn::TensorF x({64, 64, 9, 9});
  for (auto& v : x.data) v = static_cast<float>(rng.normal());
  nn::TensorF k({16, 64, 3, 3});
  for (auto& v : k.data) v = static_cast<float>(rng.normal() * 0.1);
  nn::TensorF b({16});
  nn::NoGradGuard ng;
  for (auto _ : state) {
    auto out = nn::conv2d_3x3(nn::VarF::constant(x), nn::VarF::constant(k), nn::VarF::constant(b));
    benchmark::DoNotOptimize(out.value().data);
  }
}
BENCHMARK(BM_Conv2dForwardCrop9);

void BM_GaeT128(benchmark::State& state) {
  nn::Rng rng(6);
  std::vector<double> r(128), v(128);
  std::vector<uint8_t> d(128, 0);
  for (int t = 0; t < 128; ++t) {
    r[t] = rng.normal();
    v[t] = rng.normal();
    d[t] = rng.bernoulli(0.05);
  }
  for (auto _ : state) {
    auto out = ppo::compute_gae(r, v, d, 0.1, 0.99, 0.95);
    benchmark::DoNotOptimize(out.first);
  }
}
BENCHMARK(BM_GaeT128);

void BM_PpoMinibatchUpdate(benchmark::State& state) {
  auto net = agent::build_agent(agent::AgentConfig::experiment3(), 7);
  ppo::PPOConfig cfg;
  cfg.n_workers = 4;
  cfg.rollout_length = 64;
  cfg.bptt_chunk = 32;
  cfg.minibatch_size = 256;
  cfg.epochs_per_batch = 1;
  ppo::RolloutCollector col(exp3_room(), cfg, 11, 100);
  auto batch = col.collect(*net, cfg.rollout_length);
  ppo::prepare_targets(batch, cfg.gamma, cfg.gae_lambda);
  nn::AdamState<float> adam;
  {
    std::vector<nn::TensorF*> ps;
    for (auto& v : net->params().vars) ps.push_back(&v.mutable_value());
    adam = nn::AdamState<float>::for_params(ps, cfg.lr);
  }
  nn::Rng rng(12);
  for (auto _ : state) {
    auto rep = ppo::ppo_update(*net, batch, cfg, adam, rng);
    benchmark::DoNotOptimize(rep);
  }
}
BENCHMARK(BM_PpoMinibatchUpdate);

}  // namespace

BENCHMARK_MAIN();
