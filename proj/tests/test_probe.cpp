#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "roomprobe/probe/probe.hpp"

using namespace roomprobe;
using probe::ActivationDataset;
using probe::ProbeArch;
using probe::ProbeConfig;

namespace {

// Separable by construction: the activation is the one-hot pair of (x, y).
ActivationDataset one_hot_dataset(int64_t n, uint64_t seed, int margin = 0) {
  ActivationDataset d;
  d.tap_name = "synthetic";
  d.activation_dim = 30;
  d.margin = static_cast<uint8_t>(margin);
  nn::Rng rng(seed);
  const int lo = margin, hi = 14 - margin;
  std::vector<float> act(30);
  for (int64_t i = 0; i < n; ++i) {
    const int x = lo + rng.index(hi - lo + 1);
    const int y = lo + rng.index(hi - lo + 1);
    std::fill(act.begin(), act.end(), 0.0f);
    act[x] = 1.0f;
    act[15 + y] = 1.0f;
    d.append(act.data(), static_cast<uint8_t>(x), static_cast<uint8_t>(y));
  }
  return d;
}

ActivationDataset noise_dataset(int64_t n, int dim, uint64_t seed, int margin) {
  ActivationDataset d;
  d.tap_name = "noise";
  d.activation_dim = dim;
  d.margin = static_cast<uint8_t>(margin);
  nn::Rng rng(seed);
  const int lo = margin, hi = 14 - margin;
  std::vector<float> act(dim);
  for (int64_t i = 0; i < n; ++i) {
    for (auto& v : act) v = static_cast<float>(rng.normal());
    d.append(act.data(), static_cast<uint8_t>(lo + rng.index(hi - lo + 1)),
             static_cast<uint8_t>(lo + rng.index(hi - lo + 1)));
  }
  return d;
}

ActivationDataset uniform_positions(int64_t n, int dim, uint64_t seed) {
  ActivationDataset d;
  d.tap_name = "uniform";
  d.activation_dim = dim;
  nn::Rng rng(seed);
  std::vector<float> act(dim, 0.0f);
  for (int64_t i = 0; i < n; ++i)
    d.append(act.data(), static_cast<uint8_t>(rng.index(15)), static_cast<uint8_t>(rng.index(15)));
  return d;
}

}  // namespace

TEST(Chance, PaperValuesToThreeSignificantFigures) {
  EXPECT_NEAR(100.0 * probe::chance_level(0), 6.7, 0.05);
  EXPECT_NEAR(100.0 * probe::chance_level(2), 9.1, 0.05);
  EXPECT_NEAR(100.0 * probe::chance_level(1), 7.7, 0.05);
  EXPECT_THROW(probe::chance_level(3), std::invalid_argument);
}

TEST(Filter, MarginZeroIsIdentity) {
  auto d = uniform_positions(5000, 4, 1);
  auto f = probe::filter_boundary(d, 0);
  EXPECT_EQ(f.size(), d.size());
  EXPECT_EQ(f.xs, d.xs);
  EXPECT_EQ(f.activations, d.activations);
}

TEST(Filter, MarginsRestrictTheAlphabet) {
  auto d = uniform_positions(20000, 4, 2);
  auto f2 = probe::filter_boundary(d, 2);
  for (int64_t i = 0; i < f2.size(); ++i) {
    EXPECT_GE(f2.xs[i], 2);
    EXPECT_LE(f2.xs[i], 12);
    EXPECT_GE(f2.ys[i], 2);
    EXPECT_LE(f2.ys[i], 12);
  }
  EXPECT_EQ(f2.margin, 2);
  EXPECT_NEAR(probe::chance_level(2), 1.0 / 11.0, 1e-12);

  auto f1 = probe::filter_boundary(d, 1);
  for (int64_t i = 0; i < f1.size(); ++i) {
    EXPECT_GE(f1.xs[i], 1);
    EXPECT_LE(f1.xs[i], 13);
  }
  EXPECT_NEAR(probe::chance_level(1), 1.0 / 13.0, 1e-12);
}

TEST(Split, ExactCountsAndDisjointness) {
  auto d = uniform_positions(230000, 2, 3);
  // Tag each record with a unique value so membership is checkable.
  for (int64_t i = 0; i < d.size(); ++i) d.activations[i * 2] = static_cast<float>(i);
  auto [train, test] = probe::split_dataset(d, 200000, 30000, 11);
  EXPECT_EQ(train.size(), 200000);
  EXPECT_EQ(test.size(), 30000);
  std::set<float> seen;
  for (int64_t i = 0; i < train.size(); ++i) seen.insert(train.activations[i * 2]);
  EXPECT_EQ(seen.size(), 200000u);
  for (int64_t i = 0; i < test.size(); ++i)
    ASSERT_EQ(seen.count(test.activations[i * 2]), 0u) << "train/test overlap";
}

TEST(Split, ProportionalShrinkKeepsTheRatio) {
  auto d = uniform_positions(100000, 2, 4);
  auto [train, test] = probe::split_dataset(d, 200000, 30000, 5);
  EXPECT_EQ(train.size(), 86956);
  EXPECT_EQ(test.size(), 13043);
}

TEST(Split, SameSeedSameMembership) {
  auto d = uniform_positions(5000, 3, 6);
  auto [a_train, a_test] = probe::split_dataset(d, 4000, 1000, 77);
  auto [b_train, b_test] = probe::split_dataset(d, 4000, 1000, 77);
  EXPECT_EQ(a_train.activations, b_train.activations);
  EXPECT_EQ(a_test.xs, b_test.xs);
}

TEST(Split, InsufficientRecordsError) {
  auto d = uniform_positions(1, 2, 7);
  try {
    probe::split_dataset(d, 200000, 30000, 1);
    FAIL() << "expected error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("200000"), std::string::npos) << "error should carry the counts";
  }
}

TEST(TrainProbe, OneHotDatasetIsLearnable) {
  auto d = one_hot_dataset(8000, 42);
  auto [train, test] = probe::split_dataset(d, 7000, 1000, 9);
  ProbeConfig cfg = ProbeConfig::linear(0.01f);
  cfg.epochs = 20;
  cfg.seed = 1;
  auto p = probe::train_probe(train, cfg);
  auto rep = probe::evaluate_probe(p, test);
  EXPECT_GE(rep.acc_mean, 0.99);
}

TEST(TrainProbe, NoiseActivationsStayAtChance) {
  auto d = noise_dataset(12000, 32, 43, 1);
  auto [train, test] = probe::split_dataset(d, 10000, 2000, 10);
  ProbeConfig cfg = ProbeConfig::linear();
  cfg.epochs = 10;
  cfg.seed = 2;
  auto p = probe::train_probe(train, cfg);
  auto rep = probe::evaluate_probe(p, test);
  EXPECT_NEAR(rep.acc_mean, probe::chance_level(1), 0.03);
}

TEST(TrainProbe, LabelShuffleControlStaysAtChance) {
  auto d = one_hot_dataset(12000, 44, 1);
  // Shuffle the labels against the activations.
  nn::Rng rng(3);
  for (int64_t i = d.size() - 1; i > 0; --i) {
    const int64_t j = static_cast<int64_t>(rng.below(i + 1));
    std::swap(d.xs[i], d.xs[j]);
    std::swap(d.ys[i], d.ys[j]);
  }
  auto [train, test] = probe::split_dataset(d, 10000, 2000, 12);
  ProbeConfig cfg = ProbeConfig::linear();
  cfg.epochs = 10;
  cfg.seed = 4;
  auto p = probe::train_probe(train, cfg);
  auto rep = probe::evaluate_probe(p, test);
  EXPECT_NEAR(rep.acc_mean, probe::chance_level(1), 0.03);
}

TEST(TrainProbe, LossDecreasesOverEpochs) {
  // Optimizer sanity: final-epoch loss at most the first-epoch loss.
  auto d = one_hot_dataset(4000, 45);
  ProbeConfig one = ProbeConfig::mlp3();
  one.epochs = 1;
  one.seed = 5;
  ProbeConfig many = one;
  many.epochs = 50;
  auto p1 = probe::train_probe(d, one);
  auto p50 = probe::train_probe(d, many);
  const auto r1 = probe::evaluate_probe(p1, d);
  const auto r50 = probe::evaluate_probe(p50, d);
  EXPECT_GE(r50.acc_mean, r1.acc_mean);
}

TEST(Evaluate, OracleProbeIsPerfectAndShiftInvariant) {
  auto d = one_hot_dataset(3000, 46);
  ProbeConfig cfg = ProbeConfig::linear(0.01f);
  cfg.epochs = 25;
  cfg.seed = 6;
  auto p = probe::train_probe(d, cfg);
  auto rep = probe::evaluate_probe(p, d);
  EXPECT_GE(rep.acc_mean, 0.999);

  // Adding a constant to every head logit does not change accuracies.
  for (size_t i = 0; i < p.params().names.size(); ++i)
    if (p.params().names[i] == "l1.b")
      for (auto& v : p.params().vars[i].mutable_value().data) v += 7.3f;
  auto rep2 = probe::evaluate_probe(p, d);
  EXPECT_DOUBLE_EQ(rep.acc_x, rep2.acc_x);
  EXPECT_DOUBLE_EQ(rep.acc_y, rep2.acc_y);
}

TEST(Evaluate, ConstantLogitsHitTheTieBreakClassFrequency) {
  auto d = uniform_positions(9000, 4, 47);
  // Fresh probe with zeroed parameters: every logit row is constant, the
  // argmax tie-break picks class 0 for both heads.
  probe::Probe p(ProbeArch::kLinear, 4, 256, 0);
  for (auto& v : p.params().vars) std::fill(v.mutable_value().data.begin(), v.mutable_value().data.end(), 0.0f);
  auto rep = probe::evaluate_probe(p, d);
  double freq_x = 0.0, freq_y = 0.0;
  for (int64_t i = 0; i < d.size(); ++i) {
    freq_x += d.xs[i] == 0;
    freq_y += d.ys[i] == 0;
  }
  EXPECT_DOUBLE_EQ(rep.acc_x, freq_x / d.size());
  EXPECT_DOUBLE_EQ(rep.acc_y, freq_y / d.size());
}

TEST(Evaluate, DeterministicReports) {
  auto d = noise_dataset(6000, 16, 48, 0);
  auto [train, test] = probe::split_dataset(d, 5000, 1000, 13);
  ProbeConfig cfg = ProbeConfig::mlp3();
  cfg.epochs = 3;
  cfg.seed = 7;
  auto ra = probe::evaluate_probe(probe::train_probe(train, cfg), test);
  auto rb = probe::evaluate_probe(probe::train_probe(train, cfg), test);
  EXPECT_EQ(ra.acc_x, rb.acc_x);
  EXPECT_EQ(ra.acc_y, rb.acc_y);
  EXPECT_EQ(ra.acc_mean, rb.acc_mean);
}

TEST(Collect, DeterministicAndExactCounts) {
  auto net = agent::build_agent(agent::AgentConfig::experiment3(), 51);
  env::RoomConfig room = env::RoomConfig::for_kind(env::RoomKind::kRandom);
  room.crop_size = 3;
  room.action_set = env::ActionSet::kCardinal4;
  auto a = probe::collect_activations(*net, room, {"lstm_hidden", "lstm_cell"}, 100, 71, 4);
  auto b = probe::collect_activations(*net, room, {"lstm_hidden", "lstm_cell"}, 100, 71, 4);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[0].size(), 100);
  EXPECT_EQ(a[1].size(), 100);
  EXPECT_EQ(a[0].activation_dim, 512);
  EXPECT_EQ(a[0].activations, b[0].activations);
  EXPECT_EQ(a[1].xs, b[1].xs);
  EXPECT_EQ(a[1].ys, b[1].ys);
}

TEST(Collect, UnknownTapListsValidNames) {
  auto net = agent::build_agent(agent::AgentConfig::experiment3(), 51);
  env::RoomConfig room = env::RoomConfig::for_kind(env::RoomKind::kRandom);
  room.crop_size = 3;
  room.action_set = env::ActionSet::kCardinal4;
  try {
    probe::collect_activations(*net, room, {"blorp"}, 10, 1, 2);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("lstm_hidden"), std::string::npos);
  }
}

TEST(Collect, MismatchedRoomConfigErrors) {
  auto net = agent::build_agent(agent::AgentConfig::experiment3(), 51);
  env::RoomConfig room = env::RoomConfig::for_kind(env::RoomKind::kRandom);
  room.crop_size = 5;
  room.action_set = env::ActionSet::kCardinal4;
  EXPECT_THROW(probe::collect_activations(*net, room, {"lstm_cell"}, 10, 1, 2), std::invalid_argument);
}

// Pipeline sanity: when position is trivially decodable from the raw
// observation (9x9 crop with visible walls on a lit map), a probe on the
// one-hot encoded crop beats chance by a wide margin.
TEST(Collect, RawObservationProbeBeatsChance) {
  env::RoomConfig room = env::RoomConfig::for_kind(env::RoomKind::kRandom);
  room.crop_size = 9;
  room.action_set = env::ActionSet::kCardinal4;
  env::RoomEnv e(room);
  ActivationDataset d;
  d.tap_name = "raw_crop";
  d.activation_dim = 9 * 9 * env::kGlyphVocab;
  nn::Rng rng(5);
  std::vector<float> act(d.activation_dim);
  uint64_t episode = 0;
  e.reset(nn::mix_seed(1, 0, episode++));
  for (int i = 0; i < 20000; ++i) {
    if (e.done()) e.reset(nn::mix_seed(1, 0, episode++));
    auto obs = e.render_observation();
    std::fill(act.begin(), act.end(), 0.0f);
    for (int c = 0; c < 81; ++c) act[c * env::kGlyphVocab + obs.crop[c]] = 1.0f;
    auto [x, y] = e.room_position();
    d.append(act.data(), static_cast<uint8_t>(x), static_cast<uint8_t>(y));
    e.step(rng.index(4));
  }
  auto [train, test] = probe::split_dataset(d, 17000, 3000, 3);
  ProbeConfig cfg = ProbeConfig::linear();
  cfg.epochs = 10;
  cfg.seed = 8;
  auto p = probe::train_probe(train, cfg);
  auto rep = probe::evaluate_probe(p, test);
  EXPECT_GT(rep.acc_mean, 3.0 * probe::chance_level(0));
}
