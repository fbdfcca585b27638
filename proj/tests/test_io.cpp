#include <gtest/gtest.h>

#include <filesystem>

#include "roomprobe/io/checkpoint.hpp"
#include "roomprobe/io/config_file.hpp"
#include "roomprobe/io/dataset_io.hpp"
#include "roomprobe/io/probe_io.hpp"
#include "roomprobe/io/serialize.hpp"

using namespace roomprobe;

namespace {

probe::ActivationDataset small_dataset(int64_t n, int dim, uint64_t seed) {
  probe::ActivationDataset d;
  d.tap_name = "lstm_cell";
  d.activation_dim = dim;
  d.margin = 1;
  nn::Rng rng(seed);
  std::vector<float> act(dim);
  for (int64_t i = 0; i < n; ++i) {
    for (auto& v : act) v = static_cast<float>(rng.normal());
    d.append(act.data(), static_cast<uint8_t>(rng.index(15)), static_cast<uint8_t>(rng.index(15)));
  }
  return d;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitIdentical) {
  auto net = agent::build_agent(agent::AgentConfig::experiment3(), 123);
  const ppo::CheckpointMeta meta{123456, 0.8125};
  const auto bytes = io::serialize_checkpoint(*net, meta);
  auto loaded = io::deserialize_checkpoint(bytes);
  EXPECT_EQ(loaded.meta.env_steps, meta.env_steps);
  EXPECT_DOUBLE_EQ(loaded.meta.mean_return, meta.mean_return);
  EXPECT_TRUE(loaded.net->config() == net->config());
  const auto bytes2 = io::serialize_checkpoint(*loaded.net, loaded.meta);
  EXPECT_EQ(bytes, bytes2);
}

TEST(Checkpoint, CorruptMagicAndVersionErrors) {
  auto net = agent::build_agent(agent::AgentConfig::experiment3(), 1);
  auto bytes = io::serialize_checkpoint(*net, {0, 0.0});
  auto bad = bytes;
  bad[0] = 'X';
  try {
    io::deserialize_checkpoint(bad);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("RPCK"), std::string::npos);
  }
  bad = bytes;
  bad[4] = 9;  // version low byte
  try {
    io::deserialize_checkpoint(bad);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(Checkpoint, TruncationErrors) {
  auto net = agent::build_agent(agent::AgentConfig::experiment3(), 2);
  auto bytes = io::serialize_checkpoint(*net, {0, 0.0});
  bytes.resize(bytes.size() / 2);
  EXPECT_THROW(io::deserialize_checkpoint(bytes), std::runtime_error);
}

TEST(Dataset, RoundTripAndSizeArithmetic) {
  auto d = small_dataset(500, 64, 7);
  const auto bytes = io::serialize_dataset(d);
  EXPECT_EQ(bytes.size(), io::dataset_file_size(d.tap_name.size(), d.size(), d.activation_dim));
  auto back = io::deserialize_dataset(bytes);
  EXPECT_EQ(back.tap_name, d.tap_name);
  EXPECT_EQ(back.activation_dim, d.activation_dim);
  EXPECT_EQ(back.margin, d.margin);
  EXPECT_EQ(back.activations, d.activations);
  EXPECT_EQ(back.xs, d.xs);
  EXPECT_EQ(back.ys, d.ys);
  const auto bytes2 = io::serialize_dataset(back);
  EXPECT_EQ(bytes, bytes2);
}

TEST(Dataset, PaperScaleFileSizeFormula) {
  // 230k records of 512 floats: header + 230000 * (512*4 + 2) bytes.
  const size_t expected_records = 230000ull * (512ull * 4 + 2);
  EXPECT_EQ(io::dataset_file_size(std::string("lstm_cell").size(), 230000, 512),
            4 + 2 + 2 + 9 + 4 + 4 + 1 + expected_records);
}

TEST(Dataset, TruncatedFileErrorsWithoutPartialData) {
  auto d = small_dataset(100, 16, 9);
  auto bytes = io::serialize_dataset(d);
  bytes.resize(bytes.size() - 7);
  EXPECT_THROW(io::deserialize_dataset(bytes), std::runtime_error);
  auto bad = io::serialize_dataset(d);
  bad[0] = 'Z';
  try {
    io::deserialize_dataset(bad);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("APDS"), std::string::npos);
  }
  // Trailing garbage is rejected too.
  auto extra = io::serialize_dataset(d);
  extra.push_back(0);
  EXPECT_THROW(io::deserialize_dataset(extra), std::runtime_error);
}

TEST(ProbeArtifact, RoundTripPreservesEvaluation) {
  auto d = small_dataset(2000, 24, 11);
  probe::ProbeConfig cfg = probe::ProbeConfig::mlp3();
  cfg.epochs = 2;
  cfg.seed = 3;
  auto p = probe::train_probe(d, cfg);
  io::ProbeArtifact art;
  art.config = cfg;
  art.tap_name = d.tap_name;
  art.margin = d.margin;
  art.split_seed = 42;
  art.n_train = 1500;
  art.n_test = 500;
  art.dataset_id = "deadbeef";
  const auto bytes = io::serialize_probe(p, art);
  auto loaded = io::deserialize_probe(bytes);
  EXPECT_EQ(loaded.artifact.tap_name, art.tap_name);
  EXPECT_EQ(loaded.artifact.split_seed, art.split_seed);
  EXPECT_EQ(loaded.artifact.n_train, art.n_train);
  EXPECT_EQ(loaded.artifact.dataset_id, art.dataset_id);
  auto r1 = probe::evaluate_probe(p, d);
  auto r2 = probe::evaluate_probe(*loaded.probe, d);
  EXPECT_EQ(r1.acc_x, r2.acc_x);
  EXPECT_EQ(r1.acc_y, r2.acc_y);
  const auto bytes2 = io::serialize_probe(*loaded.probe, loaded.artifact);
  EXPECT_EQ(bytes, bytes2);
}

TEST(Files, WriteReadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "roomprobe_io_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "blob.bin";
  std::vector<uint8_t> payload = {1, 2, 3, 255, 0, 42};
  io::write_file(path, payload);
  EXPECT_EQ(io::read_file(path), payload);
  EXPECT_EQ(io::content_id(payload), io::content_id(payload));
  std::filesystem::remove_all(dir);
  EXPECT_THROW(io::read_file(dir / "missing.bin"), std::runtime_error);
}

TEST(Config, ParsesDottedKeysAndComments) {
  const std::string text =
      "# comment\n"
      "room.kind = trap   # trailing comment\n"
      "room.crop_size = 9\n"
      "room.action_set = cardinal8\n"
      "agent.lstm = false\n"
      "agent.use_full_map = true\n"
      "probe.taps = conv1, conv2\n"
      "probe.archs = linear\n"
      "probe.lr.linear = 0.00005\n"
      "seeds.train = 5\n"
      "output_dir = /tmp/run1\n";
  auto cfg = io::ExperimentConfig::from_kv(io::KeyValues::parse(text));
  EXPECT_EQ(cfg.room.kind, env::RoomKind::kTrap);
  EXPECT_EQ(cfg.room.n_traps, 15);
  EXPECT_EQ(cfg.room.crop_size, 9);
  EXPECT_TRUE(cfg.agent.use_full_map);
  EXPECT_FALSE(cfg.agent.lstm);
  EXPECT_EQ(cfg.agent.n_actions, 8);
  EXPECT_EQ(cfg.margin, 0);
  ASSERT_EQ(cfg.probes.size(), 2u);
  EXPECT_EQ(cfg.probes[0].tap, "conv1");
  EXPECT_FLOAT_EQ(cfg.probes[0].config.lr, 0.00005f);
  EXPECT_EQ(cfg.seed_train, 5u);
  EXPECT_EQ(cfg.output_dir, "/tmp/run1");
}

TEST(Config, ValidationErrorsCarryFieldPaths) {
  try {
    io::ExperimentConfig::from_kv(io::KeyValues::parse("room.kind = dungeon\n"));
    FAIL();
  } catch (const io::ConfigError& e) {
    EXPECT_EQ(e.field(), "room.kind");
  }
  try {
    io::ExperimentConfig::from_kv(io::KeyValues::parse("room.crop_size = 7\n"));
    FAIL();
  } catch (const io::ConfigError& e) {
    EXPECT_EQ(e.field(), "room.crop_size");
  }
  try {
    io::ExperimentConfig::from_kv(io::KeyValues::parse("room.crop_size = 5\nprobe.margin = 0\n"));
    FAIL();
  } catch (const io::ConfigError& e) {
    EXPECT_EQ(e.field(), "probe.margin");
  }
  try {
    io::ExperimentConfig::from_kv(io::KeyValues::parse("probe.taps = lstm_hidden\nagent.lstm = false\n"));
    FAIL();
  } catch (const io::ConfigError& e) {
    EXPECT_EQ(e.field(), "probe.taps");
  }
}

TEST(Config, MarginImpliedByCrop) {
  EXPECT_EQ(io::margin_for_crop(9), 0);
  EXPECT_EQ(io::margin_for_crop(5), 2);
  EXPECT_EQ(io::margin_for_crop(3), 1);
  auto cfg = io::ExperimentConfig::from_kv(io::KeyValues::parse("room.crop_size = 5\n"));
  EXPECT_EQ(cfg.margin, 2);
}

TEST(Config, PresetFilesParse) {
  for (const char* name :
       {"configs/experiment1_ultimate.cfg", "configs/experiment2_random.cfg", "configs/experiment3_random.cfg"}) {
    const auto path = std::filesystem::path(ROOMPROBE_SOURCE_DIR) / name;
    ASSERT_TRUE(std::filesystem::exists(path)) << path;
    auto cfg = io::ExperimentConfig::from_file(path.string());
    EXPECT_FALSE(cfg.probes.empty());
  }
}
