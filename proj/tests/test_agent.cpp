#include <gtest/gtest.h>

#include <cmath>

#include "roomprobe/agent/agent.hpp"

using namespace roomprobe;
using agent::AgentConfig;
using agent::AgentNet;
using nn::TensorF;

TEST(BuildAgent, DeterministicFromSeed) {
  const AgentConfig cfg = AgentConfig::experiment3();
  auto a = agent::build_agent(cfg, 77);
  auto b = agent::build_agent(cfg, 77);
  ASSERT_EQ(a->params().vars.size(), b->params().vars.size());
  for (size_t i = 0; i < a->params().vars.size(); ++i)
    EXPECT_EQ(a->params().vars[i].value().data, b->params().vars[i].value().data) << a->params().names[i];
  auto c = agent::build_agent(cfg, 78);
  bool any_diff = false;
  for (size_t i = 0; i < a->params().vars.size(); ++i)
    any_diff |= a->params().vars[i].value().data != c->params().vars[i].value().data;
  EXPECT_TRUE(any_diff);
}

TEST(BuildAgent, ParamCountIsPureFunctionOfConfig) {
  auto a = agent::build_agent(AgentConfig::experiment3(), 1);
  auto b = agent::build_agent(AgentConfig::experiment3(), 999);
  EXPECT_EQ(a->param_count(), b->param_count());
  auto c = agent::build_agent(AgentConfig::experiment1(), 1);
  EXPECT_NE(a->param_count(), c->param_count());
}

TEST(Taps, Experiment1ConvDimsMatchTheTable) {
  const AgentConfig cfg = AgentConfig::experiment1();
  EXPECT_EQ(agent::tap_dim(cfg, "conv1"), 26544);
  EXPECT_EQ(agent::tap_dim(cfg, "conv2"), 26544);
  EXPECT_EQ(agent::tap_dim(cfg, "conv3"), 26544);
  EXPECT_EQ(agent::tap_dim(cfg, "conv4"), 26544);
  EXPECT_EQ(agent::tap_dim(cfg, "conv5"), 13272);
  EXPECT_EQ(agent::tap_dim(cfg, "linear1"), 256);
  EXPECT_EQ(agent::tap_dim(cfg, "linear2"), 256);
  EXPECT_THROW(agent::tap_dim(cfg, "lstm_hidden"), std::invalid_argument);
}

TEST(Taps, Experiment2HasExactlyTheNineTaps) {
  const AgentConfig cfg = AgentConfig::experiment2();
  const auto names = agent::tap_names(cfg);
  const std::vector<std::string> expect = {"conv1", "conv2",   "conv3",   "conv4",      "conv5",
                                           "linear1", "linear2", "lstm_hidden", "lstm_cell"};
  EXPECT_EQ(names, expect);
  EXPECT_EQ(agent::tap_dim(cfg, "lstm_hidden"), 512);
  EXPECT_EQ(agent::tap_dim(cfg, "lstm_cell"), 512);
}

TEST(Taps, UnknownTapErrorListsValidNames) {
  try {
    agent::tap_dim(AgentConfig::experiment3(), "conv9");
    FAIL();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("conv9"), std::string::npos);
    EXPECT_NE(msg.find("lstm_cell"), std::string::npos);
  }
}

TEST(Forward, Experiment3TakesOnlyTheCrop) {
  const AgentConfig acfg = AgentConfig::experiment3();
  auto net = agent::build_agent(acfg, 3);
  env::RoomConfig rcfg = env::RoomConfig::for_kind(env::RoomKind::kRandom);
  rcfg.crop_size = 3;
  rcfg.action_set = env::ActionSet::kCardinal4;
  env::RoomEnv e(rcfg);
  auto obs = e.reset(5);
  EXPECT_FALSE(obs.has_full_map);
  auto state = agent::LstmStateBatch::zeros(1, acfg.lstm_size);
  auto out = net->forward_batch({obs}, &state);
  EXPECT_EQ(out.logits.shape, (std::vector<int>{1, 4}));
  EXPECT_EQ(out.values.shape, (std::vector<int>{1}));
  EXPECT_EQ(out.next_state.h.shape, (std::vector<int>{1, 512}));
}

TEST(Forward, PureFunctionOfInputsAndState) {
  const AgentConfig acfg = AgentConfig::experiment3();
  auto net = agent::build_agent(acfg, 11);
  env::RoomConfig rcfg = env::RoomConfig::for_kind(env::RoomKind::kRandom);
  rcfg.crop_size = 3;
  rcfg.action_set = env::ActionSet::kCardinal4;
  env::RoomEnv e(rcfg);
  auto obs = e.reset(9);
  auto state = agent::LstmStateBatch::zeros(1, acfg.lstm_size);
  auto a = net->forward_batch({obs}, &state);
  auto b = net->forward_batch({obs}, &state);
  EXPECT_EQ(a.logits.data, b.logits.data);
  EXPECT_EQ(a.values.data, b.values.data);
  EXPECT_EQ(a.next_state.h.data, b.next_state.h.data);
  EXPECT_EQ(a.next_state.c.data, b.next_state.c.data);
}

TEST(Forward, ZeroActionHeadGivesUniformPolicy) {
  const AgentConfig acfg = AgentConfig::experiment3();
  auto net = agent::build_agent(acfg, 4);
  // Zero the action head parameters by name.
  auto& ps = net->params();
  for (size_t i = 0; i < ps.names.size(); ++i)
    if (ps.names[i].rfind("action_head", 0) == 0)
      std::fill(ps.vars[i].mutable_value().data.begin(), ps.vars[i].mutable_value().data.end(), 0.0f);
  env::RoomConfig rcfg = env::RoomConfig::for_kind(env::RoomKind::kRandom);
  rcfg.crop_size = 3;
  rcfg.action_set = env::ActionSet::kCardinal4;
  env::RoomEnv e(rcfg);
  auto obs = e.reset(1);
  auto state = agent::LstmStateBatch::zeros(1, acfg.lstm_size);
  auto out = net->forward_batch({obs}, &state);
  for (int i = 1; i < 4; ++i) EXPECT_FLOAT_EQ(out.logits[i], out.logits[0]);
}

TEST(Forward, Experiment1TapShapesComeFromTheMapStream) {
  const AgentConfig acfg = AgentConfig::experiment1();
  auto net = agent::build_agent(acfg, 5);
  env::RoomConfig rcfg = env::RoomConfig::for_kind(env::RoomKind::kUltimate);
  rcfg.crop_size = 9;
  rcfg.full_map = true;
  env::RoomEnv e(rcfg);
  auto obs = e.reset(3);
  auto out = net->forward_batch({obs}, nullptr, {"conv1", "conv5", "linear2"});
  ASSERT_NE(out.taps.find("conv1"), nullptr);
  EXPECT_EQ(out.taps.find("conv1")->cols(), 26544);
  EXPECT_EQ(out.taps.find("conv5")->cols(), 13272);
  EXPECT_EQ(out.taps.find("linear2")->cols(), 256);
  EXPECT_EQ(out.taps.find("lstm_hidden"), nullptr);
}

TEST(Forward, StatelessWithoutLstm) {
  const AgentConfig acfg = AgentConfig::experiment1();
  auto net = agent::build_agent(acfg, 6);
  env::RoomConfig rcfg = env::RoomConfig::for_kind(env::RoomKind::kTrap);
  rcfg.crop_size = 9;
  rcfg.full_map = true;
  env::RoomEnv e1(rcfg), e2(rcfg);
  auto o1 = e1.reset(10);
  auto o2 = e2.reset(20);
  auto first = net->forward_batch({o1}, nullptr);
  net->forward_batch({o2}, nullptr);  // unrelated call in between
  auto again = net->forward_batch({o1}, nullptr);
  EXPECT_EQ(first.logits.data, again.logits.data);
  EXPECT_EQ(first.values.data, again.values.data);
}

TEST(SelectAction, GreedyAndTieBreak) {
  nn::Rng rng(1);
  TensorF logits({4}, {0.1f, 2.0f, -1.0f, 0.0f});
  EXPECT_EQ(agent::select_action(logits, rng, agent::SelectMode::kGreedy).first, 1);
  TensorF tie({4}, {1.0f, 1.0f, 0.0f, 0.0f});
  EXPECT_EQ(agent::select_action(tie, rng, agent::SelectMode::kGreedy).first, 0);
}

TEST(SelectAction, SampleFrequencyMatchesSoftmax) {
  nn::Rng rng(99);
  TensorF logits({4}, {std::log(3.0f), 0.0f, 0.0f, 0.0f});
  int zero = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i)
    if (agent::select_action(logits, rng, agent::SelectMode::kSample).first == 0) ++zero;
  EXPECT_NEAR(zero / static_cast<double>(n), 0.5, 0.01);
}

TEST(SelectAction, ArgmaxInvariantToLogitShift) {
  nn::Rng rng(1);
  TensorF logits({5}, {0.3f, -0.2f, 1.9f, 1.9f, 0.0f});
  TensorF shifted = logits;
  for (auto& v : shifted.data) v += 123.5f;
  EXPECT_EQ(agent::select_action(logits, rng, agent::SelectMode::kGreedy).first,
            agent::select_action(shifted, rng, agent::SelectMode::kGreedy).first);
}
