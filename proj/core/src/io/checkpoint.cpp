#include "roomprobe/io/checkpoint.hpp"

#include "roomprobe/io/serialize.hpp"

namespace roomprobe::io {

namespace {
constexpr char kMagic[4] = {'R', 'P', 'C', 'K'};

void write_agent_config(ByteWriter& w, const agent::AgentConfig& c) {
  w.u32(static_cast<uint32_t>(c.embed_dim));
  for (int ch : c.conv_channels) w.u32(static_cast<uint32_t>(ch));
  w.u32(static_cast<uint32_t>(c.hidden_dim));
  w.u8(c.lstm ? 1 : 0);
  w.u32(static_cast<uint32_t>(c.lstm_size));
  w.u8(c.use_full_map ? 1 : 0);
  w.u32(static_cast<uint32_t>(c.crop_size));
  w.u32(static_cast<uint32_t>(c.n_actions));
  w.u32(static_cast<uint32_t>(c.glyph_vocab));
  w.u8(c.use_relu ? 1 : 0);
}

agent::AgentConfig read_agent_config(ByteReader& r) {
  agent::AgentConfig c;
  c.embed_dim = static_cast<int>(r.u32());
  for (int i = 0; i < 5; ++i) c.conv_channels[i] = static_cast<int>(r.u32());
  c.hidden_dim = static_cast<int>(r.u32());
  c.lstm = r.u8() != 0;
  c.lstm_size = static_cast<int>(r.u32());
  c.use_full_map = r.u8() != 0;
  c.crop_size = static_cast<int>(r.u32());
  c.n_actions = static_cast<int>(r.u32());
  c.glyph_vocab = static_cast<int>(r.u32());
  c.use_relu = r.u8() != 0;
  return c;
}
}  // namespace

std::vector<uint8_t> serialize_checkpoint(const agent::AgentNet& net, const ppo::CheckpointMeta& meta) {
  ByteWriter w;
  w.raw(kMagic, 4);
  w.u16(kCheckpointVersion);
  write_agent_config(w, net.config());
  w.u64(static_cast<uint64_t>(meta.env_steps));
  w.f64(meta.mean_return);
  const auto& ps = net.params();
  w.u32(static_cast<uint32_t>(ps.vars.size()));
  for (size_t i = 0; i < ps.vars.size(); ++i) {
    w.str16(ps.names[i]);
    const auto& t = ps.vars[i].value();
    w.u8(static_cast<uint8_t>(t.ndim()));
    for (int d : t.shape) w.u32(static_cast<uint32_t>(d));
    w.f32_array(t.ptr(), static_cast<size_t>(t.numel()));
  }
  return w.take();
}

LoadedCheckpoint deserialize_checkpoint(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes);
  char magic[4];
  for (char& m : magic) m = static_cast<char>(r.u8());
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error(std::string("checkpoint: bad magic, expected RPCK, found '") +
                             std::string(magic, 4) + "'");
  const uint16_t version = r.u16();
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) + ", expected " +
                             std::to_string(kCheckpointVersion));
  const agent::AgentConfig cfg = read_agent_config(r);
  ppo::CheckpointMeta meta;
  meta.env_steps = static_cast<int64_t>(r.u64());
  meta.mean_return = r.f64();

  LoadedCheckpoint out;
  out.net = agent::build_agent(cfg, 0);
  out.meta = meta;
  auto& ps = out.net->params();
  const uint32_t n = r.u32();
  if (n != ps.vars.size())
    throw std::runtime_error("checkpoint: parameter count " + std::to_string(n) + " does not match config (" +
                             std::to_string(ps.vars.size()) + ")");
  for (uint32_t i = 0; i < n; ++i) {
    const std::string name = r.str16();
    if (name != ps.names[i])
      throw std::runtime_error("checkpoint: parameter '" + name + "' where '" + ps.names[i] + "' was expected");
    const int nd = r.u8();
    std::vector<int> shape(nd);
    for (int k = 0; k < nd; ++k) shape[k] = static_cast<int>(r.u32());
    auto& t = ps.vars[i].mutable_value();
    if (shape != t.shape)
      throw std::runtime_error("checkpoint: parameter '" + name + "' shape " + nn::shape_str(shape) +
                               " does not match expected " + nn::shape_str(t.shape));
    r.f32_array(t.ptr(), static_cast<size_t>(t.numel()));
  }
  r.expect_end("checkpoint");
  out.checkpoint_id = content_id(bytes);
  return out;
}

}  // namespace roomprobe::io
