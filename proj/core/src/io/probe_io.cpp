#include "roomprobe/io/probe_io.hpp"

#include <cstring>

#include "roomprobe/io/serialize.hpp"

namespace roomprobe::io {

namespace {
constexpr char kMagic[4] = {'R', 'P', 'P', 'B'};
}

std::vector<uint8_t> serialize_probe(const probe::Probe& p, const ProbeArtifact& art) {
  ByteWriter w;
  w.raw(kMagic, 4);
  w.u16(kProbeVersion);
  w.str16(art.tap_name);
  w.u8(art.config.arch == probe::ProbeArch::kLinear ? 0 : 1);
  w.u32(static_cast<uint32_t>(p.in_dim()));
  w.u32(static_cast<uint32_t>(p.hidden_dim()));
  w.f32(art.config.lr);
  w.u32(static_cast<uint32_t>(art.config.epochs));
  w.u32(static_cast<uint32_t>(art.config.batch_size));
  w.u64(art.config.seed);
  w.u8(art.margin);
  w.u64(art.split_seed);
  w.u64(static_cast<uint64_t>(art.n_train));
  w.u64(static_cast<uint64_t>(art.n_test));
  w.str16(art.dataset_id);
  const auto& ps = p.params();
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

LoadedProbe deserialize_probe(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes);
  char magic[4];
  for (char& m : magic) m = static_cast<char>(r.u8());
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error(std::string("probe artifact: bad magic, expected RPPB, found '") +
                             std::string(magic, 4) + "'");
  const uint16_t version = r.u16();
  if (version != kProbeVersion)
    throw std::runtime_error("probe artifact: unsupported version " + std::to_string(version) + ", expected " +
                             std::to_string(kProbeVersion));
  LoadedProbe out;
  out.artifact.tap_name = r.str16();
  out.artifact.config.arch = r.u8() == 0 ? probe::ProbeArch::kLinear : probe::ProbeArch::kMlp3;
  const int in_dim = static_cast<int>(r.u32());
  const int hidden = static_cast<int>(r.u32());
  out.artifact.config.hidden_dim = hidden;
  out.artifact.config.lr = r.f32();
  out.artifact.config.epochs = static_cast<int>(r.u32());
  out.artifact.config.batch_size = static_cast<int>(r.u32());
  out.artifact.config.seed = r.u64();
  out.artifact.margin = r.u8();
  out.artifact.split_seed = r.u64();
  out.artifact.n_train = static_cast<int64_t>(r.u64());
  out.artifact.n_test = static_cast<int64_t>(r.u64());
  out.artifact.dataset_id = r.str16();

  out.probe = std::make_unique<probe::Probe>(out.artifact.config.arch, in_dim, hidden, 0);
  auto& ps = out.probe->params();
  const uint32_t n = r.u32();
  if (n != ps.vars.size())
    throw std::runtime_error("probe artifact: parameter count " + std::to_string(n) + " does not match arch");
  for (uint32_t i = 0; i < n; ++i) {
    const std::string name = r.str16();
    if (name != ps.names[i])
      throw std::runtime_error("probe artifact: parameter '" + name + "' where '" + ps.names[i] + "' was expected");
    const int nd = r.u8();
    std::vector<int> shape(nd);
    for (int k = 0; k < nd; ++k) shape[k] = static_cast<int>(r.u32());
    auto& t = ps.vars[i].mutable_value();
    if (shape != t.shape)
      throw std::runtime_error("probe artifact: parameter '" + name + "' has unexpected shape " + nn::shape_str(shape));
    r.f32_array(t.ptr(), static_cast<size_t>(t.numel()));
  }
  r.expect_end("probe artifact");
  return out;
}

}  // namespace roomprobe::io
