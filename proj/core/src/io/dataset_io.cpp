#include "roomprobe/io/dataset_io.hpp"

#include <cstring>

#include "roomprobe/io/serialize.hpp"

namespace roomprobe::io {

namespace {
constexpr char kMagic[4] = {'A', 'P', 'D', 'S'};
}

size_t dataset_file_size(size_t tap_name_len, int64_t record_count, int activation_dim) {
  return 4 + 2 + 2 + tap_name_len + 4 + 4 + 1 +
         static_cast<size_t>(record_count) * (static_cast<size_t>(activation_dim) * 4 + 2);
}

std::vector<uint8_t> serialize_dataset(const probe::ActivationDataset& d) {
  ByteWriter w;
  w.raw(kMagic, 4);
  w.u16(kDatasetVersion);
  w.str16(d.tap_name);
  w.u32(static_cast<uint32_t>(d.size()));
  w.u32(static_cast<uint32_t>(d.activation_dim));
  w.u8(d.margin);
  for (int64_t i = 0; i < d.size(); ++i) {
    w.f32_array(d.record(i), static_cast<size_t>(d.activation_dim));
    w.u8(d.xs[i]);
    w.u8(d.ys[i]);
  }
  return w.take();
}

probe::ActivationDataset deserialize_dataset(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes);
  char magic[4];
  for (char& m : magic) m = static_cast<char>(r.u8());
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error(std::string("dataset: bad magic, expected APDS, found '") + std::string(magic, 4) + "'");
  const uint16_t version = r.u16();
  if (version != kDatasetVersion)
    throw std::runtime_error("dataset: unsupported version " + std::to_string(version) + ", expected " +
                             std::to_string(kDatasetVersion));
  probe::ActivationDataset d;
  d.tap_name = r.str16();
  const uint32_t count = r.u32();
  d.activation_dim = static_cast<int>(r.u32());
  d.margin = r.u8();
  d.activations.resize(static_cast<size_t>(count) * d.activation_dim);
  d.xs.resize(count);
  d.ys.resize(count);
  for (uint32_t i = 0; i < count; ++i) {
    r.f32_array(d.activations.data() + static_cast<int64_t>(i) * d.activation_dim,
                static_cast<size_t>(d.activation_dim));
    d.xs[i] = r.u8();
    d.ys[i] = r.u8();
  }
  r.expect_end("dataset");
  return d;
}

}  // namespace roomprobe::io
