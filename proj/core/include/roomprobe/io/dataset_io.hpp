#pragma once

#include <vector>

#include "roomprobe/probe/probe.hpp"

namespace roomprobe::io {

/// Activation dataset file, little-endian:
///   magic "APDS", u16 version=1, u16 tap-name length + UTF-8 name,
///   u32 record_count, u32 activation_dim, u8 margin,
///   then record_count x (activation_dim x f32, u8 x, u8 y).
inline constexpr uint16_t kDatasetVersion = 1;

std::vector<uint8_t> serialize_dataset(const probe::ActivationDataset& d);
probe::ActivationDataset deserialize_dataset(const std::vector<uint8_t>& bytes);

/// Header + record arithmetic for a dataset of the given shape.
size_t dataset_file_size(size_t tap_name_len, int64_t record_count, int activation_dim);

}  // namespace roomprobe::io
