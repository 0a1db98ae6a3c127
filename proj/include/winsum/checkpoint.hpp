#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "winsum/adam.hpp"
#include "winsum/model.hpp"

namespace winsum {

// Binary checkpoint, version 1. Every integer is a little-endian u32, every
// value an IEEE-754 binary64 stored little-endian:
//
//   magic "WINSUMCK" (8 bytes), version
//   meta count, then (key length, key bytes, value length, value bytes) sorted by key
//   word count, then (length, bytes) per content word in id order
//   tensor count, then (name length, name bytes, rows, cols) per tensor
//   tensor data in table order, each block row-major
//
// Optimizer moments are stored as tensors named "adam.m:<name>" and
// "adam.v:<name>"; the optimizer step count lives in meta key "adam_step".
struct Checkpoint {
  ModelParams<double> params;
  std::vector<std::string> words;
  std::map<std::string, std::string> meta;
  std::optional<AdamState<double>> adam;

  std::string meta_or(const std::string& key, const std::string& fallback) const {
    auto it = meta.find(key);
    return it == meta.end() ? fallback : it->second;
  }
};

inline constexpr std::string_view kCheckpointMagic = "WINSUMCK";
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Checkpoint& checkpoint);
// Throws FormatError on truncation, bad magic, unknown version or shape errors.
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace winsum
