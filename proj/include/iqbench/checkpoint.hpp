#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "iqbench/tensor.hpp"

namespace iqbench {

inline constexpr char kCheckpointMagic[4] = {'I', 'Q', 'C', 'K'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Tensor tensor;
};

/// Named parameter arrays plus a structured header.
///
/// Layout (little-endian): "IQCK" | u16 version | u32 header_len |
/// JSON {"kind", "meta", "params": [{"name", "shape"}...]} | f64 values in
/// the order of "params".
struct Checkpoint {
  std::string kind;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<CheckpointEntry> entries;

  const Tensor& get(std::string_view name) const;
  bool contains(std::string_view name) const;
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace iqbench
