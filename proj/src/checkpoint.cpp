#include "iqbench/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "bytes.hpp"
#include "iqbench/error.hpp"

namespace iqbench {

using json = nlohmann::json;
using namespace detail;

namespace {
constexpr std::size_t kPreludeSize = 4 + 2 + 4;
}

const Tensor& Checkpoint::get(std::string_view name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e.tensor;
  }
  fail(ErrorCode::kHeaderMismatch, "checkpoint has no parameter '" + std::string(name) + "'");
}

bool Checkpoint::contains(std::string_view name) const {
  for (const auto& e : entries) {
    if (e.name == name) return true;
  }
  return false;
}

std::string encode_checkpoint(const Checkpoint& checkpoint) {
  json h;
  h["kind"] = checkpoint.kind;
  h["meta"] = checkpoint.meta;
  h["params"] = json::array();
  std::size_t total = 0;
  for (const auto& e : checkpoint.entries) {
    require(e.tensor.numel() == shape_numel(e.tensor.shape), ErrorCode::kShapeMismatch,
            "checkpoint entry '" + e.name + "' has inconsistent shape");
    h["params"].push_back({{"name", e.name}, {"shape", e.tensor.shape}});
    total += e.tensor.numel();
  }
  const auto header = h.dump();
  std::string out;
  out.reserve(kPreludeSize + header.size() + total * 8);
  out.append(kCheckpointMagic, 4);
  put_u16(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  for (const auto& e : checkpoint.entries) {
    for (double v : e.tensor.data) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  require(bytes.size() >= kPreludeSize, ErrorCode::kTruncated, "checkpoint shorter than its prelude");
  require(std::memcmp(bytes.data(), kCheckpointMagic, 4) == 0, ErrorCode::kBadMagic,
          "not an IQCK checkpoint (bad magic)");
  const auto version = get_u16(bytes, 4);
  require(version == kCheckpointVersion, ErrorCode::kUnsupportedVersion,
          "unsupported checkpoint version " + std::to_string(version));
  const auto header_len = get_u32(bytes, 6);
  require(bytes.size() >= kPreludeSize + header_len, ErrorCode::kTruncated,
          "checkpoint truncated inside header");
  Checkpoint out;
  std::size_t at = kPreludeSize + header_len;
  try {
    const auto h = json::parse(bytes.substr(kPreludeSize, header_len));
    out.kind = h.at("kind").get<std::string>();
    out.meta = h.value("meta", json::object());
    for (const auto& p : h.at("params")) {
      CheckpointEntry e;
      e.name = p.at("name").get<std::string>();
      const auto shape = p.at("shape").get<Shape>();
      const auto n = shape_numel(shape);
      require(bytes.size() >= at + n * 8, ErrorCode::kTruncated,
              "checkpoint truncated inside parameter '" + e.name + "'");
      std::vector<double> values(n);
      for (std::size_t k = 0; k < n; ++k) {
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) {
          bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + k * 8 + i]))
                  << (8 * i);
        }
        values[k] = std::bit_cast<double>(bits);
      }
      at += n * 8;
      e.tensor = Tensor(shape, std::move(values));
      out.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kHeaderMismatch, std::string("malformed checkpoint header: ") + e.what());
  }
  require(at == bytes.size(), ErrorCode::kHeaderMismatch,
          "checkpoint has " + std::to_string(bytes.size() - at) + " trailing bytes");
  return out;
}

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace iqbench
