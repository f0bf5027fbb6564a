#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace iqbench {

// 64-bit FNV-1a; used for reproducibility fingerprints, not security.
std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t file_digest(const std::filesystem::path& path);
std::string hex_digest(std::uint64_t digest);

}  // namespace iqbench
