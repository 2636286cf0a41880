#pragma once

// Directory-based array archive shared by datasets, checkpoints and traversal
// records: `manifest.json` plus one little-endian float32 blob per array.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace arsivae {

struct NamedArray {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<float> data;

  int64_t numel() const;
};

struct ArrayArchive {
  std::vector<NamedArray> arrays;
  nlohmann::json metadata = nlohmann::json::object();

  const NamedArray& at(const std::string& name) const;
  bool contains(const std::string& name) const;
};

std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_hex(std::span<const float> values);

/// Writes `archive` into `dir` (created if missing). Existing files with the
/// same names are overwritten.
void save_array_archive(const ArrayArchive& archive, const std::filesystem::path& dir);

/// Throws CorruptArchive on malformed manifest, size mismatch or checksum failure.
ArrayArchive load_array_archive(const std::filesystem::path& dir);

/// SHA-256 over all array checksums in manifest order; identifies content
/// independently of metadata.
std::string archive_content_hash(const std::filesystem::path& dir);

}  // namespace arsivae
