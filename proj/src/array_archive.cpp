#include "arsivae/array_archive.hpp"

#include <algorithm>
#include <cctype>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include <openssl/evp.h>

#include "arsivae/errors.hpp"

namespace arsivae {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormatTag = "arsivae-array-archive";
constexpr int kFormatVersion = 1;

std::vector<std::byte> to_little_endian(std::span<const float> values) {
  std::vector<std::byte> out(values.size() * sizeof(float));
  std::memcpy(out.data(), values.data(), out.size());
  if constexpr (std::endian::native == std::endian::big) {
    for (size_t i = 0; i < out.size(); i += 4) {
      std::reverse(out.begin() + static_cast<std::ptrdiff_t>(i),
                   out.begin() + static_cast<std::ptrdiff_t>(i + 4));
    }
  }
  return out;
}

std::vector<float> from_little_endian(std::vector<std::byte> bytes) {
  if constexpr (std::endian::native == std::endian::big) {
    for (size_t i = 0; i + 4 <= bytes.size(); i += 4) {
      std::reverse(bytes.begin() + static_cast<std::ptrdiff_t>(i),
                   bytes.begin() + static_cast<std::ptrdiff_t>(i + 4));
    }
  }
  std::vector<float> out(bytes.size() / sizeof(float));
  std::memcpy(out.data(), bytes.data(), out.size() * sizeof(float));
  return out;
}

std::string blob_file_name(const std::string& array_name) {
  std::string safe = array_name;
  for (char& c : safe) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    if (!ok) c = '_';
  }
  return safe + ".f32";
}

}  // namespace

int64_t NamedArray::numel() const {
  int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

const NamedArray& ArrayArchive::at(const std::string& name) const {
  auto it = std::find_if(arrays.begin(), arrays.end(),
                         [&](const NamedArray& a) { return a.name == name; });
  if (it == arrays.end()) throw CorruptArchive("archive has no array named '" + name + "'");
  return *it;
}

bool ArrayArchive::contains(const std::string& name) const {
  return std::any_of(arrays.begin(), arrays.end(),
                     [&](const NamedArray& a) { return a.name == name; });
}

std::string sha256_hex(std::span<const std::byte> bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw std::runtime_error("sha256: OpenSSL digest failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return os.str();
}

std::string sha256_hex(std::span<const float> values) {
  const auto bytes = to_little_endian(values);
  return sha256_hex(std::span<const std::byte>(bytes));
}

void save_array_archive(const ArrayArchive& archive, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = kFormatTag;
  manifest["version"] = kFormatVersion;
  manifest["byte_order"] = "little";
  manifest["arrays"] = json::array();
  for (const auto& arr : archive.arrays) {
    if (arr.numel() != static_cast<int64_t>(arr.data.size())) {
      throw ContractError("array '" + arr.name + "': shape does not match data length");
    }
    const auto bytes = to_little_endian(arr.data);
    const auto file = blob_file_name(arr.name);
    std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / file).string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + (dir / file).string());
    manifest["arrays"].push_back({{"name", arr.name},
                                  {"dtype", "float32"},
                                  {"shape", arr.shape},
                                  {"file", file},
                                  {"sha256", sha256_hex(std::span<const std::byte>(bytes))}});
  }
  manifest["metadata"] = archive.metadata;
  std::ofstream mf(dir / "manifest.json", std::ios::trunc);
  if (!mf) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
  mf << manifest.dump(2) << '\n';
}

ArrayArchive load_array_archive(const fs::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw CorruptArchive("missing manifest.json in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(mf);
  } catch (const json::exception& e) {
    throw CorruptArchive(std::string("malformed manifest: ") + e.what());
  }

  ArrayArchive archive;
  try {
    if (manifest.at("format").get<std::string>() != kFormatTag) {
      throw CorruptArchive("unknown archive format tag");
    }
    if (manifest.at("byte_order").get<std::string>() != "little") {
      throw CorruptArchive("unsupported byte order");
    }
    for (const auto& entry : manifest.at("arrays")) {
      NamedArray arr;
      arr.name = entry.at("name").get<std::string>();
      if (entry.at("dtype").get<std::string>() != "float32") {
        throw CorruptArchive("array '" + arr.name + "': unsupported dtype");
      }
      arr.shape = entry.at("shape").get<std::vector<int64_t>>();
      if (std::any_of(arr.shape.begin(), arr.shape.end(), [](int64_t d) { return d < 0; })) {
        throw CorruptArchive("array '" + arr.name + "': negative extent");
      }
      const auto path = dir / entry.at("file").get<std::string>();
      std::ifstream in(path, std::ios::binary | std::ios::ate);
      if (!in) throw CorruptArchive("missing payload " + path.string());
      std::vector<std::byte> bytes(static_cast<size_t>(in.tellg()));
      in.seekg(0);
      in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      const auto expected = static_cast<size_t>(arr.numel()) * sizeof(float);
      if (bytes.size() != expected) {
        throw CorruptArchive("array '" + arr.name + "': payload has " + std::to_string(bytes.size()) +
                             " bytes, manifest shape needs " + std::to_string(expected));
      }
      if (sha256_hex(std::span<const std::byte>(bytes)) != entry.at("sha256").get<std::string>()) {
        throw CorruptArchive("array '" + arr.name + "': checksum mismatch");
      }
      arr.data = from_little_endian(std::move(bytes));
      archive.arrays.push_back(std::move(arr));
    }
    archive.metadata = manifest.value("metadata", json::object());
  } catch (const json::exception& e) {
    throw CorruptArchive(std::string("malformed manifest: ") + e.what());
  }
  return archive;
}

std::string archive_content_hash(const fs::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw CorruptArchive("missing manifest.json in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(mf);
  } catch (const json::exception& e) {
    throw CorruptArchive(std::string("malformed manifest: ") + e.what());
  }
  std::string joined;
  for (const auto& entry : manifest.at("arrays")) {
    joined += entry.at("name").get<std::string>();
    joined += ':';
    joined += entry.at("sha256").get<std::string>();
    joined += '\n';
  }
  return sha256_hex(std::as_bytes(std::span(joined.data(), joined.size())));
}

}  // namespace arsivae
