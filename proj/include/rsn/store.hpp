#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsn/expert.hpp"

namespace rsn {

// "RSNACT01", u32 version (1), u32 J, u32 N, N x {u8 kind, u8 pad, u16 layer,
// u32 column}, J label bytes, J x N row-major float32. All little-endian.
inline constexpr std::uint32_t kActivationVersion = 1;

std::vector<std::uint8_t> serialize_activations(const ActivationMatrix& m);
ActivationMatrix deserialize_activations(std::span<const std::uint8_t> bytes);
void write_activation_file(const std::filesystem::path& path, const ActivationMatrix& m);
ActivationMatrix read_activation_file(const std::filesystem::path& path);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(const std::string& text);
std::string file_digest(const std::filesystem::path& path);

struct StageRecord {
  std::string name;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;   // path relative to the run root -> sha256
  std::map<std::string, std::string> outputs;  // same
  std::string started, finished;               // ISO-8601 UTC
};

// Stage list of one run directory, stored as manifest.json. Timestamps live in
// their own block so the rest of the document is reproducible byte for byte.
class RunManifest {
 public:
  std::vector<StageRecord> stages;

  // Replaces any earlier record of the same stage.
  void record(StageRecord stage);
  const StageRecord* find(const std::string& name) const;

  nlohmann::ordered_json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  static RunManifest load(const std::filesystem::path& root);  // empty when absent
  void save(const std::filesystem::path& root) const;

  // Files under root whose digest no longer matches the manifest.
  std::vector<std::string> verify(const std::filesystem::path& root) const;
};

std::string utc_timestamp();

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace rsn
