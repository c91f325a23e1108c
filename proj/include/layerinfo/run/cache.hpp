#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "layerinfo/baselines/baselines.hpp"
#include "layerinfo/li/li_core.hpp"

namespace layerinfo::run {

std::string sha256_hex(std::string_view data);

struct CacheKeyFields {
  std::string model_id;
  std::uint64_t model_checksum = 0;
  std::string example_id;
  std::string example_digest;  // hash of context and question
  std::string template_id;
  std::vector<int> layer_selection;
  std::string head_norm_policy;
  std::string method;
  std::string params;  // canonical method parameters
};

std::string cache_key(const CacheKeyFields& fields);

// Content-addressed JSON entries under `dir`, written via a temporary file and
// an atomic rename. Disabled caches never hit and never write.
class ScoreCache {
 public:
  ScoreCache(std::filesystem::path dir, bool enabled);

  std::optional<nlohmann::json> get(const std::string& key) const;
  void put(const std::string& key, const nlohmann::json& payload) const;

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  std::filesystem::path path_for(const std::string& key) const;

  std::filesystem::path dir_;
  bool enabled_;
  mutable std::size_t hits_ = 0;
  mutable std::size_t misses_ = 0;
};

nlohmann::json to_json(const li::LIProfile& p);
li::LIProfile profile_from_json(const nlohmann::json& j);
nlohmann::json to_json(const baselines::BaselineScore& s);
baselines::BaselineScore score_from_json(const nlohmann::json& j);

// Writes `content` to `path` through a sibling temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace layerinfo::run
