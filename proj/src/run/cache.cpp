#include "layerinfo/run/cache.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include <openssl/evp.h>
#include <unistd.h>

#include "layerinfo/error.hpp"

namespace layerinfo::run {

using json = nlohmann::json;

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string cache_key(const CacheKeyFields& f) {
  const json j = {{"model_id", f.model_id},         {"model_checksum", f.model_checksum},
                  {"example_id", f.example_id},     {"example_digest", f.example_digest},
                  {"template_id", f.template_id},   {"layer_selection", f.layer_selection},
                  {"head_norm_policy", f.head_norm_policy}, {"method", f.method},
                  {"params", f.params}};
  return sha256_hex(j.dump());
}

ScoreCache::ScoreCache(std::filesystem::path dir, bool enabled) : dir_(std::move(dir)), enabled_(enabled) {}

std::filesystem::path ScoreCache::path_for(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<json> ScoreCache::get(const std::string& key) const {
  if (!enabled_) return std::nullopt;
  std::ifstream in(path_for(key));
  if (!in) {
    ++misses_;
    return std::nullopt;
  }
  try {
    json j = json::parse(in);
    if (j.value("key", "") != key) throw LoadError("key mismatch");
    ++hits_;
    return j.at("payload");
  } catch (const std::exception&) {
    // A corrupt entry is treated as absent and rewritten.
    ++misses_;
    return std::nullopt;
  }
}

void ScoreCache::put(const std::string& key, const json& payload) const {
  if (!enabled_) return;
  const json entry = {{"key", key}, {"payload", payload}};
  write_file_atomic(path_for(key), entry.dump());
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::create_directories(path.parent_path());
  static thread_local std::mt19937_64 rng(std::random_device{}());
  const auto tmp = path.parent_path() /
                   ("." + path.filename().string() + "." + std::to_string(::getpid()) + "." + std::to_string(rng()) + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("cannot write " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("cannot move " + tmp.string() + " into place: " + ec.message());
  }
}

json to_json(const li::LIProfile& p) {
  return {{"example_id", p.example_id}, {"template_id", p.template_id}, {"layer_ids", p.layer_ids},
          {"h_null", p.h_null},         {"h_ctx", p.h_ctx},             {"i_layer", p.i_layer},
          {"li_total", p.li_total},     {"target_len", p.target_len}};
}

li::LIProfile profile_from_json(const json& j) {
  li::LIProfile p;
  p.example_id = j.at("example_id").get<std::string>();
  p.template_id = j.at("template_id").get<std::string>();
  p.layer_ids = j.at("layer_ids").get<std::vector<int>>();
  p.h_null = j.at("h_null").get<std::vector<double>>();
  p.h_ctx = j.at("h_ctx").get<std::vector<double>>();
  p.i_layer = j.at("i_layer").get<std::vector<double>>();
  p.li_total = j.at("li_total").get<double>();
  p.target_len = j.at("target_len").get<std::size_t>();
  return p;
}

json to_json(const baselines::BaselineScore& s) {
  return {{"example_id", s.example_id},
          {"method", baselines::to_string(s.method)},
          {"value", s.value},
          {"aux", s.aux},
          {"flagged", s.flagged},
          {"flag_reason", s.flag_reason},
          {"cost", {{"forward_passes", s.cost.forward_passes}, {"tokens_processed", s.cost.tokens_processed}}}};
}

baselines::BaselineScore score_from_json(const json& j) {
  baselines::BaselineScore s;
  s.example_id = j.at("example_id").get<std::string>();
  s.method = baselines::parse_method(j.at("method").get<std::string>());
  s.value = j.at("value").get<double>();
  s.aux = j.at("aux");
  s.flagged = j.at("flagged").get<bool>();
  s.flag_reason = j.at("flag_reason").get<std::string>();
  s.cost.method = baselines::to_string(s.method);
  s.cost.forward_passes = j.at("cost").at("forward_passes").get<std::size_t>();
  s.cost.tokens_processed = j.at("cost").at("tokens_processed").get<std::size_t>();
  return s;
}

}  // namespace layerinfo::run
