#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "layerinfo/baselines/baselines.hpp"
#include "layerinfo/data/prompts.hpp"

namespace layerinfo::run {

// Everything that defines one experiment. Serialised as a JSON document; a
// file may omit any field to take its default.
struct RunConfig {
  std::string model_id = "tiny-lm";
  std::string dataset_path;
  std::string dataset_format = "generic_jsonl";
  std::vector<data::PromptTemplate> templates = {data::PromptTemplate::none()};
  std::vector<std::string> methods = {"li"};
  std::vector<int> layers;  // empty = all blocks
  std::string head_norm_policy = "apply_final_norm";
  std::string scored_span = "instruction_and_question";
  std::string separator = "\n";
  double balance_ratio = 0.0;  // 0 keeps the corpus as loaded
  std::uint64_t seed = 0;
  std::size_t max_examples = 0;  // 0 = all; keeps the balance ratio when balancing
  std::vector<double> reject_fractions = {0.1, 0.2, 0.3};
  int p_true_k = 10;
  baselines::PTrueFrame p_true_frame;
  int n_samples = 10;
  double temperature = 1.0;
  std::string equivalence = "normalized_exact_match";  // or "http_judge"
  std::string judge_url;
  int max_new_tokens = 16;
  std::vector<std::size_t> calibration_sizes = {10, 100};
  int ece_bins = 10;
  std::string output_dir = "runs/default";
  bool use_cache = true;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& doc);
  static RunConfig load(const std::filesystem::path& path);

  // Throws InvalidArgument on unknown names, empty method or template lists
  // and out-of-range parameters.
  void validate() const;

  // SHA-256 over the canonical JSON of the fields that affect results
  // (everything except output_dir and use_cache).
  std::string hash() const;
};

nlohmann::json template_to_json(const data::PromptTemplate& t);
data::PromptTemplate template_from_json(const nlohmann::json& j);

}  // namespace layerinfo::run
