#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "layerinfo/data/prompts.hpp"
#include "layerinfo/model/model_adapter.hpp"

namespace layerinfo::li {

// Per-layer usable information of a context for one scored span, in bits per
// scored token.
struct LIProfile {
  std::string example_id;
  std::string template_id;
  std::vector<int> layer_ids;
  std::vector<double> h_null;   // H_l(Q | empty context)
  std::vector<double> h_ctx;    // H_l(Q | C)
  std::vector<double> i_layer;  // h_null - h_ctx
  double li_total = 0.0;        // sum of i_layer in ascending layer order
  std::size_t target_len = 0;

  bool operator==(const LIProfile&) const = default;
};

// -(1/T) * sum_t values[l][t] for every row.
std::vector<double> layer_entropies(const model::LayerLogProbs& logprobs);

// Builds a profile from per-layer entropies, deriving i_layer and li_total.
LIProfile make_profile(std::string example_id, std::string template_id, std::vector<int> layer_ids,
                       std::vector<double> h_null, std::vector<double> h_ctx, std::size_t target_len);

// Scores the null-context and with-context passes (two forward passes) and
// returns the per-layer information gains. Throws SpanMismatch when the
// scored token ids differ between the passes.
LIProfile li_profile(const model::ModelHandle& model, const data::RenderedPair& pair);

struct DatasetLIScore {
  double mean_li = 0.0;
  std::vector<std::pair<std::string, double>> per_example;
  std::size_t count = 0;
};

DatasetLIScore dataset_li(std::span<const LIProfile> profiles);

// Prefix sum of i_layer through `upto_layer` (a layer id, not a row index).
double cumulative_li(const LIProfile& profile, int upto_layer);
// All prefix sums, one per layer.
std::vector<double> cumulative_profile(const LIProfile& profile);

struct LayerChoice {
  enum class Kind { first, last, index };
  Kind kind = Kind::last;
  int layer = 0;  // used when kind == index

  static LayerChoice first() { return {Kind::first, 0}; }
  static LayerChoice last() { return {Kind::last, 0}; }
  static LayerChoice at(int layer) { return {Kind::index, layer}; }
};

// Single-layer pointwise information: i_layer at the chosen layer.
double pvi_at_layer(const LIProfile& profile, LayerChoice which);

}  // namespace layerinfo::li
