#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "layerinfo/data/prompts.hpp"
#include "layerinfo/li/li_core.hpp"
#include "layerinfo/model/model_adapter.hpp"

namespace layerinfo::oracle {

// A tiny pre-norm decoder (RMSNorm, rotary attention, gated SiLU MLP) with a
// character tokenizer. Parameters are a pure function of ToyModelSpec.
struct ToyModelSpec {
  int num_layers = 2;  // 1..2
  int vocab = 64;      // 8..64
  int width = 32;      // even, 4..32
  std::uint64_t seed = 0;
};

model::ModelHandle build_toy_model(const ToyModelSpec& spec,
                                   model::HeadNormPolicy policy = model::HeadNormPolicy::apply_final_norm,
                                   std::string model_id = "");

// Reference recomputation over the raw weights of a toy model: every hidden
// state is recomputed position by position and every layer's softmax is
// materialised over the full vocabulary. Shares no arithmetic with the
// adapter or li-core.

// Per selected layer, full next-token distribution after ids[0..=position].
std::vector<std::vector<double>> brute_force_distributions(const model::ModelHandle& model,
                                                           const std::vector<model::TokenId>& ids,
                                                           std::size_t position);

// [selected layer][t] base-2 log-probabilities of ids[target_start + t].
std::vector<std::vector<double>> brute_force_logprobs(const model::ModelHandle& model,
                                                      const std::vector<model::TokenId>& ids,
                                                      std::size_t target_start);

li::LIProfile brute_force_li(const model::ModelHandle& model, const data::RenderedPair& pair);

}  // namespace layerinfo::oracle
