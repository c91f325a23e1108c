#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "layerinfo/model/tokenizer.hpp"

namespace layerinfo::model {

// Block layout. `llama` covers the pre-norm RMSNorm/RoPE/gated-MLP decoders
// (Llama, Mistral, Qwen2, Phi-3); `gpt2` covers LayerNorm + learned positions.
enum class Family { llama, gpt2 };
enum class Activation { silu, gelu_tanh, gelu };

struct RopeConfig {
  double theta = 10000.0;
  std::string type = "default";  // "default" or "llama3"
  double factor = 1.0;
  double low_freq_factor = 1.0;
  double high_freq_factor = 4.0;
  int original_max_positions = 8192;
  double partial_rotary_factor = 1.0;
};

struct TransformerConfig {
  std::string model_type;
  Family family = Family::llama;
  Activation activation = Activation::silu;
  int vocab_size = 0;
  int hidden_size = 0;
  int intermediate_size = 0;
  int num_layers = 0;
  int num_heads = 0;
  int num_kv_heads = 0;
  int head_dim = 0;
  int max_positions = 0;
  int sliding_window = 0;  // 0 = full attention
  double norm_eps = 1e-5;
  bool tie_embeddings = false;
  RopeConfig rope;

  // Parses a Hugging Face config.json. Throws LoadError for architectures or
  // rope variants this implementation does not reproduce.
  static TransformerConfig from_hf_json(const nlohmann::json& doc);
  void validate() const;
};

// y = W x + b with W stored row-major [out x in] in float32.
struct Linear {
  int in = 0;
  int out = 0;
  std::vector<float> weight;
  std::vector<float> bias;

  // Applies the map to `rows` consecutive input vectors.
  void apply(std::span<const double> x, std::span<double> y, std::size_t rows) const;
};

// RMSNorm when `bias` is empty, LayerNorm otherwise.
struct Norm {
  std::vector<float> weight;
  std::vector<float> bias;
  bool layer_norm = false;
  double eps = 1e-5;

  void apply(std::span<const double> x, std::span<double> y) const;
};

struct BlockWeights {
  Norm attn_norm;
  Linear q, k, v, o;
  Norm mlp_norm;
  Linear gate;  // empty for gpt2
  Linear up;
  Linear down;
};

struct TransformerWeights {
  std::vector<float> embed;      // [vocab x hidden]
  std::vector<float> positions;  // [max_positions x hidden], gpt2 only
  std::vector<BlockWeights> blocks;
  Norm final_norm;
  std::vector<float> head;  // [vocab x hidden]; empty when tied to `embed`
};

// Key/value history for incremental decoding. One per sequence.
struct KvCache {
  std::vector<std::vector<double>> keys;    // per block, [position x kv_dim]
  std::vector<std::vector<double>> values;  // per block, [position x kv_dim]
  std::size_t length = 0;
};

// Hidden states after each transformer block for the positions processed by
// one forward call: states[b] is a row-major [positions x hidden] matrix for
// block b+1. When only the final block is captured, states has one entry.
struct BlockStates {
  std::vector<std::vector<double>> states;
  std::size_t positions = 0;
  int hidden = 0;

  std::span<const double> row(std::size_t block, std::size_t position) const {
    return {states[block].data() + position * static_cast<std::size_t>(hidden),
            static_cast<std::size_t>(hidden)};
  }
};

// A causal decoder-only transformer evaluated in double precision over
// float32 weights.
class Transformer {
 public:
  Transformer(TransformerConfig config, TransformerWeights weights);

  static Transformer load_hf_directory(const std::filesystem::path& dir);

  const TransformerConfig& config() const { return config_; }
  const TransformerWeights& weights() const { return weights_; }

  KvCache make_cache() const;

  // Runs the block stack over `ids`, appended after the positions already in
  // `cache`. Returns every block output when `capture_all`, else only the last.
  BlockStates forward(std::span<const TokenId> ids, KvCache& cache, bool capture_all) const;

  void apply_final_norm(std::span<const double> hidden, std::span<double> out) const;
  // Output-head logits for one hidden vector; `out` has vocab_size entries.
  void head_logits(std::span<const double> hidden, std::span<double> out) const;

  // Order-sensitive checksum over all parameters.
  std::uint64_t parameter_checksum() const;

 private:
  void attention(const BlockWeights& w, std::size_t block, std::span<const double> normed,
                 std::size_t rows, KvCache& cache, std::span<double> out) const;
  void mlp(const BlockWeights& w, std::span<const double> normed, std::size_t rows,
           std::span<double> out) const;
  void apply_rope(std::span<double> vec, int heads, std::size_t position) const;

  TransformerConfig config_;
  TransformerWeights weights_;
  std::vector<double> inv_freq_;
};

}  // namespace layerinfo::model
