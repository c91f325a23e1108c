#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "layerinfo/model/tokenizer.hpp"
#include "layerinfo/model/transformer.hpp"

namespace layerinfo::model {

// How intermediate block outputs are mapped to vocabulary logits. The final
// block is always read through the model's own final normalisation, since
// that is the model's ordinary output.
enum class HeadNormPolicy { apply_final_norm, raw_hidden };

std::string to_string(HeadNormPolicy policy);
HeadNormPolicy parse_head_norm_policy(std::string_view name);

// Physical work done through one handle.
struct ForwardCounter {
  std::size_t forward_passes = 0;
  std::size_t tokens_processed = 0;
};

// A loaded causal LM plus the layers the logit lens reads from. Layer k is
// the output of transformer block k (1-based); the raw embedding is not a
// layer. Handles are single-threaded; copies share the immutable weights but
// own independent counters.
class ModelHandle {
 public:
  ModelHandle(std::string model_id, std::shared_ptr<const Transformer> transformer,
              std::shared_ptr<const Tokenizer> tokenizer, std::vector<int> layer_selection,
              HeadNormPolicy policy);

  const std::string& model_id() const { return model_id_; }
  int num_layers() const { return transformer_->config().num_layers; }
  int vocab_size() const { return transformer_->config().vocab_size; }
  int context_window() const { return transformer_->config().max_positions; }
  const std::vector<int>& layer_selection() const { return layers_; }
  HeadNormPolicy head_norm_policy() const { return policy_; }

  const Transformer& transformer() const { return *transformer_; }
  const Tokenizer& tokenizer() const { return *tokenizer_; }

  ModelHandle with_layers(std::vector<int> layer_selection) const;
  ModelHandle with_policy(HeadNormPolicy policy) const;

  const ForwardCounter& counter() const { return counter_; }
  void reset_counter() const { counter_ = {}; }
  void record_forward(std::size_t tokens) const {
    ++counter_.forward_passes;
    counter_.tokens_processed += tokens;
  }

 private:
  std::string model_id_;
  std::shared_ptr<const Transformer> transformer_;
  std::shared_ptr<const Tokenizer> tokenizer_;
  std::vector<int> layers_;
  HeadNormPolicy policy_;
  mutable ForwardCounter counter_;
};

// Base-2 log-probabilities of realised target tokens, one row per selected
// layer: values[row * target_len + t].
struct LayerLogProbs {
  std::vector<int> layer_ids;
  std::size_t target_len = 0;
  std::vector<double> values;

  double at(std::size_t row, std::size_t t) const { return values[row * target_len + t]; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * target_len, target_len}; }
  std::size_t rows() const { return layer_ids.size(); }
};

// Resolves `model_id` to a model:
//   * "tiny-lm"                       the default desk toy model,
//   * "toy:<layers>:<vocab>:<width>:<seed>"  a specific toy model,
//   * a directory with config.json, *.safetensors and tokenizer.json.
// `layers` empty means all blocks 1..N.
ModelHandle load_model(const std::string& model_id, const std::vector<int>& layers = {},
                       HeadNormPolicy policy = HeadNormPolicy::apply_final_norm);

// Token ids of `text`, preceded by the begin-of-sequence token (or the
// end-of-sequence token for tokenizers that define no BOS).
TokenSequence tokenize(const ModelHandle& model, std::string_view text);

// Teacher-forced per-layer log-probabilities of full_input[target_start..]
// given everything before it. One forward pass.
LayerLogProbs score_span(const ModelHandle& model, const TokenSequence& full_input, std::size_t target_start);

// The model's ordinary output log-probabilities (base 2) for the same span,
// computed without capturing intermediate layers.
std::vector<double> next_token_logprobs(const ModelHandle& model, const TokenSequence& full_input,
                                        std::size_t target_start);

// Final-layer next-token distribution (probabilities) after `prompt`.
std::vector<double> next_token_distribution(const ModelHandle& model, const TokenSequence& prompt);

struct Decoding {
  enum class Kind { greedy, sample };
  Kind kind = Kind::greedy;
  double temperature = 1.0;
  std::uint64_t seed = 0;

  static Decoding greedy() { return {}; }
  static Decoding sample(double temperature, std::uint64_t seed) { return {Kind::sample, temperature, seed}; }
};

struct GenerationOptions {
  int max_tokens = 32;
  Decoding decoding;
  // Stop at the first newline once some non-whitespace text was produced.
  bool stop_at_newline = true;
};

struct GeneratedToken {
  TokenId id = 0;
  double log2_prob = 0.0;     // under the untempered final-layer distribution
  double entropy_bits = 0.0;  // of that distribution
};

struct Generation {
  std::string text;
  std::vector<GeneratedToken> tokens;
};

// The prompt already run through the model, reusable across generations.
struct Prefill {
  KvCache cache;
  std::vector<double> last_hidden;
  std::size_t prompt_len = 0;
};

Prefill prefill(const ModelHandle& model, const TokenSequence& prompt);

Generation generate_from(const ModelHandle& model, const TokenSequence& prompt, const GenerationOptions& options);
Generation generate_from(const ModelHandle& model, const Prefill& start, const GenerationOptions& options);
std::string generate(const ModelHandle& model, std::string_view prompt, const Decoding& decoding, int max_tokens);

// Numerically stable log-softmax in base 2.
void log2_softmax(std::span<const double> logits, std::span<double> out);

}  // namespace layerinfo::model
