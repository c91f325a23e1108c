#include "layerinfo/model/model_adapter.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "layerinfo/error.hpp"
#include "layerinfo/oracle/desk_oracle.hpp"

namespace layerinfo::model {
namespace {

using json = nlohmann::json;

void validate_layers(const std::vector<int>& layers, int num_layers) {
  if (layers.empty()) throw InvalidArgument("layer selection is empty");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i] < 1 || layers[i] > num_layers) {
      throw InvalidArgument("layer " + std::to_string(layers[i]) + " outside [1, " + std::to_string(num_layers) + "]");
    }
    if (i > 0 && layers[i] <= layers[i - 1]) throw InvalidArgument("layer selection must be strictly increasing");
  }
}

std::vector<int> all_layers(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i + 1;
  return v;
}

std::optional<TokenId> special_from_config(const json& tok_cfg, const json& model_cfg, const char* name,
                                           const Tokenizer& tok) {
  if (tok_cfg.contains(name)) {
    const auto& v = tok_cfg[name];
    std::string content;
    if (v.is_string()) content = v.get<std::string>();
    else if (v.is_object() && v.contains("content")) content = v["content"].get<std::string>();
    if (!content.empty()) {
      if (auto id = tok.token_id(content)) return id;
    }
  }
  const std::string id_key = std::string(name) + "_id";
  if (model_cfg.contains(id_key) && model_cfg[id_key].is_number_integer()) {
    return model_cfg[id_key].get<TokenId>();
  }
  if (model_cfg.contains(id_key) && model_cfg[id_key].is_array() && !model_cfg[id_key].empty()) {
    return model_cfg[id_key][0].get<TokenId>();
  }
  return std::nullopt;
}

json read_json_or_empty(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) return json::object();
  return json::parse(in);
}

ModelHandle load_hf(const std::string& model_id, const std::filesystem::path& dir, const std::vector<int>& layers,
                    HeadNormPolicy policy) {
  auto transformer = std::make_shared<Transformer>(Transformer::load_hf_directory(dir));
  if (!std::filesystem::exists(dir / "tokenizer.json")) throw LoadError("missing tokenizer.json in " + dir.string());
  std::shared_ptr<Tokenizer> tok = BpeTokenizer::from_file(dir / "tokenizer.json");
  const json tok_cfg = read_json_or_empty(dir / "tokenizer_config.json");
  const json model_cfg = read_json_or_empty(dir / "config.json");
  tok->set_bos(special_from_config(tok_cfg, model_cfg, "bos_token", *tok));
  tok->set_eos(special_from_config(tok_cfg, model_cfg, "eos_token", *tok));
  if (tok->vocab_size() > transformer->config().vocab_size) {
    throw LoadError("tokenizer vocabulary exceeds the model's output head");
  }
  const auto selection = layers.empty() ? all_layers(transformer->config().num_layers) : layers;
  return ModelHandle(model_id, std::move(transformer), std::move(tok), selection, policy);
}

double lse(std::span<const double> logits) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : logits) m = std::max(m, x);
  double s = 0.0;
  for (double x : logits) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

std::string to_string(HeadNormPolicy policy) {
  return policy == HeadNormPolicy::apply_final_norm ? "apply_final_norm" : "raw_hidden";
}

HeadNormPolicy parse_head_norm_policy(std::string_view name) {
  if (name == "apply_final_norm") return HeadNormPolicy::apply_final_norm;
  if (name == "raw_hidden") return HeadNormPolicy::raw_hidden;
  throw InvalidArgument("unknown head_norm_policy '" + std::string(name) + "'");
}

ModelHandle::ModelHandle(std::string model_id, std::shared_ptr<const Transformer> transformer,
                         std::shared_ptr<const Tokenizer> tokenizer, std::vector<int> layer_selection,
                         HeadNormPolicy policy)
    : model_id_(std::move(model_id)),
      transformer_(std::move(transformer)),
      tokenizer_(std::move(tokenizer)),
      layers_(std::move(layer_selection)),
      policy_(policy) {
  validate_layers(layers_, num_layers());
}

ModelHandle ModelHandle::with_layers(std::vector<int> layer_selection) const {
  return ModelHandle(model_id_, transformer_, tokenizer_, std::move(layer_selection), policy_);
}

ModelHandle ModelHandle::with_policy(HeadNormPolicy policy) const {
  return ModelHandle(model_id_, transformer_, tokenizer_, layers_, policy);
}

ModelHandle load_model(const std::string& model_id, const std::vector<int>& layers, HeadNormPolicy policy) {
  if (model_id == "tiny-lm" || model_id.rfind("toy:", 0) == 0) {
    oracle::ToyModelSpec spec;
    if (model_id != "tiny-lm") {
      std::istringstream in(model_id.substr(4));
      std::string part;
      std::vector<long long> fields;
      while (std::getline(in, part, ':')) {
        try {
          fields.push_back(std::stoll(part));
        } catch (const std::exception&) {
          throw LoadError("model not found: " + model_id);
        }
      }
      if (fields.size() != 4) throw LoadError("model not found: " + model_id + " (expected toy:L:V:W:seed)");
      spec.num_layers = static_cast<int>(fields[0]);
      spec.vocab = static_cast<int>(fields[1]);
      spec.width = static_cast<int>(fields[2]);
      spec.seed = static_cast<std::uint64_t>(fields[3]);
    }
    ModelHandle h = oracle::build_toy_model(spec, policy, model_id);
    return layers.empty() ? h : h.with_layers(layers);
  }
  const std::filesystem::path dir(model_id);
  if (!std::filesystem::is_directory(dir) || !std::filesystem::exists(dir / "config.json")) {
    throw LoadError("model not found: " + model_id);
  }
  return load_hf(model_id, dir, layers, policy);
}

TokenSequence tokenize(const ModelHandle& model, std::string_view text) {
  const Tokenizer& tok = model.tokenizer();
  TokenSequence out;
  if (auto prefix = tok.bos_id() ? tok.bos_id() : tok.eos_id()) out.push_back(*prefix, {0, 0});
  out.append(tok.encode(text), 0);
  return out;
}

void log2_softmax(std::span<const double> logits, std::span<double> out) {
  const double z = lse(logits);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = (logits[i] - z) / std::numbers::ln2;
}

LayerLogProbs score_span(const ModelHandle& model, const TokenSequence& full_input, std::size_t target_start) {
  const std::size_t n = full_input.size();
  if (target_start == 0 || target_start >= n) {
    throw InvalidArgument("target_start " + std::to_string(target_start) + " outside (0, " + std::to_string(n) + ")");
  }
  if (n > static_cast<std::size_t>(model.context_window())) {
    throw InvalidArgument("input of " + std::to_string(n) + " tokens exceeds the context window of " +
                          std::to_string(model.context_window()));
  }
  const Transformer& tf = model.transformer();
  KvCache cache = tf.make_cache();
  const BlockStates states = tf.forward(full_input.ids, cache, /*capture_all=*/true);
  model.record_forward(n);

  const auto d = static_cast<std::size_t>(tf.config().hidden_size);
  const auto v = static_cast<std::size_t>(tf.config().vocab_size);
  LayerLogProbs out;
  out.layer_ids = model.layer_selection();
  out.target_len = n - target_start;
  out.values.resize(out.layer_ids.size() * out.target_len);
  std::vector<double> normed(d), logits(v), logp(v);
  for (std::size_t r = 0; r < out.layer_ids.size(); ++r) {
    const int layer = out.layer_ids[r];
    const auto block = static_cast<std::size_t>(layer - 1);
    const bool use_norm = model.head_norm_policy() == HeadNormPolicy::apply_final_norm || layer == model.num_layers();
    for (std::size_t t = 0; t < out.target_len; ++t) {
      const auto hidden = states.row(block, target_start + t - 1);
      if (use_norm) {
        tf.apply_final_norm(hidden, normed);
        tf.head_logits(normed, logits);
      } else {
        tf.head_logits(hidden, logits);
      }
      log2_softmax(logits, logp);
      out.values[r * out.target_len + t] = logp[static_cast<std::size_t>(full_input.ids[target_start + t])];
    }
  }
  return out;
}

std::vector<double> next_token_logprobs(const ModelHandle& model, const TokenSequence& full_input,
                                        std::size_t target_start) {
  const std::size_t n = full_input.size();
  if (target_start == 0 || target_start >= n) throw InvalidArgument("target_start out of range");
  const Transformer& tf = model.transformer();
  KvCache cache = tf.make_cache();
  const BlockStates states = tf.forward(full_input.ids, cache, /*capture_all=*/false);
  model.record_forward(n);
  const auto d = static_cast<std::size_t>(tf.config().hidden_size);
  const auto v = static_cast<std::size_t>(tf.config().vocab_size);
  std::vector<double> normed(d), logits(v), logp(v), out;
  for (std::size_t t = target_start; t < n; ++t) {
    tf.apply_final_norm(states.row(0, t - 1), normed);
    tf.head_logits(normed, logits);
    log2_softmax(logits, logp);
    out.push_back(logp[static_cast<std::size_t>(full_input.ids[t])]);
  }
  return out;
}

std::vector<double> next_token_distribution(const ModelHandle& model, const TokenSequence& prompt) {
  if (prompt.empty()) throw InvalidArgument("empty prompt");
  const Transformer& tf = model.transformer();
  KvCache cache = tf.make_cache();
  const BlockStates states = tf.forward(prompt.ids, cache, false);
  model.record_forward(prompt.size());
  const auto d = static_cast<std::size_t>(tf.config().hidden_size);
  const auto v = static_cast<std::size_t>(tf.config().vocab_size);
  std::vector<double> normed(d), logits(v), p(v);
  tf.apply_final_norm(states.row(0, prompt.size() - 1), normed);
  tf.head_logits(normed, logits);
  log2_softmax(logits, p);
  for (auto& x : p) x = std::exp2(x);
  return p;
}

Prefill prefill(const ModelHandle& model, const TokenSequence& prompt) {
  if (prompt.empty()) throw InvalidArgument("empty prompt");
  if (prompt.size() > static_cast<std::size_t>(model.context_window())) {
    throw InvalidArgument("prompt of " + std::to_string(prompt.size()) + " tokens exceeds the context window of " +
                          std::to_string(model.context_window()));
  }
  const Transformer& tf = model.transformer();
  Prefill p;
  p.cache = tf.make_cache();
  const BlockStates states = tf.forward(prompt.ids, p.cache, false);
  model.record_forward(prompt.size());
  const auto last = states.row(0, prompt.size() - 1);
  p.last_hidden.assign(last.begin(), last.end());
  p.prompt_len = prompt.size();
  return p;
}

Generation generate_from(const ModelHandle& model, const TokenSequence& prompt, const GenerationOptions& options) {
  if (prompt.empty()) throw InvalidArgument("empty prompt");
  if (options.max_tokens < 1) throw InvalidArgument("max_tokens must be >= 1");
  if (prompt.size() + static_cast<std::size_t>(options.max_tokens) > static_cast<std::size_t>(model.context_window())) {
    throw InvalidArgument("prompt of " + std::to_string(prompt.size()) + " tokens plus " +
                          std::to_string(options.max_tokens) + " new tokens exceeds the context window of " +
                          std::to_string(model.context_window()));
  }
  return generate_from(model, prefill(model, prompt), options);
}

Generation generate_from(const ModelHandle& model, const Prefill& start, const GenerationOptions& options) {
  if (options.max_tokens < 1) throw InvalidArgument("max_tokens must be >= 1");
  if (start.prompt_len + static_cast<std::size_t>(options.max_tokens) >
      static_cast<std::size_t>(model.context_window())) {
    throw InvalidArgument("prompt of " + std::to_string(start.prompt_len) + " tokens plus " +
                          std::to_string(options.max_tokens) + " new tokens exceeds the context window of " +
                          std::to_string(model.context_window()));
  }
  if (options.decoding.kind == Decoding::Kind::sample && !(options.decoding.temperature > 0.0)) {
    throw InvalidArgument("sampling temperature must be positive");
  }
  const Transformer& tf = model.transformer();
  const Tokenizer& tok = model.tokenizer();
  const auto d = static_cast<std::size_t>(tf.config().hidden_size);
  const auto v = static_cast<std::size_t>(tf.config().vocab_size);
  std::mt19937_64 rng(options.decoding.seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  KvCache cache = start.cache;
  std::vector<double> hidden = start.last_hidden;

  Generation gen;
  std::vector<TokenId> ids;
  std::vector<double> normed(d), logits(v), logp(v), weights(v);
  for (int step = 0; step < options.max_tokens; ++step) {
    tf.apply_final_norm(hidden, normed);
    tf.head_logits(normed, logits);
    log2_softmax(logits, logp);

    // Never emit the sequence prefix; require at least one token before EOS.
    std::vector<bool> banned(v, false);
    if (tok.bos_id() && tok.bos_id() != tok.eos_id()) banned[static_cast<std::size_t>(*tok.bos_id())] = true;
    if (step == 0 && tok.eos_id()) banned[static_cast<std::size_t>(*tok.eos_id())] = true;
    // Ids past the tokenizer's vocabulary have no text.
    for (std::size_t i = static_cast<std::size_t>(tok.vocab_size()); i < v; ++i) banned[i] = true;

    TokenId chosen = 0;
    if (options.decoding.kind == Decoding::Kind::greedy) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < v; ++i) {
        if (!banned[i] && logp[i] > best) {
          best = logp[i];
          chosen = static_cast<TokenId>(i);
        }
      }
    } else {
      double max_scaled = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < v; ++i) {
        if (!banned[i]) max_scaled = std::max(max_scaled, logits[i] / options.decoding.temperature);
      }
      double total = 0.0;
      for (std::size_t i = 0; i < v; ++i) {
        weights[i] = banned[i] ? 0.0 : std::exp(logits[i] / options.decoding.temperature - max_scaled);
        total += weights[i];
      }
      double u = uniform(rng) * total;
      chosen = -1;
      for (std::size_t i = 0; i < v; ++i) {
        if (weights[i] == 0.0) continue;
        chosen = static_cast<TokenId>(i);
        u -= weights[i];
        if (u < 0.0) break;
      }
    }

    double entropy = 0.0;
    for (std::size_t i = 0; i < v; ++i) {
      const double p = std::exp2(logp[i]);
      if (p > 0.0) entropy -= p * logp[i];
    }
    if (tok.eos_id() && chosen == *tok.eos_id()) break;

    gen.tokens.push_back({chosen, logp[static_cast<std::size_t>(chosen)], entropy});
    ids.push_back(chosen);
    std::string text = tok.decode(ids);
    if (options.stop_at_newline) {
      const auto content = text.find_first_not_of(" \t\r\n");
      const auto nl = content == std::string::npos ? std::string::npos : text.find('\n', content);
      if (nl != std::string::npos) {
        gen.text = text.substr(0, nl);
        return gen;
      }
    }
    gen.text = std::move(text);
    if (step + 1 == options.max_tokens) break;

    const TokenId next[1] = {chosen};
    const BlockStates states = tf.forward(next, cache, false);
    const auto row = states.row(0, 0);
    hidden.assign(row.begin(), row.end());
    model.record_forward(1);
  }
  return gen;
}

std::string generate(const ModelHandle& model, std::string_view prompt, const Decoding& decoding, int max_tokens) {
  GenerationOptions opts;
  opts.max_tokens = max_tokens;
  opts.decoding = decoding;
  return generate_from(model, tokenize(model, prompt), opts).text;
}

}  // namespace layerinfo::model
