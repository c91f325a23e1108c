#include "layerinfo/model/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "layerinfo/error.hpp"
#include "layerinfo/model/safetensors.hpp"

namespace layerinfo::model {
namespace {

using json = nlohmann::json;

int int_or(const json& doc, const char* key, int fallback) {
  if (!doc.contains(key) || doc[key].is_null()) return fallback;
  return doc[key].get<int>();
}

double double_or(const json& doc, const char* key, double fallback) {
  if (!doc.contains(key) || doc[key].is_null()) return fallback;
  return doc[key].get<double>();
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::silu:
      return x / (1.0 + std::exp(-x));
    case Activation::gelu_tanh: {
      constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
      return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
    }
    case Activation::gelu:
      return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
  }
  return x;
}

Activation parse_activation(const std::string& name) {
  if (name == "silu" || name == "swish") return Activation::silu;
  if (name == "gelu_new" || name == "gelu_pytorch_tanh" || name == "gelu_fast") return Activation::gelu_tanh;
  if (name == "gelu") return Activation::gelu;
  throw LoadError("unsupported activation " + name);
}

void parse_rope(const json& doc, RopeConfig& rope) {
  // transformers >= 5 writes "rope_parameters"; older configs use
  // "rope_theta" plus an optional "rope_scaling" block.
  json params = json::object();
  if (doc.contains("rope_parameters") && doc["rope_parameters"].is_object()) {
    params = doc["rope_parameters"];
  } else if (doc.contains("rope_scaling") && doc["rope_scaling"].is_object()) {
    params = doc["rope_scaling"];
  }
  rope.theta = double_or(params, "rope_theta", double_or(doc, "rope_theta", 10000.0));
  rope.partial_rotary_factor =
      double_or(params, "partial_rotary_factor", double_or(doc, "partial_rotary_factor", 1.0));
  std::string type = "default";
  if (params.contains("rope_type")) type = params["rope_type"].get<std::string>();
  else if (params.contains("type")) type = params["type"].get<std::string>();
  if (type != "default" && type != "llama3") throw LoadError("unsupported rope_type " + type);
  rope.type = type;
  if (type == "llama3") {
    rope.factor = double_or(params, "factor", 8.0);
    rope.low_freq_factor = double_or(params, "low_freq_factor", 1.0);
    rope.high_freq_factor = double_or(params, "high_freq_factor", 4.0);
    rope.original_max_positions = int_or(params, "original_max_position_embeddings", 8192);
  }
}

std::vector<float> take(const TensorStore& store, const std::string& name,
                        std::initializer_list<std::int64_t> shape) {
  Tensor t = store.load(name);
  if (t.shape != std::vector<std::int64_t>(shape)) {
    std::string got;
    for (auto d : t.shape) got += std::to_string(d) + " ";
    throw LoadError("unexpected shape for " + name + ": " + got);
  }
  return std::move(t.data);
}

std::vector<float> take_opt(const TensorStore& store, const std::string& name, std::int64_t n) {
  if (!store.contains(name)) return {};
  return take(store, name, {n});
}

Linear make_linear(std::vector<float> w, std::vector<float> b, int in, int out) {
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = std::move(w);
  l.bias = std::move(b);
  return l;
}

// Conv1D weights in GPT-2 checkpoints are stored [in x out].
std::vector<float> transpose(const std::vector<float>& w, int rows, int cols) {
  std::vector<float> t(w.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) t[static_cast<std::size_t>(c) * rows + r] = w[static_cast<std::size_t>(r) * cols + c];
  return t;
}

std::vector<float> slice_rows(const std::vector<float>& w, int cols, int row_begin, int row_count) {
  const auto b = w.begin() + static_cast<std::ptrdiff_t>(row_begin) * cols;
  return {b, b + static_cast<std::ptrdiff_t>(row_count) * cols};
}

std::vector<float> slice_vec(const std::vector<float>& v, int begin, int count) {
  if (v.empty()) return {};
  return {v.begin() + begin, v.begin() + begin + count};
}

}  // namespace

TransformerConfig TransformerConfig::from_hf_json(const json& doc) {
  TransformerConfig c;
  c.model_type = doc.value("model_type", std::string());
  if (c.model_type == "gpt2") {
    c.family = Family::gpt2;
    c.vocab_size = doc.at("vocab_size").get<int>();
    c.hidden_size = doc.at("n_embd").get<int>();
    c.num_layers = doc.at("n_layer").get<int>();
    c.num_heads = doc.at("n_head").get<int>();
    c.num_kv_heads = c.num_heads;
    c.head_dim = c.hidden_size / c.num_heads;
    c.intermediate_size = int_or(doc, "n_inner", 4 * c.hidden_size);
    c.max_positions = doc.at("n_positions").get<int>();
    c.norm_eps = double_or(doc, "layer_norm_epsilon", 1e-5);
    c.activation = parse_activation(doc.value("activation_function", std::string("gelu_new")));
    c.tie_embeddings = true;
  } else if (c.model_type == "llama" || c.model_type == "mistral" || c.model_type == "qwen2" ||
             c.model_type == "phi3") {
    c.family = Family::llama;
    c.vocab_size = doc.at("vocab_size").get<int>();
    c.hidden_size = doc.at("hidden_size").get<int>();
    c.intermediate_size = doc.at("intermediate_size").get<int>();
    c.num_layers = doc.at("num_hidden_layers").get<int>();
    c.num_heads = doc.at("num_attention_heads").get<int>();
    c.num_kv_heads = int_or(doc, "num_key_value_heads", c.num_heads);
    c.head_dim = int_or(doc, "head_dim", c.hidden_size / c.num_heads);
    c.max_positions = int_or(doc, "max_position_embeddings", 2048);
    c.norm_eps = double_or(doc, "rms_norm_eps", 1e-6);
    c.activation = parse_activation(doc.value("hidden_act", std::string("silu")));
    c.tie_embeddings = doc.value("tie_word_embeddings", false);
    const bool windowed = c.model_type == "mistral" || doc.value("use_sliding_window", false);
    if (windowed) c.sliding_window = int_or(doc, "sliding_window", 0);
    parse_rope(doc, c.rope);
  } else {
    throw LoadError("unsupported model_type '" + c.model_type + "'");
  }
  c.validate();
  return c;
}

void TransformerConfig::validate() const {
  if (vocab_size <= 0 || hidden_size <= 0 || num_layers <= 0 || num_heads <= 0 || num_kv_heads <= 0 ||
      head_dim <= 0 || intermediate_size <= 0 || max_positions <= 0) {
    throw LoadError("transformer config has non-positive dimensions");
  }
  if (num_heads % num_kv_heads != 0) throw LoadError("num_heads must be a multiple of num_kv_heads");
  if (family == Family::gpt2 && head_dim * num_heads != hidden_size) throw LoadError("gpt2 head layout mismatch");
  const int rot = static_cast<int>(head_dim * rope.partial_rotary_factor);
  if (family == Family::llama && (rot % 2 != 0 || rot <= 0)) throw LoadError("rotary dimension must be even");
}

void Linear::apply(std::span<const double> x, std::span<double> y, std::size_t rows) const {
  const auto n_in = static_cast<std::size_t>(in);
  const auto n_out = static_cast<std::size_t>(out);
  for (std::size_t o = 0; o < n_out; ++o) {
    const float* w = weight.data() + o * n_in;
    const double b = bias.empty() ? 0.0 : static_cast<double>(bias[o]);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = x.data() + r * n_in;
      double acc = 0.0;
      for (std::size_t k = 0; k < n_in; ++k) acc += static_cast<double>(w[k]) * xr[k];
      y[r * n_out + o] = acc + b;
    }
  }
}

void Norm::apply(std::span<const double> x, std::span<double> y) const {
  const std::size_t n = weight.size();
  if (layer_norm) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = (x[i] - mean) * inv * weight[i] + (bias.empty() ? 0.0 : bias[i]);
    }
  } else {
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += x[i] * x[i];
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(n) + eps);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * inv * weight[i];
  }
}

Transformer::Transformer(TransformerConfig config, TransformerWeights weights)
    : config_(std::move(config)), weights_(std::move(weights)) {
  config_.validate();
  const auto hidden = static_cast<std::size_t>(config_.hidden_size);
  const auto vocab = static_cast<std::size_t>(config_.vocab_size);
  if (weights_.embed.size() != vocab * hidden) throw LoadError("embedding size mismatch");
  if (!config_.tie_embeddings && weights_.head.size() != vocab * hidden) throw LoadError("output head size mismatch");
  if (weights_.blocks.size() != static_cast<std::size_t>(config_.num_layers)) throw LoadError("block count mismatch");
  if (config_.family == Family::gpt2 &&
      weights_.positions.size() != static_cast<std::size_t>(config_.max_positions) * hidden) {
    throw LoadError("position embedding size mismatch");
  }

  if (config_.family == Family::llama) {
    const int rot = static_cast<int>(config_.head_dim * config_.rope.partial_rotary_factor);
    inv_freq_.resize(static_cast<std::size_t>(rot / 2));
    for (int i = 0; i < rot / 2; ++i) {
      inv_freq_[static_cast<std::size_t>(i)] = 1.0 / std::pow(config_.rope.theta, 2.0 * i / rot);
    }
    if (config_.rope.type == "llama3") {
      const auto& r = config_.rope;
      const double old_ctx = r.original_max_positions;
      const double low_wavelen = old_ctx / r.low_freq_factor;
      const double high_wavelen = old_ctx / r.high_freq_factor;
      for (auto& f : inv_freq_) {
        const double wavelen = 2.0 * std::numbers::pi / f;
        if (wavelen < high_wavelen) continue;
        if (wavelen > low_wavelen) {
          f /= r.factor;
        } else {
          const double smooth = (old_ctx / wavelen - r.low_freq_factor) / (r.high_freq_factor - r.low_freq_factor);
          f = (1.0 - smooth) * f / r.factor + smooth * f;
        }
      }
    }
  }
}

Transformer Transformer::load_hf_directory(const std::filesystem::path& dir) {
  std::ifstream in(dir / "config.json");
  if (!in) throw LoadError("missing config.json in " + dir.string());
  TransformerConfig cfg;
  try {
    cfg = TransformerConfig::from_hf_json(json::parse(in));
  } catch (const json::exception& e) {
    throw LoadError("invalid config.json in " + dir.string() + ": " + e.what());
  }
  const TensorStore store = TensorStore::open_directory(dir);
  const int d = cfg.hidden_size;
  const int v = cfg.vocab_size;
  const int ff = cfg.intermediate_size;
  const int q_dim = cfg.num_heads * cfg.head_dim;
  const int kv_dim = cfg.num_kv_heads * cfg.head_dim;

  TransformerWeights w;
  if (cfg.family == Family::gpt2) {
    const std::string p = store.contains("transformer.wte.weight") ? "transformer." : "";
    w.embed = take(store, p + "wte.weight", {v, d});
    w.positions = take(store, p + "wpe.weight", {cfg.max_positions, d});
    for (int i = 0; i < cfg.num_layers; ++i) {
      const std::string b = p + "h." + std::to_string(i) + ".";
      BlockWeights blk;
      blk.attn_norm = {take(store, b + "ln_1.weight", {d}), take(store, b + "ln_1.bias", {d}), true, cfg.norm_eps};
      blk.mlp_norm = {take(store, b + "ln_2.weight", {d}), take(store, b + "ln_2.bias", {d}), true, cfg.norm_eps};
      const auto qkv = transpose(take(store, b + "attn.c_attn.weight", {d, 3 * d}), d, 3 * d);
      const auto qkv_b = take(store, b + "attn.c_attn.bias", {3 * d});
      blk.q = make_linear(slice_rows(qkv, d, 0, d), slice_vec(qkv_b, 0, d), d, d);
      blk.k = make_linear(slice_rows(qkv, d, d, d), slice_vec(qkv_b, d, d), d, d);
      blk.v = make_linear(slice_rows(qkv, d, 2 * d, d), slice_vec(qkv_b, 2 * d, d), d, d);
      blk.o = make_linear(transpose(take(store, b + "attn.c_proj.weight", {d, d}), d, d),
                          take(store, b + "attn.c_proj.bias", {d}), d, d);
      blk.up = make_linear(transpose(take(store, b + "mlp.c_fc.weight", {d, ff}), d, ff),
                           take(store, b + "mlp.c_fc.bias", {ff}), d, ff);
      blk.down = make_linear(transpose(take(store, b + "mlp.c_proj.weight", {ff, d}), ff, d),
                             take(store, b + "mlp.c_proj.bias", {d}), ff, d);
      w.blocks.push_back(std::move(blk));
    }
    w.final_norm = {take(store, p + "ln_f.weight", {d}), take(store, p + "ln_f.bias", {d}), true, cfg.norm_eps};
  } else {
    w.embed = take(store, "model.embed_tokens.weight", {v, d});
    for (int i = 0; i < cfg.num_layers; ++i) {
      const std::string b = "model.layers." + std::to_string(i) + ".";
      BlockWeights blk;
      blk.attn_norm = {take(store, b + "input_layernorm.weight", {d}), {}, false, cfg.norm_eps};
      blk.mlp_norm = {take(store, b + "post_attention_layernorm.weight", {d}), {}, false, cfg.norm_eps};
      if (store.contains(b + "self_attn.qkv_proj.weight")) {
        const auto qkv = take(store, b + "self_attn.qkv_proj.weight", {q_dim + 2 * kv_dim, d});
        const auto qkv_b = take_opt(store, b + "self_attn.qkv_proj.bias", q_dim + 2 * kv_dim);
        blk.q = make_linear(slice_rows(qkv, d, 0, q_dim), slice_vec(qkv_b, 0, q_dim), d, q_dim);
        blk.k = make_linear(slice_rows(qkv, d, q_dim, kv_dim), slice_vec(qkv_b, q_dim, kv_dim), d, kv_dim);
        blk.v = make_linear(slice_rows(qkv, d, q_dim + kv_dim, kv_dim), slice_vec(qkv_b, q_dim + kv_dim, kv_dim),
                            d, kv_dim);
      } else {
        blk.q = make_linear(take(store, b + "self_attn.q_proj.weight", {q_dim, d}),
                            take_opt(store, b + "self_attn.q_proj.bias", q_dim), d, q_dim);
        blk.k = make_linear(take(store, b + "self_attn.k_proj.weight", {kv_dim, d}),
                            take_opt(store, b + "self_attn.k_proj.bias", kv_dim), d, kv_dim);
        blk.v = make_linear(take(store, b + "self_attn.v_proj.weight", {kv_dim, d}),
                            take_opt(store, b + "self_attn.v_proj.bias", kv_dim), d, kv_dim);
      }
      blk.o = make_linear(take(store, b + "self_attn.o_proj.weight", {d, q_dim}),
                          take_opt(store, b + "self_attn.o_proj.bias", d), q_dim, d);
      if (store.contains(b + "mlp.gate_up_proj.weight")) {
        const auto gu = take(store, b + "mlp.gate_up_proj.weight", {2 * ff, d});
        blk.gate = make_linear(slice_rows(gu, d, 0, ff), {}, d, ff);
        blk.up = make_linear(slice_rows(gu, d, ff, ff), {}, d, ff);
      } else {
        blk.gate = make_linear(take(store, b + "mlp.gate_proj.weight", {ff, d}), {}, d, ff);
        blk.up = make_linear(take(store, b + "mlp.up_proj.weight", {ff, d}), {}, d, ff);
      }
      blk.down = make_linear(take(store, b + "mlp.down_proj.weight", {d, ff}), {}, ff, d);
      w.blocks.push_back(std::move(blk));
    }
    w.final_norm = {take(store, "model.norm.weight", {d}), {}, false, cfg.norm_eps};
    if (!cfg.tie_embeddings) {
      if (store.contains("lm_head.weight")) {
        w.head = take(store, "lm_head.weight", {v, d});
      } else {
        cfg.tie_embeddings = true;
      }
    }
  }
  return Transformer(std::move(cfg), std::move(w));
}

KvCache Transformer::make_cache() const {
  KvCache c;
  c.keys.resize(static_cast<std::size_t>(config_.num_layers));
  c.values.resize(static_cast<std::size_t>(config_.num_layers));
  return c;
}

void Transformer::apply_rope(std::span<double> vec, int heads, std::size_t position) const {
  const auto hd = static_cast<std::size_t>(config_.head_dim);
  const std::size_t half = inv_freq_.size();
  for (int h = 0; h < heads; ++h) {
    double* x = vec.data() + static_cast<std::size_t>(h) * hd;
    for (std::size_t i = 0; i < half; ++i) {
      const double angle = static_cast<double>(position) * inv_freq_[i];
      const double c = std::cos(angle);
      const double s = std::sin(angle);
      const double a = x[i];
      const double b = x[i + half];
      x[i] = a * c - b * s;
      x[i + half] = b * c + a * s;
    }
  }
}

void Transformer::attention(const BlockWeights& w, std::size_t block, std::span<const double> normed,
                            std::size_t rows, KvCache& cache, std::span<double> out) const {
  const auto hd = static_cast<std::size_t>(config_.head_dim);
  const auto n_heads = static_cast<std::size_t>(config_.num_heads);
  const auto n_kv = static_cast<std::size_t>(config_.num_kv_heads);
  const std::size_t q_dim = n_heads * hd;
  const std::size_t kv_dim = n_kv * hd;
  const std::size_t group = n_heads / n_kv;
  const std::size_t past = cache.length;

  std::vector<double> q(rows * q_dim), k(rows * kv_dim), v(rows * kv_dim);
  w.q.apply(normed, q, rows);
  w.k.apply(normed, k, rows);
  w.v.apply(normed, v, rows);
  if (config_.family == Family::llama) {
    for (std::size_t r = 0; r < rows; ++r) {
      apply_rope({q.data() + r * q_dim, q_dim}, config_.num_heads, past + r);
      apply_rope({k.data() + r * kv_dim, kv_dim}, config_.num_kv_heads, past + r);
    }
  }
  auto& keys = cache.keys[block];
  auto& values = cache.values[block];
  keys.insert(keys.end(), k.begin(), k.end());
  values.insert(values.end(), v.begin(), v.end());

  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<double> ctx(rows * q_dim, 0.0);
  std::vector<double> scores;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t pos = past + r;
    std::size_t first = 0;
    if (config_.sliding_window > 0 && pos + 1 > static_cast<std::size_t>(config_.sliding_window)) {
      first = pos + 1 - static_cast<std::size_t>(config_.sliding_window);
    }
    scores.resize(pos + 1);
    for (std::size_t h = 0; h < n_heads; ++h) {
      const std::size_t kvh = h / group;
      const double* qh = q.data() + r * q_dim + h * hd;
      double max_score = -std::numeric_limits<double>::infinity();
      for (std::size_t j = first; j <= pos; ++j) {
        const double* kj = keys.data() + j * kv_dim + kvh * hd;
        double dot = 0.0;
        for (std::size_t i = 0; i < hd; ++i) dot += qh[i] * kj[i];
        scores[j] = dot * scale;
        max_score = std::max(max_score, scores[j]);
      }
      double denom = 0.0;
      for (std::size_t j = first; j <= pos; ++j) {
        scores[j] = std::exp(scores[j] - max_score);
        denom += scores[j];
      }
      double* oh = ctx.data() + r * q_dim + h * hd;
      for (std::size_t j = first; j <= pos; ++j) {
        const double p = scores[j] / denom;
        const double* vj = values.data() + j * kv_dim + kvh * hd;
        for (std::size_t i = 0; i < hd; ++i) oh[i] += p * vj[i];
      }
    }
  }
  w.o.apply(ctx, out, rows);
}

void Transformer::mlp(const BlockWeights& w, std::span<const double> normed, std::size_t rows,
                      std::span<double> out) const {
  const auto ff = static_cast<std::size_t>(config_.intermediate_size);
  std::vector<double> up(rows * ff);
  w.up.apply(normed, up, rows);
  if (config_.family == Family::llama) {
    std::vector<double> gate(rows * ff);
    w.gate.apply(normed, gate, rows);
    for (std::size_t i = 0; i < up.size(); ++i) up[i] *= activate(config_.activation, gate[i]);
  } else {
    for (auto& x : up) x = activate(config_.activation, x);
  }
  w.down.apply(up, out, rows);
}

BlockStates Transformer::forward(std::span<const TokenId> ids, KvCache& cache, bool capture_all) const {
  const auto d = static_cast<std::size_t>(config_.hidden_size);
  const std::size_t rows = ids.size();
  if (cache.length + rows > static_cast<std::size_t>(config_.max_positions)) {
    throw InvalidArgument("sequence of " + std::to_string(cache.length + rows) +
                          " tokens exceeds the context window of " + std::to_string(config_.max_positions));
  }
  std::vector<double> x(rows * d);
  for (std::size_t r = 0; r < rows; ++r) {
    const TokenId id = ids[r];
    if (id < 0 || id >= config_.vocab_size) throw InvalidArgument("token id out of range: " + std::to_string(id));
    const float* e = weights_.embed.data() + static_cast<std::size_t>(id) * d;
    for (std::size_t i = 0; i < d; ++i) x[r * d + i] = e[i];
    if (config_.family == Family::gpt2) {
      const float* p = weights_.positions.data() + (cache.length + r) * d;
      for (std::size_t i = 0; i < d; ++i) x[r * d + i] += p[i];
    }
  }

  BlockStates result;
  result.positions = rows;
  result.hidden = config_.hidden_size;
  std::vector<double> normed(rows * d), delta(rows * d);
  for (std::size_t b = 0; b < weights_.blocks.size(); ++b) {
    const BlockWeights& w = weights_.blocks[b];
    for (std::size_t r = 0; r < rows; ++r) {
      w.attn_norm.apply({x.data() + r * d, d}, {normed.data() + r * d, d});
    }
    attention(w, b, normed, rows, cache, delta);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += delta[i];
    for (std::size_t r = 0; r < rows; ++r) {
      w.mlp_norm.apply({x.data() + r * d, d}, {normed.data() + r * d, d});
    }
    mlp(w, normed, rows, delta);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += delta[i];
    if (capture_all || b + 1 == weights_.blocks.size()) result.states.push_back(x);
  }
  cache.length += rows;
  return result;
}

void Transformer::apply_final_norm(std::span<const double> hidden, std::span<double> out) const {
  weights_.final_norm.apply(hidden, out);
}

void Transformer::head_logits(std::span<const double> hidden, std::span<double> out) const {
  const auto d = static_cast<std::size_t>(config_.hidden_size);
  const std::vector<float>& head = config_.tie_embeddings ? weights_.embed : weights_.head;
  for (std::size_t v = 0; v < static_cast<std::size_t>(config_.vocab_size); ++v) {
    const float* row = head.data() + v * d;
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) acc += static_cast<double>(row[i]) * hidden[i];
    out[v] = acc;
  }
}

std::uint64_t Transformer::parameter_checksum() const {
  // FNV-1a over the raw float bytes.
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const std::vector<float>& v) {
    for (float f : v) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      for (int i = 0; i < 4; ++i) {
        h ^= (bits >> (8 * i)) & 0xffu;
        h *= 1099511628211ULL;
      }
    }
  };
  mix(weights_.embed);
  mix(weights_.positions);
  for (const auto& b : weights_.blocks) {
    for (const Linear* l : {&b.q, &b.k, &b.v, &b.o, &b.gate, &b.up, &b.down}) {
      mix(l->weight);
      mix(l->bias);
    }
    mix(b.attn_norm.weight);
    mix(b.attn_norm.bias);
    mix(b.mlp_norm.weight);
    mix(b.mlp_norm.bias);
  }
  mix(weights_.final_norm.weight);
  mix(weights_.final_norm.bias);
  mix(weights_.head);
  return h;
}

}  // namespace layerinfo::model
