#include "layerinfo/oracle/desk_oracle.hpp"

#include <cmath>
#include <memory>

#include "layerinfo/error.hpp"

namespace layerinfo::oracle {
namespace {

using model::TokenId;
using Matrix = std::vector<std::vector<double>>;  // [position][feature]

// Deterministic parameter stream, independent of the standard library's
// distribution implementations.
class ParamStream {
 public:
  explicit ParamStream(std::uint64_t seed) : state_(seed) {}

  // Uniform in [-a, a).
  float uniform(double a) {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    const double u = static_cast<double>(z >> 11) * 0x1.0p-53;
    return static_cast<float>((2.0 * u - 1.0) * a);
  }

  std::vector<float> fill(std::size_t n, double a) {
    std::vector<float> v(n);
    for (auto& x : v) x = uniform(a);
    return v;
  }

  std::vector<float> around_one(std::size_t n, double a) {
    std::vector<float> v(n);
    for (auto& x : v) x = 1.0f + uniform(a);
    return v;
  }

 private:
  std::uint64_t state_;
};

model::Linear linear(ParamStream& ps, int in, int out, double gain) {
  model::Linear l;
  l.in = in;
  l.out = out;
  l.weight = ps.fill(static_cast<std::size_t>(in) * static_cast<std::size_t>(out),
                     gain * std::sqrt(3.0 / in));
  return l;
}

double dot(const float* w, const std::vector<double>& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += static_cast<double>(w[i]) * x[i];
  return s;
}

std::vector<double> matvec(const model::Linear& l, const std::vector<double>& x) {
  std::vector<double> y(static_cast<std::size_t>(l.out));
  for (int o = 0; o < l.out; ++o) y[static_cast<std::size_t>(o)] = dot(l.weight.data() + o * l.in, x);
  return y;
}

std::vector<double> rms(const model::Norm& n, const std::vector<double>& x) {
  double mean_sq = 0.0;
  for (double v : x) mean_sq += v * v;
  mean_sq /= static_cast<double>(x.size());
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = n.weight[i] * (x[i] / std::sqrt(mean_sq + n.eps));
  return y;
}

// Rotates the two halves of each head by position * theta^(-2i/head_dim).
void rotate(std::vector<double>& v, int heads, int head_dim, double theta, std::size_t position) {
  const int half = head_dim / 2;
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::pow(theta, -2.0 * i / head_dim);
      const double angle = freq * static_cast<double>(position);
      const std::size_t a = static_cast<std::size_t>(h * head_dim + i);
      const std::size_t b = a + static_cast<std::size_t>(half);
      const double x1 = v[a];
      const double x2 = v[b];
      v[a] = x1 * std::cos(angle) - x2 * std::sin(angle);
      v[b] = x2 * std::cos(angle) + x1 * std::sin(angle);
    }
  }
}

const model::Transformer& checked(const model::ModelHandle& m) {
  const auto& c = m.transformer().config();
  if (c.family != model::Family::llama || c.rope.type != "default" || c.rope.partial_rotary_factor != 1.0 ||
      c.sliding_window != 0 || c.activation != model::Activation::silu) {
    throw InvalidArgument("brute-force oracle supports only toy-layout models");
  }
  return m.transformer();
}

// Hidden states after every block: result[b][position], b = 0 is the
// embedding output.
std::vector<Matrix> all_hidden(const model::Transformer& tf, const std::vector<TokenId>& ids) {
  const auto& c = tf.config();
  const auto& w = tf.weights();
  const std::size_t d = static_cast<std::size_t>(c.hidden_size);
  const std::size_t n = ids.size();
  const int group = c.num_heads / c.num_kv_heads;

  std::vector<Matrix> out;
  Matrix x(n, std::vector<double>(d));
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < d; ++i) x[t][i] = w.embed[static_cast<std::size_t>(ids[t]) * d + i];
  }
  out.push_back(x);

  for (const auto& blk : w.blocks) {
    Matrix q(n), k(n), v(n);
    for (std::size_t t = 0; t < n; ++t) {
      const auto a = rms(blk.attn_norm, x[t]);
      q[t] = matvec(blk.q, a);
      k[t] = matvec(blk.k, a);
      v[t] = matvec(blk.v, a);
      rotate(q[t], c.num_heads, c.head_dim, c.rope.theta, t);
      rotate(k[t], c.num_kv_heads, c.head_dim, c.rope.theta, t);
    }
    Matrix next(n);
    for (std::size_t t = 0; t < n; ++t) {
      std::vector<double> heads_out(static_cast<std::size_t>(c.num_heads * c.head_dim), 0.0);
      for (int h = 0; h < c.num_heads; ++h) {
        const int kh = h / group;
        std::vector<double> weights(t + 1);
        double total = 0.0;
        for (std::size_t j = 0; j <= t; ++j) {
          double s = 0.0;
          for (int i = 0; i < c.head_dim; ++i) {
            s += q[t][static_cast<std::size_t>(h * c.head_dim + i)] * k[j][static_cast<std::size_t>(kh * c.head_dim + i)];
          }
          weights[j] = std::exp(s / std::sqrt(static_cast<double>(c.head_dim)));
          total += weights[j];
        }
        for (std::size_t j = 0; j <= t; ++j) {
          for (int i = 0; i < c.head_dim; ++i) {
            heads_out[static_cast<std::size_t>(h * c.head_dim + i)] +=
                weights[j] / total * v[j][static_cast<std::size_t>(kh * c.head_dim + i)];
          }
        }
      }
      const auto attn = matvec(blk.o, heads_out);
      std::vector<double> mid(d);
      for (std::size_t i = 0; i < d; ++i) mid[i] = x[t][i] + attn[i];
      const auto m = rms(blk.mlp_norm, mid);
      const auto g = matvec(blk.gate, m);
      const auto u = matvec(blk.up, m);
      std::vector<double> act(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) act[i] = g[i] / (1.0 + std::exp(-g[i])) * u[i];
      const auto down = matvec(blk.down, act);
      next[t].resize(d);
      for (std::size_t i = 0; i < d; ++i) next[t][i] = mid[i] + down[i];
    }
    x = std::move(next);
    out.push_back(x);
  }
  return out;
}

std::vector<double> softmax_of_layer(const model::ModelHandle& m, const std::vector<double>& hidden, int layer) {
  const auto& tf = m.transformer();
  const auto& c = tf.config();
  const auto& w = tf.weights();
  const bool norm = m.head_norm_policy() == model::HeadNormPolicy::apply_final_norm || layer == c.num_layers;
  const auto h = norm ? rms(w.final_norm, hidden) : hidden;
  const auto& head = c.tie_embeddings ? w.embed : w.head;
  std::vector<double> p(static_cast<std::size_t>(c.vocab_size));
  for (int tok = 0; tok < c.vocab_size; ++tok) p[static_cast<std::size_t>(tok)] = dot(head.data() + tok * c.hidden_size, h);
  double mx = p[0];
  for (double z : p) mx = z > mx ? z : mx;
  double total = 0.0;
  for (auto& z : p) total += (z = std::exp(z - mx));
  for (auto& z : p) z /= total;
  return p;
}

double mean_surprisal(const std::vector<double>& logprobs) {
  double s = 0.0;
  for (double v : logprobs) s -= v;
  return s / static_cast<double>(logprobs.size());
}

}  // namespace

model::ModelHandle build_toy_model(const ToyModelSpec& spec, model::HeadNormPolicy policy, std::string model_id) {
  if (spec.num_layers < 1 || spec.num_layers > 2) throw InvalidArgument("toy model needs 1 or 2 layers");
  if (spec.vocab < 8 || spec.vocab > 64) throw InvalidArgument("toy vocabulary must be in [8, 64]");
  if (spec.width < 4 || spec.width > 32 || spec.width % 2 != 0) {
    throw InvalidArgument("toy width must be even and in [4, 32]");
  }
  model::TransformerConfig c;
  c.model_type = "toy";
  c.family = model::Family::llama;
  c.activation = model::Activation::silu;
  c.vocab_size = spec.vocab;
  c.hidden_size = spec.width;
  c.num_heads = spec.width % 8 == 0 ? spec.width / 8 : 1;
  c.num_kv_heads = c.num_heads;
  c.head_dim = spec.width / c.num_heads;
  c.intermediate_size = 2 * spec.width;
  c.num_layers = spec.num_layers;
  c.max_positions = 4096;
  c.norm_eps = 1e-5;

  const int d = spec.width;
  ParamStream ps(spec.seed);
  model::TransformerWeights w;
  w.embed = ps.fill(static_cast<std::size_t>(spec.vocab) * static_cast<std::size_t>(d), std::sqrt(3.0));
  for (int b = 0; b < spec.num_layers; ++b) {
    model::BlockWeights blk;
    blk.attn_norm = {ps.around_one(static_cast<std::size_t>(d), 0.2), {}, false, c.norm_eps};
    blk.q = linear(ps, d, d, 2.0);
    blk.k = linear(ps, d, d, 2.0);
    blk.v = linear(ps, d, d, 1.0);
    blk.o = linear(ps, d, d, 1.0);
    blk.mlp_norm = {ps.around_one(static_cast<std::size_t>(d), 0.2), {}, false, c.norm_eps};
    blk.gate = linear(ps, d, c.intermediate_size, 1.5);
    blk.up = linear(ps, d, c.intermediate_size, 1.5);
    blk.down = linear(ps, c.intermediate_size, d, 1.0);
    w.blocks.push_back(std::move(blk));
  }
  w.final_norm = {ps.around_one(static_cast<std::size_t>(d), 0.2), {}, false, c.norm_eps};
  w.head = ps.fill(static_cast<std::size_t>(spec.vocab) * static_cast<std::size_t>(d), 1.5 * std::sqrt(3.0 / d));

  auto tok = std::make_shared<model::CharTokenizer>(spec.vocab);
  tok->set_bos(model::CharTokenizer::kBos);
  tok->set_eos(model::CharTokenizer::kEos);
  auto tf = std::make_shared<model::Transformer>(std::move(c), std::move(w));
  if (model_id.empty()) {
    model_id = "toy:" + std::to_string(spec.num_layers) + ":" + std::to_string(spec.vocab) + ":" +
               std::to_string(spec.width) + ":" + std::to_string(spec.seed);
  }
  std::vector<int> layers;
  for (int i = 1; i <= spec.num_layers; ++i) layers.push_back(i);
  return model::ModelHandle(std::move(model_id), std::move(tf), std::move(tok), std::move(layers), policy);
}

std::vector<std::vector<double>> brute_force_distributions(const model::ModelHandle& model,
                                                           const std::vector<TokenId>& ids, std::size_t position) {
  if (position >= ids.size()) throw InvalidArgument("position outside the sequence");
  const std::vector<TokenId> prefix(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(position) + 1);
  const auto hidden = all_hidden(checked(model), prefix);
  std::vector<std::vector<double>> out;
  for (int layer : model.layer_selection()) {
    out.push_back(softmax_of_layer(model, hidden[static_cast<std::size_t>(layer)][position], layer));
  }
  return out;
}

std::vector<std::vector<double>> brute_force_logprobs(const model::ModelHandle& model,
                                                      const std::vector<TokenId>& ids, std::size_t target_start) {
  if (target_start == 0 || target_start >= ids.size()) throw InvalidArgument("target_start out of range");
  const auto hidden = all_hidden(checked(model), ids);
  std::vector<std::vector<double>> out;
  for (int layer : model.layer_selection()) {
    std::vector<double> row;
    for (std::size_t t = target_start; t < ids.size(); ++t) {
      const auto p = softmax_of_layer(model, hidden[static_cast<std::size_t>(layer)][t - 1], layer);
      row.push_back(std::log2(p[static_cast<std::size_t>(ids[t])]));
    }
    out.push_back(std::move(row));
  }
  return out;
}

li::LIProfile brute_force_li(const model::ModelHandle& model, const data::RenderedPair& pair) {
  const auto null_lp = brute_force_logprobs(model, pair.null_pass.ids, pair.target_span_null.begin);
  const auto ctx_lp = brute_force_logprobs(model, pair.ctx_pass.ids, pair.target_span_ctx.begin);
  li::LIProfile p;
  p.example_id = pair.example_id;
  p.template_id = pair.template_id;
  p.layer_ids = model.layer_selection();
  p.target_len = pair.target_span_null.size();
  for (std::size_t r = 0; r < p.layer_ids.size(); ++r) {
    p.h_null.push_back(mean_surprisal(null_lp[r]));
    p.h_ctx.push_back(mean_surprisal(ctx_lp[r]));
    p.i_layer.push_back(p.h_null.back() - p.h_ctx.back());
  }
  for (double v : p.i_layer) p.li_total += v;
  return p;
}

}  // namespace layerinfo::oracle
