#include "layerinfo/li/li_core.hpp"

#include <algorithm>
#include <cmath>

#include "layerinfo/error.hpp"

namespace layerinfo::li {
namespace {

std::size_t row_of(const LIProfile& p, int layer) {
  const auto it = std::find(p.layer_ids.begin(), p.layer_ids.end(), layer);
  if (it == p.layer_ids.end()) {
    throw InvalidArgument("layer " + std::to_string(layer) + " is not in the profile of " + p.example_id);
  }
  return static_cast<std::size_t>(it - p.layer_ids.begin());
}

}  // namespace

std::vector<double> layer_entropies(const model::LayerLogProbs& logprobs) {
  if (logprobs.target_len == 0) throw InvalidArgument("empty target span");
  if (logprobs.values.size() != logprobs.rows() * logprobs.target_len) {
    throw InvalidArgument("log-prob matrix shape does not match its layer count and target length");
  }
  std::vector<double> h(logprobs.rows());
  for (std::size_t r = 0; r < logprobs.rows(); ++r) {
    double sum = 0.0;
    for (double v : logprobs.row(r)) {
      if (!std::isfinite(v) || v > 0.0) throw InvalidArgument("log-probabilities must be finite and <= 0");
      sum += v;
    }
    h[r] = -sum / static_cast<double>(logprobs.target_len);
  }
  return h;
}

LIProfile make_profile(std::string example_id, std::string template_id, std::vector<int> layer_ids,
                       std::vector<double> h_null, std::vector<double> h_ctx, std::size_t target_len) {
  if (h_null.size() != layer_ids.size() || h_ctx.size() != layer_ids.size()) {
    throw InvalidArgument("entropy vectors do not match the layer count");
  }
  LIProfile p;
  p.example_id = std::move(example_id);
  p.template_id = std::move(template_id);
  p.layer_ids = std::move(layer_ids);
  p.h_null = std::move(h_null);
  p.h_ctx = std::move(h_ctx);
  p.target_len = target_len;
  p.i_layer.resize(p.layer_ids.size());
  double total = 0.0;
  for (std::size_t r = 0; r < p.layer_ids.size(); ++r) {
    p.i_layer[r] = p.h_null[r] - p.h_ctx[r];
    total += p.i_layer[r];
  }
  p.li_total = total;
  return p;
}

LIProfile li_profile(const model::ModelHandle& model, const data::RenderedPair& pair) {
  const auto& sn = pair.target_span_null;
  const auto& sc = pair.target_span_ctx;
  if (sn.end != pair.null_pass.size() || sc.end != pair.ctx_pass.size()) {
    throw InvalidArgument("scored span must run to the end of each pass");
  }
  if (sn.size() == 0 || sn.size() != sc.size() ||
      !std::equal(pair.null_pass.ids.begin() + static_cast<std::ptrdiff_t>(sn.begin), pair.null_pass.ids.end(),
                  pair.ctx_pass.ids.begin() + static_cast<std::ptrdiff_t>(sc.begin))) {
    throw SpanMismatch("example " + pair.example_id + ": scored tokens differ between passes");
  }
  const model::LayerLogProbs null_lp = model::score_span(model, pair.null_pass, sn.begin);
  const model::LayerLogProbs ctx_lp = model::score_span(model, pair.ctx_pass, sc.begin);
  return make_profile(pair.example_id, pair.template_id, null_lp.layer_ids, layer_entropies(null_lp),
                      layer_entropies(ctx_lp), sn.size());
}

DatasetLIScore dataset_li(std::span<const LIProfile> profiles) {
  if (profiles.empty()) throw InsufficientData("no profiles to aggregate");
  DatasetLIScore s;
  double sum = 0.0;
  for (const auto& p : profiles) {
    s.per_example.emplace_back(p.example_id, p.li_total);
    sum += p.li_total;
  }
  s.count = profiles.size();
  s.mean_li = sum / static_cast<double>(s.count);
  return s;
}

double cumulative_li(const LIProfile& profile, int upto_layer) {
  const std::size_t last = row_of(profile, upto_layer);
  double total = 0.0;
  for (std::size_t r = 0; r <= last; ++r) total += profile.i_layer[r];
  return total;
}

std::vector<double> cumulative_profile(const LIProfile& profile) {
  std::vector<double> out(profile.i_layer.size());
  double total = 0.0;
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = total += profile.i_layer[r];
  return out;
}

double pvi_at_layer(const LIProfile& profile, LayerChoice which) {
  if (profile.layer_ids.empty()) throw InvalidArgument("empty profile");
  switch (which.kind) {
    case LayerChoice::Kind::first: return profile.i_layer.front();
    case LayerChoice::Kind::last: return profile.i_layer.back();
    case LayerChoice::Kind::index: return profile.i_layer[row_of(profile, which.layer)];
  }
  return profile.i_layer.back();
}

}  // namespace layerinfo::li
