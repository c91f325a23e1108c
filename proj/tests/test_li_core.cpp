#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "layerinfo/error.hpp"
#include "layerinfo/li/li_core.hpp"
#include "layerinfo/oracle/desk_oracle.hpp"
#include "test_util.hpp"

using namespace layerinfo;

namespace {

model::LayerLogProbs matrix(std::vector<int> layers, std::size_t t, std::vector<double> v) {
  model::LayerLogProbs lp;
  lp.layer_ids = std::move(layers);
  lp.target_len = t;
  lp.values = std::move(v);
  return lp;
}

data::Example example(std::string context, std::string question) {
  data::Example ex;
  ex.example_id = "ex";
  ex.context = std::move(context);
  ex.question = std::move(question);
  return ex;
}

li::LIProfile random_profile(std::mt19937_64& rng, std::size_t layers) {
  std::uniform_real_distribution<double> u(0.0, 6.0);
  std::vector<int> ids(layers);
  std::iota(ids.begin(), ids.end(), 1);
  std::vector<double> hn(layers), hc(layers);
  for (std::size_t i = 0; i < layers; ++i) {
    hn[i] = u(rng);
    hc[i] = u(rng);
  }
  return li::make_profile("r", "none", ids, hn, hc, 5);
}

}  // namespace

TEST(LayerEntropies, SingleHalfProbabilityTokenIsOneBit) {
  EXPECT_DOUBLE_EQ(li::layer_entropies(matrix({1}, 1, {-1.0}))[0], 1.0);
}

TEST(LayerEntropies, UniformDistributionGivesLogV) {
  const double v = 64;
  const auto h = li::layer_entropies(matrix({1, 2}, 3, std::vector<double>(6, -std::log2(v))));
  EXPECT_DOUBLE_EQ(h[0], std::log2(v));
  EXPECT_DOUBLE_EQ(h[1], std::log2(v));
}

TEST(LayerEntropies, RandomMatrixMatchesHandSummation) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-8.0, 0.0);
  std::vector<double> v(12);
  for (auto& x : v) x = u(rng);
  const auto h = li::layer_entropies(matrix({1, 2, 3}, 4, v));
  for (std::size_t r = 0; r < 3; ++r) {
    // Sum in reverse order to avoid sharing the accumulation path.
    long double s = 0;
    for (int t = 3; t >= 0; --t) s += v[r * 4 + static_cast<std::size_t>(t)];
    EXPECT_NEAR(h[r], static_cast<double>(-s / 4), 1e-12);
  }
}

TEST(LayerEntropies, RejectsEmptyAndInvalidInput) {
  EXPECT_THROW(li::layer_entropies(matrix({1}, 0, {})), InvalidArgument);
  EXPECT_THROW(li::layer_entropies(matrix({1}, 1, {0.5})), InvalidArgument);
  EXPECT_THROW(li::layer_entropies(matrix({1}, 1, {-INFINITY})), InvalidArgument);
}

TEST(LIProfile, EmptyContextGivesZeroEverywhere) {
  const auto m = model::load_model("tiny-lm");
  const auto pair = data::render_pair(example("", "what is the name of the dog?"), data::PromptTemplate::binary(), m);
  const auto p = li::li_profile(m, pair);
  for (double v : p.i_layer) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(p.li_total, 0.0);
}

TEST(LIProfile, ExactlyTwoForwardPasses) {
  const auto m = model::load_model("tiny-lm");
  const auto pair = data::render_pair(example("the dog is called rex.", "what is the dog called?"),
                                      data::PromptTemplate::none(), m);
  m.reset_counter();
  li::li_profile(m, pair);
  EXPECT_EQ(m.counter().forward_passes, 2u);
  EXPECT_EQ(m.counter().tokens_processed, pair.null_pass.size() + pair.ctx_pass.size());
}

TEST(LIProfile, DefinitionalIdentities) {
  const auto m = model::load_model("tiny-lm");
  const auto pair = data::render_pair(example("the dog is called rex.", "what is the dog called?"),
                                      data::PromptTemplate::open_ended(), m);
  const auto p = li::li_profile(m, pair);
  double sum = 0.0;
  for (std::size_t i = 0; i < p.i_layer.size(); ++i) {
    EXPECT_EQ(p.i_layer[i], p.h_null[i] - p.h_ctx[i]);
    EXPECT_GE(p.h_null[i], 0.0);
    EXPECT_GE(p.h_ctx[i], 0.0);
    EXPECT_LE(std::abs(p.i_layer[i]), std::log2(m.vocab_size()));
    sum += p.i_layer[i];
  }
  EXPECT_EQ(p.li_total, sum);
  EXPECT_EQ(p.target_len, pair.target_span_null.size());
}

TEST(LIProfile, SpanMismatchIsRejected) {
  const auto m = model::load_model("tiny-lm");
  auto pair = data::render_pair(example("some context.", "a question?"), data::PromptTemplate::none(), m);
  pair.ctx_pass.ids.back() = pair.ctx_pass.ids.back() == 5 ? 6 : 5;
  EXPECT_THROW(li::li_profile(m, pair), SpanMismatch);
}

TEST(DatasetLI, MeanOfTotals) {
  li::LIProfile a, b;
  a.li_total = 0.8;
  EXPECT_DOUBLE_EQ(li::dataset_li(std::vector<li::LIProfile>{a}).mean_li, 0.8);
  a.li_total = 0.5;
  b.li_total = -0.5;
  const auto s = li::dataset_li(std::vector<li::LIProfile>{a, b});
  EXPECT_DOUBLE_EQ(s.mean_li, 0.0);
  EXPECT_EQ(s.count, 2u);
  EXPECT_THROW(li::dataset_li(std::vector<li::LIProfile>{}), InsufficientData);
}

TEST(DatasetLI, MatchesReorderedSummation) {
  std::mt19937_64 rng(1);
  std::vector<li::LIProfile> ps;
  for (int i = 0; i < 100; ++i) ps.push_back(random_profile(rng, 4));
  long double s = 0;
  for (auto it = ps.rbegin(); it != ps.rend(); ++it) s += it->li_total;
  EXPECT_NEAR(li::dataset_li(ps).mean_li, static_cast<double>(s / 100), 1e-9);
}

TEST(CumulativeLI, PrefixSums) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    const auto p = random_profile(rng, 1 + rng() % 6);
    EXPECT_EQ(li::cumulative_li(p, p.layer_ids.front()), p.i_layer.front());
    EXPECT_EQ(li::cumulative_li(p, p.layer_ids.back()), p.li_total);
    const auto cum = li::cumulative_profile(p);
    EXPECT_EQ(cum.back(), p.li_total);
    for (std::size_t l = 1; l < cum.size(); ++l) EXPECT_NEAR(cum[l] - cum[l - 1], p.i_layer[l], 1e-12);
  }
  EXPECT_THROW(li::cumulative_li(random_profile(rng, 2), 7), InvalidArgument);
}

TEST(PviAtLayer, SelectsSingleLayers) {
  std::mt19937_64 rng(4);
  const auto p = random_profile(rng, 5);
  EXPECT_EQ(li::pvi_at_layer(p, li::LayerChoice::last()), p.i_layer.back());
  EXPECT_EQ(li::pvi_at_layer(p, li::LayerChoice::first()), p.i_layer.front());
  EXPECT_EQ(li::pvi_at_layer(p, li::LayerChoice::at(3)), p.i_layer[2]);
  EXPECT_THROW(li::pvi_at_layer(p, li::LayerChoice::at(9)), InvalidArgument);
}

TEST(PviAtLayer, FirstLayerOnNullContextIsZero) {
  const auto m = model::load_model("tiny-lm");
  const auto p = li::li_profile(m, data::render_pair(example("", "who?"), data::PromptTemplate::none(), m));
  EXPECT_EQ(li::pvi_at_layer(p, li::LayerChoice::first()), 0.0);
}

TEST(LIProfile, NotAssumedMonotoneAcrossLayers) {
  // Sanity only: the profile is computed for every layer without ordering
  // constraints; a 3-layer model exposes three independent gains.
  const auto m = model::load_model((testutil::data_dir() / "models" / "tiny-llama").string());
  const auto pair = data::render_pair(example("The queen lived by the river.", "Where did the queen live?"),
                                      data::PromptTemplate::none(), m);
  const auto p = li::li_profile(m, pair);
  EXPECT_EQ(p.i_layer.size(), 3u);
}
