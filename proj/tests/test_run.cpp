#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "layerinfo/error.hpp"
#include "layerinfo/run/cache.hpp"
#include "layerinfo/run/config.hpp"
#include "layerinfo/run/experiment.hpp"
#include "layerinfo/run/figures.hpp"
#include "test_util.hpp"

using namespace layerinfo;
using namespace layerinfo::run;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path four_examples(const std::filesystem::path& dir) {
  const auto path = dir / "four.jsonl";
  std::ofstream out(path);
  out << R"({"id":"a1","context":"the dog is called rex.","question":"what is the dog called?","answers":["rex"],"answerable":true})"
      << "\n"
      << R"({"id":"a2","context":"the sky was grey all day.","question":"what colour was the sky?","answers":["grey"],"answerable":true})"
      << "\n"
      << R"({"id":"u1","context":"the dog is called rex.","question":"how old is the cat?","answers":[],"answerable":false})"
      << "\n"
      << R"({"id":"u2","context":"the sky was grey all day.","question":"who built the bridge?","answers":[],"answerable":false})"
      << "\n";
  return path;
}

RunConfig toy_config(const std::filesystem::path& dir) {
  RunConfig c;
  c.dataset_path = four_examples(dir).string();
  c.dataset_format = "generic_jsonl";
  c.methods = {"li", "pvi_last"};
  c.templates = {data::PromptTemplate::none(), data::PromptTemplate::binary()};
  c.output_dir = (dir / "out").string();
  return c;
}

}  // namespace

TEST(RunConfig, RejectsBadFields) {
  RunConfig c;
  c.dataset_path = "x";
  EXPECT_NO_THROW(c.validate());
  auto bad = c;
  bad.methods.clear();
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = c;
  bad.methods = {"nope"};
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = c;
  bad.templates.clear();
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = c;
  bad.reject_fractions = {1.0};
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = c;
  bad.equivalence = "http_judge";
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(RunConfig, JsonRoundTripAndHash) {
  RunConfig c;
  c.dataset_path = "d.jsonl";
  c.templates = {data::PromptTemplate::binary(),
                 data::PromptTemplate::custom("mine", "Say YES.", data::Placement::after_question)};
  c.layers = {1, 2};
  c.seed = 17;
  const auto back = RunConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.hash(), c.hash());
  auto moved = c;
  moved.output_dir = "elsewhere";
  moved.use_cache = false;
  EXPECT_EQ(moved.hash(), c.hash());
  auto other = c;
  other.seed = 18;
  EXPECT_NE(other.hash(), c.hash());
  EXPECT_THROW(RunConfig::from_json(nlohmann::json::array()), InvalidArgument);
}

TEST(RunConfig, PartialFileTakesDefaults) {
  const auto c = RunConfig::from_json({{"dataset_path", "d"}, {"templates", {"binary"}}});
  EXPECT_EQ(c.model_id, "tiny-lm");
  ASSERT_EQ(c.templates.size(), 1u);
  EXPECT_EQ(c.templates[0].instruction_text, "Is this answerable?");
  EXPECT_EQ(c.p_true_k, 10);
}

TEST(Cache, ProfileRoundTripIsBitExact) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3, 9);
  const auto p = li::make_profile("ex\"1", "binary", {1, 2, 3}, {u(rng), u(rng), u(rng)}, {u(rng), u(rng), u(rng)}, 7);
  const auto dir = testutil::scratch("cache_roundtrip");
  ScoreCache cache(dir, true);
  const std::string key = sha256_hex("k");
  cache.put(key, to_json(p));
  const auto hit = cache.get(key);
  ASSERT_TRUE(hit);
  EXPECT_EQ(profile_from_json(*hit), p);
  EXPECT_EQ(cache.hits(), 1u);
  EXPECT_FALSE(cache.get(sha256_hex("other")));
  EXPECT_EQ(cache.misses(), 1u);

  ScoreCache off(dir, false);
  EXPECT_FALSE(off.get(key));
}

TEST(Cache, KeyDependsOnEveryField) {
  CacheKeyFields f{"tiny-lm", 1, "e", "d", "none", {1, 2}, "apply_final_norm", "li", "{}"};
  const auto k = cache_key(f);
  EXPECT_EQ(k.size(), 64u);
  auto g = f;
  g.model_checksum = 2;
  EXPECT_NE(cache_key(g), k);
  g = f;
  g.layer_selection = {2};
  EXPECT_NE(cache_key(g), k);
  g = f;
  g.head_norm_policy = "raw_hidden";
  EXPECT_NE(cache_key(g), k);
  EXPECT_EQ(cache_key(f), k);
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Experiment, ToyRunProducesMetricsAndIsReproducible) {
  const auto dir = testutil::scratch("toy_run");
  const auto cfg = toy_config(dir);
  RunStats first;
  const auto report = run_experiment(cfg, &first);
  EXPECT_EQ(report.examples_used, 4u);
  EXPECT_EQ(report.profiles.size(), 8u);  // 4 examples x 2 templates
  EXPECT_EQ(first.cache_misses, 8u);
  std::size_t defined = 0;
  for (const auto& m : report.methods) {
    EXPECT_EQ(m.count, 4u);
    if (m.auroc) ++defined;
    if (m.method == "li") {
      ASSERT_TRUE(m.cost.forward_passes > 0);
      EXPECT_EQ(m.cost.forward_passes, 8u);  // two passes per example
    }
  }
  EXPECT_EQ(defined, report.methods.size());
  const auto out = std::filesystem::path(cfg.output_dir);
  const std::string json1 = slurp(out / "report.json");
  const std::string scores1 = slurp(out / "scores.csv");
  const std::string profiles1 = slurp(out / "profiles.csv");

  RunStats second;
  run_experiment(cfg, &second);
  EXPECT_EQ(second.cache_hits, 8u);
  EXPECT_EQ(second.cache_misses, 0u);
  EXPECT_EQ(slurp(out / "report.json"), json1);
  EXPECT_EQ(slurp(out / "scores.csv"), scores1);
  EXPECT_EQ(slurp(out / "profiles.csv"), profiles1);

  auto fresh = cfg;
  fresh.use_cache = false;
  fresh.output_dir = (dir / "nocache").string();
  run_experiment(fresh);
  EXPECT_EQ(slurp(std::filesystem::path(fresh.output_dir) / "scores.csv"), scores1);
}

TEST(Experiment, LoadReportRestoresScoresAndProfiles) {
  const auto dir = testutil::scratch("load_report");
  const auto cfg = toy_config(dir);
  const auto report = run_experiment(cfg);
  const auto back = load_report(cfg.output_dir);
  EXPECT_EQ(back.profiles, report.profiles);
  ASSERT_EQ(back.scores.size(), report.scores.size());
  for (std::size_t i = 0; i < back.scores.size(); ++i) EXPECT_EQ(back.scores[i].value, report.scores[i].value);
  EXPECT_EQ(back.answerable, report.answerable);
  EXPECT_EQ(report_summary(back), report_summary(report));
}

TEST(Figures, CsvMatchesProfiles) {
  const auto dir = testutil::scratch("figures");
  const auto cfg = toy_config(dir);
  const auto report = run_experiment(cfg);
  const auto fig = dir / "fig";
  const auto written = emit_figures(report, {FigureKind::distribution, FigureKind::per_layer, FigureKind::cumulative,
                                             FigureKind::bar_auroc},
                                    fig);
  EXPECT_EQ(written.size(), 8u);
  for (const auto& p : written) EXPECT_GT(std::filesystem::file_size(p), 0u);

  // Means per (series, layer) recomputed from the profiles.
  std::map<std::pair<std::string, int>, std::pair<double, int>> per_layer, cumulative;
  for (const auto& p : report.profiles) {
    const std::string series =
        p.template_id + (report.answerable.at(p.example_id) ? " / answerable" : " / unanswerable");
    double run = 0.0;
    for (std::size_t l = 0; l < p.layer_ids.size(); ++l) {
      run += p.i_layer[l];
      auto& a = per_layer[{series, p.layer_ids[l]}];
      a.first += p.i_layer[l];
      a.second += 1;
      auto& c = cumulative[{series, p.layer_ids[l]}];
      c.first += run;
      c.second += 1;
    }
  }
  const auto check = [](const std::vector<std::vector<std::string>>& rows, const auto& expected) {
    ASSERT_EQ(rows.size(), expected.size() + 1);
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& [sum, n] = expected.at({rows[r][0], std::stoi(rows[r][1])});
      EXPECT_NEAR(std::stod(rows[r][2]), sum / n, 1e-12);
    }
  };
  check(read_csv(fig / "per_layer.csv"), per_layer);
  check(read_csv(fig / "cumulative.csv"), cumulative);

  // The final cumulative point is the mean total.
  for (const auto& [key, v] : cumulative) {
    if (key.second != report.num_layers) continue;
    double s = 0.0;
    int n = 0;
    for (const auto& p : report.profiles) {
      const std::string series =
          p.template_id + (report.answerable.at(p.example_id) ? " / answerable" : " / unanswerable");
      if (series == key.first) {
        s += p.li_total;
        ++n;
      }
    }
    EXPECT_NEAR(v.first / v.second, s / n, 1e-12);
  }
}

TEST(Figures, MissingDataIsReported) {
  EvalReport empty;
  EXPECT_THROW(emit_figures(empty, {FigureKind::per_layer}, testutil::scratch("fig_empty")), InsufficientData);
  EXPECT_THROW(emit_figures(empty, {FigureKind::bar_auroc}, testutil::scratch("fig_empty2")), InsufficientData);
  EXPECT_THROW(parse_figure_kind("pie"), InvalidArgument);
}

TEST(Csv, QuotesFields) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  const auto dir = testutil::scratch("csv");
  std::ofstream(dir / "t.csv") << "x,y\n\"a,b\",\"c\"\"d\"\n";
  const auto rows = read_csv(dir / "t.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1][0], "a,b");
  EXPECT_EQ(rows[1][1], "c\"d");
}
