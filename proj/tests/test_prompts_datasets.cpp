#include <gtest/gtest.h>

#include <set>

#include "layerinfo/data/datasets.hpp"
#include "layerinfo/data/prompts.hpp"
#include "layerinfo/error.hpp"
#include "test_util.hpp"

using namespace layerinfo;
using data::PromptTemplate;

namespace {

std::filesystem::path ds(const std::string& name) { return testutil::data_dir() / "datasets" / name; }

data::Example example(std::string id, bool answerable) {
  data::Example ex;
  ex.example_id = std::move(id);
  ex.context = "ctx";
  ex.question = "q?";
  ex.answerable = answerable;
  if (answerable) ex.gold_answers = {"a"};
  return ex;
}

std::vector<data::Example> classes(int ans, int unans) {
  std::vector<data::Example> out;
  for (int i = 0; i < ans; ++i) out.push_back(example("a" + std::to_string(i), true));
  for (int i = 0; i < unans; ++i) out.push_back(example("u" + std::to_string(i), false));
  return out;
}

std::vector<model::TokenId> span_ids(const model::TokenSequence& s, const data::IndexRange& r) {
  return {s.ids.begin() + static_cast<std::ptrdiff_t>(r.begin), s.ids.begin() + static_cast<std::ptrdiff_t>(r.end)};
}

}  // namespace

TEST(Templates, BuiltinInstructionTexts) {
  EXPECT_EQ(PromptTemplate::binary().instruction_text, "Is this answerable?");
  EXPECT_EQ(PromptTemplate::open_ended().instruction_text, "Answer the question or say don't know");
  EXPECT_EQ(PromptTemplate::certainty().instruction_text, "Are you certain about the answer?");
  EXPECT_TRUE(PromptTemplate::none().instruction_text.empty());
  EXPECT_THROW(PromptTemplate::builtin("nope"), InvalidArgument);
  EXPECT_THROW(PromptTemplate::custom("c", "").validate(), InvalidArgument);
}

TEST(LoadDataset, GenericKeepsIdsAndSkipsMalformed) {
  const auto loaded = data::read_dataset(ds("generic.jsonl"), data::DatasetFormat::generic_jsonl);
  ASSERT_EQ(loaded.examples.size(), 2u);
  EXPECT_EQ(loaded.examples[0].example_id, "g1");
  EXPECT_EQ(loaded.examples[1].example_id, "g2");
  EXPECT_TRUE(loaded.examples[0].answerable);
  EXPECT_FALSE(loaded.examples[1].answerable);
  // g3 lacks a question and the last line is not JSON.
  EXPECT_EQ(loaded.skipped, 2u);
}

TEST(LoadDataset, MissingQuestionSkippedOnce) {
  const auto dir = testutil::scratch("missing_question");
  std::ofstream(dir / "d.jsonl") << R"({"id":"x","context":"c","question":"q?","answers":["a"],"answerable":true})"
                                 << "\n"
                                 << R"({"id":"y","context":"c","answers":[],"answerable":false})" << "\n";
  const auto loaded = data::read_dataset(dir / "d.jsonl", data::DatasetFormat::generic_jsonl);
  EXPECT_EQ(loaded.examples.size(), 1u);
  EXPECT_EQ(loaded.skipped, 1u);
}

TEST(LoadDataset, NoUsableRecordsFails) {
  const auto dir = testutil::scratch("no_records");
  std::ofstream(dir / "d.jsonl") << "{bad\n";
  EXPECT_THROW(data::load_dataset(dir / "d.jsonl", data::DatasetFormat::generic_jsonl), LoadError);
  EXPECT_THROW(data::load_dataset(dir / "absent.jsonl", data::DatasetFormat::generic_jsonl), LoadError);
}

TEST(LoadDataset, CoqaSliceMatchesCorpusStatistics) {
  const auto ex = data::load_dataset(ds("coqa_like.json"), data::DatasetFormat::coqa_like);
  ASSERT_EQ(ex.size(), 50u);
  // Story length, excluding the folded-in earlier turns, averages about 271
  // words as in the CoQA dev set.
  double words = 0.0;
  std::set<std::string> stories;
  for (const auto& e : ex) {
    const auto story = e.context.substr(0, e.context.find("\nQ: "));
    if (stories.insert(story).second) words += static_cast<double>(data::word_count(story));
  }
  const double mean = words / static_cast<double>(stories.size());
  EXPECT_NEAR(mean, 271.0, 20.0);
  std::size_t unans = 0;
  for (const auto& e : ex) unans += e.answerable ? 0 : 1;
  EXPECT_GT(unans, 0u);
  EXPECT_LT(unans, ex.size());
}

TEST(LoadDataset, CoqaFoldsEarlierTurns) {
  const auto ex = data::load_dataset(ds("coqa_like.json"), data::DatasetFormat::coqa_like);
  EXPECT_EQ(ex[0].context.find("\nQ: "), std::string::npos);
  EXPECT_NE(ex[1].context.find("\nQ: " + ex[0].question), std::string::npos);
}

TEST(LoadDataset, QuacMapsCannotAnswer) {
  const auto ex = data::load_dataset(ds("quac_like.json"), data::DatasetFormat::quac_like);
  EXPECT_EQ(ex.size(), 24u);
  for (const auto& e : ex) {
    EXPECT_EQ(e.context.find("CANNOTANSWER"), std::string::npos);
    if (!e.answerable) {
      EXPECT_TRUE(e.gold_answers.empty());
    }
  }
}

TEST(LoadDataset, CondaqaMapsDontKnow) {
  const auto ex = data::load_dataset(ds("condaqa_like.jsonl"), data::DatasetFormat::condaqa_like);
  ASSERT_EQ(ex.size(), 12u);
  for (std::size_t i = 0; i < ex.size(); ++i) EXPECT_EQ(ex[i].answerable, i % 3 != 2);
}

TEST(Balance, KeepsBalancedSetWhole) {
  const auto out = data::balance_answerability(classes(10, 10), 1.0, 0);
  EXPECT_EQ(out.size(), 20u);
}

TEST(Balance, SubsamplesMajorityClass) {
  const auto out = data::balance_answerability(classes(30, 10), 1.0, 0);
  std::size_t ans = 0;
  for (const auto& e : out) ans += e.answerable ? 1 : 0;
  EXPECT_EQ(ans, 10u);
  EXPECT_EQ(out.size() - ans, 10u);
}

TEST(Balance, DeterministicForSeedAndPreservesIdentity) {
  const auto input = classes(30, 7);
  const auto a = data::balance_answerability(input, 1.0, 5);
  const auto b = data::balance_answerability(input, 1.0, 5);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].example_id, b[i].example_id);
  const auto c = data::balance_answerability(input, 1.0, 6);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= a[i].example_id != c[i].example_id;
  EXPECT_TRUE(differs);
}

TEST(Balance, RatioWithinRounding) {
  const auto out = data::balance_answerability(classes(40, 13), 2.0, 1);
  std::size_t ans = 0;
  for (const auto& e : out) ans += e.answerable ? 1 : 0;
  EXPECT_LE(std::abs(static_cast<long>(ans) - 2 * static_cast<long>(out.size() - ans)), 1);
}

TEST(Balance, OneClassFails) {
  EXPECT_THROW(data::balance_answerability(classes(5, 0)), InsufficientData);
}

class RenderOnModel : public ::testing::TestWithParam<std::string> {
 protected:
  model::ModelHandle load() const {
    return GetParam() == "tiny-lm" ? model::load_model("tiny-lm")
                                   : model::load_model((testutil::data_dir() / "models" / GetParam()).string());
  }
};

TEST_P(RenderOnModel, NoneTemplateScoresQuestionOnly) {
  const auto m = load();
  data::Example ex = example("e", true);
  ex.context = "The queen lived by the river.";
  ex.question = "Where did the queen live?";
  const auto pair = data::render_pair(ex, PromptTemplate::none(), m);
  EXPECT_EQ(pair.null_text, ex.question);
  const auto q = model::tokenize(m, ex.question);
  EXPECT_EQ(span_ids(pair.null_pass, pair.target_span_null), span_ids(q, {1, q.size()}));
  EXPECT_EQ(span_ids(pair.null_pass, pair.target_span_null), span_ids(pair.ctx_pass, pair.target_span_ctx));
}

TEST_P(RenderOnModel, BinaryTemplateEndsWithInstructionAndQuestion) {
  const auto m = load();
  data::Example ex = example("e", true);
  ex.context = "Asta swam in the ocean every morning.";
  ex.question = "When did Asta swim?";
  const auto pair = data::render_pair(ex, PromptTemplate::binary(), m);
  const std::string segment = "Is this answerable? When did Asta swim?";
  EXPECT_EQ(pair.null_text, segment);
  EXPECT_EQ(pair.ctx_text.substr(pair.ctx_text.size() - segment.size()), segment);
  EXPECT_EQ(span_ids(pair.null_pass, pair.target_span_null), span_ids(pair.ctx_pass, pair.target_span_ctx));
  EXPECT_EQ(pair.target_span_null.end, pair.null_pass.size());
  // Everything after the prefix marker and any inserted, textless tokens.
  for (std::size_t i = 0; i < pair.target_span_null.begin; ++i) {
    EXPECT_EQ(pair.null_pass.offsets[i].begin, pair.null_pass.offsets[i].end);
  }
}

TEST_P(RenderOnModel, EmptyContextGivesIdenticalPasses) {
  const auto m = load();
  data::Example ex = example("e", true);
  ex.context = "";
  ex.question = "Who wrote the letter?";
  for (const auto& t : {PromptTemplate::none(), PromptTemplate::binary(), PromptTemplate::certainty()}) {
    const auto pair = data::render_pair(ex, t, m);
    EXPECT_EQ(pair.null_pass.ids, pair.ctx_pass.ids);
    EXPECT_EQ(pair.target_span_null, pair.target_span_ctx);
  }
}

TEST_P(RenderOnModel, RenderingIsDeterministic) {
  const auto m = load();
  data::Example ex = example("e", true);
  ex.context = "A fish lived in a bottle.";
  ex.question = "Where did the fish live?";
  const auto a = data::render_pair(ex, PromptTemplate::open_ended(), m);
  const auto b = data::render_pair(ex, PromptTemplate::open_ended(), m);
  EXPECT_EQ(a.ctx_pass.ids, b.ctx_pass.ids);
  EXPECT_EQ(a.null_pass.ids, b.null_pass.ids);
  EXPECT_EQ(a.ctx_text, b.ctx_text);
}

TEST_P(RenderOnModel, CorpusSpansAlwaysMatchOrAreFlagged) {
  const auto m = load();
  const auto ex = data::load_dataset(ds("quac_like.json"), data::DatasetFormat::quac_like);
  for (const auto& e : ex) {
    for (const auto& t : {PromptTemplate::none(), PromptTemplate::binary()}) {
      const auto out = data::try_render_pair(e, t, m);
      if (!out.pair) {
        EXPECT_FALSE(out.flag_reason.empty());
        continue;
      }
      EXPECT_EQ(span_ids(out.pair->null_pass, out.pair->target_span_null),
                span_ids(out.pair->ctx_pass, out.pair->target_span_ctx));
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Models, RenderOnModel, ::testing::Values("tiny-lm", "tiny-llama", "tiny-qwen2", "tiny-phi3"));

TEST(Render, QuestionOnlyScoresJustTheQuestion) {
  const auto m = model::load_model("tiny-lm");
  data::Example ex = example("e", true);
  ex.context = "the sky is blue.";
  ex.question = "what colour is the sky?";
  data::RenderOptions opts;
  opts.scored = data::ScoredSpan::question_only;
  const auto pair = data::render_pair(ex, PromptTemplate::binary(), m, opts);
  EXPECT_EQ(pair.null_text, "Is this answerable? what colour is the sky?");
  EXPECT_EQ(pair.target_span_null.size(), ex.question.size());  // one token per character
}

TEST(Render, AfterQuestionPlacement) {
  const auto m = model::load_model("tiny-lm");
  data::Example ex = example("e", true);
  ex.question = "is it raining?";
  const auto t = PromptTemplate::custom("yes", "Always answer YES.", data::Placement::after_question);
  const auto pair = data::render_pair(ex, t, m);
  EXPECT_EQ(pair.null_text, "is it raining? Always answer YES.");
}

TEST(Render, EmptyQuestionIsFlagged) {
  const auto m = model::load_model("tiny-lm");
  data::Example ex = example("e", true);
  ex.question = "";
  EXPECT_FALSE(data::try_render_pair(ex, PromptTemplate::none(), m).pair);
  EXPECT_THROW(data::render_pair(ex, PromptTemplate::none(), m), SpanMismatch);
}
