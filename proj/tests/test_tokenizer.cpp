#include <gtest/gtest.h>

#include "layerinfo/model/model_adapter.hpp"
#include "layerinfo/model/tokenizer.hpp"
#include "test_util.hpp"

using namespace layerinfo;
using model::BpeTokenizer;
using model::CharTokenizer;

class HfTokenizer : public ::testing::TestWithParam<std::string> {};

TEST_P(HfTokenizer, MatchesReferenceIdsOffsetsAndDecoding) {
  const auto dir = testutil::data_dir() / "tokenizers";
  const auto tok = BpeTokenizer::from_file(dir / (GetParam() + ".json"));
  const auto ref = testutil::read_json(dir / (GetParam() + ".reference.json"));
  ASSERT_FALSE(ref.empty());
  for (const auto& c : ref) {
    const std::string text = c["text"];
    SCOPED_TRACE(text);
    const auto seq = tok->encode(text);
    EXPECT_EQ(seq.ids, c["ids"].get<std::vector<model::TokenId>>());
    ASSERT_EQ(seq.offsets.size(), seq.ids.size());
    // The reference reports the same span for every byte token of a
    // multi-byte character, so spans are compared on ASCII probes only.
    if (c["ascii"].get<bool>()) {
      const auto spans = c["offsets"];
      for (std::size_t i = 0; i < seq.offsets.size(); ++i) {
        const std::size_t b = spans[i][0], e = spans[i][1];
        if (seq.offsets[i].begin == seq.offsets[i].end) continue;  // inserted prefix marker
        EXPECT_EQ(seq.offsets[i].begin, b) << "token " << i;
        EXPECT_EQ(seq.offsets[i].end, e) << "token " << i;
      }
    }
    EXPECT_EQ(tok->decode(seq.ids), c["decoded"].get<std::string>());
  }
}

TEST_P(HfTokenizer, OffsetsAreOrderedAndWithinText) {
  const auto tok = BpeTokenizer::from_file(testutil::data_dir() / "tokenizers" / (GetParam() + ".json"));
  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    const std::string text = testutil::random_text(rng, 1 + static_cast<int>(rng() % 60));
    const auto seq = tok->encode(text);
    std::size_t prev_end = 0;
    for (const auto& s : seq.offsets) {
      EXPECT_LE(s.begin, s.end);
      EXPECT_LE(s.end, text.size());
      if (s.begin != s.end) {
        EXPECT_GE(s.begin, prev_end);
        prev_end = s.end;
      }
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Layouts, HfTokenizer, ::testing::Values("bytelevel", "split_regex", "metaspace"));

TEST(CharTokenizer, RoundTripsLowerCaseText) {
  CharTokenizer tok(64);
  const std::string text = "the cat sat on the mat, did it?";
  const auto seq = tok.encode(text);
  EXPECT_EQ(seq.size(), text.size());
  EXPECT_EQ(tok.decode(seq.ids), text);
  EXPECT_EQ(tok.decode(tok.encode("ABC").ids), "abc");
}

TEST(CharTokenizer, UnknownCharactersMapToUnk) {
  CharTokenizer tok(64);
  const auto seq = tok.encode("a\xC3\xA9");  // "a" + e-acute
  ASSERT_EQ(seq.size(), 2u);
  EXPECT_EQ(seq.ids[1], CharTokenizer::kUnk);
  EXPECT_EQ(seq.offsets[1].begin, 1u);
  EXPECT_EQ(seq.offsets[1].end, 3u);
}

TEST(CharTokenizer, SmallVocabularyTruncatesAlphabet) {
  CharTokenizer tok(8);
  EXPECT_EQ(tok.vocab_size(), 8);
  for (auto id : tok.encode("hello world").ids) EXPECT_LT(id, 8);
}

TEST(Tokenize, EmptyTextIsLoneBeginMarker) {
  const auto m = model::load_model("tiny-lm");
  const auto seq = model::tokenize(m, "");
  ASSERT_EQ(seq.size(), 1u);
  EXPECT_EQ(seq.ids[0], CharTokenizer::kBos);
}

TEST(Tokenize, IsDeterministic) {
  const auto m = model::load_model(std::string(testutil::data_dir() / "models" / "tiny-llama"));
  EXPECT_EQ(model::tokenize(m, "abc").ids, model::tokenize(m, "abc").ids);
}

TEST(Tokenize, ConcatenationOffsetsPartitionTheString) {
  const auto m = model::load_model(std::string(testutil::data_dir() / "models" / "tiny-qwen2"));
  const std::string a = "The queen lived", b = " by the river.";
  const std::string text = a + b;
  const auto seq = model::tokenize(m, text);
  std::size_t covered = 0;
  for (std::size_t i = 1; i < seq.size(); ++i) {
    EXPECT_EQ(seq.offsets[i].begin, covered) << "token " << i;
    covered = seq.offsets[i].end;
  }
  EXPECT_EQ(covered, text.size());
  // Every token lies entirely within one of the two parts or straddles the
  // join; the byte at the join is covered exactly once.
  std::size_t hits = 0;
  for (const auto& s : seq.offsets) hits += s.begin <= a.size() && a.size() < s.end ? 1 : 0;
  EXPECT_EQ(hits, 1u);
}
