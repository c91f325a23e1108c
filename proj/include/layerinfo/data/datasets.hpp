#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "layerinfo/data/example.hpp"

namespace layerinfo::data {

// Corpus layouts and how each marks unanswerable questions:
//   coqa_like     {"data": [{"id", "story", "questions": [{input_text, turn_id}],
//                  "answers": [{input_text, turn_id}]}]}; answer "unknown" is
//                  unanswerable. Earlier turns are folded into the context as
//                  "Q: ...\nA: ..." lines after the story.
//   quac_like     SQuAD-style {"data": [{"paragraphs": [{"context", "qas"}]}]};
//                  answer text "CANNOTANSWER" is unanswerable. The trailing
//                  CANNOTANSWER sentinel is removed from the context. Earlier
//                  turns are folded in as for CoQA.
//   condaqa_like  JSON lines with sentence1 (passage), sentence2 (question)
//                  and label; "DON'T KNOW" is unanswerable.
//   generic_jsonl JSON lines {"id", "context", "question", "answers", "answerable"}.
enum class DatasetFormat { coqa_like, quac_like, condaqa_like, generic_jsonl };

std::string to_string(DatasetFormat format);
DatasetFormat parse_dataset_format(std::string_view name);

struct LoadedDataset {
  std::vector<Example> examples;
  std::size_t skipped = 0;
  std::vector<std::string> skip_reasons;
};

// Skips malformed records and reports them. Throws LoadError when the file
// cannot be read or yields no usable record.
LoadedDataset read_dataset(const std::filesystem::path& path, DatasetFormat format);

// read_dataset, logging the skip count.
std::vector<Example> load_dataset(const std::filesystem::path& path, DatasetFormat format);

// Deterministic subsample with answerable:unanswerable = ratio, keeping as
// many examples as possible. Original order is preserved.
std::vector<Example> balance_answerability(const std::vector<Example>& examples, double ratio = 1.0,
                                           std::uint64_t seed = 0);

std::size_t word_count(std::string_view text);

}  // namespace layerinfo::data
