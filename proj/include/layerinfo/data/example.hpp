#pragma once

#include <string>
#include <vector>

namespace layerinfo::data {

// One (context, question) item with its answerability label.
struct Example {
  std::string example_id;
  std::string context;
  std::string question;
  std::vector<std::string> gold_answers;
  bool answerable = true;
  std::string source;
};

}  // namespace layerinfo::data
