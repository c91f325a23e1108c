#include "layerinfo/data/datasets.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "layerinfo/error.hpp"

namespace layerinfo::data {
namespace {

using json = nlohmann::json;

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

json parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open dataset " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError("cannot parse dataset " + path.string() + ": " + e.what());
  }
}

std::string str_field(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) throw std::invalid_argument(std::string("missing string field '") + key + "'");
  return j[key].get<std::string>();
}

std::string turn_line(const std::string& q, const std::string& a) { return "\nQ: " + q + "\nA: " + a; }

void add(LoadedDataset& ds, Example ex) {
  ex.question = trim(ex.question);
  if (ex.question.empty()) throw std::invalid_argument("empty question");
  if (ex.answerable && ex.gold_answers.empty()) throw std::invalid_argument("answerable question without answer");
  ds.examples.push_back(std::move(ex));
}

void skip(LoadedDataset& ds, const std::string& where, const std::string& why) {
  ++ds.skipped;
  ds.skip_reasons.push_back(where + ": " + why);
}

void read_coqa(const json& doc, LoadedDataset& ds) {
  if (!doc.contains("data") || !doc["data"].is_array()) throw LoadError("CoQA layout needs a 'data' array");
  for (std::size_t s = 0; s < doc["data"].size(); ++s) {
    const json& story = doc["data"][s];
    try {
      const std::string id = story.contains("id") ? story["id"].get<std::string>() : "story" + std::to_string(s);
      const std::string text = str_field(story, "story");
      const json& qs = story.at("questions");
      const json& as = story.at("answers");
      if (qs.size() != as.size()) throw std::invalid_argument("question/answer count mismatch");
      std::string history;
      for (std::size_t t = 0; t < qs.size(); ++t) {
        const std::string where = id + " turn " + std::to_string(t + 1);
        try {
          Example ex;
          const int turn = qs[t].contains("turn_id") ? qs[t]["turn_id"].get<int>() : static_cast<int>(t + 1);
          ex.example_id = id + "_" + std::to_string(turn);
          ex.context = text + history;
          ex.question = str_field(qs[t], "input_text");
          const std::string answer = trim(str_field(as[t], "input_text"));
          ex.answerable = upper(answer) != "UNKNOWN";
          if (ex.answerable) ex.gold_answers.push_back(answer);
          ex.source = "coqa";
          history += turn_line(trim(ex.question), answer);
          add(ds, std::move(ex));
        } catch (const std::exception& e) {
          skip(ds, where, e.what());
        }
      }
    } catch (const std::exception& e) {
      skip(ds, "story " + std::to_string(s), e.what());
    }
  }
}

void read_quac(const json& doc, LoadedDataset& ds) {
  static const std::string kSentinel = "CANNOTANSWER";
  if (!doc.contains("data") || !doc["data"].is_array()) throw LoadError("QuAC layout needs a 'data' array");
  for (const json& article : doc["data"]) {
    if (!article.contains("paragraphs")) {
      skip(ds, "article", "missing paragraphs");
      continue;
    }
    for (const json& para : article["paragraphs"]) {
      try {
        std::string ctx = trim(str_field(para, "context"));
        if (ctx.size() >= kSentinel.size() && ctx.compare(ctx.size() - kSentinel.size(), kSentinel.size(), kSentinel) == 0) {
          ctx = trim(ctx.substr(0, ctx.size() - kSentinel.size()));
        }
        std::string history;
        for (const json& qa : para.at("qas")) {
          try {
            Example ex;
            ex.example_id = str_field(qa, "id");
            ex.context = ctx + history;
            ex.question = str_field(qa, "question");
            std::string answer;
            const json& answers = qa.contains("orig_answer") ? json::array({qa["orig_answer"]}) : qa.at("answers");
            for (const json& a : answers) {
              const std::string text = trim(str_field(a, "text"));
              if (answer.empty()) answer = text;
              if (text != kSentinel) ex.gold_answers.push_back(text);
            }
            ex.answerable = answer != kSentinel;
            if (!ex.answerable) ex.gold_answers.clear();
            ex.source = "quac";
            history += turn_line(trim(ex.question), ex.answerable ? answer : "unknown");
            add(ds, std::move(ex));
          } catch (const std::exception& e) {
            skip(ds, "qa", e.what());
          }
        }
      } catch (const std::exception& e) {
        skip(ds, "paragraph", e.what());
      }
    }
  }
}

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, LoadedDataset& ds, Fn fn) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open dataset " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      fn(json::parse(line), lineno);
    } catch (const std::exception& e) {
      skip(ds, "line " + std::to_string(lineno), e.what());
    }
  }
}

void read_condaqa(const std::filesystem::path& path, LoadedDataset& ds) {
  for_each_json_line(path, ds, [&](const json& j, std::size_t lineno) {
    Example ex;
    ex.example_id = j.contains("QuestionID") ? j["QuestionID"].get<std::string>() : "line" + std::to_string(lineno);
    if (j.contains("PassageID")) ex.example_id = j["PassageID"].get<std::string>() + "_" + ex.example_id;
    ex.context = str_field(j, "sentence1");
    ex.question = str_field(j, "sentence2");
    const std::string label = upper(trim(str_field(j, "label")));
    ex.answerable = label != "DON'T KNOW" && label != "DONT KNOW";
    if (ex.answerable) ex.gold_answers.push_back(label);
    ex.source = "condaqa";
    add(ds, std::move(ex));
  });
}

void read_generic(const std::filesystem::path& path, LoadedDataset& ds) {
  for_each_json_line(path, ds, [&](const json& j, std::size_t lineno) {
    Example ex;
    ex.example_id = j.contains("id") ? j["id"].get<std::string>() : "line" + std::to_string(lineno);
    ex.context = j.contains("context") ? j["context"].get<std::string>() : "";
    ex.question = str_field(j, "question");
    if (j.contains("answers")) ex.gold_answers = j["answers"].get<std::vector<std::string>>();
    if (!j.contains("answerable") || !j["answerable"].is_boolean()) {
      throw std::invalid_argument("missing boolean field 'answerable'");
    }
    ex.answerable = j["answerable"].get<bool>();
    ex.source = j.contains("source") ? j["source"].get<std::string>() : "generic";
    add(ds, std::move(ex));
  });
}

}  // namespace

std::string to_string(DatasetFormat format) {
  switch (format) {
    case DatasetFormat::coqa_like: return "coqa_like";
    case DatasetFormat::quac_like: return "quac_like";
    case DatasetFormat::condaqa_like: return "condaqa_like";
    case DatasetFormat::generic_jsonl: return "generic_jsonl";
  }
  return "generic_jsonl";
}

DatasetFormat parse_dataset_format(std::string_view name) {
  if (name == "coqa_like") return DatasetFormat::coqa_like;
  if (name == "quac_like") return DatasetFormat::quac_like;
  if (name == "condaqa_like") return DatasetFormat::condaqa_like;
  if (name == "generic_jsonl") return DatasetFormat::generic_jsonl;
  throw InvalidArgument("unknown dataset format '" + std::string(name) + "'");
}

LoadedDataset read_dataset(const std::filesystem::path& path, DatasetFormat format) {
  LoadedDataset ds;
  switch (format) {
    case DatasetFormat::coqa_like: read_coqa(parse_file(path), ds); break;
    case DatasetFormat::quac_like: read_quac(parse_file(path), ds); break;
    case DatasetFormat::condaqa_like: read_condaqa(path, ds); break;
    case DatasetFormat::generic_jsonl: read_generic(path, ds); break;
  }
  if (ds.examples.empty()) {
    throw LoadError("no usable records in " + path.string() + " (" + std::to_string(ds.skipped) + " skipped)");
  }
  return ds;
}

std::vector<Example> load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  LoadedDataset ds = read_dataset(path, format);
  if (ds.skipped > 0) {
    spdlog::warn("{}: skipped {} malformed record(s)", path.string(), ds.skipped);
    for (const auto& r : ds.skip_reasons) spdlog::debug("  {}", r);
  }
  return std::move(ds.examples);
}

std::vector<Example> balance_answerability(const std::vector<Example>& examples, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0)) throw InvalidArgument("balance ratio must be positive");
  std::vector<std::size_t> ans, unans;
  for (std::size_t i = 0; i < examples.size(); ++i) (examples[i].answerable ? ans : unans).push_back(i);
  if (ans.empty() || unans.empty()) throw InsufficientData("balancing needs both answerable and unanswerable examples");

  std::size_t keep_ans = ans.size();
  std::size_t keep_unans = unans.size();
  if (static_cast<double>(ans.size()) >= ratio * static_cast<double>(unans.size())) {
    keep_ans = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ratio * static_cast<double>(unans.size()))));
  } else {
    keep_unans = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(ans.size()) / ratio)));
  }
  keep_ans = std::min(keep_ans, ans.size());
  keep_unans = std::min(keep_unans, unans.size());

  std::mt19937_64 rng(seed);
  auto pick = [&rng](std::vector<std::size_t>& idx, std::size_t k) {
    // Partial Fisher-Yates; plain modulo keeps the draw sequence fixed across
    // standard library implementations.
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng() % (idx.size() - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
  };
  pick(ans, keep_ans);
  pick(unans, keep_unans);
  std::vector<std::size_t> kept(ans);
  kept.insert(kept.end(), unans.begin(), unans.end());
  std::sort(kept.begin(), kept.end());
  std::vector<Example> out;
  out.reserve(kept.size());
  for (std::size_t i : kept) out.push_back(examples[i]);
  return out;
}

std::size_t word_count(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::size_t n = 0;
  std::string w;
  while (in >> w) ++n;
  return n;
}

}  // namespace layerinfo::data
