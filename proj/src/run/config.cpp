#include "layerinfo/run/config.hpp"

#include <fstream>

#include "layerinfo/data/datasets.hpp"
#include "layerinfo/error.hpp"
#include "layerinfo/model/model_adapter.hpp"
#include "layerinfo/run/cache.hpp"

namespace layerinfo::run {
namespace {

using json = nlohmann::json;

template <typename T>
void read(const json& doc, const char* key, T& out) {
  if (doc.contains(key) && !doc[key].is_null()) out = doc[key].get<T>();
}

json frame_to_json(const baselines::PTrueFrame& f) {
  return {{"question_prefix", f.question_prefix}, {"answer_prefix", f.answer_prefix},
          {"query", f.query},                     {"verdict_prefix", f.verdict_prefix},
          {"true_word", f.true_word},             {"false_word", f.false_word},
          {"demo_separator", f.demo_separator},   {"no_answer", f.no_answer}};
}

baselines::PTrueFrame frame_from_json(const json& j) {
  baselines::PTrueFrame f;
  read(j, "question_prefix", f.question_prefix);
  read(j, "answer_prefix", f.answer_prefix);
  read(j, "query", f.query);
  read(j, "verdict_prefix", f.verdict_prefix);
  read(j, "true_word", f.true_word);
  read(j, "false_word", f.false_word);
  read(j, "demo_separator", f.demo_separator);
  read(j, "no_answer", f.no_answer);
  return f;
}

}  // namespace

json template_to_json(const data::PromptTemplate& t) {
  return {{"id", t.template_id},
          {"kind", data::to_string(t.kind)},
          {"instruction", t.instruction_text},
          {"placement", t.placement == data::Placement::before_question ? "before_question" : "after_question"}};
}

data::PromptTemplate template_from_json(const json& j) {
  if (j.is_string()) return data::PromptTemplate::builtin(j.get<std::string>());
  if (!j.is_object()) throw InvalidArgument("template must be a name or an object");
  const std::string id = j.value("id", "");
  const std::string kind = j.value("kind", "custom");
  data::PromptTemplate t = kind == "custom" ? data::PromptTemplate::custom(id, j.value("instruction", ""))
                                            : data::PromptTemplate::builtin(kind);
  if (!id.empty()) t.template_id = id;
  if (j.contains("instruction")) t.instruction_text = j["instruction"].get<std::string>();
  const std::string placement = j.value("placement", "before_question");
  if (placement == "after_question") {
    t.placement = data::Placement::after_question;
  } else if (placement != "before_question") {
    throw InvalidArgument("unknown placement '" + placement + "'");
  }
  t.validate();
  return t;
}

json RunConfig::to_json() const {
  json templates_json = json::array();
  for (const auto& t : templates) templates_json.push_back(template_to_json(t));
  return {{"model_id", model_id},
          {"dataset_path", dataset_path},
          {"dataset_format", dataset_format},
          {"templates", templates_json},
          {"methods", methods},
          {"layers", layers},
          {"head_norm_policy", head_norm_policy},
          {"scored_span", scored_span},
          {"separator", separator},
          {"balance_ratio", balance_ratio},
          {"seed", seed},
          {"max_examples", max_examples},
          {"reject_fractions", reject_fractions},
          {"p_true_k", p_true_k},
          {"p_true_frame", frame_to_json(p_true_frame)},
          {"n_samples", n_samples},
          {"temperature", temperature},
          {"equivalence", equivalence},
          {"judge_url", judge_url},
          {"max_new_tokens", max_new_tokens},
          {"calibration_sizes", calibration_sizes},
          {"ece_bins", ece_bins},
          {"output_dir", output_dir},
          {"use_cache", use_cache}};
}

RunConfig RunConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw InvalidArgument("run config must be a JSON object");
  RunConfig c;
  try {
    read(doc, "model_id", c.model_id);
    read(doc, "dataset_path", c.dataset_path);
    read(doc, "dataset_format", c.dataset_format);
    if (doc.contains("templates")) {
      c.templates.clear();
      for (const auto& t : doc["templates"]) c.templates.push_back(template_from_json(t));
    }
    read(doc, "methods", c.methods);
    if (doc.contains("layers") && doc["layers"].is_string()) {
      if (doc["layers"].get<std::string>() != "all") throw InvalidArgument("layers must be \"all\" or a list");
    } else {
      read(doc, "layers", c.layers);
    }
    read(doc, "head_norm_policy", c.head_norm_policy);
    read(doc, "scored_span", c.scored_span);
    read(doc, "separator", c.separator);
    read(doc, "balance_ratio", c.balance_ratio);
    read(doc, "seed", c.seed);
    read(doc, "max_examples", c.max_examples);
    read(doc, "reject_fractions", c.reject_fractions);
    read(doc, "p_true_k", c.p_true_k);
    if (doc.contains("p_true_frame")) c.p_true_frame = frame_from_json(doc["p_true_frame"]);
    read(doc, "n_samples", c.n_samples);
    read(doc, "temperature", c.temperature);
    read(doc, "equivalence", c.equivalence);
    read(doc, "judge_url", c.judge_url);
    read(doc, "max_new_tokens", c.max_new_tokens);
    read(doc, "calibration_sizes", c.calibration_sizes);
    read(doc, "ece_bins", c.ece_bins);
    read(doc, "output_dir", c.output_dir);
    read(doc, "use_cache", c.use_cache);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("invalid run config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError("cannot parse config " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

void RunConfig::validate() const {
  if (model_id.empty()) throw InvalidArgument("model_id is empty");
  if (dataset_path.empty()) throw InvalidArgument("dataset_path is empty");
  data::parse_dataset_format(dataset_format);
  if (templates.empty()) throw InvalidArgument("template list is empty");
  for (std::size_t i = 0; i < templates.size(); ++i) {
    templates[i].validate();
    for (std::size_t j = 0; j < i; ++j) {
      if (templates[j].template_id == templates[i].template_id) {
        throw InvalidArgument("duplicate template id '" + templates[i].template_id + "'");
      }
    }
  }
  if (methods.empty()) throw InvalidArgument("method list is empty");
  for (const auto& m : methods) baselines::parse_method(m);
  model::parse_head_norm_policy(head_norm_policy);
  if (scored_span != "instruction_and_question" && scored_span != "question_only") {
    throw InvalidArgument("scored_span must be instruction_and_question or question_only");
  }
  if (balance_ratio < 0.0) throw InvalidArgument("balance_ratio must be >= 0");
  for (double f : reject_fractions) {
    if (!(f >= 0.0 && f < 1.0)) throw InvalidArgument("reject fractions must be in [0, 1)");
  }
  if (p_true_k < 0) throw InvalidArgument("p_true_k must be >= 0");
  if (n_samples < 2) throw InvalidArgument("n_samples must be >= 2");
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  if (equivalence != "normalized_exact_match" && equivalence != "http_judge") {
    throw InvalidArgument("unknown equivalence policy '" + equivalence + "'");
  }
  if (equivalence == "http_judge" && judge_url.empty()) throw InvalidArgument("http_judge needs judge_url");
  if (max_new_tokens < 1) throw InvalidArgument("max_new_tokens must be >= 1");
  if (ece_bins < 1) throw InvalidArgument("ece_bins must be >= 1");
  if (output_dir.empty()) throw InvalidArgument("output_dir is empty");
}

std::string RunConfig::hash() const {
  json j = to_json();
  j.erase("output_dir");
  j.erase("use_cache");
  return sha256_hex(j.dump());
}

}  // namespace layerinfo::run
