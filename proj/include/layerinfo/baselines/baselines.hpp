#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "layerinfo/data/example.hpp"
#include "layerinfo/data/prompts.hpp"
#include "layerinfo/eval/metrics.hpp"
#include "layerinfo/model/model_adapter.hpp"

namespace layerinfo::baselines {

// Every method is oriented so that a higher value means "more confident /
// answerable": entropies are negated.
enum class Method {
  answer_match,
  p_true,
  pred_entropy,
  norm_entropy,
  semantic_entropy,
  pvi_first,
  pvi_last,
  li,
  verbalized_binary,  // probability mass on the affirmative token after the binary prompt
};

std::string to_string(Method m);
Method parse_method(std::string_view name);
const std::vector<Method>& all_methods();

struct BaselineScore {
  std::string example_id;
  Method method = Method::li;
  double value = 0.0;
  nlohmann::json aux = nlohmann::json::object();
  bool flagged = false;
  std::string flag_reason;
  // Work charged to this score. For p_true and semantic_entropy the pass
  // count follows the k+1 / n_samples cost model.
  eval::OverheadCounter cost;
};

// Text appended to a rendered prompt to ask for the model's reply.
inline constexpr std::string_view kAnswerCue = "\nAnswer:";

// Yes/no reading of a free-form reply: the first word (after lower-casing and
// stripping punctuation) among {yes, answerable, true} gives true, among
// {no, unanswerable, unknown, cannot, can't, false} gives false; "don't know"
// and "not sure" give false. Nothing recognised gives nullopt.
std::optional<bool> read_yes_no(std::string_view reply);

// Lower-cased, punctuation-stripped, whitespace-collapsed form.
std::string normalize_answer(std::string_view text);

struct GenerationParams {
  int max_tokens = 16;
};

// Greedy reply to the with-context pass of a binary-template pair. value is 1
// when the reply reads as "yes" (predicted answerable), else 0; aux.correct
// records agreement with the gold label.
BaselineScore answer_match(const model::ModelHandle& model, const data::RenderedPair& pair,
                           const data::Example& example, const GenerationParams& params = {});

struct PTrueFrame {
  std::string question_prefix = "Question: ";
  std::string answer_prefix = "Proposed answer: ";
  std::string query = "Is the proposed answer true? (A) True (B) False";
  std::string verdict_prefix = "The proposed answer is:";
  std::string true_word = " True";
  std::string false_word = " False";
  std::string demo_separator = "\n\n";
  std::string no_answer = "unknown";
};

struct PTrueParams {
  int k = 10;
  PTrueFrame frame;
  GenerationParams generation;
};

// Builds the k-shot self-evaluation prompt around the model's own greedy
// answer and returns the final-layer probability of the "True" token.
BaselineScore p_true(const model::ModelHandle& model, const data::Example& example,
                     const std::vector<data::Example>& demos, const PTrueParams& params = {});

// Text of the k-shot prompt for a given proposed answer.
std::string p_true_prompt(const data::Example& example, std::string_view proposed_answer,
                          const std::vector<data::Example>& demos, const PTrueParams& params);

// Splits `word` into whitespace-only leading tokens (returned as text to be
// appended to the prompt) and the first contentful token id.
struct WordToken {
  std::string lead;
  model::TokenId id = 0;
};
WordToken first_content_token(const model::ModelHandle& model, std::string_view word);

// value = -(mean entropy, in bits, of the final-layer next-token
// distributions over the greedy answer).
BaselineScore predictive_entropy(const model::ModelHandle& model, const data::RenderedPair& pair,
                                 const GenerationParams& params = {});

// value = mean base-2 log-likelihood per generated token, i.e. -(NLL / length).
BaselineScore normalized_entropy(const model::ModelHandle& model, const data::RenderedPair& pair,
                                 const GenerationParams& params = {});

// Both entropy scores from a single greedy generation.
std::pair<BaselineScore, BaselineScore> entropy_scores(const model::ModelHandle& model,
                                                       const data::RenderedPair& pair,
                                                       const GenerationParams& params = {});

// Decides whether two answers share a meaning.
struct EquivalencePolicy {
  std::string name;
  std::function<bool(const std::string&, const std::string&)> same;

  static EquivalencePolicy normalized_exact_match();
  // A judge supplied by the caller, e.g. an entailment model.
  static EquivalencePolicy pluggable(std::string name, std::function<bool(const std::string&, const std::string&)> judge);
  // POSTs {"a": ..., "b": ...} to `url` and reads a boolean "same" field.
  static EquivalencePolicy http_judge(const std::string& url);
};

// Greedy clustering: each answer joins the first cluster whose founding
// answer it is equivalent to. Returns sizes in order of first appearance.
std::vector<std::size_t> cluster_answers(const std::vector<std::string>& answers, const EquivalencePolicy& policy);

// -sum (s/n) log2(s/n) over cluster sizes.
double cluster_entropy(const std::vector<std::size_t>& sizes);

struct SemanticEntropyParams {
  int n_samples = 10;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  GenerationParams generation;
};

BaselineScore semantic_entropy(const model::ModelHandle& model, const data::RenderedPair& pair,
                               const EquivalencePolicy& equivalence, const SemanticEntropyParams& params = {});

// Probability mass on " Yes" after the with-context pass of a binary pair
// plus the answer cue.
BaselineScore verbalized_binary(const model::ModelHandle& model, const data::RenderedPair& pair);

}  // namespace layerinfo::baselines
