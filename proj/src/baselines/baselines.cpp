#include "layerinfo/baselines/baselines.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include <httplib.h>

#include "layerinfo/error.hpp"

namespace layerinfo::baselines {
namespace {

using model::ModelHandle;

struct CostScope {
  const ModelHandle& model;
  model::ForwardCounter start;
  explicit CostScope(const ModelHandle& m) : model(m), start(m.counter()) {}
  eval::OverheadCounter done(Method m) const {
    const auto& now = model.counter();
    return {to_string(m), now.forward_passes - start.forward_passes, now.tokens_processed - start.tokens_processed};
  }
};

std::vector<std::string> words(std::string_view text) {
  std::istringstream in(normalize_answer(text));
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

model::Generation greedy_answer(const ModelHandle& model, const std::string& prompt, const GenerationParams& p) {
  model::GenerationOptions opts;
  opts.max_tokens = p.max_tokens;
  return model::generate_from(model, model::tokenize(model, prompt), opts);
}

std::string answer_prompt(const data::RenderedPair& pair) { return pair.ctx_text + std::string(kAnswerCue); }

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::answer_match: return "answer_match";
    case Method::p_true: return "p_true";
    case Method::pred_entropy: return "pred_entropy";
    case Method::norm_entropy: return "norm_entropy";
    case Method::semantic_entropy: return "semantic_entropy";
    case Method::pvi_first: return "pvi_first";
    case Method::pvi_last: return "pvi_last";
    case Method::li: return "li";
    case Method::verbalized_binary: return "verbalized_binary";
  }
  return "li";
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> all = {Method::li,           Method::pvi_first,        Method::pvi_last,
                                          Method::answer_match, Method::p_true,           Method::pred_entropy,
                                          Method::norm_entropy, Method::semantic_entropy, Method::verbalized_binary};
  return all;
}

Method parse_method(std::string_view name) {
  for (Method m : all_methods()) {
    if (to_string(m) == name) return m;
  }
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

std::string normalize_answer(std::string_view text) {
  std::string out;
  bool space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      space = !out.empty();
      continue;
    }
    // Keep apostrophes so "don't" and "can't" stay single words.
    if (std::ispunct(c) && c != '\'') continue;
    if (space) out.push_back(' ');
    space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::optional<bool> read_yes_no(std::string_view reply) {
  static const std::vector<std::string> yes = {"yes", "answerable", "true", "yeah", "yep"};
  static const std::vector<std::string> no = {"no", "unanswerable", "unknown", "cannot", "can't", "false", "nope"};
  const auto ws = words(reply);
  for (std::size_t i = 0; i < ws.size(); ++i) {
    const auto& w = ws[i];
    if ((w == "don't" || w == "dont" || w == "do") && i + 1 < ws.size() && ws[i + 1] == "know") return false;
    if (w == "not" && i + 1 < ws.size() && (ws[i + 1] == "sure" || ws[i + 1] == "answerable")) return false;
    if (std::find(yes.begin(), yes.end(), w) != yes.end()) return true;
    if (std::find(no.begin(), no.end(), w) != no.end()) return false;
  }
  return std::nullopt;
}

BaselineScore answer_match(const ModelHandle& model, const data::RenderedPair& pair, const data::Example& example,
                           const GenerationParams& params) {
  CostScope scope(model);
  const auto gen = greedy_answer(model, answer_prompt(pair), params);
  BaselineScore s;
  s.example_id = example.example_id;
  s.method = Method::answer_match;
  s.aux["response"] = gen.text;
  const auto verdict = read_yes_no(gen.text);
  if (normalize_answer(gen.text).empty()) {
    s.flagged = true;
    s.flag_reason = "empty generation";
  }
  s.value = verdict.value_or(false) ? 1.0 : 0.0;
  s.aux["verdict"] = verdict ? (*verdict ? "yes" : "no") : "unrecognised";
  s.aux["correct"] = verdict.has_value() && *verdict == example.answerable;
  s.cost = scope.done(Method::answer_match);
  return s;
}

WordToken first_content_token(const ModelHandle& model, std::string_view word) {
  const auto& tok = model.tokenizer();
  const auto seq = tok.encode(word);
  WordToken out;
  for (model::TokenId id : seq.ids) {
    const model::TokenId one[1] = {id};
    const std::string piece = tok.decode(one);
    if (piece.find_first_not_of(" \t\n") == std::string::npos) {
      out.lead += piece;
      continue;
    }
    out.id = id;
    return out;
  }
  throw InvalidArgument("'" + std::string(word) + "' has no contentful token");
}

std::string p_true_prompt(const data::Example& example, std::string_view proposed_answer,
                          const std::vector<data::Example>& demos, const PTrueParams& params) {
  const auto& f = params.frame;
  // Demonstrations carry no context: answerable ones show the gold answer
  // judged true, unanswerable ones show a borrowed, wrong answer judged false.
  std::string borrowed = f.no_answer;
  for (int i = 0; i < params.k; ++i) {
    const auto& d = demos[static_cast<std::size_t>(i)];
    if (d.answerable && !d.gold_answers.empty()) {
      borrowed = d.gold_answers.front();
      break;
    }
  }
  std::string out;
  for (int i = 0; i < params.k; ++i) {
    const auto& d = demos[static_cast<std::size_t>(i)];
    const bool good = d.answerable && !d.gold_answers.empty();
    out += f.question_prefix + d.question + "\n" + f.answer_prefix + (good ? d.gold_answers.front() : borrowed) +
           "\n" + f.query + "\n" + f.verdict_prefix + (good ? f.true_word : f.false_word) + f.demo_separator;
  }
  if (!example.context.empty()) out += example.context + "\n";
  out += f.question_prefix + example.question + "\n" + f.answer_prefix + std::string(proposed_answer) + "\n" +
         f.query + "\n" + f.verdict_prefix;
  return out;
}

BaselineScore p_true(const ModelHandle& model, const data::Example& example, const std::vector<data::Example>& demos,
                     const PTrueParams& params) {
  if (params.k < 0) throw InvalidArgument("k must be non-negative");
  if (demos.size() < static_cast<std::size_t>(params.k)) {
    throw InsufficientData("p_true needs " + std::to_string(params.k) + " demonstrations, got " +
                           std::to_string(demos.size()));
  }
  for (int i = 0; i < params.k; ++i) {
    if (demos[static_cast<std::size_t>(i)].example_id == example.example_id) {
      throw InvalidArgument("demonstrations must not include the scored example");
    }
  }
  CostScope scope(model);
  std::string question_prompt = example.context.empty() ? example.question : example.context + "\n" + example.question;
  const auto proposed = greedy_answer(model, question_prompt + std::string(kAnswerCue), params.generation);
  const std::string answer = normalize_answer(proposed.text).empty() ? params.frame.no_answer : proposed.text;

  const WordToken t = first_content_token(model, params.frame.true_word);
  const std::string prompt = p_true_prompt(example, answer, demos, params) + t.lead;
  const auto dist = model::next_token_distribution(model, model::tokenize(model, prompt));

  BaselineScore s;
  s.example_id = example.example_id;
  s.method = Method::p_true;
  s.value = dist[static_cast<std::size_t>(t.id)];
  s.aux["proposed_answer"] = proposed.text;
  s.aux["k"] = params.k;
  s.cost = scope.done(Method::p_true);
  s.aux["measured_forward_calls"] = s.cost.forward_passes;
  s.cost.forward_passes = static_cast<std::size_t>(params.k) + 1;
  return s;
}

std::pair<BaselineScore, BaselineScore> entropy_scores(const ModelHandle& model, const data::RenderedPair& pair,
                                                       const GenerationParams& params) {
  CostScope scope(model);
  const auto gen = greedy_answer(model, answer_prompt(pair), params);
  if (gen.tokens.empty()) throw InsufficientData("example " + pair.example_id + ": no generated tokens");
  double h = 0.0, ll = 0.0;
  for (const auto& t : gen.tokens) {
    h += t.entropy_bits;
    ll += t.log2_prob;
  }
  const double n = static_cast<double>(gen.tokens.size());
  BaselineScore pe, ne;
  pe.example_id = ne.example_id = pair.example_id;
  pe.method = Method::pred_entropy;
  ne.method = Method::norm_entropy;
  pe.value = -(h / n);
  ne.value = ll / n;
  pe.aux["response"] = ne.aux["response"] = gen.text;
  pe.aux["tokens"] = ne.aux["tokens"] = gen.tokens.size();
  pe.cost = scope.done(Method::pred_entropy);
  ne.cost = pe.cost;
  ne.cost.method = to_string(Method::norm_entropy);
  return {pe, ne};
}

BaselineScore predictive_entropy(const ModelHandle& model, const data::RenderedPair& pair,
                                 const GenerationParams& params) {
  return entropy_scores(model, pair, params).first;
}

BaselineScore normalized_entropy(const ModelHandle& model, const data::RenderedPair& pair,
                                 const GenerationParams& params) {
  return entropy_scores(model, pair, params).second;
}

EquivalencePolicy EquivalencePolicy::normalized_exact_match() {
  return {"normalized_exact_match",
          [](const std::string& a, const std::string& b) { return normalize_answer(a) == normalize_answer(b); }};
}

EquivalencePolicy EquivalencePolicy::pluggable(std::string name,
                                               std::function<bool(const std::string&, const std::string&)> judge) {
  if (!judge) throw InvalidArgument("pluggable equivalence policy needs a judge");
  return {std::move(name), std::move(judge)};
}

EquivalencePolicy EquivalencePolicy::http_judge(const std::string& url) {
  const auto scheme = url.find("://");
  const auto path_at = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  const std::string base = path_at == std::string::npos ? url : url.substr(0, path_at);
  const std::string path = path_at == std::string::npos ? "/" : url.substr(path_at);
  return pluggable("http_judge", [base, path](const std::string& a, const std::string& b) {
    httplib::Client client(base);
    const nlohmann::json body = {{"a", a}, {"b", b}};
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res || res->status != 200) throw Error("equivalence judge at " + base + path + " failed");
    const auto reply = nlohmann::json::parse(res->body);
    return reply.at("same").get<bool>();
  });
}

std::vector<std::size_t> cluster_answers(const std::vector<std::string>& answers, const EquivalencePolicy& policy) {
  std::vector<std::size_t> founders;
  std::vector<std::size_t> sizes;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    bool placed = false;
    for (std::size_t c = 0; c < founders.size() && !placed; ++c) {
      if (policy.same(answers[founders[c]], answers[i])) {
        ++sizes[c];
        placed = true;
      }
    }
    if (!placed) {
      founders.push_back(i);
      sizes.push_back(1);
    }
  }
  return sizes;
}

double cluster_entropy(const std::vector<std::size_t>& sizes) {
  std::size_t n = 0;
  for (auto s : sizes) n += s;
  if (n == 0) throw InsufficientData("no answers to cluster");
  double h = 0.0;
  for (auto s : sizes) {
    if (s == 0) continue;
    const double p = static_cast<double>(s) / static_cast<double>(n);
    h -= p * std::log2(p);
  }
  return h;
}

BaselineScore semantic_entropy(const ModelHandle& model, const data::RenderedPair& pair,
                               const EquivalencePolicy& equivalence, const SemanticEntropyParams& params) {
  if (params.n_samples < 2) throw InvalidArgument("semantic entropy needs at least two samples");
  CostScope scope(model);
  const auto prompt = model::prefill(model, model::tokenize(model, answer_prompt(pair)));
  std::vector<std::string> answers;
  std::size_t empty = 0;
  for (int i = 0; i < params.n_samples; ++i) {
    model::GenerationOptions opts;
    opts.max_tokens = params.generation.max_tokens;
    opts.decoding = model::Decoding::sample(params.temperature, params.seed + static_cast<std::uint64_t>(i));
    auto gen = model::generate_from(model, prompt, opts);
    if (normalize_answer(gen.text).empty()) {
      ++empty;
      continue;
    }
    answers.push_back(std::move(gen.text));
  }
  if (answers.empty()) throw InsufficientData("example " + pair.example_id + ": all sampled answers are empty");
  auto sizes = cluster_answers(answers, equivalence);
  BaselineScore s;
  s.example_id = pair.example_id;
  s.method = Method::semantic_entropy;
  s.value = -cluster_entropy(sizes);
  std::sort(sizes.rbegin(), sizes.rend());
  s.aux["cluster_sizes"] = sizes;
  s.aux["samples"] = params.n_samples;
  s.aux["empty_samples"] = empty;
  s.aux["equivalence"] = equivalence.name;
  s.cost = scope.done(Method::semantic_entropy);
  s.aux["measured_forward_calls"] = s.cost.forward_passes;
  s.cost.forward_passes = static_cast<std::size_t>(params.n_samples);
  return s;
}

BaselineScore verbalized_binary(const ModelHandle& model, const data::RenderedPair& pair) {
  CostScope scope(model);
  const WordToken yes = first_content_token(model, " Yes");
  const auto dist = model::next_token_distribution(model, model::tokenize(model, answer_prompt(pair) + yes.lead));
  BaselineScore s;
  s.example_id = pair.example_id;
  s.method = Method::verbalized_binary;
  s.value = dist[static_cast<std::size_t>(yes.id)];
  s.cost = scope.done(Method::verbalized_binary);
  return s;
}

}  // namespace layerinfo::baselines
