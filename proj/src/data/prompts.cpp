#include "layerinfo/data/prompts.hpp"

#include <algorithm>

#include "layerinfo/error.hpp"

namespace layerinfo::data {
namespace {

struct Rendered {
  std::string prefix;  // text between context separator and scored segment
  std::string target;  // scored segment
};

Rendered split_prompt(const Example& ex, const PromptTemplate& t, const RenderOptions& o) {
  if (t.kind == TemplateKind::none || t.instruction_text.empty()) return {"", ex.question};
  if (o.scored == ScoredSpan::question_only) {
    // An instruction after the question cannot influence the question's
    // token probabilities, so it is not part of the scored input.
    if (t.placement == Placement::after_question) return {"", ex.question};
    return {t.instruction_text + o.instruction_joiner, ex.question};
  }
  if (t.placement == Placement::before_question) {
    return {"", t.instruction_text + o.instruction_joiner + ex.question};
  }
  return {"", ex.question + o.instruction_joiner + t.instruction_text};
}

// Index of the first token covering text at or after `byte`, provided no
// token straddles `byte`. A token that reaches back over spaces only (a
// word-initial space marker) counts as starting at `byte`.
std::optional<std::size_t> boundary_token(const model::TokenSequence& seq, std::string_view text, std::size_t byte) {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto& s = seq.offsets[i];
    if (s.begin == s.end) continue;  // prefix token
    if (s.begin < byte && s.end > byte) {
      const auto lead = text.substr(s.begin, byte - s.begin);
      if (lead.find_first_not_of(' ') == std::string_view::npos) return i;
      return std::nullopt;
    }
    if (s.begin >= byte) return i;
  }
  return std::nullopt;
}

std::optional<RenderedPair> attempt(const Example& ex, const PromptTemplate& t, const model::ModelHandle& m,
                                    const RenderOptions& o, const std::string& sep, std::string& why) {
  const Rendered r = split_prompt(ex, t, o);
  RenderedPair pair;
  pair.example_id = ex.example_id;
  pair.template_id = t.template_id;
  pair.separator = sep;
  pair.null_text = r.prefix + r.target;
  pair.ctx_text = ex.context.empty() ? pair.null_text : ex.context + sep + r.prefix + r.target;
  pair.null_pass = model::tokenize(m, pair.null_text);
  pair.ctx_pass = ex.context.empty() ? pair.null_pass : model::tokenize(m, pair.ctx_text);

  const auto null_start = boundary_token(pair.null_pass, pair.null_text, pair.null_text.size() - r.target.size());
  const auto ctx_start = boundary_token(pair.ctx_pass, pair.ctx_text, pair.ctx_text.size() - r.target.size());
  if (!null_start || !ctx_start) {
    why = "scored segment boundary falls inside a token";
    return std::nullopt;
  }
  if (*null_start == 0 || *ctx_start == 0) {
    why = "tokenizer provides no prefix token to condition the first scored token on";
    return std::nullopt;
  }
  pair.target_span_null = {*null_start, pair.null_pass.size()};
  pair.target_span_ctx = {*ctx_start, pair.ctx_pass.size()};
  if (pair.target_span_null.size() == 0) {
    why = "empty scored segment";
    return std::nullopt;
  }
  const bool same = std::equal(pair.null_pass.ids.begin() + static_cast<std::ptrdiff_t>(*null_start),
                               pair.null_pass.ids.end(),
                               pair.ctx_pass.ids.begin() + static_cast<std::ptrdiff_t>(*ctx_start),
                               pair.ctx_pass.ids.end());
  if (!same) {
    why = "scored tokens differ between null and context passes";
    return std::nullopt;
  }
  return pair;
}

}  // namespace

PromptTemplate PromptTemplate::none() { return {"none", TemplateKind::none, "", Placement::before_question}; }

PromptTemplate PromptTemplate::open_ended() {
  return {"open_ended", TemplateKind::open_ended, "Answer the question or say don't know", Placement::before_question};
}

PromptTemplate PromptTemplate::binary() {
  return {"binary", TemplateKind::binary, "Is this answerable?", Placement::before_question};
}

PromptTemplate PromptTemplate::certainty() {
  return {"certainty", TemplateKind::certainty, "Are you certain about the answer?", Placement::before_question};
}

PromptTemplate PromptTemplate::custom(std::string id, std::string instruction, Placement placement) {
  return {std::move(id), TemplateKind::custom, std::move(instruction), placement};
}

PromptTemplate PromptTemplate::builtin(std::string_view id) {
  if (id == "none") return none();
  if (id == "open_ended") return open_ended();
  if (id == "binary") return binary();
  if (id == "certainty") return certainty();
  throw InvalidArgument("unknown template '" + std::string(id) + "'");
}

void PromptTemplate::validate() const {
  if (template_id.empty()) throw InvalidArgument("template id is empty");
  if (kind == TemplateKind::none && !instruction_text.empty()) {
    throw InvalidArgument("template '" + template_id + "' of kind none carries an instruction");
  }
  if (kind != TemplateKind::none && instruction_text.empty()) {
    throw InvalidArgument("template '" + template_id + "' has no instruction text");
  }
}

std::string to_string(TemplateKind kind) {
  switch (kind) {
    case TemplateKind::none: return "none";
    case TemplateKind::open_ended: return "open_ended";
    case TemplateKind::binary: return "binary";
    case TemplateKind::certainty: return "certainty";
    case TemplateKind::custom: return "custom";
  }
  return "custom";
}

std::string prompt_segment(const Example& example, const PromptTemplate& tmpl, const RenderOptions& options) {
  const Rendered r = split_prompt(example, tmpl, options);
  return r.prefix + r.target;
}

RenderOutcome try_render_pair(const Example& example, const PromptTemplate& tmpl, const model::ModelHandle& model,
                              const RenderOptions& options) {
  tmpl.validate();
  if (example.question.empty()) return {std::nullopt, "empty question"};
  std::string why;
  if (auto p = attempt(example, tmpl, model, options, options.separator, why)) return {std::move(p), ""};
  if (auto p = attempt(example, tmpl, model, options, options.separator + "\n", why)) return {std::move(p), ""};
  // Metaspace tokenizers mark only the first word of a text with a leading
  // space; a trailing space on the separator restores that marker.
  if (auto p = attempt(example, tmpl, model, options, options.separator + " ", why)) return {std::move(p), ""};
  return {std::nullopt, why};
}

RenderedPair render_pair(const Example& example, const PromptTemplate& tmpl, const model::ModelHandle& model,
                         const RenderOptions& options) {
  RenderOutcome out = try_render_pair(example, tmpl, model, options);
  if (!out.pair) throw SpanMismatch("example " + example.example_id + ": " + out.flag_reason);
  return std::move(*out.pair);
}

}  // namespace layerinfo::data
