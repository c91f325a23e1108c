#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "layerinfo/data/example.hpp"
#include "layerinfo/model/model_adapter.hpp"

namespace layerinfo::data {

enum class TemplateKind { none, open_ended, binary, certainty, custom };
enum class Placement { before_question, after_question };
// Which tokens of the rendered prompt are scored.
enum class ScoredSpan { instruction_and_question, question_only };

struct PromptTemplate {
  std::string template_id;
  TemplateKind kind = TemplateKind::none;
  std::string instruction_text;
  Placement placement = Placement::before_question;

  static PromptTemplate none();
  static PromptTemplate open_ended();
  static PromptTemplate binary();
  static PromptTemplate certainty();
  static PromptTemplate custom(std::string id, std::string instruction,
                               Placement placement = Placement::before_question);
  // "none", "open_ended", "binary" or "certainty".
  static PromptTemplate builtin(std::string_view id);

  void validate() const;
};

std::string to_string(TemplateKind kind);

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const IndexRange&) const = default;
};

// The two token sequences scored for one example under one template. The
// scored span runs to the end of each sequence and holds identical ids in
// both passes.
struct RenderedPair {
  std::string example_id;
  std::string template_id;
  std::string null_text;  // text of the null-context pass (no prefix token)
  std::string ctx_text;   // text of the with-context pass
  model::TokenSequence null_pass;
  model::TokenSequence ctx_pass;
  IndexRange target_span_null;
  IndexRange target_span_ctx;
  std::string separator;  // between context and the prompt segment
};

struct RenderOptions {
  std::string separator = "\n";
  std::string instruction_joiner = " ";
  ScoredSpan scored = ScoredSpan::instruction_and_question;
};

struct RenderOutcome {
  std::optional<RenderedPair> pair;
  std::string flag_reason;  // set when `pair` is empty
};

// Renders both passes and enforces scored-span equality. When the
// tokenisation of the scored segment differs between passes, one extra
// newline (then one extra space) is added to the separator and the check
// repeated; if that still fails the example is flagged.
RenderOutcome try_render_pair(const Example& example, const PromptTemplate& tmpl, const model::ModelHandle& model,
                              const RenderOptions& options = {});

// As try_render_pair, but throws SpanMismatch for flagged examples.
RenderedPair render_pair(const Example& example, const PromptTemplate& tmpl, const model::ModelHandle& model,
                         const RenderOptions& options = {});

// The text segment that is scored (instruction and/or question).
std::string prompt_segment(const Example& example, const PromptTemplate& tmpl, const RenderOptions& options = {});

}  // namespace layerinfo::data
