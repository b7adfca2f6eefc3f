#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mdlab/core/tokenizer.hpp"

namespace mdlab {

enum class SegmentLabel { retrieval, reasoning, answer };
enum class OutputOrder { cot_first, answer_first };

std::string_view to_string(SegmentLabel label);
std::string_view to_string(OutputOrder order);
// Accepts "cot_first"/"CoT-First" and "answer_first"/"Answer-First".
OutputOrder parse_order(std::string_view name);

struct TextSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool empty() const { return end <= begin; }
  friend bool operator==(const TextSpan&, const TextSpan&) = default;
};

struct Segment {
  SegmentLabel label;
  std::string delimiter;
  // Unset until resolved, or when the delimiter does not occur in the text.
  std::optional<TextSpan> span;
};

struct SegmentLayout {
  OutputOrder order = OutputOrder::cot_first;
  std::vector<Segment> segments;
  // Set by resolve_segments when some delimiter occurs more than once.
  bool duplicate_delimiter = false;

  // Retrieval/Reasoning/Answer in the order implied by `order`.
  static SegmentLayout reason_order_qa(OutputOrder order);
  // Reasoning/Answer only, for the generic chain-of-thought templates.
  static SegmentLayout reasoning_answer(OutputOrder order);

  const Segment* find(SegmentLabel label) const;
  // Empty span when the label is absent or unresolved.
  TextSpan span(SegmentLabel label) const;
  std::string_view text(SegmentLabel label, std::string_view full) const;

  // Throws ConfigError on duplicate labels or empty delimiters.
  void validate() const;
};

// Each span runs from just after its delimiter to the next delimiter that
// occurs later in the text, or to the end. Only first occurrences count.
SegmentLayout resolve_segments(std::string_view text, SegmentLayout layout);

// Token indices whose rendered extent lies inside `span`, excluding newline
// and dropped tokens.
std::vector<std::size_t> tokens_in_span(const RenderedText& rendered, std::string_view text,
                                        TextSpan span);

}  // namespace mdlab
