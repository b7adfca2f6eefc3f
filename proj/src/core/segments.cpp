#include "mdlab/core/segments.hpp"

#include <algorithm>
#include <set>

#include "mdlab/core/error.hpp"

namespace mdlab {

std::string_view to_string(SegmentLabel label) {
  switch (label) {
    case SegmentLabel::retrieval: return "retrieval";
    case SegmentLabel::reasoning: return "reasoning";
    case SegmentLabel::answer: return "answer";
  }
  return "?";
}

std::string_view to_string(OutputOrder order) {
  return order == OutputOrder::cot_first ? "cot_first" : "answer_first";
}

OutputOrder parse_order(std::string_view name) {
  if (name == "cot_first" || name == "CoT-First") return OutputOrder::cot_first;
  if (name == "answer_first" || name == "Answer-First") return OutputOrder::answer_first;
  throw ConfigError("unknown output order '" + std::string(name) + "'");
}

SegmentLayout SegmentLayout::reason_order_qa(OutputOrder order) {
  SegmentLayout layout;
  layout.order = order;
  if (order == OutputOrder::cot_first) {
    layout.segments = {{SegmentLabel::retrieval, "Retrieval:", {}},
                       {SegmentLabel::reasoning, "Reasoning:", {}},
                       {SegmentLabel::answer, "Answer:", {}}};
  } else {
    layout.segments = {{SegmentLabel::answer, "Answer:", {}},
                       {SegmentLabel::reasoning, "Reasoning:", {}},
                       {SegmentLabel::retrieval, "Retrieval:", {}}};
  }
  return layout;
}

SegmentLayout SegmentLayout::reasoning_answer(OutputOrder order) {
  SegmentLayout layout;
  layout.order = order;
  if (order == OutputOrder::cot_first) {
    layout.segments = {{SegmentLabel::reasoning, "Reasoning:", {}}, {SegmentLabel::answer, "Answer:", {}}};
  } else {
    layout.segments = {{SegmentLabel::answer, "Answer:", {}}, {SegmentLabel::reasoning, "Reasoning:", {}}};
  }
  return layout;
}

const Segment* SegmentLayout::find(SegmentLabel label) const {
  for (const auto& s : segments) {
    if (s.label == label) return &s;
  }
  return nullptr;
}

TextSpan SegmentLayout::span(SegmentLabel label) const {
  const Segment* s = find(label);
  return s && s->span ? *s->span : TextSpan{};
}

std::string_view SegmentLayout::text(SegmentLabel label, std::string_view full) const {
  const TextSpan sp = span(label);
  if (sp.empty() || sp.end > full.size()) return {};
  return full.substr(sp.begin, sp.end - sp.begin);
}

void SegmentLayout::validate() const {
  std::set<SegmentLabel> seen;
  for (const auto& s : segments) {
    if (s.delimiter.empty()) throw ConfigError("segment delimiter must be non-empty");
    if (!seen.insert(s.label).second) throw ConfigError("duplicate segment label");
  }
}

SegmentLayout resolve_segments(std::string_view text, SegmentLayout layout) {
  layout.validate();
  layout.duplicate_delimiter = false;

  struct Found {
    std::size_t pos;
    std::size_t index;
  };
  std::vector<Found> found;
  for (std::size_t i = 0; i < layout.segments.size(); ++i) {
    auto& seg = layout.segments[i];
    seg.span.reset();
    const std::size_t pos = text.find(seg.delimiter);
    if (pos == std::string_view::npos) continue;
    if (text.find(seg.delimiter, pos + 1) != std::string_view::npos) layout.duplicate_delimiter = true;
    found.push_back({pos, i});
  }
  std::sort(found.begin(), found.end(), [](const Found& a, const Found& b) { return a.pos < b.pos; });

  for (std::size_t k = 0; k < found.size(); ++k) {
    auto& seg = layout.segments[found[k].index];
    const std::size_t begin = std::min(found[k].pos + seg.delimiter.size(), text.size());
    std::size_t end = text.size();
    for (std::size_t m = k + 1; m < found.size(); ++m) {
      if (found[m].pos >= begin) {
        end = found[m].pos;
        break;
      }
    }
    seg.span = TextSpan{begin, std::max(begin, end)};
  }
  return layout;
}

std::vector<std::size_t> tokens_in_span(const RenderedText& rendered, std::string_view text,
                                        TextSpan span) {
  std::vector<std::size_t> out;
  if (span.empty()) return out;
  for (std::size_t i = 0; i < rendered.offsets.size(); ++i) {
    const auto [b, e] = rendered.offsets[i];
    if (e <= b || b < span.begin || e > span.end) continue;
    if (text.substr(b, e - b) == "\n") continue;
    out.push_back(i);
  }
  return out;
}

}  // namespace mdlab
