#include "mdlab/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

namespace mdlab {

std::vector<std::int64_t> extract_integers(std::string_view text) {
  std::vector<std::int64_t> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] < '0' || text[i] > '9') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && text[j] >= '0' && text[j] <= '9') ++j;
    std::int64_t v = 0;
    const auto res = std::from_chars(text.data() + i, text.data() + j, v);
    if (res.ec == std::errc()) out.push_back(v);  // overlong runs are not keys
    i = j;
  }
  return out;
}

F1Score set_f1(const std::vector<std::int64_t>& predicted, const std::vector<std::int64_t>& gold) {
  const std::set<std::int64_t> p(predicted.begin(), predicted.end());
  const std::set<std::int64_t> g(gold.begin(), gold.end());
  F1Score s;
  if (p.empty() || g.empty()) return s;
  std::size_t hit = 0;
  for (const auto v : p) hit += g.count(v);
  s.precision = static_cast<double>(hit) / static_cast<double>(p.size());
  s.recall = static_cast<double>(hit) / static_cast<double>(g.size());
  if (hit > 0) s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

F1Score retrieval_f1(std::string_view output_text, const std::vector<std::int64_t>& gold_keys,
                     const SegmentLayout& layout) {
  return set_f1(extract_integers(layout.text(SegmentLabel::retrieval, output_text)), gold_keys);
}

AnswerCheck parse_answer(std::string_view span_text, std::int64_t gold) {
  std::string s;
  for (const char c : span_text) {
    if (c != ' ' && c != '\t' && c != '\n' && c != '\r') s.push_back(c);
  }
  static constexpr std::string_view kBoxed = "\\boxed{";
  if (const auto at = s.find(kBoxed); at != std::string::npos) {
    const auto close = s.find('}', at + kBoxed.size());
    s = s.substr(at + kBoxed.size(), close == std::string::npos ? std::string::npos : close - at - kBoxed.size());
  }
  AnswerCheck out;
  std::string_view v = s;
  if (!v.empty() && v.front() == '+') v.remove_prefix(1);
  std::int64_t value = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), value);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    out.parse_failure = true;
    return out;
  }
  out.value = value;
  out.correct = value == gold;
  return out;
}

AnswerCheck reasoning_accuracy(std::string_view output_text, std::int64_t gold_answer, const SegmentLayout& layout) {
  return parse_answer(layout.text(SegmentLabel::answer, output_text), gold_answer);
}

std::vector<std::size_t> segment_positions(const RunTrace& trace, SegmentLabel label, const Vocabulary& vocab) {
  const TextSpan span = trace.layout.span(label);
  if (span.empty()) return {};
  const RenderedText rendered = detokenize(trace.final_tokens, vocab, RenderMode::output);
  return tokens_in_span(rendered, rendered.text, span);
}

Exposure exposure_step(const RunTrace& trace, SegmentLabel label, const Vocabulary& vocab) {
  Exposure e;
  const auto positions = segment_positions(trace, label, vocab);
  if (positions.empty()) {
    e.empty = true;
    return e;
  }
  const auto when = commit_steps(trace);
  std::size_t last = 0;
  for (const auto j : positions) {
    if (when[j] == kNeverCommitted) {
      e.incomplete = true;
      continue;
    }
    last = std::max(last, when[j]);
  }
  e.step = e.incomplete ? trace.config.steps : last + 1;
  return e;
}

namespace {

// Entropy each generation position had at the step that committed it.
std::vector<double> commit_entropy(const RunTrace& trace) {
  std::vector<double> h(trace.config.gen_length, 0.0);
  for (const auto& rec : trace.steps) {
    for (const auto pos : rec.decision.chosen) {
      auto it = std::lower_bound(rec.scores.begin(), rec.scores.end(), pos,
                                 [](const PositionScore& s, std::size_t p) { return s.position < p; });
      if (it != rec.scores.end() && it->position == pos) h[pos - trace.prompt_len] = it->entropy;
    }
  }
  return h;
}

}  // namespace

std::optional<double> entropy_gap(const RunTrace& trace, const Vocabulary& vocab) {
  const auto answer = segment_positions(trace, SegmentLabel::answer, vocab);
  const auto reasoning = segment_positions(trace, SegmentLabel::reasoning, vocab);
  if (answer.empty() || reasoning.empty()) return std::nullopt;
  const auto h = commit_entropy(trace);
  auto mean = [&](const std::vector<std::size_t>& ps) {
    double s = 0.0;
    for (const auto j : ps) s += h[j];
    return s / static_cast<double>(ps.size());
  };
  return mean(answer) - mean(reasoning);
}

LatentCurve latent_f1_curve(const RunTrace& trace, const std::vector<std::int64_t>& gold_keys,
                            const Vocabulary& vocab, double threshold) {
  LatentCurve c;
  c.crossing = trace.config.steps + 1;
  SegmentLayout blank = trace.layout;
  for (auto& s : blank.segments) s.span.reset();
  for (std::size_t t = 0; t < trace.steps.size(); ++t) {
    const std::string text = latent_generation_text(trace, t, vocab);
    const SegmentLayout layout = resolve_segments(text, blank);
    c.f1.push_back(retrieval_f1(text, gold_keys, layout).f1);
    if (c.crossing == trace.config.steps + 1 && c.f1.back() >= threshold) c.crossing = t;
  }
  return c;
}

ConfidenceRecord confidence_record(const RunTrace& trace) {
  const std::size_t L = trace.config.gen_length;
  ConfidenceRecord r{Grid(trace.steps.size(), L, 1.0), Grid(trace.steps.size(), L, 0.0)};
  for (std::size_t t = 0; t < trace.steps.size(); ++t) {
    for (const auto& s : trace.steps[t].scores) {
      const std::size_t j = s.position - trace.prompt_len;
      r.conf.at(t, j) = s.conf;
      r.entropy.at(t, j) = s.entropy;
    }
  }
  return r;
}

std::vector<std::size_t> difficulty(const Grid& conf, double tau) {
  std::vector<std::size_t> d(conf.cols, conf.rows + 1);
  for (std::size_t j = 0; j < conf.cols; ++j) {
    for (std::size_t t = 0; t < conf.rows; ++t) {
      if (conf.at(t, j) > tau) {
        d[j] = t;
        break;
      }
    }
  }
  return d;
}

namespace {

// Corrected two-pass: mean first, then squared deviations less the rounding
// error of the mean. Constant rows are exactly zero.
void row_stats(const Grid& g, std::size_t t, double& mean, double& sigma) {
  if (g.cols == 0) {
    mean = sigma = 0.0;
    return;
  }
  const double n = static_cast<double>(g.cols);
  double sum = 0.0, lo = g.at(t, 0), hi = lo;
  for (std::size_t j = 0; j < g.cols; ++j) {
    sum += g.at(t, j);
    lo = std::min(lo, g.at(t, j));
    hi = std::max(hi, g.at(t, j));
  }
  const double m = lo == hi ? lo : sum / n;
  double ss = 0.0, comp = 0.0;
  for (std::size_t j = 0; j < g.cols; ++j) {
    const double d = g.at(t, j) - m;
    ss += d * d;
    comp += d;
  }
  mean = m;
  sigma = std::sqrt(std::max(0.0, (ss - comp * comp / n) / n));
}

}  // namespace

LandscapeStats landscape_serial(const Grid& conf) {
  LandscapeStats s{std::vector<double>(conf.rows), std::vector<double>(conf.rows)};
  for (std::size_t t = 0; t < conf.rows; ++t) row_stats(conf, t, s.mean[t], s.sigma[t]);
  return s;
}

LandscapeStats landscape(const Grid& conf) {
  LandscapeStats s{std::vector<double>(conf.rows), std::vector<double>(conf.rows)};
  const auto rows = static_cast<std::ptrdiff_t>(conf.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < rows; ++t) {
    const auto r = static_cast<std::size_t>(t);
    row_stats(conf, r, s.mean[r], s.sigma[r]);
  }
  return s;
}

std::optional<AnswerConfidence> answer_confidence(const RunTrace& trace, const ConfidenceRecord& record,
                                                  const Vocabulary& vocab) {
  const auto positions = segment_positions(trace, SegmentLabel::answer, vocab);
  if (positions.empty() || record.conf.rows == 0) return std::nullopt;
  const auto when = commit_steps(trace);
  AnswerConfidence out;
  for (const auto j : positions) {
    double masked = 0.0, all = 0.0;
    std::size_t n_masked = 0;
    for (std::size_t t = 0; t < record.conf.rows; ++t) {
      const double c = record.conf.at(t, j);
      all += c;
      if (when[j] == kNeverCommitted || t <= when[j]) {
        masked += c;
        ++n_masked;
      }
    }
    out.masked_only += n_masked ? masked / static_cast<double>(n_masked) : 0.0;
    out.all_steps += all / static_cast<double>(record.conf.rows);
  }
  out.masked_only /= static_cast<double>(positions.size());
  out.all_steps /= static_cast<double>(positions.size());
  return out;
}

}  // namespace mdlab
