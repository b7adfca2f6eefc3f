#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "mdlab/core/segments.hpp"
#include "mdlab/core/vocabulary.hpp"
#include "mdlab/engine.hpp"

namespace mdlab {

// Unsigned digit runs in text order.
std::vector<std::int64_t> extract_integers(std::string_view text);

struct F1Score {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Set-based F1 of the integers in the resolved Retrieval span.
F1Score retrieval_f1(std::string_view output_text, const std::vector<std::int64_t>& gold_keys,
                     const SegmentLayout& layout);
// Same scoring applied to an arbitrary extraction.
F1Score set_f1(const std::vector<std::int64_t>& predicted, const std::vector<std::int64_t>& gold);

struct AnswerCheck {
  bool correct = false;
  bool parse_failure = false;
  std::optional<std::int64_t> value;
};

// Parses an answer string: whitespace is ignored and a \boxed{...} wrapper
// is unwrapped. parse_failure is set when no integer can be read.
AnswerCheck parse_answer(std::string_view span_text, std::int64_t gold);

AnswerCheck reasoning_accuracy(std::string_view output_text, std::int64_t gold_answer,
                               const SegmentLayout& layout);

// Generation-relative positions whose tokens lie inside the segment of the
// trace's resolved layout (delimiters and newlines excluded).
std::vector<std::size_t> segment_positions(const RunTrace& trace, SegmentLabel label, const Vocabulary& vocab);

struct Exposure {
  std::size_t step = 0;  // in [1, T]; 0 for an empty segment
  bool empty = false;
  bool incomplete = false;  // some position never committed (aborted run)
};

// One plus the latest commit step over the segment's positions: the number
// of steps executed when the last mask in the segment disappears.
Exposure exposure_step(const RunTrace& trace, SegmentLabel label, const Vocabulary& vocab);

// Mean commit-time entropy over Answer positions minus the same over
// Reasoning positions. Absent when either segment is empty.
std::optional<double> entropy_gap(const RunTrace& trace, const Vocabulary& vocab);

struct LatentCurve {
  std::vector<double> f1;     // one per executed step
  std::size_t crossing = 0;   // first step with f1 >= threshold, T+1 if none
};

LatentCurve latent_f1_curve(const RunTrace& trace, const std::vector<std::int64_t>& gold_keys,
                            const Vocabulary& vocab, double threshold = 0.95);

// Dense row-major matrix: rows are steps, columns generation positions.
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Grid() = default;
  Grid(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct ConfidenceRecord {
  Grid conf;     // 1.0 for positions committed at an earlier step
  Grid entropy;  // 0.0 for positions committed at an earlier step
};

ConfidenceRecord confidence_record(const RunTrace& trace);

inline constexpr double kDefaultDifficultyTau = 0.9;

// d_j: first step with c > tau, or rows + 1 if never.
std::vector<std::size_t> difficulty(const Grid& conf, double tau = kDefaultDifficultyTau);

inline double separation(const Grid& conf, std::size_t step, std::size_t i, std::size_t j) {
  const double d = conf.at(step, i) - conf.at(step, j);
  return d < 0 ? -d : d;
}

struct LandscapeStats {
  std::vector<double> mean;   // per step
  std::vector<double> sigma;  // per step, population standard deviation
};

// Per-step mean and spread of the confidence landscape. Rows are processed
// in parallel; landscape_serial is the single-threaded reference.
LandscapeStats landscape(const Grid& conf);
LandscapeStats landscape_serial(const Grid& conf);

struct AnswerConfidence {
  double masked_only = 0.0;  // mean over steps where the position was masked
  double all_steps = 0.0;    // mean over all steps, committed counting as 1.0
};

// Averaged over the Answer segment's positions; absent for an empty segment.
std::optional<AnswerConfidence> answer_confidence(const RunTrace& trace, const ConfidenceRecord& record,
                                                  const Vocabulary& vocab);

}  // namespace mdlab
