#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdlab/core/prediction.hpp"
#include "mdlab/core/run_config.hpp"
#include "mdlab/core/segments.hpp"
#include "mdlab/core/sequence.hpp"
#include "mdlab/core/vocabulary.hpp"
#include "mdlab/scheduler.hpp"

namespace mdlab {

// One generation's view of a predictor. predict must return a distribution
// for every masked position of seq, ascending by position.
class PredictorSession {
 public:
  virtual ~PredictorSession() = default;
  virtual StepPrediction predict(const MaskedSequence& seq, std::size_t step) = 0;
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::unique_ptr<PredictorSession> open_session(std::span<const TokenId> prompt,
                                                         std::size_t canvas_length) = 0;
};

struct StepRecord {
  std::size_t step = 0;
  ScoreVector scores;  // one per position masked at the start of the step
  // Argmax over the generation region: committed tokens verbatim, masked
  // positions replaced by their current prediction.
  std::vector<TokenId> snapshot;
  UnmaskDecision decision;
};

struct RunError {
  std::size_t step = 0;
  std::string message;
};

struct RunTrace {
  RunConfig config;
  std::vector<TokenId> prompt;
  std::size_t prompt_len = 0;
  std::vector<StepRecord> steps;
  std::vector<TokenId> final_tokens;  // generation region only
  std::string final_text;             // output-mode rendering of final_tokens
  SegmentLayout layout;               // resolved on final_text
  std::optional<RunError> error;

  bool complete() const { return !error && steps.size() == config.steps; }
};

// Runs the reverse process. Predictor failures end the run early with the
// partial trace and an error record; configuration errors throw ConfigError.
RunTrace run(std::span<const TokenId> prompt, const SegmentLayout& layout, const RunConfig& config,
             PredictorSession& session, const Vocabulary& vocab);

// Prompt followed by the step's generation-region snapshot.
std::vector<TokenId> latent_snapshot(const RunTrace& trace, std::size_t step);

// Output-mode text of the generation region of the step's snapshot.
std::string latent_generation_text(const RunTrace& trace, std::size_t step, const Vocabulary& vocab);

inline constexpr std::size_t kNeverCommitted = static_cast<std::size_t>(-1);

// Step index at which each generation position was committed
// (kNeverCommitted for positions left masked by an aborted run).
std::vector<std::size_t> commit_steps(const RunTrace& trace);

// Returns human-readable violations of the trace invariants; empty when the
// trace is consistent.
std::vector<std::string> check_trace_invariants(const RunTrace& trace);

}  // namespace mdlab
