#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "mdlab/benchmark.hpp"
#include "mdlab/core/segments.hpp"
#include "mdlab/engine.hpp"

namespace mdlab {

enum class TokenRole { template_token, retrieval_key, reasoning, answer_digit };

std::string_view to_string(TokenRole role);

struct LevelConfidence {
  double reasoning_base = 0.75;
  double answer_base = 0.65;
};

// Tunable confidence model. Defaults are chosen so that easy levels commit
// their answer early under confidence-ordered decoding and hard levels late.
struct OracleParams {
  double template_conf = 0.85;
  double key_base = 0.60;
  double key_resolved = 0.98;
  std::size_t ramp_steps = 5;
  std::array<LevelConfidence, 4> levels = {LevelConfidence{0.99, 0.99}, LevelConfidence{0.90, 0.88},
                                           LevelConfidence{0.75, 0.65}, LevelConfidence{0.75, 0.55}};
  double reasoning_boost = 0.0;  // added once all keys are committed
  double answer_boost = 0.05;    // added once all reasoning is committed
  // When set, answer_base = reasoning_base - gap for every level.
  std::optional<double> gap;
  double noise = 0.01;
  std::size_t top_k = 16;
  // Scales the key ramp with gen_length relative to reference_length: longer
  // canvases start lower and take proportionally longer to settle.
  bool length_scaling = false;
  std::size_t reference_length = 64;

  // Throws ConfigError.
  void validate() const;
  LevelConfidence level(Difficulty d) const;

  static OracleParams from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// reasoning_base - answer_base at the given level, ignoring any gap override.
double level_gap(const OracleParams& params, Difficulty d);

struct OraclePosition {
  TokenRole role = TokenRole::template_token;
  TokenId gold = 0;
  TokenId wrong = 0;  // shown instead of gold by an unresolved, unlucky guess
  std::vector<std::size_t> depends_on;  // generation-relative positions
  double base_conf = 0.0;
  double resolved_conf = 0.0;
  double guess = 0.0;  // fixed uniform draw compared against the current confidence
  std::vector<TokenId> distractors;
};

struct DependencyOracleSpec {
  std::size_t prompt_len = 0;
  std::size_t ramp_steps = 0;
  double key_base = 0.0;
  double key_resolved = 0.0;
  double noise = 0.0;
  double floor_conf = 0.0;
  std::uint64_t seed = 0;
  std::vector<OraclePosition> positions;  // one per generation position

  // Throws ConfigError if any invariant of the spec is broken.
  void validate() const;
};

// Derives roles and dependencies from a reference completion: delimiters,
// newlines and padding are template tokens; numbers in the Retrieval section
// are keys; reasoning tokens depend on every key; answer tokens depend on
// every reasoning token.
DependencyOracleSpec build_oracle_spec(std::span<const TokenId> reference, const SegmentLayout& layout,
                                       Difficulty level, const Vocabulary& vocab, const OracleParams& params,
                                       std::size_t prompt_len, std::uint64_t seed);

// Convenience wrapper over reference_tokens for a corpus problem.
DependencyOracleSpec build_oracle_spec(const Problem& problem, OutputOrder order, std::size_t gen_length,
                                       const Vocabulary& vocab, const OracleParams& params,
                                       std::size_t prompt_len, std::uint64_t seed);

// Current confidence of one position before noise, as used for the guess.
double oracle_confidence(const DependencyOracleSpec& spec, std::size_t gen_pos, const MaskedSequence& seq,
                         std::size_t step, bool* resolved = nullptr);

StepPrediction oracle_predict(const DependencyOracleSpec& spec, const MaskedSequence& seq, std::size_t step);

class OracleSession : public PredictorSession {
 public:
  explicit OracleSession(DependencyOracleSpec spec);
  StepPrediction predict(const MaskedSequence& seq, std::size_t step) override;
  const DependencyOracleSpec& spec() const { return spec_; }

 private:
  DependencyOracleSpec spec_;
};

}  // namespace mdlab
