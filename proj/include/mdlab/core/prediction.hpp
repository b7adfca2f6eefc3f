#pragma once

#include <cstddef>
#include <vector>

#include "mdlab/core/sequence.hpp"
#include "mdlab/core/vocabulary.hpp"

namespace mdlab {

inline constexpr double kProbabilityTolerance = 1e-6;

struct TokenProb {
  TokenId token;
  double prob;
};

// Sparse top-K distribution for one masked position. remainder_mass is the
// probability not enumerated in entries.
struct PositionDistribution {
  std::size_t position = 0;
  std::vector<TokenProb> entries;
  double remainder_mass = 0.0;
};

struct StepPrediction {
  std::size_t step = 0;
  std::vector<PositionDistribution> positions;  // ascending by position
};

// Highest-probability token; equal probabilities resolve to the lower id.
TokenId argmax_token(const PositionDistribution& dist);

// Checks one distribution in isolation. Throws ProtocolError.
void validate_distribution(const PositionDistribution& dist, std::size_t vocab_size,
                           TokenId mask_id);

// Checks the prediction against the canvas: exactly one distribution per
// masked position, none for committed ones, each distribution well formed.
void validate_prediction(const StepPrediction& pred, const MaskedSequence& seq,
                         std::size_t vocab_size);

}  // namespace mdlab
