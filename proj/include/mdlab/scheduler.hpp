#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "mdlab/core/prediction.hpp"
#include "mdlab/core/rng.hpp"
#include "mdlab/core/run_config.hpp"
#include "mdlab/core/sequence.hpp"

namespace mdlab {

struct PositionScore {
  std::size_t position = 0;
  double conf = 0.0;     // top-1 probability
  double margin = 0.0;   // top-1 minus top-2 enumerated probability
  double entropy = 0.0;  // nats, remainder mass as one pseudo-outcome
  TokenId argmax = 0;
};

using ScoreVector = std::vector<PositionScore>;

struct UnmaskDecision {
  std::size_t step = 0;
  std::vector<std::size_t> chosen;  // ascending canvas positions
  std::vector<std::pair<std::size_t, TokenId>> committed;  // same order as chosen
};

// Entropy in nats of the sparse distribution, skipping zero terms.
double sparse_entropy(const PositionDistribution& dist);

// Scores one distribution. Throws ProtocolError on all-zero probabilities or
// fewer than two entries.
PositionScore score_position(const PositionDistribution& dist);

// Scores every position of the prediction, in prediction order.
ScoreVector score(const StepPrediction& pred, std::size_t vocab_size);

// Picks `quota` positions among the scores that fall inside active_block.
// Result is sorted ascending. Throws std::invalid_argument when quota exceeds
// the candidates.
std::vector<std::size_t> select(Strategy strategy, const ScoreVector& scores, std::size_t quota,
                                Rng& rng, PositionRange active_block);

// ceil(remaining_masked / remaining_steps); the last step of a block takes
// everything left.
std::size_t step_quota(std::size_t remaining_masked, std::size_t remaining_steps);

}  // namespace mdlab
