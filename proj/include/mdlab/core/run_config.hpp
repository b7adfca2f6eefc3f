#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>

namespace mdlab {

enum class Strategy { low_confidence, topk_margin, entropy, random, left_to_right };

inline constexpr std::array<Strategy, 5> kAllStrategies = {
    Strategy::low_confidence, Strategy::topk_margin, Strategy::entropy, Strategy::random,
    Strategy::left_to_right};

std::string_view to_string(Strategy strategy);
// Throws ConfigError for unknown names.
Strategy parse_strategy(std::string_view name);

struct RunConfig {
  std::size_t gen_length = 256;
  std::size_t steps = 256;
  std::size_t block_length = 256;
  Strategy strategy = Strategy::low_confidence;
  std::uint64_t seed = 0;
  // Committed tokens are always the argmax; sampling is not supported.
  bool deterministic = true;

  // Throws ConfigError unless gen_length % block_length == 0 and steps divide
  // evenly across blocks.
  void validate() const;

  std::size_t num_blocks() const { return gen_length / block_length; }
  std::size_t steps_per_block() const { return steps / num_blocks(); }
};

}  // namespace mdlab
