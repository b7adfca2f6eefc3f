#include "mdlab/core/run_config.hpp"

#include <string>

#include "mdlab/core/error.hpp"

namespace mdlab {

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::low_confidence: return "low_confidence";
    case Strategy::topk_margin: return "topk_margin";
    case Strategy::entropy: return "entropy";
    case Strategy::random: return "random";
    case Strategy::left_to_right: return "left_to_right";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  for (const Strategy s : kAllStrategies) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

void RunConfig::validate() const {
  if (gen_length == 0) throw ConfigError("gen_length must be positive");
  if (steps == 0) throw ConfigError("steps must be positive");
  if (block_length == 0 || gen_length % block_length != 0) {
    throw ConfigError("gen_length must be a multiple of block_length");
  }
  if (steps % num_blocks() != 0) throw ConfigError("steps must divide evenly across blocks");
  if (!deterministic) throw ConfigError("only deterministic (argmax) decoding is supported");
}

}  // namespace mdlab
