#include "mdlab/core/vocabulary.hpp"

#include <algorithm>
#include <string>

#include "mdlab/core/error.hpp"
#include "mdlab/core/tokenizer.hpp"

namespace mdlab {

namespace {

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens, TokenId mask_id)
    : tokens_(std::move(tokens)), mask_id_(mask_id) {
  if (tokens_.size() < 2) throw ConfigError("vocabulary needs the mask token and at least one real token");
  if (mask_id_ < 0 || static_cast<std::size_t>(mask_id_) >= tokens_.size()) {
    throw ConfigError("vocabulary mask_id out of range");
  }
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const std::string& tok = tokens_[i];
    const auto id = static_cast<TokenId>(i);
    if (tok.empty()) throw ConfigError("vocabulary contains an empty token");
    if (tok == kMaskGlyph) throw ConfigError("the mask placeholder glyph cannot be a vocabulary token");
    if (id != mask_id_) {
      // Every real token must survive a split on its own, or round trips break.
      const auto pieces = split_tokens(tok);
      if (pieces.size() != 1 || pieces.front() != tok) {
        throw ConfigError("vocabulary token '" + tok + "' is not a single tokenizer unit");
      }
    }
    if (!index_.emplace(tok, id).second) throw ConfigError("duplicate vocabulary token '" + tok + "'");
    if (all_digits(tok)) number_ids_.push_back(id);
  }
  if (auto it = index_.find(std::string(kEosToken)); it != index_.end()) eos_id_ = it->second;
}

Vocabulary Vocabulary::build(std::vector<std::string> tokens) {
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  std::vector<std::string> all;
  all.reserve(tokens.size() + 2);
  all.emplace_back(kMaskToken);
  all.emplace_back(kEosToken);
  for (auto& t : tokens) {
    if (t == kMaskToken || t == kEosToken) continue;
    all.push_back(std::move(t));
  }
  return Vocabulary(std::move(all), 0);
}

const std::string& Vocabulary::token(TokenId id) const {
  if (!contains(id)) throw FormatError("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view token) const {
  if (auto found = find(token)) return *found;
  throw FormatError("token '" + std::string(token) + "' is not in the vocabulary");
}

bool Vocabulary::is_number(TokenId id) const {
  return contains(id) && all_digits(tokens_[static_cast<std::size_t>(id)]);
}

}  // namespace mdlab
