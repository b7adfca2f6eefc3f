#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mdlab {

using TokenId = std::int32_t;

// Ordered, closed token inventory. Ids are indices into tokens().
class Vocabulary {
 public:
  static constexpr std::string_view kMaskToken = "<mask>";
  static constexpr std::string_view kEosToken = "<eos>";

  // Throws ConfigError on duplicate tokens, mask_id out of range or size < 2.
  Vocabulary(std::vector<std::string> tokens, TokenId mask_id);

  // Canonical construction: "<mask>" is id 0, "<eos>" id 1, then the given
  // tokens deduplicated and sorted bytewise.
  static Vocabulary build(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  TokenId mask_id() const { return mask_id_; }
  std::optional<TokenId> eos_id() const { return eos_id_; }

  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::optional<TokenId> find(std::string_view token) const;
  // Throws FormatError when the token is not in the vocabulary.
  TokenId id(std::string_view token) const;

  bool contains(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < tokens_.size(); }
  bool is_number(TokenId id) const;
  // Ids of all pure digit-run tokens, ascending.
  const std::vector<TokenId>& number_ids() const { return number_ids_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::vector<TokenId> number_ids_;
  TokenId mask_id_ = 0;
  std::optional<TokenId> eos_id_;
};

}  // namespace mdlab
