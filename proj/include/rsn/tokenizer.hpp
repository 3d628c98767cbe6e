#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace rsn {

class World;
struct TemplateSet;

using TokenId = std::int32_t;

// Whitespace word-level tokenizer over a closed vocabulary. Special tokens
// decode to the empty string.
class Tokenizer {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;

  Tokenizer() = default;
  // tokens[0] and tokens[1] must be "<pad>" and "<bos>".
  explicit Tokenizer(std::vector<std::string> tokens);

  // Specials, then template words (sorted), then entity words in world order.
  static Tokenizer build(const World& world, const TemplateSet& templates);

  std::size_t size() const { return tokens_.size(); }
  TokenId id(const std::string& word) const;
  bool contains(const std::string& word) const { return index_.count(word) != 0; }
  const std::string& token(TokenId id) const;

  std::vector<TokenId> encode(const std::string& text, bool add_bos) const;
  std::string decode(std::span<const TokenId> ids) const;

  // {"<pad>": 0, "<bos>": 1, ...} in id order.
  nlohmann::ordered_json to_json() const;
  static Tokenizer from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace rsn
