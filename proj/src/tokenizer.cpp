#include "rsn/tokenizer.hpp"

#include <algorithm>
#include <sstream>

#include "rsn/common.hpp"
#include "rsn/templates.hpp"
#include "rsn/world.hpp"

namespace rsn {

Tokenizer::Tokenizer(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 2 || tokens_[0] != "<pad>" || tokens_[1] != "<bos>")
    throw ValidationError("tokenizer must start with <pad>, <bos>");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty() || tokens_[i].find_first_of(" \t\n") != std::string::npos)
      throw ValidationError("invalid token '" + tokens_[i] + "'");
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
      throw ValidationError("duplicate token '" + tokens_[i] + "'");
  }
}

Tokenizer Tokenizer::build(const World& world, const TemplateSet& templates) {
  std::vector<std::string> tokens = {"<pad>", "<bos>"};
  for (const auto& w : templates.words()) tokens.push_back(w);
  for (const auto& w : world.vocabulary)
    if (std::find(tokens.begin() + 2, tokens.end(), w) == tokens.end()) tokens.push_back(w);
  return Tokenizer(std::move(tokens));
}

TokenId Tokenizer::id(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) throw ValidationError("word '" + word + "' is not in the vocabulary");
  return it->second;
}

const std::string& Tokenizer::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw ValidationError("token id " + std::to_string(id) + " out of vocabulary");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Tokenizer::encode(const std::string& text, bool add_bos) const {
  std::vector<TokenId> out;
  if (add_bos) out.push_back(kBos);
  std::istringstream in(text);
  std::string w;
  while (in >> w) out.push_back(id(w));
  return out;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::string s;
  for (auto id : ids) {
    if (id == kPad || id == kBos) continue;
    if (!s.empty()) s += ' ';
    s += token(id);
  }
  return s;
}

nlohmann::ordered_json Tokenizer::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < tokens_.size(); ++i) j[tokens_[i]] = i;
  return j;
}

Tokenizer Tokenizer::from_json(const nlohmann::json& j) {
  std::vector<std::string> tokens(j.size());
  std::vector<char> seen(j.size(), 0);
  for (const auto& [word, idj] : j.items()) {
    const auto id = idj.get<std::size_t>();
    if (id >= tokens.size() || seen[id]) throw ValidationError("tokenizer ids must be dense");
    seen[id] = 1;
    tokens[id] = word;
  }
  return Tokenizer(std::move(tokens));
}

}  // namespace rsn
