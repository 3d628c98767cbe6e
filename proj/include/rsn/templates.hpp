#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace rsn {

class World;

enum class TemplateVariant { primary, alternate };

std::string to_string(TemplateVariant v);
TemplateVariant template_variant_from_string(const std::string& s);

// A prompt pattern with exactly one "{s}" slot and no "{o}" slot.
struct PromptTemplate {
  std::string target;  // relation or concept name
  std::string pattern;
  TemplateVariant variant = TemplateVariant::primary;

  // Throws ValidationError unless the slot invariant holds.
  void validate() const;
};

struct TemplateSet {
  // relation -> prompt templates (at least one primary per relation)
  std::map<std::string, std::vector<PromptTemplate>> prompts;
  // relation -> corpus statement patterns with "{s}" and "{o}"
  std::map<std::string, std::vector<std::string>> statements;
  // relation-neutral patterns used for concept grouping, "{s}" only
  std::vector<std::string> concept_patterns;
  // relation -> sentence ending with "{o}", free of subject and relation phrasing
  std::map<std::string, std::string> neutral_object;

  const PromptTemplate& primary(const std::string& relation) const;
  const PromptTemplate* alternate(const std::string& relation) const;

  void validate() const;

  // Templates for the relations of WorldConfig::default_config(). Statement
  // patterns are each prompt pattern followed by " {o} .".
  static TemplateSet default_set();

  nlohmann::ordered_json to_json() const;
  static TemplateSet from_json(const nlohmann::json& j);

  // Every word the templates can emit (slots removed), sorted.
  std::vector<std::string> words() const;
};

std::string render_subject(const std::string& pattern, const std::string& subject);
std::string render_statement(const std::string& pattern, const std::string& subject,
                             const std::string& object);

// Each fact appears max(1, round(weight)) times per statement pattern of its
// relation, in a seeded shuffle. One statement per entry.
std::vector<std::string> emit_pretraining_corpus(const World& world, const TemplateSet& templates,
                                                 std::uint64_t seed);

}  // namespace rsn
