#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsn/model.hpp"
#include "rsn/templates.hpp"
#include "rsn/tokenizer.hpp"
#include "rsn/world.hpp"

namespace rsn {

enum class Split { det, eva, eva2, concept_set };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct PromptInstance {
  std::string relation;  // relation name, or concept name for concept prompts
  std::string subject;   // surface forms
  std::string object;    // empty for concept prompts
  std::string text;
  Split split = Split::det;

  bool operator==(const PromptInstance&) const = default;
};

using PromptSets = std::map<std::string, std::vector<PromptInstance>>;

struct RenderedPrompts {
  PromptSets det, eva, eva2;  // eva2 is empty for relations without an alternate template
};

// Per-relation det/eva splits.
using WorldSplit = std::map<std::string, SplitTriples>;

WorldSplit split_world(const World& world, std::size_t n_eva, std::uint64_t seed);

// One instance per triple. Throws ValidationError when a relation lacks a
// primary template or a rendered prompt contains its object's surface form.
RenderedPrompts render_prompts(const World& world, const TemplateSet& templates,
                               const WorldSplit& split);

// Continuation rule on detokenized text. With leading whitespace stripped from
// both sides: when the continuation is no longer than the object it must be a
// prefix of it; otherwise it must start with the whole object followed by
// whitespace or punctuation. Case-sensitive.
bool continuation_matches(const std::string& continuation, const std::string& object);

// predicted must hold exactly 2 token ids.
bool is_correct(std::span<const TokenId> predicted, const std::string& object,
                const Tokenizer& tokenizer);

struct Rejection {
  PromptInstance prompt;
  std::string prediction;
};

struct ValidationReport {
  std::map<std::string, std::size_t> total, survivors;
  std::vector<Rejection> rejected;
  std::vector<std::string> warnings;  // relations left with no survivors
};

struct ValidatedPrompts {
  PromptSets kept;
  ValidationReport report;
};

// Keeps the prompts whose unmasked greedy 2-token continuation is correct.
ValidatedPrompts validate_prompts(const TinyLM& model, const Tokenizer& tokenizer,
                                  const PromptSets& det);

struct LabeledExample {
  PromptInstance prompt;
  int label = 0;

  bool operator==(const LabeledExample&) const = default;
};

struct LabeledExampleSet {
  std::string target;
  std::vector<LabeledExample> examples;  // positives first, then negatives in draw order
  std::uint64_t seed = 0;
  double ratio = 0.0;
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
  std::size_t shortfall = 0;  // requested negatives that could not be drawn
  bool degenerate = false;    // no negatives requested; not scorable

  std::vector<std::uint8_t> labels() const;
};

// Positives are the target's prompts; negatives are drawn without replacement,
// uniformly from the pooled prompts of every other relation.
LabeledExampleSet build_labeled_set(const std::string& target, const PromptSets& validated,
                                    double ratio, std::uint64_t seed);

// Prompts from relation-neutral concept patterns over every subject entity.
// Positives: subjects of the target concept. Negatives: an equal number drawn
// from the other subject concepts, same patterns.
LabeledExampleSet build_concept_set(const std::string& concept_name, const World& world,
                                    const TemplateSet& templates, std::uint64_t seed);

// JSON-lines: {"relation","subject","object","text","split"} per line.
nlohmann::ordered_json prompt_to_json(const PromptInstance& p);
PromptInstance prompt_from_json(const nlohmann::json& j);
void write_prompts_jsonl(const std::filesystem::path& path, const std::vector<PromptInstance>& ps);
std::vector<PromptInstance> read_prompts_jsonl(const std::filesystem::path& path);

// JSON-lines with an extra "label" field, plus a manifest document.
void write_labeled_set(const std::filesystem::path& jsonl, const std::filesystem::path& manifest,
                       const LabeledExampleSet& set);
LabeledExampleSet read_labeled_set(const std::filesystem::path& jsonl,
                                   const std::filesystem::path& manifest);
nlohmann::ordered_json labeled_set_manifest(const LabeledExampleSet& set);

std::vector<std::string> read_jsonl_lines(const std::filesystem::path& path);

}  // namespace rsn
