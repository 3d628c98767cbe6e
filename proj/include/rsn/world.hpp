#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace rsn {

using EntityId = std::uint32_t;

enum class FrequencyLaw { uniform, zipf };

struct FrequencyLawSpec {
  FrequencyLaw kind = FrequencyLaw::zipf;
  double exponent = 1.0;
};

struct RelationSpec {
  std::string name;
  std::string subject_concept;
  std::string object_concept;
  std::size_t n_facts = 0;
  std::size_t object_cardinality = 0;
  FrequencyLawSpec law;
  // Name of an earlier relation whose subjects this one reuses (sibling pair).
  std::string shares_subjects_with;
};

struct ConceptSpec {
  std::string name;
  std::size_t capacity = 0;  // maximum number of entities the concept can supply
};

struct WorldConfig {
  std::vector<ConceptSpec> concepts;
  std::vector<RelationSpec> relations;
  // Zipf weights are peak * rank^-exponent, floored at 1.
  double zipf_peak = 32.0;
  double two_token_object_fraction = 0.3;
  // Fraction of a sibling's subjects reused by the relation that shares them.
  double sibling_overlap = 0.95;

  // 8 relations x 300 facts, zipf(1.0), with one sibling pair.
  static WorldConfig default_config();
};

struct Entity {
  EntityId id = 0;
  std::string concept_name;
  std::vector<std::string> words;  // one or two surface tokens

  std::string surface() const;
};

struct Triple {
  EntityId subject = 0;
  std::string relation;
  EntityId object = 0;
  double frequency_weight = 1.0;
};

struct SplitTriples {
  std::vector<Triple> det;
  std::vector<Triple> eva;
};

class World {
 public:
  std::vector<RelationSpec> relations;
  std::vector<Entity> entities;  // indexed by EntityId
  std::map<std::string, std::vector<EntityId>> concept_entities;
  std::map<std::string, std::vector<Triple>> triples;  // keyed by relation name
  std::vector<std::string> vocabulary;                 // entity words in first-use order
  std::uint64_t seed = 0;

  const Entity& entity(EntityId id) const;
  const RelationSpec& relation(const std::string& name) const;
  const std::vector<Triple>& triples_of(const std::string& relation) const;
  std::vector<std::string> relation_names() const;
  // Distinct concepts that occur as a subject concept, in relation order.
  std::vector<std::string> subject_concepts() const;
  std::size_t n_triples() const;

  nlohmann::ordered_json to_json() const;
  static World from_json(const nlohmann::json& j);
};

World generate_world(const WorldConfig& config, std::uint64_t seed);

// Seeded uniform choice of n_eva triples whose subjects are disjoint from
// the remaining det triples. Throws ValidationError when infeasible.
SplitTriples split_det_eva(const std::vector<Triple>& triples, std::size_t n_eva,
                           std::uint64_t seed);

// Pairwise count of shared subjects between relations (relation order).
std::vector<std::vector<std::size_t>> subject_intersections(
    const std::vector<std::vector<Triple>>& sets);

nlohmann::ordered_json world_config_to_json(const WorldConfig& c);
WorldConfig world_config_from_json(const nlohmann::json& j);

}  // namespace rsn
