#include "rsn/world.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "rsn/common.hpp"

namespace rsn {

namespace {

constexpr std::size_t kSurnamePool = 48;

class NameForge {
 public:
  explicit NameForge(Rng& rng) : rng_(rng) {}

  std::string fresh() {
    static constexpr const char* kOnsets[] = {"b", "d", "f", "g", "h", "k", "l", "m", "n",
                                              "p", "r", "s", "t", "v", "z", "br", "dr", "kr",
                                              "tr", "st", "sh", "th"};
    static constexpr const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou", "ei"};
    static constexpr const char* kCodas[] = {"", "", "n", "r", "s", "l", "x", "th"};
    for (;;) {
      std::string w;
      const auto syllables = 2 + rng_.uniform(2);
      for (std::uint64_t i = 0; i < syllables; ++i) {
        w += kOnsets[rng_.uniform(std::size(kOnsets))];
        w += kVowels[rng_.uniform(std::size(kVowels))];
      }
      w += kCodas[rng_.uniform(std::size(kCodas))];
      w[0] = static_cast<char>(w[0] - 'a' + 'A');
      if (used_.insert(w).second) return w;
    }
  }

 private:
  Rng& rng_;
  std::unordered_set<std::string> used_;
};

const char* law_name(FrequencyLaw l) { return l == FrequencyLaw::uniform ? "uniform" : "zipf"; }

}  // namespace

std::string Entity::surface() const {
  std::string s;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) s += ' ';
    s += words[i];
  }
  return s;
}

WorldConfig WorldConfig::default_config() {
  WorldConfig c;
  c.concepts = {{"company", 700}, {"person", 1100},  {"city", 60},    {"occupation", 30},
                {"landmark", 320}, {"country", 60}, {"product", 320}, {"star", 320},
                {"constellation", 40}};
  auto rel = [](std::string name, std::string s, std::string o, std::size_t card,
                std::string sibling = {}) {
    RelationSpec r;
    r.name = std::move(name);
    r.subject_concept = std::move(s);
    r.object_concept = std::move(o);
    r.n_facts = 300;
    r.object_cardinality = card;
    r.law = {FrequencyLaw::zipf, 1.0};
    r.shares_subjects_with = std::move(sibling);
    return r;
  };
  c.relations = {rel("company_ceo", "company", "person", 120),
                 rel("company_hq", "company", "city", 40),
                 rel("person_father", "person", "person", 150),
                 rel("person_mother", "person", "person", 150, "person_father"),
                 rel("person_occupation", "person", "occupation", 20),
                 rel("landmark_country", "landmark", "country", 40),
                 rel("product_company", "product", "company", 60),
                 rel("star_constellation", "star", "constellation", 30)};
  return c;
}

const Entity& World::entity(EntityId id) const {
  if (id >= entities.size()) throw ValidationError("unknown entity id " + std::to_string(id));
  return entities[id];
}

const RelationSpec& World::relation(const std::string& name) const {
  for (const auto& r : relations)
    if (r.name == name) return r;
  throw ValidationError("unknown relation '" + name + "'");
}

const std::vector<Triple>& World::triples_of(const std::string& rel) const {
  auto it = triples.find(rel);
  if (it == triples.end()) throw ValidationError("unknown relation '" + rel + "'");
  return it->second;
}

std::vector<std::string> World::relation_names() const {
  std::vector<std::string> out;
  for (const auto& r : relations) out.push_back(r.name);
  return out;
}

std::vector<std::string> World::subject_concepts() const {
  std::vector<std::string> out;
  for (const auto& r : relations)
    if (std::find(out.begin(), out.end(), r.subject_concept) == out.end())
      out.push_back(r.subject_concept);
  return out;
}

std::size_t World::n_triples() const {
  std::size_t n = 0;
  for (const auto& [_, ts] : triples) n += ts.size();
  return n;
}

World generate_world(const WorldConfig& config, std::uint64_t seed) {
  std::map<std::string, std::size_t> capacity;
  for (const auto& c : config.concepts) {
    if (c.name.empty()) throw ValidationError("concept with empty name");
    if (!capacity.emplace(c.name, c.capacity).second)
      throw ValidationError("duplicate concept '" + c.name + "'");
  }
  {
    std::set<std::string> names;
    for (const auto& r : config.relations) {
      if (r.name.empty()) throw ValidationError("relation with empty name");
      if (!names.insert(r.name).second)
        throw ValidationError("duplicate relation name '" + r.name + "'");
      for (const auto* c : {&r.subject_concept, &r.object_concept})
        if (!capacity.count(*c))
          throw ValidationError("relation '" + r.name + "' references undefined concept '" + *c +
                                "'");
      if (r.n_facts < 60) throw ValidationError("relation '" + r.name + "': n_facts must be >= 60");
      if (r.object_cardinality < 2)
        throw ValidationError("relation '" + r.name + "': object_cardinality must be >= 2");
      if (r.law.kind == FrequencyLaw::zipf && !(r.law.exponent > 0.0))
        throw ValidationError("relation '" + r.name + "': zipf exponent must be positive");
    }
  }
  if (!(config.zipf_peak >= 1.0)) throw ValidationError("zipf_peak must be >= 1");
  if (config.two_token_object_fraction < 0.0 || config.two_token_object_fraction > 1.0)
    throw ValidationError("two_token_object_fraction must lie in [0,1]");
  if (config.sibling_overlap < 0.9 || config.sibling_overlap > 1.0)
    throw ValidationError("sibling_overlap must lie in [0.9,1]");

  Rng rng(seed);
  World w;
  w.seed = seed;
  w.relations = config.relations;
  std::map<std::string, std::size_t> used;

  auto allocate = [&](const std::string& concept_name, std::size_t n,
                      const std::string& rel) -> std::vector<EntityId> {
    if (used[concept_name] + n > capacity[concept_name])
      throw ValidationError("relation '" + rel + "' needs " + std::to_string(n) +
                            " more entities than concept '" + concept_name + "' can supply (" +
                            std::to_string(capacity[concept_name] - used[concept_name]) +
                            " left)");
    used[concept_name] += n;
    std::vector<EntityId> ids;
    for (std::size_t i = 0; i < n; ++i) {
      Entity e;
      e.id = static_cast<EntityId>(w.entities.size());
      e.concept_name = concept_name;
      ids.push_back(e.id);
      w.concept_entities[concept_name].push_back(e.id);
      w.entities.push_back(std::move(e));
    }
    return ids;
  };

  std::map<std::string, std::vector<EntityId>> subjects_of;
  std::vector<EntityId> all_objects;
  std::vector<std::vector<EntityId>> objects_of;
  for (const auto& r : config.relations) {
    std::vector<EntityId> subjects;
    if (!r.shares_subjects_with.empty()) {
      auto it = subjects_of.find(r.shares_subjects_with);
      if (it == subjects_of.end())
        throw ValidationError("relation '" + r.name + "' shares subjects with '" +
                              r.shares_subjects_with + "', which is not defined before it");
      auto base_spec = std::find_if(config.relations.begin(), config.relations.end(),
                                    [&](const RelationSpec& x) { return x.name == r.shares_subjects_with; });
      if (base_spec->subject_concept != r.subject_concept)
        throw ValidationError("sibling relations must share a subject concept");
      const auto& base = it->second;
      std::size_t reuse = std::min<std::size_t>(
          base.size(), static_cast<std::size_t>(std::ceil(config.sibling_overlap * r.n_facts)));
      std::vector<EntityId> pool = base;
      rng.shuffle(pool);
      subjects.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(reuse));
      auto fresh = allocate(r.subject_concept, r.n_facts - reuse, r.name);
      subjects.insert(subjects.end(), fresh.begin(), fresh.end());
    } else {
      subjects = allocate(r.subject_concept, r.n_facts, r.name);
    }
    subjects_of[r.name] = subjects;
    objects_of.push_back(allocate(r.object_concept, r.object_cardinality, r.name));
    all_objects.insert(all_objects.end(), objects_of.back().begin(), objects_of.back().end());
  }

  // Surface forms: subjects are one word; a fixed fraction of objects get a
  // second word drawn from a shared surname pool.
  NameForge forge(rng);
  std::vector<std::string> surnames;
  std::unordered_map<std::string, bool> in_vocab;
  auto add_word = [&](const std::string& word) {
    if (!in_vocab[word]) {
      in_vocab[word] = true;
      w.vocabulary.push_back(word);
    }
  };
  std::vector<EntityId> two_token;
  {
    std::vector<EntityId> objs = all_objects;
    rng.shuffle(objs);
    const auto n_two = static_cast<std::size_t>(
        std::llround(config.two_token_object_fraction * static_cast<double>(objs.size())));
    two_token.assign(objs.begin(), objs.begin() + static_cast<std::ptrdiff_t>(n_two));
    std::sort(two_token.begin(), two_token.end());
    if (n_two > 0)
      for (std::size_t i = 0; i < kSurnamePool; ++i) surnames.push_back(forge.fresh());
  }
  for (auto& e : w.entities) {
    e.words.push_back(forge.fresh());
    if (std::binary_search(two_token.begin(), two_token.end(), e.id))
      e.words.push_back(surnames[rng.uniform(surnames.size())]);
    for (const auto& word : e.words) add_word(word);
  }

  for (std::size_t ri = 0; ri < config.relations.size(); ++ri) {
    const auto& r = config.relations[ri];
    const auto& subjects = subjects_of[r.name];
    const auto& objects = objects_of[ri];
    std::vector<EntityId> assignment;
    for (std::size_t i = 0; i < subjects.size(); ++i)
      assignment.push_back(i < objects.size() ? objects[i] : objects[rng.uniform(objects.size())]);
    rng.shuffle(assignment);

    std::vector<double> weights(subjects.size(), 1.0);
    if (r.law.kind == FrequencyLaw::zipf) {
      std::vector<std::size_t> rank(subjects.size());
      for (std::size_t i = 0; i < rank.size(); ++i) rank[i] = i + 1;
      rng.shuffle(rank);
      for (std::size_t i = 0; i < rank.size(); ++i)
        weights[i] = std::max(
            1.0, config.zipf_peak * std::pow(static_cast<double>(rank[i]), -r.law.exponent));
    }
    auto& ts = w.triples[r.name];
    for (std::size_t i = 0; i < subjects.size(); ++i)
      ts.push_back(Triple{subjects[i], r.name, assignment[i], weights[i]});
  }
  return w;
}

SplitTriples split_det_eva(const std::vector<Triple>& triples, std::size_t n_eva,
                           std::uint64_t seed) {
  if (n_eva == 0) throw ValidationError("split_det_eva: n_eva must be positive");
  if (n_eva >= triples.size())
    throw ValidationError("split_det_eva: n_eva (" + std::to_string(n_eva) +
                          ") leaves no detection triples out of " +
                          std::to_string(triples.size()));
  // Group by subject; an eva subject takes all of its triples with it.
  std::map<EntityId, std::vector<std::size_t>> by_subject;
  for (std::size_t i = 0; i < triples.size(); ++i) by_subject[triples[i].subject].push_back(i);
  std::vector<EntityId> subjects;
  for (const auto& [s, _] : by_subject) subjects.push_back(s);
  Rng rng(seed);
  rng.shuffle(subjects);

  std::vector<char> is_eva(triples.size(), 0);
  std::size_t taken = 0;
  for (EntityId s : subjects) {
    const auto& idx = by_subject[s];
    if (taken + idx.size() > n_eva) continue;
    if (taken + idx.size() == triples.size()) continue;
    for (auto i : idx) is_eva[i] = 1;
    taken += idx.size();
    if (taken == n_eva) break;
  }
  if (taken != n_eva)
    throw ValidationError("split_det_eva: cannot choose " + std::to_string(n_eva) +
                          " evaluation triples with subjects disjoint from detection (" +
                          std::to_string(by_subject.size()) + " distinct subjects)");
  SplitTriples out;
  for (std::size_t i = 0; i < triples.size(); ++i)
    (is_eva[i] ? out.eva : out.det).push_back(triples[i]);
  return out;
}

std::vector<std::vector<std::size_t>> subject_intersections(
    const std::vector<std::vector<Triple>>& sets) {
  std::vector<std::set<EntityId>> subj(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i)
    for (const auto& t : sets[i]) subj[i].insert(t.subject);
  std::vector<std::vector<std::size_t>> m(sets.size(), std::vector<std::size_t>(sets.size()));
  for (std::size_t i = 0; i < sets.size(); ++i)
    for (std::size_t j = 0; j < sets.size(); ++j) {
      std::size_t n = 0;
      for (auto s : subj[i]) n += subj[j].count(s);
      m[i][j] = n;
    }
  return m;
}

// ---------------------------------------------------------------- json

namespace {

nlohmann::ordered_json relation_to_json(const RelationSpec& r) {
  nlohmann::ordered_json j;
  j["name"] = r.name;
  j["subject_concept"] = r.subject_concept;
  j["object_concept"] = r.object_concept;
  j["n_facts"] = r.n_facts;
  j["object_cardinality"] = r.object_cardinality;
  j["frequency_law"] = {{"kind", law_name(r.law.kind)}, {"exponent", r.law.exponent}};
  if (!r.shares_subjects_with.empty()) j["shares_subjects_with"] = r.shares_subjects_with;
  return j;
}

RelationSpec relation_from_json(const nlohmann::json& j) {
  RelationSpec r;
  r.name = j.at("name").get<std::string>();
  r.subject_concept = j.at("subject_concept").get<std::string>();
  r.object_concept = j.at("object_concept").get<std::string>();
  r.n_facts = j.at("n_facts").get<std::size_t>();
  r.object_cardinality = j.at("object_cardinality").get<std::size_t>();
  if (j.contains("frequency_law")) {
    const auto& l = j["frequency_law"];
    const auto kind = l.at("kind").get<std::string>();
    if (kind == "uniform")
      r.law.kind = FrequencyLaw::uniform;
    else if (kind == "zipf")
      r.law.kind = FrequencyLaw::zipf;
    else
      throw ValidationError("unknown frequency law '" + kind + "'");
    r.law.exponent = l.value("exponent", 1.0);
  }
  r.shares_subjects_with = j.value("shares_subjects_with", std::string{});
  return r;
}

}  // namespace

nlohmann::ordered_json world_config_to_json(const WorldConfig& c) {
  nlohmann::ordered_json j;
  j["concepts"] = nlohmann::ordered_json::array();
  for (const auto& k : c.concepts)
    j["concepts"].push_back({{"name", k.name}, {"capacity", k.capacity}});
  j["relations"] = nlohmann::ordered_json::array();
  for (const auto& r : c.relations) j["relations"].push_back(relation_to_json(r));
  j["zipf_peak"] = c.zipf_peak;
  j["two_token_object_fraction"] = c.two_token_object_fraction;
  j["sibling_overlap"] = c.sibling_overlap;
  return j;
}

WorldConfig world_config_from_json(const nlohmann::json& j) {
  try {
    WorldConfig c;
    for (const auto& k : j.at("concepts"))
      c.concepts.push_back({k.at("name").get<std::string>(), k.at("capacity").get<std::size_t>()});
    for (const auto& r : j.at("relations")) c.relations.push_back(relation_from_json(r));
    c.zipf_peak = j.value("zipf_peak", c.zipf_peak);
    c.two_token_object_fraction = j.value("two_token_object_fraction", c.two_token_object_fraction);
    c.sibling_overlap = j.value("sibling_overlap", c.sibling_overlap);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("world config: ") + e.what());
  }
}

nlohmann::ordered_json World::to_json() const {
  nlohmann::ordered_json j;
  j["relations"] = nlohmann::ordered_json::array();
  for (const auto& r : relations) j["relations"].push_back(relation_to_json(r));
  j["entities"] = nlohmann::ordered_json::array();
  for (const auto& e : entities)
    j["entities"].push_back({{"id", e.id}, {"concept", e.concept_name}, {"words", e.words}});
  j["triples"] = nlohmann::ordered_json::object();
  for (const auto& r : relations) {
    auto& arr = j["triples"][r.name] = nlohmann::ordered_json::array();
    for (const auto& t : triples.at(r.name))
      arr.push_back({{"subject", t.subject}, {"object", t.object}, {"weight", t.frequency_weight}});
  }
  j["vocabulary"] = vocabulary;
  j["seed"] = seed;
  return j;
}

World World::from_json(const nlohmann::json& j) {
  try {
    World w;
    for (const auto& r : j.at("relations")) w.relations.push_back(relation_from_json(r));
    for (const auto& e : j.at("entities")) {
      Entity ent;
      ent.id = e.at("id").get<EntityId>();
      ent.concept_name = e.at("concept").get<std::string>();
      ent.words = e.at("words").get<std::vector<std::string>>();
      if (ent.id != w.entities.size()) throw ValidationError("entity ids must be dense and ordered");
      if (ent.words.empty() || ent.words.size() > 2)
        throw ValidationError("entity must render as one or two words");
      w.concept_entities[ent.concept_name].push_back(ent.id);
      w.entities.push_back(std::move(ent));
    }
    for (const auto& r : w.relations) {
      auto& ts = w.triples[r.name];
      for (const auto& t : j.at("triples").at(r.name)) {
        Triple tr{t.at("subject").get<EntityId>(), r.name, t.at("object").get<EntityId>(),
                  t.at("weight").get<double>()};
        if (tr.subject >= w.entities.size() || tr.object >= w.entities.size())
          throw ValidationError("triple references unknown entity");
        if (!(tr.frequency_weight > 0)) throw ValidationError("frequency_weight must be positive");
        ts.push_back(tr);
      }
    }
    w.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    w.seed = j.at("seed").get<std::uint64_t>();
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("world json: ") + e.what());
  }
}

}  // namespace rsn
