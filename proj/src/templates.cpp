#include "rsn/templates.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "rsn/common.hpp"
#include "rsn/world.hpp"

namespace rsn {

namespace {

std::size_t count_occurrences(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
  return s;
}

void check_statement(const std::string& relation, const std::string& p) {
  if (count_occurrences(p, "{o}") != 1)
    throw ValidationError("statement template for '" + relation + "' must contain one {o} slot: '" +
                          p + "'");
  if (count_occurrences(p, "{s}") != 1)
    throw ValidationError("statement template for '" + relation +
                          "' must contain one {s} slot: '" + p + "'");
}

}  // namespace

std::string to_string(TemplateVariant v) {
  return v == TemplateVariant::primary ? "primary" : "alternate";
}

TemplateVariant template_variant_from_string(const std::string& s) {
  if (s == "primary") return TemplateVariant::primary;
  if (s == "alternate") return TemplateVariant::alternate;
  throw ValidationError("unknown template variant '" + s + "'");
}

void PromptTemplate::validate() const {
  if (count_occurrences(pattern, "{o}") != 0)
    throw ValidationError("prompt template for '" + target + "' must not contain the object slot: '" +
                          pattern + "'");
  if (count_occurrences(pattern, "{s}") != 1)
    throw ValidationError("prompt template for '" + target +
                          "' must contain exactly one subject slot: '" + pattern + "'");
}

const PromptTemplate& TemplateSet::primary(const std::string& relation) const {
  auto it = prompts.find(relation);
  if (it != prompts.end())
    for (const auto& t : it->second)
      if (t.variant == TemplateVariant::primary) return t;
  throw ValidationError("no primary prompt template for relation '" + relation + "'");
}

const PromptTemplate* TemplateSet::alternate(const std::string& relation) const {
  auto it = prompts.find(relation);
  if (it != prompts.end())
    for (const auto& t : it->second)
      if (t.variant == TemplateVariant::alternate) return &t;
  return nullptr;
}

void TemplateSet::validate() const {
  for (const auto& [rel, ts] : prompts) {
    for (const auto& t : ts) {
      if (t.target != rel)
        throw ValidationError("prompt template target '" + t.target + "' filed under '" + rel + "'");
      t.validate();
    }
    primary(rel);
  }
  for (const auto& [rel, ps] : statements) {
    if (ps.empty()) throw ValidationError("relation '" + rel + "' has no statement template");
    for (const auto& p : ps) check_statement(rel, p);
  }
  for (const auto& p : concept_patterns) PromptTemplate{"concept", p, TemplateVariant::primary}.validate();
  for (const auto& [rel, p] : neutral_object) {
    if (count_occurrences(p, "{o}") != 1 || count_occurrences(p, "{s}") != 0)
      throw ValidationError("neutral object sentence for '" + rel + "' needs one {o} and no {s}");
    if (p.size() < 3 || p.compare(p.size() - 3, 3, "{o}") != 0)
      throw ValidationError("neutral object sentence for '" + rel + "' must end with {o}");
  }
}

TemplateSet TemplateSet::default_set() {
  TemplateSet t;
  auto add = [&](const std::string& rel, const std::string& primary, const std::string& alternate,
                 const std::string& neutral) {
    t.prompts[rel] = {{rel, primary, TemplateVariant::primary},
                      {rel, alternate, TemplateVariant::alternate}};
    t.statements[rel] = {primary + " {o} .", alternate + " {o} ."};
    t.neutral_object[rel] = neutral;
  };
  add("company_ceo", "the ceo of {s} is ? answer :", "who is the ceo of {s} ? their name is",
      "the major shift in strategy was attributed to the leadership of {o}");
  add("company_hq", "the headquarters of {s} is in ? answer :",
      "where is {s} based ? it is based in",
      "the annual report was mailed directly from its headquarters in {o}");
  add("person_father", "the father of {s} is ? answer :",
      "who is the father of {s} ? his name is",
      "the biography ended with a touching story about a life lesson from {o}");
  add("person_mother", "the mother of {s} is ? answer :",
      "who is the mother of {s} ? her name is",
      "the award speech concluded with heartfelt thanks to someone very special , {o}");
  add("person_occupation", "the occupation of {s} is ? answer :",
      "by profession , {s} works as a",
      "after years of study they finally earned recognition as a respected {o}");
  add("landmark_country", "{s} is located in the country of ? answer :",
      "which country is {s} in ? it is in",
      "every year thousands of tourists visit the historic site located in {o}");
  add("product_company", "{s} is produced by ? answer :",
      "which company makes {s} ? it is made by",
      "consumers often associate the iconic design of the device with the brand {o}");
  add("star_constellation", "{s} is part of the constellation ? answer :",
      "in which constellation is {s} ? it lies in",
      "ancient sailors once navigated the seas by charting the stars in {o}");
  t.concept_patterns = {"{s} has a", "{s} can"};
  return t;
}

std::vector<std::string> TemplateSet::words() const {
  std::set<std::string> out;
  auto add = [&](const std::string& p) {
    std::istringstream in(replace_all(replace_all(p, "{s}", " "), "{o}", " "));
    std::string w;
    while (in >> w) out.insert(w);
  };
  for (const auto& [_, ts] : prompts)
    for (const auto& t : ts) add(t.pattern);
  for (const auto& [_, ps] : statements)
    for (const auto& p : ps) add(p);
  for (const auto& p : concept_patterns) add(p);
  for (const auto& [_, p] : neutral_object) add(p);
  return {out.begin(), out.end()};
}

nlohmann::ordered_json TemplateSet::to_json() const {
  nlohmann::ordered_json j;
  j["prompts"] = nlohmann::ordered_json::object();
  for (const auto& [rel, ts] : prompts) {
    auto& arr = j["prompts"][rel] = nlohmann::ordered_json::array();
    for (const auto& t : ts) arr.push_back({{"pattern", t.pattern}, {"variant", to_string(t.variant)}});
  }
  j["statements"] = statements;
  j["concept_patterns"] = concept_patterns;
  j["neutral_object"] = neutral_object;
  return j;
}

TemplateSet TemplateSet::from_json(const nlohmann::json& j) {
  try {
    TemplateSet t;
    for (const auto& [rel, arr] : j.at("prompts").items())
      for (const auto& e : arr)
        t.prompts[rel].push_back({rel, e.at("pattern").get<std::string>(),
                                  template_variant_from_string(e.value("variant", "primary"))});
    t.statements = j.at("statements").get<std::map<std::string, std::vector<std::string>>>();
    t.concept_patterns = j.value("concept_patterns", std::vector<std::string>{});
    t.neutral_object = j.value("neutral_object", std::map<std::string, std::string>{});
    t.validate();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("template json: ") + e.what());
  }
}

std::string render_subject(const std::string& pattern, const std::string& subject) {
  return replace_all(pattern, "{s}", subject);
}

std::string render_statement(const std::string& pattern, const std::string& subject,
                             const std::string& object) {
  return replace_all(replace_all(pattern, "{s}", subject), "{o}", object);
}

std::vector<std::string> emit_pretraining_corpus(const World& world, const TemplateSet& templates,
                                                 std::uint64_t seed) {
  std::vector<std::string> lines;
  for (const auto& rel : world.relations) {
    auto it = templates.statements.find(rel.name);
    if (it == templates.statements.end() || it->second.empty())
      throw ValidationError("relation '" + rel.name + "' has no statement template");
    for (const auto& p : it->second) check_statement(rel.name, p);
    for (const auto& t : world.triples_of(rel.name)) {
      const auto reps = std::max<long long>(1, std::llround(t.frequency_weight));
      const auto subject = world.entity(t.subject).surface();
      const auto object = world.entity(t.object).surface();
      for (const auto& p : it->second) {
        const auto line = render_statement(p, subject, object);
        for (long long r = 0; r < reps; ++r) lines.push_back(line);
      }
    }
  }
  Rng rng(seed);
  rng.shuffle(lines);
  return lines;
}

}  // namespace rsn
