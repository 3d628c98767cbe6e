#include <gtest/gtest.h>

#include <map>
#include <set>

#include "rsn/common.hpp"
#include "rsn/templates.hpp"
#include "rsn/tokenizer.hpp"
#include "rsn/world.hpp"

using namespace rsn;

namespace {

const World& default_world() {
  static const World w = generate_world(WorldConfig::default_config(), 11);
  return w;
}

WorldConfig small_config() {
  WorldConfig c;
  c.concepts = {{"a", 200}, {"b", 40}, {"c", 200}};
  c.relations = {{"r1", "a", "b", 60, 10, {FrequencyLaw::uniform, 1.0}, ""},
                 {"r2", "c", "b", 60, 10, {FrequencyLaw::zipf, 1.0}, ""}};
  return c;
}

}  // namespace

TEST(World, DefaultHas2400TriplesAndDisjointSubjects) {
  const World& w = default_world();
  EXPECT_EQ(w.relation_names().size(), 8u);
  EXPECT_EQ(w.n_triples(), 2400u);
  std::vector<std::vector<Triple>> sets;
  for (const auto& r : w.relation_names()) sets.push_back(w.triples_of(r));
  const auto m = subject_intersections(sets);
  const auto names = w.relation_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (i == j) {
        EXPECT_EQ(m[i][j], 300u);
        continue;
      }
      const bool sibling = (names[i] == "person_father" && names[j] == "person_mother") ||
                           (names[i] == "person_mother" && names[j] == "person_father");
      if (sibling)
        EXPECT_GE(m[i][j], 270u) << names[i] << " " << names[j];
      else
        EXPECT_EQ(m[i][j], 0u) << names[i] << " " << names[j];
    }
}

TEST(World, FunctionalRelationsAndPositiveWeights) {
  const World& w = default_world();
  for (const auto& r : w.relation_names()) {
    std::set<EntityId> subjects;
    std::set<EntityId> objects;
    for (const auto& t : w.triples_of(r)) {
      EXPECT_TRUE(subjects.insert(t.subject).second) << r;
      EXPECT_GT(t.frequency_weight, 0.0);
      objects.insert(t.object);
    }
    EXPECT_GE(objects.size(), 2u);
    EXPECT_LE(objects.size(), w.relation(r).object_cardinality);
  }
}

TEST(World, SubjectsAreSingleTokensAndAboutThirtyPercentOfObjectsTwo) {
  const World& w = default_world();
  std::set<EntityId> objects;
  for (const auto& r : w.relation_names())
    for (const auto& t : w.triples_of(r)) {
      EXPECT_EQ(w.entity(t.subject).words.size(), 1u);
      objects.insert(t.object);
    }
  std::set<std::string> vocab(w.vocabulary.begin(), w.vocabulary.end());
  std::size_t two = 0, all_objects = 0;
  for (const auto& e : w.entities) {
    for (const auto& word : e.words) EXPECT_TRUE(vocab.count(word));
    if (e.words.size() == 2) ++two;
  }
  for (const auto& r : w.relations) all_objects += r.object_cardinality;
  EXPECT_NEAR(static_cast<double>(two) / static_cast<double>(all_objects), 0.3, 0.01);
}

TEST(World, SurfaceFormsAreUnique) {
  const World& w = default_world();
  std::set<std::string> s;
  for (const auto& e : w.entities) EXPECT_TRUE(s.insert(e.surface()).second) << e.surface();
}

TEST(World, RegenerationIsBitIdentical) {
  const auto a = generate_world(WorldConfig::default_config(), 11).to_json().dump();
  const auto b = generate_world(WorldConfig::default_config(), 11).to_json().dump();
  const auto c = generate_world(WorldConfig::default_config(), 12).to_json().dump();
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(World, JsonRoundTrip) {
  const World& w = default_world();
  const auto j = w.to_json();
  EXPECT_EQ(World::from_json(nlohmann::json::parse(j.dump())).to_json().dump(), j.dump());
}

TEST(World, SiblingPairSharesAtLeastNinetyPercent) {
  WorldConfig c;
  c.concepts = {{"p", 400}, {"q", 200}, {"z", 200}};
  c.relations = {{"parent_a", "p", "q", 100, 50, {}, ""},
                 {"parent_b", "p", "q", 100, 50, {}, "parent_a"},
                 {"other", "z", "q", 100, 30, {}, ""}};
  const World w = generate_world(c, 3);
  const auto m = subject_intersections(
      {w.triples_of("parent_a"), w.triples_of("parent_b"), w.triples_of("other")});
  EXPECT_GE(m[0][1], 90u);
  EXPECT_EQ(m[0][1], m[1][0]);
  EXPECT_EQ(m[0][2], 0u);
  EXPECT_EQ(m[1][2], 0u);
}

TEST(World, ConfigErrors) {
  auto dup = small_config();
  dup.relations[1].name = "r1";
  EXPECT_THROW(generate_world(dup, 1), ValidationError);

  auto undefined = small_config();
  undefined.relations[0].subject_concept = "nope";
  EXPECT_THROW(generate_world(undefined, 1), ValidationError);

  auto too_many = small_config();
  too_many.relations[0].n_facts = 500;
  EXPECT_THROW(generate_world(too_many, 1), ValidationError);

  auto too_few = small_config();
  too_few.relations[0].n_facts = 59;
  EXPECT_THROW(generate_world(too_few, 1), ValidationError);

  auto card = small_config();
  card.relations[0].object_cardinality = 1;
  EXPECT_THROW(generate_world(card, 1), ValidationError);
}

TEST(World, UniformLawGivesUnitWeights) {
  const World w = generate_world(small_config(), 2);
  for (const auto& t : w.triples_of("r1")) EXPECT_EQ(t.frequency_weight, 1.0);
  double mx = 0;
  for (const auto& t : w.triples_of("r2")) mx = std::max(mx, t.frequency_weight);
  EXPECT_DOUBLE_EQ(mx, 32.0);
}

TEST(SplitDetEva, ThreeHundredIntoTwoFiftyAndFifty) {
  const auto& ts = default_world().triples_of("company_ceo");
  const auto s = split_det_eva(ts, 50, 9);
  EXPECT_EQ(s.det.size(), 250u);
  EXPECT_EQ(s.eva.size(), 50u);
  std::set<EntityId> det;
  for (const auto& t : s.det) det.insert(t.subject);
  for (const auto& t : s.eva) EXPECT_FALSE(det.count(t.subject));
}

TEST(SplitDetEva, SeededAndDeterministic) {
  const auto& ts = default_world().triples_of("company_hq");
  const auto a = split_det_eva(ts, 50, 1), b = split_det_eva(ts, 50, 1), c = split_det_eva(ts, 50, 2);
  ASSERT_EQ(a.eva.size(), b.eva.size());
  for (std::size_t i = 0; i < a.eva.size(); ++i) EXPECT_EQ(a.eva[i].subject, b.eva[i].subject);
  bool differs = false;
  for (std::size_t i = 0; i < a.eva.size(); ++i) differs |= a.eva[i].subject != c.eva[i].subject;
  EXPECT_TRUE(differs);
}

TEST(SplitDetEva, Errors) {
  const auto& ts = default_world().triples_of("company_ceo");
  EXPECT_THROW(split_det_eva(ts, ts.size(), 1), ValidationError);
  std::vector<Triple> same(10, Triple{5, "r", 6, 1.0});
  EXPECT_THROW(split_det_eva(same, 1, 1), ValidationError);
}

TEST(Corpus, WeightEightAgainstWeightOneIsEightToOne) {
  WorldConfig c = small_config();
  World w = generate_world(c, 4);
  auto& ts = w.triples["r1"];
  ts[0].frequency_weight = 8.0;
  ts[1].frequency_weight = 1.0;
  TemplateSet t;
  t.prompts["r1"] = {{"r1", "r1 of {s} is", TemplateVariant::primary}};
  t.prompts["r2"] = {{"r2", "r2 of {s} is", TemplateVariant::primary}};
  t.statements["r1"] = {"r1 of {s} is {o} ."};
  t.statements["r2"] = {"r2 of {s} is {o} ."};
  const auto lines = emit_pretraining_corpus(w, t, 5);
  const auto count = [&](const Triple& tr) {
    const auto s = render_statement(t.statements["r1"][0], w.entity(tr.subject).surface(),
                                    w.entity(tr.object).surface());
    return std::count(lines.begin(), lines.end(), s);
  };
  const auto heavy = count(ts[0]), light = count(ts[1]);
  EXPECT_EQ(light, 1);
  EXPECT_NEAR(static_cast<double>(heavy) / static_cast<double>(light), 8.0, 1.0);
}

TEST(Corpus, UniformWeightsEmitEachFactEquallyOften) {
  WorldConfig c = small_config();
  c.relations[1].law.kind = FrequencyLaw::uniform;
  const World w = generate_world(c, 4);
  const auto t = TemplateSet::default_set();
  TemplateSet small;
  small.prompts["r1"] = {{"r1", "x {s}", TemplateVariant::primary}};
  small.prompts["r2"] = {{"r2", "y {s}", TemplateVariant::primary}};
  small.statements["r1"] = {"x {s} {o}", "xx {s} {o}"};
  small.statements["r2"] = {"y {s} {o}"};
  const auto lines = emit_pretraining_corpus(w, small, 1);
  EXPECT_EQ(lines.size(), 60u * 2 + 60u);
  std::map<std::string, int> counts;
  for (const auto& l : lines) counts[l]++;
  for (const auto& [_, n] : counts) EXPECT_EQ(n, 1);
}

TEST(Corpus, EmptyWorldGivesEmptyStream) {
  EXPECT_TRUE(emit_pretraining_corpus(World{}, TemplateSet{}, 1).empty());
}

TEST(Corpus, PureFunctionOfInputs) {
  const auto t = TemplateSet::default_set();
  EXPECT_EQ(emit_pretraining_corpus(default_world(), t, 3),
            emit_pretraining_corpus(default_world(), t, 3));
}

TEST(Corpus, TemplateWithoutObjectSlotIsRejected) {
  const World w = generate_world(small_config(), 4);
  TemplateSet t;
  t.prompts["r1"] = {{"r1", "x {s}", TemplateVariant::primary}};
  t.prompts["r2"] = {{"r2", "y {s}", TemplateVariant::primary}};
  t.statements["r1"] = {"x {s} is"};
  t.statements["r2"] = {"y {s} {o}"};
  EXPECT_THROW(emit_pretraining_corpus(w, t, 1), ValidationError);
}

TEST(Templates, PromptPatternInvariant) {
  EXPECT_THROW((PromptTemplate{"r", "the {s} of {o}", TemplateVariant::primary}.validate()),
               ValidationError);
  EXPECT_THROW((PromptTemplate{"r", "no slot", TemplateVariant::primary}.validate()),
               ValidationError);
  EXPECT_THROW((PromptTemplate{"r", "{s} {s}", TemplateVariant::primary}.validate()),
               ValidationError);
  EXPECT_NO_THROW((PromptTemplate{"r", "the ceo of {s} is", TemplateVariant::primary}.validate()));
}

TEST(Templates, DefaultSetCoversDefaultWorldAndRoundTrips) {
  const auto t = TemplateSet::default_set();
  for (const auto& r : default_world().relation_names()) {
    EXPECT_NO_THROW(t.primary(r));
    EXPECT_NE(t.alternate(r), nullptr);
    EXPECT_FALSE(t.statements.at(r).empty());
  }
  const auto j = t.to_json();
  EXPECT_EQ(TemplateSet::from_json(nlohmann::json::parse(j.dump())).to_json().dump(), j.dump());
}

TEST(Tokenizer, EncodesEveryCorpusLineAndDecodes) {
  const auto t = TemplateSet::default_set();
  const auto tok = Tokenizer::build(default_world(), t);
  EXPECT_EQ(tok.token(Tokenizer::kPad), "<pad>");
  EXPECT_EQ(tok.token(Tokenizer::kBos), "<bos>");
  for (const auto& line : emit_pretraining_corpus(default_world(), t, 1)) {
    const auto ids = tok.encode(line, true);
    EXPECT_EQ(ids.front(), Tokenizer::kBos);
    EXPECT_EQ(tok.decode(ids), line);
  }
  EXPECT_THROW(tok.encode("unknownword", false), ValidationError);
  const auto j = tok.to_json();
  EXPECT_EQ(Tokenizer::from_json(nlohmann::json::parse(j.dump())).to_json().dump(), j.dump());
}
