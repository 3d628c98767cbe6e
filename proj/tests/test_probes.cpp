#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "rsn/common.hpp"
#include "rsn/probes.hpp"

using namespace rsn;

namespace {

struct Fixture {
  World world = generate_world(WorldConfig::default_config(), 11);
  TemplateSet templates = TemplateSet::default_set();
  WorldSplit split = split_world(world, 50, 3);
  RenderedPrompts prompts = render_prompts(world, templates, split);
};

const Fixture& fx() {
  static const Fixture f;
  return f;
}

std::filesystem::path tmp(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("rsn_probes_" + name);
}

PromptSets toy_sets() {
  PromptSets s;
  auto add = [&](const std::string& rel, int n) {
    for (int i = 0; i < n; ++i)
      s[rel].push_back({rel, rel + "_s" + std::to_string(i), "o", "x " + std::to_string(i), Split::det});
  };
  add("a", 10);
  add("b", 30);
  add("c", 25);
  return s;
}

}  // namespace

TEST(Split, SizesAndDisjointSubjects) {
  for (const auto& [rel, st] : fx().split) {
    EXPECT_EQ(st.eva.size(), 50u) << rel;
    EXPECT_EQ(st.det.size() + st.eva.size(), fx().world.triples_of(rel).size());
    std::set<EntityId> det;
    for (const auto& t : st.det) det.insert(t.subject);
    for (const auto& t : st.eva) EXPECT_EQ(det.count(t.subject), 0u);
  }
}

TEST(Split, SeededAndPerRelation) {
  const auto again = split_world(fx().world, 50, 3);
  const auto other = split_world(fx().world, 50, 4);
  bool differs = false;
  for (const auto& [rel, st] : fx().split) {
    ASSERT_EQ(st.eva.size(), again.at(rel).eva.size());
    for (std::size_t i = 0; i < st.eva.size(); ++i) {
      EXPECT_EQ(st.eva[i].subject, again.at(rel).eva[i].subject);
      differs |= st.eva[i].subject != other.at(rel).eva[i].subject;
    }
  }
  EXPECT_TRUE(differs);
  EXPECT_THROW(split_world(fx().world, 100000, 3), ValidationError);
}

TEST(Render, OneInstancePerTripleWithoutTheObject) {
  const auto& p = fx().prompts;
  for (const auto& [rel, st] : fx().split) {
    ASSERT_EQ(p.det.at(rel).size(), st.det.size());
    ASSERT_EQ(p.eva.at(rel).size(), st.eva.size());
    for (std::size_t i = 0; i < st.det.size(); ++i) {
      const auto& inst = p.det.at(rel)[i];
      EXPECT_EQ(inst.subject, fx().world.entity(st.det[i].subject).surface());
      EXPECT_EQ(inst.object, fx().world.entity(st.det[i].object).surface());
      EXPECT_EQ(inst.split, Split::det);
      EXPECT_EQ(inst.text, render_subject(fx().templates.primary(rel).pattern, inst.subject));
      EXPECT_EQ(inst.text.find(" " + inst.object + " "), std::string::npos);
    }
    if (fx().templates.alternate(rel)) {
      ASSERT_EQ(p.eva2.at(rel).size(), st.eva.size());
      for (std::size_t i = 0; i < st.eva.size(); ++i) {
        EXPECT_EQ(p.eva2.at(rel)[i].subject, p.eva.at(rel)[i].subject);
        EXPECT_NE(p.eva2.at(rel)[i].text, p.eva.at(rel)[i].text);
        EXPECT_EQ(p.eva2.at(rel)[i].split, Split::eva2);
      }
    }
  }
  EXPECT_FALSE(p.eva2.empty());
}

TEST(Render, RejectsTemplateThatLeaksTheObject) {
  auto templates = fx().templates;
  const auto rel = fx().world.relation_names().front();
  const auto& t = fx().split.at(rel).det.front();
  const auto obj = fx().world.entity(t.object).surface();
  for (auto& pt : templates.prompts[rel])
    if (pt.variant == TemplateVariant::primary) pt.pattern = "{s} near " + obj + " is";
  EXPECT_THROW(render_prompts(fx().world, templates, fx().split), ValidationError);
}

TEST(Continuation, Rule) {
  EXPECT_TRUE(continuation_matches("paris", "paris"));
  EXPECT_TRUE(continuation_matches(" paris", "paris"));
  EXPECT_TRUE(continuation_matches("new", "new york"));     // prefix of a two-word object
  EXPECT_TRUE(continuation_matches("paris .", "paris"));    // object then whitespace
  EXPECT_TRUE(continuation_matches("paris.", "paris"));     // object then punctuation
  EXPECT_FALSE(continuation_matches("parisian", "paris"));  // no boundary
  EXPECT_FALSE(continuation_matches("rome", "paris"));
  EXPECT_FALSE(continuation_matches("Paris", "paris"));
  EXPECT_FALSE(continuation_matches("", "paris"));
  EXPECT_FALSE(continuation_matches("   ", "paris"));
  EXPECT_TRUE(continuation_matches("new york", "new york"));
  EXPECT_FALSE(continuation_matches("new jersey", "new york"));
}

TEST(Continuation, IsCorrectNeedsTwoTokens) {
  const Tokenizer tok({"<pad>", "<bos>", "new", "york", ".", "paris"});
  EXPECT_TRUE(is_correct(std::vector<TokenId>{2, 3}, "new york", tok));
  EXPECT_TRUE(is_correct(std::vector<TokenId>{5, 4}, "paris", tok));
  EXPECT_FALSE(is_correct(std::vector<TokenId>{5, 2}, "new york", tok));
  EXPECT_FALSE(is_correct(std::vector<TokenId>{0, 0}, "paris", tok));
  EXPECT_THROW(is_correct(std::vector<TokenId>{5}, "paris", tok), ValidationError);
}

TEST(Validate, ZeroModelRejectsEverythingAndWarns) {
  const auto& f = fx();
  const auto tok = Tokenizer::build(f.world, f.templates);
  ModelConfig c;
  c.n_layers = 1;
  c.d_model = 8;
  c.n_heads = 1;
  c.d_ff = 8;
  c.vocab_size = static_cast<std::uint32_t>(tok.size());
  const TinyLM zero(c);
  PromptSets det;
  for (const auto& [rel, ps] : f.prompts.det) det[rel] = {ps.begin(), ps.begin() + 5};
  const auto v = validate_prompts(zero, tok, det);
  EXPECT_EQ(v.report.rejected.size(), 5 * det.size());
  EXPECT_EQ(v.report.warnings.size(), det.size());
  for (const auto& [rel, n] : v.report.total) {
    EXPECT_EQ(n, 5u);
    EXPECT_EQ(v.report.survivors.at(rel), 0u);
    EXPECT_TRUE(v.kept.at(rel).empty());
  }
}

TEST(LabeledSet, PositivesFirstAndRatioRespected) {
  const auto s = toy_sets();
  const auto set = build_labeled_set("a", s, 4.0, 9);
  EXPECT_EQ(set.n_positive, 10u);
  EXPECT_EQ(set.n_negative, 40u);
  EXPECT_EQ(set.shortfall, 0u);
  EXPECT_FALSE(set.degenerate);
  ASSERT_EQ(set.examples.size(), 50u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(set.examples[i].label, 1);
    EXPECT_EQ(set.examples[i].prompt, s.at("a")[i]);
  }
  std::set<std::string> seen;
  for (std::size_t i = 10; i < 50; ++i) {
    EXPECT_EQ(set.examples[i].label, 0);
    EXPECT_NE(set.examples[i].prompt.relation, "a");
    EXPECT_TRUE(seen.insert(set.examples[i].prompt.subject).second);  // without replacement
  }
  const auto labels = set.labels();
  EXPECT_EQ(std::count(labels.begin(), labels.end(), 1), 10);
}

TEST(LabeledSet, SeededDrawsAndFractionalRatio) {
  const auto s = toy_sets();
  EXPECT_EQ(build_labeled_set("b", s, 0.5, 1).examples, build_labeled_set("b", s, 0.5, 1).examples);
  EXPECT_NE(build_labeled_set("b", s, 0.5, 1).examples, build_labeled_set("b", s, 0.5, 2).examples);
  EXPECT_EQ(build_labeled_set("b", s, 0.5, 1).n_negative, 15u);
  EXPECT_EQ(build_labeled_set("a", s, 0.25, 1).n_negative, 2u);  // floor(2.5)
}

TEST(LabeledSet, ShortfallDegenerateAndErrors) {
  const auto s = toy_sets();
  const auto big = build_labeled_set("b", s, 4.0, 1);
  EXPECT_EQ(big.n_negative, 35u);
  EXPECT_EQ(big.shortfall, 120u - 35u);
  const auto none = build_labeled_set("a", s, 0.0, 1);
  EXPECT_TRUE(none.degenerate);
  EXPECT_EQ(none.n_negative, 0u);
  EXPECT_TRUE(build_labeled_set("a", s, 0.05, 1).degenerate);
  EXPECT_THROW(build_labeled_set("zzz", s, 1.0, 1), ValidationError);
  EXPECT_THROW(build_labeled_set("a", s, -1.0, 1), ValidationError);
  PromptSets only{{"a", s.at("a")}};
  EXPECT_THROW(build_labeled_set("a", only, 1.0, 1), ValidationError);
}

TEST(ConceptSet, BalancedAndDeduplicated) {
  const auto& f = fx();
  const auto concepts = f.world.subject_concepts();
  ASSERT_GE(concepts.size(), 2u);
  const auto set = build_concept_set(concepts.front(), f.world, f.templates, 5);
  EXPECT_EQ(set.n_positive, set.n_negative + set.shortfall);
  std::set<std::string> texts;
  for (const auto& e : set.examples) {
    EXPECT_EQ(e.prompt.split, Split::concept_set);
    EXPECT_TRUE(e.prompt.object.empty());
    EXPECT_EQ(e.label == 1, e.prompt.relation == concepts.front());
    if (e.label == 1) EXPECT_TRUE(texts.insert(e.prompt.text).second);
  }
  EXPECT_EQ(set.n_positive % f.templates.concept_patterns.size(), 0u);
  EXPECT_THROW(build_concept_set("no_such_concept", f.world, f.templates, 5), ValidationError);
}

TEST(Jsonl, PromptRoundTrip) {
  std::vector<PromptInstance> ps = fx().prompts.eva.begin()->second;
  ps.push_back({"r", "s \"quoted\"", "o", "text with \\ and \t", Split::eva2});
  const auto path = tmp("prompts.jsonl");
  write_prompts_jsonl(path, ps);
  EXPECT_EQ(read_prompts_jsonl(path), ps);
  std::ifstream in(path);
  std::string first;
  std::getline(in, first);
  const auto j = nlohmann::json::parse(first);
  for (const char* k : {"relation", "subject", "object", "text", "split"}) EXPECT_TRUE(j.contains(k));
  std::filesystem::remove(path);
}

TEST(Jsonl, MalformedInputIsRejected) {
  const auto path = tmp("bad.jsonl");
  {
    std::ofstream out(path);
    out << "{\"relation\":\"r\"}\n";
  }
  EXPECT_THROW(read_prompts_jsonl(path), IoError);
  {
    std::ofstream out(path);
    out << "not json\n";
  }
  EXPECT_THROW(read_prompts_jsonl(path), IoError);
  {
    std::ofstream out(path);
    out << R"({"relation":"r","subject":"s","object":"o","text":"t","split":"train"})" << "\n";
  }
  EXPECT_THROW(read_prompts_jsonl(path), ValidationError);
  std::filesystem::remove(path);
  EXPECT_THROW(read_prompts_jsonl(path), IoError);
}

TEST(Jsonl, LabeledSetRoundTrip) {
  const auto set = build_labeled_set("a", toy_sets(), 2.0, 17);
  const auto j = tmp("set.jsonl"), m = tmp("set.json");
  write_labeled_set(j, m, set);
  const auto back = read_labeled_set(j, m);
  EXPECT_EQ(back.examples, set.examples);
  EXPECT_EQ(back.target, set.target);
  EXPECT_EQ(back.seed, set.seed);
  EXPECT_EQ(back.ratio, set.ratio);
  EXPECT_EQ(back.n_positive, set.n_positive);
  EXPECT_EQ(back.n_negative, set.n_negative);
  {
    std::ofstream out(j, std::ios::app);
    out << R"({"relation":"r","subject":"s","object":"o","text":"t","split":"det","label":2})" << "\n";
  }
  EXPECT_THROW(read_labeled_set(j, m), ValidationError);
  std::filesystem::remove(j);
  std::filesystem::remove(m);
}
