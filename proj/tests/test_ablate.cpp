#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "rsn/ablate.hpp"
#include "rsn/common.hpp"

using namespace rsn;

namespace {

std::filesystem::path tmp(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("rsn_ablate_" + name);
}

}  // namespace

TEST(OrGateFixture, BehavesAsWired) {
  const fixture::OrGate f;
  EXPECT_TRUE(evaluate(f.model, f.tokenizer, f.prompts, {}).outcomes[0].correct);
  EXPECT_TRUE(evaluate(f.model, f.tokenizer, f.prompts, SuppressionMask({f.a})).outcomes[0].correct);
  EXPECT_TRUE(evaluate(f.model, f.tokenizer, f.prompts, SuppressionMask({f.b})).outcomes[0].correct);
  const auto both = evaluate(f.model, f.tokenizer, f.prompts, SuppressionMask({f.a, f.b}));
  EXPECT_FALSE(both.outcomes[0].correct);
  EXPECT_EQ(both.outcomes[0].predicted.front(), 4);
}

TEST(Cumulativity, HandBuiltFixture) {
  const fixture::OrGate f;
  const auto r = cumulativity(f.model, f.tokenizer, f.prompts, SuppressionMask({f.a}),
                              SuppressionMask({f.a, f.b}));
  EXPECT_EQ(r.k_small, 1u);
  EXPECT_EQ(r.k_large, 2u);
  EXPECT_EQ(r.n_total, 1u);
  EXPECT_EQ(r.n_affected, 0u);
  ASSERT_TRUE(r.cumulativity);
  EXPECT_EQ(*r.cumulativity, 1.0);
}

TEST(Cumulativity, UndefinedWithoutFlippedPrompts) {
  const fixture::OrGate f;
  const NeuronId c{NeuronKind::gate, 0, 0};
  const auto r = cumulativity(f.model, f.tokenizer, f.prompts, SuppressionMask({f.a}),
                              SuppressionMask({f.a, c}));
  EXPECT_EQ(r.n_total, 0u);
  EXPECT_FALSE(r.cumulativity);
  EXPECT_THROW(cumulativity(f.model, f.tokenizer, f.prompts, SuppressionMask({f.a}),
                            SuppressionMask({f.a})),
               ValidationError);
  EXPECT_THROW(cumulativity(f.model, f.tokenizer, f.prompts, SuppressionMask({f.a}),
                            SuppressionMask({f.b, c})),
               ValidationError);
}

TEST(Cumulativity, CountsAreBoundedOnRandomModels) {
  ModelConfig cfg{2, 16, 2, 16, 8, 8};
  std::vector<std::string> words{"<pad>", "<bos>"};
  for (int i = 0; i < 6; ++i) words.push_back("w" + std::to_string(i));
  const Tokenizer tok(words);
  std::vector<PromptInstance> prompts;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      prompts.push_back({"r", "w" + std::to_string(i), "w" + std::to_string(j),
                         "w" + std::to_string(i) + " w" + std::to_string((i + j) % 6), Split::eva});
  const auto universe = neuron_index(cfg, KindSet::ffn());
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto m = TinyLM::initialize(cfg, s);
    for (auto& l : m.params().layers) l.w_down *= 40.0f;  // make masks matter
    NeuronRanking r;
    Rng rng(s);
    auto order = universe;
    rng.shuffle(order);
    for (const auto& n : order) r.entries.push_back({n, 0.5});
    const auto rep = cumulativity(m, tok, r, prompts, 5, 40);
    EXPECT_LE(rep.n_affected, rep.n_total);
    if (rep.cumulativity) {
      EXPECT_GE(*rep.cumulativity, 0.0);
      EXPECT_LE(*rep.cumulativity, 1.0);
    }
  }
}

TEST(MaskDifference, SetSemantics) {
  const SuppressionMask large({{NeuronKind::up, 0, 1}, {NeuronKind::up, 0, 2}, {NeuronKind::down, 1, 0}});
  const SuppressionMask small({{NeuronKind::up, 0, 2}});
  const auto d = mask_difference(large, small);
  EXPECT_EQ(d.neurons(), (std::vector<NeuronId>{{NeuronKind::up, 0, 1}, {NeuronKind::down, 1, 0}}));
  EXPECT_TRUE(d.is_subset_of(large));
  EXPECT_FALSE(small.is_subset_of(d));
}

TEST(Evaluate, RecordsOutcomes) {
  const fixture::OrGate f;
  auto prompts = f.prompts;
  prompts.push_back({"r", "x", "wrong", "x", Split::eva});
  const auto r = evaluate(f.model, f.tokenizer, prompts, SuppressionMask({f.a}), "m1");
  ASSERT_EQ(r.outcomes.size(), 2u);
  EXPECT_EQ(r.n_correct, 1u);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
  EXPECT_EQ(r.outcomes[0].mask_id, "m1");
  EXPECT_EQ(r.outcomes[0].predicted.size(), 2u);
  EXPECT_EQ(r.outcomes[0].continuation.substr(0, 3), "obj");
  EXPECT_EQ(evaluate(f.model, f.tokenizer, {}, {}).accuracy, 0.0);
}

TEST(Evaluate, OfflinePredictionsUseTheSameRule) {
  const auto path = tmp("pred.jsonl");
  {
    std::ofstream o(path);
    o << R"({"relation":"r","subject":"s","object":"new york","text":"t","split":"eva","continuation":"new york"})" << "\n";
    o << R"({"relation":"r","subject":"s","object":"paris","text":"t","split":"eva","continuation":" paris ."})" << "\n";
    o << R"({"relation":"r","subject":"s","object":"paris","text":"t","split":"eva","continuation":"parisian x","mask_id":"top"})" << "\n";
  }
  const auto r = evaluate_predictions(path);
  EXPECT_EQ(r.n_correct, 2u);
  EXPECT_NEAR(r.accuracy, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(r.outcomes[0].mask_id, "external");
  EXPECT_EQ(r.outcomes[2].mask_id, "top");
  {
    std::ofstream o(path);
    o << R"({"relation":"r","subject":"s","object":"paris","text":"t","split":"eva"})" << "\n";
  }
  EXPECT_THROW(evaluate_predictions(path), IoError);
  std::filesystem::remove(path);
}

TEST(AccuracyDrop, Formula) {
  EXPECT_DOUBLE_EQ(*accuracy_drop(0.8, 0.2), 0.75);
  EXPECT_DOUBLE_EQ(*accuracy_drop(0.5, 0.6), -0.2);
  EXPECT_FALSE(accuracy_drop(0.0, 0.0));
}

TEST(RandomMask, SeededUniformSubsets) {
  ModelConfig cfg{2, 16, 2, 24, 10, 8};
  const auto u = neuron_index(cfg, KindSet::ffn());
  const auto a = random_mask(u, 20, 5);
  EXPECT_EQ(a.size(), 20u);
  EXPECT_EQ(random_mask(u, 20, 5).neurons(), a.neurons());
  EXPECT_NE(random_mask(u, 20, 6).neurons(), a.neurons());
  EXPECT_EQ(random_mask(u, u.size(), 1).size(), u.size());
  EXPECT_THROW(random_mask(u, u.size() + 1, 1), ValidationError);
  // Every neuron gets drawn at a similar rate.
  std::map<NeuronId, int> hits;
  for (std::uint64_t s = 0; s < 400; ++s) {
    const auto m = random_mask(u, 13, s);
    for (const auto& n : m.neurons()) ++hits[n];
  }
  EXPECT_EQ(hits.size(), u.size());
  for (const auto& [n, h] : hits) EXPECT_NEAR(h, 400.0 * 13 / static_cast<double>(u.size()), 25);
}

TEST(SweepKs, CeilRoundingAndDeduplication) {
  EXPECT_EQ(sweep_ks(2560, {0.01}), std::vector<std::size_t>{26});
  EXPECT_EQ(sweep_ks(100, {0.01}), std::vector<std::size_t>{1});
  EXPECT_EQ(sweep_ks(2560, default_sweep_fractions()),
            (std::vector<std::size_t>{1, 2, 6, 13, 26, 77, 256, 512, 1280}));
  EXPECT_EQ(sweep_ks(10, {0.001, 0.01, 0.5, 1.0}), (std::vector<std::size_t>{1, 5, 10}));
  EXPECT_EQ(default_sweep_fractions().size(), 9u);
  EXPECT_THROW(sweep_ks(10, {0.0}), ValidationError);
  EXPECT_THROW(sweep_ks(10, {1.5}), ValidationError);
}

TEST(Sweep, NestedMasksOnFixture) {
  const fixture::OrGate f;
  NeuronRanking r{"r", {{f.a, 1.0}, {f.b, 0.9}, {{NeuronKind::gate, 0, 0}, 0.1}}};
  PromptSets eva{{"r", f.prompts}, {"q", f.prompts}};
  const auto c = sweep_k(f.model, f.tokenizer, r, eva, {1, 2, 3});
  ASSERT_EQ(c.points.size(), 3u);
  EXPECT_EQ(c.points[0].acc_self, 1.0);
  EXPECT_EQ(c.points[1].acc_self, 0.0);
  EXPECT_EQ(c.points[1].acc_others_mean, 0.0);  // "q" shares the prompts
  EXPECT_THROW(sweep_k(f.model, f.tokenizer, r, eva, {2, 2}), ValidationError);
  const auto back = sweep_curve_from_json(to_json(c));
  EXPECT_EQ(back.points.size(), 3u);
  EXPECT_EQ(back.points[2].k, 3u);
}

TEST(DropMatrix, DiagonalOnFixtureAndJsonRoundTrip) {
  const fixture::OrGate f;
  std::map<std::string, NeuronRanking> rankings{
      {"r", {"r", {{f.a, 1.0}, {f.b, 0.9}}}},
      {"q", {"q", {{{NeuronKind::gate, 0, 0}, 1.0}, {f.a, 0.5}}}}};
  PromptSets eva{{"r", f.prompts}, {"q", f.prompts}};
  const auto m = drop_matrix(f.model, f.tokenizer, rankings, eva, 2);
  ASSERT_EQ(m.relations, (std::vector<std::string>{"q", "r"}));
  EXPECT_EQ(m.baseline, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(m.masked[1][1], 0.0);  // r under r's mask
  EXPECT_EQ(m.masked[1][0], 1.0);  // r under q's mask
  EXPECT_EQ(*m.drop[1][1], 1.0);
  const auto back = drop_matrix_from_json(to_json(m));
  EXPECT_EQ(back.masked, m.masked);
  EXPECT_EQ(*back.drop[0][1], *m.drop[0][1]);
  EXPECT_THROW(drop_matrix_from_json(nlohmann::json::object()), IoError);
}

TEST(TemplateRobustness, RequiresAlignedSets) {
  const fixture::OrGate f;
  PromptSets eva{{"r", f.prompts}}, eva2{{"r", f.prompts}};
  eva2["r"][0].split = Split::eva2;
  const auto t = template_robustness(f.model, f.tokenizer, eva, eva2,
                                     {{"r", SuppressionMask({f.a, f.b})}});
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0].eva, 1.0);
  EXPECT_EQ(t[0].eva_masked, 0.0);
  EXPECT_EQ(t[0].eva2_masked, 0.0);
  eva2["r"][0].subject = "y";
  EXPECT_THROW(template_robustness(f.model, f.tokenizer, eva, eva2, {{"r", {}}}), ValidationError);
  EXPECT_THROW(template_robustness(f.model, f.tokenizer, eva, {}, {{"r", {}}}), ValidationError);
}

TEST(Resilience, GroupsAndRelativeDifference) {
  World w;
  w.relations.push_back({"r", "c", "d", 3, 3, {}, ""});
  w.entities = {{0, "c", {"s0"}}, {1, "c", {"s1"}}, {2, "c", {"s2"}}, {3, "d", {"o"}}};
  w.triples["r"] = {{0, "r", 3, 8.0}, {1, "r", 3, 2.0}, {2, "r", 3, 4.0}};
  auto outcome = [](const std::string& s, bool ok) {
    EvalOutcome o;
    o.prompt = {"r", s, "o", s + " is", Split::eva};
    o.correct = ok;
    return o;
  };
  const std::vector<EvalOutcome> before{outcome("s0", true), outcome("s1", true), outcome("s2", false)};
  const std::vector<EvalOutcome> after{outcome("s0", true), outcome("s1", false), outcome("s2", true)};
  const auto rep = resilience_groups(before, after, w);
  ASSERT_EQ(rep.size(), 1u);
  EXPECT_EQ(rep[0].resilient.size(), 1u);
  EXPECT_EQ(rep[0].sensitive.size(), 1u);
  EXPECT_DOUBLE_EQ(*rep[0].mean_resilient, 8.0);
  EXPECT_DOUBLE_EQ(*rep[0].mean_sensitive, 2.0);
  EXPECT_DOUBLE_EQ(*rep[0].relative_diff, (2.0 - 8.0) / 2.0);
  // One group empty: no relative difference.
  const auto none = resilience_groups(before, before, w);
  EXPECT_FALSE(none[0].relative_diff);
  EXPECT_FALSE(none[0].mean_sensitive);
  EXPECT_THROW(resilience_groups(before, {after[0]}, w), ValidationError);
  auto shuffled = after;
  std::swap(shuffled[0], shuffled[1]);
  EXPECT_THROW(resilience_groups(before, shuffled, w), ValidationError);
}

TEST(Perplexity, NeutralSentencesAndDelta) {
  const World w = generate_world(WorldConfig::default_config(), 2);
  const auto ts = TemplateSet::default_set();
  const auto rel = w.relation_names().front();
  const auto s = neutral_sentences(w, ts, rel);
  std::set<EntityId> objects;
  for (const auto& t : w.triples_of(rel)) objects.insert(t.object);
  EXPECT_EQ(s.size(), objects.size());
  for (const auto& x : s) EXPECT_EQ(x.find("{o}"), std::string::npos);
  auto bad = ts;
  bad.neutral_object.erase(rel);
  EXPECT_THROW(neutral_sentences(w, bad, rel), ValidationError);

  const fixture::OrGate f;
  const auto p = ppl_delta(f.model, f.tokenizer, "r", {"x obj", "x obj obj"}, SuppressionMask({f.a, f.b}));
  EXPECT_EQ(p.n_sentences, 2u);
  EXPECT_LT(p.before, p.after);
  EXPECT_GT(p.before, 1.0);
}

TEST(Spearman, MatchesOracle) {
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0);
  EXPECT_EQ(spearman({1, 2, 3}, {5, 5, 5}), 0.0);
  EXPECT_THROW(spearman({1}, {1}), ValidationError);
  EXPECT_THROW(spearman({1, 2}, {1}), ValidationError);
  Rng r(3);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> a, b;
    const auto n = 2 + r.uniform(15);
    for (std::size_t i = 0; i < n; ++i) {
      a.push_back(static_cast<double>(r.uniform(5)));
      b.push_back(static_cast<double>(r.uniform(5)));
    }
    EXPECT_NEAR(spearman(a, b), oracle::spearman(a, b), 1e-12);
  }
}

TEST(Json, ReportsSerialize) {
  CumulativityReport c;
  c.n_total = 3;
  c.n_affected = 1;
  c.cumulativity = 2.0 / 3.0;
  const auto j = to_json(c);
  EXPECT_EQ(j["n_total"], 3);
  EXPECT_NEAR(j["cumulativity"].get<double>(), 2.0 / 3.0, 1e-15);
  c.cumulativity.reset();
  EXPECT_TRUE(to_json(c)["cumulativity"].is_null());
}
