#include "rsn/ablate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "rsn/common.hpp"

namespace rsn {

EvalResult evaluate(const TinyLM& model, const Tokenizer& tokenizer,
                    const std::vector<PromptInstance>& prompts, const SuppressionMask& mask,
                    const std::string& mask_id) {
  EvalResult r;
  if (prompts.empty()) return r;
  std::vector<std::vector<TokenId>> enc;
  enc.reserve(prompts.size());
  for (const auto& p : prompts) enc.push_back(tokenizer.encode(p.text, true));
  const auto gen = model.generate_batch(enc, 2, mask);
  r.outcomes.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    EvalOutcome o;
    o.prompt = prompts[i];
    o.predicted = gen[i];
    o.continuation = tokenizer.decode(gen[i]);
    o.correct = is_correct(gen[i], prompts[i].object, tokenizer);
    o.mask_id = mask_id;
    r.n_correct += o.correct;
    r.outcomes.push_back(std::move(o));
  }
  r.accuracy = static_cast<double>(r.n_correct) / static_cast<double>(prompts.size());
  return r;
}

EvalResult evaluate_predictions(const std::filesystem::path& predictions_jsonl,
                                const std::string& mask_id) {
  EvalResult r;
  const auto lines = read_jsonl_lines(predictions_jsonl);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw IoError(predictions_jsonl.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
    EvalOutcome o;
    o.prompt = prompt_from_json(j);
    if (!j.contains("continuation") || !j["continuation"].is_string())
      throw IoError(predictions_jsonl.string() + ":" + std::to_string(i + 1) +
                    ": missing string field 'continuation'");
    o.continuation = j["continuation"].get<std::string>();
    o.correct = continuation_matches(o.continuation, o.prompt.object);
    o.mask_id = j.value("mask_id", mask_id);
    r.n_correct += o.correct;
    r.outcomes.push_back(std::move(o));
  }
  if (!r.outcomes.empty())
    r.accuracy = static_cast<double>(r.n_correct) / static_cast<double>(r.outcomes.size());
  return r;
}

std::optional<double> accuracy_drop(double acc_original, double acc_masked) {
  if (acc_original <= 0.0) return std::nullopt;
  return (acc_original - acc_masked) / acc_original;
}

SuppressionMask random_mask(const std::vector<NeuronId>& universe, std::size_t k,
                            std::uint64_t seed) {
  if (k > universe.size()) throw ValidationError("random mask larger than the neuron set");
  Rng rng(seed);
  std::vector<NeuronId> pick;
  for (auto i : sample_without_replacement(universe.size(), k, rng)) pick.push_back(universe[i]);
  return SuppressionMask(std::move(pick));
}

DropMatrix drop_matrix(const TinyLM& model, const Tokenizer& tokenizer,
                       const std::map<std::string, NeuronRanking>& rankings,
                       const PromptSets& eva, std::size_t k) {
  DropMatrix m;
  for (const auto& [rel, _] : rankings) {
    if (!eva.count(rel)) throw ValidationError("no eva prompts for '" + rel + "'");
    m.relations.push_back(rel);
  }
  const std::size_t R = m.relations.size();
  for (const auto& rel : m.relations)
    m.baseline.push_back(evaluate(model, tokenizer, eva.at(rel), {}).accuracy);
  m.masked.assign(R, std::vector<double>(R, 0.0));
  m.drop.assign(R, std::vector<std::optional<double>>(R));
  for (std::size_t j = 0; j < R; ++j) {
    const auto mask = rankings.at(m.relations[j]).mask(k);
    for (std::size_t i = 0; i < R; ++i) {
      m.masked[i][j] = evaluate(model, tokenizer, eva.at(m.relations[i]), mask).accuracy;
      m.drop[i][j] = accuracy_drop(m.baseline[i], m.masked[i][j]);
    }
  }
  return m;
}

const std::vector<double>& default_sweep_fractions() {
  static const std::vector<double> f = {0.0001, 0.0005, 0.002, 0.005, 0.01,
                                        0.03,   0.10,   0.20,  0.50};
  return f;
}

std::vector<std::size_t> sweep_ks(std::size_t n_neurons, const std::vector<double>& fractions) {
  std::vector<std::size_t> ks;
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ValidationError("sweep fractions must lie in (0, 1]");
    // Guard against 0.01 * 2560 = 25.600000000000001 style round-up.
    const double x = f * static_cast<double>(n_neurons);
    auto k = static_cast<std::size_t>(std::ceil(x - 1e-9));
    k = std::max<std::size_t>(1, std::min(k, n_neurons));
    if (ks.empty() || k > ks.back()) ks.push_back(k);
  }
  return ks;
}

SweepCurve sweep_k(const TinyLM& model, const Tokenizer& tokenizer, const NeuronRanking& ranking,
                   const PromptSets& eva, const std::vector<std::size_t>& ks) {
  for (std::size_t i = 1; i < ks.size(); ++i)
    if (ks[i] <= ks[i - 1]) throw ValidationError("sweep ks must be strictly increasing");
  if (!eva.count(ranking.target)) throw ValidationError("no eva prompts for '" + ranking.target + "'");
  SweepCurve c;
  c.relation = ranking.target;
  for (auto k : ks) {
    const auto mask = ranking.mask(k);
    SweepPoint p;
    p.k = k;
    double others = 0.0;
    std::size_t n_others = 0;
    for (const auto& [rel, ps] : eva) {
      const double acc = evaluate(model, tokenizer, ps, mask).accuracy;
      if (rel == ranking.target) {
        p.acc_self = acc;
      } else {
        others += acc;
        ++n_others;
      }
    }
    p.acc_others_mean = n_others ? others / static_cast<double>(n_others) : 0.0;
    c.points.push_back(p);
  }
  return c;
}

SuppressionMask mask_difference(const SuppressionMask& large, const SuppressionMask& small) {
  std::vector<NeuronId> d;
  std::set_difference(large.neurons().begin(), large.neurons().end(), small.neurons().begin(),
                      small.neurons().end(), std::back_inserter(d));
  return SuppressionMask(std::move(d));
}

CumulativityReport cumulativity(const TinyLM& model, const Tokenizer& tokenizer,
                                const std::vector<PromptInstance>& prompts,
                                const SuppressionMask& small, const SuppressionMask& large) {
  if (!small.is_subset_of(large) || small.size() >= large.size())
    throw ValidationError("cumulativity needs the small mask to be a proper subset of the large");
  CumulativityReport rep;
  rep.k_small = small.size();
  rep.k_large = large.size();
  const auto a = evaluate(model, tokenizer, prompts, small);
  const auto b = evaluate(model, tokenizer, prompts, large);
  const auto c = evaluate(model, tokenizer, prompts, mask_difference(large, small));
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (a.outcomes[i].correct && !b.outcomes[i].correct) {
      ++rep.n_total;
      if (!c.outcomes[i].correct) ++rep.n_affected;
    }
  }
  if (rep.n_total)
    rep.cumulativity =
        1.0 - static_cast<double>(rep.n_affected) / static_cast<double>(rep.n_total);
  return rep;
}

CumulativityReport cumulativity(const TinyLM& model, const Tokenizer& tokenizer,
                                const NeuronRanking& ranking,
                                const std::vector<PromptInstance>& prompts, std::size_t k_small,
                                std::size_t k_large) {
  if (k_small >= k_large) throw ValidationError("cumulativity needs k_small < k_large");
  return cumulativity(model, tokenizer, prompts, ranking.mask(k_small), ranking.mask(k_large));
}

std::vector<TemplateRobustness> template_robustness(
    const TinyLM& model, const Tokenizer& tokenizer, const PromptSets& eva, const PromptSets& eva2,
    const std::map<std::string, SuppressionMask>& masks) {
  std::vector<TemplateRobustness> out;
  for (const auto& [rel, mask] : masks) {
    auto e = eva.find(rel);
    auto e2 = eva2.find(rel);
    if (e == eva.end() || e2 == eva2.end())
      throw ValidationError("template robustness needs eva and eva2 prompts for '" + rel + "'");
    if (e->second.size() != e2->second.size())
      throw ValidationError("eva and eva2 of '" + rel + "' are not aligned");
    for (std::size_t i = 0; i < e->second.size(); ++i)
      if (e->second[i].subject != e2->second[i].subject ||
          e->second[i].object != e2->second[i].object)
        throw ValidationError("eva and eva2 of '" + rel + "' are not aligned");
    TemplateRobustness t;
    t.relation = rel;
    t.eva = evaluate(model, tokenizer, e->second, {}).accuracy;
    t.eva_masked = evaluate(model, tokenizer, e->second, mask).accuracy;
    t.eva2 = evaluate(model, tokenizer, e2->second, {}).accuracy;
    t.eva2_masked = evaluate(model, tokenizer, e2->second, mask).accuracy;
    out.push_back(t);
  }
  return out;
}

std::vector<ResilienceReport> resilience_groups(const std::vector<EvalOutcome>& before,
                                                const std::vector<EvalOutcome>& after,
                                                const World& world) {
  if (before.size() != after.size())
    throw ValidationError("resilience_groups: outcome lists differ in length");
  std::map<std::pair<std::string, std::string>, double> weight;
  for (const auto& rel : world.relation_names())
    for (const auto& t : world.triples_of(rel))
      weight[{rel, world.entity(t.subject).surface()}] = t.frequency_weight;

  std::map<std::string, ResilienceReport> by_rel;
  std::vector<std::string> order;
  for (std::size_t i = 0; i < before.size(); ++i) {
    const auto& p = before[i].prompt;
    if (!(p == after[i].prompt))
      throw ValidationError("resilience_groups: outcome lists are not aligned");
    if (!by_rel.count(p.relation)) {
      by_rel[p.relation].relation = p.relation;
      order.push_back(p.relation);
    }
    if (!before[i].correct) continue;
    auto& r = by_rel[p.relation];
    (after[i].correct ? r.resilient : r.sensitive).push_back(p);
  }
  auto mean_weight = [&](const std::vector<PromptInstance>& ps) -> std::optional<double> {
    if (ps.empty()) return std::nullopt;
    double s = 0.0;
    for (const auto& p : ps) {
      auto it = weight.find({p.relation, p.subject});
      if (it == weight.end())
        throw ValidationError("no triple for subject '" + p.subject + "' in '" + p.relation + "'");
      s += it->second;
    }
    return s / static_cast<double>(ps.size());
  };
  std::vector<ResilienceReport> out;
  for (const auto& rel : order) {
    auto r = by_rel[rel];
    r.mean_resilient = mean_weight(r.resilient);
    r.mean_sensitive = mean_weight(r.sensitive);
    if (r.mean_resilient && r.mean_sensitive)
      r.relative_diff = (*r.mean_sensitive - *r.mean_resilient) / *r.mean_sensitive;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::string> neutral_sentences(const World& world, const TemplateSet& templates,
                                           const std::string& relation) {
  auto it = templates.neutral_object.find(relation);
  if (it == templates.neutral_object.end())
    throw ValidationError("no neutral object sentence for '" + relation + "'");
  std::set<EntityId> objects;
  for (const auto& t : world.triples_of(relation)) objects.insert(t.object);
  std::vector<std::string> out;
  for (auto o : objects) {
    std::string s = it->second;
    s.replace(s.find("{o}"), 3, world.entity(o).surface());
    out.push_back(std::move(s));
  }
  return out;
}

PplPair ppl_delta(const TinyLM& model, const Tokenizer& tokenizer, const std::string& relation,
                  const std::vector<std::string>& sentences, const SuppressionMask& mask) {
  PplPair r;
  r.relation = relation;
  for (const auto& s : sentences) {
    const auto ids = tokenizer.encode(s, true);
    if (ids.size() < 2) throw ValidationError("perplexity sentence shorter than 2 tokens");
    r.before += model.perplexity(ids);
    r.after += model.perplexity(ids, mask);
  }
  r.n_sentences = sentences.size();
  if (r.n_sentences) {
    r.before /= static_cast<double>(r.n_sentences);
    r.after /= static_cast<double>(r.n_sentences);
  }
  return r;
}

namespace {

nlohmann::ordered_json opt(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::optional<double> opt_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

nlohmann::ordered_json to_json(const EvalResult& r, bool with_outcomes) {
  nlohmann::ordered_json j;
  j["accuracy"] = r.accuracy;
  j["n_correct"] = r.n_correct;
  j["n_total"] = r.outcomes.size();
  if (with_outcomes) {
    j["outcomes"] = nlohmann::ordered_json::array();
    for (const auto& o : r.outcomes) {
      auto e = prompt_to_json(o.prompt);
      e["predicted"] = o.predicted;
      e["continuation"] = o.continuation;
      e["correct"] = o.correct;
      e["mask_id"] = o.mask_id;
      j["outcomes"].push_back(e);
    }
  }
  return j;
}

nlohmann::ordered_json to_json(const DropMatrix& m) {
  nlohmann::ordered_json j;
  j["relations"] = m.relations;
  j["baseline"] = m.baseline;
  j["masked"] = m.masked;
  auto d = nlohmann::ordered_json::array();
  for (const auto& row : m.drop) {
    auto r = nlohmann::ordered_json::array();
    for (const auto& c : row) r.push_back(opt(c));
    d.push_back(r);
  }
  j["drop"] = d;
  return j;
}

DropMatrix drop_matrix_from_json(const nlohmann::json& j) {
  DropMatrix m;
  try {
    m.relations = j.at("relations").get<std::vector<std::string>>();
    m.baseline = j.at("baseline").get<std::vector<double>>();
    m.masked = j.at("masked").get<std::vector<std::vector<double>>>();
    for (const auto& row : j.at("drop")) {
      std::vector<std::optional<double>> r;
      for (const auto& c : row) r.push_back(opt_from(c));
      m.drop.push_back(r);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed drop matrix: ") + e.what());
  }
  return m;
}

nlohmann::ordered_json to_json(const SweepCurve& c) {
  nlohmann::ordered_json j;
  j["relation"] = c.relation;
  j["points"] = nlohmann::ordered_json::array();
  for (const auto& p : c.points)
    j["points"].push_back({{"k", p.k}, {"acc_self", p.acc_self}, {"acc_others_mean", p.acc_others_mean}});
  return j;
}

SweepCurve sweep_curve_from_json(const nlohmann::json& j) {
  SweepCurve c;
  try {
    c.relation = j.at("relation").get<std::string>();
    for (const auto& p : j.at("points"))
      c.points.push_back({p.at("k").get<std::size_t>(), p.at("acc_self").get<double>(),
                          p.at("acc_others_mean").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed sweep curve: ") + e.what());
  }
  return c;
}

nlohmann::ordered_json to_json(const CumulativityReport& c) {
  nlohmann::ordered_json j;
  j["k_small"] = c.k_small;
  j["k_large"] = c.k_large;
  j["n_total"] = c.n_total;
  j["n_affected"] = c.n_affected;
  j["cumulativity"] = opt(c.cumulativity);
  return j;
}

nlohmann::ordered_json to_json(const ResilienceReport& r) {
  nlohmann::ordered_json j;
  j["relation"] = r.relation;
  j["n_resilient"] = r.resilient.size();
  j["n_sensitive"] = r.sensitive.size();
  j["mean_weight_resilient"] = opt(r.mean_resilient);
  j["mean_weight_sensitive"] = opt(r.mean_sensitive);
  j["relative_diff"] = opt(r.relative_diff);
  return j;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw ValidationError("spearman needs two equally long series of length >= 2");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j - 1) + 1.0;
      for (std::size_t t = i; t < j; ++t) r[idx[t]] = avg;
      i = j;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace rsn
