#include "rsn/probes.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "rsn/common.hpp"

namespace rsn {

namespace {

std::vector<std::string> words_of(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> w;
  for (std::string t; in >> t;) w.push_back(t);
  return w;
}

bool contains_words(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

std::string lstrip(const std::string& s) {
  std::size_t i = 0;
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

PromptInstance make_prompt(const World& world, const Triple& t, const PromptTemplate& tpl,
                           Split split) {
  PromptInstance p;
  p.relation = t.relation;
  p.subject = world.entity(t.subject).surface();
  p.object = world.entity(t.object).surface();
  p.text = render_subject(tpl.pattern, p.subject);
  p.split = split;
  if (contains_words(words_of(p.text), world.entity(t.object).words))
    throw ValidationError("rendered prompt '" + p.text + "' contains its object '" + p.object +
                          "'");
  return p;
}

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::det: return "det";
    case Split::eva: return "eva";
    case Split::eva2: return "eva2";
    case Split::concept_set: return "concept";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "det") return Split::det;
  if (s == "eva") return Split::eva;
  if (s == "eva2") return Split::eva2;
  if (s == "concept") return Split::concept_set;
  throw ValidationError("unknown split '" + s + "'");
}

WorldSplit split_world(const World& world, std::size_t n_eva, std::uint64_t seed) {
  WorldSplit out;
  for (const auto& rel : world.relation_names())
    out[rel] = split_det_eva(world.triples_of(rel), n_eva, derive_seed(seed, "split/" + rel));
  return out;
}

RenderedPrompts render_prompts(const World& world, const TemplateSet& templates,
                               const WorldSplit& split) {
  RenderedPrompts r;
  for (const auto& [rel, st] : split) {
    world.relation(rel);
    const PromptTemplate& primary = templates.primary(rel);
    const PromptTemplate* alt = templates.alternate(rel);
    auto& det = r.det[rel];
    auto& eva = r.eva[rel];
    for (const auto& t : st.det) {
      if (t.relation != rel) throw ValidationError("triple of '" + t.relation + "' under '" + rel + "'");
      det.push_back(make_prompt(world, t, primary, Split::det));
    }
    for (const auto& t : st.eva) {
      if (t.relation != rel) throw ValidationError("triple of '" + t.relation + "' under '" + rel + "'");
      eva.push_back(make_prompt(world, t, primary, Split::eva));
    }
    if (alt) {
      auto& eva2 = r.eva2[rel];
      for (const auto& t : st.eva) eva2.push_back(make_prompt(world, t, *alt, Split::eva2));
    }
  }
  return r;
}

bool continuation_matches(const std::string& continuation, const std::string& object) {
  const std::string c = lstrip(continuation);
  const std::string o = lstrip(object);
  if (c.empty() || o.empty()) return false;
  if (c.size() <= o.size()) return o.starts_with(c);
  if (!c.starts_with(o)) return false;
  const unsigned char next = static_cast<unsigned char>(c[o.size()]);
  return std::isspace(next) || std::ispunct(next);
}

bool is_correct(std::span<const TokenId> predicted, const std::string& object,
                const Tokenizer& tokenizer) {
  if (predicted.size() != 2)
    throw ValidationError("is_correct expects exactly 2 predicted tokens, got " +
                          std::to_string(predicted.size()));
  return continuation_matches(tokenizer.decode(predicted), object);
}

ValidatedPrompts validate_prompts(const TinyLM& model, const Tokenizer& tokenizer,
                                  const PromptSets& det) {
  ValidatedPrompts out;
  for (const auto& [rel, prompts] : det) {
    std::vector<std::vector<TokenId>> enc;
    enc.reserve(prompts.size());
    for (const auto& p : prompts) enc.push_back(tokenizer.encode(p.text, true));
    const auto gen = enc.empty() ? std::vector<std::vector<TokenId>>{}
                                 : model.generate_batch(enc, 2);
    auto& kept = out.kept[rel];
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      if (is_correct(gen[i], prompts[i].object, tokenizer))
        kept.push_back(prompts[i]);
      else
        out.report.rejected.push_back({prompts[i], tokenizer.decode(gen[i])});
    }
    out.report.total[rel] = prompts.size();
    out.report.survivors[rel] = kept.size();
    if (kept.empty()) out.report.warnings.push_back(rel);
  }
  return out;
}

std::vector<std::uint8_t> LabeledExampleSet::labels() const {
  std::vector<std::uint8_t> l;
  l.reserve(examples.size());
  for (const auto& e : examples) l.push_back(static_cast<std::uint8_t>(e.label));
  return l;
}

LabeledExampleSet build_labeled_set(const std::string& target, const PromptSets& validated,
                                    double ratio, std::uint64_t seed) {
  if (ratio < 0.0) throw ValidationError("negative sampling ratio must be non-negative");
  auto it = validated.find(target);
  if (it == validated.end() || it->second.empty())
    throw ValidationError("no positive prompts for '" + target + "'");

  LabeledExampleSet set;
  set.target = target;
  set.seed = seed;
  set.ratio = ratio;
  for (const auto& p : it->second) set.examples.push_back({p, 1});
  set.n_positive = it->second.size();

  const auto wanted =
      static_cast<std::size_t>(std::floor(ratio * static_cast<double>(set.n_positive)));
  if (wanted == 0) {
    set.degenerate = true;
    return set;
  }
  std::vector<const PromptInstance*> pool;
  for (const auto& [rel, ps] : validated)
    if (rel != target)
      for (const auto& p : ps) pool.push_back(&p);
  if (pool.empty()) throw ValidationError("no negative prompts available for '" + target + "'");

  Rng rng(seed);
  const std::size_t take = std::min(wanted, pool.size());
  for (auto i : sample_without_replacement(pool.size(), take, rng))
    set.examples.push_back({*pool[i], 0});
  set.n_negative = take;
  set.shortfall = wanted - take;
  return set;
}

LabeledExampleSet build_concept_set(const std::string& concept_name, const World& world,
                                    const TemplateSet& templates, std::uint64_t seed) {
  const auto concepts = world.subject_concepts();
  if (concepts.size() < 2) throw ValidationError("concept sets need at least 2 subject concepts");
  if (std::find(concepts.begin(), concepts.end(), concept_name) == concepts.end())
    throw ValidationError("'" + concept_name + "' is not a subject concept of the world");
  if (templates.concept_patterns.empty()) throw ValidationError("no concept patterns");

  // Subject entities per concept, in first-use order.
  std::map<std::string, std::vector<EntityId>> subjects;
  std::set<EntityId> seen;
  for (const auto& rel : world.relation_names()) {
    const auto& c = world.relation(rel).subject_concept;
    for (const auto& t : world.triples_of(rel))
      if (seen.insert(t.subject).second) subjects[c].push_back(t.subject);
  }
  auto prompts_for = [&](const std::string& c) {
    std::vector<PromptInstance> ps;
    for (auto id : subjects[c])
      for (const auto& pat : templates.concept_patterns) {
        PromptInstance p;
        p.relation = c;
        p.subject = world.entity(id).surface();
        p.text = render_subject(pat, p.subject);
        p.split = Split::concept_set;
        ps.push_back(std::move(p));
      }
    return ps;
  };

  LabeledExampleSet set;
  set.target = concept_name;
  set.seed = seed;
  set.ratio = 1.0;
  const auto pos = prompts_for(concept_name);
  if (pos.empty()) throw ValidationError("concept '" + concept_name + "' has no entities");
  for (const auto& p : pos) set.examples.push_back({p, 1});
  set.n_positive = pos.size();

  std::vector<PromptInstance> pool;
  for (const auto& c : concepts)
    if (c != concept_name) {
      auto ps = prompts_for(c);
      pool.insert(pool.end(), ps.begin(), ps.end());
    }
  Rng rng(seed);
  const std::size_t take = std::min(pos.size(), pool.size());
  for (auto i : sample_without_replacement(pool.size(), take, rng))
    set.examples.push_back({pool[i], 0});
  set.n_negative = take;
  set.shortfall = pos.size() - take;
  return set;
}

nlohmann::ordered_json prompt_to_json(const PromptInstance& p) {
  nlohmann::ordered_json j;
  j["relation"] = p.relation;
  j["subject"] = p.subject;
  j["object"] = p.object;
  j["text"] = p.text;
  j["split"] = to_string(p.split);
  return j;
}

PromptInstance prompt_from_json(const nlohmann::json& j) {
  try {
    PromptInstance p;
    p.relation = j.at("relation").get<std::string>();
    p.subject = j.at("subject").get<std::string>();
    p.object = j.at("object").get<std::string>();
    p.text = j.at("text").get<std::string>();
    p.split = split_from_string(j.at("split").get<std::string>());
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed prompt record: ") + e.what());
  }
}

std::vector<std::string> read_jsonl_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(line);
  return lines;
}

namespace {

nlohmann::json parse_line(const std::string& line, const std::filesystem::path& path,
                          std::size_t n) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path.string() + ":" + std::to_string(n + 1) + ": " + e.what());
  }
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

void write_prompts_jsonl(const std::filesystem::path& path, const std::vector<PromptInstance>& ps) {
  std::vector<std::string> lines;
  for (const auto& p : ps) lines.push_back(prompt_to_json(p).dump());
  write_lines(path, lines);
}

std::vector<PromptInstance> read_prompts_jsonl(const std::filesystem::path& path) {
  std::vector<PromptInstance> out;
  const auto lines = read_jsonl_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i)
    out.push_back(prompt_from_json(parse_line(lines[i], path, i)));
  return out;
}

nlohmann::ordered_json labeled_set_manifest(const LabeledExampleSet& set) {
  nlohmann::ordered_json j;
  j["target"] = set.target;
  j["ratio"] = set.ratio;
  j["seed"] = set.seed;
  j["n_positive"] = set.n_positive;
  j["n_negative"] = set.n_negative;
  j["shortfall"] = set.shortfall;
  j["degenerate"] = set.degenerate;
  return j;
}

void write_labeled_set(const std::filesystem::path& jsonl, const std::filesystem::path& manifest,
                       const LabeledExampleSet& set) {
  std::vector<std::string> lines;
  for (const auto& e : set.examples) {
    auto j = prompt_to_json(e.prompt);
    j["label"] = e.label;
    lines.push_back(j.dump());
  }
  write_lines(jsonl, lines);
  write_lines(manifest, {labeled_set_manifest(set).dump(2)});
}

LabeledExampleSet read_labeled_set(const std::filesystem::path& jsonl,
                                   const std::filesystem::path& manifest) {
  LabeledExampleSet set;
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open " + manifest.string());
  try {
    const auto m = nlohmann::json::parse(in);
    set.target = m.at("target").get<std::string>();
    set.ratio = m.at("ratio").get<double>();
    set.seed = m.at("seed").get<std::uint64_t>();
    set.shortfall = m.value("shortfall", std::size_t{0});
    set.degenerate = m.value("degenerate", false);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed labeled-set manifest " + manifest.string() + ": " + e.what());
  }
  const auto lines = read_jsonl_lines(jsonl);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto j = parse_line(lines[i], jsonl, i);
    LabeledExample e;
    e.prompt = prompt_from_json(j);
    if (!j.contains("label") || !j["label"].is_number_integer())
      throw IoError(jsonl.string() + ":" + std::to_string(i + 1) + ": missing integer label");
    e.label = j["label"].get<int>();
    if (e.label != 0 && e.label != 1)
      throw ValidationError(jsonl.string() + ":" + std::to_string(i + 1) + ": label must be 0 or 1");
    (e.label ? set.n_positive : set.n_negative)++;
    set.examples.push_back(std::move(e));
  }
  return set;
}

}  // namespace rsn
