// rsnlab: runs the relation-neuron pipeline stage by stage inside one run
// directory. Every stage reads its inputs from the directory, writes its
// outputs there and appends a record to manifest.json.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rsn/ablate.hpp"
#include "rsn/common.hpp"
#include "rsn/expert.hpp"
#include "rsn/pipeline.hpp"
#include "rsn/report.hpp"
#include "rsn/store.hpp"

namespace fs = std::filesystem;
using namespace rsn;
using json = nlohmann::ordered_json;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
};

// Stage context: resolved config, run root and bookkeeping of every file
// read or written, so that the manifest can be updated and partial outputs
// removed on failure.
class Stage {
 public:
  Stage(std::string name, const Common& c) : name_(std::move(name)) {
    std::string out = c.out;
    if (out.empty())
      if (const char* env = std::getenv("RSNLAB_OUT")) out = env;
    if (out.empty()) throw ValidationError("--out is required (or set RSNLAB_OUT)");
    root_ = out;
    if (!c.config.empty())
      config_ = RunConfig::load(c.config);
    else if (fs::exists(root_ / "config.json"))
      config_ = RunConfig::load(root_ / "config.json");
    if (c.seed) config_.seed = *c.seed;
    started_ = utc_timestamp();
  }

  const RunConfig& config() const { return config_; }
  RunConfig& config() { return config_; }
  const fs::path& root() const { return root_; }

  fs::path in(const std::string& rel) {
    const auto p = root_ / rel;
    if (!fs::exists(p)) throw IoError("missing input " + p.string() + " (run the earlier stage first)");
    inputs_.push_back(rel);
    return p;
  }
  fs::path out(const std::string& rel) {
    const auto p = root_ / rel;
    fs::create_directories(p.parent_path());
    outputs_.push_back(rel);
    return p;
  }
  // Output outside the run directory, e.g. score --out r.csv.
  fs::path external(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    external_.push_back(p);
    return p;
  }

  // Standalone use outside a run directory: nothing is recorded.
  void unrecorded() { recorded_ = false; }

  void commit() {
    if (recorded_) record();
    committed_ = true;
  }

  ~Stage() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& o : outputs_) fs::remove(root_ / o, ec);
    for (const auto& p : external_) fs::remove(p, ec);
  }

 private:
  void record() {
    StageRecord r;
    r.name = name_;
    r.config_hash = config_.hash();
    r.seed = config_.seed;
    for (const auto& i : inputs_) r.inputs[i] = file_digest(root_ / i);
    for (const auto& o : outputs_) r.outputs[o] = file_digest(root_ / o);
    r.started = started_;
    r.finished = utc_timestamp();
    auto m = RunManifest::load(root_);
    m.record(std::move(r));
    m.save(root_);
  }

  std::string name_;
  RunConfig config_;
  fs::path root_;
  std::string started_;
  std::vector<std::string> inputs_, outputs_;
  std::vector<fs::path> external_;
  bool committed_ = false;
  bool recorded_ = true;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Run seed (overrides the config)");
  app->add_option("--config", c.config, "Run config JSON (default: <out>/config.json or built-in)");
  app->add_option("--out", c.out, "Run directory");
}

void write_json(Stage& st, const std::string& rel, const json& j) { write_json_file(st.out(rel), j); }

World load_world(Stage& st) { return World::from_json(read_json_file(st.in("world.json"))); }
Tokenizer load_tokenizer(Stage& st) { return Tokenizer::from_json(read_json_file(st.in("tokenizer.json"))); }

TinyLM load_model(Stage& st) {
  auto m = TinyLM::load(st.in("model.tlmw"));
  return m;
}

PromptSets load_prompt_dir(Stage& st, const std::string& dir, const std::vector<std::string>& rels,
                           bool optional = false) {
  PromptSets s;
  for (const auto& r : rels) {
    const std::string rel = dir + "/" + r + ".jsonl";
    if (optional && !fs::exists(st.root() / rel)) continue;
    s[r] = read_prompts_jsonl(st.in(rel));
  }
  return s;
}

std::map<std::string, NeuronRanking> load_rankings(Stage& st, const std::vector<std::string>& rels) {
  std::map<std::string, NeuronRanking> out;
  for (const auto& r : rels) {
    const std::string rel = "rankings/" + r + ".csv";
    if (!fs::exists(st.root() / rel)) continue;  // relation without a scorable set
    out[r] = read_ranking_csv(st.in(rel), r);
  }
  if (out.empty()) throw ValidationError("no rankings found; run score first");
  return out;
}

// "26" or "1%" (of the ranked neurons, rounded up); empty uses the config.
std::size_t parse_k(const std::string& s, const PipelineConfig& p, std::size_t n) {
  if (s.empty()) return top_k_count(p, n);
  try {
    if (s.back() == '%') {
      PipelineConfig q = p;
      q.top_k = 0;
      q.top_fraction = std::stod(s.substr(0, s.size() - 1)) / 100.0;
      if (!(q.top_fraction > 0 && q.top_fraction <= 1)) throw ValidationError("k percentage out of range");
      return top_k_count(q, n);
    }
    const auto k = std::stoul(s);
    if (k == 0 || k > n) throw ValidationError("k out of range: " + s);
    return k;
  } catch (const std::logic_error&) {
    throw ValidationError("cannot parse k '" + s + "'");
  }
}

std::map<std::string, std::string> parse_fields(const std::string& spec, std::size_t from) {
  std::map<std::string, std::string> f;
  std::size_t i = from;
  while (i < spec.size()) {
    auto j = spec.find(':', i);
    if (j == std::string::npos) j = spec.size();
    const auto kv = spec.substr(i, j - i);
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValidationError("mask spec field '" + kv + "' lacks '='");
    f[kv.substr(0, eq)] = kv.substr(eq + 1);
    i = j + 1;
  }
  return f;
}

// none | top:relation=R[:k=K] | random:k=K[:seed=S] | file:PATH
SuppressionMask resolve_mask(Stage& st, const std::string& spec, const TinyLM& model) {
  const auto& p = st.config().pipeline;
  const auto universe = neuron_index(model.config(), p.kinds);
  if (spec.empty() || spec == "none") return {};
  if (spec.rfind("file:", 0) == 0) {
    const fs::path path = spec.substr(5);
    auto m = read_mask_csv(path);
    m.validate(model.config());
    return m;
  }
  if (spec.rfind("top:", 0) == 0) {
    auto f = parse_fields(spec, 4);
    if (!f.count("relation")) throw ValidationError("top mask needs relation=R");
    for (const auto& [key, _] : f)
      if (key != "relation" && key != "k") throw ValidationError("unknown mask field '" + key + "'");
    const auto ranking = read_ranking_csv(st.in("rankings/" + f["relation"] + ".csv"), f["relation"]);
    return ranking.mask(parse_k(f["k"], p, ranking.entries.size()));
  }
  if (spec.rfind("random:", 0) == 0) {
    auto f = parse_fields(spec, 7);
    for (const auto& [key, _] : f)
      if (key != "seed" && key != "k") throw ValidationError("unknown mask field '" + key + "'");
    std::uint64_t seed = stage_seed(st.config(), "random");
    if (f.count("seed")) seed = derive_seed(seed, f["seed"]);
    return random_mask(universe, parse_k(f["k"], p, universe.size()), seed);
  }
  throw ValidationError("unknown mask spec '" + spec + "'");
}

std::string mask_slug(const std::string& spec) {
  std::string s = spec.empty() ? "none" : spec;
  for (auto& ch : s)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
  return s;
}

json report_json(const ValidationReport& r) {
  json j;
  j["total"] = r.total;
  j["survivors"] = r.survivors;
  j["warnings"] = r.warnings;
  j["rejected"] = json::array();
  for (const auto& x : r.rejected) {
    auto e = prompt_to_json(x.prompt);
    e["prediction"] = x.prediction;
    j["rejected"].push_back(e);
  }
  return j;
}

void write_predictions(Stage& st, const std::string& rel, const EvalResult& r) {
  std::string text;
  for (const auto& o : r.outcomes) {
    auto j = prompt_to_json(o.prompt);
    j["continuation"] = o.continuation;
    j["mask_id"] = o.mask_id;
    text += j.dump() + "\n";
  }
  write_text_file(st.out(rel), text);
}

// Lab rebuilt from the files of the run directory.
Lab lab_from_run(Stage& st, bool need_validated) {
  Lab lab;
  lab.config = st.config();
  lab.world = load_world(st);
  lab.tokenizer = load_tokenizer(st);
  lab.model = load_model(st);
  lab.config.model = lab.model.config();
  const auto rels = lab.relations();
  lab.prompts.det = load_prompt_dir(st, "prompts/det", rels);
  lab.prompts.eva = load_prompt_dir(st, "prompts/eva", rels);
  lab.prompts.eva2 = load_prompt_dir(st, "prompts/eva2", rels, true);
  if (need_validated) lab.validated.kept = load_prompt_dir(st, "prompts/validated", rels);
  return lab;
}

// ---- stages -------------------------------------------------------------

void cmd_gen_world(Stage& st) {
  auto& cfg = st.config();
  const World world = generate_world(cfg.world, stage_seed(cfg, "world"));
  const Tokenizer tok = Tokenizer::build(world, cfg.templates);
  if (cfg.model.vocab_size == 0) cfg.model.vocab_size = static_cast<std::uint32_t>(tok.size());
  if (cfg.model.vocab_size < tok.size())
    throw ValidationError("model vocab_size is smaller than the tokenizer vocabulary");
  write_json(st, "config.json", cfg.to_json());
  write_json(st, "world.json", world.to_json());
  write_json(st, "tokenizer.json", tok.to_json());
}

void cmd_emit_corpus(Stage& st) {
  const World world = load_world(st);
  const auto lines = emit_pretraining_corpus(world, st.config().templates, stage_seed(st.config(), "corpus"));
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_text_file(st.out("corpus.txt"), text);
}

void cmd_train(Stage& st) {
  const Tokenizer tok = load_tokenizer(st);
  std::vector<std::string> lines;
  {
    std::istringstream in(read_text_file(st.in("corpus.txt")));
    for (std::string l; std::getline(in, l);)
      if (!l.empty()) lines.push_back(l);
  }
  auto mc = st.config().model;
  if (mc.vocab_size == 0) mc.vocab_size = static_cast<std::uint32_t>(tok.size());
  TrainReport rep;
  const auto model = train(encode_corpus(lines, tok), mc, st.config().train,
                           stage_seed(st.config(), "train"), &rep, [](std::size_t s, double l) {
                             std::cerr << "step " << s << " loss " << l << "\n";
                           });
  model.save(st.out("model.tlmw"));
  json j;
  j["steps"] = rep.steps;
  j["final_loss"] = rep.final_loss;
  j["loss_curve"] = json::array();
  for (const auto& [s, l] : rep.loss_curve) j["loss_curve"].push_back({s, l});
  write_json(st, "train_log.json", j);
}

void cmd_build_prompts(Stage& st) {
  const World world = load_world(st);
  const auto split = split_world(world, st.config().pipeline.n_eva, stage_seed(st.config(), "split"));
  const auto p = render_prompts(world, st.config().templates, split);
  for (const auto& [rel, ps] : p.det) write_prompts_jsonl(st.out("prompts/det/" + rel + ".jsonl"), ps);
  for (const auto& [rel, ps] : p.eva) write_prompts_jsonl(st.out("prompts/eva/" + rel + ".jsonl"), ps);
  for (const auto& [rel, ps] : p.eva2) write_prompts_jsonl(st.out("prompts/eva2/" + rel + ".jsonl"), ps);
}

void cmd_validate(Stage& st) {
  const World world = load_world(st);
  const Tokenizer tok = load_tokenizer(st);
  const TinyLM model = load_model(st);
  const auto det = load_prompt_dir(st, "prompts/det", world.relation_names());
  const auto v = validate_prompts(model, tok, det);
  for (const auto& [rel, ps] : v.kept) write_prompts_jsonl(st.out("prompts/validated/" + rel + ".jsonl"), ps);
  write_json(st, "validation.json", report_json(v.report));
  for (const auto& w : v.report.warnings) std::cerr << "warning: no det prompt of '" << w << "' survived\n";
}

void cmd_build_sets(Stage& st, std::optional<std::uint64_t> set_seed) {
  const World world = load_world(st);
  const auto kept = load_prompt_dir(st, "prompts/validated", world.relation_names());
  const auto base = set_seed ? *set_seed : identification_seed(st.config(), 0);
  for (const auto& rel : world.relation_names()) {
    if (kept.at(rel).empty()) continue;
    const auto set = build_labeled_set(rel, kept, st.config().pipeline.negative_ratio, derive_seed(base, rel));
    write_labeled_set(st.out("sets/" + rel + ".jsonl"), st.out("sets/" + rel + ".json"), set);
  }
}

void cmd_capture(Stage& st, const std::string& set, const std::string& activations, const std::string& kinds) {
  const Tokenizer tok = load_tokenizer(st);
  const TinyLM model = load_model(st);
  const KindSet ks = kinds.empty() ? st.config().pipeline.kinds : KindSet::parse(kinds);
  auto capture_one = [&](const fs::path& jsonl, const fs::path& manifest, const fs::path& dst) {
    const auto s = read_labeled_set(jsonl, manifest);
    if (s.degenerate || s.n_negative == 0) return false;
    write_activation_file(dst, capture_activations(model, tok, s, ks));
    return true;
  };
  if (!set.empty()) {
    if (activations.empty()) throw ValidationError("--set needs --activations");
    fs::path manifest = set;
    manifest.replace_extension(".json");
    if (!capture_one(set, manifest, st.external(activations)))
      throw ValidationError("labeled set has no negatives");
    return;
  }
  const World world = load_world(st);
  for (const auto& rel : world.relation_names()) {
    const std::string j = "sets/" + rel + ".jsonl";
    if (!fs::exists(st.root() / j)) continue;
    const auto jp = st.in(j);
    const auto mp = st.in("sets/" + rel + ".json");
    const auto dst = st.out("activations/" + rel + ".bin");
    if (!capture_one(jp, mp, dst)) fs::remove(dst);
  }
}

void cmd_score(Stage& st, const std::string& activations, const std::string& target,
               const std::string& out_arg) {
  const std::size_t threads = st.config().pipeline.threads;
  if (!activations.empty()) {
    const auto m = read_activation_file(activations);
    const std::string name = target.empty() ? fs::path(activations).stem().string() : target;
    const auto r = score_all(m, name, threads);
    if (fs::path(out_arg).extension() == ".csv") {
      st.unrecorded();
      write_ranking_csv(st.external(out_arg), r);
    } else
      write_ranking_csv(st.out("rankings/" + name + ".csv"), r);
    return;
  }
  const World world = load_world(st);
  for (const auto& rel : world.relation_names()) {
    const std::string a = "activations/" + rel + ".bin";
    if (!fs::exists(st.root() / a)) continue;
    write_ranking_csv(st.out("rankings/" + rel + ".csv"), score_all(read_activation_file(st.in(a)), rel, threads));
  }
}

void cmd_select(Stage& st, const std::string& k_arg) {
  const World world = load_world(st);
  const auto rankings = load_rankings(st, world.relation_names());
  const std::size_t n = rankings.begin()->second.entries.size();
  const std::size_t k = parse_k(k_arg, st.config().pipeline, n);
  std::vector<NeuronRanking> list;
  std::vector<std::string> names;
  json hist = json::object();
  const auto n_layers = st.config().model.n_layers;
  for (const auto& [rel, r] : rankings) {
    write_mask_csv(st.out("masks/" + rel + ".csv"), r, k);
    list.push_back(r);
    names.push_back(rel);
    std::uint32_t layers = n_layers;
    for (const auto& e : r.entries) layers = std::max(layers, e.neuron.layer + 1);
    hist[rel] = layer_histogram(r, k, layers);
  }
  json j;
  j["k"] = k;
  j["n_neurons"] = n;
  j["overlap"] = {{"names", names}, {"k", k}, {"counts", overlap_matrix(list, k)}};
  j["layer_histograms"] = hist;
  write_json(st, "results/selection.json", j);
}

void cmd_ablate(Stage& st, const std::string& mask_spec, const std::string& relation,
                const std::string& prompts_file, const std::string& predictions, std::string mask_id) {
  if (mask_id.empty()) mask_id = mask_slug(mask_spec);
  json j;
  j["mask"] = mask_spec.empty() ? "none" : mask_spec;
  j["mask_id"] = mask_id;
  if (!predictions.empty()) {
    const auto r = evaluate_predictions(predictions, mask_id);
    j["offline"] = true;
    j["result"] = to_json(r);
    write_json(st, "results/ablate_" + mask_id + ".json", j);
    return;
  }
  const World world = load_world(st);
  const Tokenizer tok = load_tokenizer(st);
  const TinyLM model = load_model(st);
  const auto mask = resolve_mask(st, mask_spec, model);
  j["mask_size"] = mask.size();
  std::vector<PromptInstance> prompts;
  if (!prompts_file.empty()) {
    prompts = read_prompts_jsonl(prompts_file);
  } else {
    std::vector<std::string> rels = world.relation_names();
    if (!relation.empty()) {
      world.relation(relation);
      rels = {relation};
    }
    for (const auto& rel : rels) {
      const auto ps = read_prompts_jsonl(st.in("prompts/eva/" + rel + ".jsonl"));
      prompts.insert(prompts.end(), ps.begin(), ps.end());
    }
  }
  const auto r = evaluate(model, tok, prompts, mask, mask_id);
  json per = json::object();
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& o : r.outcomes) {
    auto& c = counts[o.prompt.relation];
    c.first += o.correct;
    ++c.second;
  }
  for (const auto& [rel, c] : counts) per[rel] = static_cast<double>(c.first) / static_cast<double>(c.second);
  j["offline"] = false;
  j["per_relation"] = per;
  j["result"] = to_json(r);
  write_json(st, "results/ablate_" + mask_id + ".json", j);
  write_predictions(st, "predictions/" + mask_id + ".jsonl", r);
}

void cmd_drop_matrix(Stage& st, const std::string& k_arg) {
  Lab lab = lab_from_run(st, false);
  const auto rankings = load_rankings(st, lab.relations());
  const std::size_t k = parse_k(k_arg, lab.config.pipeline, rankings.begin()->second.entries.size());
  const auto m = drop_matrix(lab.model, lab.tokenizer, rankings, lab.prompts.eva, k);
  json j;
  j["k"] = k;
  j["drop_matrix"] = to_json(m);
  json rnd = json::object();
  for (const auto& [rel, _] : rankings) {
    const auto rb = random_baseline(lab, rel, k);
    rnd[rel] = {{"baseline", rb.baseline}, {"masked", rb.masked}, {"mean_masked", rb.mean_masked}};
  }
  j["random_baseline"] = rnd;
  write_json(st, "results/drop_matrix.json", j);
  std::string csv = "relation";
  for (const auto& r : m.relations) csv += "," + r;
  csv += "\n";
  for (std::size_t i = 0; i < m.relations.size(); ++i) {
    csv += m.relations[i];
    for (const auto& c : m.drop[i]) csv += "," + (c ? std::to_string(*c) : std::string("NA"));
    csv += "\n";
  }
  write_text_file(st.out("results/drop_matrix.csv"), csv);
}

void cmd_sweep(Stage& st) {
  Lab lab = lab_from_run(st, false);
  const auto rankings = load_rankings(st, lab.relations());
  const auto ks = sweep_ks(rankings.begin()->second.entries.size(), lab.config.pipeline.sweep_fractions);
  json j;
  j["ks"] = ks;
  j["sweeps"] = json::array();
  std::string csv = "relation,k,acc_self,acc_others_mean\n";
  for (const auto& [rel, r] : rankings) {
    const auto c = sweep_k(lab.model, lab.tokenizer, r, lab.prompts.eva, ks);
    j["sweeps"].push_back(to_json(c));
    for (const auto& p : c.points)
      csv += rel + "," + std::to_string(p.k) + "," + std::to_string(p.acc_self) + "," +
             std::to_string(p.acc_others_mean) + "\n";
  }
  write_json(st, "results/sweeps.json", j);
  write_text_file(st.out("results/sweeps.csv"), csv);
}

void cmd_cumulativity(Stage& st) {
  Lab lab = lab_from_run(st, false);
  const auto rankings = load_rankings(st, lab.relations());
  const auto ks = sweep_ks(rankings.begin()->second.entries.size(), lab.config.pipeline.sweep_fractions);
  json j = json::array();
  for (const auto& [rel, r] : rankings)
    for (std::size_t i = 0; i + 1 < ks.size(); ++i) {
      auto e = to_json(cumulativity(lab.model, lab.tokenizer, r, lab.prompts.eva.at(rel), ks[i], ks[i + 1]));
      e["relation"] = rel;
      j.push_back(e);
    }
  write_json(st, "results/cumulativity.json", json{{"pairs", j}});
}

void cmd_concepts(Stage& st, const std::string& k_arg) {
  Lab lab = lab_from_run(st, false);
  const auto rankings = load_rankings(st, lab.relations());
  const auto concepts = concept_rankings(lab);
  const std::size_t k = parse_k(k_arg, lab.config.pipeline, rankings.begin()->second.entries.size());
  std::vector<std::string> rows, cols;
  std::vector<std::vector<std::size_t>> counts;
  for (const auto& [c, r] : concepts) {
    write_ranking_csv(st.out("rankings/concepts/" + c + ".csv"), r);
    cols.push_back(c);
  }
  for (const auto& [rel, r] : rankings) {
    rows.push_back(rel);
    std::vector<std::size_t> row;
    for (const auto& [c, cr] : concepts) row.push_back(overlap_matrix({r, cr}, k)[0][1]);
    counts.push_back(row);
  }
  json j;
  j["concept_overlap"] = {{"rows", rows}, {"cols", cols}, {"k", k}, {"counts", counts}};
  write_json(st, "results/concepts.json", j);
}

void cmd_ppl(Stage& st, const std::string& k_arg) {
  Lab lab = lab_from_run(st, false);
  const auto rankings = load_rankings(st, lab.relations());
  const std::size_t k = parse_k(k_arg, lab.config.pipeline, rankings.begin()->second.entries.size());
  json j = json::array();
  for (const auto& [rel, r] : rankings) {
    const auto p = ppl_delta(lab.model, lab.tokenizer, rel,
                             neutral_sentences(lab.world, lab.config.templates, rel), r.mask(k));
    j.push_back({{"relation", rel}, {"before", p.before}, {"after", p.after}, {"n_sentences", p.n_sentences}});
  }
  write_json(st, "results/ppl.json", json{{"k", k}, {"ppl", j}});
}

void cmd_resilience(Stage& st) {
  Lab lab = lab_from_run(st, true);
  const auto runs = resilience_runs(lab);
  json j = json::array();
  for (const auto& run : runs) {
    json e;
    e["set_seed"] = run.set_seed;
    e["relations"] = json::array();
    for (const auto& r : run.reports) e["relations"].push_back(to_json(r));
    j.push_back(e);
  }
  write_json(st, "results/resilience.json", json{{"k", lab.top_k()}, {"runs", j}});
}

void cmd_report(Stage& st) {
  nlohmann::json merged = nlohmann::json::object();
  auto take = [&](const std::string& rel, std::initializer_list<const char*> keys) {
    if (!fs::exists(st.root() / rel)) return;
    const auto j = read_json_file(st.in(rel));
    for (const char* k : keys)
      if (j.contains(k)) merged[k] = j[k];
  };
  take("results/drop_matrix.json", {"drop_matrix"});
  take("results/selection.json", {"overlap", "layer_histograms"});
  take("results/sweeps.json", {"sweeps"});
  take("results/concepts.json", {"concept_overlap"});
  const auto entries = render_report(merged, st.root() / "report");
  st.out("report/index.html");
  for (const auto& e : entries) st.out("report/" + e.file);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rsnlab: relation-specific neuron laboratory"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  struct Cmd {
    CLI::App* app;
    Common common;
  };
  std::map<std::string, Cmd> cmds;
  auto sub = [&](const std::string& name, const std::string& help) {
    auto* s = app.add_subcommand(name, help);
    cmds[name].app = s;
    add_common(s, cmds[name].common);
    return s;
  };

  sub("gen-world", "Generate the synthetic world and tokenizer");
  sub("emit-corpus", "Render the pretraining corpus");
  sub("train", "Train the model on the corpus");
  sub("build-prompts", "Split facts into det/eva and render prompts");
  sub("validate", "Keep det prompts the model answers correctly");
  std::optional<std::uint64_t> set_seed;
  sub("build-sets", "Build labeled example sets")->add_option("--set-seed", set_seed, "Negative-sampling seed");
  std::string set_path, act_path, kinds;
  auto* cap = sub("capture", "Capture token-averaged activations");
  cap->add_option("--set", set_path, "Labeled-set JSONL (manifest next to it, .json)");
  cap->add_option("--activations", act_path, "Output activation file for --set");
  cap->add_option("--kinds", kinds, "Projection kinds, e.g. ffn or up,down");
  std::string score_act, score_target;
  auto* sc = sub("score", "Rank neurons by average precision");
  sc->add_option("--activations", score_act, "Activation file to score");
  sc->add_option("--target", score_target, "Target name (default: file stem)");
  std::string k_arg;
  sub("select", "Write top-k masks, overlap and layer histograms")->add_option("--k", k_arg, "k or percentage");
  std::string mask_spec, relation, prompts_file, predictions, mask_id;
  auto* ab = sub("ablate", "Evaluate under a suppression mask");
  ab->add_option("--mask", mask_spec, "none | top:relation=R[:k=K] | random:k=K[:seed=S] | file:PATH");
  ab->add_option("--relation", relation, "Evaluate the eva prompts of one relation");
  ab->add_option("--prompts", prompts_file, "Prompt JSONL to evaluate instead");
  ab->add_option("--predictions", predictions, "Score an external predictions JSONL offline");
  ab->add_option("--mask-id", mask_id, "Identifier recorded with every outcome");
  sub("drop-matrix", "Inter-relation accuracy drops and random baselines")->add_option("--k", k_arg, "k or percentage");
  sub("sweep", "Accuracy against the number of masked neurons");
  sub("cumulativity", "Cumulativity over consecutive sweep points");
  sub("concepts", "Concept rankings and relation-concept overlap")->add_option("--k", k_arg, "k or percentage");
  sub("ppl", "Perplexity of neutral object sentences before and after masking")->add_option("--k", k_arg, "k or percentage");
  sub("resilience", "Resilient and sensitive facts over identification seeds");
  sub("report", "Render SVG figures and index.html");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  std::string name;
  for (auto& [n, c] : cmds)
    if (c.app->parsed()) name = n;
  try {
    Stage st(name, cmds[name].common);
    if (name == "gen-world") cmd_gen_world(st);
    else if (name == "emit-corpus") cmd_emit_corpus(st);
    else if (name == "train") cmd_train(st);
    else if (name == "build-prompts") cmd_build_prompts(st);
    else if (name == "validate") cmd_validate(st);
    else if (name == "build-sets") cmd_build_sets(st, set_seed);
    else if (name == "capture") cmd_capture(st, set_path, act_path, kinds);
    else if (name == "score") cmd_score(st, score_act, score_target, cmds[name].common.out);
    else if (name == "select") cmd_select(st, k_arg);
    else if (name == "ablate") cmd_ablate(st, mask_spec, relation, prompts_file, predictions, mask_id);
    else if (name == "drop-matrix") cmd_drop_matrix(st, k_arg);
    else if (name == "sweep") cmd_sweep(st);
    else if (name == "cumulativity") cmd_cumulativity(st);
    else if (name == "concepts") cmd_concepts(st, k_arg);
    else if (name == "ppl") cmd_ppl(st, k_arg);
    else if (name == "resilience") cmd_resilience(st);
    else if (name == "report") cmd_report(st);
    st.commit();
  } catch (const IoError& e) {
    std::cerr << "rsnlab " << name << ": I/O error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "rsnlab " << name << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
