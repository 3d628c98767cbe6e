#include "rsn/pipeline.hpp"

#include <cmath>
#include <fstream>

#include "rsn/common.hpp"
#include "rsn/store.hpp"

namespace rsn {

namespace {

nlohmann::ordered_json model_to_json(const ModelConfig& m) {
  nlohmann::ordered_json j;
  j["n_layers"] = m.n_layers;
  j["d_model"] = m.d_model;
  j["n_heads"] = m.n_heads;
  j["d_ff"] = m.d_ff;
  j["vocab_size"] = m.vocab_size;
  j["max_seq_len"] = m.max_seq_len;
  j["position_encoding"] = "learned_absolute";
  return j;
}

ModelConfig model_from_json(const nlohmann::json& j, ModelConfig m) {
  m.n_layers = j.value("n_layers", m.n_layers);
  m.d_model = j.value("d_model", m.d_model);
  m.n_heads = j.value("n_heads", m.n_heads);
  m.d_ff = j.value("d_ff", m.d_ff);
  m.vocab_size = j.value("vocab_size", m.vocab_size);
  m.max_seq_len = j.value("max_seq_len", m.max_seq_len);
  if (j.value("position_encoding", std::string("learned_absolute")) != "learned_absolute")
    throw ValidationError("only learned_absolute position encoding is supported");
  return m;
}

nlohmann::ordered_json train_to_json(const TrainConfig& t) {
  nlohmann::ordered_json j;
  j["steps"] = t.steps;
  j["batch_size"] = t.batch_size;
  j["lr"] = t.lr;
  j["min_lr_ratio"] = t.min_lr_ratio;
  j["warmup"] = t.warmup;
  j["beta1"] = t.beta1;
  j["beta2"] = t.beta2;
  j["eps"] = t.eps;
  j["weight_decay"] = t.weight_decay;
  j["grad_clip"] = t.grad_clip;
  j["log_every"] = t.log_every;
  return j;
}

TrainConfig train_from_json(const nlohmann::json& j, TrainConfig t) {
  t.steps = j.value("steps", t.steps);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.lr = j.value("lr", t.lr);
  t.min_lr_ratio = j.value("min_lr_ratio", t.min_lr_ratio);
  t.warmup = j.value("warmup", t.warmup);
  t.beta1 = j.value("beta1", t.beta1);
  t.beta2 = j.value("beta2", t.beta2);
  t.eps = j.value("eps", t.eps);
  t.weight_decay = j.value("weight_decay", t.weight_decay);
  t.grad_clip = j.value("grad_clip", t.grad_clip);
  t.log_every = j.value("log_every", t.log_every);
  return t;
}

nlohmann::ordered_json pipeline_to_json(const PipelineConfig& p) {
  nlohmann::ordered_json j;
  j["n_eva"] = p.n_eva;
  j["negative_ratio"] = p.negative_ratio;
  j["kinds"] = p.kinds.to_string();
  j["top_fraction"] = p.top_fraction;
  j["top_k"] = p.top_k;
  j["n_random_seeds"] = p.n_random_seeds;
  j["sweep_fractions"] = p.sweep_fractions;
  j["n_identification_seeds"] = p.n_identification_seeds;
  j["threads"] = p.threads;
  return j;
}

PipelineConfig pipeline_from_json(const nlohmann::json& j, PipelineConfig p) {
  p.n_eva = j.value("n_eva", p.n_eva);
  p.negative_ratio = j.value("negative_ratio", p.negative_ratio);
  if (j.contains("kinds")) p.kinds = KindSet::parse(j["kinds"].get<std::string>());
  p.top_fraction = j.value("top_fraction", p.top_fraction);
  p.top_k = j.value("top_k", p.top_k);
  p.n_random_seeds = j.value("n_random_seeds", p.n_random_seeds);
  p.sweep_fractions = j.value("sweep_fractions", p.sweep_fractions);
  p.n_identification_seeds = j.value("n_identification_seeds", p.n_identification_seeds);
  p.threads = j.value("threads", p.threads);
  return p;
}

}  // namespace

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["world"] = world_config_to_json(world);
  j["templates"] = templates.to_json();
  j["model"] = model_to_json(model);
  j["train"] = train_to_json(train);
  j["pipeline"] = pipeline_to_json(pipeline);
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    if (!j.is_object()) throw ValidationError("run config must be a JSON object");
    for (const auto& [key, _] : j.items())
      if (key != "seed" && key != "world" && key != "templates" && key != "model" &&
          key != "train" && key != "pipeline")
        throw ValidationError("unknown run config key '" + key + "'");
    c.seed = j.value("seed", c.seed);
    if (j.contains("world")) c.world = world_config_from_json(j["world"]);
    if (j.contains("templates")) c.templates = TemplateSet::from_json(j["templates"]);
    if (j.contains("model")) c.model = model_from_json(j["model"], c.model);
    if (j.contains("train")) c.train = train_from_json(j["train"], c.train);
    if (j.contains("pipeline")) c.pipeline = pipeline_from_json(j["pipeline"], c.pipeline);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("run config: ") + e.what());
  }
  c.templates.validate();
  if (c.pipeline.negative_ratio < 0) throw ValidationError("negative_ratio must be >= 0");
  if (!(c.pipeline.top_fraction > 0 && c.pipeline.top_fraction <= 1))
    throw ValidationError("top_fraction must lie in (0, 1]");
  if (c.pipeline.kinds.empty()) throw ValidationError("pipeline kinds must not be empty");
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  return from_json(read_json_file(path));
}

std::string RunConfig::hash() const { return sha256_hex(to_json().dump()); }

std::size_t top_k_count(const PipelineConfig& p, std::size_t n_neurons) {
  if (p.top_k > 0) {
    if (p.top_k > n_neurons) throw ValidationError("top_k exceeds the number of neurons");
    return p.top_k;
  }
  return sweep_ks(n_neurons, {p.top_fraction}).front();
}

std::uint64_t stage_seed(const RunConfig& c, const std::string& stage) {
  return derive_seed(c.seed, stage);
}

std::vector<std::vector<TokenId>> encode_corpus(const std::vector<std::string>& lines,
                                                const Tokenizer& tokenizer) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(tokenizer.encode(l, true));
  return out;
}

Lab prepare_lab(const RunConfig& config) {
  Lab lab;
  lab.config = config;
  lab.world = generate_world(config.world, stage_seed(config, "world"));
  lab.tokenizer = Tokenizer::build(lab.world, config.templates);
  if (lab.config.model.vocab_size == 0)
    lab.config.model.vocab_size = static_cast<std::uint32_t>(lab.tokenizer.size());
  if (lab.config.model.vocab_size < lab.tokenizer.size())
    throw ValidationError("model vocab_size is smaller than the tokenizer vocabulary");
  lab.config.model.validate();
  lab.model = TinyLM(lab.config.model);
  lab.split = split_world(lab.world, config.pipeline.n_eva, stage_seed(config, "split"));
  lab.prompts = render_prompts(lab.world, config.templates, lab.split);
  return lab;
}

void train_lab(Lab& lab, const std::function<void(std::size_t, double)>& on_log) {
  const auto lines =
      emit_pretraining_corpus(lab.world, lab.config.templates, stage_seed(lab.config, "corpus"));
  lab.model = train(encode_corpus(lines, lab.tokenizer), lab.config.model, lab.config.train,
                    stage_seed(lab.config, "train"), nullptr, on_log);
}

double det_accuracy(const Lab& lab) {
  std::size_t ok = 0, n = 0;
  for (const auto& [rel, ps] : lab.prompts.det) {
    const auto r = evaluate(lab.model, lab.tokenizer, ps, {});
    ok += r.n_correct;
    n += ps.size();
  }
  return n ? static_cast<double>(ok) / static_cast<double>(n) : 0.0;
}

std::map<std::string, NeuronRanking> rankings_for_seed(const Lab& lab, std::uint64_t set_seed) {
  std::map<std::string, NeuronRanking> out;
  for (const auto& rel : lab.relations()) {
    const auto set = build_labeled_set(rel, lab.validated.kept, lab.config.pipeline.negative_ratio,
                                       derive_seed(set_seed, rel));
    if (set.degenerate) continue;
    const auto m = capture_activations(lab.model, lab.tokenizer, set, lab.config.pipeline.kinds);
    out[rel] = score_all(m, rel, lab.config.pipeline.threads);
  }
  return out;
}

void identify(Lab& lab, std::uint64_t set_seed) {
  lab.validated = validate_prompts(lab.model, lab.tokenizer, lab.prompts.det);
  lab.sets.clear();
  lab.rankings.clear();
  for (const auto& rel : lab.relations()) {
    if (lab.validated.kept[rel].empty()) continue;
    auto set = build_labeled_set(rel, lab.validated.kept, lab.config.pipeline.negative_ratio,
                                 derive_seed(set_seed, rel));
    if (!set.degenerate) {
      const auto m = capture_activations(lab.model, lab.tokenizer, set, lab.config.pipeline.kinds);
      lab.rankings[rel] = score_all(m, rel, lab.config.pipeline.threads);
    }
    lab.sets[rel] = std::move(set);
  }
}

std::map<std::string, NeuronRanking> concept_rankings(const Lab& lab) {
  std::map<std::string, NeuronRanking> out;
  for (const auto& c : lab.world.subject_concepts()) {
    const auto set = build_concept_set(c, lab.world, lab.config.templates,
                                       derive_seed(stage_seed(lab.config, "concepts"), c));
    const auto m = capture_activations(lab.model, lab.tokenizer, set, lab.config.pipeline.kinds);
    out[c] = score_all(m, c, lab.config.pipeline.threads);
  }
  return out;
}

RandomBaseline random_baseline(const Lab& lab, const std::string& relation, std::size_t k) {
  RandomBaseline r;
  r.relation = relation;
  const auto& eva = lab.prompts.eva.at(relation);
  r.baseline = evaluate(lab.model, lab.tokenizer, eva, {}).accuracy;
  const auto universe = neuron_index(lab.model.config(), lab.config.pipeline.kinds);
  for (std::size_t s = 0; s < lab.config.pipeline.n_random_seeds; ++s) {
    const auto mask =
        random_mask(universe, k, derive_seed(stage_seed(lab.config, "random"), std::to_string(s)));
    r.masked.push_back(evaluate(lab.model, lab.tokenizer, eva, mask).accuracy);
  }
  double sum = 0.0;
  for (double a : r.masked) sum += a;
  r.mean_masked = r.masked.empty() ? r.baseline : sum / static_cast<double>(r.masked.size());
  return r;
}

std::uint64_t identification_seed(const RunConfig& c, std::size_t i) {
  const auto base = stage_seed(c, "sets");
  return i == 0 ? base : derive_seed(base, "resample/" + std::to_string(i));
}

std::vector<ResilienceRun> resilience_runs(const Lab& lab) {
  std::vector<ResilienceRun> out;
  const std::size_t k = lab.top_k();
  std::map<std::string, EvalResult> before;
  for (std::size_t s = 0; s < lab.config.pipeline.n_identification_seeds; ++s) {
    ResilienceRun run;
    run.set_seed = identification_seed(lab.config, s);
    const auto rankings = rankings_for_seed(lab, run.set_seed);
    for (const auto& [rel, ranking] : rankings) {
      auto prompts = lab.prompts.det.at(rel);
      const auto& eva = lab.prompts.eva.at(rel);
      prompts.insert(prompts.end(), eva.begin(), eva.end());
      if (!before.count(rel)) before[rel] = evaluate(lab.model, lab.tokenizer, prompts, {});
      const auto after = evaluate(lab.model, lab.tokenizer, prompts, ranking.mask(k));
      auto reps = resilience_groups(before[rel].outcomes, after.outcomes, lab.world);
      run.reports.insert(run.reports.end(), reps.begin(), reps.end());
    }
    out.push_back(std::move(run));
  }
  return out;
}

}  // namespace rsn
