#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsn/ablate.hpp"
#include "rsn/expert.hpp"
#include "rsn/model.hpp"
#include "rsn/probes.hpp"
#include "rsn/templates.hpp"
#include "rsn/tokenizer.hpp"
#include "rsn/world.hpp"

namespace rsn {

struct PipelineConfig {
  std::size_t n_eva = 50;
  double negative_ratio = 4.0;
  KindSet kinds = KindSet::ffn();
  double top_fraction = 0.01;  // of enumerated neurons, rounded up
  std::size_t top_k = 0;       // absolute count; overrides top_fraction when > 0
  std::size_t n_random_seeds = 10;
  std::vector<double> sweep_fractions = default_sweep_fractions();
  // Negative-sampling seeds for the resilience analysis and Jaccard report.
  std::size_t n_identification_seeds = 5;
  std::size_t threads = 0;  // 0: hardware concurrency
};

// Everything a run depends on, stored as one JSON document.
struct RunConfig {
  std::uint64_t seed = 1;
  WorldConfig world = WorldConfig::default_config();
  TemplateSet templates = TemplateSet::default_set();
  ModelConfig model;  // vocab_size is filled from the tokenizer when 0
  TrainConfig train;
  PipelineConfig pipeline;

  nlohmann::ordered_json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);  // missing keys keep defaults
  static RunConfig load(const std::filesystem::path& path);
  std::string hash() const;  // sha256 of the canonical JSON dump
};

std::size_t top_k_count(const PipelineConfig& p, std::size_t n_neurons);

// Seeds of the individual stages, all derived from RunConfig::seed.
std::uint64_t stage_seed(const RunConfig& c, const std::string& stage);

std::vector<std::vector<TokenId>> encode_corpus(const std::vector<std::string>& lines,
                                                const Tokenizer& tokenizer);

// In-memory state of one run, filled stage by stage.
struct Lab {
  RunConfig config;
  World world;
  Tokenizer tokenizer;
  WorldSplit split;
  RenderedPrompts prompts;
  TinyLM model;
  ValidatedPrompts validated;
  std::map<std::string, LabeledExampleSet> sets;
  std::map<std::string, NeuronRanking> rankings;

  std::vector<std::string> relations() const { return world.relation_names(); }
  std::size_t n_neurons() const { return neuron_count(model.config(), config.pipeline.kinds); }
  std::size_t top_k() const { return top_k_count(config.pipeline, n_neurons()); }
};

// World, tokenizer, det/eva split and rendered prompts.
Lab prepare_lab(const RunConfig& config);

void train_lab(Lab& lab, const std::function<void(std::size_t, double)>& on_log = {});

// Fraction of det prompts answered correctly by the unmasked model.
double det_accuracy(const Lab& lab);

// validate_prompts, one labeled set per relation, activations, rankings.
void identify(Lab& lab, std::uint64_t set_seed);

// Rankings for every relation under a given negative-sampling seed, leaving
// lab.sets and lab.rankings untouched.
std::map<std::string, NeuronRanking> rankings_for_seed(const Lab& lab, std::uint64_t set_seed);

std::map<std::string, NeuronRanking> concept_rankings(const Lab& lab);

struct RandomBaseline {
  std::string relation;
  double baseline = 0.0;
  std::vector<double> masked;  // one accuracy per seed
  double mean_masked = 0.0;
};

RandomBaseline random_baseline(const Lab& lab, const std::string& relation, std::size_t k);

// Negative-sampling seed number i of a run; 0 is the seed of the main
// identification, the rest are resamples.
std::uint64_t identification_seed(const RunConfig& c, std::size_t i);

struct ResilienceRun {
  std::uint64_t set_seed = 0;
  std::vector<ResilienceReport> reports;
};

// For each identification seed: rank, mask every relation's own top-k and
// group its det and eva facts into resilient and sensitive ones.
std::vector<ResilienceRun> resilience_runs(const Lab& lab);

}  // namespace rsn
