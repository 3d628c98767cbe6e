#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsn/expert.hpp"
#include "rsn/model.hpp"
#include "rsn/probes.hpp"
#include "rsn/world.hpp"

namespace rsn {

struct EvalOutcome {
  PromptInstance prompt;
  std::vector<TokenId> predicted;  // empty when scored offline from text
  std::string continuation;        // detokenized prediction
  bool correct = false;
  std::string mask_id;
};

struct EvalResult {
  std::vector<EvalOutcome> outcomes;
  double accuracy = 0.0;  // 0 for an empty prompt list
  std::size_t n_correct = 0;
};

// Greedy 2-token generation per prompt under the mask.
EvalResult evaluate(const TinyLM& model, const Tokenizer& tokenizer,
                    const std::vector<PromptInstance>& prompts, const SuppressionMask& mask,
                    const std::string& mask_id = "none");

// Scores externally produced predictions: one JSON object per line holding the
// prompt fields plus "continuation" (the detokenized 2-token prediction).
EvalResult evaluate_predictions(const std::filesystem::path& predictions_jsonl,
                                const std::string& mask_id = "external");

// (orig - masked) / orig; nullopt when orig is 0.
std::optional<double> accuracy_drop(double acc_original, double acc_masked);

// Uniform k-subset of the enumeration, reproducible from seed.
SuppressionMask random_mask(const std::vector<NeuronId>& universe, std::size_t k,
                            std::uint64_t seed);

struct DropMatrix {
  std::vector<std::string> relations;
  std::vector<double> baseline;                       // per relation, empty mask
  std::vector<std::vector<double>> masked;            // [i][j]: acc of i under j's mask
  std::vector<std::vector<std::optional<double>>> drop;  // accuracy_drop of the above
};

// Cell (i, j): drop of relation i when the top-k neurons of relation j are masked.
DropMatrix drop_matrix(const TinyLM& model, const Tokenizer& tokenizer,
                       const std::map<std::string, NeuronRanking>& rankings,
                       const PromptSets& eva, std::size_t k);

struct SweepPoint {
  std::size_t k = 0;
  double acc_self = 0.0;
  double acc_others_mean = 0.0;
};

struct SweepCurve {
  std::string relation;
  std::vector<SweepPoint> points;
};

// Distinct ceil(f * n_neurons) values in increasing order, each >= 1.
std::vector<std::size_t> sweep_ks(std::size_t n_neurons, const std::vector<double>& fractions);
// 0.01%, 0.05%, 0.2%, 0.5%, 1%, 3%, 10%, 20%, 50%
const std::vector<double>& default_sweep_fractions();

// Masks are the nested prefixes top_k(ks[i]) of the ranking; ks strictly increasing.
SweepCurve sweep_k(const TinyLM& model, const Tokenizer& tokenizer, const NeuronRanking& ranking,
                   const PromptSets& eva, const std::vector<std::size_t>& ks);

struct CumulativityReport {
  std::size_t k_small = 0, k_large = 0;
  std::size_t n_total = 0;
  std::size_t n_affected = 0;
  std::optional<double> cumulativity;  // 1 - n_affected / n_total
};

// n_total: prompts correct under the small mask but wrong under the large one.
// n_affected: those among them also wrong under the difference-set mask alone.
CumulativityReport cumulativity(const TinyLM& model, const Tokenizer& tokenizer,
                                const std::vector<PromptInstance>& prompts,
                                const SuppressionMask& small, const SuppressionMask& large);

// Ranks k_small+1..k_large form the difference set.
CumulativityReport cumulativity(const TinyLM& model, const Tokenizer& tokenizer,
                                const NeuronRanking& ranking,
                                const std::vector<PromptInstance>& prompts, std::size_t k_small,
                                std::size_t k_large);

SuppressionMask mask_difference(const SuppressionMask& large, const SuppressionMask& small);

struct TemplateRobustness {
  std::string relation;
  double eva = 0.0, eva_masked = 0.0;
  double eva2 = 0.0, eva2_masked = 0.0;
};

std::vector<TemplateRobustness> template_robustness(
    const TinyLM& model, const Tokenizer& tokenizer, const PromptSets& eva, const PromptSets& eva2,
    const std::map<std::string, SuppressionMask>& masks);

struct ResilienceReport {
  std::string relation;
  std::vector<PromptInstance> resilient;  // correct before and after
  std::vector<PromptInstance> sensitive;  // correct before, wrong after
  std::optional<double> mean_resilient, mean_sensitive;
  // (mean_sensitive - mean_resilient) / mean_sensitive when both groups exist
  std::optional<double> relative_diff;
};

// Outcome lists must be aligned prompt by prompt. Weights come from the
// world's triples, matched on (relation, subject surface).
std::vector<ResilienceReport> resilience_groups(const std::vector<EvalOutcome>& before,
                                                const std::vector<EvalOutcome>& after,
                                                const World& world);

struct PplPair {
  std::string relation;
  double before = 0.0, after = 0.0;  // means over sentences
  std::size_t n_sentences = 0;
};

// One neutral sentence per object of the relation: the template's "{o}" is
// filled with the object surface, which therefore ends the sentence.
std::vector<std::string> neutral_sentences(const World& world, const TemplateSet& templates,
                                           const std::string& relation);

PplPair ppl_delta(const TinyLM& model, const Tokenizer& tokenizer, const std::string& relation,
                  const std::vector<std::string>& sentences, const SuppressionMask& mask);

// JSON helpers shared by the CLI and the report.
nlohmann::ordered_json to_json(const EvalResult& r, bool with_outcomes = true);
nlohmann::ordered_json to_json(const DropMatrix& m);
nlohmann::ordered_json to_json(const SweepCurve& c);
nlohmann::ordered_json to_json(const CumulativityReport& c);
nlohmann::ordered_json to_json(const ResilienceReport& r);
DropMatrix drop_matrix_from_json(const nlohmann::json& j);
SweepCurve sweep_curve_from_json(const nlohmann::json& j);

double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace rsn
