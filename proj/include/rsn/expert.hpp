#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rsn/model.hpp"
#include "rsn/neuron.hpp"
#include "rsn/params.hpp"
#include "rsn/probes.hpp"

namespace rsn {

// J examples x N neurons of token-averaged outputs, with a 0/1 label per example.
struct ActivationMatrix {
  std::vector<NeuronId> neurons;
  std::vector<std::uint8_t> labels;
  MatT<float> values;

  std::size_t n_examples() const { return labels.size(); }
  std::size_t n_neurons() const { return neurons.size(); }
  // Shapes agree, labels are 0/1, every value is finite. With
  // require_both_classes, at least one example of each label.
  void validate(bool require_both_classes) const;
};

// Mean of o[m, t] over positions t >= first_effective (position 0 holds <bos>).
// Accumulated in double, rounded to float.
std::vector<float> token_average(const TapRecord& rec, const std::vector<NeuronId>& neurons,
                                 std::size_t first_effective = 1);

// Neuron order follows neuron_index(config, kinds).
ActivationMatrix capture_activations(const TinyLM& model, const Tokenizer& tokenizer,
                                     const LabeledExampleSet& set, const KindSet& kinds);

// Area under the precision-recall curve with equal scores processed as one
// threshold group: after each group, AP += (dTP / P) * TP / (TP + FP).
// Throws ValidationError unless both classes are present.
double average_precision(std::span<const float> scores, std::span<const std::uint8_t> labels);

struct RankEntry {
  NeuronId neuron;
  double ap = 0.0;
  bool operator==(const RankEntry&) const = default;
};

struct NeuronRanking {
  std::string target;
  std::vector<RankEntry> entries;  // ap descending, ties by NeuronId order

  std::vector<NeuronId> top_k(std::size_t k) const;
  SuppressionMask mask(std::size_t k) const { return SuppressionMask(top_k(k)); }
};

// One AP per column, sorted. Columns are scored in parallel; each column is
// independent so the result does not depend on the thread count.
NeuronRanking score_all(const ActivationMatrix& m, const std::string& target,
                        std::size_t threads = 0);

// cell (i, j) = |top_k(i) ∩ top_k(j)|
std::vector<std::vector<std::size_t>> overlap_matrix(const std::vector<NeuronRanking>& rankings,
                                                     std::size_t k);

std::vector<std::size_t> layer_histogram(const NeuronRanking& ranking, std::size_t k,
                                         std::uint32_t n_layers);

double jaccard(const std::vector<NeuronId>& a, const std::vector<NeuronId>& b);

// Pairwise Jaccard of top-k sets, e.g. of rankings from different
// negative-sampling seeds.
std::vector<std::vector<double>> jaccard_matrix(const std::vector<NeuronRanking>& rankings,
                                                std::size_t k);

// CSV with header "kind,layer,column,ap"; ap printed with 17 significant digits.
void write_ranking_csv(const std::filesystem::path& path, const NeuronRanking& ranking);
NeuronRanking read_ranking_csv(const std::filesystem::path& path, const std::string& target = "");

// A mask file is a ranking CSV whose every row is masked, so the top-k prefix
// of a ranking is a valid mask file and a ranking file is a valid mask.
void write_mask_csv(const std::filesystem::path& path, const NeuronRanking& ranking, std::size_t k);
SuppressionMask read_mask_csv(const std::filesystem::path& path);

}  // namespace rsn
