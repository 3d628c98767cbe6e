#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rsn/neuron.hpp"
#include "rsn/params.hpp"
#include "rsn/tokenizer.hpp"

namespace rsn {

// Recorded projection outputs o[m, t] of one sequence. Values are taken after
// suppression, so masked neurons read exactly 0.
class TapRecord {
 public:
  TapRecord() = default;
  TapRecord(const ModelConfig& config, KindSet kinds, std::size_t seq_len);

  const KindSet& kinds() const { return kinds_; }
  std::size_t seq_len() const { return seq_len_; }
  float value(const NeuronId& n, std::size_t t) const;
  // Row-major seq_len x width block for one (layer, kind).
  std::span<const float> block(std::uint32_t layer, NeuronKind kind) const;
  std::span<float> block(std::uint32_t layer, NeuronKind kind);

 private:
  ModelConfig config_;
  KindSet kinds_;
  std::size_t seq_len_ = 0;
  std::vector<std::vector<float>> slots_;
};

struct ForwardResult {
  MatT<float> logits;  // seq_len x vocab
  std::optional<TapRecord> tap;
};

// Decoder-only transformer: learned absolute positions, pre-RMSNorm, causal
// multi-head attention and a SwiGLU feed-forward block
// down(silu(gate(x)) * up(x)). No biases anywhere.
class TinyLM {
 public:
  TinyLM() = default;
  explicit TinyLM(const ModelConfig& config);  // all-zero weights
  TinyLM(const ModelConfig& config, Params<float> params);

  // Normal(0, 0.02) projections and embeddings, output projections scaled by
  // 1/sqrt(2 n_layers), unit norm gains.
  static TinyLM initialize(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Params<float>& params() const { return params_; }
  Params<float>& params() { return params_; }

  ForwardResult forward(std::span<const TokenId> tokens, const KindSet* tap = nullptr,
                        const SuppressionMask& mask = {}) const;

  // Forward over several sequences at once; one TapRecord per sequence.
  std::vector<TapRecord> capture(const std::vector<std::vector<TokenId>>& seqs,
                                 const KindSet& kinds, const SuppressionMask& mask = {}) const;

  // Last-position logits of every sequence (one row each).
  MatT<float> last_logits(const std::vector<std::vector<TokenId>>& seqs,
                          const SuppressionMask& mask = {}) const;

  // Greedy decoding, ties broken towards the lowest token id. The mask is
  // applied at every step.
  std::vector<TokenId> generate(std::span<const TokenId> prompt, std::size_t max_new,
                                const SuppressionMask& mask = {}) const;
  std::vector<std::vector<TokenId>> generate_batch(const std::vector<std::vector<TokenId>>& prompts,
                                                   std::size_t max_new,
                                                   const SuppressionMask& mask = {}) const;

  // exp of the mean negative log-likelihood of tokens 2..n given their prefix.
  double perplexity(std::span<const TokenId> tokens, const SuppressionMask& mask = {}) const;

  // Checkpoint: "TLMW0001", seven little-endian u32 config fields
  // (n_layers, d_model, n_heads, d_ff, vocab_size, max_seq_len,
  // position_encoding), then every tensor of Params::visit order as
  // little-endian float32.
  std::vector<std::uint8_t> serialize() const;
  static TinyLM deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static TinyLM load(const std::filesystem::path& path);

 private:
  void check_tokens(std::span<const TokenId> tokens) const;

  ModelConfig config_;
  Params<float> params_;
};

TokenId argmax_lowest(std::span<const float> logits);

struct TrainConfig {
  std::size_t steps = 6000;
  std::size_t batch_size = 64;
  double lr = 3e-3;
  double min_lr_ratio = 0.1;
  std::size_t warmup = 200;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double grad_clip = 1.0;
  std::size_t log_every = 500;
};

struct TrainReport {
  std::vector<std::pair<std::size_t, double>> loss_curve;  // (step, mean loss since last log)
  double final_loss = 0.0;
  std::size_t steps = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t step, double loss);
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

// Next-token cross-entropy with Adam over shuffled epochs of the corpus.
// Each corpus sequence must already start with <bos>.
TinyLM train(const std::vector<std::vector<TokenId>>& corpus, const ModelConfig& config,
             const TrainConfig& train_config, std::uint64_t seed, TrainReport* report = nullptr,
             const std::function<void(std::size_t, double)>& on_log = {});

// Continue training an existing model in place (used by train and by tests).
void train_in_place(TinyLM& model, const std::vector<std::vector<TokenId>>& corpus,
                    const TrainConfig& train_config, std::uint64_t seed,
                    TrainReport* report = nullptr,
                    const std::function<void(std::size_t, double)>& on_log = {});

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t n_parameters = 0;
  std::string worst_tensor;
};

struct GradientCheckOptions {
  double step = 1e-4;
  // Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  bool zero_weights = false;   // all-zero parameters and uniform targets
  std::size_t seq_len = 6;
  std::size_t n_sequences = 2;
};

// Analytic gradients of the training loss against central finite differences
// (five-point stencil) for every parameter, both in long double.
GradientCheckResult gradient_check(const ModelConfig& config, std::uint64_t seed,
                                   const GradientCheckOptions& options = {});

// Random tiny config for gradient checks (<= 2 layers, d_model <= 32).
ModelConfig random_tiny_config(std::uint64_t seed);

}  // namespace rsn
