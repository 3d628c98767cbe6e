#pragma once

#include <compare>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace rsn {

enum class PositionEncoding : std::uint32_t { learned_absolute = 0 };

struct ModelConfig {
  std::uint32_t n_layers = 4;
  std::uint32_t d_model = 128;
  std::uint32_t n_heads = 4;
  std::uint32_t d_ff = 256;
  std::uint32_t vocab_size = 0;
  std::uint32_t max_seq_len = 32;
  PositionEncoding position_encoding = PositionEncoding::learned_absolute;

  void validate() const;
  std::uint32_t head_dim() const { return d_model / n_heads; }
  bool operator==(const ModelConfig&) const = default;
};

// Codes are part of the activation file format.
enum class NeuronKind : std::uint8_t {
  up = 0,
  gate = 1,
  down = 2,
  attn_q = 3,
  attn_k = 4,
  attn_v = 5,
  attn_o = 6,
};
inline constexpr std::size_t kNumKinds = 7;

std::string to_string(NeuronKind k);
NeuronKind neuron_kind_from_string(const std::string& s);
NeuronKind neuron_kind_from_code(std::uint8_t code);

// Output width of a projection: d_ff for up/gate, d_model otherwise.
std::uint32_t kind_width(const ModelConfig& c, NeuronKind k);

class KindSet {
 public:
  KindSet() = default;
  KindSet(std::initializer_list<NeuronKind> kinds);

  static KindSet ffn() { return {NeuronKind::up, NeuronKind::gate, NeuronKind::down}; }
  static KindSet attention();
  static KindSet all();
  static KindSet parse(const std::string& csv);  // "up,gate,down", "ffn", "attn", "all"

  bool has(NeuronKind k) const { return bits_ & (1u << static_cast<unsigned>(k)); }
  void insert(NeuronKind k) { bits_ |= static_cast<std::uint8_t>(1u << static_cast<unsigned>(k)); }
  bool empty() const { return bits_ == 0; }
  std::vector<NeuronKind> kinds() const;  // ascending code order
  std::string to_string() const;
  bool operator==(const KindSet&) const = default;

 private:
  std::uint8_t bits_ = 0;
};

// One scalar output column of one projection.
struct NeuronId {
  NeuronKind kind = NeuronKind::up;
  std::uint32_t layer = 0;
  std::uint32_t column = 0;

  bool operator==(const NeuronId&) const = default;
  // Enumeration order: layer, then kind, then column.
  std::strong_ordering operator<=>(const NeuronId& o) const {
    if (auto c = layer <=> o.layer; c != 0) return c;
    if (auto c = static_cast<int>(kind) <=> static_cast<int>(o.kind); c != 0) return c;
    return column <=> o.column;
  }
  bool valid_for(const ModelConfig& c) const;
  std::string to_string() const;
};

std::vector<NeuronId> neuron_index(const ModelConfig& config, const KindSet& kinds);
std::size_t neuron_count(const ModelConfig& config, const KindSet& kinds);

// Set of neurons forced to zero during a forward pass.
class SuppressionMask {
 public:
  SuppressionMask() = default;
  explicit SuppressionMask(std::vector<NeuronId> neurons);

  const std::vector<NeuronId>& neurons() const { return neurons_; }  // sorted, unique
  bool empty() const { return neurons_.empty(); }
  std::size_t size() const { return neurons_.size(); }
  bool contains(const NeuronId& n) const;
  bool is_subset_of(const SuppressionMask& other) const;
  void validate(const ModelConfig& config) const;

 private:
  std::vector<NeuronId> neurons_;
};

}  // namespace rsn
