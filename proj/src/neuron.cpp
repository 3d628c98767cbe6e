#include "rsn/neuron.hpp"

#include <algorithm>
#include <sstream>

#include "rsn/common.hpp"

namespace rsn {

namespace {
constexpr const char* kKindNames[kNumKinds] = {"up",     "gate",   "down",  "attn_q",
                                               "attn_k", "attn_v", "attn_o"};
}

void ModelConfig::validate() const {
  if (n_layers == 0 || d_model == 0 || n_heads == 0 || d_ff == 0 || vocab_size == 0 ||
      max_seq_len == 0)
    throw ValidationError("model config counts must be positive");
  if (d_model % n_heads != 0) throw ValidationError("d_model must be divisible by n_heads");
  if (position_encoding != PositionEncoding::learned_absolute)
    throw ValidationError("unsupported position encoding");
}

std::string to_string(NeuronKind k) {
  const auto i = static_cast<std::size_t>(k);
  if (i >= kNumKinds) throw ValidationError("invalid neuron kind code " + std::to_string(i));
  return kKindNames[i];
}

NeuronKind neuron_kind_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kNumKinds; ++i)
    if (s == kKindNames[i]) return static_cast<NeuronKind>(i);
  throw ValidationError("unknown neuron kind '" + s + "'");
}

NeuronKind neuron_kind_from_code(std::uint8_t code) {
  if (code >= kNumKinds) throw ValidationError("invalid neuron kind code " + std::to_string(code));
  return static_cast<NeuronKind>(code);
}

std::uint32_t kind_width(const ModelConfig& c, NeuronKind k) {
  return (k == NeuronKind::up || k == NeuronKind::gate) ? c.d_ff : c.d_model;
}

KindSet::KindSet(std::initializer_list<NeuronKind> kinds) {
  for (auto k : kinds) insert(k);
}

KindSet KindSet::attention() {
  return {NeuronKind::attn_q, NeuronKind::attn_k, NeuronKind::attn_v, NeuronKind::attn_o};
}

KindSet KindSet::all() {
  KindSet s;
  for (std::size_t i = 0; i < kNumKinds; ++i) s.insert(static_cast<NeuronKind>(i));
  return s;
}

KindSet KindSet::parse(const std::string& csv) {
  if (csv == "ffn") return ffn();
  if (csv == "attn" || csv == "self_attn") return attention();
  if (csv == "all") return all();
  KindSet s;
  std::stringstream in(csv);
  std::string part;
  while (std::getline(in, part, ','))
    if (!part.empty()) s.insert(neuron_kind_from_string(part));
  if (s.empty()) throw ValidationError("empty neuron kind set");
  return s;
}

std::vector<NeuronKind> KindSet::kinds() const {
  std::vector<NeuronKind> out;
  for (std::size_t i = 0; i < kNumKinds; ++i)
    if (has(static_cast<NeuronKind>(i))) out.push_back(static_cast<NeuronKind>(i));
  return out;
}

std::string KindSet::to_string() const {
  std::string s;
  for (auto k : kinds()) {
    if (!s.empty()) s += ',';
    s += rsn::to_string(k);
  }
  return s;
}

bool NeuronId::valid_for(const ModelConfig& c) const {
  return static_cast<std::size_t>(kind) < kNumKinds && layer < c.n_layers &&
         column < kind_width(c, kind);
}

std::string NeuronId::to_string() const {
  return rsn::to_string(kind) + "@" + std::to_string(layer) + ":" + std::to_string(column);
}

std::vector<NeuronId> neuron_index(const ModelConfig& config, const KindSet& kinds) {
  std::vector<NeuronId> out;
  out.reserve(neuron_count(config, kinds));
  const auto ks = kinds.kinds();
  for (std::uint32_t l = 0; l < config.n_layers; ++l)
    for (auto k : ks)
      for (std::uint32_t c = 0; c < kind_width(config, k); ++c) out.push_back({k, l, c});
  return out;
}

std::size_t neuron_count(const ModelConfig& config, const KindSet& kinds) {
  std::size_t per_layer = 0;
  for (auto k : kinds.kinds()) per_layer += kind_width(config, k);
  return per_layer * config.n_layers;
}

SuppressionMask::SuppressionMask(std::vector<NeuronId> neurons) : neurons_(std::move(neurons)) {
  std::sort(neurons_.begin(), neurons_.end());
  neurons_.erase(std::unique(neurons_.begin(), neurons_.end()), neurons_.end());
}

bool SuppressionMask::contains(const NeuronId& n) const {
  return std::binary_search(neurons_.begin(), neurons_.end(), n);
}

bool SuppressionMask::is_subset_of(const SuppressionMask& other) const {
  return std::includes(other.neurons_.begin(), other.neurons_.end(), neurons_.begin(),
                       neurons_.end());
}

void SuppressionMask::validate(const ModelConfig& config) const {
  for (const auto& n : neurons_)
    if (!n.valid_for(config))
      throw ValidationError("neuron " + n.to_string() + " is out of range for the model");
}

}  // namespace rsn
