#include "rsn/model.hpp"

#include <cmath>

#include "binary_io.hpp"
#include "rsn/common.hpp"
#include "transformer_kernels.hpp"

namespace rsn {

namespace {

constexpr char kCheckpointMagic[] = "TLMW0001";
constexpr std::size_t kBatchRows = 256;  // sequences per packed inference batch

}  // namespace

TapRecord::TapRecord(const ModelConfig& config, KindSet kinds, std::size_t seq_len)
    : config_(config), kinds_(kinds), seq_len_(seq_len) {
  slots_.resize(static_cast<std::size_t>(config.n_layers) * kNumKinds);
  for (std::uint32_t l = 0; l < config.n_layers; ++l)
    for (auto k : kinds.kinds())
      slots_[detail::slot_of(l, k)].assign(seq_len * kind_width(config, k), 0.0f);
}

float TapRecord::value(const NeuronId& n, std::size_t t) const {
  const auto b = block(n.layer, n.kind);
  const auto w = kind_width(config_, n.kind);
  if (t >= seq_len_ || n.column >= w) throw ValidationError("tap index out of range");
  return b[t * w + n.column];
}

std::span<const float> TapRecord::block(std::uint32_t layer, NeuronKind kind) const {
  if (layer >= config_.n_layers || !kinds_.has(kind))
    throw ValidationError("kind " + to_string(kind) + " was not recorded");
  return slots_[detail::slot_of(layer, kind)];
}

std::span<float> TapRecord::block(std::uint32_t layer, NeuronKind kind) {
  if (layer >= config_.n_layers || !kinds_.has(kind))
    throw ValidationError("kind " + to_string(kind) + " was not recorded");
  return slots_[detail::slot_of(layer, kind)];
}

TinyLM::TinyLM(const ModelConfig& config) : config_(config) {
  config_.validate();
  params_ = Params<float>::zeros(config_);
}

TinyLM::TinyLM(const ModelConfig& config, Params<float> params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  const auto ref = Params<float>::zeros(config_);
  if (params_.size() != ref.size() || params_.layers.size() != config_.n_layers)
    throw ValidationError("parameter shapes do not match the model config");
}

TinyLM TinyLM::initialize(const ModelConfig& config, std::uint64_t seed) {
  TinyLM m(config);
  Rng rng(seed);
  const float std_dev = 0.02f;
  const float out_std = std_dev / std::sqrt(2.0f * static_cast<float>(config.n_layers));
  m.params_.visit([&](std::string_view name, float* data, Eigen::Index n) {
    if (name.ends_with("norm")) {
      std::fill(data, data + n, 1.0f);
      return;
    }
    const float s = (name == "wo" || name == "w_down") ? out_std : std_dev;
    for (Eigen::Index i = 0; i < n; ++i) data[i] = static_cast<float>(rng.normal()) * s;
  });
  return m;
}

void TinyLM::check_tokens(std::span<const TokenId> tokens) const {
  if (tokens.empty()) throw ValidationError("empty token sequence");
  if (tokens.size() > config_.max_seq_len)
    throw ValidationError("sequence of length " + std::to_string(tokens.size()) +
                          " exceeds max_seq_len " + std::to_string(config_.max_seq_len));
  for (auto t : tokens)
    if (t < 0 || static_cast<std::uint32_t>(t) >= config_.vocab_size)
      throw ValidationError("token id " + std::to_string(t) + " out of vocabulary");
}

ForwardResult TinyLM::forward(std::span<const TokenId> tokens, const KindSet* tap,
                              const SuppressionMask& mask) const {
  check_tokens(tokens);
  detail::Packed b;
  b.add(tokens);
  ForwardResult r;
  const detail::CompiledMask cm = mask.empty() ? detail::CompiledMask{}
                                               : detail::CompiledMask(mask, config_);
  const detail::CompiledMask* mp = mask.empty() ? nullptr : &cm;
  if (tap) {
    if (tap->empty()) throw ValidationError("tap spec must name at least one kind");
    detail::TapSink sink{*tap, {}};
    r.logits = detail::forward<float>(params_, config_, b, mp, &sink, nullptr,
                                      detail::LogitRows::all);
    TapRecord rec(config_, *tap, tokens.size());
    for (std::uint32_t l = 0; l < config_.n_layers; ++l)
      for (auto k : tap->kinds()) {
        const auto& m = sink.slots[detail::slot_of(l, k)];
        auto dst = rec.block(l, k);
        std::copy(m.data(), m.data() + m.size(), dst.begin());
      }
    r.tap = std::move(rec);
  } else {
    r.logits = detail::forward<float>(params_, config_, b, mp, nullptr, nullptr,
                                      detail::LogitRows::all);
  }
  return r;
}

std::vector<TapRecord> TinyLM::capture(const std::vector<std::vector<TokenId>>& seqs,
                                       const KindSet& kinds, const SuppressionMask& mask) const {
  if (kinds.empty()) throw ValidationError("tap spec must name at least one kind");
  const detail::CompiledMask cm = mask.empty() ? detail::CompiledMask{}
                                               : detail::CompiledMask(mask, config_);
  const detail::CompiledMask* mp = mask.empty() ? nullptr : &cm;
  std::vector<TapRecord> out;
  out.reserve(seqs.size());
  for (std::size_t start = 0; start < seqs.size(); start += kBatchRows) {
    const std::size_t end = std::min(seqs.size(), start + kBatchRows);
    detail::Packed b;
    for (std::size_t i = start; i < end; ++i) {
      check_tokens(seqs[i]);
      b.add(seqs[i]);
    }
    detail::TapSink sink{kinds, {}};
    detail::forward<float>(params_, config_, b, mp, &sink, nullptr, detail::LogitRows::last);
    for (std::size_t s = 0; s < b.n_seq(); ++s) {
      TapRecord rec(config_, kinds, b.len(s));
      for (std::uint32_t l = 0; l < config_.n_layers; ++l)
        for (auto k : kinds.kinds()) {
          const auto& m = sink.slots[detail::slot_of(l, k)];
          auto dst = rec.block(l, k);
          const float* src = m.data() + b.begin(s) * static_cast<std::size_t>(m.cols());
          std::copy(src, src + dst.size(), dst.begin());
        }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

MatT<float> TinyLM::last_logits(const std::vector<std::vector<TokenId>>& seqs,
                                const SuppressionMask& mask) const {
  const detail::CompiledMask cm = mask.empty() ? detail::CompiledMask{}
                                               : detail::CompiledMask(mask, config_);
  const detail::CompiledMask* mp = mask.empty() ? nullptr : &cm;
  MatT<float> out(static_cast<Eigen::Index>(seqs.size()), config_.vocab_size);
  for (std::size_t start = 0; start < seqs.size(); start += kBatchRows) {
    const std::size_t end = std::min(seqs.size(), start + kBatchRows);
    detail::Packed b;
    for (std::size_t i = start; i < end; ++i) {
      check_tokens(seqs[i]);
      b.add(seqs[i]);
    }
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) =
        detail::forward<float>(params_, config_, b, mp, nullptr, nullptr, detail::LogitRows::last);
  }
  return out;
}

TokenId argmax_lowest(std::span<const float> logits) {
  if (logits.empty()) throw ValidationError("argmax of empty logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return static_cast<TokenId>(best);
}

std::vector<std::vector<TokenId>> TinyLM::generate_batch(
    const std::vector<std::vector<TokenId>>& prompts, std::size_t max_new,
    const SuppressionMask& mask) const {
  if (max_new == 0) throw ValidationError("max_new must be at least 1");
  for (const auto& p : prompts) {
    if (p.empty()) throw ValidationError("empty prompt");
    if (p.size() + max_new - 1 > config_.max_seq_len)
      throw ValidationError("prompt plus generation exceeds max_seq_len");
  }
  std::vector<std::vector<TokenId>> seqs = prompts;
  std::vector<std::vector<TokenId>> out(prompts.size());
  for (std::size_t step = 0; step < max_new; ++step) {
    const MatT<float> logits = last_logits(seqs, mask);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      const auto row = logits.row(static_cast<Eigen::Index>(i));
      const TokenId next = argmax_lowest({row.data(), static_cast<std::size_t>(row.size())});
      out[i].push_back(next);
      seqs[i].push_back(next);
    }
  }
  return out;
}

std::vector<TokenId> TinyLM::generate(std::span<const TokenId> prompt, std::size_t max_new,
                                      const SuppressionMask& mask) const {
  return generate_batch({std::vector<TokenId>(prompt.begin(), prompt.end())}, max_new, mask)[0];
}

double TinyLM::perplexity(std::span<const TokenId> tokens, const SuppressionMask& mask) const {
  if (tokens.size() < 2) throw ValidationError("perplexity needs at least 2 tokens");
  const auto logits = forward(tokens, nullptr, mask).logits;
  double nll = 0.0;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const auto row = logits.row(static_cast<Eigen::Index>(i - 1)).cast<double>();
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    nll += lse - row(tokens[i]);
  }
  return std::exp(nll / static_cast<double>(tokens.size() - 1));
}

std::vector<std::uint8_t> TinyLM::serialize() const {
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic, 8);
  w.u32(config_.n_layers);
  w.u32(config_.d_model);
  w.u32(config_.n_heads);
  w.u32(config_.d_ff);
  w.u32(config_.vocab_size);
  w.u32(config_.max_seq_len);
  w.u32(static_cast<std::uint32_t>(config_.position_encoding));
  params_.visit([&](std::string_view, const float* data, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) w.f32(data[i]);
  });
  return std::move(w.data());
}

TinyLM TinyLM::deserialize(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  if (r.str(8) != std::string(kCheckpointMagic, 8))
    throw IoError("checkpoint: bad magic (expected TLMW0001)");
  ModelConfig c;
  c.n_layers = r.u32();
  c.d_model = r.u32();
  c.n_heads = r.u32();
  c.d_ff = r.u32();
  c.vocab_size = r.u32();
  c.max_seq_len = r.u32();
  const auto pe = r.u32();
  if (pe != 0) throw IoError("checkpoint: unknown position encoding " + std::to_string(pe));
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
  TinyLM m(c);
  const std::size_t expected = m.params_.size() * 4;
  if (r.remaining() != expected)
    throw IoError("checkpoint: payload has " + std::to_string(r.remaining()) + " bytes, expected " +
                  std::to_string(expected));
  m.params_.visit([&](std::string_view, float* data, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) data[i] = r.f32();
  });
  return m;
}

void TinyLM::save(const std::filesystem::path& path) const {
  detail::write_file_bytes(path.string(), serialize());
}

TinyLM TinyLM::load(const std::filesystem::path& path) {
  return deserialize(detail::read_file_bytes(path.string()));
}

}  // namespace rsn
