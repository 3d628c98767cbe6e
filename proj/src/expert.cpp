#include "rsn/expert.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "rsn/common.hpp"

namespace rsn {

void ActivationMatrix::validate(bool require_both_classes) const {
  if (values.rows() != static_cast<Eigen::Index>(labels.size()) ||
      values.cols() != static_cast<Eigen::Index>(neurons.size()))
    throw ValidationError("activation matrix shape does not match labels/neurons");
  std::size_t pos = 0;
  for (auto l : labels) {
    if (l > 1) throw ValidationError("activation labels must be 0 or 1");
    pos += l;
  }
  if (!values.allFinite()) throw ValidationError("activation matrix contains NaN or Inf");
  if (require_both_classes && (pos == 0 || pos == labels.size()))
    throw ValidationError("activation labels need at least one positive and one negative");
}

std::vector<float> token_average(const TapRecord& rec, const std::vector<NeuronId>& neurons,
                                 std::size_t first_effective) {
  if (rec.seq_len() <= first_effective)
    throw ValidationError("token_average: no effective tokens");
  const std::size_t T = rec.seq_len() - first_effective;
  std::vector<float> out;
  out.reserve(neurons.size());
  for (const auto& n : neurons) {
    double s = 0.0;
    for (std::size_t t = first_effective; t < rec.seq_len(); ++t) s += rec.value(n, t);
    out.push_back(static_cast<float>(s / static_cast<double>(T)));
  }
  return out;
}

ActivationMatrix capture_activations(const TinyLM& model, const Tokenizer& tokenizer,
                                     const LabeledExampleSet& set, const KindSet& kinds) {
  if (kinds.empty()) throw ValidationError("tap spec must name at least one kind");
  ActivationMatrix m;
  m.neurons = neuron_index(model.config(), kinds);
  m.labels = set.labels();
  const auto J = static_cast<Eigen::Index>(set.examples.size());
  m.values = MatT<float>::Zero(J, static_cast<Eigen::Index>(m.neurons.size()));
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < set.examples.size(); start += kChunk) {
    const std::size_t end = std::min(set.examples.size(), start + kChunk);
    std::vector<std::vector<TokenId>> seqs;
    for (std::size_t i = start; i < end; ++i)
      seqs.push_back(tokenizer.encode(set.examples[i].prompt.text, true));
    const auto recs = model.capture(seqs, kinds);
    for (std::size_t i = start; i < end; ++i) {
      const auto& rec = recs[i - start];
      if (rec.seq_len() < 2) throw ValidationError("token_average: no effective tokens");
      const double inv = 1.0 / static_cast<double>(rec.seq_len() - 1);
      // Walk blocks in enumeration order; columns within a block are contiguous.
      Eigen::Index col = 0;
      for (std::uint32_t l = 0; l < model.config().n_layers; ++l)
        for (auto k : kinds.kinds()) {
          const auto b = rec.block(l, k);
          const std::size_t w = kind_width(model.config(), k);
          std::vector<double> acc(w, 0.0);
          for (std::size_t t = 1; t < rec.seq_len(); ++t)
            for (std::size_t c = 0; c < w; ++c) acc[c] += b[t * w + c];
          for (std::size_t c = 0; c < w; ++c)
            m.values(static_cast<Eigen::Index>(i), col++) = static_cast<float>(acc[c] * inv);
        }
    }
  }
  return m;
}

namespace {

// AP of one column given the example order sorted by descending score.
double ap_sorted(std::span<const float> scores, std::span<const std::uint8_t> labels,
                 const std::vector<std::uint32_t>& order, std::size_t n_pos) {
  double ap = 0.0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const float s = scores[order[i]];
    std::size_t dtp = 0;
    std::size_t j = i;
    for (; j < order.size() && scores[order[j]] == s; ++j) {
      if (labels[order[j]])
        ++dtp;
      else
        ++fp;
    }
    tp += dtp;
    if (dtp) ap += static_cast<double>(dtp) * static_cast<double>(tp) / static_cast<double>(tp + fp);
    i = j;
  }
  // Dividing once keeps a perfect ranking at exactly 1.
  return std::min(ap / static_cast<double>(n_pos), 1.0);
}

double ap_column(std::span<const float> scores, std::span<const std::uint8_t> labels,
                 std::size_t n_pos, std::vector<std::uint32_t>& order) {
  order.resize(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(),
            [&](std::uint32_t a, std::uint32_t b) { return scores[a] > scores[b]; });
  return ap_sorted(scores, labels, order, n_pos);
}

}  // namespace

double average_precision(std::span<const float> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size())
    throw ValidationError("average_precision: scores and labels differ in length");
  std::size_t pos = 0;
  for (auto l : labels) {
    if (l > 1) throw ValidationError("average_precision: labels must be 0 or 1");
    pos += l;
  }
  if (pos == 0 || pos == labels.size())
    throw ValidationError("average_precision: labels must contain both classes");
  for (float s : scores)
    if (std::isnan(s)) throw ValidationError("average_precision: NaN score");
  std::vector<std::uint32_t> order;
  return ap_column(scores, labels, pos, order);
}

std::vector<NeuronId> NeuronRanking::top_k(std::size_t k) const {
  if (k > entries.size())
    throw ValidationError("top_k: k=" + std::to_string(k) + " exceeds " +
                          std::to_string(entries.size()) + " neurons");
  std::vector<NeuronId> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(entries[i].neuron);
  return out;
}

NeuronRanking score_all(const ActivationMatrix& m, const std::string& target,
                        std::size_t threads) {
  m.validate(true);
  const std::size_t J = m.n_examples(), N = m.n_neurons();
  std::size_t pos = 0;
  for (auto l : m.labels) pos += l;

  // Column-major copy so each column is contiguous.
  const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor> cm = m.values;
  std::vector<double> ap(N);
  constexpr std::size_t kBlock = 64;
  const std::size_t n_blocks = (N + kBlock - 1) / kBlock;
  parallel_for(
      n_blocks,
      [&](std::size_t b) {
        std::vector<std::uint32_t> order;
        for (std::size_t c = b * kBlock; c < std::min(N, (b + 1) * kBlock); ++c)
          ap[c] = ap_column({cm.col(static_cast<Eigen::Index>(c)).data(), J}, m.labels, pos, order);
      },
      threads);

  NeuronRanking r;
  r.target = target;
  r.entries.reserve(N);
  for (std::size_t c = 0; c < N; ++c) r.entries.push_back({m.neurons[c], ap[c]});
  std::sort(r.entries.begin(), r.entries.end(), [](const RankEntry& a, const RankEntry& b) {
    if (a.ap != b.ap) return a.ap > b.ap;
    return a.neuron < b.neuron;
  });
  return r;
}

std::vector<std::vector<std::size_t>> overlap_matrix(const std::vector<NeuronRanking>& rankings,
                                                     std::size_t k) {
  std::vector<std::vector<NeuronId>> tops;
  for (const auto& r : rankings) {
    if (r.entries.size() != rankings.front().entries.size())
      throw ValidationError("overlap_matrix: rankings cover different neuron sets");
    auto t = r.top_k(k);
    std::sort(t.begin(), t.end());
    tops.push_back(std::move(t));
  }
  if (!rankings.empty()) {
    std::vector<NeuronId> ref, other;
    for (const auto& e : rankings.front().entries) ref.push_back(e.neuron);
    std::sort(ref.begin(), ref.end());
    for (const auto& r : rankings) {
      other.clear();
      for (const auto& e : r.entries) other.push_back(e.neuron);
      std::sort(other.begin(), other.end());
      if (other != ref) throw ValidationError("overlap_matrix: rankings cover different neuron sets");
    }
  }
  const std::size_t n = tops.size();
  std::vector<std::vector<std::size_t>> m(n, std::vector<std::size_t>(n, 0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<NeuronId> both;
      std::set_intersection(tops[i].begin(), tops[i].end(), tops[j].begin(), tops[j].end(),
                            std::back_inserter(both));
      m[i][j] = both.size();
    }
  return m;
}

std::vector<std::size_t> layer_histogram(const NeuronRanking& ranking, std::size_t k,
                                         std::uint32_t n_layers) {
  std::vector<std::size_t> h(n_layers, 0);
  for (const auto& n : ranking.top_k(k)) {
    if (n.layer >= n_layers) throw ValidationError("layer_histogram: layer out of range");
    ++h[n.layer];
  }
  return h;
}

double jaccard(const std::vector<NeuronId>& a, const std::vector<NeuronId>& b) {
  std::vector<NeuronId> x = a, y = b;
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  x.erase(std::unique(x.begin(), x.end()), x.end());
  y.erase(std::unique(y.begin(), y.end()), y.end());
  std::vector<NeuronId> i, u;
  std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(i));
  std::set_union(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(u));
  return u.empty() ? 1.0 : static_cast<double>(i.size()) / static_cast<double>(u.size());
}

std::vector<std::vector<double>> jaccard_matrix(const std::vector<NeuronRanking>& rankings,
                                                std::size_t k) {
  std::vector<std::vector<NeuronId>> tops;
  for (const auto& r : rankings) tops.push_back(r.top_k(k));
  std::vector<std::vector<double>> m(tops.size(), std::vector<double>(tops.size()));
  for (std::size_t i = 0; i < tops.size(); ++i)
    for (std::size_t j = 0; j < tops.size(); ++j) m[i][j] = jaccard(tops[i], tops[j]);
  return m;
}

void write_ranking_csv(const std::filesystem::path& path, const NeuronRanking& ranking) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "kind,layer,column,ap\n";
  char buf[64];
  for (const auto& e : ranking.entries) {
    std::snprintf(buf, sizeof buf, "%.17g", e.ap);
    out << to_string(e.neuron.kind) << ',' << e.neuron.layer << ',' << e.neuron.column << ','
        << buf << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

NeuronRanking read_ranking_csv(const std::filesystem::path& path, const std::string& target) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "kind,layer,column,ap")
    throw IoError(path.string() + ": expected header kind,layer,column,ap");
  NeuronRanking r;
  r.target = target;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    if (f.size() != 4) throw IoError(path.string() + ":" + std::to_string(n) + ": expected 4 fields");
    try {
      RankEntry e;
      e.neuron.kind = neuron_kind_from_string(f[0]);
      e.neuron.layer = static_cast<std::uint32_t>(std::stoul(f[1]));
      e.neuron.column = static_cast<std::uint32_t>(std::stoul(f[2]));
      e.ap = std::stod(f[3]);
      if (!(e.ap >= 0.0 && e.ap <= 1.0)) throw ValidationError("ap outside [0,1]");
      r.entries.push_back(e);
    } catch (const std::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  for (std::size_t i = 1; i < r.entries.size(); ++i) {
    const auto& a = r.entries[i - 1];
    const auto& b = r.entries[i];
    if (a.ap < b.ap || (a.ap == b.ap && !(a.neuron < b.neuron)))
      throw ValidationError(path.string() + ": ranking is not sorted by ap then neuron id");
  }
  return r;
}

void write_mask_csv(const std::filesystem::path& path, const NeuronRanking& ranking, std::size_t k) {
  NeuronRanking prefix;
  prefix.target = ranking.target;
  if (k > ranking.entries.size()) throw ValidationError("mask size exceeds the ranking");
  prefix.entries.assign(ranking.entries.begin(), ranking.entries.begin() + static_cast<std::ptrdiff_t>(k));
  write_ranking_csv(path, prefix);
}

SuppressionMask read_mask_csv(const std::filesystem::path& path) {
  std::vector<NeuronId> ids;
  for (const auto& e : read_ranking_csv(path).entries) ids.push_back(e.neuron);
  return SuppressionMask(std::move(ids));
}

}  // namespace rsn
