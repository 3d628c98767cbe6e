#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "rsn/common.hpp"
#include "rsn/expert.hpp"

using namespace rsn;

namespace {

double ap(std::vector<float> s, std::vector<std::uint8_t> y) { return average_precision(s, y); }

ActivationMatrix random_matrix(std::size_t J, std::size_t N, std::uint64_t seed, bool ties) {
  Rng r(seed);
  ActivationMatrix m;
  ModelConfig c{1, static_cast<std::uint32_t>(N), 1, static_cast<std::uint32_t>(N), 4, 4};
  m.neurons = neuron_index(c, {NeuronKind::up});
  m.values = MatT<float>(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(N));
  for (Eigen::Index i = 0; i < m.values.size(); ++i)
    m.values.data()[i] = ties ? static_cast<float>(r.uniform(3)) : static_cast<float>(r.normal());
  for (std::size_t j = 0; j < J; ++j) m.labels.push_back(j % 3 == 0);
  return m;
}

}  // namespace

TEST(AveragePrecision, AnalyticCases) {
  EXPECT_DOUBLE_EQ(ap({0.9f, 0.8f, 0.1f, 0.0f}, {1, 1, 0, 0}), 1.0);
  EXPECT_NEAR(ap({0.5f, 0.5f, 0.5f, 0.5f, 0.5f}, {1, 0, 0, 1, 0}), 2.0 / 5.0, 1e-15);
  EXPECT_NEAR(ap({0.9f, 0.8f, 0.7f, 0.6f}, {1, 0, 1, 0}), 5.0 / 6.0, 1e-12);
  // Worst order: positives last.
  EXPECT_NEAR(ap({0.9f, 0.8f, 0.1f}, {0, 0, 1}), 1.0 / 3.0, 1e-15);
}

TEST(AveragePrecision, MatchesBruteForceOnRandomInstances) {
  Rng rng(2024);
  for (int i = 0; i < 1000; ++i) {
    const auto inst = oracle::random_ap_instance(rng, i % 2 == 0);
    const double got = average_precision(inst.scores, inst.labels);
    const double want = static_cast<double>(oracle::average_precision(inst.scores, inst.labels));
    ASSERT_NEAR(got, want, 1e-12) << "instance " << i;
  }
}

TEST(AveragePrecision, InvariantUnderPermutationAndMonotoneMaps) {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    auto inst = oracle::random_ap_instance(rng, i % 2 == 1);
    const double base = average_precision(inst.scores, inst.labels);
    std::vector<std::size_t> perm(inst.scores.size());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<float> ps, mapped;
    std::vector<std::uint8_t> pl;
    for (auto p : perm) ps.push_back(inst.scores[p]), pl.push_back(inst.labels[p]);
    for (float s : inst.scores) mapped.push_back(3.0f * s + 1.0f);
    EXPECT_NEAR(average_precision(ps, pl), base, 1e-12);
    EXPECT_NEAR(average_precision(mapped, inst.labels), base, 1e-12);
    EXPECT_GE(base, 0.0);
    EXPECT_LE(base, 1.0 + 1e-12);
  }
}

TEST(AveragePrecision, RaisingAPositiveNeverHurts) {
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    auto inst = oracle::random_ap_instance(rng, false);
    const double base = average_precision(inst.scores, inst.labels);
    for (std::size_t j = 0; j < inst.scores.size(); ++j)
      if (inst.labels[j]) {
        inst.scores[j] += 10.0f;
        break;
      }
    EXPECT_GE(average_precision(inst.scores, inst.labels), base - 1e-12);
  }
}

TEST(AveragePrecision, Errors) {
  EXPECT_THROW(ap({1, 2}, {1, 1}), ValidationError);
  EXPECT_THROW(ap({1, 2}, {0, 0}), ValidationError);
  EXPECT_THROW(ap({1, 2, 3}, {0, 1}), ValidationError);
  EXPECT_THROW(ap({1, std::nanf("")}, {0, 1}), ValidationError);
  EXPECT_THROW(ap({1, 2}, {0, 2}), ValidationError);
}

TEST(ScoreAll, SortedAndMatchesPerColumnAp) {
  const auto m = random_matrix(40, 100, 3, true);
  const auto r = score_all(m, "t", 1);
  ASSERT_EQ(r.entries.size(), 100u);
  for (std::size_t i = 1; i < r.entries.size(); ++i) {
    const auto& a = r.entries[i - 1];
    const auto& b = r.entries[i];
    EXPECT_TRUE(a.ap > b.ap || (a.ap == b.ap && a.neuron < b.neuron));
  }
  for (const auto& e : r.entries) {
    std::vector<float> col;
    for (Eigen::Index j = 0; j < m.values.rows(); ++j) col.push_back(m.values(j, e.neuron.column));
    EXPECT_NEAR(e.ap, static_cast<double>(oracle::average_precision(col, m.labels)), 1e-12);
  }
}

TEST(ScoreAll, ThreadCountDoesNotChangeTheResult) {
  const auto m = random_matrix(64, 1000, 5, false);
  const auto one = score_all(m, "t", 1);
  EXPECT_EQ(score_all(m, "t", 4).entries, one.entries);
  EXPECT_EQ(score_all(m, "t", 0).entries, one.entries);
}

TEST(ScoreAll, Errors) {
  auto m = random_matrix(10, 5, 1, false);
  m.labels.assign(10, 1);
  EXPECT_THROW(score_all(m, "t"), ValidationError);
  m = random_matrix(10, 5, 1, false);
  m.values(0, 0) = std::numeric_limits<float>::infinity();
  EXPECT_THROW(score_all(m, "t"), ValidationError);
  m = random_matrix(10, 5, 1, false);
  m.labels.pop_back();
  EXPECT_THROW(score_all(m, "t"), ValidationError);
}

TEST(Ranking, TopKAndMask) {
  const auto r = score_all(random_matrix(30, 50, 9, false), "t");
  EXPECT_EQ(r.top_k(0).size(), 0u);
  const auto t = r.top_k(5);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(t[i], r.entries[i].neuron);
  EXPECT_EQ(r.mask(5).size(), 5u);
  EXPECT_THROW(r.top_k(51), ValidationError);
}

TEST(Ranking, OverlapHistogramJaccard) {
  const auto a = score_all(random_matrix(30, 50, 1, false), "a");
  const auto b = score_all(random_matrix(30, 50, 2, false), "b");
  const auto m = overlap_matrix({a, b}, 10);
  EXPECT_EQ(m[0][0], 10u);
  EXPECT_EQ(m[0][1], m[1][0]);
  EXPECT_LE(m[0][1], 10u);
  const auto ta = a.top_k(10), tb = b.top_k(10);
  std::size_t shared = 0;
  for (const auto& x : ta) shared += std::count(tb.begin(), tb.end(), x);
  EXPECT_EQ(m[0][1], shared);
  const auto j = jaccard_matrix({a, b}, 10);
  EXPECT_DOUBLE_EQ(j[0][0], 1.0);
  EXPECT_DOUBLE_EQ(j[0][1], static_cast<double>(shared) / static_cast<double>(20 - shared));
  EXPECT_DOUBLE_EQ(jaccard({}, {}), 1.0);
  const auto h = layer_histogram(a, 10, 2);
  EXPECT_EQ(h[0], 10u);
  EXPECT_EQ(h[1], 0u);
  auto c = a;
  c.entries.pop_back();
  EXPECT_THROW(overlap_matrix({a, c}, 3), ValidationError);
}

TEST(Capture, MatchesTokenAveragedTaps) {
  ModelConfig cfg{2, 16, 2, 24, 12, 10};
  const auto model = TinyLM::initialize(cfg, 3);
  std::vector<std::string> words{"<pad>", "<bos>"};
  for (int i = 0; i < 10; ++i) words.push_back("w" + std::to_string(i));
  const Tokenizer tok(words);
  LabeledExampleSet set;
  set.examples = {{{"r", "w1", "w2", "w1 w3 w4", Split::det}, 1},
                  {{"r", "w5", "w2", "w5 w3", Split::det}, 1},
                  {{"q", "w6", "w7", "w6 w8 w9 w0", Split::det}, 0}};
  const auto ffn = KindSet::ffn();
  const auto m = capture_activations(model, tok, set, ffn);
  m.validate(true);
  EXPECT_EQ(m.neurons, neuron_index(cfg, ffn));
  EXPECT_EQ(m.labels, (std::vector<std::uint8_t>{1, 1, 0}));
  for (std::size_t i = 0; i < 3; ++i) {
    const auto ids = tok.encode(set.examples[i].prompt.text, true);
    const auto rec = *model.forward(ids, &ffn).tap;
    for (std::size_t n = 0; n < m.neurons.size(); ++n) {
      double s = 0;
      for (std::size_t t = 1; t < ids.size(); ++t) s += rec.value(m.neurons[n], t);
      EXPECT_NEAR(m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n)),
                  s / static_cast<double>(ids.size() - 1), 1e-5);
    }
  }
  const auto avg = token_average(*model.forward(tok.encode("w1 w3 w4", true), &ffn).tap, m.neurons);
  for (std::size_t n = 0; n < avg.size(); ++n) EXPECT_NEAR(avg[n], m.values(0, static_cast<Eigen::Index>(n)), 1e-6);
}

TEST(RankingCsv, RoundTripIsExact) {
  const auto r = score_all(random_matrix(33, 70, 4, false), "t");
  const auto path = std::filesystem::temp_directory_path() / "rsn_rank.csv";
  write_ranking_csv(path, r);
  const auto back = read_ranking_csv(path, "t");
  EXPECT_EQ(back.entries, r.entries);
  const auto again = std::filesystem::temp_directory_path() / "rsn_rank2.csv";
  write_ranking_csv(again, back);
  std::ifstream a(path), b(again);
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}),
            std::string(std::istreambuf_iterator<char>(b), {}));
  std::filesystem::remove(again);
  std::filesystem::remove(path);
}

TEST(RankingCsv, RejectsBadFiles) {
  const auto path = std::filesystem::temp_directory_path() / "rsn_rank_bad.csv";
  auto write = [&](const std::string& s) {
    std::ofstream o(path);
    o << s;
  };
  write("kind,layer,col,ap\n");
  EXPECT_THROW(read_ranking_csv(path), IoError);
  write("kind,layer,column,ap\nup,0,1\n");
  EXPECT_THROW(read_ranking_csv(path), IoError);
  write("kind,layer,column,ap\nmlp,0,1,0.5\n");
  EXPECT_THROW(read_ranking_csv(path), IoError);
  write("kind,layer,column,ap\nup,0,1,1.5\n");
  EXPECT_THROW(read_ranking_csv(path), IoError);
  write("kind,layer,column,ap\nup,0,1,0.5\nup,0,0,0.9\n");
  EXPECT_THROW(read_ranking_csv(path), ValidationError);
  std::filesystem::remove(path);
}

TEST(MaskCsv, PrefixOfRankingRoundTrips) {
  const auto r = score_all(random_matrix(20, 40, 6, false), "t");
  const auto path = std::filesystem::temp_directory_path() / "rsn_mask.csv";
  write_mask_csv(path, r, 7);
  EXPECT_EQ(read_mask_csv(path).neurons(), r.mask(7).neurons());
  EXPECT_EQ(read_ranking_csv(path).entries.size(), 7u);
  write_ranking_csv(path, r);
  EXPECT_EQ(read_mask_csv(path).size(), 40u);
  EXPECT_THROW(write_mask_csv(path, r, 41), ValidationError);
  std::filesystem::remove(path);
}
