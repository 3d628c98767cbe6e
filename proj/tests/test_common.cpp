#include <gtest/gtest.h>

#include <atomic>
#include <set>

#include "rsn/common.hpp"

using namespace rsn;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, UniformStaysInRange) {
  Rng r(7);
  for (int i = 0; i < 10000; ++i) EXPECT_LT(r.uniform(13), 13u);
  EXPECT_THROW(r.uniform(0), ValidationError);
}

TEST(Rng, NormalHasRoughlyUnitMoments) {
  Rng r(3);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(DeriveSeed, LabelsAndBasesSeparateStreams) {
  EXPECT_NE(derive_seed(1, "world"), derive_seed(1, "train"));
  EXPECT_NE(derive_seed(1, "world"), derive_seed(2, "world"));
  EXPECT_EQ(derive_seed(9, "x"), derive_seed(9, "x"));
}

TEST(SampleWithoutReplacement, DistinctAndComplete) {
  Rng r(5);
  auto s = sample_without_replacement(50, 50, r);
  EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()).size(), 50u);
  auto t = sample_without_replacement(50, 10, r);
  EXPECT_EQ(std::set<std::size_t>(t.begin(), t.end()).size(), 10u);
  EXPECT_THROW(sample_without_replacement(3, 4, r), ValidationError);
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; }, 4);
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(ParallelFor, PropagatesExceptions) {
  EXPECT_THROW(parallel_for(
                   100, [](std::size_t i) { if (i == 37) throw ValidationError("boom"); }, 3),
               ValidationError);
}
