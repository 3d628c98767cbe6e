#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance binary. Deliberately simple: quadratic loops, long double.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "rsn/common.hpp"

namespace oracle {

// Precision-recall integration over every distinct score used as a threshold
// (predict positive when score >= threshold), from the highest down.
inline long double average_precision(const std::vector<float>& s, const std::vector<std::uint8_t>& y) {
  std::set<float, std::greater<>> thresholds(s.begin(), s.end());
  long double P = 0;
  for (auto l : y) P += l;
  long double ap = 0, prev_recall = 0;
  for (float t : thresholds) {
    long double tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] >= t) (y[i] ? tp : fp) += 1;
    const long double recall = tp / P;
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
  }
  return ap;
}

struct ApInstance {
  std::vector<float> scores;
  std::vector<std::uint8_t> labels;
};

// Random instance with J <= 64 and both classes. Scores are drawn from a
// small grid in forced_ties mode so equal scores are common.
inline ApInstance random_ap_instance(rsn::Rng& rng, bool forced_ties) {
  ApInstance inst;
  const std::size_t J = 2 + rng.uniform(63);
  for (std::size_t i = 0; i < J; ++i) {
    inst.labels.push_back(static_cast<std::uint8_t>(rng.uniform(2)));
    inst.scores.push_back(forced_ties ? static_cast<float>(rng.uniform(4)) * 0.25f
                                      : static_cast<float>(rng.normal()));
  }
  const auto pos = std::count(inst.labels.begin(), inst.labels.end(), 1);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(J)) {
    inst.labels[0] = 1;
    inst.labels[1] = 0;
  }
  return inst;
}

// Spearman correlation via Pearson on average ranks.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0, equal = 0;
      for (double w : v) {
        less += w < v[i];
        equal += w == v[i];
      }
      r[i] = less + (equal + 1) / 2;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += ra[i] / n, mb += rb[i] / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return saa == 0 || sbb == 0 ? 0.0 : sab / std::sqrt(saa * sbb);
}

}  // namespace oracle
