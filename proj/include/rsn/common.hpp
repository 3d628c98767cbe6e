#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsn {

// Input violates a documented precondition or invariant (CLI exit status 1).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File missing, unreadable, truncated or of the wrong format (CLI exit status 2).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Portable deterministic RNG. std::uniform_*_distribution is implementation
// defined, so all draws go through these helpers on top of mt19937_64's
// standardized raw output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform(std::uint64_t n);
  // Uniform double in [0, 1).
  double uniform01();
  double normal();

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derive an independent stream seed from a base seed and a label.
std::uint64_t derive_seed(std::uint64_t base, const std::string& label);

// Sample k distinct indices from [0, n) uniformly, returned in draw order.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng);

// Runs f(i) for i in [0, n) on up to `threads` workers (0 = hardware
// concurrency). Each index runs exactly once; callers write disjoint outputs.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f,
                  std::size_t threads = 0);

}  // namespace rsn
