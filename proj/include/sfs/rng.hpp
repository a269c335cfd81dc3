#pragma once

#include <boost/random/normal_distribution.hpp>

#include <Eigen/Core>

#include <bit>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace sfs {

using Engine = std::mt19937_64;

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based seed derivation: a pure function of (master, keys...). Two
/// different key tuples give unrelated seeds, so per-path and per-cell streams
/// do not depend on how work is scheduled.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix64(master);
  for (std::uint64_t k : keys) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline std::uint64_t seed_key(double x) { return std::bit_cast<std::uint64_t>(x); }

enum class Stream : std::uint64_t { driving = 1, drift_estimation = 2, reference = 3, bootstrap = 4, probe = 5, directions = 6 };

inline Engine make_engine(std::uint64_t master, std::initializer_list<std::uint64_t> keys) {
  return Engine(derive_seed(master, keys));
}

/// Standard normal draws (ziggurat).
class NormalSource {
 public:
  explicit NormalSource(std::uint64_t seed) : engine_(seed) {}

  double operator()() { return dist_(engine_); }

  template <typename Derived>
  void fill(Eigen::DenseBase<Derived>& out) {
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) = dist_(engine_);
  }

  Engine& engine() { return engine_; }

 private:
  Engine engine_;
  boost::random::normal_distribution<double> dist_;
};

}  // namespace sfs
