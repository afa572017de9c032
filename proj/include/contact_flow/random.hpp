#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <boost/math/special_functions/gamma.hpp>

namespace contact_flow {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent, reproducible stream number `stream` derived from `seed`.
// Results depend only on (seed, stream), never on how streams are assigned
// to worker threads.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream)
      : engine_(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL))) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Upper tail P(X >= chi2) for a chi-square variable with `dof` degrees of
// freedom.
inline double chi_square_p_value(double chi2, double dof) {
  if (chi2 <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * chi2);
}

inline double binomial_standard_error(double p, double count) {
  return std::sqrt(std::max(0.0, p * (1.0 - p)) / count);
}

}  // namespace contact_flow
