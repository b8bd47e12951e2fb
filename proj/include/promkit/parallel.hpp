#pragma once

// Deterministic random streams and a small data-parallel loop.
//
// Monte Carlo work is cut into fixed-size blocks; each block draws from its
// own engine seeded by (master, stream, block), so results do not depend on
// how blocks are scheduled across threads.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>

#include <boost/random/normal_distribution.hpp>

namespace promkit {

class GaussianStream {
 public:
  GaussianStream(std::uint64_t master, std::uint64_t stream, std::uint64_t block);

  /// Standard normal draw.
  double operator()() { return normal_(engine_); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_;  // ziggurat
};

/// requested > 0 wins; otherwise PROMKIT_THREADS, otherwise the hardware
/// concurrency (at least 1).
int resolve_threads(int requested);

/// Calls fn(i) for every i in [0, count) on up to `threads` workers. The
/// first exception thrown by any call is rethrown after all workers stop.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

/// Trials per RNG block in every Monte Carlo routine.
inline constexpr std::size_t kTrialsPerBlock = 4096;

inline std::size_t num_blocks(std::size_t trials) {
  return (trials + kTrialsPerBlock - 1) / kTrialsPerBlock;
}

}  // namespace promkit
