#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qv {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeMismatch : Error { using Error::Error; };
struct InvalidGeometry : Error { using Error::Error; };
struct NonUnitAxis : Error { using Error::Error; };
struct InsufficientSamples : Error { using Error::Error; };
struct ZeroVariance : Error { using Error::Error; };
struct NonPositiveVariance : Error { using Error::Error; };
struct SingularCovariance : Error { using Error::Error; };
struct ChannelNotDivisibleBy4 : Error { using Error::Error; };
struct MissingGradient : Error { using Error::Error; };
struct NotScalar : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };
struct NoImagesFound : Error { using Error::Error; };
struct ImageTooSmall : Error { using Error::Error; };
struct DecodeError : Error { using Error::Error; };
struct CheckpointError : Error { using Error::Error; };
struct DivergenceError : Error { using Error::Error; };

/// Deterministic random stream. Gaussian draws use a stateless Box-Muller
/// (two engine words per draw) so the stream state is exactly the engine
/// state, which serializes losslessly into checkpoints.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform() { return (engine_() >> 11) * 0x1.0p-53; }

  std::uint64_t raw() { return engine_(); }

  double gaussian() {
    const double u1 = ((engine_() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = (engine_() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Unbiased integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t bound = (UINT64_MAX / n) * n;
    std::uint64_t r = engine_();
    while (r >= bound) r = engine_();
    return r % n;
  }

  /// Derive an independent stream; mixing is splitmix64 of (state seed ^ tag).
  RandomSource fork(std::uint64_t tag) {
    std::uint64_t z = engine_() ^ tag;
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return RandomSource(z ^ (z >> 31));
  }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void restore(const std::string& state) {
    std::istringstream is(state);
    is >> engine_;
    if (!is) throw CheckpointError("bad rng state");
  }

 private:
  std::mt19937_64 engine_;
};

/// Deterministic Fisher-Yates; the order depends only on (rng state, n).
template <typename T>
void shuffle(std::vector<T>& v, RandomSource& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.uniform_index(i)]);
  }
}

/// Worker cap from QVAE_THREADS (0 or unset = auto). Read once.
int worker_count();

/// Runs fn over [0, n) split into contiguous chunks, one worker per chunk.
/// Each index is handled by exactly one worker, so results do not depend on
/// the worker count.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace qv
