#ifndef LUMEN_COMMON_HPP
#define LUMEN_COMMON_HPP

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace lumen {

// Stamped into run.json and checkpoint configs; bumped whenever the same
// (config, seed) stops reproducing the previous version's artifacts.
inline constexpr const char* kArtifactVersion = "0.2.0";

/// Bad configuration values, flags, or config files. CLI maps this to exit 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Inputs that violate a documented precondition. CLI maps this to exit 1.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem problems. Message always carries the offending path.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Corrupted or truncated checkpoint/container payloads.
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite loss encountered during optimization; names the term.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Deterministic uniform random stream. All library randomness flows through
/// this type; the draw sequence for a given seed is part of the reproducibility
/// contract, so uniforms are derived from raw engine words rather than
/// std::uniform_real_distribution (whose sequence is implementation-defined).
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

  /// Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  int64_t uniform_int(int64_t n) {
    return static_cast<int64_t>(uniform() * static_cast<double>(n));
  }

  /// In-place Fisher-Yates shuffle with this stream.
  template <typename Vec>
  void shuffle(Vec& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      auto j = uniform_int(i + 1);
      std::swap(v[i], v[j]);
    }
  }

  /// Independent child stream for (seed, id) pairs, e.g. per-image streams.
  Rng fork(uint64_t id) const {
    return Rng(splitmix64(seed_ ^ splitmix64(id + 0x51ED2701ULL)));
  }

  uint64_t seed() const { return seed_; }

  /// Textual engine state; round-trips exactly through restore().
  std::string serialize() const {
    std::ostringstream os;
    os << seed_ << ' ' << engine_;
    return os.str();
  }

  void restore(const std::string& state) {
    std::istringstream is(state);
    is >> seed_ >> engine_;
    if (!is) throw IntegrityError("invalid rng state string");
  }

 private:
  uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace lumen

#endif  // LUMEN_COMMON_HPP
