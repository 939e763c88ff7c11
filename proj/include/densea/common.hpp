#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace densea {

// Every failure the library raises derives from Error so callers can map the
// family to a process exit code without string matching.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config: " + msg) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error("parse: " + msg) {}
};
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("io: " + msg) {}
};
struct DimensionError : Error {
  explicit DimensionError(const std::string& msg) : Error("dimension: " + msg) {}
};
struct IndexError : Error {
  explicit IndexError(const std::string& msg) : Error("index: " + msg) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error("numeric: " + msg) {}
};
struct DegenerateSampleError : Error {
  explicit DegenerateSampleError(const std::string& msg) : Error("degenerate sample: " + msg) {}
};
// Asked for something the loaded artifact cannot do (e.g. attention export
// from a model trained without attention).
struct CapabilityError : Error {
  explicit CapabilityError(const std::string& msg) : Error("capability: " + msg) {}
};
struct InternalError : Error {
  explicit InternalError(const std::string& msg) : Error("internal: " + msg) {}
};

// ---- logging ----------------------------------------------------------

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

// Level comes from DENSEA_LOG (debug|info|warn|error|off); default warn.
LogLevel log_level();
void set_log_level(LogLevel lv);
void log_msg(LogLevel lv, const std::string& msg);

inline void log_debug(const std::string& m) { log_msg(LogLevel::Debug, m); }
inline void log_info(const std::string& m) { log_msg(LogLevel::Info, m); }
inline void log_warn(const std::string& m) { log_msg(LogLevel::Warn, m); }
inline void log_error(const std::string& m) { log_msg(LogLevel::Error, m); }

// ---- hashing -----------------------------------------------------------

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

inline uint64_t fnv1a64(const std::vector<double>& v, uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(v.data(), v.size() * sizeof(double), h);
}

std::string hex64(uint64_t h);

// ---- deterministic RNG --------------------------------------------------

// Thin splitmix/mt wrapper so every stream is reproducible from (seed, tag).
// All stochastic choices in the library go through this type; nothing touches
// global RNG state.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {
    // warm up so nearby seeds decorrelate
    for (int i = 0; i < 4; ++i) next();
  }

  static Rng derive(uint64_t seed, const std::string& tag) {
    return Rng(fnv1a64(tag, seed ^ 0x51ed2701a3c1e6bfull));
  }
  static Rng derive(uint64_t seed, const std::string& tag, uint64_t index) {
    uint64_t h = fnv1a64(tag, seed ^ 0x51ed2701a3c1e6bfull);
    return Rng(fnv1a64(&index, sizeof(index), h));
  }

  uint64_t next() {
    // splitmix64
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0,1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [lo, hi] inclusive
  int uniform_int(int lo, int hi) {
    if (hi < lo) throw IndexError("uniform_int: empty range");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next() % span);
  }

  // standard normal via Box-Muller (no cached spare: keeps streams
  // insensitive to call parity)
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // pick index according to weights (need not be normalized)
  int categorical(const std::vector<double>& w);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = next() % i;
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

// ---- small shared helpers ------------------------------------------------

std::string format_double(double v);  // shortest round-trippable decimal (%.17g)

}  // namespace densea
