#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sage {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using ItemId = std::int32_t;
using UserId = std::int32_t;

/// Seeded stream used by every stochastic routine.
using Rng = std::mt19937_64;

/// Raised when an intermediate or parameter becomes NaN/Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for unreadable/unwritable files and malformed input rows.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration rejected during validation. Carries a 1-based line when known.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const noexcept { return line_; }

  /// Same error with `prefix` prepended to the message; the line is kept.
  ConfigError with_prefix(const std::string& prefix) const {
    ConfigError e(*this);
    static_cast<std::runtime_error&>(e) = std::runtime_error(prefix + what());
    return e;
  }

 private:
  int line_;
};

/// Uniform draw in [0, 1) from the top 53 bits of the generator.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Log base used by every entropy-style quantity.
enum class EntropyBase { Nats, Bits };

inline double log_in_base(double x, EntropyBase base) {
  return base == EntropyBase::Nats ? std::log(x) : std::log2(x);
}

/// Shannon entropy of an empirical distribution given by nonnegative counts.
inline double entropy_of_counts(std::span<const double> counts, EntropyBase base = EntropyBase::Nats) {
  double total = 0.0;
  for (double c : counts) total += c;
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) {
      const double p = c / total;
      h -= p * log_in_base(p, base);
    }
  }
  return h < 0.0 ? 0.0 : h;
}

/// Mean and population standard deviation, summed in index order.
struct Moments {
  double mean = 0.0;
  double stddev = 0.0;
};

inline Moments population_moments(std::span<const double> xs) {
  Moments m;
  if (xs.empty()) return m;
  double sum = 0.0;
  for (double x : xs) sum += x;
  m.mean = sum / static_cast<double>(xs.size());
  double sq = 0.0;
  for (double x : xs) sq += (x - m.mean) * (x - m.mean);
  m.stddev = std::sqrt(sq / static_cast<double>(xs.size()));
  return m;
}

}  // namespace sage
