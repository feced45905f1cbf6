#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace echmm {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Number of price components per observation (open, high, low, close).
inline constexpr int kPriceComponents = 4;

enum class PriceComponent : int { kOpen = 0, kHigh = 1, kLow = 2, kClose = 3 };

/// Base of every error raised by the library. Validation errors describe bad
/// input (exit code 2 at the CLI); everything else is a runtime failure.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, bool validation = false)
      : std::runtime_error(what), validation_(validation) {}
  bool is_validation() const noexcept { return validation_; }

 private:
  bool validation_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what, true), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(what, true) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("shape error: " + what, true) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config error: " + what, true) {}
};

class InsufficientDataError : public Error {
 public:
  explicit InsufficientDataError(const std::string& what)
      : Error("insufficient data: " + what, true) {}
};

class NotFoundError : public Error {
 public:
  explicit NotFoundError(const std::string& what) : Error("not found: " + what, true) {}
};

class RangeError : public Error {
 public:
  explicit RangeError(const std::string& what) : Error("range error: " + what, true) {}
};

class UndefinedCorrelationError : public Error {
 public:
  explicit UndefinedCorrelationError(const std::string& what) : Error(what) {}
};

class InfeasibleClusteringError : public Error {
 public:
  explicit InfeasibleClusteringError(const std::string& what) : Error(what, true) {}
};

class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(const std::string& what) : Error(what) {}
};

class DegenerateFilterError : public Error {
 public:
  explicit DegenerateFilterError(const std::string& what) : Error(what) {}
};

/// Smallest argument passed to a logarithm anywhere in the model.
inline constexpr double kLogFloor = 1e-300;

template <typename Scalar>
inline Scalar floored_log(Scalar x) {
  using std::log;
  return log(x < Scalar(kLogFloor) ? Scalar(kLogFloor) : x);
}

/// Counter-based generator: a SplitMix64 stream keyed by (seed, stream, step).
/// Two generators built from the same key produce the same sequence no matter
/// which thread constructs them.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t step);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  /// Index drawn from an (unnormalized, non-negative) discrete distribution.
  template <typename Derived>
  int categorical(const Eigen::DenseBase<Derived>& probs) {
    const double total = probs.sum();
    double u = uniform() * total;
    const int n = static_cast<int>(probs.size());
    for (int i = 0; i < n; ++i) {
      u -= probs(i);
      if (u < 0.0) return i;
    }
    for (int i = n - 1; i >= 0; --i)
      if (probs(i) > 0.0) return i;
    return n - 1;
  }
  double normal();

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix64(std::uint64_t x);

/// Runs body(begin, end) over contiguous chunks of [0, n) on up to `threads`
/// workers. Results must not depend on chunk boundaries.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t, std::size_t)>& body);

/// Sum in a fixed pairwise-tree order so the result does not depend on how the
/// terms were produced.
double pairwise_sum(const std::vector<double>& terms);

}  // namespace echmm
