#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

namespace crvae {

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVecX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using ArrXX = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using ArrX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

using Matd = MatX<double>;
using Vecd = VecX<double>;
using MatXi = Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic>;

// Bad user input: config files, flags, unsatisfiable parameter combinations. Exit code 1.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Unparseable input data; carries the offending line/record where known.
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// A pipeline stage could not produce its artifact. Exit code 2.
struct StageError : std::runtime_error {
  explicit StageError(const std::string& what) : std::runtime_error(what) {}
};

// Remote/subprocess backend failure after retries.
struct BackendError : StageError {
  explicit BackendError(const std::string& what) : StageError(what) {}
};

// Caller broke an operation precondition; a programming error, not user input.
struct ContractViolation : std::logic_error {
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// Non-fatal problems worth surfacing (skipped frames, degraded backends, ...).
// Goes to stderr by default; pipeline stages install a sink that also copies
// warnings into the run log.
void log_warn(const std::string& msg);
void set_warn_sink(std::function<void(const std::string&)> sink);  // empty = stderr only

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Seeded RNG wrapper; all stochastic code in the project draws through one of
// these so runs are reproducible from the config seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

  double uniform() { return unif_(eng_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unif_(eng_); }
  double normal() { return norm_(eng_); }
  // uniform integer in [0, n)
  std::uint64_t index(std::uint64_t n) {
    std::uniform_int_distribution<std::uint64_t> d(0, n - 1);
    return d(eng_);
  }
  std::mt19937_64& engine() { return eng_; }

  template <typename S>
  MatX<S> randn(Eigen::Index rows, Eigen::Index cols) {
    MatX<S> m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = static_cast<S>(norm_(eng_));
    return m;
  }

  template <typename S>
  MatX<S> rand_uniform(Eigen::Index rows, Eigen::Index cols, S lo, S hi) {
    MatX<S> m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r)
        m(r, c) = lo + (hi - lo) * static_cast<S>(unif_(eng_));
    return m;
  }

 private:
  std::mt19937_64 eng_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::normal_distribution<double> norm_{0.0, 1.0};
};

}  // namespace crvae
