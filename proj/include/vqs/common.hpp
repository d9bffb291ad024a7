#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vqs {

enum class ErrorKind {
  invalid_argument,
  degenerate_subject,
  constant_rater,
  missing_data,
  undefined_correlation,
  shape_mismatch,
  non_finite,
  identifier_mismatch,
  ingest,
  io,
};

const char* to_string(ErrorKind kind);

// All library failures are reported through this type. `kind` is stable and
// lands in the machine-readable error document emitted by the CLI.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// splitmix64-seeded xoshiro256** generator. Every random draw in the project
// goes through this so that runs are reproducible from one 64-bit seed on any
// platform (std:: distributions are implementation-defined).
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer on [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

// Derives an independent stream seed from a base seed and a tag.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace vqs
