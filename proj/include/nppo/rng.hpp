#pragma once

#include <cstdint>
#include <cstddef>
#include <limits>
#include <span>
#include <string_view>
#include <utility>

namespace nppo {

// Counter-based generator: output i of a stream is a pure function of
// (key, i). Streams are split by hashing a name or index into the key, so
// per-purpose streams (data, sampling, init, ...) never interact and a
// stream can be recreated from its key alone.
//
// Normal draws use Box-Muller with libm log/cos/sin, so results are
// bit-identical for a given build but are not promised across libm versions.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) noexcept;

  // Derived, independent streams.
  Rng split(std::string_view name) const noexcept;
  Rng split(std::uint64_t index) const noexcept;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  std::uint64_t operator()() noexcept { return next_u64(); }
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;
  double normal() noexcept;
  void fill_normal(std::span<double> out) noexcept;

  // Fisher-Yates over the index range.
  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  Rng(std::uint64_t key, std::uint64_t counter) noexcept : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix64(std::uint64_t x) noexcept;
std::uint64_t hash_name(std::string_view name) noexcept;

}  // namespace nppo
