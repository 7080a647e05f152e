#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvmcl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Precondition / argument violations.
class InvalidArgument : public Error {
public:
  using Error::Error;
};

using Rng = std::mt19937_64;

/// Stateless 64-bit mixer (splitmix64 finalizer) used to derive independent
/// seeds for sub-streams, e.g. one per particle per filter step.
constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0) noexcept {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(mix_seed(seed, stream));
}

/// N(0, stddev) draw that is exactly zero for stddev == 0.
inline double gaussian(Rng& rng, double stddev) {
  if (stddev == 0.0) {
    return 0.0;
  }
  return std::normal_distribution<double>(0.0, stddev)(rng);
}

/// Dense 3-D array laid out row-major with interleaved channels
/// (index = (row * cols + col) * channels + channel).
struct Tensor3 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t channels = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(std::size_t r, std::size_t c, std::size_t ch, double fill = 0.0)
      : rows(r), cols(c), channels(ch), data(r * c * ch, fill) {}

  [[nodiscard]] std::size_t index(std::size_t r, std::size_t c, std::size_t ch) const noexcept {
    return (r * cols + c) * channels + ch;
  }
  double& at(std::size_t r, std::size_t c, std::size_t ch) noexcept { return data[index(r, c, ch)]; }
  [[nodiscard]] double at(std::size_t r, std::size_t c, std::size_t ch) const noexcept {
    return data[index(r, c, ch)];
  }
  [[nodiscard]] std::size_t size() const noexcept { return data.size(); }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;
};

}  // namespace cvmcl
