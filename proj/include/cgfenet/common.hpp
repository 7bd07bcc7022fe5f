#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace cgfenet {

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

/// Dense row-major matrix, the workhorse container for node/feature arrays.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Matf = Mat<float>;
using Matd = Mat<double>;
using Vec3 = Eigen::Vector3d;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

/// All randomness flows through explicitly seeded engines; no wall-clock seeds.
using Rng = std::mt19937_64;

/// Uniform double in [0,1). Implemented from raw engine output so streams are
/// stable across standard-library versions.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [lo, hi] via rejection-free modulo (ranges here are tiny
/// relative to 2^64, bias is negligible and determinism is what matters).
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo + 1);
  return lo + static_cast<std::int64_t>(rng() % span);
}

/// Standard normal via Box-Muller on the stable uniform stream.
inline double normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/// Derive an independent child seed from a master seed and a stream tag.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  // splitmix64 step over the combined state
  std::uint64_t z = master + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

template <typename T>
inline std::vector<T> linspace(T lo, T hi, int n) {
  std::vector<T> out(static_cast<std::size_t>(n));
  if (n == 1) {
    out[0] = lo;
    return out;
  }
  for (int i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = lo + (hi - lo) * T(i) / T(n - 1);
  return out;
}

}  // namespace cgfenet
