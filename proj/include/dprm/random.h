#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace dprm {

// Portable draws on top of mt19937_64 (the std distributions are
// implementation-defined, so byte-level reproducibility avoids them).
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace dprm
