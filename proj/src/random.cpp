#include "dpf/random.hpp"

#include <cmath>

namespace dpf {

std::uint64_t Rng::mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Rng Rng::split(std::string_view label) const {
  // FNV-1a over the label, folded into the parent key.
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return Rng(mix(key_ ^ h));
}

Rng Rng::split(std::uint64_t label) const { return Rng(mix(key_ ^ mix(label + kGolden))); }

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Index Rng::uniform_index(Index n) {
  return static_cast<Index>(uniform() * static_cast<double>(n)) % n;
}

Array Rng::normals(Index n) {
  Array a(n);
  for (Index i = 0; i < n; ++i) a[i] = normal();
  return a;
}

Array Rng::uniforms(Index n) {
  Array a(n);
  for (Index i = 0; i < n; ++i) a[i] = uniform();
  return a;
}

}  // namespace dpf
