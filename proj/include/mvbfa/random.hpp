#pragma once

#include <cstdint>
#include <initializer_list>

namespace mvbfa {

// splitmix64 finalizer.
constexpr std::uint64_t mixBits(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and a job key, so that
// job results do not depend on scheduling or enumeration order.
constexpr std::uint64_t deriveSeed(std::uint64_t base,
                                   std::initializer_list<std::uint64_t> key) {
  std::uint64_t h = mixBits(base);
  for (auto k : key) h = mixBits(h ^ mixBits(k + 0x632be59bd9b4e019ULL));
  return h;
}

}  // namespace mvbfa
