#pragma once

#include <cstdint>

#include "fogd/block_vector.hpp"
#include "fogd/error.hpp"

namespace fogd {

/// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

enum class DrawKind : std::uint64_t { primal = 1, dual = 2 };

/**
 * Counter-based uniform draw in [lo, hi): a pure function of
 * (seed, kind, node, component), so the value of an entry never depends on
 * the order in which entries are generated.
 */
inline double counter_uniform(std::uint64_t seed, DrawKind kind, std::uint64_t node,
                              std::uint64_t component, double lo, double hi) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ static_cast<std::uint64_t>(kind));
  h = mix64(h ^ node);
  h = mix64(h ^ component);
  double unit = static_cast<double>(h >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * unit;
}

inline NodeBlockVector uniform_blocks(const LayoutPtr& layout, std::uint64_t seed,
                                      DrawKind kind, double lo, double hi) {
  if (!(lo < hi)) {
    throw InputError{"uniform initialization needs lo < hi"};
  }
  NodeBlockVector v{layout};
  for (std::size_t p = 0; p < layout->block_count(); ++p) {
    NodeId i = layout->nodes()[p];
    auto blk = v.block(i);
    for (Eigen::Index c = 0; c < blk.size(); ++c) {
      blk[c] = counter_uniform(seed, kind, static_cast<std::uint64_t>(i),
                               static_cast<std::uint64_t>(c), lo, hi);
    }
  }
  return v;
}

}  // namespace fogd
