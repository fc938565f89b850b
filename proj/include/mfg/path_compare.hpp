#pragma once

#include <algorithm>
#include <string>

#include "mfg/error.hpp"
#include "mfg/linalg.hpp"
#include "mfg/types.hpp"

namespace mfg {

/// Node correspondence between two nested grids: node i of the coarser grid
/// is node i * stride of each path's own grid.
struct SharedNodes {
  int stride_a = 1;
  int stride_b = 1;
  int count = 0;
};

inline SharedNodes shared_nodes(const TimeGrid& a, const TimeGrid& b) {
  if (auto r = a.refinement_of(b)) return {*r, 1, b.size()};
  if (auto r = b.refinement_of(a)) return {1, *r, a.size()};
  throw Error(ErrorKind::GridMismatch, "grids with M = " + std::to_string(a.steps()) + " and M = " +
                                           std::to_string(b.steps()) + " share no common refinement");
}

template <typename Value>
double max_l1(const Path<Value>& a, const Path<Value>& b, const SharedNodes& sn) {
  double m = 0.0;
  for (int i = 0; i < sn.count; ++i) m = std::max(m, l1_norm(a[i * sn.stride_a] - b[i * sn.stride_b]));
  return m;
}

}  // namespace mfg
