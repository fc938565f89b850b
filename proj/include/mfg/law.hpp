#pragma once

#include <vector>

#include "mfg/types.hpp"

namespace mfg {

/// Affine closed-loop coefficients at one instant:
///   u0 = -(major_x x0 + major_z zbar + major_offset)
///   ui = -(minor_x[k] xi + minor_x0[k] x0 + minor_z[k] zbar + minor_offset[k])  for type k+1
///   d zbar / dt = Abar zbar + Gbar x0 + mbar
struct LawSnapshot {
  Matrix major_x, major_z;
  Vector major_offset;
  std::vector<Matrix> minor_x, minor_x0, minor_z;
  std::vector<Vector> minor_offset;
  Matrix Abar, Gbar;
  Vector mbar;
};

/// Node-sampled feedback law, linearly interpolated in time.
class ClosedLoopLaw {
 public:
  ClosedLoopLaw(TimeGrid grid, std::vector<LawSnapshot> nodes);

  const TimeGrid& grid() const { return grid_; }
  const LawSnapshot& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  int types() const { return static_cast<int>(nodes_.front().minor_x.size()); }

  /// Throws TimeOutOfRange outside [0, T].
  LawSnapshot at(double t) const;

  Vector major_control(const LawSnapshot& s, const Vector& x0, const Vector& zbar) const;
  /// kappa is 1-based.
  Vector minor_control(const LawSnapshot& s, int kappa, const Vector& xi, const Vector& x0,
                       const Vector& zbar) const;

 private:
  TimeGrid grid_;
  std::vector<LawSnapshot> nodes_;
};

/// One RK4 step of the reference mean field from t to t + h, with the major
/// state taken linear between x0_start and x0_end across the step.
Vector advance_mean_field(const ClosedLoopLaw& law, double t, double h, const Vector& zbar, const Vector& x0_start,
                          const Vector& x0_end);

/// Same step with the three snapshots (t, t + h/2, t + h) supplied.
Vector advance_mean_field(const LawSnapshot& a, const LawSnapshot& mid, const LawSnapshot& b, double h,
                          const Vector& zbar, const Vector& x0_start, const Vector& x0_end);

}  // namespace mfg
