#include "mfg/law.hpp"

namespace mfg {

namespace {

Matrix lerp(const Matrix& a, const Matrix& b, double theta) { return a + theta * (b - a); }
Vector lerp(const Vector& a, const Vector& b, double theta) { return a + theta * (b - a); }

}  // namespace

ClosedLoopLaw::ClosedLoopLaw(TimeGrid grid, std::vector<LawSnapshot> nodes)
    : grid_(grid), nodes_(std::move(nodes)) {
  if (static_cast<int>(nodes_.size()) != grid_.size())
    throw Error(ErrorKind::GridMismatch, "law has " + std::to_string(nodes_.size()) + " snapshots for " +
                                             std::to_string(grid_.size()) + " grid nodes");
}

LawSnapshot ClosedLoopLaw::at(double t) const {
  const auto [i, theta] = grid_.locate(t);
  const LawSnapshot& a = nodes_[static_cast<std::size_t>(i)];
  if (theta == 0.0) return a;
  const LawSnapshot& b = nodes_[static_cast<std::size_t>(i + 1)];
  LawSnapshot s;
  s.major_x = lerp(a.major_x, b.major_x, theta);
  s.major_z = lerp(a.major_z, b.major_z, theta);
  s.major_offset = lerp(a.major_offset, b.major_offset, theta);
  const std::size_t K = a.minor_x.size();
  s.minor_x.resize(K);
  s.minor_x0.resize(K);
  s.minor_z.resize(K);
  s.minor_offset.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    s.minor_x[k] = lerp(a.minor_x[k], b.minor_x[k], theta);
    s.minor_x0[k] = lerp(a.minor_x0[k], b.minor_x0[k], theta);
    s.minor_z[k] = lerp(a.minor_z[k], b.minor_z[k], theta);
    s.minor_offset[k] = lerp(a.minor_offset[k], b.minor_offset[k], theta);
  }
  s.Abar = lerp(a.Abar, b.Abar, theta);
  s.Gbar = lerp(a.Gbar, b.Gbar, theta);
  s.mbar = lerp(a.mbar, b.mbar, theta);
  return s;
}

Vector ClosedLoopLaw::major_control(const LawSnapshot& s, const Vector& x0, const Vector& zbar) const {
  return -(s.major_x * x0 + s.major_z * zbar + s.major_offset);
}

Vector ClosedLoopLaw::minor_control(const LawSnapshot& s, int kappa, const Vector& xi, const Vector& x0,
                                    const Vector& zbar) const {
  if (kappa < 1 || kappa > types())
    throw Error(ErrorKind::IndexOutOfRange, "type " + std::to_string(kappa) + " outside 1.." +
                                                std::to_string(types()));
  const auto k = static_cast<std::size_t>(kappa - 1);
  return -(s.minor_x[k] * xi + s.minor_x0[k] * x0 + s.minor_z[k] * zbar + s.minor_offset[k]);
}

Vector advance_mean_field(const LawSnapshot& a, const LawSnapshot& mid, const LawSnapshot& b, double h,
                          const Vector& zbar, const Vector& x0_start, const Vector& x0_end) {
  const Vector x0_mid = 0.5 * (x0_start + x0_end);
  auto f = [](const LawSnapshot& s, const Vector& z, const Vector& x0) -> Vector {
    return s.Abar * z + s.Gbar * x0 + s.mbar;
  };
  const Vector k1 = f(a, zbar, x0_start);
  const Vector k2 = f(mid, zbar + (0.5 * h) * k1, x0_mid);
  const Vector k3 = f(mid, zbar + (0.5 * h) * k2, x0_mid);
  const Vector k4 = f(b, zbar + h * k3, x0_end);
  return zbar + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Vector advance_mean_field(const ClosedLoopLaw& law, double t, double h, const Vector& zbar,
                          const Vector& x0_start, const Vector& x0_end) {
  return advance_mean_field(law.at(t), law.at(t + 0.5 * h), law.at(t + h), h, zbar, x0_start, x0_end);
}

}  // namespace mfg
