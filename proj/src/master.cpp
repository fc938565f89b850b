#include "mfg/master.hpp"

#include <cmath>

#include "mfg/linalg.hpp"
#include "mfg/ode.hpp"
#include "mfg/path_compare.hpp"

namespace mfg {

namespace {

// Index ranges of the partitioned kernels: Pd0 = (x0 | zbar), Pd_k = (z | x0 | zbar).
struct Blocks {
  int n, K;
  Eigen::Index x0_0() const { return 0; }
  Eigen::Index z_0() const { return n; }
  Eigen::Index z_k() const { return 0; }
  Eigen::Index x0_k() const { return n; }
  Eigen::Index zbar_k() const { return 2 * n; }
  Eigen::Index nK() const { return n * K; }
};

// Mean-field coefficients seen through the minor kernels, assembled block by
// block with the selector e_l for type l.
void mean_field_blocks(const ValidatedModel& model, const std::vector<Matrix>& Pd, Matrix& Abar, Matrix& Gbar) {
  const ModelParams& p = model.params();
  const Blocks b{p.n, p.K};
  const int n = p.n;
  const Matrix BRB = p.B * model.Rinv() * p.B.transpose();
  Abar = Matrix::Zero(b.nK(), b.nK());
  Gbar = Matrix::Zero(b.nK(), n);
  for (int l = 1; l <= p.K; ++l) {
    const Matrix& P = Pd[static_cast<std::size_t>(l - 1)];
    const Matrix P11 = P.block(b.z_k(), b.z_k(), n, n);
    const Matrix P12 = P.block(b.z_k(), b.x0_k(), n, n);
    const Matrix P13 = P.block(b.z_k(), b.zbar_k(), n, b.nK());
    const Matrix el = block_selector(l, p.K, n);
    Abar.middleRows((l - 1) * n, n) = (p.A[static_cast<std::size_t>(l - 1)] - BRB * P11) * el +
                                      model.lifted().Fpi - BRB * P13;
    Gbar.middleRows((l - 1) * n, n) = p.G - BRB * P12;
  }
}

Vector mbar_blocks(const ValidatedModel& model, const std::vector<Vector>& sd) {
  const ModelParams& p = model.params();
  const Matrix BRB = p.B * model.Rinv() * p.B.transpose();
  Vector m(p.n * p.K);
  for (int l = 0; l < p.K; ++l) m.segment(l * p.n, p.n) = -BRB * sd[static_cast<std::size_t>(l)].head(p.n);
  return m;
}

// [[A0, F0^pi], [Gbar, Abar]]
Matrix major_drift(const ModelParams& p, const PiLifted& l, const Matrix& Abar, const Matrix& Gbar) {
  const int n = p.n;
  const int nK = n * p.K;
  Matrix H(n + nK, n + nK);
  H.topLeftCorner(n, n) = p.A0;
  H.topRightCorner(n, nK) = l.F0pi;
  H.bottomLeftCorner(nK, n) = Gbar;
  H.bottomRightCorner(nK, nK) = Abar;
  return H;
}

// 3 x 3 block drift of (z, x0, zbar) for a type-k minor player.
Matrix minor_drift(const ValidatedModel& model, int k, const Matrix& Pd0, const Matrix& Abar, const Matrix& Gbar) {
  const ModelParams& p = model.params();
  const PiLifted& l = model.lifted();
  const int n = p.n;
  const int nK = n * p.K;
  const Matrix BRB0 = p.B0 * model.R0inv() * p.B0.transpose();
  Matrix A = Matrix::Zero(2 * n + nK, 2 * n + nK);
  A.block(0, 0, n, n) = p.A[static_cast<std::size_t>(k - 1)];
  A.block(0, n, n, n) = p.G;
  A.block(0, 2 * n, n, nK) = l.Fpi;
  A.block(n, n, n, n) = p.A0 - BRB0 * Pd0.topLeftCorner(n, n);
  A.block(n, 2 * n, n, nK) = l.F0pi - BRB0 * Pd0.topRightCorner(n, nK);
  A.block(2 * n, n, nK, n) = Gbar;
  A.block(2 * n, 2 * n, nK, nK) = Abar;
  return A;
}

struct Kernels {
  Matrix Pd0;
  std::vector<Matrix> Pd;
};

Kernels unpack_kernels(const StackedLayout& L, const Vector& y, int K) {
  Kernels k;
  k.Pd0 = L.block(y, 0);
  for (int i = 1; i <= K; ++i) k.Pd.emplace_back(L.block(y, i));
  return k;
}

// theta_{0,2} and theta_{k,2}: the xi-free parts of the master equations'
// right-hand sides for quadratic value functions.
double theta0_const(const ValidatedModel& model, const Matrix& Pd0, const Vector& sd0, const Vector& mbar) {
  const ModelParams& p = model.params();
  const int n = p.n;
  const Vector s01 = sd0.head(n);
  const Vector s02 = sd0.tail(n * p.K);
  return -s01.dot(model.M0() * s01) + p.eta0.dot(p.Q0 * p.eta0) +
         (Pd0.topLeftCorner(n, n) * p.D0 * p.D0.transpose()).trace() + 2.0 * s02.dot(mbar);
}

double thetak_const(const ValidatedModel& model, const Matrix& Pdk, const Vector& sdk, const Vector& sd0,
                    const Vector& mbar) {
  const ModelParams& p = model.params();
  const int n = p.n;
  const Vector sk1 = sdk.head(n);
  const Vector sk2 = sdk.segment(n, n);
  const Vector sk3 = sdk.tail(n * p.K);
  const Vector s01 = sd0.head(n);
  return -2.0 * sk2.dot(model.M0() * s01) + (Pdk.block(n, n, n, n) * p.D0 * p.D0.transpose()).trace() +
         (Pdk.topLeftCorner(n, n) * p.D * p.D.transpose()).trace() - sk1.dot(model.M() * sk1) +
         p.eta.dot(p.Q * p.eta) + 2.0 * sk3.dot(mbar);
}

}  // namespace

OrBlowUp<MasterSolution> solve_master(const ValidatedModel& model, const TimeGrid& grid) {
  const ModelParams& p = model.params();
  const PiLifted& l = model.lifted();
  const int n = p.n;
  const int K = p.K;
  const int nK = n * K;
  const double rho = p.rho;
  const Matrix BB0 = l.B0big * model.R0inv() * l.B0big.transpose();
  const Matrix BB = l.Bbig * model.Rinv() * l.Bbig.transpose();

  StackedLayout L;
  L.add(n + nK, n + nK, true);
  for (int k = 0; k < K; ++k) L.add(2 * n + nK, 2 * n + nK, true);

  auto kernel_field = [&](double, const Vector& y) -> Vector {
    const Kernels P = unpack_kernels(L, y, K);
    Matrix Abar, Gbar;
    mean_field_blocks(model, P.Pd, Abar, Gbar);
    const Matrix H0 = major_drift(p, l, Abar, Gbar);
    Vector dy(L.size());
    Matrix rhs0 = P.Pd0 * H0 + H0.transpose() * P.Pd0 - P.Pd0 * BB0 * P.Pd0 + l.Q0pi;
    L.block(dy, 0) = symmetric_part(Matrix(rho * P.Pd0 - rhs0));
    for (int k = 1; k <= K; ++k) {
      const Matrix& Pk = P.Pd[static_cast<std::size_t>(k - 1)];
      const Matrix Ak = minor_drift(model, k, P.Pd0, Abar, Gbar);
      Matrix rhs = Pk * Ak + Ak.transpose() * Pk - Pk * BB * Pk + l.Qpi;
      L.block(dy, k) = symmetric_part(Matrix(rho * Pk - rhs));
    }
    return dy;
  };

  Vector terminal = L.zeros();
  L.block(terminal, 0) = l.Q0fpi;
  for (int k = 1; k <= K; ++k) L.block(terminal, k) = l.Qfpi;
  OdeOptions<Vector> opts;
  opts.phase = "riccati";
  opts.project = [&L](Vector& v) { L.symmetrize(v); };
  auto kernels = integrate_backward(kernel_field, terminal, grid, opts);
  if (blew_up(kernels)) return blow_up(kernels);
  const Path<Vector>& kpath = solved(kernels);

  StackedLayout S;
  S.add(n + nK, 1);
  for (int k = 0; k < K; ++k) S.add(2 * n + nK, 1);

  auto offsets_at = [&](const Vector& y, Vector& sd0, std::vector<Vector>& sd) {
    sd0 = S.block(y, 0);
    sd.clear();
    for (int k = 1; k <= K; ++k) sd.emplace_back(S.block(y, k));
  };

  auto offset_field = [&](double t, const Vector& y) -> Vector {
    const Kernels P = unpack_kernels(L, kpath.hermite(t), K);
    Vector sd0;
    std::vector<Vector> sd;
    offsets_at(y, sd0, sd);
    Matrix Abar, Gbar;
    mean_field_blocks(model, P.Pd, Abar, Gbar);
    const Vector mbar = mbar_blocks(model, sd);
    const Matrix H0 = major_drift(p, l, Abar, Gbar);
    const Vector u0 = p.B0 * model.R0inv() * p.B0.transpose() * sd0.head(n);

    Vector dy(S.size());
    const Vector rhs0 = H0.transpose() * sd0 - P.Pd0.leftCols(n) * u0 + P.Pd0.rightCols(nK) * mbar - l.eta0pi;
    S.block(dy, 0) = rho * sd0 - rhs0;
    for (int k = 1; k <= K; ++k) {
      const Matrix& Pk = P.Pd[static_cast<std::size_t>(k - 1)];
      const Vector& sk = sd[static_cast<std::size_t>(k - 1)];
      const Matrix Ak = minor_drift(model, k, P.Pd0, Abar, Gbar);
      const Vector rhs = (Ak.transpose() - Pk * BB) * sk - Pk.middleCols(n, n) * u0 +
                         Pk.rightCols(nK) * mbar - l.etapi;
      S.block(dy, k) = rho * sk - rhs;
    }
    return dy;
  };

  Vector sterm = S.zeros();
  S.block(sterm, 0) = -l.eta0fpi;
  for (int k = 1; k <= K; ++k) S.block(sterm, k) = -l.etafpi;
  OdeOptions<Vector> sopts;
  sopts.phase = "offset";
  auto offsets = integrate_backward(offset_field, sterm, grid, sopts);
  if (blew_up(offsets)) return blow_up(offsets);
  const Path<Vector>& spath = solved(offsets);

  // Scalar terms: rho r - dr/dt = theta_2, one per player.
  auto scalar_field = [&](double t, const Vector& r) -> Vector {
    const Kernels P = unpack_kernels(L, kpath.hermite(t), K);
    Vector sd0;
    std::vector<Vector> sd;
    offsets_at(spath.hermite(t), sd0, sd);
    const Vector mbar = mbar_blocks(model, sd);
    Vector dr(K + 1);
    dr(0) = rho * r(0) - theta0_const(model, P.Pd0, sd0, mbar);
    for (int k = 1; k <= K; ++k)
      dr(k) = rho * r(k) -
              thetak_const(model, P.Pd[static_cast<std::size_t>(k - 1)], sd[static_cast<std::size_t>(k - 1)], sd0, mbar);
    return dr;
  };
  Vector rterm(K + 1);
  rterm(0) = p.eta0f.dot(p.Q0f * p.eta0f);
  rterm.tail(K).setConstant(p.etaf.dot(p.Qf * p.etaf));
  OdeOptions<Vector> ropts;
  ropts.phase = "scalar";
  auto scalars = integrate_backward(scalar_field, rterm, grid, ropts);
  if (blew_up(scalars)) return blow_up(scalars);
  const Path<Vector>& rpath = solved(scalars);

  MasterSolution sol;
  sol.grid = grid;
  sol.n = n;
  sol.K = K;
  sol.Pd0 = unstack(kpath, L, 0);
  sol.sd0 = unstack_vector(spath, S, 0);
  for (int k = 1; k <= K; ++k) {
    sol.Pd.push_back(unstack(kpath, L, k));
    sol.sd.push_back(unstack_vector(spath, S, k));
  }
  auto scalar_path = [&](int idx) {
    ScalarPath out;
    out.grid = grid;
    for (const auto& v : rpath.values) out.values.push_back(v(idx));
    for (const auto& v : rpath.slopes) out.slopes.push_back(v(idx));
    return out;
  };
  sol.rd0 = scalar_path(0);
  for (int k = 1; k <= K; ++k) sol.rd.push_back(scalar_path(k));

  sol.Abar.grid = sol.Gbar.grid = grid;
  sol.mbar.grid = grid;
  for (int i = 0; i < grid.size(); ++i) {
    std::vector<Matrix> Pd;
    std::vector<Vector> sd;
    for (int k = 0; k < K; ++k) {
      Pd.push_back(sol.Pd[static_cast<std::size_t>(k)][i]);
      sd.push_back(sol.sd[static_cast<std::size_t>(k)][i]);
    }
    Matrix Abar, Gbar;
    mean_field_blocks(model, Pd, Abar, Gbar);
    sol.Abar.values.push_back(std::move(Abar));
    sol.Gbar.values.push_back(std::move(Gbar));
    sol.mbar.values.push_back(mbar_blocks(model, sd));
  }
  return sol;
}

double ResidualValue::relative() const { return std::abs(residual) / (1.0 + std::abs(value)); }

namespace {

// Value and first-derivative weights of the Lagrange polynomial through up
// to five consecutive nodes around t.
struct Stencil {
  int first = 0;
  std::vector<double> w;
  std::vector<double> dw;
};

Stencil lagrange_stencil(const TimeGrid& g, double t) {
  const int count = std::min(5, g.size());
  const auto [i, theta] = g.locate(t);
  (void)theta;
  int first = i - (count - 1) / 2;
  first = std::clamp(first, 0, g.size() - count);
  Stencil s;
  s.first = first;
  s.w.assign(static_cast<std::size_t>(count), 0.0);
  s.dw.assign(static_cast<std::size_t>(count), 0.0);
  std::vector<double> tau(static_cast<std::size_t>(count));
  for (int j = 0; j < count; ++j) tau[static_cast<std::size_t>(j)] = g.node(first + j);
  for (int j = 0; j < count; ++j) {
    const double tj = tau[static_cast<std::size_t>(j)];
    double w = 1.0;
    for (int m = 0; m < count; ++m)
      if (m != j) w *= (t - tau[static_cast<std::size_t>(m)]) / (tj - tau[static_cast<std::size_t>(m)]);
    s.w[static_cast<std::size_t>(j)] = w;
    double dw = 0.0;
    for (int q = 0; q < count; ++q) {
      if (q == j) continue;
      double term = 1.0 / (tj - tau[static_cast<std::size_t>(q)]);
      for (int m = 0; m < count; ++m)
        if (m != j && m != q) term *= (t - tau[static_cast<std::size_t>(m)]) / (tj - tau[static_cast<std::size_t>(m)]);
      dw += term;
    }
    s.dw[static_cast<std::size_t>(j)] = dw;
  }
  return s;
}

template <typename Value>
Value blend(const Path<Value>& path, const Stencil& s, const std::vector<double>& w) {
  Value out = w[0] * path[s.first];
  for (std::size_t j = 1; j < w.size(); ++j) out = out + w[j] * path[s.first + static_cast<int>(j)];
  return out;
}

double quadratic(const Matrix& P, const Vector& s, double r, const Vector& xi) {
  return xi.dot(P * xi) + 2.0 * s.dot(xi) + r;
}

}  // namespace

ResidualValue master_residual(const ValidatedModel& model, const MasterSolution& sol, const ResidualSample& smp) {
  const ModelParams& p = model.params();
  const PiLifted& l = model.lifted();
  const int n = p.n;
  const int K = p.K;
  const int nK = n * K;
  if (smp.kappa < 0 || smp.kappa > K)
    throw Error(ErrorKind::IndexOutOfRange, "player index " + std::to_string(smp.kappa) + " outside 0.." +
                                                std::to_string(K));
  if (smp.x0.size() != n || smp.zbar.size() != nK || (smp.kappa > 0 && smp.z.size() != n))
    throw Error(ErrorKind::DimensionMismatch, "residual sample has the wrong dimension");

  const Stencil st = lagrange_stencil(sol.grid, smp.t);
  const Vector& x0 = smp.x0;
  const Vector& zbar = smp.zbar;

  const Matrix P0 = blend(sol.Pd0, st, st.w);
  const Vector s0 = blend(sol.sd0, st, st.w);
  std::vector<Matrix> Pl;
  std::vector<Vector> sl;
  for (int k = 0; k < K; ++k) {
    Pl.push_back(blend(sol.Pd[static_cast<std::size_t>(k)], st, st.w));
    sl.push_back(blend(sol.sd[static_cast<std::size_t>(k)], st, st.w));
  }

  // Gradients of the major value function and the optimal major control.
  const Vector d_x0_V0 = 2.0 * (P0.topLeftCorner(n, n) * x0 + P0.topRightCorner(n, nK) * zbar + s0.head(n));
  const Vector u0 = -0.5 * model.R0inv() * p.B0.transpose() * d_x0_V0;
  const Vector major_drift = p.A0 * x0 + p.B0 * u0 + l.F0pi * zbar;

  // Mean-field drift of type l evaluated at y = zbar_l, which is all the
  // measure terms see for quadratic value functions.
  Vector mf_drift(nK);
  for (int k = 0; k < K; ++k) {
    const Vector y = zbar.segment(k * n, n);
    const Matrix& P = Pl[static_cast<std::size_t>(k)];
    const Vector d_y_Vl = 2.0 * (P.topLeftCorner(n, n) * y + P.block(0, n, n, n) * x0 +
                                 P.block(0, 2 * n, n, nK) * zbar + sl[static_cast<std::size_t>(k)].head(n));
    const Vector ul = -0.5 * model.Rinv() * p.B.transpose() * d_y_Vl;
    mf_drift.segment(k * n, n) = p.A[static_cast<std::size_t>(k)] * y + p.B * ul + p.G * x0 + l.Fpi * zbar;
  }

  ResidualValue out;
  double V = 0.0, dVdt = 0.0, rhs = 0.0;
  if (smp.kappa == 0) {
    Vector xi(n + nK);
    xi << x0, zbar;
    for (std::size_t j = 0; j < st.w.size(); ++j) {
      const int i = st.first + static_cast<int>(j);
      const double v = quadratic(sol.Pd0[i], sol.sd0[i], sol.rd0[i], xi);
      V += st.w[j] * v;
      dVdt += st.dw[j] * v;
    }
    const Vector gap = x0 - l.Gamma0pi * zbar - p.eta0;
    // d/dy_l of d/dmu_l V0, stacked over l.
    const Vector d_mu_V0 = 2.0 * (P0.bottomLeftCorner(nK, n) * x0 + P0.bottomRightCorner(nK, nK) * zbar + s0.tail(nK));
    rhs = d_x0_V0.dot(major_drift) + gap.dot(p.Q0 * gap) + u0.dot(p.R0 * u0) +
          (P0.topLeftCorner(n, n) * p.D0 * p.D0.transpose()).trace() + d_mu_V0.dot(mf_drift);
  } else {
    const auto k = static_cast<std::size_t>(smp.kappa - 1);
    const Vector& z = smp.z;
    const Matrix& P = Pl[k];
    const Vector& s = sl[k];
    Vector xi(2 * n + nK);
    xi << z, x0, zbar;
    for (std::size_t j = 0; j < st.w.size(); ++j) {
      const int i = st.first + static_cast<int>(j);
      const double v = quadratic(sol.Pd[k][i], sol.sd[k][i], sol.rd[k][i], xi);
      V += st.w[j] * v;
      dVdt += st.dw[j] * v;
    }
    const Vector d_z_Vk = 2.0 * (P.topRows(n) * xi + s.head(n));
    const Vector d_x0_Vk = 2.0 * (P.middleRows(n, n) * xi + s.segment(n, n));
    const Vector d_mu_Vk = 2.0 * (P.bottomRows(nK) * xi + s.tail(nK));
    const Vector uk = -0.5 * model.Rinv() * p.B.transpose() * d_z_Vk;
    const Vector gap = z - p.Gamma1 * x0 - l.Gamma2pi * zbar - p.eta;
    rhs = d_x0_Vk.dot(major_drift) + (P.block(n, n, n, n) * p.D0 * p.D0.transpose()).trace() +
          d_z_Vk.dot(p.A[k] * z + p.B * uk + p.G * x0 + l.Fpi * zbar) + gap.dot(p.Q * gap) + uk.dot(p.R * uk) +
          (P.topLeftCorner(n, n) * p.D * p.D.transpose()).trace() + d_mu_Vk.dot(mf_drift);
  }
  out.value = V;
  out.residual = (-dVdt + p.rho * V) - rhs;
  return out;
}

ClosedLoopLaw master_law(const MasterSolution& sol, const ValidatedModel& model) {
  const int n = sol.n;
  const int nK = n * sol.K;
  const Matrix g0 = model.R0inv() * model.params().B0.transpose();
  const Matrix g = model.Rinv() * model.params().B.transpose();
  std::vector<LawSnapshot> nodes;
  for (int i = 0; i < sol.grid.size(); ++i) {
    LawSnapshot s;
    const Matrix& P0 = sol.Pd0[i];
    s.major_x = g0 * P0.block(0, 0, n, n);
    s.major_z = g0 * P0.block(0, n, n, nK);
    s.major_offset = g0 * sol.sd0[i].segment(0, n);
    for (int k = 0; k < sol.K; ++k) {
      const Matrix& P = sol.Pd[static_cast<std::size_t>(k)][i];
      s.minor_x.push_back(g * P.block(0, 0, n, n));
      s.minor_x0.push_back(g * P.block(0, n, n, n));
      s.minor_z.push_back(g * P.block(0, 2 * n, n, nK));
      s.minor_offset.push_back(g * sol.sd[static_cast<std::size_t>(k)][i].segment(0, n));
    }
    s.Abar = sol.Abar[i];
    s.Gbar = sol.Gbar[i];
    s.mbar = sol.mbar[i];
    nodes.push_back(std::move(s));
  }
  return ClosedLoopLaw(sol.grid, std::move(nodes));
}

ControlPair master_feedback(const MasterSolution& sol, const ValidatedModel& model, double t, const Vector& x0,
                            const Vector& z, const Vector& zbar, int kappa) {
  const int n = sol.n;
  const int nK = n * sol.K;
  if (kappa < 1 || kappa > sol.K)
    throw Error(ErrorKind::IndexOutOfRange, "type " + std::to_string(kappa) + " outside 1.." + std::to_string(sol.K));
  if (x0.size() != n || z.size() != n || zbar.size() != nK)
    throw Error(ErrorKind::DimensionMismatch, "feedback state has the wrong dimension");
  const auto k = static_cast<std::size_t>(kappa - 1);
  const Matrix P0 = sol.Pd0.at(t);
  const Vector s0 = sol.sd0.at(t);
  const Matrix P = sol.Pd[k].at(t);
  const Vector s = sol.sd[k].at(t);
  const ModelParams& p = model.params();
  ControlPair c;
  c.u0 = -model.R0inv() * p.B0.transpose() *
         (P0.block(0, 0, n, n) * x0 + P0.block(0, n, n, nK) * zbar + s0.head(n));
  c.ui = -model.Rinv() * p.B.transpose() *
         (P.block(0, 0, n, n) * z + P.block(0, n, n, n) * x0 + P.block(0, 2 * n, n, nK) * zbar + s.head(n));
  return c;
}

namespace {

// Stride pair (a, b) such that node i*a of one grid and i*b of the other
// coincide for i = 0..coarse steps.
}  // namespace

DiffReport compare_nce_master(const NceSolution& nce, const MasterSolution& master, double tolerance) {
  if (nce.n != master.n || nce.K != master.K)
    throw Error(ErrorKind::DimensionMismatch, "solutions belong to models of different shape");
  const SharedNodes sn = shared_nodes(nce.grid, master.grid);
  DiffReport rep;
  rep.tolerance = tolerance;
  rep.entries.push_back({"P0", max_l1(nce.P0, master.Pd0, sn)});
  for (int k = 0; k < nce.K; ++k)
    rep.entries.push_back({"P" + std::to_string(k + 1),
                           max_l1(nce.P[static_cast<std::size_t>(k)], master.Pd[static_cast<std::size_t>(k)], sn)});
  rep.entries.push_back({"s0", max_l1(nce.s0, master.sd0, sn)});
  for (int k = 0; k < nce.K; ++k)
    rep.entries.push_back({"s" + std::to_string(k + 1),
                           max_l1(nce.s[static_cast<std::size_t>(k)], master.sd[static_cast<std::size_t>(k)], sn)});
  rep.entries.push_back({"Abar", max_l1(nce.Abar, master.Abar, sn)});
  rep.entries.push_back({"Gbar", max_l1(nce.Gbar, master.Gbar, sn)});
  rep.entries.push_back({"mbar", max_l1(nce.mbar, master.mbar, sn)});
  rep.pass = rep.max_diff() <= tolerance;
  return rep;
}

}  // namespace mfg
