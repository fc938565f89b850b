#include "mfg/nce.hpp"

#include "mfg/linalg.hpp"
#include "mfg/ode.hpp"

namespace mfg {

void consistent_mean_field(const ValidatedModel& model, const std::vector<const Matrix*>& P, Matrix& Abar,
                           Matrix& Gbar) {
  const ModelParams& p = model.params();
  const int n = p.n;
  const int K = p.K;
  const Matrix& M = model.M();
  const Matrix& Fpi = model.lifted().Fpi;
  Abar.resize(n * K, n * K);
  Gbar.resize(n * K, n);
  for (int k = 0; k < K; ++k) {
    const Matrix& Pk = *P[static_cast<std::size_t>(k)];
    auto row = Abar.middleRows(k * n, n);
    row = Fpi - M * Pk.block(0, 2 * n, n, n * K);
    row.middleCols(k * n, n) += p.A[static_cast<std::size_t>(k)] - M * Pk.topLeftCorner(n, n);
    Gbar.middleRows(k * n, n) = p.G - M * Pk.block(0, n, n, n);
  }
}

Vector consistent_offset(const ValidatedModel& model, const std::vector<const Vector*>& s) {
  const int n = model.n();
  const int K = model.K();
  Vector mbar(n * K);
  for (int k = 0; k < K; ++k) mbar.segment(k * n, n) = -model.M() * s[static_cast<std::size_t>(k)]->head(n);
  return mbar;
}

namespace {

// The closed-loop drift matrices seen by the major player (A0big) and by a
// minor player of each type (Ak), given the current Riccati iterates.
struct DriftMatrices {
  Matrix A0big;
  std::vector<Matrix> Ak;
};

DriftMatrices drift_matrices(const ValidatedModel& model, const Matrix& P0, const std::vector<const Matrix*>& P) {
  const ModelParams& p = model.params();
  const PiLifted& l = model.lifted();
  const int n = p.n;
  const int K = p.K;
  const int d0 = n * (K + 1);

  Matrix Abar, Gbar;
  consistent_mean_field(model, P, Abar, Gbar);

  DriftMatrices out;
  out.A0big.resize(d0, d0);
  out.A0big << p.A0, l.F0pi, Gbar, Abar;

  Matrix closed = out.A0big;
  closed.topRows(n) -= model.M0() * P0.topRows(n);

  out.Ak.resize(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    Matrix& Ak = out.Ak[static_cast<std::size_t>(k)];
    Ak = Matrix::Zero(d0 + n, d0 + n);
    Ak.topLeftCorner(n, n) = p.A[static_cast<std::size_t>(k)];
    Ak.block(0, n, n, n) = p.G;
    Ak.block(0, 2 * n, n, n * K) = l.Fpi;
    Ak.bottomRightCorner(d0, d0) = closed;
  }
  return out;
}

// rho P - (P A + A^T P - P[:, x] Mx P[x, :] + Q), where x is the leading n-block.
Matrix riccati_rhs(double rho, const Matrix& P, const Matrix& A, const Matrix& Mx, const Matrix& Q) {
  const Eigen::Index n = Mx.rows();
  const Matrix PA = P * A;
  const Matrix top = P.topRows(n);
  Matrix out = rho * P - (PA + PA.transpose() - top.transpose() * Mx * top + Q);
  return symmetric_part(out);
}

struct RiccatiState {
  StackedLayout layout;
  int p0 = 0;
  std::vector<int> pk;
};

RiccatiState riccati_layout(int n, int K) {
  RiccatiState st;
  st.p0 = st.layout.add(n * (K + 1), n * (K + 1), true);
  for (int k = 0; k < K; ++k) st.pk.push_back(st.layout.add(n * (K + 2), n * (K + 2), true));
  return st;
}

}  // namespace

OrBlowUp<NceSolution> solve_nce(const ValidatedModel& model, const TimeGrid& grid) {
  const ModelParams& p = model.params();
  const PiLifted& l = model.lifted();
  const int n = p.n;
  const int K = p.K;
  const double rho = p.rho;

  // Phase 1: stacked Riccati system for (P0, P_1..K).
  const RiccatiState rs = riccati_layout(n, K);
  const StackedLayout& L = rs.layout;

  auto riccati_field = [&](double, const Vector& y) -> Vector {
    const Matrix P0 = L.block(y, rs.p0);
    std::vector<Matrix> Pk;
    std::vector<const Matrix*> Pptr;
    Pk.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) Pk.emplace_back(L.block(y, rs.pk[static_cast<std::size_t>(k)]));
    for (const auto& m : Pk) Pptr.push_back(&m);
    const DriftMatrices dm = drift_matrices(model, P0, Pptr);

    Vector dy(L.size());
    L.block(dy, rs.p0) = riccati_rhs(rho, P0, dm.A0big, model.M0(), l.Q0pi);
    for (int k = 0; k < K; ++k)
      L.block(dy, rs.pk[static_cast<std::size_t>(k)]) =
          riccati_rhs(rho, Pk[static_cast<std::size_t>(k)], dm.Ak[static_cast<std::size_t>(k)], model.M(), l.Qpi);
    return dy;
  };

  Vector terminal = L.zeros();
  L.block(terminal, rs.p0) = l.Q0fpi;
  for (int k = 0; k < K; ++k) L.block(terminal, rs.pk[static_cast<std::size_t>(k)]) = l.Qfpi;

  OdeOptions<Vector> opts;
  opts.phase = "riccati";
  opts.project = [&L](Vector& v) { L.symmetrize(v); };
  auto phase1 = integrate_backward(riccati_field, terminal, grid, opts);
  if (blew_up(phase1)) return blow_up(phase1);
  const Path<Vector>& ppath = solved(phase1);

  // Phase 2: the linear offset system, with the Riccati iterates taken from
  // Phase 1 (cubic Hermite between nodes, which keeps RK4 at fourth order).
  StackedLayout S;
  const int s0_id = S.add(n * (K + 1), 1);
  std::vector<int> sk_id;
  for (int k = 0; k < K; ++k) sk_id.push_back(S.add(n * (K + 2), 1));

  auto offset_field = [&](double t, const Vector& y) -> Vector {
    const Vector pv = ppath.hermite(t);
    const Matrix P0 = L.block(pv, rs.p0);
    std::vector<Matrix> Pk;
    std::vector<const Matrix*> Pptr;
    for (int k = 0; k < K; ++k) Pk.emplace_back(L.block(pv, rs.pk[static_cast<std::size_t>(k)]));
    for (const auto& m : Pk) Pptr.push_back(&m);
    const DriftMatrices dm = drift_matrices(model, P0, Pptr);

    const Vector s0 = S.block(y, s0_id);
    std::vector<Vector> sk;
    std::vector<const Vector*> sptr;
    for (int k = 0; k < K; ++k) sk.emplace_back(S.block(y, sk_id[static_cast<std::size_t>(k)]));
    for (const auto& v : sk) sptr.push_back(&v);
    const Vector mbar = consistent_offset(model, sptr);

    Vector M0vec = Vector::Zero(n * (K + 1));
    M0vec.tail(n * K) = mbar;
    Vector Mvec = Vector::Zero(n * (K + 2));
    Mvec.segment(n, n) = -model.M0() * s0.head(n);
    Mvec.tail(n * K) = mbar;

    Vector dy(S.size());
    S.block(dy, s0_id) = rho * s0 - (dm.A0big.transpose() * s0 - P0.leftCols(n) * (model.M0() * s0.head(n)) +
                                     P0 * M0vec - l.eta0pi);
    for (int k = 0; k < K; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      const Matrix& P = Pk[ku];
      S.block(dy, sk_id[ku]) = rho * sk[ku] - (dm.Ak[ku].transpose() * sk[ku] -
                                               P.leftCols(n) * (model.M() * sk[ku].head(n)) + P * Mvec - l.etapi);
    }
    return dy;
  };

  Vector sterm = S.zeros();
  S.block(sterm, s0_id) = -l.eta0fpi;
  for (int k = 0; k < K; ++k) S.block(sterm, sk_id[static_cast<std::size_t>(k)]) = -l.etafpi;
  OdeOptions<Vector> sopts;
  sopts.phase = "offset";
  auto phase2 = integrate_backward(offset_field, sterm, grid, sopts);
  if (blew_up(phase2)) return blow_up(phase2);
  const Path<Vector>& spath = solved(phase2);

  // Phase 3: unpack and materialize the algebraic variables.
  NceSolution sol;
  sol.grid = grid;
  sol.n = n;
  sol.K = K;
  sol.P0 = unstack(ppath, L, rs.p0);
  for (int k = 0; k < K; ++k) sol.P.push_back(unstack(ppath, L, rs.pk[static_cast<std::size_t>(k)]));
  sol.s0 = unstack_vector(spath, S, s0_id);
  for (int k = 0; k < K; ++k) sol.s.push_back(unstack_vector(spath, S, sk_id[static_cast<std::size_t>(k)]));

  for (MatrixPath* path : {&sol.Abar, &sol.Gbar}) path->grid = grid;
  sol.mbar.grid = grid;
  for (int i = 0; i < grid.size(); ++i) {
    std::vector<const Matrix*> Pptr;
    std::vector<const Vector*> sptr;
    for (int k = 0; k < K; ++k) {
      Pptr.push_back(&sol.P[static_cast<std::size_t>(k)].values[static_cast<std::size_t>(i)]);
      sptr.push_back(&sol.s[static_cast<std::size_t>(k)].values[static_cast<std::size_t>(i)]);
    }
    Matrix Abar, Gbar;
    consistent_mean_field(model, Pptr, Abar, Gbar);
    sol.Abar.values.push_back(std::move(Abar));
    sol.Gbar.values.push_back(std::move(Gbar));
    sol.mbar.values.push_back(consistent_offset(model, sptr));
  }
  return sol;
}

ClosedLoopLaw nce_law(const NceSolution& sol, const ValidatedModel& model) {
  const int n = sol.n;
  const int K = sol.K;
  const Matrix g0 = model.R0inv() * model.params().B0.transpose();
  const Matrix g = model.Rinv() * model.params().B.transpose();
  std::vector<LawSnapshot> nodes;
  nodes.reserve(static_cast<std::size_t>(sol.grid.size()));
  for (int i = 0; i < sol.grid.size(); ++i) {
    const Matrix& P0 = sol.P0[i];
    LawSnapshot s;
    s.major_x = g0 * P0.topLeftCorner(n, n);
    s.major_z = g0 * P0.block(0, n, n, n * K);
    s.major_offset = g0 * sol.s0[i].head(n);
    for (int k = 0; k < K; ++k) {
      const Matrix& Pk = sol.P[static_cast<std::size_t>(k)][i];
      s.minor_x.push_back(g * Pk.topLeftCorner(n, n));
      s.minor_x0.push_back(g * Pk.block(0, n, n, n));
      s.minor_z.push_back(g * Pk.block(0, 2 * n, n, n * K));
      s.minor_offset.push_back(g * sol.s[static_cast<std::size_t>(k)][i].head(n));
    }
    s.Abar = sol.Abar[i];
    s.Gbar = sol.Gbar[i];
    s.mbar = sol.mbar[i];
    nodes.push_back(std::move(s));
  }
  return ClosedLoopLaw(sol.grid, std::move(nodes));
}

ControlPair nce_feedback(const NceSolution& sol, const ValidatedModel& model, double t, const Vector& x0,
                         const Vector& xi, const Vector& zbar, int kappa) {
  const int n = sol.n;
  const int K = sol.K;
  if (kappa < 1 || kappa > K)
    throw Error(ErrorKind::IndexOutOfRange, "type " + std::to_string(kappa) + " outside 1.." + std::to_string(K));
  if (x0.size() != n || xi.size() != n || zbar.size() != n * K)
    throw Error(ErrorKind::DimensionMismatch, "feedback state has the wrong dimension");
  const auto k = static_cast<std::size_t>(kappa - 1);
  const Matrix P0 = sol.P0.at(t);
  const Matrix Pk = sol.P[k].at(t);
  const Vector s0 = sol.s0.at(t);
  const Vector sk = sol.s[k].at(t);

  Vector y0(n * (K + 1));
  y0 << x0, zbar;
  Vector yk(n * (K + 2));
  yk << xi, x0, zbar;
  ControlPair c;
  c.u0 = -model.R0inv() * (model.lifted().B0big.transpose() * (P0 * y0 + s0));
  c.ui = -model.Rinv() * (model.lifted().Bbig.transpose() * (Pk * yk + sk));
  return c;
}

VectorPath propagate_mean_field(const NceSolution& sol, const ValidatedModel& model, const VectorPath& x0_path) {
  const auto ratio = x0_path.grid.refinement_of(sol.grid);
  if (!ratio)
    throw Error(ErrorKind::GridMismatch, "major-state path grid (M = " + std::to_string(x0_path.grid.steps()) +
                                             ") does not refine the solution grid (M = " +
                                             std::to_string(sol.grid.steps()) + ")");
  if (x0_path.size() != x0_path.grid.size())
    throw Error(ErrorKind::GridMismatch, "major-state path length does not match its grid");
  const ClosedLoopLaw law = nce_law(sol, model);
  const TimeGrid& g = x0_path.grid;
  const int n = sol.n;
  const int K = sol.K;

  VectorPath z;
  z.grid = g;
  z.values.reserve(static_cast<std::size_t>(g.size()));
  Vector zbar(n * K);
  for (int k = 0; k < K; ++k) zbar.segment(k * n, n) = model.params().alpha0;
  z.values.push_back(zbar);
  const double h = g.step();
  for (int i = 0; i < g.steps(); ++i) {
    zbar = advance_mean_field(law, g.node(i), h, zbar, x0_path[i], x0_path[i + 1]);
    z.values.push_back(zbar);
  }
  return z;
}

}  // namespace mfg
