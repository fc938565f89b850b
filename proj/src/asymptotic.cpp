#include "mfg/asymptotic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mfg/linalg.hpp"
#include "mfg/ode.hpp"
#include "mfg/parallel.hpp"
#include "mfg/path_compare.hpp"

namespace mfg {

namespace {

void require_homogeneous(const ValidatedModel& model) {
  if (model.K() != 1)
    throw Error(ErrorKind::KNotOne, "homogeneous minor players required, model has K = " + std::to_string(model.K()));
}

// X (Ahat - shift I) without forming Ahat: the coupling is rank-structured.
Matrix times_drift(const FiniteNSystem& s, const Matrix& X, double shift) {
  const int n = s.n;
  const Matrix I = Matrix::Identity(n, n);
  Matrix cs = Matrix::Zero(X.rows(), n);
  for (int j = 1; j <= s.N; ++j) cs += X.middleCols(j * n, n);
  Matrix out(X.rows(), X.cols());
  out.leftCols(n) = X.leftCols(n) * (s.A0 - shift * I) + cs * s.G;
  const Matrix common = (X.leftCols(n) * s.F0 + cs * s.F) / static_cast<double>(s.N);
  const Matrix Ash = s.A - shift * I;
  for (int j = 1; j <= s.N; ++j) out.middleCols(j * n, n) = X.middleCols(j * n, n) * Ash + common;
  return out;
}

// (Ahat - shift I)^T v
Vector drift_transpose_times(const FiniteNSystem& s, const Vector& v, double shift) {
  const int n = s.n;
  const Matrix I = Matrix::Identity(n, n);
  Vector sum = Vector::Zero(n);
  for (int j = 1; j <= s.N; ++j) sum += v.segment(j * n, n);
  Vector out(v.size());
  out.head(n) = (s.A0 - shift * I).transpose() * v.head(n) + s.G.transpose() * sum;
  const Vector common = (s.F0.transpose() * v.head(n) + s.F.transpose() * sum) / static_cast<double>(s.N);
  const Matrix AshT = (s.A - shift * I).transpose();
  for (int j = 1; j <= s.N; ++j) out.segment(j * n, n) = AshT * v.segment(j * n, n) + common;
  return out;
}

}  // namespace

Matrix FiniteNSystem::Bbig(int k) const {
  if (k < 0 || k > N) throw Error(ErrorKind::IndexOutOfRange, "player " + std::to_string(k) + " not in 0.." + std::to_string(N));
  const Matrix& b = k == 0 ? B0 : B;
  Matrix out = Matrix::Zero(dim(), b.cols());
  out.middleRows(k * n, n) = b;
  return out;
}

Matrix FiniteNSystem::Kbig(int i, bool terminal) const {
  if (i < 0 || i > N) throw Error(ErrorKind::IndexOutOfRange, "player " + std::to_string(i) + " not in 0.." + std::to_string(N));
  if (i == 0) return terminal ? K0f : K0;
  const Matrix& g1 = terminal ? Gamma1f : Gamma1;
  const Matrix g2 = (terminal ? Gamma2f : Gamma2) / static_cast<double>(N);
  Matrix k(n, dim());
  k.leftCols(n) = -g1;
  for (int j = 1; j <= N; ++j) k.middleCols(j * n, n) = -g2;
  k.middleCols(i * n, n) += Matrix::Identity(n, n);
  return k;
}

Matrix FiniteNSystem::Qbig(int i, bool terminal) const {
  if (i == 0) return terminal ? Q0f : Q0;
  return symmetric_part(congruence(Kbig(i, terminal), terminal ? Qf : Q));
}

Vector FiniteNSystem::qbig(int i, bool terminal) const {
  if (i == 0) return terminal ? q0f : q0;
  return Kbig(i, terminal).transpose() * ((terminal ? Qf : Q) * (terminal ? etaf : eta));
}

FiniteNSystem assemble_finite_n(const ValidatedModel& model, int N, int memory_cap) {
  require_homogeneous(model);
  if (N < 1) throw Error(ErrorKind::InvalidArgument, "population size must be at least 1");
  const ModelParams& p = model.params();
  const int n = p.n;
  const long long d = static_cast<long long>(N + 1) * n;
  if (d > memory_cap)
    throw Error(ErrorKind::NTooLargeForMemory, "(N+1)n = " + std::to_string(d) + " exceeds the cap of " +
                                                   std::to_string(memory_cap));

  FiniteNSystem s;
  s.N = N;
  s.n = n;
  s.rho = p.rho;
  s.A0 = p.A0;
  s.A = p.A[0];
  s.F0 = p.F0;
  s.F = p.F;
  s.G = p.G;
  s.M0 = model.M0();
  s.M = model.M();
  s.B0 = p.B0;
  s.B = p.B;
  s.Q = p.Q;
  s.Qf = p.Qf;
  s.Gamma1 = p.Gamma1;
  s.Gamma1f = p.Gamma1f;
  s.Gamma2 = p.Gamma2;
  s.Gamma2f = p.Gamma2f;
  s.eta = p.eta;
  s.etaf = p.etaf;

  const double invN = 1.0 / N;
  const auto D = static_cast<Eigen::Index>(d);
  s.Ahat = Matrix::Zero(D, D);
  s.Ahat.topLeftCorner(n, n) = p.A0;
  for (int j = 1; j <= N; ++j) {
    s.Ahat.block(0, j * n, n, n) = invN * p.F0;
    s.Ahat.block(j * n, 0, n, n) = p.G;
    for (int k = 1; k <= N; ++k) s.Ahat.block(j * n, k * n, n, n) = invN * p.F;
    s.Ahat.block(j * n, j * n, n, n) += s.A;
  }
  s.Ahat_half = s.Ahat - 0.5 * p.rho * Matrix::Identity(D, D);
  s.Ahat_rho = s.Ahat - p.rho * Matrix::Identity(D, D);

  s.K0 = Matrix::Zero(n, D);
  s.K0f = Matrix::Zero(n, D);
  s.K0.leftCols(n).setIdentity();
  s.K0f.leftCols(n).setIdentity();
  for (int j = 1; j <= N; ++j) {
    s.K0.middleCols(j * n, n) = -invN * p.Gamma0;
    s.K0f.middleCols(j * n, n) = -invN * p.Gamma0f;
  }
  s.Q0 = symmetric_part(congruence(s.K0, p.Q0));
  s.Q0f = symmetric_part(congruence(s.K0f, p.Q0f));
  s.q0 = s.K0.transpose() * (p.Q0 * p.eta0);
  s.q0f = s.K0f.transpose() * (p.Q0f * p.eta0f);
  return s;
}

Matrix swap_minor_blocks(const Matrix& X, int n, int i, int j) {
  if (i == j) return X;
  Matrix out = X;
  out.middleRows(i * n, n).swap(out.middleRows(j * n, n));
  out.middleCols(i * n, n).swap(out.middleCols(j * n, n));
  return out;
}

Vector swap_minor_blocks(const Vector& v, int n, int i, int j) {
  Vector out = v;
  if (i != j) out.segment(i * n, n).swap(out.segment(j * n, n));
  return out;
}

Matrix FiniteNSolution::P_at(int i, int node) const {
  if (i < 0 || i > N) throw Error(ErrorKind::IndexOutOfRange, "player " + std::to_string(i) + " not in 0.." + std::to_string(N));
  if (dense || i <= 1) return P[static_cast<std::size_t>(i)][node];
  return swap_minor_blocks(P[1][node], n, 1, i);
}

Vector FiniteNSolution::S_at(int i, int node) const {
  if (i < 0 || i > N) throw Error(ErrorKind::IndexOutOfRange, "player " + std::to_string(i) + " not in 0.." + std::to_string(N));
  if (dense || i <= 1) return S[static_cast<std::size_t>(i)][node];
  return swap_minor_blocks(S[1][node], n, 1, i);
}

MatrixPath FiniteNSolution::P_path(int i) const {
  MatrixPath out;
  out.grid = grid;
  for (int k = 0; k < grid.size(); ++k) out.values.push_back(P_at(i, k));
  return out;
}

OrBlowUp<FiniteNSolution> solve_finite_n(const ValidatedModel& model, int N, const TimeGrid& grid,
                                         const FiniteNOptions& opts) {
  const FiniteNSystem sys = assemble_finite_n(model, N, opts.memory_cap);
  const int n = sys.n;
  const Eigen::Index d = sys.dim();
  const Eigen::Index dm = static_cast<Eigen::Index>(N) * n;
  const int players = opts.dense ? N + 1 : 2;

  StackedLayout L;
  std::vector<int> pid, sid;
  for (int i = 0; i < players; ++i) pid.push_back(L.add(d, d, true));
  for (int i = 0; i < players; ++i) sid.push_back(L.add(d, 1));

  std::vector<Matrix> Qi, Qif;
  std::vector<Vector> qi, qif;
  for (int i = 0; i < players; ++i) {
    Qi.push_back(sys.Qbig(i, false));
    Qif.push_back(sys.Qbig(i, true));
    qi.push_back(sys.qbig(i, false));
    qif.push_back(sys.qbig(i, true));
  }

  const double rho = sys.rho;
  auto field = [&](double, const Vector& y) -> Vector {
    std::vector<Eigen::Map<const Matrix>> P;
    std::vector<Eigen::Map<const Matrix>> S;
    for (int i = 0; i < players; ++i) {
      P.push_back(L.block(y, pid[static_cast<std::size_t>(i)]));
      S.push_back(L.block(y, sid[static_cast<std::size_t>(i)]));
    }

    // CM block k-1 = P_k[:, k] M and w block k = M S_k[k]: the sums over
    // minor controls become one product each.
    Matrix CM(d, dm);
    Vector w = Vector::Zero(d);
    if (opts.dense) {
      for (int k = 1; k <= N; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        CM.middleCols((k - 1) * n, n) = P[ku].middleCols(k * n, n) * sys.M;
        w.segment(k * n, n) = sys.M * S[ku].col(0).segment(k * n, n);
      }
    } else {
      const Matrix c1 = P[1].middleCols(n, n) * sys.M;
      const Vector w1 = sys.M * S[1].col(0).segment(n, n);
      for (int k = 1; k <= N; ++k) {
        auto blk = CM.middleCols((k - 1) * n, n);
        blk = c1;
        if (k != 1) blk.middleRows(n, n).swap(blk.middleRows(k * n, n));
        w.segment(k * n, n) = w1;
      }
    }

    Vector dy(L.size());
    const Matrix P0 = P[0];
    const Vector S0 = S[0].col(0);
    const Matrix col0M0 = P0.leftCols(n) * sys.M0;
    const Vector s0_head = sys.M0 * S0.head(n);
    {
      const Matrix lin = times_drift(sys, P0, 0.5 * rho);
      const Matrix SX = CM * P0.bottomRows(dm);
      Matrix dP = -(lin + lin.transpose()) + col0M0 * P0.topRows(n) + SX + SX.transpose() - Qi[0];
      L.block(dy, pid[0]) = symmetric_part(dP);
      L.block(dy, sid[0]) = -drift_transpose_times(sys, S0, rho) + col0M0 * S0.head(n) + CM * S0.tail(dm) + P0 * w + qi[0];
    }
    for (int i = 1; i < players; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      const Matrix Pi = P[iu];
      const Vector Si = S[iu].col(0);
      const Matrix own = Pi.middleCols(i * n, n);
      const Matrix lin = times_drift(sys, Pi, 0.5 * rho);
      const Matrix cross = Pi.leftCols(n) * sys.M0 * P0.topRows(n);
      const Matrix SX = CM * Pi.bottomRows(dm);
      Matrix dP = -(lin + lin.transpose()) - own * sys.M * own.transpose() + cross + cross.transpose() + SX +
                  SX.transpose() - Qi[iu];
      L.block(dy, pid[iu]) = symmetric_part(dP);
      L.block(dy, sid[iu]) = -drift_transpose_times(sys, Si, rho) + col0M0 * Si.head(n) + Pi.leftCols(n) * s0_head -
                             own * (sys.M * Si.segment(i * n, n)) + CM * Si.tail(dm) + Pi * w + qi[iu];
    }
    return dy;
  };

  Vector terminal = L.zeros();
  for (int i = 0; i < players; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    L.block(terminal, pid[iu]) = Qif[iu];
    L.block(terminal, sid[iu]) = -qif[iu];
  }

  double sup_norm = 0.0;
  OdeOptions<Vector> ode;
  ode.phase = "riccati";
  ode.blowup_threshold = opts.blowup_threshold;
  ode.store_stride = opts.store_stride;
  ode.store_slopes = false;
  ode.project = [&L](Vector& v) { L.symmetrize(v); };
  ode.observe = [&](int, const Vector& y) {
    sup_norm = std::max(sup_norm, l1_norm(L.block(y, pid[0])) + l1_norm(L.block(y, pid[1])));
  };
  auto res = integrate_backward(field, terminal, grid, ode);
  if (blew_up(res)) return blow_up(res);
  const Path<Vector>& path = solved(res);

  FiniteNSolution sol;
  sol.N = N;
  sol.n = n;
  sol.dense = opts.dense;
  sol.grid = path.grid;
  sol.sup_norm = sup_norm;
  for (int i = 0; i < players; ++i) {
    sol.P.push_back(unstack(path, L, pid[static_cast<std::size_t>(i)]));
    sol.S.push_back(unstack_vector(path, L, sid[static_cast<std::size_t>(i)]));
  }

  if (opts.dense) {
    for (int node = 0; node < sol.grid.size(); ++node) {
      for (int i = 2; i <= N; ++i) {
        const double gap = l1_norm(sol.P[static_cast<std::size_t>(i)][node] - swap_minor_blocks(sol.P[1][node], n, 1, i));
        if (gap > 1e-8)
          throw Error(ErrorKind::PermutationMismatch, "player " + std::to_string(i) + " differs from permuted player 1 by " +
                                                          std::to_string(gap) + " at node " + std::to_string(node));
      }
    }
  }
  return sol;
}

const char* limit_block_label(int block) {
  static const char* const labels[kLimitBlockCount] = {"Lambda1^0", "Lambda2^0", "Lambda3^0", "Lambda0", "Lambda1",
                                                       "Lambda2",   "Lambda3",   "Lambda_a",  "Lambda_b"};
  if (block < 0 || block >= kLimitBlockCount) throw Error(ErrorKind::IndexOutOfRange, "no limit block " + std::to_string(block));
  return labels[block];
}

bool limit_block_symmetric(int block) {
  return block == kMajorOwn || block == kMajorMean || block == kMinorMajor || block == kMinorOwn ||
         block == kMinorMean;
}

OrBlowUp<LambdaSolution> solve_lambda(const ValidatedModel& model, const TimeGrid& grid) {
  require_homogeneous(model);
  const ModelParams& p = model.params();
  const int n = p.n;
  const double rho = p.rho;
  const Matrix& A0 = p.A0;
  const Matrix& A = p.A[0];
  const Matrix& F0 = p.F0;
  const Matrix& F = p.F;
  const Matrix& G = p.G;
  const Matrix& M0 = model.M0();
  const Matrix& M = model.M();

  StackedLayout L;
  std::array<int, kLimitBlockCount> id{};
  for (int b = 0; b < kLimitBlockCount; ++b) id[static_cast<std::size_t>(b)] = L.add(n, n, limit_block_symmetric(b));

  const Matrix src10 = p.Q0;
  const Matrix src20 = p.Q0 * p.Gamma0;
  const Matrix src30 = p.Gamma0.transpose() * p.Q0 * p.Gamma0;
  const Matrix src0 = p.Gamma1.transpose() * p.Q * p.Gamma1;
  const Matrix src2 = p.Q * p.Gamma2;
  const Matrix src3 = p.Gamma2.transpose() * p.Q * p.Gamma2;
  const Matrix srca = p.Gamma1.transpose() * p.Q;
  const Matrix srcb = p.Gamma1.transpose() * p.Q * p.Gamma2;

  auto field = [&](double, const Vector& y) -> Vector {
    auto get = [&](int b) { return Matrix(L.block(y, id[static_cast<std::size_t>(b)])); };
    const Matrix L10 = get(kMajorOwn), L20 = get(kMajorCross), L30 = get(kMajorMean);
    const Matrix L0 = get(kMinorMajor), L1 = get(kMinorOwn), L2 = get(kMinorCross), L3 = get(kMinorMean);
    const Matrix La = get(kMinorMajorOwn), Lb = get(kMinorMajorMean);

    const Matrix Sm = M * (L1 + L2) - A - F;  // closed-loop mean drift
    const Matrix W0 = L10 * M0 - A0.transpose();
    const Matrix V = La * M - G.transpose();

    Vector dy(L.size());
    auto put = [&](int b, const Matrix& v) { L.block(dy, id[static_cast<std::size_t>(b)]) = v; };
    put(kMajorOwn, symmetric_part(rho * L10 + L10 * M0 * L10 - (L10 * A0 + A0.transpose() * L10) +
                                  L20 * V.transpose() + V * L20.transpose() - src10));
    put(kMajorCross, rho * L20 + W0 * L20 + L20 * Sm - L10 * F0 + V * L30 + src20);
    put(kMajorMean, symmetric_part(rho * L30 + L20.transpose() * M0 * L20 - L20.transpose() * F0 - F0.transpose() * L20 +
                                   L30 * Sm + Sm.transpose() * L30 - src30));
    put(kMinorMajor, symmetric_part(rho * L0 + La * M * La.transpose() - Lb * G - G.transpose() * Lb.transpose() +
                                    L0 * W0.transpose() + W0 * L0 - La * (G - M * Lb.transpose()) -
                                    (G.transpose() - Lb * M) * La.transpose() - src0));
    put(kMinorOwn, symmetric_part(rho * L1 + L1 * M * L1 - L1 * A - A.transpose() * L1 - p.Q));
    put(kMinorCross, rho * L2 + La.transpose() * (M0 * L20 - F0) - L1 * F + (L1 * M - A.transpose()) * L2 + L2 * Sm + src2);
    put(kMinorMean, symmetric_part(rho * L3 + Lb.transpose() * M0 * L20 + L20.transpose() * M0 * Lb +
                                   L2.transpose() * M * L2 - Lb.transpose() * F0 - F0.transpose() * Lb -
                                   L2.transpose() * F - F.transpose() * L2 + L3 * Sm + Sm.transpose() * L3 - src3));
    put(kMinorMajorOwn, rho * La + W0 * La + La * (M * L1 - A) - G.transpose() * L1 + V * L2.transpose() + srca);
    put(kMinorMajorMean, rho * Lb + L0 * M0 * L20 + V * (L2 + L3) - L0 * F0 - La * F + Lb * Sm + W0 * Lb - srcb);
    return dy;
  };

  Vector terminal = L.zeros();
  auto pin = [&](int b, const Matrix& v) { L.block(terminal, id[static_cast<std::size_t>(b)]) = v; };
  pin(kMajorOwn, p.Q0f);
  pin(kMajorCross, -p.Q0f * p.Gamma0f);
  pin(kMajorMean, symmetric_part(p.Gamma0f.transpose() * p.Q0f * p.Gamma0f));
  pin(kMinorMajor, symmetric_part(p.Gamma1f.transpose() * p.Qf * p.Gamma1f));
  pin(kMinorOwn, p.Qf);
  pin(kMinorCross, -p.Qf * p.Gamma2f);
  pin(kMinorMean, symmetric_part(p.Gamma2f.transpose() * p.Qf * p.Gamma2f));
  pin(kMinorMajorOwn, -p.Gamma1f.transpose() * p.Qf);
  pin(kMinorMajorMean, p.Gamma1f.transpose() * p.Qf * p.Gamma2f);

  OdeOptions<Vector> opts;
  opts.phase = "lambda";
  opts.project = [&L](Vector& v) { L.symmetrize(v); };
  auto res = integrate_backward(field, terminal, grid, opts);
  if (blew_up(res)) return blow_up(res);

  LambdaSolution sol;
  sol.grid = grid;
  sol.n = n;
  sol.M0 = M0;
  sol.M = M;
  for (int b = 0; b < kLimitBlockCount; ++b)
    sol.blocks[static_cast<std::size_t>(b)] = unstack(solved(res), L, id[static_cast<std::size_t>(b)]);
  return sol;
}

PhiSolution phi_from_nce(const NceSolution& nce) {
  if (nce.K != 1)
    throw Error(ErrorKind::KNotOne, "homogeneous minor players required, solution has K = " + std::to_string(nce.K));
  const int n = nce.n;
  PhiSolution phi;
  phi.grid = nce.grid;
  phi.n = n;
  // (matrix, row block, col block) per limit block; P0 acts on (x0, zbar),
  // P1 on (x_i, x0, zbar).
  const int where[kLimitBlockCount][3] = {{0, 0, 0}, {0, 0, 1}, {0, 1, 1}, {1, 1, 1}, {1, 0, 0},
                                          {1, 0, 2}, {1, 2, 2}, {1, 1, 0}, {1, 1, 2}};
  for (int b = 0; b < kLimitBlockCount; ++b) {
    const MatrixPath& src = where[b][0] == 0 ? nce.P0 : nce.P[0];
    MatrixPath& dst = phi.blocks[static_cast<std::size_t>(b)];
    dst.grid = nce.grid;
    dst.values.reserve(src.values.size());
    for (const Matrix& m : src.values) dst.values.emplace_back(m.block(where[b][1] * n, where[b][2] * n, n, n));
  }
  return phi;
}

std::pair<Matrix, Matrix> assemble_phi(const PhiSolution& phi, int node) {
  const int n = phi.n;
  auto b = [&](int id) -> const Matrix& { return phi[id][node]; };
  Matrix P0(2 * n, 2 * n);
  P0 << b(kMajorOwn), b(kMajorCross), b(kMajorCross).transpose(), b(kMajorMean);
  Matrix P1(3 * n, 3 * n);
  P1 << b(kMinorOwn), b(kMinorMajorOwn).transpose(), b(kMinorCross),
      b(kMinorMajorOwn), b(kMinorMajor), b(kMinorMajorMean),
      b(kMinorCross).transpose(), b(kMinorMajorMean).transpose(), b(kMinorMean);
  return {P0, P1};
}

DiffReport compare_lambda_phi(const LambdaSolution& lambda, const PhiSolution& phi, double tolerance) {
  if (lambda.n != phi.n) throw Error(ErrorKind::DimensionMismatch, "solutions belong to models of different shape");
  const SharedNodes sn = shared_nodes(lambda.grid, phi.grid);
  DiffReport rep;
  rep.tolerance = tolerance;
  for (int b = 0; b < kLimitBlockCount; ++b) rep.entries.push_back({limit_block_label(b), max_l1(lambda[b], phi[b], sn)});
  rep.pass = rep.max_diff() <= tolerance;
  return rep;
}

int StructureReport::max_clusters(int matrix) const {
  const auto& c = matrix == 0 ? clusters_p0 : clusters_p1;
  return c.empty() ? 0 : *std::max_element(c.begin(), c.end());
}

int StructureReport::min_clusters(int matrix) const {
  const auto& c = matrix == 0 ? clusters_p0 : clusters_p1;
  return c.empty() ? 0 : *std::min_element(c.begin(), c.end());
}

namespace {

struct TileSpec {
  const char* label;
  int matrix, row, col, limit_block;
};

// Representative of every tile class, in the order of default_tile_exponents.
constexpr TileSpec kTiles[] = {
    {"P0[0,0]", 0, 0, 0, kMajorOwn},      {"P0[0,1]", 0, 0, 1, kMajorCross},    {"P0[1,1]", 0, 1, 1, kMajorMean},
    {"P1[0,0]", 1, 0, 0, kMinorMajor},    {"P1[0,1]", 1, 0, 1, kMinorMajorOwn}, {"P1[0,2]", 1, 0, 2, kMinorMajorMean},
    {"P1[1,1]", 1, 1, 1, kMinorOwn},      {"P1[1,2]", 1, 1, 2, kMinorCross},    {"P1[2,2]", 1, 2, 2, kMinorMean},
};

int count_clusters(const Matrix& X, int n, int blocks, double tol) {
  std::vector<Matrix> reps;
  for (int r = 0; r < blocks; ++r) {
    for (int c = r; c < blocks; ++c) {
      const auto tile = X.block(r * n, c * n, n, n);
      bool found = false;
      for (const Matrix& rep : reps) {
        if (l1_norm(tile - rep) <= tol) {
          found = true;
          break;
        }
      }
      if (!found) reps.emplace_back(tile);
    }
  }
  return static_cast<int>(reps.size());
}

}  // namespace

const std::vector<int>& default_tile_exponents() {
  static const std::vector<int> e = {0, 1, 2, 0, 0, 1, 0, 1, 2};
  return e;
}

StructureReport extract_block_structure(const FiniteNSolution& fin, double tolerance, const std::vector<int>& exponents) {
  constexpr auto kTileCount = sizeof(kTiles) / sizeof(kTiles[0]);
  if (exponents.size() != kTileCount)
    throw Error(ErrorKind::DimensionMismatch, "expected " + std::to_string(kTileCount) + " tile exponents");
  const int n = fin.n;
  const int N = fin.N;
  StructureReport rep;
  rep.N = N;
  rep.n = n;
  rep.tolerance = tolerance;
  for (int node = 0; node < fin.grid.size(); ++node) {
    rep.clusters_p0.push_back(count_clusters(fin.P[0][node], n, N + 1, tolerance));
    rep.clusters_p1.push_back(count_clusters(fin.P[1][node], n, N + 1, tolerance));
  }
  for (std::size_t t = 0; t < kTileCount; ++t) {
    const TileSpec& spec = kTiles[t];
    if (spec.row > N || spec.col > N) continue;
    TileSeries ts;
    ts.label = spec.label;
    ts.matrix = spec.matrix;
    ts.row = spec.row;
    ts.col = spec.col;
    ts.limit_block = spec.limit_block;
    ts.exponent = exponents[t];
    const double scale = std::pow(static_cast<double>(N), ts.exponent);
    ts.raw.grid = ts.scaled.grid = fin.grid;
    for (const Matrix& m : fin.P[static_cast<std::size_t>(spec.matrix)].values) {
      ts.raw.values.emplace_back(m.block(spec.row * n, spec.col * n, n, n));
      ts.scaled.values.emplace_back(scale * ts.raw.values.back());
    }
    rep.tiles.push_back(std::move(ts));
  }
  return rep;
}

ExponentFit fit_scaling_exponents(const std::vector<StructureReport>& reports) {
  if (reports.size() < 2) throw Error(ErrorKind::InvalidArgument, "need reports for at least two population sizes");
  const std::vector<int>& fallback = default_tile_exponents();
  ExponentFit fit;
  for (std::size_t t = 0; t < fallback.size(); ++t) {
    std::vector<double> xs, ys;
    bool usable = true;
    for (const StructureReport& r : reports) {
      const auto it = std::find_if(r.tiles.begin(), r.tiles.end(),
                                   [&](const TileSeries& s) { return s.label == kTiles[t].label; });
      if (it == r.tiles.end()) continue;
      double size = 0.0;
      for (const Matrix& m : it->raw.values) size = std::max(size, l1_norm(m));
      if (!(size > 1e-300)) {
        usable = false;
        break;
      }
      xs.push_back(std::log(static_cast<double>(r.N)));
      ys.push_back(std::log(size));
    }
    double slope = std::numeric_limits<double>::quiet_NaN();
    if (usable && xs.size() >= 2) {
      double mx = 0, my = 0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
      }
      mx /= xs.size();
      my /= ys.size();
      double sxy = 0, sxx = 0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
      }
      if (sxx > 0) slope = sxy / sxx;
    }
    fit.slopes.push_back(slope);
    fit.exponents.push_back(std::isfinite(slope) ? static_cast<int>(std::lround(-slope)) : fallback[t]);
  }
  return fit;
}

DiffReport compare_structure_lambda(const StructureReport& report, const LambdaSolution& lambda, double tolerance) {
  DiffReport rep;
  rep.tolerance = tolerance;
  for (const TileSeries& ts : report.tiles) {
    const SharedNodes sn = shared_nodes(ts.scaled.grid, lambda.grid);
    rep.entries.push_back({ts.label, max_l1(ts.scaled, lambda[ts.limit_block], sn)});
  }
  rep.pass = rep.max_diff() <= tolerance;
  return rep;
}

SolvabilityReport check_asymptotic_solvability(const ValidatedModel& model, const std::vector<int>& N_list,
                                               const TimeGrid& grid, const FiniteNOptions& opts) {
  require_homogeneous(model);
  if (N_list.empty()) throw Error(ErrorKind::InvalidArgument, "no population sizes given");
  SolvabilityReport rep;
  rep.N = N_list;
  const auto count = N_list.size();
  rep.norms.assign(count, std::nullopt);
  rep.blowups.assign(count, std::nullopt);

  // Only the running sup-norm is needed, so keep just the end nodes.
  FiniteNOptions o = opts;
  o.store_stride = grid.steps();
  parallel_for(static_cast<int>(count), [&](int i) {
    const auto iu = static_cast<std::size_t>(i);
    auto res = solve_finite_n(model, N_list[iu], grid, o);
    if (blew_up(res))
      rep.blowups[iu] = blow_up(res);
    else
      rep.norms[iu] = solved(res).sup_norm;
  });

  const std::size_t tail = std::min<std::size_t>(3, count);
  bool ok = true;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (std::size_t i = count - tail; i < count; ++i) {
    if (!rep.norms[i]) {
      ok = false;
      break;
    }
    lo = std::min(lo, *rep.norms[i]);
    hi = std::max(hi, *rep.norms[i]);
  }
  rep.bounded = ok && hi - lo <= 0.1 * hi;

  auto lam = solve_lambda(model, grid);
  rep.lambda_solvable = !blew_up(lam);
  if (blew_up(lam)) rep.lambda_blowup = blow_up(lam);
  return rep;
}

}  // namespace mfg
