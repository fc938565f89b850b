#include "mfg/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mfg/parallel.hpp"
#include "mfg/philox.hpp"

namespace mfg {

namespace {

constexpr std::uint32_t kIncrementDomain = 0;
constexpr std::uint32_t kInitialDomain = 1;

// Neumaier's compensated sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Symmetric square root of a PSD covariance (tolerates singular ones).
Matrix covariance_factor(const Matrix& cov) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

Vector draw(const NormalStream& s, std::uint64_t step, int count) {
  Vector v(count);
  s.fill(step, v, count);
  return v;
}

// Type means of the columns of X, stacked; types occupy contiguous column ranges.
Vector type_means(const Matrix& X, const std::vector<int>& counts) {
  const Eigen::Index n = X.rows();
  Vector out = Vector::Zero(n * static_cast<Eigen::Index>(counts.size()));
  int first = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] > 0) out.segment(static_cast<Eigen::Index>(k) * n, n) = X.middleCols(first, counts[k]).rowwise().mean();
    first += counts[k];
  }
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<int> type_counts_for(const Vector& pi, int N) {
  if (N < 0) throw Error(ErrorKind::InvalidArgument, "population size must be non-negative");
  const auto K = static_cast<std::size_t>(pi.size());
  std::vector<int> counts(K);
  std::vector<double> rem(K);
  int total = 0;
  for (std::size_t k = 0; k < K; ++k) {
    const double share = pi(static_cast<Eigen::Index>(k)) * N;
    counts[k] = static_cast<int>(std::floor(share));
    rem[k] = share - counts[k];
    total += counts[k];
  }
  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t j = 0; total < N; ++j, ++total) ++counts[order[j % K]];
  return counts;
}

Trajectory simulate(const ValidatedModel& model, int N, const ClosedLoopLaw& law, const SimulationOptions& opts) {
  const ModelParams& p = model.params();
  const int n = p.n, K = p.K;
  if (N < 1) throw Error(ErrorKind::InvalidArgument, "population size must be at least 1");
  if (law.types() != K)
    throw Error(ErrorKind::DimensionMismatch, "law has " + std::to_string(law.types()) + " types, model has " +
                                                  std::to_string(K));
  const TimeGrid& lg = law.grid();
  if (std::abs(lg.horizon() - p.T) > 1e-12 * p.T)
    throw Error(ErrorKind::GridMismatch, "law horizon differs from the model horizon");

  std::vector<int> counts = opts.type_counts.empty() ? type_counts_for(p.pi, N) : opts.type_counts;
  if (static_cast<int>(counts.size()) != K)
    throw Error(ErrorKind::DimensionMismatch, "expected " + std::to_string(K) + " type counts");
  if (std::any_of(counts.begin(), counts.end(), [](int c) { return c < 0; }) ||
      std::accumulate(counts.begin(), counts.end(), 0) != N)
    throw Error(ErrorKind::InvalidArgument, "type counts must be non-negative and sum to N = " + std::to_string(N));

  const double dt_req = opts.dt > 0.0 ? opts.dt : p.T / 4000.0;
  const double ratio = lg.step() / dt_req;
  const long sub = std::lround(ratio);
  if (sub < 1 || std::abs(ratio - static_cast<double>(sub)) > 1e-9 * ratio)
    throw Error(ErrorKind::InvalidArgument, "simulation step must divide the law grid step " + std::to_string(lg.step()));
  const int steps = lg.steps() * static_cast<int>(sub);
  const TimeGrid sim(p.T, steps);
  const double dt = sim.step();
  const double sqdt = std::sqrt(dt);
  if (opts.store_stride < 1 || steps % opts.store_stride != 0)
    throw Error(ErrorKind::InvalidArgument, "storage stride must divide the " + std::to_string(steps) + " simulation steps");

  Trajectory tr;
  tr.N = N;
  tr.n = n;
  tr.K = K;
  tr.seed = opts.seed;
  tr.grid = TimeGrid(p.T, steps / opts.store_stride);
  for (int k = 0; k < K; ++k) tr.types.insert(tr.types.end(), static_cast<std::size_t>(counts[static_cast<std::size_t>(k)]), k + 1);
  for (auto* path : {&tr.X0, &tr.Zbar, &tr.U0}) path->grid = tr.grid;
  tr.X.grid = tr.U.grid = tr.grid;

  std::vector<NormalStream> incr, init;
  for (int i = 0; i <= N; ++i) {
    incr.emplace_back(opts.seed, static_cast<std::uint32_t>(i), kIncrementDomain);
    init.emplace_back(opts.seed, static_cast<std::uint32_t>(i), kInitialDomain);
  }

  Vector x0 = p.x0_mean + covariance_factor(p.cov0) * draw(init[0], 0, n);
  Matrix X(n, N);
  const Matrix L = covariance_factor(p.cov);
  for (int i = 1; i <= N; ++i) X.col(i - 1) = p.alpha0 + L * draw(init[static_cast<std::size_t>(i)], 0, n);
  Vector zbar = p.alpha0.replicate(K, 1);

  Matrix U(p.n1, N);
  for (int step = 0;; ++step) {
    const double t = sim.node(step);
    const LawSnapshot snap = law.at(t);
    const Vector zfb = opts.empirical_feedback ? type_means(X, counts) : zbar;
    const Vector u0 = law.major_control(snap, x0, zfb);
    for (int i = 0; i < N; ++i)
      U.col(i) = law.minor_control(snap, tr.types[static_cast<std::size_t>(i)], X.col(i), x0, zfb);

    if (!x0.allFinite() || !X.allFinite() || !zbar.allFinite() || !u0.allFinite() || !U.allFinite())
      throw Error(ErrorKind::NonFiniteState, "state became non-finite at step " + std::to_string(step));
    if (step % opts.store_stride == 0) {
      tr.X0.values.push_back(x0);
      tr.X.values.push_back(X);
      tr.Zbar.values.push_back(zbar);
      tr.U0.values.push_back(u0);
      tr.U.values.push_back(U);
    }
    if (step == steps) break;

    const Vector xbar = X.rowwise().mean();
    const auto s = static_cast<std::uint64_t>(step);
    const Vector x0_next = x0 + dt * (p.A0 * x0 + p.B0 * u0 + p.F0 * xbar) + sqdt * (p.D0 * draw(incr[0], s, p.n2));
    const Vector common = p.F * xbar + p.G * x0;
    for (int i = 0; i < N; ++i) {
      const Matrix& A = p.A[static_cast<std::size_t>(tr.types[static_cast<std::size_t>(i)] - 1)];
      const Vector xi = X.col(i);
      X.col(i) = xi + dt * (A * xi + p.B * U.col(i) + common) +
                 sqdt * (p.D * draw(incr[static_cast<std::size_t>(i + 1)], s, p.n2));
    }
    zbar = advance_mean_field(law, t, dt, zbar, x0, x0_next);
    x0 = x0_next;
  }
  return tr;
}

Trajectory simulate(const ValidatedModel& model, int N, const NceSolution& sol, const SimulationOptions& opts) {
  return simulate(model, N, nce_law(sol, model), opts);
}

std::uint64_t replication_seed(std::uint64_t base, int r) {
  return splitmix64(base ^ splitmix64(static_cast<std::uint64_t>(r)));
}

std::vector<Trajectory> simulate_batch(const ValidatedModel& model, int N, const ClosedLoopLaw& law,
                                       const SimulationOptions& opts, int replications) {
  if (replications < 1) throw Error(ErrorKind::EmptyBatch, "at least one replication is required");
  std::vector<Trajectory> out(static_cast<std::size_t>(replications));
  parallel_for(replications, [&](int r) {
    SimulationOptions o = opts;
    o.seed = replication_seed(opts.seed, r);
    out[static_cast<std::size_t>(r)] = simulate(model, N, law, o);
  });
  return out;
}

MeanErrorReport empirical_mean_error(const Trajectory& traj) {
  const int n = traj.n;
  std::vector<int> counts(static_cast<std::size_t>(traj.K), 0);
  for (int t : traj.types) ++counts[static_cast<std::size_t>(t - 1)];
  for (int k = 0; k < traj.K; ++k)
    if (counts[static_cast<std::size_t>(k)] == 0)
      throw Error(ErrorKind::EmptyType, "type " + std::to_string(k + 1) + " has no players");

  MeanErrorReport rep;
  rep.per_type.resize(static_cast<std::size_t>(traj.K));
  rep.sup_per_type.assign(static_cast<std::size_t>(traj.K), 0.0);
  for (auto& path : rep.per_type) path.grid = traj.grid;
  for (int node = 0; node < traj.grid.size(); ++node) {
    const Vector means = type_means(traj.X[node], counts);
    for (int k = 0; k < traj.K; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      const double e = (means.segment(k * n, n) - traj.Zbar[node].segment(k * n, n)).norm();
      rep.per_type[ku].values.push_back(e);
      rep.sup_per_type[ku] = std::max(rep.sup_per_type[ku], e);
    }
  }
  rep.sup = *std::max_element(rep.sup_per_type.begin(), rep.sup_per_type.end());
  return rep;
}

namespace {

double realized_cost(const ModelParams& p, const Trajectory& tr, int player) {
  auto integrand = [&](int node, bool terminal) {
    const Vector& x0 = tr.X0[node];
    const Vector xbar = tr.X[node].rowwise().mean();
    Vector gap;
    if (player == 0)
      gap = x0 - (terminal ? p.Gamma0f : p.Gamma0) * xbar - (terminal ? p.eta0f : p.eta0);
    else
      gap = tr.X[node].col(player - 1) - (terminal ? p.Gamma1f : p.Gamma1) * x0 -
            (terminal ? p.Gamma2f : p.Gamma2) * xbar - (terminal ? p.etaf : p.eta);
    const Matrix& W = player == 0 ? (terminal ? p.Q0f : p.Q0) : (terminal ? p.Qf : p.Q);
    double v = gap.dot(W * gap);
    if (!terminal) {
      const Vector u = player == 0 ? tr.U0[node] : Vector(tr.U[node].col(player - 1));
      v += u.dot((player == 0 ? p.R0 : p.R) * u);
    }
    return std::exp(-p.rho * tr.grid.node(node)) * v;
  };
  const double h = tr.grid.step();
  CompensatedSum sum;
  double prev = integrand(0, false);
  for (int node = 1; node < tr.grid.size(); ++node) {
    const double cur = integrand(node, false);
    sum.add(0.5 * h * (prev + cur));
    prev = cur;
  }
  sum.add(integrand(tr.grid.steps(), true));
  return sum.value();
}

}  // namespace

CostEstimate evaluate_cost(const ValidatedModel& model, const std::vector<Trajectory>& batch, int player) {
  if (batch.empty()) throw Error(ErrorKind::EmptyBatch, "no trajectories to average");
  const int N = batch.front().N;
  if (player < 0 || player > N)
    throw Error(ErrorKind::IndexOutOfRange, "player " + std::to_string(player) + " not in 0.." + std::to_string(N));
  std::vector<double> costs;
  costs.reserve(batch.size());
  for (const Trajectory& tr : batch) {
    if (tr.N != N) throw Error(ErrorKind::DimensionMismatch, "batch mixes population sizes");
    costs.push_back(realized_cost(model.params(), tr, player));
  }
  CompensatedSum s;
  for (double c : costs) s.add(c);
  const double count = static_cast<double>(costs.size());
  const double mean = s.value() / count;
  CompensatedSum sq;
  for (double c : costs) sq.add((c - mean) * (c - mean));
  CostEstimate est;
  est.player = player;
  est.mean = mean;
  est.samples = static_cast<int>(costs.size());
  est.std_error = costs.size() > 1 ? std::sqrt(sq.value() / (count - 1.0)) / std::sqrt(count) : 0.0;
  return est;
}

double trajectory_distance(const Trajectory& a, const Trajectory& b) {
  if (a.N != b.N || a.n != b.n || a.K != b.K || !(a.grid == b.grid))
    throw Error(ErrorKind::DimensionMismatch, "trajectories have different shapes");
  double m = 0.0;
  for (int k = 0; k < a.grid.size(); ++k) {
    m = std::max(m, (a.X0[k] - b.X0[k]).cwiseAbs().maxCoeff());
    m = std::max(m, (a.X[k] - b.X[k]).cwiseAbs().maxCoeff());
    m = std::max(m, (a.Zbar[k] - b.Zbar[k]).cwiseAbs().maxCoeff());
    m = std::max(m, (a.U0[k] - b.U0[k]).cwiseAbs().maxCoeff());
    m = std::max(m, (a.U[k] - b.U[k]).cwiseAbs().maxCoeff());
  }
  return m;
}

}  // namespace mfg
