#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mfg/linalg.hpp"
#include "mfg/types.hpp"

namespace mfg {

/// Grid size used when the caller does not pick one.
inline int default_grid_steps(double horizon) { return horizon <= 5.0 ? 2000 : static_cast<int>(std::ceil(400.0 * horizon)); }

template <typename State>
struct OdeOptions {
  double blowup_threshold = 1e12;
  /// Applied to every accepted node value (e.g. re-symmetrization).
  std::function<void(State&)> project;
  /// Tag copied into a BlowUpReport.
  std::string phase;
  /// Keep every store_stride-th node only; the returned path then lives on
  /// the coarser grid. Must divide the number of steps.
  int store_stride = 1;
  bool store_slopes = true;
  /// Called with every accepted node, stored or not.
  std::function<void(int node, const State&)> observe;
};

namespace detail {

template <typename State>
double state_l1(const State& s) {
  if constexpr (std::is_arithmetic_v<State>) {
    return std::abs(s);
  } else {
    return s.cwiseAbs().sum();
  }
}

template <typename State>
bool state_finite(const State& s) {
  if constexpr (std::is_arithmetic_v<State>) {
    return std::isfinite(s);
  } else {
    return s.allFinite();
  }
}

// Field evaluation at a stage. A stage whose input is already past the
// threshold (or non-finite) signals escape; a finite, bounded input with a
// non-finite derivative is a broken field.
template <typename State, typename Field>
std::optional<State> stage(Field& field, double t, const State& y, double threshold) {
  if (!state_finite(y) || state_l1(y) > threshold) return std::nullopt;
  State k = field(t, y);
  if (!state_finite(k))
    throw Error(ErrorKind::NonFiniteField, "field returned a non-finite value at t = " + std::to_string(t));
  return k;
}

template <typename State>
BlowUpReport make_report(const TimeGrid& grid, int node, const State& y, const OdeOptions<State>& opts) {
  BlowUpReport r;
  r.escape_node = node;
  r.escape_time = grid.node(node);
  r.norm_at_escape = state_finite(y) ? state_l1(y) : std::numeric_limits<double>::infinity();
  r.threshold = opts.blowup_threshold;
  r.phase = opts.phase;
  return r;
}

template <typename State>
struct PathRecorder {
  Path<State> path;
  int stride;
  bool slopes;
  const std::function<void(int, const State&)>& observe;

  PathRecorder(const TimeGrid& grid, const OdeOptions<State>& opts)
      : stride(opts.store_stride), slopes(opts.store_slopes), observe(opts.observe) {
    if (stride < 1 || grid.steps() % stride != 0)
      throw Error(ErrorKind::InvalidArgument, "storage stride " + std::to_string(stride) +
                                                  " does not divide " + std::to_string(grid.steps()) + " steps");
    path.grid = TimeGrid(grid.horizon(), grid.steps() / stride);
    path.values.resize(static_cast<std::size_t>(path.grid.size()));
    if (slopes) path.slopes.resize(static_cast<std::size_t>(path.grid.size()));
  }
  void value(int node, const State& y) {
    if (observe) observe(node, y);
    if (node % stride == 0) path.values[static_cast<std::size_t>(node / stride)] = y;
  }
  void slope(int node, const State& k) {
    if (slopes && node % stride == 0) path.slopes[static_cast<std::size_t>(node / stride)] = k;
  }
};

}  // namespace detail

/// Classical RK4 with fixed step, marching from t_M = T down to t_0 = 0.
/// Returns the full path (node values and node slopes) or the first node at
/// which the state's l1 norm exceeds the threshold.
template <typename State, typename Field>
OrBlowUp<Path<State>> integrate_backward(Field&& field, const State& terminal, const TimeGrid& grid,
                                         const OdeOptions<State>& opts = {}) {
  const int M = grid.steps();
  const double h = grid.step();
  const double thr = opts.blowup_threshold;

  detail::PathRecorder<State> rec(grid, opts);

  State y = terminal;
  if (opts.project) opts.project(y);
  if (!detail::state_finite(y) || detail::state_l1(y) > thr) return detail::make_report(grid, M, y, opts);
  rec.value(M, y);

  for (int i = M; i >= 1; --i) {
    const double t = grid.node(i);
    const double tm = t - 0.5 * h;
    const double tn = grid.node(i - 1);
    auto k1 = detail::stage(field, t, y, thr);
    if (!k1) return detail::make_report(grid, i, y, opts);
    rec.slope(i, *k1);
    auto k2 = detail::stage(field, tm, State(y - (0.5 * h) * *k1), thr);
    if (!k2) return detail::make_report(grid, i - 1, State(y - (0.5 * h) * *k1), opts);
    auto k3 = detail::stage(field, tm, State(y - (0.5 * h) * *k2), thr);
    if (!k3) return detail::make_report(grid, i - 1, State(y - (0.5 * h) * *k2), opts);
    auto k4 = detail::stage(field, tn, State(y - h * *k3), thr);
    if (!k4) return detail::make_report(grid, i - 1, State(y - h * *k3), opts);
    y = State(y - (h / 6.0) * (*k1 + 2.0 * *k2 + 2.0 * *k3 + *k4));
    if (opts.project && detail::state_finite(y)) opts.project(y);
    if (!detail::state_finite(y) || detail::state_l1(y) > thr) return detail::make_report(grid, i - 1, y, opts);
    rec.value(i - 1, y);
  }
  if (opts.store_slopes) {
    auto k0 = detail::stage(field, grid.node(0), y, thr);
    if (!k0) return detail::make_report(grid, 0, y, opts);
    rec.slope(0, *k0);
  }
  return std::move(rec.path);
}

/// Forward counterpart of integrate_backward, from t_0 = 0 to t_M = T.
template <typename State, typename Field>
OrBlowUp<Path<State>> integrate_forward(Field&& field, const State& initial, const TimeGrid& grid,
                                        const OdeOptions<State>& opts = {}) {
  const int M = grid.steps();
  const double h = grid.step();
  const double thr = opts.blowup_threshold;

  detail::PathRecorder<State> rec(grid, opts);

  State y = initial;
  if (opts.project) opts.project(y);
  if (!detail::state_finite(y) || detail::state_l1(y) > thr) return detail::make_report(grid, 0, y, opts);
  rec.value(0, y);

  for (int i = 0; i < M; ++i) {
    const double t = grid.node(i);
    const double tm = t + 0.5 * h;
    const double tn = grid.node(i + 1);
    auto k1 = detail::stage(field, t, y, thr);
    if (!k1) return detail::make_report(grid, i, y, opts);
    rec.slope(i, *k1);
    auto k2 = detail::stage(field, tm, State(y + (0.5 * h) * *k1), thr);
    if (!k2) return detail::make_report(grid, i + 1, State(y + (0.5 * h) * *k1), opts);
    auto k3 = detail::stage(field, tm, State(y + (0.5 * h) * *k2), thr);
    if (!k3) return detail::make_report(grid, i + 1, State(y + (0.5 * h) * *k2), opts);
    auto k4 = detail::stage(field, tn, State(y + h * *k3), thr);
    if (!k4) return detail::make_report(grid, i + 1, State(y + h * *k3), opts);
    y = State(y + (h / 6.0) * (*k1 + 2.0 * *k2 + 2.0 * *k3 + *k4));
    if (opts.project && detail::state_finite(y)) opts.project(y);
    if (!detail::state_finite(y) || detail::state_l1(y) > thr) return detail::make_report(grid, i + 1, y, opts);
    rec.value(i + 1, y);
  }
  if (opts.store_slopes) {
    auto kM = detail::stage(field, grid.node(M), y, thr);
    if (!kM) return detail::make_report(grid, M, y, opts);
    rec.slope(M, *kM);
  }
  return std::move(rec.path);
}

/// Layout of several matrices packed column-major into one flat vector so a
/// coupled system advances with a single consistent stage evaluation.
class StackedLayout {
 public:
  struct Slot {
    Eigen::Index offset;
    Eigen::Index rows;
    Eigen::Index cols;
    bool symmetric;
  };

  int add(Eigen::Index rows, Eigen::Index cols, bool symmetric = false) {
    slots_.push_back({size_, rows, cols, symmetric});
    size_ += rows * cols;
    return static_cast<int>(slots_.size()) - 1;
  }

  Eigen::Index size() const { return size_; }
  int count() const { return static_cast<int>(slots_.size()); }
  const Slot& slot(int id) const { return slots_[static_cast<std::size_t>(id)]; }

  Eigen::Map<Matrix> block(Vector& v, int id) const {
    const Slot& s = slot(id);
    return Eigen::Map<Matrix>(v.data() + s.offset, s.rows, s.cols);
  }

  Eigen::Map<const Matrix> block(const Vector& v, int id) const {
    const Slot& s = slot(id);
    return Eigen::Map<const Matrix>(v.data() + s.offset, s.rows, s.cols);
  }

  Vector zeros() const { return Vector::Zero(size_); }

  /// Re-symmetrizes every symmetric slot; asymmetry above
  /// drift_tol * (1 + max|entry|) means the field is assembled wrongly.
  void symmetrize(Vector& v, double drift_tol = 1e-8) const {
    for (int id = 0; id < count(); ++id) {
      if (!slot(id).symmetric) continue;
      auto b = block(v, id);
      const double asym = max_asymmetry(b);
      const double scale = 1.0 + b.cwiseAbs().maxCoeff();
      if (asym > drift_tol * scale)
        throw Error(ErrorKind::AsymmetryDrift,
                    "symmetric state block " + std::to_string(id) + " drifted by " + std::to_string(asym));
      Matrix sym = symmetric_part(b);
      b = sym;
    }
  }

 private:
  std::vector<Slot> slots_;
  Eigen::Index size_ = 0;
};

/// Unpacks slot `id` of every node of a stacked path into its own path.
inline MatrixPath unstack(const Path<Vector>& stacked, const StackedLayout& layout, int id) {
  MatrixPath out;
  out.grid = stacked.grid;
  out.values.reserve(stacked.values.size());
  for (const auto& v : stacked.values) out.values.emplace_back(layout.block(v, id));
  if (!stacked.slopes.empty()) {
    out.slopes.reserve(stacked.slopes.size());
    for (const auto& v : stacked.slopes) out.slopes.emplace_back(layout.block(v, id));
  }
  return out;
}

/// Same as unstack for a column-vector slot.
inline VectorPath unstack_vector(const Path<Vector>& stacked, const StackedLayout& layout, int id) {
  VectorPath out;
  out.grid = stacked.grid;
  out.values.reserve(stacked.values.size());
  for (const auto& v : stacked.values) out.values.emplace_back(layout.block(v, id));
  if (!stacked.slopes.empty()) {
    out.slopes.reserve(stacked.slopes.size());
    for (const auto& v : stacked.slopes) out.slopes.emplace_back(layout.block(v, id));
  }
  return out;
}

}  // namespace mfg
