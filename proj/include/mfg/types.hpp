#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mfg/error.hpp"

namespace mfg {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

/// Uniform grid on [0, T] with M steps. The last node is pinned to T.
class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(double horizon, int steps) : horizon_(horizon), steps_(steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon))
      throw Error(ErrorKind::InvalidArgument, "time grid horizon must be positive");
    if (steps < 1) throw Error(ErrorKind::InvalidArgument, "time grid needs at least one step");
  }

  int steps() const { return steps_; }
  int size() const { return steps_ + 1; }
  double horizon() const { return horizon_; }
  double step() const { return horizon_ / steps_; }

  double node(int i) const {
    if (i >= steps_) return horizon_;
    return horizon_ * static_cast<double>(i) / static_cast<double>(steps_);
  }

  bool contains(double t) const {
    const double slack = 1e-12 * horizon_;
    return t >= -slack && t <= horizon_ + slack;
  }

  /// Interval index i and fraction theta in [0, 1] such that
  /// t = node(i) + theta * step(). Times within 1e-9 of a node snap onto it.
  std::pair<int, double> locate(double t) const {
    if (!contains(t))
      throw Error(ErrorKind::TimeOutOfRange,
                  "t = " + std::to_string(t) + " outside [0, " + std::to_string(horizon_) + "]");
    const double x = std::clamp(t / step(), 0.0, static_cast<double>(steps_));
    int i = static_cast<int>(std::floor(x));
    double theta = x - i;
    if (theta > 1.0 - 1e-9) {
      ++i;
      theta = 0.0;
    } else if (theta < 1e-9) {
      theta = 0.0;
    }
    if (i >= steps_) return {steps_ - 1, 1.0};
    return {i, theta};
  }

  /// Ratio r with this grid equal to `coarse` refined r times, if any.
  std::optional<int> refinement_of(const TimeGrid& coarse) const {
    if (std::abs(horizon_ - coarse.horizon_) > 1e-12 * horizon_) return std::nullopt;
    if (steps_ % coarse.steps_ != 0) return std::nullopt;
    return steps_ / coarse.steps_;
  }

  bool operator==(const TimeGrid& other) const {
    return steps_ == other.steps_ && horizon_ == other.horizon_;
  }

 private:
  double horizon_ = 1.0;
  int steps_ = 1;
};

/// Values sampled on every node of a grid; slopes (time derivatives at the
/// nodes) are present when the producer knows them.
template <typename Value>
struct Path {
  TimeGrid grid;
  std::vector<Value> values;
  std::vector<Value> slopes;

  const Value& operator[](int i) const { return values[static_cast<std::size_t>(i)]; }
  int size() const { return static_cast<int>(values.size()); }
  const Value& front() const { return values.front(); }
  const Value& back() const { return values.back(); }

  /// Piecewise-linear interpolation.
  Value at(double t) const {
    const auto [i, theta] = grid.locate(t);
    if (theta == 0.0) return values[static_cast<std::size_t>(i)];
    const Value& a = values[static_cast<std::size_t>(i)];
    const Value& b = values[static_cast<std::size_t>(i + 1)];
    return Value(a + theta * (b - a));
  }

  /// Cubic Hermite interpolation from node values and slopes.
  Value hermite(double t) const {
    const auto [i, theta] = grid.locate(t);
    if (theta == 0.0) return values[static_cast<std::size_t>(i)];
    const double h = grid.step();
    const double t2 = theta * theta;
    const double t3 = t2 * theta;
    const double h00 = 2 * t3 - 3 * t2 + 1;
    const double h10 = t3 - 2 * t2 + theta;
    const double h01 = -2 * t3 + 3 * t2;
    const double h11 = t3 - t2;
    const auto k = static_cast<std::size_t>(i);
    return Value(h00 * values[k] + (h10 * h) * slopes[k] + h01 * values[k + 1] +
                 (h11 * h) * slopes[k + 1]);
  }
};

using MatrixPath = Path<Matrix>;
using VectorPath = Path<Vector>;
using ScalarPath = Path<double>;

/// Finite escape of a backward (or forward) integration.
struct BlowUpReport {
  int escape_node = 0;
  double escape_time = 0.0;
  double norm_at_escape = 0.0;
  double threshold = 0.0;
  std::string phase;
};

template <typename T>
using OrBlowUp = std::variant<T, BlowUpReport>;

template <typename T>
bool blew_up(const OrBlowUp<T>& r) {
  return std::holds_alternative<BlowUpReport>(r);
}

template <typename T>
const T& solved(const OrBlowUp<T>& r) {
  return std::get<T>(r);
}

template <typename T>
T& solved(OrBlowUp<T>& r) {
  return std::get<T>(r);
}

template <typename T>
const BlowUpReport& blow_up(const OrBlowUp<T>& r) {
  return std::get<BlowUpReport>(r);
}

/// Named max-over-nodes discrepancies between two solution families.
struct DiffEntry {
  std::string name;
  double max_l1 = 0.0;
};

struct DiffReport {
  std::vector<DiffEntry> entries;
  double tolerance = 0.0;
  bool pass = false;

  double max_diff() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_l1);
    return m;
  }
};

}  // namespace mfg
