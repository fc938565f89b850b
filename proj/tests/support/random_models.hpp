#pragma once

#include <cstdint>
#include <vector>

#include "mfg/model.hpp"
#include "mfg/types.hpp"

namespace mfg::fixtures {

/// Random model with every dynamics/coupling entry in [-0.5, 0.5], PSD
/// weights scaled to max entry 0.5, R0 = R = I, T = 1.
ModelParams random_model(std::uint64_t seed, int n, int K);

/// Same data restricted to one minor type (type 1's A, pi = [1]).
ModelParams single_type(const ModelParams& p);

/// The fixed 20-model suite: n in 1..3, K in 1..3, deterministic seeds.
std::vector<ModelParams> stable_suite();

/// n = n1 = n2 = 1, K = 1 model with only the minor's own LQ problem active.
ModelParams scalar_decoupled(double a, double b, double q, double r, double qf, double T = 1.0);

/// Scalar K = 1 model whose minor players are pulled towards gamma2 times
/// the population mean; Q and Qf are multiplied by `scale`. For gamma2 > 1
/// the solution escapes in finite time once scale is large enough.
ModelParams repulsive_model(double gamma2, double a, double scale);

/// Smallest Q-scale (to relative width 1e-6) at which the limiting system of
/// repulsive_model(gamma2, a, .) escapes before t = 0 on `grid`.
double escape_scale(double gamma2, double a, const TimeGrid& grid);

}  // namespace mfg::fixtures
