// SPDX-License-Identifier: Apache-2.0
//
// Fitting MMPS functions to scalar targets, Eq. (4):
//
//   min ∫_D ||f(x) - [f](x)|| / (||f(x)|| + eps0) dx
//
// discretized by trapezoid quadrature on a regular grid. The descent is a
// multi-start partition-refit scheme: assign each grid point to its active
// affine term, refit each term by weighted least squares, repeat. Restarts
// derive independent sub-seeds from FitOptions.seed, so the result is
// deterministic regardless of evaluation order.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "psmpc/mmps.hpp"

namespace psmpc::mmps {

using TargetFn = std::function<double(const std::vector<double>&)>;

struct FitOptions {
  std::size_t grid_resolution = 33;  // samples per dimension, >= 8
  double epsilon0 = 0.0;             // <= 0 means auto: 1e-3 * max|target|
  std::size_t restarts = 16;
  std::size_t max_iters = 60;
  std::uint64_t seed = 1;
  bool overestimate = false;
  // Penalty multiplier on under-estimating residuals when overestimate=true.
  double underestimate_penalty = 25.0;
};

// Structure request: number of terms in each group.
// Conjunctive: min over groups of max over terms; disjunctive mirrored.
struct FitStructure {
  std::vector<std::size_t> group_sizes;
  // Optional frozen terms, addressed by (group, term): kept verbatim through
  // the descent (used e.g. for the cap-at-1 cosine plane and the proxy's
  // pinned top plane). Terms beyond any group's size are ignored.
  std::vector<std::pair<std::size_t, std::size_t>> frozen;
  // Optional initial terms for restart 0 (initialization hints, e.g. the
  // Fig. 6 plane coefficients); remaining restarts stay random.
  std::optional<std::vector<std::vector<AffineTerm>>> init_hint;
};

struct FitReport {
  double objective = 0.0;           // achieved Eq. (4) quadrature value
  double max_abs_error = 0.0;       // on the validation grid (2*res-1 / axis)
  double max_abs_target = 0.0;      // scale reference for budgets
  double epsilon0 = 0.0;            // the regularizer actually used
  std::size_t winning_restart = 0;
  std::size_t iterations = 0;       // iterations of the winning restart
  double offset_lift = 0.0;         // applied by fit_overestimate, else 0
};

struct FitResult {
  MmpsFunction function;
  FitReport report;
};

// Multi-start partition-refit fit of `target` over `domain`.
// Throws FitDataError on non-finite target values, std::invalid_argument on
// malformed structure/options.
FitResult fit(const TargetFn& target, const Box& domain, Form form,
              const FitStructure& structure, const FitOptions& opts);

// As fit, with opts.overestimate forced on; the returned function dominates
// the target at every quadrature and validation grid point, exactly, via a
// final uniform offset lift.
FitResult fit_overestimate(const TargetFn& target, const Box& domain, Form form,
                           const FitStructure& structure, FitOptions opts);

// Scale f so that the trapezoid-quadrature integral of max(f, 0) over
// `domain` equals 1 (within 1e-6 at the quadrature used). Throws
// DegenerateDensityError when the integral is <= 0.
MmpsFunction normalize_density(const MmpsFunction& f, const Box& domain,
                               std::size_t grid_resolution = 401);

// Trapezoid-quadrature integral of max(f, 0); exposed for tests/oracles.
double density_integral(const MmpsFunction& f, const Box& domain,
                        std::size_t grid_resolution = 401);

// Deterministic sub-seed for restart r (splitmix64 step of seed ^ r).
std::uint64_t restart_seed(std::uint64_t seed, std::uint64_t r);

}  // namespace psmpc::mmps
