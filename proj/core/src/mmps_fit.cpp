// SPDX-License-Identifier: Apache-2.0
//
// Multi-start partition-refit fitting for MMPS functions (Eq. 4 objective).

#include "psmpc/mmps_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

#include "psmpc/errors.hpp"

namespace psmpc::mmps {

namespace {

struct GridData {
  std::vector<std::vector<double>> points;
  std::vector<double> weights;  // trapezoid weights (cell volume included)
  std::vector<double> values;   // target at points
};

GridData build_grid(const TargetFn& target, const Box& domain, std::size_t res) {
  const std::size_t dim = domain.dim();
  std::size_t total = 1;
  for (std::size_t d = 0; d < dim; ++d) total *= res;

  GridData g;
  g.points.reserve(total);
  g.weights.reserve(total);
  g.values.reserve(total);

  std::vector<double> h(dim);
  for (std::size_t d = 0; d < dim; ++d)
    h[d] = (domain.hi[d] - domain.lo[d]) / static_cast<double>(res - 1);

  std::vector<std::size_t> idx(dim, 0);
  std::vector<double> x(dim);
  for (std::size_t flat = 0; flat < total; ++flat) {
    double w = 1.0;
    for (std::size_t d = 0; d < dim; ++d) {
      x[d] = domain.coord(d, idx[d], res);
      const double edge = (idx[d] == 0 || idx[d] == res - 1) ? 0.5 : 1.0;
      w *= edge * h[d];
    }
    const double t = target(x);
    if (!std::isfinite(t))
      throw FitDataError("fit: non-finite target value on quadrature grid");
    g.points.push_back(x);
    g.weights.push_back(w);
    g.values.push_back(t);
    // advance mixed-radix index
    for (std::size_t d = 0; d < dim; ++d) {
      if (++idx[d] < res) break;
      idx[d] = 0;
    }
  }
  return g;
}

// Finite-difference gradient of the target at grid point `x` (step h/4,
// clamped into the domain) for tangent-plane initialization.
AffineTerm tangent_plane(const TargetFn& target, const Box& domain,
                         const std::vector<double>& x, double fx) {
  const std::size_t dim = domain.dim();
  AffineTerm t;
  t.coeffs.assign(dim, 0.0);
  std::vector<double> xp = x, xm = x;
  for (std::size_t d = 0; d < dim; ++d) {
    const double h = 1e-3 * (domain.hi[d] - domain.lo[d]);
    xp[d] = std::min(x[d] + h, domain.hi[d]);
    xm[d] = std::max(x[d] - h, domain.lo[d]);
    const double denom = xp[d] - xm[d];
    t.coeffs[d] = denom > 0.0 ? (target(xp) - target(xm)) / denom : 0.0;
    xp[d] = x[d];
    xm[d] = x[d];
  }
  t.offset = fx;
  for (std::size_t d = 0; d < dim; ++d) t.offset -= t.coeffs[d] * x[d];
  return t;
}

// Active (group, term) at x with lowest-index tie-breaks, matching evaluate().
std::pair<std::size_t, std::size_t> active_term(const MmpsFunction& f,
                                                const std::vector<double>& x) {
  const bool conj = f.form == Form::Conjunctive;
  std::size_t best_g = 0, best_q = 0;
  double outer = conj ? std::numeric_limits<double>::infinity()
                      : -std::numeric_limits<double>::infinity();
  for (std::size_t gi = 0; gi < f.groups.size(); ++gi) {
    double inner = conj ? -std::numeric_limits<double>::infinity()
                        : std::numeric_limits<double>::infinity();
    std::size_t qi_best = 0;
    for (std::size_t qi = 0; qi < f.groups[gi].size(); ++qi) {
      const double v = f.groups[gi][qi].value(x);
      if (conj ? (v > inner) : (v < inner)) {
        inner = v;
        qi_best = qi;
      }
    }
    if (conj ? (inner < outer) : (inner > outer)) {
      outer = inner;
      best_g = gi;
      best_q = qi_best;
    }
  }
  return {best_g, best_q};
}

struct Objectives {
  double pure = 0.0;       // Eq. (4) quadrature value
  double penalized = 0.0;  // with under-estimation penalty (overestimate mode)
};

Objectives objective_of(const MmpsFunction& f, const GridData& g, double eps0,
                        bool overestimate, double penalty) {
  Objectives o;
  for (std::size_t i = 0; i < g.points.size(); ++i) {
    const double fx = evaluate(f, g.points[i]);
    const double resid = g.values[i] - fx;  // > 0 means f under-estimates
    const double term = g.weights[i] * std::abs(resid) / (std::abs(g.values[i]) + eps0);
    o.pure += term;
    o.penalized += (overestimate && resid > 0.0) ? penalty * term : term;
  }
  return o;
}

bool is_frozen(const FitStructure& s, std::size_t gi, std::size_t qi) {
  for (const auto& [fg, fq] : s.frozen)
    if (fg == gi && fq == qi) return true;
  return false;
}

}  // namespace

std::uint64_t restart_seed(std::uint64_t seed, std::uint64_t r) {
  // splitmix64 of (seed + golden-ratio stride * (r+1))
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (r + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

FitResult fit(const TargetFn& target, const Box& domain, Form form,
              const FitStructure& structure, const FitOptions& opts) {
  const std::size_t dim = domain.dim();
  if (dim == 0 || domain.hi.size() != dim)
    throw std::invalid_argument("fit: malformed domain");
  if (opts.grid_resolution < 8)
    throw std::invalid_argument("fit: grid_resolution must be >= 8");
  if (structure.group_sizes.empty())
    throw std::invalid_argument("fit: structure must have >= 1 group");
  for (std::size_t n : structure.group_sizes)
    if (n == 0) throw std::invalid_argument("fit: structure counts must be >= 1");

  const GridData grid = build_grid(target, domain, opts.grid_resolution);
  const std::size_t npts = grid.points.size();

  double max_abs_target = 0.0;
  for (double v : grid.values) max_abs_target = std::max(max_abs_target, std::abs(v));
  const double eps0 =
      opts.epsilon0 > 0.0 ? opts.epsilon0 : std::max(1e-3 * max_abs_target, 1e-12);

  MmpsFunction best;
  Objectives best_obj{std::numeric_limits<double>::infinity(),
                      std::numeric_limits<double>::infinity()};
  std::size_t best_restart = 0, best_iters = 0;

  for (std::size_t r = 0; r < std::max<std::size_t>(opts.restarts, 1); ++r) {
    std::mt19937_64 rng(restart_seed(opts.seed, r));
    std::uniform_int_distribution<std::size_t> pick(0, npts - 1);
    std::normal_distribution<double> jitter(0.0, 1.0);

    MmpsFunction f;
    f.form = form;
    f.dim = dim;
    f.domain = domain;
    f.groups.resize(structure.group_sizes.size());
    const bool use_hint = (r == 0) && structure.init_hint.has_value();
    for (std::size_t gi = 0; gi < f.groups.size(); ++gi) {
      f.groups[gi].resize(structure.group_sizes[gi]);
      for (std::size_t qi = 0; qi < f.groups[gi].size(); ++qi) {
        const bool hint_has = structure.init_hint.has_value() &&
                              gi < structure.init_hint->size() &&
                              qi < (*structure.init_hint)[gi].size();
        // frozen terms take their hint value on every restart — they are part
        // of the requested structure, not a starting guess
        if (hint_has && (use_hint || is_frozen(structure, gi, qi))) {
          f.groups[gi][qi] = (*structure.init_hint)[gi][qi];
          continue;
        }
        const std::size_t p = pick(rng);
        AffineTerm t = tangent_plane(target, domain, grid.points[p], grid.values[p]);
        if (!use_hint || r > 0) {
          const double scale = 1e-3 * (max_abs_target + eps0);
          for (double& c : t.coeffs) c *= 1.0 + 1e-3 * jitter(rng);
          t.offset += scale * jitter(rng);
        }
        f.groups[gi][qi] = t;
      }
    }

    std::vector<std::pair<std::size_t, std::size_t>> assign(npts);
    std::vector<std::size_t> empty_streak;
    std::size_t nterms = 0;
    for (std::size_t n : structure.group_sizes) nterms += n;
    empty_streak.assign(nterms, 0);

    MmpsFunction best_in_restart = f;
    Objectives best_in_restart_obj =
        objective_of(f, grid, eps0, opts.overestimate, opts.underestimate_penalty);
    std::size_t iters_done = 0;

    for (std::size_t iter = 0; iter < opts.max_iters; ++iter) {
      ++iters_done;
      bool changed = false;
      for (std::size_t i = 0; i < npts; ++i) {
        auto a = active_term(f, grid.points[i]);
        if (a != assign[i]) changed = true;
        assign[i] = a;
      }

      // refit each non-frozen term by weighted least squares on its partition
      std::size_t flat = 0;
      for (std::size_t gi = 0; gi < f.groups.size(); ++gi) {
        for (std::size_t qi = 0; qi < f.groups[gi].size(); ++qi, ++flat) {
          if (is_frozen(structure, gi, qi)) continue;
          Eigen::MatrixXd AtA = Eigen::MatrixXd::Zero(dim + 1, dim + 1);
          Eigen::VectorXd Atb = Eigen::VectorXd::Zero(dim + 1);
          std::size_t count = 0;
          for (std::size_t i = 0; i < npts; ++i) {
            if (assign[i] != std::make_pair(gi, qi)) continue;
            ++count;
            double w = grid.weights[i] / (std::abs(grid.values[i]) + eps0);
            if (opts.overestimate) {
              const double fx = f.groups[gi][qi].value(grid.points[i]);
              if (fx < grid.values[i]) w *= opts.underestimate_penalty;
            }
            Eigen::VectorXd phi(dim + 1);
            for (std::size_t d = 0; d < dim; ++d) phi(d) = grid.points[i][d];
            phi(dim) = 1.0;
            AtA.noalias() += w * phi * phi.transpose();
            Atb.noalias() += w * grid.values[i] * phi;
          }
          if (count < dim + 1) {
            // starved term: after two stagnant rounds, reseed at the point
            // with the worst current error (deterministic)
            if (++empty_streak[flat] >= 2) {
              std::size_t worst = 0;
              double worst_err = -1.0;
              for (std::size_t i = 0; i < npts; ++i) {
                const double e = std::abs(grid.values[i] - evaluate(f, grid.points[i]));
                if (e > worst_err) {
                  worst_err = e;
                  worst = i;
                }
              }
              f.groups[gi][qi] =
                  tangent_plane(target, domain, grid.points[worst], grid.values[worst]);
              empty_streak[flat] = 0;
              changed = true;
            }
            continue;
          }
          empty_streak[flat] = 0;
          // Tikhonov guard for collinear partitions
          AtA.diagonal().array() += 1e-12 * (AtA.trace() + 1.0);
          Eigen::VectorXd sol = AtA.ldlt().solve(Atb);
          for (std::size_t d = 0; d < dim; ++d) f.groups[gi][qi].coeffs[d] = sol(d);
          f.groups[gi][qi].offset = sol(dim);
        }
      }

      const Objectives obj =
          objective_of(f, grid, eps0, opts.overestimate, opts.underestimate_penalty);
      if (obj.penalized < best_in_restart_obj.penalized) {
        best_in_restart_obj = obj;
        best_in_restart = f;
      }
      if (!changed && iter > 0) break;
    }

    if (best_in_restart_obj.penalized < best_obj.penalized) {
      best_obj = best_in_restart_obj;
      best = best_in_restart;
      best_restart = r;
      best_iters = iters_done;
    }
  }

  // validation grid: twice the quadrature density
  const std::size_t vres = 2 * opts.grid_resolution - 1;
  const GridData vgrid = build_grid(target, domain, vres);
  double max_err = 0.0;
  for (std::size_t i = 0; i < vgrid.points.size(); ++i)
    max_err = std::max(max_err,
                       std::abs(vgrid.values[i] - evaluate(best, vgrid.points[i])));

  FitResult out;
  out.function = std::move(best);
  out.report.objective = best_obj.pure;
  out.report.max_abs_error = max_err;
  out.report.max_abs_target = max_abs_target;
  out.report.epsilon0 = eps0;
  out.report.winning_restart = best_restart;
  out.report.iterations = best_iters;
  return out;
}

FitResult fit_overestimate(const TargetFn& target, const Box& domain, Form form,
                           const FitStructure& structure, FitOptions opts) {
  opts.overestimate = true;
  FitResult res = fit(target, domain, form, structure, opts);

  // Post-hoc offset lift: raise all offsets until the function dominates the
  // target at every quadrature and validation grid point, exactly. Iterate to
  // absorb floating-point rounding of the shift itself.
  const GridData qgrid = build_grid(target, domain, opts.grid_resolution);
  const GridData vgrid = build_grid(target, domain, 2 * opts.grid_resolution - 1);
  double total_lift = 0.0;
  for (int round = 0; round < 64; ++round) {
    double viol = 0.0;
    for (const GridData* g : {&qgrid, &vgrid}) {
      for (std::size_t i = 0; i < g->points.size(); ++i)
        viol = std::max(viol, g->values[i] - evaluate(res.function, g->points[i]));
    }
    if (viol <= 0.0) break;
    const double bump = viol + 1e-15 * (std::abs(viol) + res.report.max_abs_target);
    res.function = shifted(res.function, bump);
    total_lift += bump;
  }
  res.report.offset_lift = total_lift;

  double max_err = 0.0;
  for (std::size_t i = 0; i < vgrid.points.size(); ++i)
    max_err = std::max(max_err, std::abs(vgrid.values[i] -
                                         evaluate(res.function, vgrid.points[i])));
  res.report.max_abs_error = max_err;
  return res;
}

double density_integral(const MmpsFunction& f, const Box& domain,
                        std::size_t grid_resolution) {
  const GridData g = build_grid([&](const std::vector<double>& x) {
    return std::max(evaluate(f, x), 0.0);
  }, domain, grid_resolution);
  double integral = 0.0;
  for (std::size_t i = 0; i < g.points.size(); ++i)
    integral += g.weights[i] * g.values[i];
  return integral;
}

MmpsFunction normalize_density(const MmpsFunction& f, const Box& domain,
                               std::size_t grid_resolution) {
  const double integral = density_integral(f, domain, grid_resolution);
  if (!(integral > 0.0))
    throw DegenerateDensityError("normalize_density: integral <= 0");
  // max(s*f, 0) = s*max(f, 0) for s > 0, so the scaled integral is exactly 1
  // under the same quadrature.
  return scaled(f, 1.0 / integral);
}

}  // namespace psmpc::mmps
