// SPDX-License-Identifier: Apache-2.0
//
// Bounded-variable dual simplex. Row i is stored as a_i^T x + s_i = rhs_i with
// the slack bounds encoding the sense, so the all-slack basis is always
// available and — with nonbasic structurals parked on their cost-preferred
// bound — always dual feasible. Bound changes never touch reduced costs,
// which is what makes branch-and-bound reoptimization cheap.

#include "psmpc/milp/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "psmpc/errors.hpp"

namespace psmpc::milp {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

LpSolver::LpSolver(const MilpModel& model, LpOptions opts) : opts_(opts) {
  model.validate();
  n_ = model.variables.size();
  m_ = model.constraints.size();
  total_ = n_ + m_;

  cols_.assign(n_, {});
  rhs_.resize(static_cast<Eigen::Index>(m_));
  lb_.assign(total_, 0.0);
  ub_.assign(total_, 0.0);
  cost_.assign(total_, 0.0);

  for (std::size_t j = 0; j < n_; ++j) {
    lb_[j] = model.variables[j].lower;
    ub_[j] = model.variables[j].upper;
    cost_[j] = model.objective[j];
  }
  // Two-sided equilibration with exact power-of-two factors: rows are
  // normalized by their largest coefficient (slack bounds are 0 or infinite,
  // so positive row scaling is free), then columns by the geometric mean of
  // their extreme magnitudes. The planner models mix big-M rows with
  // ~1e-4-scale dynamics coefficients; without this the basis factorizations
  // degrade within a few dozen pivots.
  const auto pow2 = [](double v) { return std::exp2(std::round(std::log2(v))); };
  std::vector<double> row_scale(m_, 1.0);
  std::vector<double> row_max(m_, 0.0);
  for (std::size_t i = 0; i < m_; ++i) {
    double mx = 0.0;
    for (const auto& e : model.constraints[i].row) mx = std::max(mx, std::abs(e.coef));
    row_max[i] = mx;
    if (mx > 0.0) row_scale[i] = pow2(1.0 / mx);
  }
  // Entries many orders below their row's largest coefficient are arithmetic
  // residue from the fitted-model composition, not structure; they contribute
  // less than the feasibility tolerance at any admissible point but wreck the
  // equilibration and the basis conditioning, so drop them here.
  const auto keep = [&](std::size_t i, const Entry& e) {
    return std::abs(e.coef) >= 1e-11 * row_max[i];
  };
  col_scale_.assign(n_, 1.0);
  {
    std::vector<double> cmax(n_, 0.0), cmin(n_, kInf);
    for (std::size_t i = 0; i < m_; ++i) {
      for (const auto& e : model.constraints[i].row) {
        if (!keep(i, e)) continue;
        const double a = std::abs(e.coef) * row_scale[i];
        if (a == 0.0) continue;
        auto& mx = cmax[static_cast<std::size_t>(e.var)];
        auto& mn = cmin[static_cast<std::size_t>(e.var)];
        mx = std::max(mx, a);
        mn = std::min(mn, a);
      }
    }
    for (std::size_t j = 0; j < n_; ++j) {
      if (cmax[j] > 0.0)
        col_scale_[j] = std::clamp(pow2(1.0 / std::sqrt(cmax[j] * cmin[j])),
                                   0x1p-8, 0x1p8);
    }
  }

  for (std::size_t j = 0; j < n_; ++j) {
    lb_[j] /= col_scale_[j];
    ub_[j] /= col_scale_[j];
    cost_[j] *= col_scale_[j];
  }
  for (std::size_t i = 0; i < m_; ++i) {
    const Constraint& c = model.constraints[i];
    rhs_(static_cast<Eigen::Index>(i)) = c.rhs * row_scale[i];
    for (const auto& e : c.row) {
      if (!keep(i, e)) continue;
      cols_[static_cast<std::size_t>(e.var)].push_back(
          {static_cast<int>(i),
           e.coef * row_scale[i] * col_scale_[static_cast<std::size_t>(e.var)]});
    }
    const std::size_t s = n_ + i;
    switch (c.sense) {
      case Sense::LE: lb_[s] = 0.0;   ub_[s] = kInf; break;
      case Sense::GE: lb_[s] = -kInf; ub_[s] = 0.0;  break;
      case Sense::EQ: lb_[s] = 0.0;   ub_[s] = 0.0;  break;
    }
  }

  basis_.basic.resize(m_);
  basis_.status.assign(total_, VarStatus::AtLower);
  for (std::size_t i = 0; i < m_; ++i) {
    basis_.basic[i] = static_cast<int>(n_ + i);
    basis_.status[n_ + i] = VarStatus::Basic;
  }
  for (std::size_t j = 0; j < n_; ++j)
    basis_.status[j] = cost_[j] >= 0.0 ? VarStatus::AtLower : VarStatus::AtUpper;
}

Eigen::VectorXd LpSolver::column(int j) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m_));
  if (static_cast<std::size_t>(j) < n_) {
    for (const auto& e : cols_[static_cast<std::size_t>(j)]) v(e.var) = e.coef;
  } else {
    v(j - static_cast<int>(n_)) = 1.0;
  }
  return v;
}

void LpSolver::factorize() {
  etas_.clear();
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t i = 0; i < m_; ++i) {
    const int j = basis_.basic[i];
    if (static_cast<std::size_t>(j) < n_) {
      for (const auto& e : cols_[static_cast<std::size_t>(j)])
        trips.emplace_back(e.var, static_cast<int>(i), e.coef);
    } else {
      trips.emplace_back(j - static_cast<int>(n_), static_cast<int>(i), 1.0);
    }
  }
  Eigen::SparseMatrix<double> B(static_cast<Eigen::Index>(m_),
                                static_cast<Eigen::Index>(m_));
  B.setFromTriplets(trips.begin(), trips.end());
  lu_.compute(B);
  factor_ok_ = lu_.info() == Eigen::Success;
  if (factor_ok_) {
    // near-singular bases can slip past the pivoting with garbage factors;
    // a one-solve residual probe catches them (and any NaN fallout)
    const Eigen::VectorXd b = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(m_));
    const Eigen::VectorXd x = lu_.solve(b);
    const double res = (B * x - b).cwiseAbs().maxCoeff();
    factor_ok_ = res < 1e-6;
  }
}

void LpSolver::ftran(Eigen::VectorXd& v) const {
  v = lu_.solve(v);
  for (const auto& e : etas_) {
    const double pr = v(e.row) / e.col(e.row);
    v -= pr * e.col;
    v(e.row) = pr;
  }
}

void LpSolver::btran(Eigen::VectorXd& v) {
  for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
    const double vr = (v(it->row) - it->col.dot(v) + it->col(it->row) * v(it->row)) /
                      it->col(it->row);
    v(it->row) = vr;
  }
  v = lu_.transpose().solve(v);
}

double LpSolver::bound_of(int j, bool upper) const {
  return upper ? ub_[static_cast<std::size_t>(j)] : lb_[static_cast<std::size_t>(j)];
}

void LpSolver::recompute_basic_values() {
  Eigen::VectorXd r = rhs_;
  for (std::size_t j = 0; j < total_; ++j) {
    if (basis_.status[j] == VarStatus::Basic) continue;
    const double val =
        basis_.status[j] == VarStatus::AtLower ? lb_[j] : ub_[j];
    if (val == 0.0) continue;
    if (j < n_) {
      for (const auto& e : cols_[j]) r(e.var) -= e.coef * val;
    } else {
      r(static_cast<Eigen::Index>(j - n_)) -= val;
    }
  }
  ftran(r);
  xb_ = r;
}

LpSolution LpSolver::solve_cold(const std::vector<double>& lb,
                                const std::vector<double>& ub) {
  for (std::size_t i = 0; i < m_; ++i) {
    basis_.basic[i] = static_cast<int>(n_ + i);
    basis_.status[n_ + i] = VarStatus::Basic;
  }
  for (std::size_t j = 0; j < n_; ++j)
    basis_.status[j] = cost_[j] >= 0.0 ? VarStatus::AtLower : VarStatus::AtUpper;
  return solve(lb, ub, nullptr);
}

LpSolution LpSolver::solve() {
  std::vector<double> lb(n_), ub(n_);
  for (std::size_t j = 0; j < n_; ++j) {
    lb[j] = lb_[j] * col_scale_[j];
    ub[j] = ub_[j] * col_scale_[j];
  }
  return solve(lb, ub, nullptr);
}

LpSolution LpSolver::solve(const std::vector<double>& lb, const std::vector<double>& ub,
                           const Basis* start) {
  if (lb.size() != n_ || ub.size() != n_)
    throw ModelError("LpSolver::solve: bound vector size mismatch");
  for (std::size_t j = 0; j < n_; ++j) {
    lb_[j] = lb[j] / col_scale_[j];
    ub_[j] = ub[j] / col_scale_[j];
  }
  if (start != nullptr) basis_ = *start;

  // Nonbasic variables sit exactly on their (possibly updated) bound; make
  // sure the referenced bound is finite (always true for our slack pivots).
  for (std::size_t j = 0; j < total_; ++j) {
    if (basis_.status[j] == VarStatus::Basic) continue;
    if (basis_.status[j] == VarStatus::AtLower && !std::isfinite(lb_[j]))
      basis_.status[j] = VarStatus::AtUpper;
    else if (basis_.status[j] == VarStatus::AtUpper && !std::isfinite(ub_[j]))
      basis_.status[j] = VarStatus::AtLower;
  }

  LpSolution sol;
  if (m_ == 0) {
    sol.status = LpStatus::Optimal;
    sol.x.resize(n_);
    double obj = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      if (lb_[j] > ub_[j] + opts_.tol) {
        sol.status = LpStatus::Infeasible;
        return sol;
      }
      const double xs = cost_[j] >= 0.0 ? lb_[j] : ub_[j];
      obj += cost_[j] * xs;
      sol.x[j] = xs * col_scale_[j];
    }
    sol.objective = obj;
    return sol;
  }

  // Conflicting bound overrides (branching on an already-fixed binary).
  for (std::size_t j = 0; j < n_; ++j) {
    if (lb_[j] > ub_[j] + opts_.tol) {
      sol.status = LpStatus::Infeasible;
      return sol;
    }
  }

  // Dual-degeneracy guard: these planner relaxations have thousands of
  // zero-length dual steps and can stall indefinitely. A deterministic,
  // status-aligned cost perturbation keeps the starting basis dual feasible
  // while making the ratios distinct; it is switched off once a primal
  // feasible basis is reached and the cleanup phase below then restores
  // optimality for the true costs.
  std::vector<double> pert_cost(cost_);
  bool pert_active = true;
  for (std::size_t j = 0; j < total_; ++j) {
    if (lb_[j] == ub_[j]) continue;
    double u = 0.6180339887498949 * static_cast<double>(j + 1);
    u -= std::floor(u);
    const double eps = 1e-6 * (1.0 + u);
    if (basis_.status[j] == VarStatus::AtLower)
      pert_cost[j] += eps;
    else if (basis_.status[j] == VarStatus::AtUpper)
      pert_cost[j] -= eps;
  }
  const auto costv = [&](std::size_t j) {
    return pert_active ? pert_cost[j] : cost_[j];
  };

  // Falls back to the all-slack basis with cost-preferred nonbasic bounds —
  // dual feasible under any bounds — when the warm basis turns out singular.
  const auto cold_reset = [&] {
    for (std::size_t i = 0; i < m_; ++i) {
      basis_.basic[i] = static_cast<int>(n_ + i);
      basis_.status[n_ + i] = VarStatus::Basic;
    }
    for (std::size_t j = 0; j < n_; ++j) {
      basis_.status[j] = costv(j) >= 0.0 ? VarStatus::AtLower : VarStatus::AtUpper;
      if (basis_.status[j] == VarStatus::AtLower && !std::isfinite(lb_[j]))
        basis_.status[j] = VarStatus::AtUpper;
      else if (basis_.status[j] == VarStatus::AtUpper && !std::isfinite(ub_[j]))
        basis_.status[j] = VarStatus::AtLower;
    }
    factorize();
    recompute_basic_values();
  };

  factorize();
  if (!factor_ok_) {
    cold_reset();
  } else {
    recompute_basic_values();
  }

  const double tol = opts_.tol;
  int resets = 0;
  int cleanups = 0;
  bool verified = false;
  struct Candidate {
    int j;
    double alpha;
    double ratio;
  };
  std::vector<Candidate> candidates;
  std::size_t iter = 0;
  for (; iter < opts_.max_iters; ++iter) {
    const bool bland = iter >= opts_.dantzig_limit;

    // leaving variable: most infeasible basic; under Bland's rule the
    // infeasible basic with the lowest variable index
    int r = -1;
    double worst = tol;
    int bland_best = -1;
    for (std::size_t i = 0; i < m_; ++i) {
      const int j = basis_.basic[i];
      const double v = xb_(static_cast<Eigen::Index>(i));
      double infeas = 0.0;
      if (v < lb_[static_cast<std::size_t>(j)] - tol)
        infeas = lb_[static_cast<std::size_t>(j)] - v;
      else if (v > ub_[static_cast<std::size_t>(j)] + tol)
        infeas = v - ub_[static_cast<std::size_t>(j)];
      if (infeas <= tol) continue;
      if (bland) {
        if (bland_best < 0 || j < bland_best) {
          bland_best = j;
          r = static_cast<int>(i);
        }
      } else if (infeas > worst) {
        worst = infeas;
        r = static_cast<int>(i);
      }
    }
    if (r < 0) {
      // primal feasible against the incrementally updated values; confirm
      // against a fresh factorization before declaring optimality
      if (!verified) {
        factorize();
        recompute_basic_values();
        verified = true;
        continue;
      }
      // primal feasibility reached: drop the perturbation and let the
      // cleanup pass re-optimize against the true costs
      if (pert_active) {
        pert_active = false;
        continue;
      }
      // primal finishing phase: the perturbed dual run ends primal feasible
      // but optimal only for the perturbed costs. Re-optimize for the true
      // costs with primal simplex steps — entering the most-violated column
      // and blocking on the basic ratio test (or on the column's own bound
      // gap), so primal feasibility is preserved throughout and the dual
      // loop never re-engages on the unperturbed, massively degenerate costs.
      if (cleanups < 5000) {
        ++cleanups;
        Eigen::VectorXd y(static_cast<Eigen::Index>(m_));
        for (std::size_t i = 0; i < m_; ++i)
          y(static_cast<Eigen::Index>(i)) =
              cost_[static_cast<std::size_t>(basis_.basic[i])];
        btran(y);
        int worst_j = -1;
        double worst_viol = 1e-8;
        for (std::size_t j = 0; j < total_; ++j) {
          if (basis_.status[j] == VarStatus::Basic) continue;
          if (lb_[j] == ub_[j]) continue;
          double d = cost_[j];
          if (j < n_) {
            for (const auto& e : cols_[j]) d -= y(e.var) * e.coef;
          } else {
            d -= y(static_cast<Eigen::Index>(j - n_));
          }
          const bool at_lower = basis_.status[j] == VarStatus::AtLower;
          const double viol = at_lower ? -d : d;
          if (viol > worst_viol) {
            worst_viol = viol;
            worst_j = static_cast<int>(j);
          }
        }
        if (worst_j >= 0) {
          const int q = worst_j;
          const bool at_lower = basis_.status[static_cast<std::size_t>(q)] ==
                                VarStatus::AtLower;
          const double dir = at_lower ? 1.0 : -1.0;
          Eigen::VectorXd w = column(q);
          ftran(w);
          int rr = -1;
          double t_best = kInf;
          bool leave_to_lower = false;
          for (std::size_t i = 0; i < m_; ++i) {
            const std::size_t k = static_cast<std::size_t>(basis_.basic[i]);
            const double rate = -dir * w(static_cast<Eigen::Index>(i));
            double lim = kInf;
            bool to_lower = false;
            if (rate < -tol && std::isfinite(lb_[k])) {
              lim = (xb_(static_cast<Eigen::Index>(i)) - lb_[k]) / (-rate);
              to_lower = true;
            } else if (rate > tol && std::isfinite(ub_[k])) {
              lim = (ub_[k] - xb_(static_cast<Eigen::Index>(i))) / rate;
            } else {
              continue;
            }
            lim = std::max(lim, 0.0);
            if (lim < t_best) {
              t_best = lim;
              rr = static_cast<int>(i);
              leave_to_lower = to_lower;
            }
          }
          const double gap = ub_[static_cast<std::size_t>(q)] -
                             lb_[static_cast<std::size_t>(q)];
          if (gap <= t_best) {
            // the column's own bound blocks first: flip it across, which
            // keeps every basic inside its bounds by construction
            xb_ -= dir * gap * w;
            basis_.status[static_cast<std::size_t>(q)] =
                at_lower ? VarStatus::AtUpper : VarStatus::AtLower;
            continue;
          }
          const double piv = rr >= 0 ? w(rr) : 0.0;
          if (rr < 0 || std::abs(piv) < 1e-11) {
            // unbounded direction or degenerate pivot column: both mean the
            // basis is numerically untrustworthy here, so rebuild it
            if (resets < 2) {
              ++resets;
              cold_reset();
              verified = false;
              continue;
            }
            break;
          }
          xb_ -= dir * t_best * w;
          xb_(rr) = at_lower ? lb_[static_cast<std::size_t>(q)] + t_best
                             : ub_[static_cast<std::size_t>(q)] - t_best;
          const int jL = basis_.basic[static_cast<std::size_t>(rr)];
          basis_.status[static_cast<std::size_t>(jL)] =
              leave_to_lower ? VarStatus::AtLower : VarStatus::AtUpper;
          basis_.status[static_cast<std::size_t>(q)] = VarStatus::Basic;
          basis_.basic[static_cast<std::size_t>(rr)] = q;
          etas_.push_back({rr, std::move(w)});
          if (etas_.size() >= opts_.refactor_every) {
            factorize();
            recompute_basic_values();
          }
          continue;
        }
      }
      break;
    }
    verified = false;

    const int jB = basis_.basic[static_cast<std::size_t>(r)];
    const bool below =
        xb_(r) < lb_[static_cast<std::size_t>(jB)] - tol;
    const double target = below ? lb_[static_cast<std::size_t>(jB)]
                                : ub_[static_cast<std::size_t>(jB)];
    const double delta = xb_(r) - target;  // negative when below

    // duals and row r of B^{-1}
    Eigen::VectorXd y(static_cast<Eigen::Index>(m_));
    for (std::size_t i = 0; i < m_; ++i)
      y(static_cast<Eigen::Index>(i)) = costv(static_cast<std::size_t>(basis_.basic[i]));
    btran(y);
    Eigen::VectorXd rho = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m_));
    rho(r) = 1.0;
    btran(rho);

    // dual ratio test: collect eligible candidates once, then Harris
    // two-pass selection — a relaxed ratio limit in pass one, the largest
    // pivot within that limit in pass two. Under Bland, strict minimum
    // ratio with lowest-index ties.
    candidates.clear();
    for (std::size_t j = 0; j < total_; ++j) {
      if (basis_.status[j] == VarStatus::Basic) continue;
      if (lb_[j] == ub_[j]) continue;  // fixed: can never re-enter usefully
      double alpha;
      double d = costv(j);
      if (j < n_) {
        alpha = 0.0;
        for (const auto& e : cols_[j]) {
          alpha += rho(e.var) * e.coef;
          d -= y(e.var) * e.coef;
        }
      } else {
        alpha = rho(static_cast<Eigen::Index>(j - n_));
        d -= y(static_cast<Eigen::Index>(j - n_));
      }
      const bool at_lower = basis_.status[j] == VarStatus::AtLower;
      // pivot tolerance well above pricing noise: an alpha at the 1e-9 level
      // routinely prices nonzero while the true column entry is exactly zero
      constexpr double kPivotTol = 1e-7;
      bool eligible;
      if (below)
        eligible = (at_lower && alpha < -kPivotTol) || (!at_lower && alpha > kPivotTol);
      else
        eligible = (at_lower && alpha > kPivotTol) || (!at_lower && alpha < -kPivotTol);
      if (!eligible) continue;
      candidates.push_back(
          {static_cast<int>(j), alpha, std::abs(d) / std::abs(alpha)});
    }
    int q = -1;
    double best_alpha = 0.0;
    if (!candidates.empty()) {
      if (bland) {
        double best_ratio = kInf;
        for (const auto& c : candidates) {
          if (c.ratio < best_ratio - 1e-12) {
            best_ratio = c.ratio;
            q = c.j;
            best_alpha = c.alpha;
          }
        }
      } else {
        constexpr double kDualTol = 1e-7;
        double limit = kInf;
        for (const auto& c : candidates)
          limit = std::min(
              limit, (c.ratio * std::abs(c.alpha) + kDualTol) / std::abs(c.alpha));
        for (const auto& c : candidates) {
          if (c.ratio <= limit && std::abs(c.alpha) > std::abs(best_alpha)) {
            q = c.j;
            best_alpha = c.alpha;
          }
        }
      }
    }
    if (q < 0) {
      // dual unbounded -> primal infeasible; re-derive once from a clean
      // basis so the conclusion never rests on a degraded factorization
      if (resets < 1 && (start != nullptr || !etas_.empty())) {
        ++resets;
        cold_reset();
        continue;
      }
      sol.status = LpStatus::Infeasible;
      sol.iterations = iter;
      return sol;
    }

    // pivot
    Eigen::VectorXd w = column(q);
    ftran(w);
    double piv = w(r);
    if (std::abs(piv) < 1e-10) {
      if (!etas_.empty()) {
        // the eta file has drifted far enough that pricing and the ftran'd
        // column disagree; refresh the factorization and redo the whole
        // iteration with exact pricing rather than pivot on noise
        factorize();
        recompute_basic_values();
        verified = false;
        continue;
      }
      // fresh factorization and still no usable pivot: the basis itself is
      // too ill-conditioned to trust, so rebuild from scratch
      if (resets < 2) {
        ++resets;
        cold_reset();
        continue;
      }
      sol.status = LpStatus::IterLimit;  // numerically stuck
      sol.iterations = iter;
      return sol;
    }

    const double val_q =
        basis_.status[static_cast<std::size_t>(q)] == VarStatus::AtLower
            ? lb_[static_cast<std::size_t>(q)]
            : ub_[static_cast<std::size_t>(q)];
    const double dq = delta / piv;
    xb_ -= dq * w;
    xb_(r) = val_q + dq;
    basis_.status[static_cast<std::size_t>(jB)] =
        below ? VarStatus::AtLower : VarStatus::AtUpper;
    basis_.status[static_cast<std::size_t>(q)] = VarStatus::Basic;
    basis_.basic[static_cast<std::size_t>(r)] = q;
    etas_.push_back({r, std::move(w)});
    if (etas_.size() >= opts_.refactor_every) {
      factorize();
      if (!factor_ok_ && resets < 2) {
        ++resets;
        cold_reset();
      } else {
        recompute_basic_values();
      }
    }
  }

  if (iter >= opts_.max_iters) {
    sol.status = LpStatus::IterLimit;
    sol.iterations = iter;
    return sol;
  }

  // extract
  sol.status = LpStatus::Optimal;
  sol.iterations = iter;
  sol.x.assign(n_, 0.0);
  for (std::size_t j = 0; j < n_; ++j)
    if (basis_.status[j] != VarStatus::Basic)
      sol.x[j] = basis_.status[j] == VarStatus::AtLower ? lb_[j] : ub_[j];
  for (std::size_t i = 0; i < m_; ++i) {
    const int j = basis_.basic[i];
    if (static_cast<std::size_t>(j) < n_)
      sol.x[static_cast<std::size_t>(j)] = xb_(static_cast<Eigen::Index>(i));
  }
  double obj = 0.0;
  for (std::size_t j = 0; j < n_; ++j) {
    obj += cost_[j] * sol.x[j];
    sol.x[j] *= col_scale_[j];  // back to model units
  }
  sol.objective = obj;
  return sol;
}

}  // namespace psmpc::milp
