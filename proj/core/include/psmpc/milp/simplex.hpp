// SPDX-License-Identifier: Apache-2.0
//
// Bounded-variable revised simplex LP core (dual simplex). Because every
// structural variable has finite bounds, the all-slack basis with nonbasics
// at their cost-preferred bound is always dual feasible, so cold solves,
// infeasibility detection and branch-and-bound reoptimization all run through
// the same algorithm. LU factorization with a product-form eta file; Bland's
// rule engages after a Dantzig iteration budget.

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "psmpc/milp/model.hpp"

namespace psmpc::milp {

enum class LpStatus { Optimal, Infeasible, IterLimit };

struct LpOptions {
  double tol = 1e-7;                 // optimality / feasibility tolerance
  std::size_t max_iters = 50000;
  std::size_t dantzig_limit = 20000; // then Bland's rule
  std::size_t refactor_every = 64;   // eta-file length trigger
};

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  std::vector<double> x;  // structural variables only
  double objective = 0.0;
  std::size_t iterations = 0;
};

enum class VarStatus : std::uint8_t { Basic, AtLower, AtUpper };

struct Basis {
  std::vector<int> basic;          // one column index per row
  std::vector<VarStatus> status;   // per column (structural + slack)
};

class LpSolver {
 public:
  explicit LpSolver(const MilpModel& model, LpOptions opts = {});

  // Solve with per-structural-variable bound overrides (branch-and-bound
  // children). Warm starts from `start` when given, else from the current
  // internal basis (all-slack on first use).
  LpSolution solve(const std::vector<double>& lb, const std::vector<double>& ub,
                   const Basis* start = nullptr);
  LpSolution solve();  // model bounds, warm from current basis

  // Discard any warm state and solve from the all-slack basis. Used as the
  // rescue path when a warm start degenerates into an iteration-limit stall.
  LpSolution solve_cold(const std::vector<double>& lb, const std::vector<double>& ub);

  LpOptions& options() { return opts_; }

  const Basis& basis() const { return basis_; }
  std::size_t rows() const { return m_; }
  std::size_t cols() const { return total_; }

 private:
  void factorize();
  void ftran(Eigen::VectorXd& v) const;  // v <- B^{-1} v
  void btran(Eigen::VectorXd& v);  // v <- B^{-T} v
  Eigen::VectorXd column(int j) const;
  void recompute_basic_values();
  double bound_of(int j, bool upper) const;

  std::size_t n_ = 0, m_ = 0, total_ = 0;  // structurals, rows, columns
  std::vector<std::vector<Entry>> cols_;   // structural columns, by row
  Eigen::VectorXd rhs_;
  std::vector<double> cost_;
  std::vector<double> lb_, ub_;            // active bounds, all columns (scaled)
  std::vector<double> col_scale_;          // exact power-of-two equilibration
  LpOptions opts_;

  Basis basis_;
  // the basis is mostly identity (slack) columns, so a sparse factorization
  // is orders of magnitude cheaper than a dense one at these sizes
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu_;
  bool factor_ok_ = false;  // false when singular or failing a residual probe
  struct Eta {
    int row;
    Eigen::VectorXd col;
  };
  std::vector<Eta> etas_;
  Eigen::VectorXd xb_;  // basic variable values, aligned with basis_.basic
};

}  // namespace psmpc::milp
