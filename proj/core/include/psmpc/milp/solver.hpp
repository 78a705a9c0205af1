// SPDX-License-Identifier: Apache-2.0
//
// Exact branch-and-bound MILP solver over the bounded-variable simplex core:
// best-first node selection (lowest relaxation bound), most-fractional
// branching, deterministic lowest-index tie breaking. A backend trait lets an
// external engine substitute the embedded solver for parity testing.

#pragma once

#include <limits>
#include <memory>
#include <string>

#include "psmpc/milp/model.hpp"

namespace psmpc::milp {

enum class MilpStatus { Optimal, Infeasible, TimeLimit };

struct SolveOptions {
  double gap = 1e-6;  // prune/terminate when objective - bound <= gap*max(1,|obj|)
  std::size_t node_limit = std::numeric_limits<std::size_t>::max();
  double time_limit = std::numeric_limits<double>::infinity();  // seconds
  // Optional full assignment (one value per variable) used to seed the
  // incumbent after witness replay and feasibility validation. Ignored when
  // empty or infeasible.
  std::vector<double> start;
};

struct MilpStats {
  std::size_t nodes = 0;
  std::size_t simplex_iterations = 0;
  double wall_time = 0.0;  // seconds
};

struct MilpSolution {
  MilpStatus status = MilpStatus::Infeasible;
  std::vector<double> values;  // per variable; incumbent when TimeLimit
  double objective = 0.0;
  double bound = 0.0;  // best dual (lower) bound
  MilpStats stats;
};

// Trait point: any engine satisfying the MilpSolution contract may substitute
// the embedded solver.
class MilpBackend {
 public:
  virtual ~MilpBackend() = default;
  virtual MilpSolution solve(const MilpModel& model, const SolveOptions& opts) = 0;
};

class BranchAndBoundSolver final : public MilpBackend {
 public:
  MilpSolution solve(const MilpModel& model, const SolveOptions& opts) override;
};

// Runs `command <model.lp> <solution.json>` in a scratch directory and reads
// back {"status": "...", "objective": x, "values": {name: value}}.
class ExternalProcessBackend final : public MilpBackend {
 public:
  explicit ExternalProcessBackend(std::string command, std::string scratch_dir);
  MilpSolution solve(const MilpModel& model, const SolveOptions& opts) override;

 private:
  std::string command_;
  std::string scratch_dir_;
};

// Convenience entry point using the embedded solver.
MilpSolution solve_milp(const MilpModel& model, const SolveOptions& opts = {});

}  // namespace psmpc::milp
