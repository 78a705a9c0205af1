// SPDX-License-Identifier: Apache-2.0

#include "psmpc/milp/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <queue>

#include <nlohmann/json.hpp>

#include "psmpc/errors.hpp"
#include "psmpc/milp/simplex.hpp"

namespace psmpc::milp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Node {
  double bound = -kInf;  // parent LP objective (ordering key)
  std::size_t id = 0;    // creation order, deterministic tie break
  // nodes only record their own branching fixing and chain to the parent;
  // materializing full bound vectors per node exhausts memory on the deep
  // flat trees the planner models produce
  std::shared_ptr<const Node> parent;
  int fix_var = -1;
  double fix_val = 0.0;
  std::shared_ptr<const Basis> basis;  // shared with the sibling
};

struct NodeOrder {
  // best-first on the bound; among equal bounds, newest node first, so ties —
  // ubiquitous in these highly degenerate planner relaxations — are explored
  // as a depth-first dive that reaches an incumbent quickly
  bool operator()(const std::shared_ptr<Node>& a, const std::shared_ptr<Node>& b) const {
    if (a->bound != b->bound) return a->bound > b->bound;
    return a->id < b->id;
  }
};

// Iterative interval bound tightening over the rows, with binary rounding.
// Returns false when some variable's domain becomes empty. The derived
// bounds are valid for every integer-feasible point of the node, so feeding
// them to the relaxation keeps the node bound valid (and often sharper).
bool propagate_bounds(const MilpModel& model, std::vector<double>& lb,
                      std::vector<double>& ub) {
  constexpr double kFeasTol = 1e-7;
  constexpr double kGain = 1e-9;  // minimum improvement worth recording
  const std::size_t n = model.variables.size();
  for (int pass = 0; pass < 10; ++pass) {
    bool changed = false;
    for (const auto& c : model.constraints) {
      double lo = 0.0, hi = 0.0;
      for (const auto& e : c.row) {
        const std::size_t v = static_cast<std::size_t>(e.var);
        const double a = e.coef * lb[v];
        const double b = e.coef * ub[v];
        lo += std::min(a, b);
        hi += std::max(a, b);
      }
      if ((c.sense != Sense::GE && lo > c.rhs + kFeasTol) ||
          (c.sense != Sense::LE && hi < c.rhs - kFeasTol))
        return false;
      for (const auto& e : c.row) {
        const std::size_t v = static_cast<std::size_t>(e.var);
        if (e.coef == 0.0) continue;
        const double term_lo = std::min(e.coef * lb[v], e.coef * ub[v]);
        const double term_hi = std::max(e.coef * lb[v], e.coef * ub[v]);
        // a^T x <= rhs  =>  coef * x_v <= rhs - (lo - term_lo)
        if (c.sense != Sense::GE && std::isfinite(lo)) {
          const double room = c.rhs - (lo - term_lo);
          if (e.coef > 0.0) {
            const double nb = room / e.coef;
            if (nb < ub[v] - kGain) { ub[v] = nb; changed = true; }
          } else {
            const double nb = room / e.coef;
            if (nb > lb[v] + kGain) { lb[v] = nb; changed = true; }
          }
        }
        // a^T x >= rhs  =>  coef * x_v >= rhs - (hi - term_hi)
        if (c.sense != Sense::LE && std::isfinite(hi)) {
          const double room = c.rhs - (hi - term_hi);
          if (e.coef > 0.0) {
            const double nb = room / e.coef;
            if (nb > lb[v] + kGain) { lb[v] = nb; changed = true; }
          } else {
            const double nb = room / e.coef;
            if (nb < ub[v] - kGain) { ub[v] = nb; changed = true; }
          }
        }
      }
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (model.variables[v].type == VarType::Binary) {
        if (ub[v] < 1.0 - kFeasTol && ub[v] != 0.0) { ub[v] = 0.0; changed = true; }
        if (lb[v] > kFeasTol && lb[v] != 1.0) { lb[v] = 1.0; changed = true; }
      }
      if (lb[v] > ub[v] + kFeasTol) return false;
      if (lb[v] > ub[v]) lb[v] = ub[v];  // collapse round-off inversions
    }
    if (!changed) break;
  }
  return true;
}

}  // namespace

MilpSolution BranchAndBoundSolver::solve(const MilpModel& model,
                                         const SolveOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  model.validate();

  std::vector<int> bins;
  for (std::size_t j = 0; j < model.variables.size(); ++j)
    if (model.variables[j].type == VarType::Binary) bins.push_back(static_cast<int>(j));

  LpSolver lp(model);
  const std::size_t n = model.variables.size();

  MilpSolution out;
  double inc_obj = kInf;
  std::vector<double> inc_values;
  double pruned_min = kInf;

  // Replay the model witness over a candidate assignment, validate it and
  // adopt it as the incumbent when it improves. Returns true on adoption.
  const auto try_candidate = [&](std::vector<double> wx) {
    if (wx.size() != n || model.witness.empty()) return false;
    if (!model.replay_witness(wx) || model.max_violation(wx) >= 1e-7) return false;
    double wobj = 0.0;
    for (std::size_t j = 0; j < n; ++j) wobj += model.objective[j] * wx[j];
    if (wobj >= inc_obj) return false;
    inc_obj = wobj;
    inc_values = std::move(wx);
    return true;
  };
  try_candidate(opts.start);

  std::vector<double> root_lb(n), root_ub(n);
  for (std::size_t j = 0; j < n; ++j) {
    root_lb[j] = model.variables[j].lower;
    root_ub[j] = model.variables[j].upper;
  }

  std::priority_queue<std::shared_ptr<Node>, std::vector<std::shared_ptr<Node>>, NodeOrder>
      heap;
  auto root = std::make_shared<Node>();
  root->basis = std::make_shared<Basis>(lp.basis());
  heap.push(root);
  std::size_t next_id = 1;

  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  bool limit_hit = false;
  while (!heap.empty()) {
    if (elapsed() > opts.time_limit || out.stats.nodes >= opts.node_limit) {
      limit_hit = true;
      break;
    }
    auto node = heap.top();
    heap.pop();
    const double cutoff =
        inc_obj - 0.5 * opts.gap * std::max(1.0, std::abs(inc_obj));
    if (node->bound >= cutoff) {
      pruned_min = std::min(pruned_min, node->bound);
      continue;
    }

    // materialize the node's bounds: root box plus the branch fixings
    std::vector<double> nlb = root_lb, nub = root_ub;
    for (const Node* a = node.get(); a != nullptr; a = a->parent.get()) {
      if (a->fix_var < 0) continue;
      const std::size_t v = static_cast<std::size_t>(a->fix_var);
      nlb[v] = std::max(nlb[v], a->fix_val);
      nub[v] = std::min(nub[v], a->fix_val);
    }

    // node presolve: propagate the branching fixings through the rows. This
    // prunes children whose fixings are contradictory without paying the
    // LP's (slow, highly degenerate) infeasibility proof, and the tightened
    // bounds shrink the child relaxations.
    if (!propagate_bounds(model, nlb, nub)) continue;

    // warm starts are cheap when they work and pathological when they do
    // not: give the warm solve a small budget, and on a stall redo the node
    // cold — a cold solve of these relaxations is consistently moderate
    lp.options().max_iters = 3000;
    LpSolution rel = lp.solve(nlb, nub, node->basis.get());
    if (rel.status == LpStatus::IterLimit) {
      out.stats.simplex_iterations += rel.iterations;
      lp.options().max_iters = 50000;
      rel = lp.solve_cold(nlb, nub);
    }
    ++out.stats.nodes;
    out.stats.simplex_iterations += rel.iterations;
    if (rel.status == LpStatus::Infeasible) continue;
    if (rel.status == LpStatus::IterLimit)
      throw ModelError("solve_milp: LP iteration limit in node relaxation");
    const double obj = std::max(rel.objective, node->bound);
    if (obj >= cutoff) {
      pruned_min = std::min(pruned_min, obj);
      continue;
    }

    // witness rounding: keep the relaxation's values for the true decision
    // variables and replay the model's witness to rebuild every derived
    // variable and selector binary. Each success is a feasible incumbent —
    // without one, these flat-landscape trees wander for thousands of nodes
    // before happening upon an integral vertex.
    if (!model.witness.empty()) {
      if (!try_candidate(rel.x) && !inc_values.empty()) {
        // the raw relaxation decisions often roll out of the state box;
        // pulling them toward the incumbent's (feasible) decisions recovers
        // a usable candidate surprisingly often
        for (double t : {0.5, 0.25}) {
          std::vector<double> wx(n);
          for (std::size_t j = 0; j < n; ++j)
            wx[j] = t * rel.x[j] + (1.0 - t) * inc_values[j];
          if (try_candidate(std::move(wx))) break;
        }
      }
    }

    if (std::getenv("PSMPC_BB_DEBUG"))
      std::fprintf(stderr, "[dbg] node=%zu bound=%g obj=%g iters=%zu inc=%g heap=%zu\n",
                   out.stats.nodes, node->bound, obj, rel.iterations, inc_obj,
                   heap.size());
    // most-fractional binary, lowest index on ties
    int branch_var = -1;
    double best_frac = 1e-6;
    for (int j : bins) {
      const double v = rel.x[static_cast<std::size_t>(j)];
      const double frac = std::min(v - std::floor(v), std::ceil(v) - v);
      if (frac > best_frac + 1e-12) {
        best_frac = frac;
        branch_var = j;
      }
    }

    if (branch_var < 0) {
      // integral: new incumbent
      if (obj < inc_obj) {
        inc_obj = obj;
        inc_values = rel.x;
        for (int j : bins)
          inc_values[static_cast<std::size_t>(j)] =
              std::round(inc_values[static_cast<std::size_t>(j)]);
      }
      continue;
    }

    const auto snap = std::make_shared<Basis>(lp.basis());
    for (int side = 0; side < 2; ++side) {
      auto child = std::make_shared<Node>();
      child->bound = obj;
      child->id = next_id++;
      child->parent = node;
      child->fix_var = branch_var;
      child->fix_val = side == 0 ? 0.0 : 1.0;
      child->basis = snap;
      heap.push(child);
    }
  }

  out.stats.wall_time = elapsed();

  double frontier = pruned_min;
  while (!heap.empty()) {
    frontier = std::min(frontier, heap.top()->bound);
    heap.pop();
  }

  if (limit_hit) {
    out.status = MilpStatus::TimeLimit;
    if (!inc_values.empty()) {
      out.values = inc_values;
      out.objective = inc_obj + model.objective_offset;
    }
    out.bound = std::min(inc_obj, frontier) + model.objective_offset;
    return out;
  }

  if (inc_values.empty()) {
    out.status = MilpStatus::Infeasible;
    out.bound = kInf;
    return out;
  }
  out.status = MilpStatus::Optimal;
  out.values = inc_values;
  out.objective = inc_obj + model.objective_offset;
  out.bound = std::min(inc_obj, frontier) + model.objective_offset;
  return out;
}

MilpSolution solve_milp(const MilpModel& model, const SolveOptions& opts) {
  BranchAndBoundSolver s;
  return s.solve(model, opts);
}

// ── external backend ────────────────────────────────────────────────────────

ExternalProcessBackend::ExternalProcessBackend(std::string command,
                                               std::string scratch_dir)
    : command_(std::move(command)), scratch_dir_(std::move(scratch_dir)) {}

MilpSolution ExternalProcessBackend::solve(const MilpModel& model,
                                           const SolveOptions&) {
  namespace fs = std::filesystem;
  fs::create_directories(scratch_dir_);
  const std::string lp_path = scratch_dir_ + "/model.lp";
  const std::string sol_path = scratch_dir_ + "/solution.json";
  model.write_lp(lp_path);
  std::error_code ec;
  fs::remove(sol_path, ec);

  const std::string cmd = command_ + " " + lp_path + " " + sol_path;
  const int rc = std::system(cmd.c_str());
  MilpSolution out;
  if (rc != 0) throw ConfigError("external solver failed: " + cmd);

  std::ifstream in(sol_path);
  if (!in) throw ConfigError("external solver produced no solution file");
  nlohmann::json j;
  in >> j;
  const std::string status = j.at("status").get<std::string>();
  if (status == "optimal")
    out.status = MilpStatus::Optimal;
  else if (status == "infeasible")
    out.status = MilpStatus::Infeasible;
  else
    out.status = MilpStatus::TimeLimit;
  if (out.status != MilpStatus::Infeasible) {
    out.objective = j.at("objective").get<double>();
    out.bound = j.value("bound", out.objective);
    out.values.assign(model.variables.size(), 0.0);
    const auto& vals = j.at("values");
    for (std::size_t i = 0; i < model.variables.size(); ++i) {
      const auto it = vals.find(model.variables[i].name);
      if (it != vals.end()) out.values[i] = it->get<double>();
    }
  }
  return out;
}

}  // namespace psmpc::milp
