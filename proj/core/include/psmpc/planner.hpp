// SPDX-License-Identifier: Apache-2.0
//
// P-SMPC problem assembly and solution (Eq. 25, Algorithms 1-2), with the
// R-SMPC baseline as a mode switch (risk term dropped from the objective,
// identical constraint set).

#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "psmpc/milp/model.hpp"
#include "psmpc/milp/solver.hpp"
#include "psmpc/obstacles.hpp"
#include "psmpc/vehicle.hpp"

namespace psmpc::planner {

enum class Mode { Proactive, Regular };

struct PlannerConfig {
  int Np = 10;
  double ts = 0.2;
  double epsilon = 0.001;        // chance bound, in (0, 0.05]
  double lambda_v = 0.01;        // per m/s of reference deviation
  double lambda_u = 1e-5;        // per N (and per rad/s of d_delta)
  double lambda_tau = 0.02;      // per m of lane deviation
  std::vector<double> lane_centers = {-2.5, 2.5};
  Mode mode = Mode::Proactive;
  double force_scale = 5000.0;   // N; force variables live in scaled units
  double d_delta_max = 0.5;      // rad/s steering-rate bound

  void validate() const;  // throws ConfigError
};

PlannerConfig planner_config_from_json(const nlohmann::json& j);
nlohmann::json planner_config_to_json(const PlannerConfig& cfg);

// Algorithm 1 output: per-step (1..Np), per-obstacle MMPS functions.
struct ProbabilityFunctions {
  std::vector<std::vector<mmps::MmpsFunction>> probability;  // [step][obstacle]
  std::vector<std::vector<mmps::MmpsFunction>> proxy;
  bool extrapolation_warning = false;
};

ProbabilityFunctions develop_probabilities(
    const std::vector<obstacles::GaussianBelief>& beliefs,
    const obstacles::ObstacleModel& model, int Np,
    const obstacles::ProbabilityTemplates& templates);

// Variable bookkeeping for extraction and for the encoding-count tests.
struct StepVars {
  // states of step i (0..Np); inputs/tau only exist where applicable
  int x = -1, y = -1, psi = -1, v = -1, beta = -1, r = -1, delta = -1;
  int fxf = -1, fxr = -1, d_delta = -1;  // inputs applied over [i, i+1)
  int tau = -1;                          // lane deviation, steps 1..Np
  int risk = -1;                         // per-step risk epigraph, steps 1..Np
};

struct BuiltProblem {
  milp::MilpModel model;
  std::vector<StepVars> steps;  // size Np+1
  std::size_t continuous_count = 0;
  std::size_t binary_count = 0;
  std::vector<std::size_t> binaries_per_step;  // dynamics step i -> count
};

// Eq. (25). Throws ModelError when interval propagation proves the Table I
// box empty at some step (build-time infeasibility), DomainError when s0
// leaves the Table I box.
BuiltProblem build_problem(const vehicle::EgoState& s0,
                           const std::vector<double>& v_ref,
                           const ProbabilityFunctions& probs,
                           const PlannerConfig& cfg,
                           const vehicle::MmpsApproxSet& approx,
                           const vehicle::VehicleParams& params = {});

struct PlanResult {
  std::vector<vehicle::EgoState> trajectory;  // predicted states 1..Np
  std::vector<vehicle::EgoInput> inputs;      // inputs 0..Np-1, real units
  std::vector<double> tau;                    // lane deviations 1..Np
  double objective = 0.0;
  double risk_value = 0.0;        // Eq. (24) evaluated on the trajectory
  double max_chance_value = 0.0;  // max over steps/obstacles of [P]_MMPS
  milp::MilpStats solve_stats;
  double gap = 0.0;
};

nlohmann::json plan_result_to_json(const PlanResult& r);

// Build, solve to global optimality, extract — for callers that developed
// the probability functions themselves (e.g. per-obstacle noise models).
// Throws PlannerInfeasible (carrying the model) on an infeasible solve.
PlanResult plan_step(const vehicle::EgoState& s0, const ProbabilityFunctions& probs,
                     const std::vector<double>& v_ref, const PlannerConfig& cfg,
                     const vehicle::MmpsApproxSet& approx,
                     const vehicle::VehicleParams& params = {},
                     milp::MilpBackend* backend = nullptr);

// Algorithm 2: develop probabilities, build, solve to global optimality,
// extract. Frozen parameters v0 = s0.v, delta0 = s0.delta (Remark 2).
PlanResult plan_step(const vehicle::EgoState& s0,
                     const std::vector<obstacles::GaussianBelief>& beliefs,
                     const obstacles::ObstacleModel& obs_model,
                     const obstacles::ProbabilityTemplates& templates,
                     const std::vector<double>& v_ref, const PlannerConfig& cfg,
                     const vehicle::MmpsApproxSet& approx,
                     const vehicle::VehicleParams& params = {},
                     milp::MilpBackend* backend = nullptr);

}  // namespace psmpc::planner
