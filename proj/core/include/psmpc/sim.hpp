// SPDX-License-Identifier: Apache-2.0
//
// Closed-loop receding-horizon simulation of the §V scenarios with
// realizations (i)/(ii), the ±5% Monte-Carlo perturbation study, and the
// Fig. 9 metric collection (chance values, risk, per-step solve time).

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "psmpc/obstacles.hpp"
#include "psmpc/planner.hpp"
#include "psmpc/vehicle.hpp"

namespace psmpc::sim {

enum class EventAction { SetLateralTarget, SetSpeedTarget, Brake };

struct ScriptEvent {
  double t = 0.0;  // s, fires at the first control step with time >= t
  EventAction action = EventAction::SetSpeedTarget;
  double value = 0.0;  // target y [m] / target speed [m/s] / decel [m/s^2]
};

struct ScenarioObstacle {
  obstacles::ObstacleState init;
  bool is_static = false;  // static obstacles get a zero Xi0 and no noise
  std::vector<ScriptEvent> script;  // realization (ii) deviations; time-ordered
};

struct Road {
  std::vector<double> lane_centers = {-2.5, 2.5};
  double y_min = -6.0, y_max = 6.0;
};

struct Scenario {
  std::string name;
  vehicle::EgoState ego_init;
  double cruise_speed = 22.0;  // m/s, also the default v_ref profile
  std::vector<ScenarioObstacle> obstacles;
  Road road;
  planner::PlannerConfig planner;
  double duration = 10.0;  // s
  std::uint64_t seed = 1;
  bool zero_noise = true;  // realization (i) determinism flag
  obstacles::Geometry geometry;
  std::array<double, 4> Xi0 = {0.05, 0.02, 0.1, 0.05};

  void validate() const;  // throws ConfigError
};

Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& s);
Scenario load_scenario(const std::string& path);

// One control period of the run log.
struct StepLog {
  double t = 0.0;
  vehicle::EgoState ego;                          // state the plan observed
  std::vector<obstacles::ObstacleState> obstacles;  // true states observed
  double objective = 0.0;
  double risk = 0.0;
  double max_chance = 0.0;  // max over horizon/obstacles of [P]_MMPS
  double tau = 0.0;         // first-step lane deviation
  double solve_time = 0.0;  // s, wall clock (excluded from determinism)
  std::size_t nodes = 0;
  std::size_t simplex_iterations = 0;
};

struct RunRecord {
  std::string scenario_name;
  planner::Mode mode = planner::Mode::Proactive;
  std::vector<StepLog> steps;
  vehicle::EgoState ego_final;
  bool collision = false;
  bool complete = false;
  std::string abort_reason;  // set when !complete
  double mean_speed_error = 0.0;     // mean |v - cruise| over the run
  double max_lateral_excursion = 0.0;  // max |y - y_init|
  int terminal_lane_index = 0;       // nearest lane center at the end
};

// `include_timing=false` zeroes wall-clock fields — the byte-for-byte
// determinism contract compares that form.
nlohmann::json run_record_to_json(const RunRecord& r, bool include_timing = true);
void write_run_csv(const RunRecord& r, const std::string& path);

// Mutable world used by the closed loop; exposed for the step_world tests.
struct WorldObstacle {
  obstacles::ObstacleState state;
  double y_ref = 0.0;
  double v_ref = 0.0;
  double brake_decel = 0.0;  // active deceleration, 0 when not braking
  double v_floor = 0.0;      // braking stops at this speed
  std::size_t next_event = 0;
};

struct WorldState {
  vehicle::EgoState ego;
  std::vector<WorldObstacle> obstacles;
  double t = 0.0;
};

WorldState make_world(const Scenario& s);

// Advances every agent one control period: fires due script events, steps the
// obstacles through the (A-BK) loop of Eq. (9) toward their (scripted)
// references with optional N(0, Xi0) process noise, and integrates the
// nonlinear ego plant under `u`. Throws DomainError when the ego leaves the
// Table I box.
void step_world(WorldState& w, const Scenario& s, const obstacles::ObstacleModel& model,
                const vehicle::EgoInput& u, const vehicle::VehicleParams& params,
                std::mt19937_64& noise_rng);

// Closed set: ((dx/a)^2 + (dy/b)^2) <= 1.
bool collision_check(double ego_x, double ego_y, const obstacles::ObstacleState& obs,
                     const obstacles::Geometry& g);

// Receding-horizon loop: fresh beliefs (Xi <- Xi0) from the true obstacle
// states each step, plan, apply the first input to the nonlinear plant,
// advance the world, log. Infeasibility and box exits end the run with a
// partial record flagged incomplete; collisions set the flag and stop.
RunRecord run_closed_loop(const Scenario& s, const vehicle::MmpsApproxSet& approx,
                          const obstacles::ProbabilityTemplates& templates,
                          const vehicle::VehicleParams& params = {},
                          milp::MilpBackend* backend = nullptr);

struct MonteCarloSummary {
  std::size_t runs = 0;
  std::size_t collisions = 0;
  std::size_t incomplete = 0;
  double max_chance_overall = 0.0;  // max over all runs/steps of max [P]_MMPS
  double max_risk_overall = 0.0;
  double mean_max_chance = 0.0;     // mean over runs/steps
  double mean_risk = 0.0;
  // per-control-step aggregates over runs (Fig. 9a/9b quantities):
  std::vector<double> chance_mean, chance_q1, chance_q3;
  std::vector<double> risk_mean, risk_q1, risk_q3;
  // solve-time histogram (Fig. 9c): fixed 50 ms bins from 0, plus overflow.
  double histogram_bin_width = 0.05;
  std::vector<std::size_t> solve_time_histogram;
  double median_solve_time = 0.0;
};

struct MonteCarloResult {
  std::vector<RunRecord> runs;
  MonteCarloSummary summary;
};

// Uniform multiplicative perturbation (±fraction) of the ego/obstacle initial
// speeds and the ego-to-obstacle longitudinal gaps; per-run seeds derive
// deterministically from the scenario seed, so run k is reproducible alone.
MonteCarloResult monte_carlo(const Scenario& s, std::size_t n_runs, double perturbation,
                             const vehicle::MmpsApproxSet& approx,
                             const obstacles::ProbabilityTemplates& templates,
                             const vehicle::VehicleParams& params = {},
                             milp::MilpBackend* backend = nullptr);

nlohmann::json monte_carlo_summary_to_json(const MonteCarloSummary& s);

}  // namespace psmpc::sim
