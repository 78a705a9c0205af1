// SPDX-License-Identifier: Apache-2.0

#include "psmpc/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "psmpc/errors.hpp"
#include "psmpc/mmps_fit.hpp"

namespace psmpc::sim {

namespace {

std::string action_name(EventAction a) {
  switch (a) {
    case EventAction::SetLateralTarget: return "set_lateral_target";
    case EventAction::SetSpeedTarget: return "set_speed_target";
    case EventAction::Brake: return "brake";
  }
  return "?";
}

EventAction action_from_name(const std::string& s) {
  if (s == "set_lateral_target") return EventAction::SetLateralTarget;
  if (s == "set_speed_target") return EventAction::SetSpeedTarget;
  if (s == "brake") return EventAction::Brake;
  throw ConfigError("unknown script action: " + s);
}

}  // namespace

void Scenario::validate() const {
  planner.validate();
  if (duration <= 0.0) throw ConfigError("scenario duration must be positive");
  const vehicle::EgoBounds box;
  if (!box.contains(ego_init)) throw ConfigError("ego_init outside the admissible box");
  for (const auto& o : obstacles) {
    if (o.init.xdot < 0.0 || o.init.xdot > box.v_max)
      throw ConfigError("obstacle speed outside [0, 50]");
    if (std::abs(o.init.ydot) > 5.0) throw ConfigError("obstacle |ydot| > 5");
    if (std::abs(o.init.y) > road.y_max) throw ConfigError("obstacle outside the road");
    double prev = -1e300;
    for (const auto& e : o.script) {
      if (e.t < prev) throw ConfigError("script events must be time-ordered");
      prev = e.t;
    }
  }
  for (double c : Xi0)
    if (c < 0.0) throw ConfigError("Xi0 entries must be nonnegative");
}

Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario s;
  s.name = j.value("name", std::string{});
  if (j.contains("ego_init")) {
    const auto& e = j.at("ego_init");
    s.ego_init.x = e.value("x", 0.0);
    s.ego_init.y = e.value("y", 0.0);
    s.ego_init.psi = e.value("psi", 0.0);
    s.ego_init.v = e.value("v", 22.0);
    s.ego_init.beta = e.value("beta", 0.0);
    s.ego_init.r = e.value("r", 0.0);
    s.ego_init.delta = e.value("delta", 0.0);
  }
  s.cruise_speed = j.value("cruise_speed", 22.0);
  if (j.contains("obstacles")) {
    for (const auto& jo : j.at("obstacles")) {
      ScenarioObstacle o;
      const auto& i = jo.at("init");
      o.init = {i.value("x", 0.0), i.value("y", 0.0), i.value("xdot", 0.0),
                i.value("ydot", 0.0)};
      o.is_static = jo.value("static", false);
      if (jo.contains("script")) {
        for (const auto& je : jo.at("script")) {
          ScriptEvent e;
          e.t = je.at("t").get<double>();
          e.action = action_from_name(je.at("action").get<std::string>());
          e.value = je.at("value").get<double>();
          o.script.push_back(e);
        }
      }
      s.obstacles.push_back(std::move(o));
    }
  }
  if (j.contains("road")) {
    const auto& r = j.at("road");
    if (r.contains("lane_centers"))
      s.road.lane_centers = r.at("lane_centers").get<std::vector<double>>();
    s.road.y_min = r.value("y_min", -6.0);
    s.road.y_max = r.value("y_max", 6.0);
  }
  if (j.contains("planner")) s.planner = planner::planner_config_from_json(j.at("planner"));
  s.planner.lane_centers = s.road.lane_centers;
  s.duration = j.value("duration", 10.0);
  s.seed = j.value("seed", std::uint64_t{1});
  s.zero_noise = j.value("zero_noise", true);
  if (j.contains("geometry")) {
    const auto& g = j.at("geometry");
    s.geometry.a = g.value("a", 5.0);
    s.geometry.b = g.value("b", 2.0);
    s.geometry.sigma_floor_x = g.value("sigma_floor_x", 0.30);
    s.geometry.sigma_floor_y = g.value("sigma_floor_y", 0.15);
  }
  if (j.contains("Xi0")) {
    const auto v = j.at("Xi0").get<std::vector<double>>();
    if (v.size() != 4) throw ConfigError("Xi0 must have 4 entries");
    std::copy(v.begin(), v.end(), s.Xi0.begin());
  }
  s.validate();
  return s;
}

nlohmann::json scenario_to_json(const Scenario& s) {
  nlohmann::json jo = nlohmann::json::array();
  for (const auto& o : s.obstacles) {
    nlohmann::json js = nlohmann::json::array();
    for (const auto& e : o.script)
      js.push_back({{"t", e.t}, {"action", action_name(e.action)}, {"value", e.value}});
    jo.push_back({{"init",
                   {{"x", o.init.x},
                    {"y", o.init.y},
                    {"xdot", o.init.xdot},
                    {"ydot", o.init.ydot}}},
                  {"static", o.is_static},
                  {"script", js}});
  }
  return nlohmann::json{
      {"name", s.name},
      {"ego_init",
       {{"x", s.ego_init.x},
        {"y", s.ego_init.y},
        {"psi", s.ego_init.psi},
        {"v", s.ego_init.v},
        {"beta", s.ego_init.beta},
        {"r", s.ego_init.r},
        {"delta", s.ego_init.delta}}},
      {"cruise_speed", s.cruise_speed},
      {"obstacles", jo},
      {"road",
       {{"lane_centers", s.road.lane_centers},
        {"y_min", s.road.y_min},
        {"y_max", s.road.y_max}}},
      {"planner", planner::planner_config_to_json(s.planner)},
      {"duration", s.duration},
      {"seed", s.seed},
      {"zero_noise", s.zero_noise},
      {"geometry",
       {{"a", s.geometry.a},
        {"b", s.geometry.b},
        {"sigma_floor_x", s.geometry.sigma_floor_x},
        {"sigma_floor_y", s.geometry.sigma_floor_y}}},
      {"Xi0", s.Xi0}};
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scenario parse error in " + path + ": " + e.what());
  }
  return scenario_from_json(j);
}

WorldState make_world(const Scenario& s) {
  WorldState w;
  w.ego = s.ego_init;
  for (const auto& o : s.obstacles) {
    WorldObstacle wo;
    wo.state = o.init;
    wo.y_ref = o.init.y;
    wo.v_ref = o.init.xdot;
    w.obstacles.push_back(wo);
  }
  return w;
}

bool collision_check(double ego_x, double ego_y, const obstacles::ObstacleState& obs,
                     const obstacles::Geometry& g) {
  const double dx = (ego_x - obs.x) / g.a;
  const double dy = (ego_y - obs.y) / g.b;
  return dx * dx + dy * dy <= 1.0;
}

void step_world(WorldState& w, const Scenario& s, const obstacles::ObstacleModel& model,
                const vehicle::EgoInput& u, const vehicle::VehicleParams& params,
                std::mt19937_64& noise_rng) {
  const double ts = model.ts;
  for (std::size_t oi = 0; oi < w.obstacles.size(); ++oi) {
    WorldObstacle& o = w.obstacles[oi];
    const auto& script = s.obstacles[oi].script;
    while (o.next_event < script.size() && script[o.next_event].t <= w.t + 1e-9) {
      const ScriptEvent& e = script[o.next_event++];
      switch (e.action) {
        case EventAction::SetLateralTarget:
          o.y_ref = e.value;
          break;
        case EventAction::SetSpeedTarget:
          o.v_ref = e.value;
          o.v_floor = e.value;
          o.brake_decel = 0.0;
          break;
        case EventAction::Brake:
          o.brake_decel = e.value;
          break;
      }
    }
    if (o.brake_decel > 0.0)
      o.v_ref = std::max(o.v_ref - o.brake_decel * ts, o.v_floor);

    // Eq. (9) closed loop toward the scripted reference held at the current
    // longitudinal position (speed tracking, not trajectory tracking).
    const Eigen::Vector4d z = o.state.vec();
    Eigen::Vector4d ref{z(0), o.y_ref, o.v_ref, 0.0};
    Eigen::Vector4d next = model.A * z + model.B * (model.K * (ref - z));
    if (!s.zero_noise && !s.obstacles[oi].is_static) {
      std::normal_distribution<double> gauss(0.0, 1.0);
      for (int c = 0; c < 4; ++c) next(c) += std::sqrt(s.Xi0[static_cast<std::size_t>(c)]) * gauss(noise_rng);
    }
    o.state = obstacles::ObstacleState::from_vec(next);
  }

  w.ego = vehicle::integrate_nonlinear(w.ego, u, params, ts);
  if (!vehicle::EgoBounds{}.contains(w.ego))
    throw DomainError("ego left the admissible box");
  w.t += ts;
}

namespace {

int nearest_lane(double y, const std::vector<double>& centers) {
  int best = 0;
  double bd = std::abs(y - centers.front());
  for (std::size_t i = 1; i < centers.size(); ++i) {
    const double d = std::abs(y - centers[i]);
    if (d < bd) {
      bd = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace

RunRecord run_closed_loop(const Scenario& s, const vehicle::MmpsApproxSet& approx,
                          const obstacles::ProbabilityTemplates& templates,
                          const vehicle::VehicleParams& params,
                          milp::MilpBackend* backend) {
  s.validate();
  RunRecord rec;
  rec.scenario_name = s.name;
  rec.mode = s.planner.mode;

  const auto model =
      obstacles::ObstacleModel::make(s.planner.ts, 0.6, 0.4, s.Xi0, s.geometry);
  const auto model_static = obstacles::ObstacleModel::make(
      s.planner.ts, 0.6, 0.4, {0.0, 0.0, 0.0, 0.0}, s.geometry);

  WorldState w = make_world(s);
  std::mt19937_64 noise_rng(s.seed);
  const int n_steps = static_cast<int>(std::lround(s.duration / s.planner.ts));
  const std::vector<double> v_ref(static_cast<std::size_t>(s.planner.Np), s.cruise_speed);
  const std::size_t Np = static_cast<std::size_t>(s.planner.Np);

  double speed_err_sum = 0.0;
  bool aborted = false;

  for (const auto& o : w.obstacles)
    if (collision_check(w.ego.x, w.ego.y, o.state, s.geometry)) rec.collision = true;

  for (int k = 0; k < n_steps && !rec.collision && !aborted; ++k) {
    // Algorithm 1 with fresh beliefs: Xi <- Xi0 (zero for static obstacles).
    planner::ProbabilityFunctions probs;
    probs.probability.assign(Np, {});
    probs.proxy.assign(Np, {});
    for (std::size_t oi = 0; oi < w.obstacles.size(); ++oi) {
      obstacles::GaussianBelief b;
      b.mean = w.obstacles[oi].state;
      if (!s.obstacles[oi].is_static)
        for (int c = 0; c < 4; ++c)
          b.sigma[static_cast<std::size_t>(c)] = std::sqrt(s.Xi0[static_cast<std::size_t>(c)]);
      auto one = planner::develop_probabilities(
          {b}, s.obstacles[oi].is_static ? model_static : model, s.planner.Np, templates);
      for (std::size_t i = 0; i < Np; ++i) {
        probs.probability[i].push_back(std::move(one.probability[i][0]));
        probs.proxy[i].push_back(std::move(one.proxy[i][0]));
      }
    }

    StepLog log;
    log.t = w.t;
    log.ego = w.ego;
    for (const auto& o : w.obstacles) log.obstacles.push_back(o.state);

    planner::PlanResult pr;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      pr = planner::plan_step(w.ego, probs, v_ref, s.planner, approx, params, backend);
    } catch (const PlannerInfeasible&) {
      rec.abort_reason = "planner infeasible";
      aborted = true;
      break;
    } catch (const ModelError& e) {
      rec.abort_reason = std::string("model build failed: ") + e.what();
      aborted = true;
      break;
    }
    const auto t1 = std::chrono::steady_clock::now();
    log.solve_time = std::chrono::duration<double>(t1 - t0).count();
    log.objective = pr.objective;
    log.risk = pr.risk_value;
    log.max_chance = pr.max_chance_value;
    log.tau = pr.tau.empty() ? 0.0 : pr.tau.front();
    log.nodes = pr.solve_stats.nodes;
    log.simplex_iterations = pr.solve_stats.simplex_iterations;
    rec.steps.push_back(std::move(log));

    speed_err_sum += std::abs(w.ego.v - s.cruise_speed);
    try {
      step_world(w, s, model, pr.inputs.front(), params, noise_rng);
    } catch (const DomainError& e) {
      rec.abort_reason = e.what();
      aborted = true;
      break;
    }
    rec.max_lateral_excursion =
        std::max(rec.max_lateral_excursion, std::abs(w.ego.y - s.ego_init.y));
    for (const auto& o : w.obstacles)
      if (collision_check(w.ego.x, w.ego.y, o.state, s.geometry)) rec.collision = true;
  }

  rec.ego_final = w.ego;
  rec.complete = !aborted && !rec.collision;
  if (rec.collision && rec.abort_reason.empty()) rec.abort_reason = "collision";
  if (!rec.steps.empty())
    rec.mean_speed_error = speed_err_sum / static_cast<double>(rec.steps.size());
  rec.terminal_lane_index = nearest_lane(w.ego.y, s.road.lane_centers);
  return rec;
}

nlohmann::json run_record_to_json(const RunRecord& r, bool include_timing) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& st : r.steps) {
    nlohmann::json obs = nlohmann::json::array();
    for (const auto& o : st.obstacles)
      obs.push_back({{"x", o.x}, {"y", o.y}, {"xdot", o.xdot}, {"ydot", o.ydot}});
    steps.push_back({{"t", st.t},
                     {"ego",
                      {{"x", st.ego.x},
                       {"y", st.ego.y},
                       {"psi", st.ego.psi},
                       {"v", st.ego.v},
                       {"beta", st.ego.beta},
                       {"r", st.ego.r},
                       {"delta", st.ego.delta}}},
                     {"obstacles", obs},
                     {"objective", st.objective},
                     {"risk", st.risk},
                     {"max_chance", st.max_chance},
                     {"tau", st.tau},
                     {"solve_time", include_timing ? st.solve_time : 0.0},
                     {"nodes", st.nodes},
                     {"simplex_iterations", st.simplex_iterations}});
  }
  return nlohmann::json{
      {"scenario", r.scenario_name},
      {"mode", r.mode == planner::Mode::Proactive ? "proactive" : "regular"},
      {"steps", steps},
      {"ego_final",
       {{"x", r.ego_final.x}, {"y", r.ego_final.y}, {"v", r.ego_final.v}}},
      {"collision", r.collision},
      {"complete", r.complete},
      {"abort_reason", r.abort_reason},
      {"mean_speed_error", r.mean_speed_error},
      {"max_lateral_excursion", r.max_lateral_excursion},
      {"terminal_lane_index", r.terminal_lane_index}};
}

void write_run_csv(const RunRecord& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  const std::size_t n_obs = r.steps.empty() ? 0 : r.steps.front().obstacles.size();
  out << "t,x,y,psi,v,beta,r,delta,objective,risk,max_chance,tau,solve_time,nodes,"
         "simplex_iterations";
  for (std::size_t i = 0; i < n_obs; ++i)
    out << ",obs" << i << "_x,obs" << i << "_y,obs" << i << "_xdot,obs" << i << "_ydot";
  out << '\n';
  char buf[64];
  const auto put = [&](double v, char sep) {
    std::snprintf(buf, sizeof buf, "%.12g%c", v, sep);
    out << buf;
  };
  for (const auto& st : r.steps) {
    put(st.t, ',');
    put(st.ego.x, ',');
    put(st.ego.y, ',');
    put(st.ego.psi, ',');
    put(st.ego.v, ',');
    put(st.ego.beta, ',');
    put(st.ego.r, ',');
    put(st.ego.delta, ',');
    put(st.objective, ',');
    put(st.risk, ',');
    put(st.max_chance, ',');
    put(st.tau, ',');
    put(st.solve_time, ',');
    out << st.nodes << ',' << st.simplex_iterations;
    for (const auto& o : st.obstacles) {
      out << ',';
      put(o.x, ',');
      put(o.y, ',');
      put(o.xdot, ',');
      std::snprintf(buf, sizeof buf, "%.12g", o.ydot);
      out << buf;
    }
    out << '\n';
  }
}

namespace {

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace

MonteCarloResult monte_carlo(const Scenario& s, std::size_t n_runs, double perturbation,
                             const vehicle::MmpsApproxSet& approx,
                             const obstacles::ProbabilityTemplates& templates,
                             const vehicle::VehicleParams& params,
                             milp::MilpBackend* backend) {
  if (n_runs < 1) throw ConfigError("monte_carlo requires n_runs >= 1");
  if (perturbation < 0.0 || perturbation >= 1.0)
    throw ConfigError("perturbation fraction must lie in [0, 1)");

  MonteCarloResult out;
  for (std::size_t k = 0; k < n_runs; ++k) {
    Scenario sk = s;
    if (perturbation > 0.0) {
      sk.seed = mmps::restart_seed(s.seed, k + 1);
      std::mt19937_64 rng(sk.seed);
      std::uniform_real_distribution<double> fac(1.0 - perturbation, 1.0 + perturbation);
      sk.ego_init.v = std::clamp(sk.ego_init.v * fac(rng), 5.0, 50.0);
      for (auto& o : sk.obstacles) {
        if (!o.is_static) o.init.xdot *= fac(rng);
        o.init.x = sk.ego_init.x + (o.init.x - sk.ego_init.x) * fac(rng);
      }
    }
    out.runs.push_back(run_closed_loop(sk, approx, templates, params, backend));
  }

  MonteCarloSummary& sum = out.summary;
  sum.runs = n_runs;
  std::size_t max_len = 0;
  std::vector<double> all_times;
  double chance_sum = 0.0, risk_sum = 0.0;
  std::size_t n_logged = 0;
  for (const auto& r : out.runs) {
    if (r.collision) ++sum.collisions;
    if (!r.complete && !r.collision) ++sum.incomplete;
    max_len = std::max(max_len, r.steps.size());
    for (const auto& st : r.steps) {
      sum.max_chance_overall = std::max(sum.max_chance_overall, st.max_chance);
      sum.max_risk_overall = std::max(sum.max_risk_overall, st.risk);
      chance_sum += st.max_chance;
      risk_sum += st.risk;
      all_times.push_back(st.solve_time);
      ++n_logged;
    }
  }
  if (n_logged > 0) {
    sum.mean_max_chance = chance_sum / static_cast<double>(n_logged);
    sum.mean_risk = risk_sum / static_cast<double>(n_logged);
  }
  for (std::size_t i = 0; i < max_len; ++i) {
    std::vector<double> chance, risk;
    for (const auto& r : out.runs) {
      if (i < r.steps.size()) {
        chance.push_back(r.steps[i].max_chance);
        risk.push_back(r.steps[i].risk);
      }
    }
    double cm = 0.0, rm = 0.0;
    for (double c : chance) cm += c;
    for (double c : risk) rm += c;
    sum.chance_mean.push_back(cm / static_cast<double>(chance.size()));
    sum.chance_q1.push_back(quantile(chance, 0.25));
    sum.chance_q3.push_back(quantile(chance, 0.75));
    sum.risk_mean.push_back(rm / static_cast<double>(risk.size()));
    sum.risk_q1.push_back(quantile(risk, 0.25));
    sum.risk_q3.push_back(quantile(risk, 0.75));
  }
  sum.median_solve_time = quantile(all_times, 0.5);
  std::size_t max_bin = 0;
  for (double t : all_times)
    max_bin = std::max(max_bin, static_cast<std::size_t>(t / sum.histogram_bin_width));
  sum.solve_time_histogram.assign(std::min<std::size_t>(max_bin, 200) + 1, 0);
  for (double t : all_times) {
    std::size_t b = static_cast<std::size_t>(t / sum.histogram_bin_width);
    ++sum.solve_time_histogram[std::min<std::size_t>(b, sum.solve_time_histogram.size() - 1)];
  }
  return out;
}

nlohmann::json monte_carlo_summary_to_json(const MonteCarloSummary& s) {
  return nlohmann::json{{"runs", s.runs},
                        {"collisions", s.collisions},
                        {"incomplete", s.incomplete},
                        {"max_chance_overall", s.max_chance_overall},
                        {"max_risk_overall", s.max_risk_overall},
                        {"mean_max_chance", s.mean_max_chance},
                        {"mean_risk", s.mean_risk},
                        {"chance_mean", s.chance_mean},
                        {"chance_q1", s.chance_q1},
                        {"chance_q3", s.chance_q3},
                        {"risk_mean", s.risk_mean},
                        {"risk_q1", s.risk_q1},
                        {"risk_q3", s.risk_q3},
                        {"histogram_bin_width", s.histogram_bin_width},
                        {"solve_time_histogram", s.solve_time_histogram},
                        {"median_solve_time", s.median_solve_time}};
}

}  // namespace psmpc::sim
