// SPDX-License-Identifier: Apache-2.0

#include "psmpc/planner.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>

#include <nlohmann/json.hpp>

#include "psmpc/errors.hpp"
#include "psmpc/milp/encode.hpp"

namespace psmpc::planner {

using milp::Entry;
using milp::LinExpr;
using milp::MilpModel;
using milp::Sense;
using milp::VarType;

void PlannerConfig::validate() const {
  if (Np < 2) throw ConfigError("PlannerConfig: Np must be >= 2");
  if (!(ts > 0.0)) throw ConfigError("PlannerConfig: ts must be positive");
  if (!(epsilon > 0.0) || epsilon > 0.05)
    throw ConfigError("PlannerConfig: epsilon must lie in (0, 0.05]");
  if (lambda_v < 0.0 || lambda_u < 0.0 || lambda_tau < 0.0)
    throw ConfigError("PlannerConfig: weights must be nonnegative");
  if (lane_centers.empty()) throw ConfigError("PlannerConfig: no lane centers");
  const vehicle::EgoBounds box;
  for (double c : lane_centers)
    if (std::abs(c) > box.y_abs)
      throw ConfigError("PlannerConfig: lane center outside road bounds");
  if (!(force_scale > 0.0) || !(d_delta_max > 0.0))
    throw ConfigError("PlannerConfig: scales must be positive");
}

PlannerConfig planner_config_from_json(const nlohmann::json& j) {
  PlannerConfig c;
  c.Np = j.value("Np", c.Np);
  c.ts = j.value("ts", c.ts);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.lambda_v = j.value("lambda_v", c.lambda_v);
  c.lambda_u = j.value("lambda_u", c.lambda_u);
  c.lambda_tau = j.value("lambda_tau", c.lambda_tau);
  if (j.contains("lane_centers"))
    c.lane_centers = j.at("lane_centers").get<std::vector<double>>();
  const std::string mode = j.value("mode", std::string("proactive"));
  if (mode == "proactive")
    c.mode = Mode::Proactive;
  else if (mode == "regular")
    c.mode = Mode::Regular;
  else
    throw ConfigError("PlannerConfig: unknown mode '" + mode + "'");
  c.force_scale = j.value("force_scale", c.force_scale);
  c.d_delta_max = j.value("d_delta_max", c.d_delta_max);
  c.validate();
  return c;
}

nlohmann::json planner_config_to_json(const PlannerConfig& c) {
  return nlohmann::json{
      {"Np", c.Np},
      {"ts", c.ts},
      {"epsilon", c.epsilon},
      {"lambda_v", c.lambda_v},
      {"lambda_u", c.lambda_u},
      {"lambda_tau", c.lambda_tau},
      {"lane_centers", c.lane_centers},
      {"mode", c.mode == Mode::Proactive ? "proactive" : "regular"},
      {"force_scale", c.force_scale},
      {"d_delta_max", c.d_delta_max}};
}

// ── Algorithm 1 ─────────────────────────────────────────────────────────────

ProbabilityFunctions develop_probabilities(
    const std::vector<obstacles::GaussianBelief>& beliefs,
    const obstacles::ObstacleModel& model, int Np,
    const obstacles::ProbabilityTemplates& templates) {
  ProbabilityFunctions out;
  out.probability.assign(static_cast<std::size_t>(Np), {});
  out.proxy.assign(static_cast<std::size_t>(Np), {});
  for (const auto& belief : beliefs) {
    const auto predicted = obstacles::predict_belief(belief, model, Np);
    for (int i = 0; i < Np; ++i) {
      auto prob = obstacles::build_probability_mmps(predicted[static_cast<std::size_t>(i)],
                                                    templates);
      auto prox = obstacles::build_proxy_mmps(predicted[static_cast<std::size_t>(i)],
                                              templates);
      out.extrapolation_warning |= prob.extrapolation_warning;
      out.probability[static_cast<std::size_t>(i)].push_back(std::move(prob.fn));
      out.proxy[static_cast<std::size_t>(i)].push_back(std::move(prox.fn));
    }
  }
  return out;
}

// ── Eq. (25) assembly ───────────────────────────────────────────────────────

namespace {

// Tire saturation MMPS in the slip ratio u: min(max(Fmax u, -Fmax), Fmax).
mmps::MmpsFunction tire_clip_mmps(double Fmax) {
  mmps::MmpsFunction f;
  f.form = mmps::Form::Conjunctive;
  f.dim = 1;
  f.groups = {{{{Fmax}, 0.0}, {{0.0}, -Fmax}}, {{{0.0}, Fmax}}};
  f.domain = {{-1e9}, {1e9}};
  return f;
}

struct Interval {
  double lo, hi;
};

// New state variable bounded by interval propagation intersected with the
// Table I box; the equality row ties it to the Euler update expression.
int propagate_state(MilpModel& m, const std::string& name, const LinExpr& update,
                    double box_lo, double box_hi, int step) {
  const double lo = std::max(m.expr_lower(update), box_lo);
  const double hi = std::min(m.expr_upper(update), box_hi);
  if (lo > hi + 1e-12)
    throw ModelError("build_problem: infeasible box intersection for " + name +
                     " at step " + std::to_string(step));
  const int v = m.add_variable(name, lo, hi);
  std::vector<Entry> row = update.terms;
  row.push_back({v, -1.0});
  m.add_constraint(name + "_dyn", std::move(row), Sense::EQ, -update.constant);
  milp::WitnessOp op;
  op.y = v;
  op.terms = {update};
  m.witness.push_back(std::move(op));
  return v;
}

// Pure-max MMPS (single conjunctive group) <= cap, one row per plane.
void add_max_le_rows(MilpModel& m, const std::string& name,
                     const mmps::MmpsFunction& f, const std::vector<LinExpr>& inputs,
                     double cap) {
  if (f.form != mmps::Form::Conjunctive || f.groups.size() != 1)
    throw ModelError(name + ": expected a single-group max-form MMPS");
  for (std::size_t t = 0; t < f.groups[0].size(); ++t) {
    const auto& term = f.groups[0][t];
    LinExpr e(term.offset);
    for (std::size_t d = 0; d < term.coeffs.size(); ++d) {
      for (const auto& en : inputs[d].terms) e.add(en.var, term.coeffs[d] * en.coef);
      e.constant += term.coeffs[d] * inputs[d].constant;
    }
    m.add_constraint(name + "_" + std::to_string(t), e, Sense::LE, cap);
  }
}

// min over a disjunctive function's plane groups must stay <= rhs: one
// add_min_le per group (constant groups that can never exceed rhs_lo are
// skipped — e.g. the 0 cap of Eqs. 22/23).
std::size_t add_disjunctive_le(MilpModel& m, const std::string& name,
                               const mmps::MmpsFunction& f, int xv, int yv,
                               const LinExpr& rhs) {
  if (f.form != mmps::Form::Disjunctive)
    throw ModelError(name + ": expected a disjunctive MMPS");
  std::size_t bins = 0;
  const double rhs_lo = m.expr_lower(rhs);
  for (std::size_t g = 0; g < f.groups.size(); ++g) {
    std::vector<LinExpr> terms;
    terms.reserve(f.groups[g].size());
    for (const auto& t : f.groups[g]) {
      LinExpr e(t.offset);
      if (t.coeffs[0] != 0.0) e.add(xv, t.coeffs[0]);
      if (t.coeffs[1] != 0.0) e.add(yv, t.coeffs[1]);
      terms.push_back(std::move(e));
    }
    // a group whose min can never exceed the rhs adds nothing
    double gmin_hi = std::numeric_limits<double>::infinity();
    for (const auto& t : terms) gmin_hi = std::min(gmin_hi, m.expr_upper(t));
    if (gmin_hi <= rhs_lo + 1e-15) continue;
    const auto b = milp::add_min_le(m, name + "_g" + std::to_string(g), terms, rhs);
    bins += b.size();
  }
  return bins;
}

}  // namespace

BuiltProblem build_problem(const vehicle::EgoState& s0,
                           const std::vector<double>& v_ref,
                           const ProbabilityFunctions& probs,
                           const PlannerConfig& cfg,
                           const vehicle::MmpsApproxSet& approx,
                           const vehicle::VehicleParams& params) {
  cfg.validate();
  const vehicle::EgoBounds box;
  if (!box.contains(s0)) throw DomainError("build_problem: s0 outside the Table I box");
  if (v_ref.size() != 1 && v_ref.size() != static_cast<std::size_t>(cfg.Np))
    throw ConfigError("build_problem: v_ref must have 1 or Np entries");
  if (!probs.probability.empty() &&
      probs.probability.size() != static_cast<std::size_t>(cfg.Np))
    throw ConfigError("build_problem: probability functions/horizon mismatch");

  const double v0 = s0.v;
  const double delta0 = s0.delta;
  const double fs = cfg.force_scale;
  const double ts = cfg.ts;
  const double Fmax = params.Fmax();
  const mmps::MmpsFunction tire = tire_clip_mmps(Fmax);

  BuiltProblem built;
  MilpModel& m = built.model;
  built.steps.assign(static_cast<std::size_t>(cfg.Np) + 1, StepVars{});
  built.binaries_per_step.assign(static_cast<std::size_t>(cfg.Np), 0);

  // step 0: fixed at the measured state
  {
    StepVars& sv = built.steps[0];
    const auto fix = [&](const char* n, double val) {
      return m.add_variable(std::string("s0_") + n, val, val);
    };
    sv.x = fix("x", s0.x);
    sv.y = fix("y", s0.y);
    sv.psi = fix("psi", s0.psi);
    sv.v = fix("v", s0.v);
    sv.beta = fix("beta", s0.beta);
    sv.r = fix("r", s0.r);
    sv.delta = fix("delta", s0.delta);
  }

  for (int i = 0; i < cfg.Np; ++i) {
    const std::size_t bins_before = m.num_binaries();
    const std::string tag = "k" + std::to_string(i);
    StepVars& cur = built.steps[static_cast<std::size_t>(i)];
    StepVars& nxt = built.steps[static_cast<std::size_t>(i) + 1];

    // inputs over [i, i+1), forces in scaled units
    cur.fxf = m.add_variable(tag + "_fxf", box.Fxf_min / fs, box.Fxf_max / fs);
    cur.fxr = m.add_variable(tag + "_fxr", -box.Fxr_abs / fs, box.Fxr_abs / fs);
    cur.d_delta = m.add_variable(tag + "_dd", -cfg.d_delta_max, cfg.d_delta_max);

    // theta = psi + beta, clamped to the trig fit domains
    const auto& psi_v = m.variables[static_cast<std::size_t>(cur.psi)];
    const auto& beta_v = m.variables[static_cast<std::size_t>(cur.beta)];
    const double th_lo = std::max({psi_v.lower + beta_v.lower,
                                   approx.cos_pb.domain.lo[0],
                                   approx.sin_pb.domain.lo[0]});
    const double th_hi = std::min({psi_v.upper + beta_v.upper,
                                   approx.cos_pb.domain.hi[0],
                                   approx.sin_pb.domain.hi[0]});
    if (th_lo > th_hi + 1e-12)
      throw ModelError("build_problem: heading leaves the trig fit domain at step " +
                       std::to_string(i));
    const int theta = m.add_variable(tag + "_theta", th_lo, th_hi);
    m.add_constraint(tag + "_theta_eq",
                     LinExpr::var(theta).add(cur.psi, -1.0).add(cur.beta, -1.0),
                     Sense::EQ, 0.0);
    {
      milp::WitnessOp op;
      op.y = theta;
      op.terms = {LinExpr::var(cur.psi).add(cur.beta, 1.0)};
      m.witness.push_back(std::move(op));
    }

    const auto cos_b = milp::encode_mmps_compact(m, tag + "_cos", approx.cos_pb, {theta});
    const auto sin_b = milp::encode_mmps_compact(m, tag + "_sin", approx.sin_pb, {theta});
    const auto br_b =
        milp::encode_mmps_compact(m, tag + "_br", approx.beta_r, {cur.beta, cur.r});

    // slip ratios at the frozen speed: alpha/alpha_s, affine in the state
    const auto slip_var = [&](const char* n, double dcoef, double lcoef,
                              double dom_lo, double dom_hi) {
      LinExpr def;  // alpha_s * u - (affine state terms) = 0
      if (dcoef != 0.0) def.add(cur.delta, -dcoef);
      def.add(cur.beta, 1.0);
      def.add(cur.r, -lcoef / v0);
      LinExpr raw;
      if (dcoef != 0.0) raw.add(cur.delta, dcoef / params.alpha_s);
      raw.add(cur.beta, -1.0 / params.alpha_s);
      raw.add(cur.r, lcoef / (params.alpha_s * v0));
      const double lo = std::max(m.expr_lower(raw), dom_lo);
      const double hi = std::min(m.expr_upper(raw), dom_hi);
      if (lo > hi + 1e-12)
        throw ModelError(std::string("build_problem: slip ratio ") + n +
                         " leaves its domain at step " + std::to_string(i));
      const int u = m.add_variable(tag + "_" + n, lo, hi);
      def.add(u, params.alpha_s);
      m.add_constraint(tag + "_" + n + "_eq", def, Sense::EQ, 0.0);
      milp::WitnessOp op;
      op.y = u;
      op.terms = {std::move(raw)};
      m.witness.push_back(std::move(op));
      return u;
    };
    const int uf = slip_var("uf", 1.0, params.lf, approx.dfyf.domain.lo[1],
                            approx.dfyf.domain.hi[1]);
    const int ur = slip_var("ur", 0.0, params.lr, -1e9, 1e9);

    const auto dfyf_b =
        milp::encode_mmps_compact(m, tag + "_dfyf", approx.dfyf, {cur.delta, uf});
    const auto fyf_b = milp::encode_mmps_compact(m, tag + "_fyf", tire, {uf});
    const auto fyr_b = milp::encode_mmps_compact(m, tag + "_fyr", tire, {ur});

    // Eq. (18a): xdot = max(v, v0 * [cos])
    const auto dx_b = milp::add_max_equality_compact(
        m, tag + "_dx", {LinExpr::var(cur.v), LinExpr::var(cos_b.y, v0)});

    // Kamm circle per axle (Eq. 14): [g](Fx, Fy) <= mu Fz, rows only
    add_max_le_rows(m, tag + "_kammf", approx.kamm_front,
                    {LinExpr::var(cur.fxf, fs), LinExpr::var(fyf_b.y)},
                    params.mu * params.Fzf);
    add_max_le_rows(m, tag + "_kammr", approx.kamm_rear,
                    {LinExpr::var(cur.fxr, fs), LinExpr::var(fyr_b.y)},
                    params.mu * params.Fzr);

    // Euler update rows (Eq. 18 / Remark 3) with propagated bounds
    const std::string nt = "k" + std::to_string(i + 1);
    nxt.x = propagate_state(m, nt + "_x",
                            LinExpr::var(cur.x).add(dx_b.y, ts), 0.0, 1e7, i + 1);
    nxt.y = propagate_state(m, nt + "_y",
                            LinExpr::var(cur.y).add(sin_b.y, ts * v0), -box.y_abs,
                            box.y_abs, i + 1);
    nxt.psi = propagate_state(m, nt + "_psi",
                              LinExpr::var(cur.psi).add(cur.r, ts), -box.psi_abs,
                              box.psi_abs, i + 1);
    nxt.v = propagate_state(
        m, nt + "_v",
        LinExpr::var(cur.v)
            .add(cur.fxf, ts * fs / params.m)
            .add(cur.fxr, ts * fs / params.m)
            .add(dfyf_b.y, -ts / params.m)
            .add(br_b.y, ts * v0),
        box.v_min, box.v_max, i + 1);
    nxt.beta = propagate_state(
        m, nt + "_beta",
        LinExpr::var(cur.beta)
            .add(fyf_b.y, ts / (params.m * v0))
            .add(fyr_b.y, ts / (params.m * v0))
            .add(cur.r, -ts),
        -box.beta_abs, box.beta_abs, i + 1);
    nxt.r = propagate_state(
        m, nt + "_r",
        LinExpr::var(cur.r)
            .add(cur.fxf, ts * params.lf * delta0 * fs / params.Izz)
            .add(fyf_b.y, ts * params.lf / params.Izz)
            .add(fyr_b.y, -ts * params.lr / params.Izz),
        -box.r_abs, box.r_abs, i + 1);
    nxt.delta = propagate_state(m, nt + "_delta",
                                LinExpr::var(cur.delta).add(cur.d_delta, ts),
                                -box.delta_abs, box.delta_abs, i + 1);

    // lane deviation tau_{i+1} = min over lanes of |y - y_c| (Eq. 25c)
    std::vector<LinExpr> lane_ts;
    for (std::size_t c = 0; c < cfg.lane_centers.size(); ++c) {
      LinExpr dev = LinExpr::var(nxt.y);
      dev.constant = -cfg.lane_centers[c];
      const int t = milp::encode_abs_term(m, nt + "_lane" + std::to_string(c), dev);
      lane_ts.push_back(LinExpr::var(t));
    }
    const auto tau_b = milp::add_min_equality_compact(m, nt + "_tau", lane_ts);
    nxt.tau = tau_b.y;
    m.add_objective(nxt.tau, cfg.lambda_tau);

    // velocity tracking |v_{i+1} - v_ref|
    {
      LinExpr dev = LinExpr::var(nxt.v);
      dev.constant = -(v_ref.size() == 1 ? v_ref[0]
                                         : v_ref[static_cast<std::size_t>(i)]);
      const int tv = milp::encode_abs_term(m, nt + "_vdev", dev);
      m.add_objective(tv, cfg.lambda_v);
    }

    // control effort (per N of force, per rad/s of steering rate)
    {
      const int tf = milp::encode_abs_term(m, tag + "_afxf", LinExpr::var(cur.fxf));
      const int tr = milp::encode_abs_term(m, tag + "_afxr", LinExpr::var(cur.fxr));
      const int td = milp::encode_abs_term(m, tag + "_add", LinExpr::var(cur.d_delta));
      m.add_objective(tf, cfg.lambda_u * fs);
      m.add_objective(tr, cfg.lambda_u * fs);
      m.add_objective(td, cfg.lambda_u);
    }

    // chance constraints (Eq. 25e): [P]_MMPS(x,y) <= epsilon per obstacle
    if (!probs.probability.empty()) {
      const auto& step_probs = probs.probability[static_cast<std::size_t>(i)];
      for (std::size_t o = 0; o < step_probs.size(); ++o) {
        add_disjunctive_le(m, nt + "_ch" + std::to_string(o), step_probs[o], nxt.x,
                           nxt.y, LinExpr(cfg.epsilon));
      }
    }

    // risk epigraph (Eq. 24), Proactive objective only
    if (cfg.mode == Mode::Proactive && !probs.proxy.empty() &&
        !probs.proxy[static_cast<std::size_t>(i)].empty()) {
      const auto& step_prox = probs.proxy[static_cast<std::size_t>(i)];
      double rmax = 0.0;
      milp::WitnessOp rop;
      rop.kind = milp::WitnessOp::Kind::MaxMin;
      for (const auto& f : step_prox)
        for (const auto& grp : f.groups) {
          rop.group_sizes.push_back(static_cast<int>(grp.size()));
          for (const auto& t : grp) {
            LinExpr e(t.offset);
            if (t.coeffs[0] != 0.0) e.add(nxt.x, t.coeffs[0]);
            if (t.coeffs[1] != 0.0) e.add(nxt.y, t.coeffs[1]);
            rmax = std::max(rmax, m.expr_upper(e));
            rop.terms.push_back(std::move(e));
          }
        }
      nxt.risk = m.add_variable(nt + "_risk", 0.0, rmax);
      rop.y = nxt.risk;
      m.witness.push_back(std::move(rop));
      for (std::size_t o = 0; o < step_prox.size(); ++o) {
        add_disjunctive_le(m, nt + "_rk" + std::to_string(o), step_prox[o], nxt.x,
                           nxt.y, LinExpr::var(nxt.risk));
      }
      m.add_objective(nxt.risk, 1.0 / static_cast<double>(cfg.Np));
    }

    built.binaries_per_step[static_cast<std::size_t>(i)] =
        m.num_binaries() - bins_before;
  }

  built.binary_count = m.num_binaries();
  built.continuous_count = m.num_variables() - built.binary_count;
  return built;
}

// ── Algorithm 2 ─────────────────────────────────────────────────────────────

PlanResult plan_step(const vehicle::EgoState& s0, const ProbabilityFunctions& probs,
                     const std::vector<double>& v_ref, const PlannerConfig& cfg,
                     const vehicle::MmpsApproxSet& approx,
                     const vehicle::VehicleParams& params,
                     milp::MilpBackend* backend) {
  BuiltProblem built = build_problem(s0, v_ref, probs, cfg, approx, params);

  milp::SolveOptions sopts;
  // control-grade tolerance: the LP relaxations carry ~1e-5 objective noise,
  // so proving tighter gaps buys nothing but tree size
  sopts.gap = 1e-4;
  sopts.node_limit = 20000;
  // Warm start: replay a handful of constant-input rollouts through the
  // model witness and hand the best feasible one to branch-and-bound as its
  // first incumbent. Coasting wins on open road; the braking and swerving
  // entries cover the evasive cases where coasting violates a chance
  // constraint.
  {
    const MilpModel& m = built.model;
    const std::size_t nv = m.num_variables();
    std::vector<double> base(nv);
    for (std::size_t j = 0; j < nv; ++j)
      base[j] = std::clamp(0.0, m.variables[j].lower, m.variables[j].upper);
    const vehicle::EgoBounds box;
    const double fxf_lo = box.Fxf_min / cfg.force_scale;
    const double fxr_lo = -box.Fxr_abs / cfg.force_scale;
    const int q = std::max(1, cfg.Np / 4);

    // per-step input profiles: braking levels crossed with lane-change
    // steering pulses (+s, -s, +s over quarters of the horizon; the pulse
    // steers out, straightens, and re-centers the wheel)
    std::vector<std::vector<std::array<double, 3>>> candidates;
    const double brakes[] = {0.0, 0.5, 1.0};
    const double steers[] = {0.0, 0.05, -0.05, 0.1, -0.1, 0.2, -0.2};
    for (double bf : brakes) {
      for (double s : steers) {
        if (std::abs(s) > cfg.d_delta_max) continue;
        std::vector<std::array<double, 3>> prof(static_cast<std::size_t>(cfg.Np));
        for (int i = 0; i < cfg.Np; ++i) {
          double dd = 0.0;
          if (s != 0.0) {
            if (i < q)
              dd = s;
            else if (i < 3 * q)
              dd = -s;
            else if (i < 4 * q)
              dd = s;
          }
          prof[static_cast<std::size_t>(i)] = {bf * fxf_lo, bf * fxr_lo, dd};
        }
        candidates.push_back(std::move(prof));
      }
    }

    double best = std::numeric_limits<double>::infinity();
    for (const auto& prof : candidates) {
      std::vector<double> x = base;
      for (int i = 0; i < cfg.Np; ++i) {
        const StepVars& sv = built.steps[static_cast<std::size_t>(i)];
        const auto& u = prof[static_cast<std::size_t>(i)];
        x[static_cast<std::size_t>(sv.fxf)] = u[0];
        x[static_cast<std::size_t>(sv.fxr)] = u[1];
        x[static_cast<std::size_t>(sv.d_delta)] = u[2];
      }
      if (!m.replay_witness(x) || m.max_violation(x) >= 1e-7) continue;
      double obj = 0.0;
      for (std::size_t j = 0; j < nv; ++j) obj += m.objective[j] * x[j];
      if (obj < best) {
        best = obj;
        sopts.start = std::move(x);
      }
    }
  }
  milp::MilpSolution sol;
  if (backend != nullptr) {
    sol = backend->solve(built.model, sopts);
  } else {
    sol = milp::solve_milp(built.model, sopts);
  }
  if (sol.status == milp::MilpStatus::Infeasible || sol.values.empty()) {
    auto model = std::make_shared<const MilpModel>(std::move(built.model));
    throw PlannerInfeasible("plan_step: MILP infeasible", std::move(model));
  }

  PlanResult out;
  out.solve_stats = sol.stats;
  out.objective = sol.objective;
  out.gap = sol.objective - sol.bound;

  const auto val = [&](int v) { return sol.values[static_cast<std::size_t>(v)]; };
  for (int i = 1; i <= cfg.Np; ++i) {
    const StepVars& sv = built.steps[static_cast<std::size_t>(i)];
    vehicle::EgoState s;
    s.x = val(sv.x);
    s.y = val(sv.y);
    s.psi = val(sv.psi);
    s.v = val(sv.v);
    s.beta = val(sv.beta);
    s.r = val(sv.r);
    s.delta = val(sv.delta);
    out.trajectory.push_back(s);
    out.tau.push_back(val(sv.tau));
  }
  for (int i = 0; i < cfg.Np; ++i) {
    const StepVars& sv = built.steps[static_cast<std::size_t>(i)];
    vehicle::EgoInput u;
    u.Fxf = cfg.force_scale * val(sv.fxf);
    u.Fxr = cfg.force_scale * val(sv.fxr);
    u.d_delta = val(sv.d_delta);
    out.inputs.push_back(u);
  }

  out.risk_value = obstacles::risk(out.trajectory, probs.proxy);
  double maxp = 0.0;
  for (int i = 0; i < cfg.Np; ++i) {
    for (const auto& f : probs.probability[static_cast<std::size_t>(i)]) {
      const auto& s = out.trajectory[static_cast<std::size_t>(i)];
      maxp = std::max(maxp, mmps::evaluate(f, {s.x, s.y}));
    }
  }
  out.max_chance_value = maxp;
  return out;
}

PlanResult plan_step(const vehicle::EgoState& s0,
                     const std::vector<obstacles::GaussianBelief>& beliefs,
                     const obstacles::ObstacleModel& obs_model,
                     const obstacles::ProbabilityTemplates& templates,
                     const std::vector<double>& v_ref, const PlannerConfig& cfg,
                     const vehicle::MmpsApproxSet& approx,
                     const vehicle::VehicleParams& params,
                     milp::MilpBackend* backend) {
  const ProbabilityFunctions probs =
      develop_probabilities(beliefs, obs_model, cfg.Np, templates);
  return plan_step(s0, probs, v_ref, cfg, approx, params, backend);
}

nlohmann::json plan_result_to_json(const PlanResult& r) {
  nlohmann::json traj = nlohmann::json::array();
  for (const auto& s : r.trajectory)
    traj.push_back({{"x", s.x},
                    {"y", s.y},
                    {"psi", s.psi},
                    {"v", s.v},
                    {"beta", s.beta},
                    {"r", s.r},
                    {"delta", s.delta}});
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& u : r.inputs)
    inputs.push_back({{"Fxf", u.Fxf}, {"Fxr", u.Fxr}, {"d_delta", u.d_delta}});
  return nlohmann::json{{"trajectory", traj},
                        {"inputs", inputs},
                        {"tau", r.tau},
                        {"objective", r.objective},
                        {"risk_value", r.risk_value},
                        {"max_chance_value", r.max_chance_value},
                        {"gap", r.gap},
                        {"solve_stats",
                         {{"nodes", r.solve_stats.nodes},
                          {"simplex_iterations", r.solve_stats.simplex_iterations},
                          {"wall_time", r.solve_stats.wall_time}}}};
}

}  // namespace psmpc::planner
