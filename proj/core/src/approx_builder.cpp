// SPDX-License-Identifier: Apache-2.0

#include "psmpc/approx_builder.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "psmpc/errors.hpp"
#include "psmpc/mmps_fit.hpp"

namespace psmpc::approx {

namespace {

constexpr double kPi = 3.14159265358979323846;

using mmps::AffineTerm;
using mmps::Box;
using mmps::FitOptions;
using mmps::FitResult;
using mmps::FitStructure;
using mmps::Form;

void record(nlohmann::json* report, const std::string& name, const FitResult& r,
            std::uint64_t seed) {
  if (report == nullptr) return;
  (*report)[name] = {{"objective", r.report.objective},
                     {"max_abs_error", r.report.max_abs_error},
                     {"max_abs_target", r.report.max_abs_target},
                     {"epsilon0", r.report.epsilon0},
                     {"winning_restart", r.report.winning_restart},
                     {"iterations", r.report.iterations},
                     {"offset_lift", r.report.offset_lift},
                     {"seed", seed}};
}

// Shift so the function vanishes at the origin (keeps the frozen-state
// equilibrium cost-free in the planner).
mmps::MmpsFunction anchored(const mmps::MmpsFunction& f) {
  std::vector<double> zero(f.dim, 0.0);
  return mmps::shifted(f, -mmps::evaluate(f, zero));
}

mmps::MmpsFunction fit_cos(const BuildOptions& o, nlohmann::json* report) {
  const Box dom{{-(kPi + 0.25)}, {kPi + 0.25}};
  FitStructure s;
  s.group_sizes = {1, 1, 1};
  s.frozen = {{2, 0}};  // the cap-at-1 plane
  s.init_hint = std::vector<std::vector<AffineTerm>>{
      {AffineTerm{{-0.723}, 1.27}}, {AffineTerm{{0.723}, 1.27}},
      {AffineTerm{{0.0}, 1.0}}};
  FitOptions fo;
  fo.grid_resolution = o.trig_resolution;
  fo.restarts = o.restarts;
  fo.seed = o.seed;
  const FitResult r = mmps::fit(
      [](const std::vector<double>& x) { return std::cos(x[0]); }, dom,
      Form::Conjunctive, s, fo);
  record(report, "cos_pb", r, o.seed);
  return r.function;
}

mmps::MmpsFunction fit_sin(const BuildOptions& o, nlohmann::json* report) {
  const Box dom{{-(kPi + 0.25)}, {kPi + 0.25}};
  FitStructure s;
  s.group_sizes = {2, 1};
  s.init_hint = std::vector<std::vector<AffineTerm>>{
      {AffineTerm{{1.0}, 0.0}, AffineTerm{{-0.685}, 2.076}},
      {AffineTerm{{0.0}, -0.75}}};
  FitOptions fo;
  fo.grid_resolution = o.trig_resolution;
  fo.restarts = o.restarts;
  fo.seed = o.seed + 1;
  const FitResult r = mmps::fit(
      [](const std::vector<double>& x) { return std::sin(x[0]); }, dom,
      Form::Disjunctive, s, fo);
  record(report, "sin_pb", r, o.seed + 1);
  return anchored(r.function);
}

mmps::MmpsFunction fit_beta_r(const BuildOptions& o, nlohmann::json* report) {
  const Box dom{{-0.2, -0.5}, {0.2, 0.5}};
  FitStructure s;
  s.group_sizes = {2, 2};
  // bilinear envelope planes as the restart-0 hint
  s.init_hint = std::vector<std::vector<AffineTerm>>{
      {AffineTerm{{-0.5, 0.2}, 0.1}, AffineTerm{{0.5, -0.2}, 0.1}},
      {AffineTerm{{-0.5, -0.2}, -0.1}, AffineTerm{{0.5, 0.2}, -0.1}}};
  FitOptions fo;
  fo.grid_resolution = o.surface_resolution;
  fo.restarts = o.restarts;
  fo.seed = o.seed + 2;
  const FitResult r = mmps::fit(
      [](const std::vector<double>& x) { return x[0] * x[1]; }, dom,
      Form::Disjunctive, s, fo);
  record(report, "beta_r", r, o.seed + 2);
  return anchored(r.function);
}

mmps::MmpsFunction fit_dfyf(const vehicle::VehicleParams& p, const BuildOptions& o,
                            nlohmann::json* report) {
  const double Fmax = p.Fmax();
  const Box dom{{-0.2, -7.0}, {0.2, 7.0}};
  FitStructure s;
  s.group_sizes = {2, 2};
  FitOptions fo;
  fo.grid_resolution = o.surface_resolution;
  fo.restarts = o.restarts;
  fo.seed = o.seed + 3;
  const FitResult r = mmps::fit(
      [Fmax](const std::vector<double>& x) {
        const double clip = std::min(std::max(x[1], -1.0), 1.0);
        return x[0] * Fmax * clip;
      },
      dom, Form::Disjunctive, s, fo);
  record(report, "dfyf", r, o.seed + 3);
  return anchored(r.function);
}

// Over-estimating max-of-planes of the force magnitude; tangent directions
// spanning the axle's reachable (Fx, Fy) half/full plane as the hint.
mmps::MmpsFunction fit_kamm(const Box& dom, const std::vector<double>& angles_deg,
                            std::uint64_t seed, const BuildOptions& o,
                            const std::string& name, nlohmann::json* report) {
  FitStructure s;
  s.group_sizes = {angles_deg.size()};
  std::vector<AffineTerm> hint;
  for (double a : angles_deg) {
    const double rad = a * kPi / 180.0;
    hint.push_back(AffineTerm{{std::cos(rad), std::sin(rad)}, 0.0});
  }
  s.init_hint = std::vector<std::vector<AffineTerm>>{hint};
  FitOptions fo;
  fo.grid_resolution = o.surface_resolution;
  fo.restarts = 4;
  fo.seed = seed;
  const FitResult r = mmps::fit_overestimate(
      [](const std::vector<double>& x) { return std::hypot(x[0], x[1]); }, dom,
      Form::Conjunctive, s, fo);
  record(report, name, r, seed);
  return r.function;
}

}  // namespace

vehicle::MmpsApproxSet build_vehicle_approximations(const vehicle::VehicleParams& p,
                                                    const BuildOptions& opts,
                                                    nlohmann::json* report) {
  vehicle::MmpsApproxSet a;
  a.cos_pb = fit_cos(opts, report);
  a.sin_pb = fit_sin(opts, report);
  a.beta_r = fit_beta_r(opts, report);
  a.dfyf = fit_dfyf(p, opts, report);
  const double Fy = p.Fmax();
  a.kamm_front = fit_kamm(Box{{-5000.0, -Fy}, {0.0, Fy}},
                          {90, 126, 162, 198, 234, 270}, opts.seed + 4, opts,
                          "kamm_front", report);
  a.kamm_rear = fit_kamm(Box{{-5000.0, -Fy}, {5000.0, Fy}},
                         {22.5, 67.5, 112.5, 157.5, 202.5, 247.5, 292.5, 337.5},
                         opts.seed + 5, opts, "kamm_rear", report);
  a.derivative_budget = measure_derivative_budget(a, p, opts.seed + 6, 10000);
  if (report != nullptr) (*report)["derivative_budget"] = a.derivative_budget;
  return a;
}

std::array<double, 7> measure_derivative_budget(const vehicle::MmpsApproxSet& approx,
                                                const vehicle::VehicleParams& p,
                                                std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const vehicle::EgoBounds box;
  std::array<double, 7> budget{};
  for (std::size_t k = 0; k < n; ++k) {
    vehicle::EgoState s;
    s.x = 1000.0 * u01(rng);
    s.y = box.y_abs * (2.0 * u01(rng) - 1.0);
    s.psi = box.psi_abs * (2.0 * u01(rng) - 1.0);
    s.v = box.v_min + (box.v_max - box.v_min) * u01(rng);
    s.beta = box.beta_abs * (2.0 * u01(rng) - 1.0);
    s.r = box.r_abs * (2.0 * u01(rng) - 1.0);
    s.delta = box.delta_abs * (2.0 * u01(rng) - 1.0);
    vehicle::EgoInput in;
    in.Fxf = box.Fxf_min + (box.Fxf_max - box.Fxf_min) * u01(rng);
    in.Fxr = box.Fxr_abs * (2.0 * u01(rng) - 1.0);
    in.d_delta = 0.5 * (2.0 * u01(rng) - 1.0);

    const vehicle::FrozenParams frozen{s.v, s.delta};
    const auto dn = vehicle::nonlinear_derivative(s, in, p);
    const auto dm = vehicle::mmps_derivative(s, in, p, frozen, approx);
    const std::array<double, 7> an = dn.as_array(), am = dm.as_array();
    for (std::size_t c = 0; c < 7; ++c)
      budget[c] = std::max(budget[c], std::abs(an[c] - am[c]));
  }
  return budget;
}

nlohmann::json build_all(const std::string& out_dir, const BuildOptions& opts,
                         const vehicle::VehicleParams& p) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  nlohmann::json report;
  report["seed"] = opts.seed;

  const vehicle::MmpsApproxSet a = build_vehicle_approximations(p, opts, &report);
  a.save(out_dir);

  const obstacles::ProbabilityTemplates t = obstacles::fit_probability_templates(
      opts.geometry, opts.epsilon, opts.seed + 7, opts.prob_resolution);
  t.save(out_dir);
  report["probability_templates"] = {{"rel_err_at_mean", t.rel_err_at_mean},
                                     {"a_eff_x", t.a_eff_x},
                                     {"c_x", t.c_x},
                                     {"a_eff_y", t.a_eff_y},
                                     {"c_y", t.c_y},
                                     {"epsilon", t.epsilon},
                                     {"seed", opts.seed + 7}};

  std::ofstream out(out_dir + "/fit_report.json");
  if (!out) throw ConfigError("cannot write " + out_dir + "/fit_report.json");
  out << report.dump(2) << '\n';
  return report;
}

}  // namespace psmpc::approx
