// SPDX-License-Identifier: Apache-2.0

#include "psmpc/vehicle.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "psmpc/errors.hpp"

namespace psmpc::vehicle {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double VehicleParams::Fmax() const { return std::min(mu * Fzf, mu * Fzr); }

bool EgoBounds::contains(const EgoState& s) const {
  return s.v >= v_min && s.v <= v_max && std::abs(s.beta) <= beta_abs &&
         std::abs(s.psi) <= psi_abs && std::abs(s.r) <= r_abs &&
         std::abs(s.delta) <= delta_abs && std::abs(s.y) <= y_abs && s.x >= 0.0;
}

double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a - kPi;
}

SlipAngles slip_angles(const EgoState& s, const VehicleParams& p) {
  if (s.v < 5.0)
    throw DomainError("slip_angles: v below the 5 m/s Table I bound");
  SlipAngles a;
  a.alpha_f = s.delta - s.beta + p.lf * s.r / s.v;  // Eq. (15a)
  a.alpha_r = p.lr * s.r / s.v - s.beta;            // Eq. (15b)
  return a;
}

double pacejka_lateral_force(double alpha, const VehicleParams& p) {
  return p.Fmax() * std::sin(p.pacejka_C * std::atan(p.pacejka_B * alpha));
}

LateralForces mmps_lateral_forces(const EgoState& s, const VehicleParams& p, double v0) {
  if (v0 < 5.0) throw DomainError("mmps_lateral_forces: v0 below 5 m/s");
  const double Fmax = p.Fmax();
  const auto clip = [](double z) { return std::min(std::max(z, -1.0), 1.0); };
  const double uf = (s.delta - s.beta) / p.alpha_s + p.lf * s.r / (p.alpha_s * v0);
  const double ur = p.lr * s.r / (p.alpha_s * v0) - s.beta / p.alpha_s;
  return {Fmax * clip(uf), Fmax * clip(ur)};
}

EgoDerivative nonlinear_derivative(const EgoState& s, const EgoInput& u,
                                   const VehicleParams& p) {
  const SlipAngles a = slip_angles(s, p);
  const double Fyf = pacejka_lateral_force(a.alpha_f, p);
  const double Fyr = pacejka_lateral_force(a.alpha_r, p);

  EgoDerivative d;
  d.x = s.v * std::cos(s.psi + s.beta);                                  // (13a)
  d.y = s.v * std::sin(s.psi + s.beta);                                  // (13b)
  d.psi = s.r;                                                           // (13c)
  d.v = (u.Fxf - Fyf * s.delta + u.Fxr) / p.m + s.v * s.beta * s.r;      // (13d)
  d.beta = (Fyf + Fyr) / (p.m * s.v) - s.r;                              // (13e)
  d.r = (u.Fxf * s.delta * p.lf + Fyf * p.lf - Fyr * p.lr) / p.Izz;      // (13f)
  d.delta = u.d_delta;                                                   // (13g)
  return d;
}

namespace {

double eval_in_domain(const mmps::MmpsFunction& f, const std::vector<double>& x,
                      const char* name) {
  if (!f.domain.contains(x, 1e-9))
    throw DomainError(std::string("mmps_derivative: input outside fit domain of ") +
                      name);
  return mmps::evaluate(f, x);
}

}  // namespace

EgoDerivative mmps_derivative(const EgoState& s, const EgoInput& u,
                              const VehicleParams& p, const FrozenParams& frozen,
                              const MmpsApproxSet& approx) {
  const double v0 = frozen.v0;
  if (v0 < 5.0) throw DomainError("mmps_derivative: frozen v0 below 5 m/s");
  const double theta = s.psi + s.beta;

  const double cos_t = eval_in_domain(approx.cos_pb, {theta}, "cos(psi+beta)");
  const double sin_t = eval_in_domain(approx.sin_pb, {theta}, "sin(psi+beta)");
  const double br = eval_in_domain(approx.beta_r, {s.beta, s.r}, "beta*r");

  // Tire saturation arguments at the frozen speed (affine in the state).
  const double uf = (s.delta - s.beta) / p.alpha_s + p.lf * s.r / (p.alpha_s * v0);
  const double dfyf = eval_in_domain(approx.dfyf, {s.delta, uf}, "delta*Fyf");

  const LateralForces fy = mmps_lateral_forces(s, p, v0);

  EgoDerivative d;
  d.x = std::max(s.v, v0 * cos_t);                                       // (18a)
  d.y = v0 * sin_t;                                                      // (18b)
  d.psi = s.r;                                                           // (18c)
  d.v = (u.Fxf + u.Fxr) / p.m - dfyf / p.m + v0 * br;                    // (18d)
  d.beta = (fy.Fyf + fy.Fyr) / (p.m * v0) - s.r;                         // (18e)
  d.r = (p.lf * frozen.delta0 * u.Fxf + p.lf * fy.Fyf - p.lr * fy.Fyr) / p.Izz;  // (18f)
  d.delta = u.d_delta;                                                   // (18g)
  return d;
}

double kamm_mmps(double Fx, double Fy, Axle axle, const MmpsApproxSet& approx) {
  const mmps::MmpsFunction& f =
      axle == Axle::Front ? approx.kamm_front : approx.kamm_rear;
  return mmps::evaluate(f, {Fx, Fy});
}

EgoState integrate_nonlinear(const EgoState& s, const EgoInput& u,
                             const VehicleParams& p, double ts, int substeps) {
  const double h = ts / substeps;
  const auto add = [](const EgoState& a, const EgoDerivative& d, double k) {
    EgoState o;
    o.x = a.x + k * d.x;
    o.y = a.y + k * d.y;
    o.psi = a.psi + k * d.psi;
    o.v = a.v + k * d.v;
    o.beta = a.beta + k * d.beta;
    o.r = a.r + k * d.r;
    o.delta = a.delta + k * d.delta;
    return o;
  };
  EgoState cur = s;
  for (int i = 0; i < substeps; ++i) {
    const EgoDerivative k1 = nonlinear_derivative(cur, u, p);
    const EgoDerivative k2 = nonlinear_derivative(add(cur, k1, 0.5 * h), u, p);
    const EgoDerivative k3 = nonlinear_derivative(add(cur, k2, 0.5 * h), u, p);
    const EgoDerivative k4 = nonlinear_derivative(add(cur, k3, h), u, p);
    EgoDerivative sum;
    sum.x = (k1.x + 2 * k2.x + 2 * k3.x + k4.x) / 6.0;
    sum.y = (k1.y + 2 * k2.y + 2 * k3.y + k4.y) / 6.0;
    sum.psi = (k1.psi + 2 * k2.psi + 2 * k3.psi + k4.psi) / 6.0;
    sum.v = (k1.v + 2 * k2.v + 2 * k3.v + k4.v) / 6.0;
    sum.beta = (k1.beta + 2 * k2.beta + 2 * k3.beta + k4.beta) / 6.0;
    sum.r = (k1.r + 2 * k2.r + 2 * k3.r + k4.r) / 6.0;
    sum.delta = (k1.delta + 2 * k2.delta + 2 * k3.delta + k4.delta) / 6.0;
    cur = add(cur, sum, h);
  }
  cur.psi = wrap_angle(cur.psi);
  return cur;
}

// ── approximation-set persistence ───────────────────────────────────────────

void MmpsApproxSet::save(const std::string& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  mmps::save_json(cos_pb, dir + "/cos_pb.json");
  mmps::save_json(sin_pb, dir + "/sin_pb.json");
  mmps::save_json(beta_r, dir + "/beta_r.json");
  mmps::save_json(dfyf, dir + "/dfyf.json");
  mmps::save_json(kamm_front, dir + "/kamm_front.json");
  mmps::save_json(kamm_rear, dir + "/kamm_rear.json");
  nlohmann::json j;
  j["derivative_budget"] = derivative_budget;
  std::ofstream out(dir + "/vehicle_budget.json");
  if (!out) throw ConfigError("cannot write " + dir + "/vehicle_budget.json");
  out << j.dump(2) << '\n';
}

MmpsApproxSet MmpsApproxSet::load(const std::string& dir) {
  MmpsApproxSet a;
  a.cos_pb = mmps::load_json(dir + "/cos_pb.json");
  a.sin_pb = mmps::load_json(dir + "/sin_pb.json");
  a.beta_r = mmps::load_json(dir + "/beta_r.json");
  a.dfyf = mmps::load_json(dir + "/dfyf.json");
  a.kamm_front = mmps::load_json(dir + "/kamm_front.json");
  a.kamm_rear = mmps::load_json(dir + "/kamm_rear.json");
  std::ifstream in(dir + "/vehicle_budget.json");
  if (!in) throw ConfigError("cannot open " + dir + "/vehicle_budget.json");
  nlohmann::json j;
  in >> j;
  a.derivative_budget = j.at("derivative_budget").get<std::array<double, 7>>();
  return a;
}

}  // namespace psmpc::vehicle
