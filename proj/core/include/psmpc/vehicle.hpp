// SPDX-License-Identifier: Apache-2.0
//
// Ego vehicle models: the nonlinear dynamic bicycle model (Eq. 13) used as
// the simulation plant, and its MMPS hybridization (Eq. 18) used by the
// planner, plus slip angles (Eq. 15), Pacejka and MMPS tire laws (Eq. 17),
// and Kamm-circle force-magnitude approximations (Eq. 14, Fig. 5c).

#pragma once

#include <array>
#include <optional>
#include <string>

#include "psmpc/mmps.hpp"

namespace psmpc::vehicle {

// Eq. (16) state: (x, y, psi, v, beta, r, delta).
struct EgoState {
  double x = 0.0;      // m
  double y = 0.0;      // m
  double psi = 0.0;    // rad, heading
  double v = 0.0;      // m/s, CoG speed
  double beta = 0.0;   // rad, side-slip
  double r = 0.0;      // rad/s, yaw rate
  double delta = 0.0;  // rad, steering angle

  std::array<double, 7> as_array() const { return {x, y, psi, v, beta, r, delta}; }
  static EgoState from_array(const std::array<double, 7>& a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5], a[6]};
  }
};

using EgoDerivative = EgoState;  // same shape, d/dt semantics

struct EgoInput {
  double Fxf = 0.0;      // N, front longitudinal force, [-5000, 0]
  double Fxr = 0.0;      // N, rear longitudinal force, [-5000, 5000]
  double d_delta = 0.0;  // rad/s, steering rate
};

// Table II parameters.
struct VehicleParams {
  double m = 1970.0;       // kg
  double Izz = 3498.0;     // kg m^2
  double lf = 1.4778;      // m
  double lr = 1.4102;      // m
  double Fzf = 7926.0;     // N
  double Fzr = 8303.0;     // N
  double alpha_s = 0.09;   // rad, MMPS tire saturation slip
  double mu = 1.0;         // friction (measured online in the paper)
  double pacejka_B = 11.24;
  double pacejka_C = 1.45;

  double Fmax() const;  // min(mu*Fzf, mu*Fzr)
};

// Table I bounds for planner-facing quantities.
struct EgoBounds {
  double v_min = 5.0, v_max = 50.0;
  double beta_abs = 0.2;
  double psi_abs = 3.14159265358979323846;
  double r_abs = 0.5;
  double delta_abs = 0.2;
  double y_abs = 6.0;
  double Fxf_min = -5000.0, Fxf_max = 0.0;
  double Fxr_abs = 5000.0;

  bool contains(const EgoState& s) const;
};

// Fitted MMPS approximations consumed by Eq. (18) and the MILP encoder.
// All functions carry their fit domains; evaluating outside raises DomainError
// in mmps_derivative.
struct MmpsApproxSet {
  mmps::MmpsFunction cos_pb;   // [cos(psi+beta)], 1-D in theta = psi+beta
  mmps::MmpsFunction sin_pb;   // [sin(psi+beta)], 1-D in theta
  mmps::MmpsFunction beta_r;   // [beta*r], 2-D in (beta, r)
  mmps::MmpsFunction dfyf;     // [delta*Fyf], 2-D in (delta, u), u = alpha_f/alpha_s
  mmps::MmpsFunction kamm_front;  // over-estimating max-of-planes of sqrt(Fx^2+Fy^2), N
  mmps::MmpsFunction kamm_rear;
  // Per-component |mmps - nonlinear| derivative budgets recorded at fit time
  // (indices follow EgoState::as_array), asserted as regression bounds.
  std::array<double, 7> derivative_budget{};

  void save(const std::string& dir) const;
  static MmpsApproxSet load(const std::string& dir);
};

struct FrozenParams {
  double v0 = 22.0;     // m/s, measured speed frozen over the horizon (Remark 2)
  double delta0 = 0.0;  // rad, measured steering angle
};

// Eq. (15). Throws DomainError when v < 5 m/s.
struct SlipAngles {
  double alpha_f = 0.0;
  double alpha_r = 0.0;
};
SlipAngles slip_angles(const EgoState& s, const VehicleParams& p);

// Pacejka curve Fmax*sin(C*atan(B*alpha)) (Fig. 4).
double pacejka_lateral_force(double alpha, const VehicleParams& p);

// Eq. (17)/(19) with frozen velocity v0:
//   Fy = Fmax * min(max(alpha/alpha_s, -1), 1), alpha per Eq. (15) at v0.
struct LateralForces {
  double Fyf = 0.0;
  double Fyr = 0.0;
};
LateralForces mmps_lateral_forces(const EgoState& s, const VehicleParams& p, double v0);

// Eq. (13) exactly, lateral forces from the Pacejka law at the true slip
// angles. Throws DomainError when v < 5.
EgoDerivative nonlinear_derivative(const EgoState& s, const EgoInput& u,
                                   const VehicleParams& p);

// Eq. (18) with frozen (v0, delta0) and the fitted approximations.
// Throws DomainError naming the offending function when an MMPS input leaves
// its fit domain.
EgoDerivative mmps_derivative(const EgoState& s, const EgoInput& u,
                              const VehicleParams& p, const FrozenParams& frozen,
                              const MmpsApproxSet& approx);

double wrap_angle(double a);  // into [-pi, pi]

// Forward Euler (Remark 3), psi wrapped to [-pi, pi].
template <typename DerivFn>
EgoState euler_step(const EgoState& s, const EgoInput& u, double ts, DerivFn&& deriv) {
  const EgoDerivative d = deriv(s, u);
  EgoState n;
  n.x = s.x + ts * d.x;
  n.y = s.y + ts * d.y;
  n.psi = s.psi + ts * d.psi;
  n.v = s.v + ts * d.v;
  n.beta = s.beta + ts * d.beta;
  n.r = s.r + ts * d.r;
  n.delta = s.delta + ts * d.delta;
  n.psi = wrap_angle(n.psi);
  return n;
}

// Max-of-affine Kamm force magnitude (Eq. 14 left-hand side); the caller
// compares against mu*Fz.
enum class Axle { Front, Rear };
double kamm_mmps(double Fx, double Fy, Axle axle, const MmpsApproxSet& approx);

// RK4 integration of the nonlinear model over one control period with
// `substeps` internal steps; the simulation plant.
EgoState integrate_nonlinear(const EgoState& s, const EgoInput& u,
                             const VehicleParams& p, double ts, int substeps = 10);

}  // namespace psmpc::vehicle
