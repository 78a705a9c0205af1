// SPDX-License-Identifier: Apache-2.0
//
// Stochastic obstacle machinery: point-mass prediction under a stabilizing
// feedback (Eqs. 9-11), Gaussian presence pdf (Eq. 12), the quadrature
// collision-probability oracle over the unsafe ellipse Omega, and the
// parametric MMPS probability / proxy templates (Eqs. 22-23) plus the risk
// function (Eq. 24).

#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "psmpc/mmps.hpp"
#include "psmpc/vehicle.hpp"

namespace psmpc::obstacles {

struct ObstacleState {
  double x = 0.0;     // m
  double y = 0.0;     // m
  double xdot = 0.0;  // m/s (Table I: [5,50] dynamic, 0 static)
  double ydot = 0.0;  // m/s (Table I: [-5,5])

  Eigen::Vector4d vec() const { return {x, y, xdot, ydot}; }
  static ObstacleState from_vec(const Eigen::Vector4d& v) {
    return {v(0), v(1), v(2), v(3)};
  }
};

// Mean + diagonal covariance (Remark 1). The sigma entries are used verbatim
// as the sigma symbols of Eq. (12) — one consistent convention everywhere.
struct GaussianBelief {
  ObstacleState mean;
  std::array<double, 4> sigma{};  // (sx, sy, sxd, syd) >= 0
};

// Unsafe ellipse Omega around the obstacle position that the ego CoG must
// avoid, plus the sigma floor applied when instantiating probability MMPS
// for (near-)deterministic beliefs.
struct Geometry {
  double a = 5.0;  // m, longitudinal semi-axis
  double b = 2.0;  // m, lateral semi-axis
  double sigma_floor_x = 0.30;
  double sigma_floor_y = 0.15;
};

struct ObstacleModel {
  Eigen::Matrix4d A;           // discretized double integrator at ts
  Eigen::Matrix<double, 4, 2> B;
  Eigen::Matrix<double, 2, 4> K;  // stabilizing gain, rho(A-BK) < 1
  std::array<double, 4> Xi0{};    // initial/process covariance diagonal
  Geometry geometry;
  double ts = 0.2;

  // Builds A, B at ts and K placing the per-axis (A-BK) eigenvalues at
  // (pole_pos, pole_vel). Throws ConfigError when (A-BK) is not stable.
  static ObstacleModel make(double ts, double pole_pos = 0.6, double pole_vel = 0.4,
                            std::array<double, 4> Xi0 = {0.05, 0.02, 0.1, 0.05},
                            Geometry geometry = {});
};

// §IV-A heuristic reference at prediction step i: keep current longitudinal
// speed and lateral position, zero lateral speed; x advances at the current
// xdot (x_ref(k+i) = x + i*ts*xdot).
ObstacleState obstacle_reference(const ObstacleState& z, int step = 0, double ts = 0.2);

// Eq. (11): mean via (A-BK) xi + BK z_ref, covariance via
// (A-BK) Xi (A-BK)^T + Xi0 with off-diagonals dropped (Remark 1).
// Returns beliefs for steps 1..steps.
std::vector<GaussianBelief> predict_belief(const GaussianBelief& b,
                                           const ObstacleModel& model, int steps);

// Full-matrix propagation oracle (test-side): same recursion without the
// diagonal drop on the *input* (input treated as diagonal), returning the
// diagonal of the result. Exposed so tests can assert the drop-rule identity.
std::vector<GaussianBelief> predict_belief_full_oracle(const GaussianBelief& b,
                                                       const ObstacleModel& model,
                                                       int steps);

// Eq. (12), implemented verbatim:
//   exp(-((x-xi_x)/(sqrt2 sx))^2 - ((y-xi_y)/(sqrt2 sy))^2) / (2 pi sx sy).
// Throws DegenerateBeliefError when a sigma is zero.
double presence_pdf(const GaussianBelief& b, double x, double y);

// Probability that the obstacle position lies inside the ellipse with
// semi-axes (geometry.a, geometry.b) centered at (ego_x, ego_y): polar-grid
// quadrature of presence_pdf, absolute error <= 1e-6. Test-side ground truth.
double collision_probability_oracle(double ego_x, double ego_y,
                                    const GaussianBelief& b, const Geometry& g);

// ── Eq. (22)/(23) templates ────────────────────────────────────────────────
//
// A canonical capped pyramid max(min of 5 planes, 0) fitted once to the
// collision probability of the unit belief (sigma = 1, xi = 0), instantiated
// per (xi, sigma) by shifting planes to xi and scaling slopes per axis by
// u = rho(1)/rho(sigma), where rho(sigma) = a_eff + c*sigma is the calibrated
// epsilon-contour radius (c measured from the oracle at fit time).

struct ProbabilityTemplates {
  mmps::MmpsFunction probability;  // Eq. (22) shape, fitted to the oracle
  mmps::MmpsFunction proxy;        // Eq. (23) over-estimating shape
  Geometry geometry;               // geometry the templates were fitted for
  // epsilon-contour calibration rho_axis(sigma) = a_eff + c*sigma:
  double a_eff_x = 0.0, c_x = 0.0;
  double a_eff_y = 0.0, c_y = 0.0;
  double epsilon = 1e-3;           // contour level used for calibration
  double sigma_min = 0.05, sigma_max = 3.0;  // calibrated validity range
  double rel_err_at_mean = 0.0;    // recorded regression tolerance
  std::size_t calibration_resolution = 201;

  double rho_x(double sigma) const { return a_eff_x + c_x * sigma; }
  double rho_y(double sigma) const { return a_eff_y + c_y * sigma; }

  void save(const std::string& dir) const;
  static ProbabilityTemplates load(const std::string& dir);
};

// Fits both templates against the quadrature oracle for the unit belief over
// the epsilon-contour bounding box (see ledger/README). Deterministic in seed.
ProbabilityTemplates fit_probability_templates(const Geometry& g,
                                               double epsilon = 1e-3,
                                               std::uint64_t seed = 20260823,
                                               std::size_t grid_resolution = 121);

// Per-instance construction. A warning flag (not an error) is recorded when
// sigma leaves the calibrated range.
struct InstanceResult {
  mmps::MmpsFunction fn;
  bool extrapolation_warning = false;
};
InstanceResult build_probability_mmps(const GaussianBelief& b,
                                      const ProbabilityTemplates& t);
InstanceResult build_proxy_mmps(const GaussianBelief& b,
                                const ProbabilityTemplates& t);

// Eq. (24): mean over steps of the max over obstacles of the proxy evaluated
// at the predicted ego position; the max over an empty set is 0.
// proxies[i] holds the per-obstacle proxies of step i.
double risk(const std::vector<vehicle::EgoState>& traj,
            const std::vector<std::vector<mmps::MmpsFunction>>& proxies);

}  // namespace psmpc::obstacles
