// SPDX-License-Identifier: Apache-2.0

#include "psmpc/obstacles.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "psmpc/errors.hpp"
#include "psmpc/mmps_fit.hpp"

namespace psmpc::obstacles {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

// ── model construction ──────────────────────────────────────────────────────

ObstacleModel ObstacleModel::make(double ts, double pole_pos, double pole_vel,
                                  std::array<double, 4> Xi0, Geometry geometry) {
  ObstacleModel m;
  m.ts = ts;
  m.Xi0 = Xi0;
  m.geometry = geometry;
  m.A = Eigen::Matrix4d::Identity();
  m.A(0, 2) = ts;
  m.A(1, 3) = ts;
  m.B.setZero();
  m.B(0, 0) = 0.5 * ts * ts;
  m.B(1, 1) = 0.5 * ts * ts;
  m.B(2, 0) = ts;
  m.B(3, 1) = ts;

  // Per-axis pole placement for the (position, velocity) double integrator:
  // desired char. poly lambda^2 - T lambda + D with T = p1+p2, D = p1*p2.
  const double T = pole_pos + pole_vel;
  const double D = pole_pos * pole_vel;
  const double k_pos = ((2.0 - T) - (1.0 - D)) / (ts * ts);
  const double k_vel = ((2.0 - T) + (1.0 - D)) / (2.0 * ts);
  m.K.setZero();
  m.K(0, 0) = k_pos;
  m.K(0, 2) = k_vel;
  m.K(1, 1) = k_pos;
  m.K(1, 3) = k_vel;

  const Eigen::Matrix4d Acl = m.A - m.B * m.K;
  const double rho = Acl.eigenvalues().cwiseAbs().maxCoeff();
  if (rho >= 1.0 - 1e-9)
    throw ConfigError("ObstacleModel: (A - B K) is not Schur stable");
  return m;
}

ObstacleState obstacle_reference(const ObstacleState& z, int step, double ts) {
  ObstacleState ref = z;
  ref.x = z.x + step * ts * z.xdot;
  ref.ydot = 0.0;
  return ref;
}

// ── belief propagation (Eq. 11, Remark 1) ───────────────────────────────────

std::vector<GaussianBelief> predict_belief(const GaussianBelief& b,
                                           const ObstacleModel& model, int steps) {
  if (steps < 1) throw std::invalid_argument("predict_belief: steps must be >= 1");
  const Eigen::Matrix4d Acl = model.A - model.B * model.K;
  const Eigen::Matrix4d BK = model.B * model.K;

  std::vector<GaussianBelief> out;
  out.reserve(steps);
  Eigen::Vector4d mean = b.mean.vec();
  std::array<double, 4> sig = b.sigma;
  for (int i = 0; i < steps; ++i) {
    const Eigen::Vector4d zref = obstacle_reference(b.mean, i, model.ts).vec();
    mean = Acl * mean + BK * zref;
    // diagonal covariance update: Sigma+ = diag(Acl Sigma Acl^T) + Xi0
    std::array<double, 4> next{};
    for (int rrow = 0; rrow < 4; ++rrow) {
      double acc = 0.0;
      for (int c = 0; c < 4; ++c) acc += Acl(rrow, c) * Acl(rrow, c) * sig[c];
      next[rrow] = acc + model.Xi0[rrow];
    }
    sig = next;
    GaussianBelief nb;
    nb.mean = ObstacleState::from_vec(mean);
    nb.sigma = sig;
    out.push_back(nb);
  }
  return out;
}

std::vector<GaussianBelief> predict_belief_full_oracle(const GaussianBelief& b,
                                                       const ObstacleModel& model,
                                                       int steps) {
  const Eigen::Matrix4d Acl = model.A - model.B * model.K;
  const Eigen::Matrix4d BK = model.B * model.K;
  std::vector<GaussianBelief> out;
  Eigen::Vector4d mean = b.mean.vec();
  std::array<double, 4> sig = b.sigma;
  for (int i = 0; i < steps; ++i) {
    const Eigen::Vector4d zref = obstacle_reference(b.mean, i, model.ts).vec();
    mean = Acl * mean + BK * zref;
    Eigen::Matrix4d Sigma = Eigen::Matrix4d::Zero();
    for (int d = 0; d < 4; ++d) Sigma(d, d) = sig[d];
    Eigen::Matrix4d full = Acl * Sigma * Acl.transpose();
    for (int d = 0; d < 4; ++d) sig[d] = full(d, d) + model.Xi0[d];
    GaussianBelief nb;
    nb.mean = ObstacleState::from_vec(mean);
    nb.sigma = sig;
    out.push_back(nb);
  }
  return out;
}

// ── presence pdf and collision-probability oracle ───────────────────────────

double presence_pdf(const GaussianBelief& b, double x, double y) {
  const double sx = b.sigma[0], sy = b.sigma[1];
  if (!(sx > 0.0) || !(sy > 0.0))
    throw DegenerateBeliefError("presence_pdf: zero sigma");
  const double ex = (x - b.mean.x) / (std::sqrt(2.0) * sx);
  const double ey = (y - b.mean.y) / (std::sqrt(2.0) * sy);
  return std::exp(-ex * ex - ey * ey) / (2.0 * kPi * sx * sy);
}

namespace {

// One pass of the polar-grid quadrature: in belief-normalized coordinates the
// pdf is the standard bivariate normal, so the radial integral along each ray
// has the closed form exp(-t0^2/2) - exp(-t1^2/2); only the angular grid is
// numeric. [t0, t1] is the ray's intersection with the transformed ellipse.
double polar_pass(double cu, double cv, double Au, double Av, std::size_t n_theta) {
  double acc = 0.0;
  for (std::size_t k = 0; k < n_theta; ++k) {
    const double th = 2.0 * kPi * (static_cast<double>(k) + 0.5) /
                      static_cast<double>(n_theta);
    const double cx = std::cos(th) / Au, sy2 = std::sin(th) / Av;
    const double a2 = cx * cx + sy2 * sy2;
    const double a1 = -2.0 * (cu * cx / Au + cv * sy2 / Av);
    const double a0 = (cu / Au) * (cu / Au) + (cv / Av) * (cv / Av) - 1.0;
    const double disc = a1 * a1 - 4.0 * a2 * a0;
    if (disc <= 0.0) continue;
    const double sq = std::sqrt(disc);
    double t0 = (-a1 - sq) / (2.0 * a2);
    double t1 = (-a1 + sq) / (2.0 * a2);
    if (t1 <= 0.0) continue;
    t0 = std::max(t0, 0.0);
    acc += std::exp(-0.5 * t0 * t0) - std::exp(-0.5 * t1 * t1);
  }
  return acc / static_cast<double>(n_theta);
}

}  // namespace

double collision_probability_oracle(double ego_x, double ego_y,
                                    const GaussianBelief& b, const Geometry& g) {
  const double sx = b.sigma[0], sy = b.sigma[1];
  if (!(sx > 0.0) || !(sy > 0.0))
    throw DegenerateBeliefError("collision_probability_oracle: zero sigma");
  // ellipse center and semi-axes in normalized (standard-normal) coordinates
  const double cu = (ego_x - b.mean.x) / sx;
  const double cv = (ego_y - b.mean.y) / sy;
  const double Au = g.a / sx;
  const double Av = g.b / sy;

  // Far-field early exit (>= 10 sigma in normalized units).
  const double clearance = std::hypot(std::max(std::abs(cu) - Au, 0.0),
                                      std::max(std::abs(cv) - Av, 0.0));
  if (clearance > 10.0) return 0.0;

  // Angular refinement until two successive doublings agree; tangent rays
  // give sqrt-type kinks, so convergence is checked, not assumed.
  std::size_t n = 2048;
  double prev = polar_pass(cu, cv, Au, Av, n);
  for (int round = 0; round < 7; ++round) {
    n *= 2;
    const double cur = polar_pass(cu, cv, Au, Av, n);
    if (std::abs(cur - prev) < 2.5e-7) return cur;
    prev = cur;
  }
  return prev;
}

// ── template fitting ────────────────────────────────────────────────────────

namespace {

GaussianBelief unit_belief() {
  GaussianBelief b;
  b.sigma = {1.0, 1.0, 0.0, 0.0};
  return b;
}

GaussianBelief iso_belief(double s) {
  GaussianBelief b;
  b.sigma = {s, s, 0.0, 0.0};
  return b;
}

// Distance along +axis at which the oracle crosses `level` (bisection).
double contour_radius(const GaussianBelief& b, const Geometry& g, double level,
                      bool x_axis) {
  double lo = 0.0;
  double hi = (x_axis ? g.a : g.b) + 12.0 * (x_axis ? b.sigma[0] : b.sigma[1]) + 1.0;
  const auto val = [&](double d) {
    return x_axis ? collision_probability_oracle(d, 0.0, b, g)
                  : collision_probability_oracle(0.0, d, b, g);
  };
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (val(mid) > level)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Least-squares line rho(sigma) = a_eff + c*sigma through sampled contours.
void calibrate_axis(const Geometry& g, double level, bool x_axis, double& a_eff,
                    double& c) {
  const std::array<double, 6> sigmas = {0.25, 0.5, 1.0, 1.5, 2.0, 3.0};
  double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
  for (double s : sigmas) {
    const double rho = contour_radius(iso_belief(s), g, level, x_axis);
    sw += 1.0;
    swx += s;
    swy += rho;
    swxx += s * s;
    swxy += s * rho;
  }
  const double denom = sw * swxx - swx * swx;
  c = (sw * swxy - swx * swy) / denom;
  a_eff = (swy - c * swx) / sw;
}

}  // namespace

ProbabilityTemplates fit_probability_templates(const Geometry& g, double epsilon,
                                               std::uint64_t seed,
                                               std::size_t grid_resolution) {
  using mmps::AffineTerm;
  using mmps::Box;
  using mmps::Form;

  ProbabilityTemplates t;
  t.geometry = g;
  t.epsilon = epsilon;
  t.calibration_resolution = grid_resolution;

  calibrate_axis(g, epsilon, true, t.a_eff_x, t.c_x);
  calibrate_axis(g, epsilon, false, t.a_eff_y, t.c_y);

  const GaussianBelief ub = unit_belief();
  const double Rx = contour_radius(ub, g, epsilon, true);
  const double Ry = contour_radius(ub, g, epsilon, false);
  const Box domain{{-Rx, -Ry}, {Rx, Ry}};

  const mmps::TargetFn oracle_fn = [&](const std::vector<double>& x) {
    return collision_probability_oracle(x[0], x[1], ub, g);
  };
  const double P0 = collision_probability_oracle(0.0, 0.0, ub, g);

  // Probability template: max(min of 5 planes, 0); side planes initialized as
  // the pyramid faces through (0, P0) hitting epsilon at the contour box.
  mmps::FitStructure ps;
  ps.group_sizes = {5, 1};
  ps.frozen = {{1, 0}};  // the 0 cap
  {
    std::vector<std::vector<AffineTerm>> hint(2);
    hint[0] = {
        AffineTerm{{0.0, 0.0}, P0},                          // top
        AffineTerm{{-(P0 - epsilon) / Rx, 0.0}, P0},         // +x side
        AffineTerm{{(P0 - epsilon) / Rx, 0.0}, P0},          // -x side
        AffineTerm{{0.0, -(P0 - epsilon) / Ry}, P0},         // +y side
        AffineTerm{{0.0, (P0 - epsilon) / Ry}, P0},          // -y side
    };
    hint[1] = {AffineTerm{{0.0, 0.0}, 0.0}};
    ps.init_hint = hint;
  }
  mmps::FitOptions po;
  po.grid_resolution = grid_resolution;
  po.restarts = 6;
  po.max_iters = 80;
  po.seed = seed;
  const mmps::FitResult prob = mmps::fit(oracle_fn, domain, Form::Disjunctive, ps, po);
  t.probability = prob.function;
  t.rel_err_at_mean =
      std::abs(mmps::evaluate(t.probability, {0.0, 0.0}) - P0) / P0;

  // Proxy template: same shape, top plane pinned slightly above 1 so the
  // instance value at the mean dominates any true probability for any sigma;
  // side planes fitted with the under-estimation penalty against
  // max(oracle, probability template), then lifted (group 0 only, keeping the
  // 0 cap) until dominance is exact on the calibration and refinement grids.
  const mmps::TargetFn proxy_target = [&](const std::vector<double>& x) {
    return std::max(oracle_fn(x), mmps::evaluate(t.probability, x));
  };
  mmps::FitStructure xs;
  xs.group_sizes = {5, 1};
  xs.frozen = {{0, 0}, {1, 0}};  // pinned top plane + 0 cap
  {
    std::vector<std::vector<AffineTerm>> hint(2);
    hint[0] = {
        AffineTerm{{0.0, 0.0}, 1.001},
        AffineTerm{{-(P0 - epsilon) / Rx, 0.0}, P0 * 1.05},
        AffineTerm{{(P0 - epsilon) / Rx, 0.0}, P0 * 1.05},
        AffineTerm{{0.0, -(P0 - epsilon) / Ry}, P0 * 1.05},
        AffineTerm{{0.0, (P0 - epsilon) / Ry}, P0 * 1.05},
    };
    hint[1] = {AffineTerm{{0.0, 0.0}, 0.0}};
    xs.init_hint = hint;
  }
  mmps::FitOptions xo = po;
  xo.overestimate = true;
  xo.restarts = 4;
  mmps::FitResult prox = mmps::fit(proxy_target, domain, Form::Disjunctive, xs, xo);

  // Exact-dominance lift over (a) the calibration grid against the oracle and
  // (b) a fine grid against the probability template (plus a slope-aware
  // margin so PWA-vs-PWA dominance holds between fine-grid nodes too).
  const std::size_t fine = 4 * grid_resolution + 1;
  const double hx = 2.0 * Rx / static_cast<double>(fine - 1);
  const double hy = 2.0 * Ry / static_cast<double>(fine - 1);
  const double slope_margin =
      0.5 * std::max(hx, hy) *
      (mmps::lipschitz_bound(prox.function) + mmps::lipschitz_bound(t.probability));

  for (int round = 0; round < 64; ++round) {
    double viol = 0.0;
    for (std::size_t i = 0; i < grid_resolution; ++i) {
      for (std::size_t j = 0; j < grid_resolution; ++j) {
        const std::vector<double> p = {domain.coord(0, i, grid_resolution),
                                       domain.coord(1, j, grid_resolution)};
        viol = std::max(viol, oracle_fn(p) - mmps::evaluate(prox.function, p));
      }
    }
    for (std::size_t i = 0; i < fine; ++i) {
      for (std::size_t j = 0; j < fine; ++j) {
        const std::vector<double> p = {domain.coord(0, i, fine),
                                       domain.coord(1, j, fine)};
        const double need =
            mmps::evaluate(t.probability, p) + slope_margin - mmps::evaluate(prox.function, p);
        viol = std::max(viol, need);
      }
    }
    if (viol <= 0.0) break;
    const double bump = viol + 1e-14;
    for (auto& term : prox.function.groups[0]) term.offset += bump;
  }
  t.proxy = prox.function;
  return t;
}

// ── per-instance construction ───────────────────────────────────────────────

namespace {

InstanceResult instantiate(const mmps::MmpsFunction& tpl, const GaussianBelief& b,
                           const ProbabilityTemplates& t) {
  const double sx = std::max(b.sigma[0], t.geometry.sigma_floor_x);
  const double sy = std::max(b.sigma[1], t.geometry.sigma_floor_y);
  InstanceResult out;
  out.extrapolation_warning =
      sx < t.sigma_min || sx > t.sigma_max || sy < t.sigma_min || sy > t.sigma_max;

  const double ux = t.rho_x(1.0) / t.rho_x(sx);
  const double uy = t.rho_y(1.0) / t.rho_y(sy);

  mmps::MmpsFunction f = tpl;
  for (auto& grp : f.groups) {
    for (auto& term : grp) {
      const double gx = term.coeffs[0] * ux;
      const double gy = term.coeffs[1] * uy;
      term.offset = term.offset - gx * b.mean.x - gy * b.mean.y;
      term.coeffs[0] = gx;
      term.coeffs[1] = gy;
    }
  }
  f.domain.lo = {b.mean.x + tpl.domain.lo[0] / ux, b.mean.y + tpl.domain.lo[1] / uy};
  f.domain.hi = {b.mean.x + tpl.domain.hi[0] / ux, b.mean.y + tpl.domain.hi[1] / uy};
  out.fn = std::move(f);
  return out;
}

}  // namespace

InstanceResult build_probability_mmps(const GaussianBelief& b,
                                      const ProbabilityTemplates& t) {
  return instantiate(t.probability, b, t);
}

InstanceResult build_proxy_mmps(const GaussianBelief& b,
                                const ProbabilityTemplates& t) {
  return instantiate(t.proxy, b, t);
}

// ── risk (Eq. 24) ───────────────────────────────────────────────────────────

double risk(const std::vector<vehicle::EgoState>& traj,
            const std::vector<std::vector<mmps::MmpsFunction>>& proxies) {
  if (traj.size() != proxies.size())
    throw std::invalid_argument("risk: trajectory/proxy horizon mismatch");
  if (traj.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    double step_max = 0.0;  // max over the empty set is 0
    for (const auto& f : proxies[i])
      step_max = std::max(step_max, mmps::evaluate(f, {traj[i].x, traj[i].y}));
    acc += step_max;
  }
  return acc / static_cast<double>(traj.size());
}

// ── persistence ─────────────────────────────────────────────────────────────

void ProbabilityTemplates::save(const std::string& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  mmps::save_json(probability, dir + "/prob_template.json");
  mmps::save_json(proxy, dir + "/proxy_template.json");
  nlohmann::json j;
  j["geometry"] = {{"a", geometry.a},
                   {"b", geometry.b},
                   {"sigma_floor_x", geometry.sigma_floor_x},
                   {"sigma_floor_y", geometry.sigma_floor_y}};
  j["a_eff_x"] = a_eff_x;
  j["c_x"] = c_x;
  j["a_eff_y"] = a_eff_y;
  j["c_y"] = c_y;
  j["epsilon"] = epsilon;
  j["sigma_min"] = sigma_min;
  j["sigma_max"] = sigma_max;
  j["rel_err_at_mean"] = rel_err_at_mean;
  j["calibration_resolution"] = calibration_resolution;
  std::ofstream out(dir + "/prob_calibration.json");
  if (!out) throw ConfigError("cannot write " + dir + "/prob_calibration.json");
  out << j.dump(2) << '\n';
}

ProbabilityTemplates ProbabilityTemplates::load(const std::string& dir) {
  ProbabilityTemplates t;
  t.probability = mmps::load_json(dir + "/prob_template.json");
  t.proxy = mmps::load_json(dir + "/proxy_template.json");
  std::ifstream in(dir + "/prob_calibration.json");
  if (!in) throw ConfigError("cannot open " + dir + "/prob_calibration.json");
  nlohmann::json j;
  in >> j;
  t.geometry.a = j.at("geometry").at("a").get<double>();
  t.geometry.b = j.at("geometry").at("b").get<double>();
  t.geometry.sigma_floor_x = j.at("geometry").at("sigma_floor_x").get<double>();
  t.geometry.sigma_floor_y = j.at("geometry").at("sigma_floor_y").get<double>();
  t.a_eff_x = j.at("a_eff_x").get<double>();
  t.c_x = j.at("c_x").get<double>();
  t.a_eff_y = j.at("a_eff_y").get<double>();
  t.c_y = j.at("c_y").get<double>();
  t.epsilon = j.at("epsilon").get<double>();
  t.sigma_min = j.at("sigma_min").get<double>();
  t.sigma_max = j.at("sigma_max").get<double>();
  t.rel_err_at_mean = j.at("rel_err_at_mean").get<double>();
  t.calibration_resolution = j.at("calibration_resolution").get<std::size_t>();
  return t;
}

}  // namespace psmpc::obstacles
