// SPDX-License-Identifier: Apache-2.0
//
// Fit pipeline producing the shipped approximation artifacts: the Eq. (18)
// vehicle MMPS set (trig, bilinear, tire-product, Kamm planes) and the
// Eq. (22)/(23) probability templates, plus a JSON fit report recording
// errors, seeds and the derivative budget.

#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "psmpc/obstacles.hpp"
#include "psmpc/vehicle.hpp"

namespace psmpc::approx {

struct BuildOptions {
  std::uint64_t seed = 20260823;
  std::size_t trig_resolution = 201;    // 1-D grids
  std::size_t surface_resolution = 41;  // 2-D grids (bilinear/tire/Kamm)
  std::size_t prob_resolution = 121;    // probability template calibration
  std::size_t restarts = 16;
  obstacles::Geometry geometry;
  double epsilon = 1e-3;  // chance level used for template calibration
};

// Fits the vehicle set. The trig/bilinear/product functions are shifted so
// they vanish exactly at the frozen equilibrium (origin), which keeps steady
// cruising at the reference cost-free. Appends per-artifact entries to
// `report` when non-null.
vehicle::MmpsApproxSet build_vehicle_approximations(const vehicle::VehicleParams& p,
                                                    const BuildOptions& opts,
                                                    nlohmann::json* report);

// Deterministic sampling estimate of the per-component max |mmps - nonlinear|
// derivative gap over `n` states/inputs drawn from the Table I box with
// v0 = state.v, delta0 = state.delta. Shared between the builder (records it)
// and the regression tests (reproduce it bit-for-bit).
std::array<double, 7> measure_derivative_budget(const vehicle::MmpsApproxSet& approx,
                                                const vehicle::VehicleParams& p,
                                                std::uint64_t seed, std::size_t n);

// Fits both artifacts into `out_dir` (vehicle set + probability templates)
// and writes fit_report.json. Returns the report.
nlohmann::json build_all(const std::string& out_dir, const BuildOptions& opts = {},
                         const vehicle::VehicleParams& p = {});

}  // namespace psmpc::approx
