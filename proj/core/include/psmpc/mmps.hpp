// SPDX-License-Identifier: Apache-2.0
//
// MMPS (max-min-plus-scaling) functions in canonical form.
//
// A conjunctive MMPS function is  f(x) = min_p max_q (gamma_{pq}·x + nu_{pq}),
// a disjunctive one is            f(x) = max_p min_q (phi_{pq}·x + omega_{pq});
// both are universal representations of continuous piecewise-affine functions.
// These are the planner's only nonlinearity carriers: every fitted
// approximation (trig, tire, Kamm, probability pyramids) is an MmpsFunction,
// and the MILP encoder consumes the group structure directly.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace psmpc::mmps {

struct AffineTerm {
  std::vector<double> coeffs;  // one per input dimension
  double offset = 0.0;

  double value(const std::vector<double>& x) const;
};

enum class Form { Conjunctive, Disjunctive };

// Axis-aligned box; the domain a fit is valid on.
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  std::size_t dim() const { return lo.size(); }
  bool contains(const std::vector<double>& x, double tol = 0.0) const;
  // Uniform grid coordinate along axis `d`: lo + t*(hi-lo), t = i/(n-1).
  double coord(std::size_t d, std::size_t i, std::size_t n) const;
};

struct MmpsFunction {
  Form form = Form::Conjunctive;
  std::size_t dim = 0;
  std::vector<std::vector<AffineTerm>> groups;
  Box domain;

  // Throws std::invalid_argument on malformed structure.
  void validate() const;
};

// Eq. (3): min over groups of max within group (conjunctive), or the mirror.
// Evaluation outside f.domain is permitted; domain semantics are the caller's.
double evaluate(const MmpsFunction& f, const std::vector<double>& x);

// Lipschitz constant bound: max over all terms of ||coeffs||_1.
double lipschitz_bound(const MmpsFunction& f);

// Uniformly shift the function value by `c` (adds c to every offset; exact
// for both canonical forms).
MmpsFunction shifted(const MmpsFunction& f, double c);

// Scale the function value by s > 0 (scales every coefficient and offset).
MmpsFunction scaled(const MmpsFunction& f, double s);

// JSON round-trip: {form, dim, domain:{lo,hi}, groups:[[{coeffs,offset}]]}.
// Doubles survive bit-faithfully (shortest round-trip decimal encoding).
nlohmann::json to_json(const MmpsFunction& f);
MmpsFunction from_json(const nlohmann::json& j);

void save_json(const MmpsFunction& f, const std::string& path);
MmpsFunction load_json(const std::string& path);

}  // namespace psmpc::mmps
