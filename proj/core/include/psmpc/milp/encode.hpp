// SPDX-License-Identifier: Apache-2.0
//
// Big-M encodings of max/min operators, MMPS functions (Eq. 3 structure) and
// 1-norm epigraph terms. Every M is computed per-constraint from interval
// arithmetic on the participating variable bounds — never a global constant.

#pragma once

#include <string>
#include <vector>

#include "psmpc/milp/model.hpp"
#include "psmpc/mmps.hpp"

namespace psmpc::milp {

struct Binding {
  int y = -1;                  // the introduced output variable
  std::vector<int> binaries;   // selector binaries added by this encoding
};

// y = max_i terms[i]:  y >= t_i;  y <= t_i + M_i (1 - b_i);  sum b_i = 1.
// Throws ModelError when a term has non-finite range.
Binding add_max_equality(MilpModel& m, const std::string& name,
                         const std::vector<LinExpr>& terms);

// Mirror image: y = min_i terms[i].
Binding add_min_equality(MilpModel& m, const std::string& name,
                         const std::vector<LinExpr>& terms);

// One-sided disjunction  min_i terms[i] <= rhs  using k-1 selector binaries:
//   t_0 <= rhs + M_0 * sum b_j,   t_j <= rhs + M_j (1 - b_j),   sum b_j <= 1.
// Cheaper than add_min_equality when only the upper side is needed (chance
// constraints and risk epigraphs).
std::vector<int> add_min_le(MilpModel& m, const std::string& name,
                            const std::vector<LinExpr>& terms, const LinExpr& rhs);

// Compact equality variants with k-1 selector binaries (sum b <= 1; the
// all-zero pattern selects term 0). Same exactness guarantee at integral
// points as the k-binary forms; used by the planner to stay inside the
// per-step binary budget.
Binding add_max_equality_compact(MilpModel& m, const std::string& name,
                                 const std::vector<LinExpr>& terms);
Binding add_min_equality_compact(MilpModel& m, const std::string& name,
                                 const std::vector<LinExpr>& terms);

// Output variable equal to evaluate(f, x) at every feasible integral point.
// Single-term groups and single-group functions are collapsed to equality
// rows (an affine f costs zero binaries).
Binding encode_mmps(MilpModel& m, const std::string& name,
                    const mmps::MmpsFunction& f, const std::vector<int>& input_vars);

// encode_mmps over the compact equality variants.
Binding encode_mmps_compact(MilpModel& m, const std::string& name,
                            const mmps::MmpsFunction& f,
                            const std::vector<int>& input_vars);

// t >= expr, t >= -expr; exact |expr| when t is minimized.
int encode_abs_term(MilpModel& m, const std::string& name, const LinExpr& expr);

}  // namespace psmpc::milp
