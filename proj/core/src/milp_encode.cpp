// SPDX-License-Identifier: Apache-2.0

#include "psmpc/milp/encode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "psmpc/errors.hpp"

namespace psmpc::milp {

namespace {

void check_finite_range(const MilpModel& m, const LinExpr& e, const std::string& who) {
  if (!std::isfinite(m.expr_lower(e)) || !std::isfinite(m.expr_upper(e)))
    throw ModelError(who + ": term with unbounded range");
}

// lhs - rhs <= 0 as a row (sense LE, rhs folded into the constant side)
std::vector<Entry> diff_row(const LinExpr& lhs, const LinExpr& rhs) {
  std::vector<Entry> row = lhs.terms;
  for (const auto& e : rhs.terms) row.push_back({e.var, -e.coef});
  return row;
}

void record_extremum(MilpModel& m, WitnessOp::Kind kind, const Binding& b,
                     const std::vector<LinExpr>& terms, bool compact) {
  WitnessOp op;
  op.kind = kind;
  op.y = b.y;
  op.terms = terms;
  op.binaries = b.binaries;
  op.compact = compact;
  m.witness.push_back(std::move(op));
}

}  // namespace

Binding add_max_equality(MilpModel& m, const std::string& name,
                         const std::vector<LinExpr>& terms) {
  if (terms.empty()) throw ModelError("add_max_equality(" + name + "): no terms");
  double ylo = -std::numeric_limits<double>::infinity();
  double yhi = -std::numeric_limits<double>::infinity();
  for (const auto& t : terms) {
    check_finite_range(m, t, "add_max_equality(" + name + ")");
    ylo = std::max(ylo, m.expr_lower(t));
    yhi = std::max(yhi, m.expr_upper(t));
  }
  Binding b;
  b.y = m.add_variable(name + "_y", ylo, yhi);

  std::vector<Entry> convex;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const std::string tag = name + "_" + std::to_string(i);
    // y >= t_i  ->  t_i - y <= 0
    std::vector<Entry> lo = diff_row(terms[i], LinExpr::var(b.y));
    m.add_constraint(tag + "_lo", std::move(lo), Sense::LE, -terms[i].constant);
    // y <= t_i + M_i (1 - b_i)  ->  y - t_i + M_i b_i <= M_i
    const double Mi = yhi - m.expr_lower(terms[i]);
    const int bi = m.add_variable(tag + "_b", 0.0, 1.0, VarType::Binary);
    std::vector<Entry> up = diff_row(LinExpr::var(b.y), terms[i]);
    up.push_back({bi, Mi});
    m.add_constraint(tag + "_up", std::move(up), Sense::LE, Mi + terms[i].constant);
    convex.push_back({bi, 1.0});
    b.binaries.push_back(bi);
  }
  m.add_constraint(name + "_sel", std::move(convex), Sense::EQ, 1.0);
  record_extremum(m, WitnessOp::Kind::Max, b, terms, false);
  return b;
}

Binding add_min_equality(MilpModel& m, const std::string& name,
                         const std::vector<LinExpr>& terms) {
  if (terms.empty()) throw ModelError("add_min_equality(" + name + "): no terms");
  double ylo = std::numeric_limits<double>::infinity();
  double yhi = std::numeric_limits<double>::infinity();
  for (const auto& t : terms) {
    check_finite_range(m, t, "add_min_equality(" + name + ")");
    ylo = std::min(ylo, m.expr_lower(t));
    yhi = std::min(yhi, m.expr_upper(t));
  }
  Binding b;
  b.y = m.add_variable(name + "_y", ylo, yhi);

  std::vector<Entry> convex;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const std::string tag = name + "_" + std::to_string(i);
    // y <= t_i  ->  y - t_i <= 0
    std::vector<Entry> up = diff_row(LinExpr::var(b.y), terms[i]);
    m.add_constraint(tag + "_up", std::move(up), Sense::LE, terms[i].constant);
    // y >= t_i - M_i (1 - b_i)  ->  t_i - y + M_i b_i <= M_i
    const double Mi = m.expr_upper(terms[i]) - ylo;
    const int bi = m.add_variable(tag + "_b", 0.0, 1.0, VarType::Binary);
    std::vector<Entry> lo = diff_row(terms[i], LinExpr::var(b.y));
    lo.push_back({bi, Mi});
    m.add_constraint(tag + "_lo", std::move(lo), Sense::LE, Mi - terms[i].constant);
    convex.push_back({bi, 1.0});
    b.binaries.push_back(bi);
  }
  m.add_constraint(name + "_sel", std::move(convex), Sense::EQ, 1.0);
  record_extremum(m, WitnessOp::Kind::Min, b, terms, false);
  return b;
}

Binding add_max_equality_compact(MilpModel& m, const std::string& name,
                                 const std::vector<LinExpr>& terms) {
  if (terms.empty())
    throw ModelError("add_max_equality_compact(" + name + "): no terms");
  double ylo = -std::numeric_limits<double>::infinity();
  double yhi = -std::numeric_limits<double>::infinity();
  for (const auto& t : terms) {
    check_finite_range(m, t, "add_max_equality_compact(" + name + ")");
    ylo = std::max(ylo, m.expr_lower(t));
    yhi = std::max(yhi, m.expr_upper(t));
  }
  Binding b;
  b.y = m.add_variable(name + "_y", ylo, yhi);

  for (std::size_t i = 0; i < terms.size(); ++i) {
    std::vector<Entry> lo = diff_row(terms[i], LinExpr::var(b.y));
    m.add_constraint(name + "_" + std::to_string(i) + "_lo", std::move(lo), Sense::LE,
                     -terms[i].constant);
  }
  std::vector<Entry> budget;
  for (std::size_t j = 1; j < terms.size(); ++j) {
    const int bj = m.add_variable(name + "_b" + std::to_string(j), 0.0, 1.0,
                                  VarType::Binary);
    b.binaries.push_back(bj);
    budget.push_back({bj, 1.0});
    const double Mj = yhi - m.expr_lower(terms[j]);
    std::vector<Entry> up = diff_row(LinExpr::var(b.y), terms[j]);
    up.push_back({bj, Mj});
    m.add_constraint(name + "_" + std::to_string(j) + "_up", std::move(up), Sense::LE,
                     Mj + terms[j].constant);
  }
  // term 0 is selected by the all-zero binary pattern
  const double M0 = yhi - m.expr_lower(terms[0]);
  std::vector<Entry> up0 = diff_row(LinExpr::var(b.y), terms[0]);
  for (int bj : b.binaries) up0.push_back({bj, -M0});
  m.add_constraint(name + "_0_up", std::move(up0), Sense::LE, terms[0].constant);
  if (!budget.empty())
    m.add_constraint(name + "_sel", std::move(budget), Sense::LE, 1.0);
  record_extremum(m, WitnessOp::Kind::Max, b, terms, true);
  return b;
}

Binding add_min_equality_compact(MilpModel& m, const std::string& name,
                                 const std::vector<LinExpr>& terms) {
  if (terms.empty())
    throw ModelError("add_min_equality_compact(" + name + "): no terms");
  double ylo = std::numeric_limits<double>::infinity();
  double yhi = std::numeric_limits<double>::infinity();
  for (const auto& t : terms) {
    check_finite_range(m, t, "add_min_equality_compact(" + name + ")");
    ylo = std::min(ylo, m.expr_lower(t));
    yhi = std::min(yhi, m.expr_upper(t));
  }
  Binding b;
  b.y = m.add_variable(name + "_y", ylo, yhi);

  for (std::size_t i = 0; i < terms.size(); ++i) {
    std::vector<Entry> up = diff_row(LinExpr::var(b.y), terms[i]);
    m.add_constraint(name + "_" + std::to_string(i) + "_up", std::move(up), Sense::LE,
                     terms[i].constant);
  }
  std::vector<Entry> budget;
  for (std::size_t j = 1; j < terms.size(); ++j) {
    const int bj = m.add_variable(name + "_b" + std::to_string(j), 0.0, 1.0,
                                  VarType::Binary);
    b.binaries.push_back(bj);
    budget.push_back({bj, 1.0});
    const double Mj = m.expr_upper(terms[j]) - ylo;
    std::vector<Entry> lo = diff_row(terms[j], LinExpr::var(b.y));
    lo.push_back({bj, Mj});
    m.add_constraint(name + "_" + std::to_string(j) + "_lo", std::move(lo), Sense::LE,
                     Mj - terms[j].constant);
  }
  const double M0 = m.expr_upper(terms[0]) - ylo;
  std::vector<Entry> lo0 = diff_row(terms[0], LinExpr::var(b.y));
  for (int bj : b.binaries) lo0.push_back({bj, -M0});
  m.add_constraint(name + "_0_lo", std::move(lo0), Sense::LE, -terms[0].constant);
  if (!budget.empty())
    m.add_constraint(name + "_sel", std::move(budget), Sense::LE, 1.0);
  record_extremum(m, WitnessOp::Kind::Min, b, terms, true);
  return b;
}

std::vector<int> add_min_le(MilpModel& m, const std::string& name,
                            const std::vector<LinExpr>& terms, const LinExpr& rhs) {
  if (terms.empty()) throw ModelError("add_min_le(" + name + "): no terms");
  for (const auto& t : terms) check_finite_range(m, t, "add_min_le(" + name + ")");
  check_finite_range(m, rhs, "add_min_le(" + name + ")");
  const double rlo = m.expr_lower(rhs);

  const auto record = [&](const std::vector<int>& bins) {
    WitnessOp op;
    op.kind = WitnessOp::Kind::MinLe;
    op.terms = terms;
    op.rhs = rhs;
    op.binaries = bins;
    op.compact = true;
    m.witness.push_back(std::move(op));
  };

  if (terms.size() == 1) {
    std::vector<Entry> row = diff_row(terms[0], rhs);
    m.add_constraint(name + "_0", std::move(row), Sense::LE,
                     rhs.constant - terms[0].constant);
    record({});
    return {};
  }

  std::vector<int> bins;
  std::vector<Entry> budget;
  for (std::size_t j = 1; j < terms.size(); ++j) {
    const int bj = m.add_variable(name + "_b" + std::to_string(j), 0.0, 1.0,
                                  VarType::Binary);
    bins.push_back(bj);
    budget.push_back({bj, 1.0});
    // t_j <= rhs + M_j (1 - b_j)
    const double Mj = m.expr_upper(terms[j]) - rlo;
    std::vector<Entry> row = diff_row(terms[j], rhs);
    row.push_back({bj, Mj});
    m.add_constraint(name + "_" + std::to_string(j), std::move(row), Sense::LE,
                     Mj + rhs.constant - terms[j].constant);
  }
  // t_0 <= rhs + M_0 * sum b_j  (t_0 is enforced when no binary is picked)
  const double M0 = m.expr_upper(terms[0]) - rlo;
  std::vector<Entry> row0 = diff_row(terms[0], rhs);
  for (int bj : bins) row0.push_back({bj, -M0});
  m.add_constraint(name + "_0", std::move(row0), Sense::LE,
                   rhs.constant - terms[0].constant);
  m.add_constraint(name + "_sel", std::move(budget), Sense::LE, 1.0);
  record(bins);
  return bins;
}

namespace {

LinExpr term_expr(const mmps::AffineTerm& t, const std::vector<int>& input_vars) {
  LinExpr e(t.offset);
  for (std::size_t d = 0; d < t.coeffs.size(); ++d)
    if (t.coeffs[d] != 0.0) e.add(input_vars[d], t.coeffs[d]);
  return e;
}

// y = expr via a fresh variable and one equality row; zero binaries.
int bind_affine(MilpModel& m, const std::string& name, const LinExpr& e) {
  const int y = m.add_variable(name + "_y", m.expr_lower(e), m.expr_upper(e));
  std::vector<Entry> row = e.terms;
  row.push_back({y, -1.0});
  m.add_constraint(name + "_eq", std::move(row), Sense::EQ, -e.constant);
  WitnessOp op;
  op.kind = WitnessOp::Kind::Define;
  op.y = y;
  op.terms = {e};
  m.witness.push_back(std::move(op));
  return y;
}

}  // namespace

namespace {

Binding encode_mmps_impl(MilpModel& m, const std::string& name,
                         const mmps::MmpsFunction& f,
                         const std::vector<int>& input_vars, bool compact) {
  f.validate();
  if (input_vars.size() != f.dim)
    throw ModelError("encode_mmps(" + name + "): input variable count mismatch");
  const bool conj = f.form == mmps::Form::Conjunctive;

  Binding out;
  std::vector<LinExpr> group_exprs;
  for (std::size_t g = 0; g < f.groups.size(); ++g) {
    const auto& grp = f.groups[g];
    if (grp.size() == 1) {
      group_exprs.push_back(term_expr(grp[0], input_vars));
      continue;
    }
    std::vector<LinExpr> terms;
    terms.reserve(grp.size());
    for (const auto& t : grp) terms.push_back(term_expr(t, input_vars));
    const std::string gname = name + "_g" + std::to_string(g);
    const Binding inner =
        conj ? (compact ? add_max_equality_compact(m, gname, terms)
                        : add_max_equality(m, gname, terms))
             : (compact ? add_min_equality_compact(m, gname, terms)
                        : add_min_equality(m, gname, terms));
    out.binaries.insert(out.binaries.end(), inner.binaries.begin(),
                        inner.binaries.end());
    group_exprs.push_back(LinExpr::var(inner.y));
  }

  if (group_exprs.size() == 1) {
    const LinExpr& e = group_exprs[0];
    if (e.terms.size() == 1 && e.terms[0].coef == 1.0 && e.constant == 0.0)
      out.y = e.terms[0].var;  // single fitted group: reuse its output var
    else
      out.y = bind_affine(m, name, e);  // affine function, zero binaries
    return out;
  }

  const Binding outer =
      conj ? (compact ? add_min_equality_compact(m, name, group_exprs)
                      : add_min_equality(m, name, group_exprs))
           : (compact ? add_max_equality_compact(m, name, group_exprs)
                      : add_max_equality(m, name, group_exprs));
  out.y = outer.y;
  out.binaries.insert(out.binaries.end(), outer.binaries.begin(),
                      outer.binaries.end());
  return out;
}

}  // namespace

Binding encode_mmps(MilpModel& m, const std::string& name,
                    const mmps::MmpsFunction& f, const std::vector<int>& input_vars) {
  return encode_mmps_impl(m, name, f, input_vars, false);
}

Binding encode_mmps_compact(MilpModel& m, const std::string& name,
                            const mmps::MmpsFunction& f,
                            const std::vector<int>& input_vars) {
  return encode_mmps_impl(m, name, f, input_vars, true);
}

int encode_abs_term(MilpModel& m, const std::string& name, const LinExpr& expr) {
  check_finite_range(m, expr, "encode_abs_term(" + name + ")");
  const double lo = m.expr_lower(expr);
  const double hi = m.expr_upper(expr);
  const double tmax = std::max(std::abs(lo), std::abs(hi));
  const int t = m.add_variable(name + "_t", 0.0, tmax);
  // t >= expr
  std::vector<Entry> r1 = expr.terms;
  r1.push_back({t, -1.0});
  m.add_constraint(name + "_p", std::move(r1), Sense::LE, -expr.constant);
  // t >= -expr
  std::vector<Entry> r2;
  for (const auto& e : expr.terms) r2.push_back({e.var, -e.coef});
  r2.push_back({t, -1.0});
  m.add_constraint(name + "_n", std::move(r2), Sense::LE, expr.constant);
  WitnessOp op;
  op.kind = WitnessOp::Kind::Abs;
  op.y = t;
  op.terms = {expr};
  m.witness.push_back(std::move(op));
  return t;
}

}  // namespace psmpc::milp
