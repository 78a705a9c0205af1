// SPDX-License-Identifier: Apache-2.0

#include "psmpc/milp/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "psmpc/errors.hpp"

namespace psmpc::milp {

int MilpModel::add_variable(const std::string& name, double lower, double upper,
                            VarType type) {
  if (!std::isfinite(lower) || !std::isfinite(upper) || lower > upper)
    throw ModelError("add_variable(" + name + "): bounds must be finite and ordered");
  if (type == VarType::Binary && (lower < 0.0 || upper > 1.0))
    throw ModelError("add_variable(" + name + "): binary bounds must be within [0,1]");
  variables.push_back({name, lower, upper, type});
  objective.push_back(0.0);
  return static_cast<int>(variables.size()) - 1;
}

int MilpModel::add_constraint(const std::string& name, std::vector<Entry> row,
                              Sense sense, double rhs) {
  // merge duplicate variable entries so rows stay well-formed after
  // expression arithmetic in the encoders
  std::sort(row.begin(), row.end(),
            [](const Entry& a, const Entry& b) { return a.var < b.var; });
  std::vector<Entry> merged;
  merged.reserve(row.size());
  for (const auto& e : row) {
    if (!merged.empty() && merged.back().var == e.var)
      merged.back().coef += e.coef;
    else
      merged.push_back(e);
  }
  merged.erase(std::remove_if(merged.begin(), merged.end(),
                              [](const Entry& e) { return e.coef == 0.0; }),
               merged.end());
  constraints.push_back({name, std::move(merged), sense, rhs});
  return static_cast<int>(constraints.size()) - 1;
}

int MilpModel::add_constraint(const std::string& name, const LinExpr& lhs, Sense sense,
                              double rhs) {
  return add_constraint(name, lhs.terms, sense, rhs - lhs.constant);
}

void MilpModel::add_objective(int var, double coef) {
  objective.at(static_cast<std::size_t>(var)) += coef;
}

std::size_t MilpModel::num_binaries() const {
  std::size_t n = 0;
  for (const auto& v : variables)
    if (v.type == VarType::Binary) ++n;
  return n;
}

double MilpModel::expr_lower(const LinExpr& e) const {
  double acc = e.constant;
  for (const auto& t : e.terms) {
    const Variable& v = variables.at(static_cast<std::size_t>(t.var));
    acc += t.coef >= 0.0 ? t.coef * v.lower : t.coef * v.upper;
  }
  return acc;
}

double MilpModel::expr_upper(const LinExpr& e) const {
  double acc = e.constant;
  for (const auto& t : e.terms) {
    const Variable& v = variables.at(static_cast<std::size_t>(t.var));
    acc += t.coef >= 0.0 ? t.coef * v.upper : t.coef * v.lower;
  }
  return acc;
}

void MilpModel::validate() const {
  const int n = static_cast<int>(variables.size());
  for (const auto& v : variables) {
    if (!std::isfinite(v.lower) || !std::isfinite(v.upper) || v.lower > v.upper)
      throw ModelError("variable " + v.name + ": bad bounds");
    if (v.type == VarType::Binary && (v.lower < 0.0 || v.upper > 1.0))
      throw ModelError("variable " + v.name + ": binary outside [0,1]");
  }
  for (const auto& c : constraints) {
    for (const auto& e : c.row) {
      if (e.var < 0 || e.var >= n)
        throw ModelError("constraint " + c.name + ": bad variable index");
      if (!std::isfinite(e.coef))
        throw ModelError("constraint " + c.name + ": non-finite coefficient");
    }
    if (!std::isfinite(c.rhs))
      throw ModelError("constraint " + c.name + ": non-finite rhs");
  }
  if (objective.size() != variables.size())
    throw ModelError("objective length mismatch");
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void append_expr(std::ostringstream& os, const std::vector<Entry>& row,
                 const std::vector<Variable>& vars) {
  bool first = true;
  for (const auto& e : row) {
    const double c = e.coef;
    if (c == 0.0) continue;
    if (first) {
      os << (c < 0 ? "- " : "") << num(std::abs(c));
      first = false;
    } else {
      os << (c < 0 ? " - " : " + ") << num(std::abs(c));
    }
    os << ' ' << vars[static_cast<std::size_t>(e.var)].name;
  }
  if (first) os << "0 " << vars.front().name;
}

}  // namespace

std::string MilpModel::to_lp_format() const {
  validate();
  std::ostringstream os;
  os << "\\ exported by psmpc\nMinimize\n obj: ";
  std::vector<Entry> objrow;
  for (std::size_t j = 0; j < objective.size(); ++j)
    if (objective[j] != 0.0) objrow.push_back({static_cast<int>(j), objective[j]});
  append_expr(os, objrow, variables);
  os << "\nSubject To\n";
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    const Constraint& c = constraints[i];
    os << ' ' << (c.name.empty() ? "c" + std::to_string(i) : c.name) << ": ";
    append_expr(os, c.row, variables);
    os << (c.sense == Sense::LE ? " <= " : c.sense == Sense::GE ? " >= " : " = ")
       << num(c.rhs) << '\n';
  }
  os << "Bounds\n";
  for (const auto& v : variables)
    os << ' ' << num(v.lower) << " <= " << v.name << " <= " << num(v.upper) << '\n';
  bool any_bin = false;
  for (const auto& v : variables) {
    if (v.type != VarType::Binary) continue;
    if (!any_bin) {
      os << "Binaries\n";
      any_bin = true;
    }
    os << ' ' << v.name << '\n';
  }
  os << "End\n";
  return os.str();
}

namespace {

double eval_expr(const LinExpr& e, const std::vector<double>& x) {
  double v = e.constant;
  for (const auto& t : e.terms) v += t.coef * x[static_cast<std::size_t>(t.var)];
  return v;
}

}  // namespace

bool MilpModel::replay_witness(std::vector<double>& x) const {
  constexpr double kTol = 1e-7;
  if (x.size() != variables.size()) return false;

  // value a variable, rejecting anything outside its (tightened) bounds
  const auto set = [&](int v, double val) {
    const Variable& vb = variables[static_cast<std::size_t>(v)];
    if (val < vb.lower - kTol || val > vb.upper + kTol) {
      if (std::getenv("PSMPC_WITNESS_DEBUG"))
        std::fprintf(stderr, "[wdbg] set fail %s val=%.10g lb=%.10g ub=%.10g\n",
                     vb.name.c_str(), val, vb.lower, vb.upper);
      return false;
    }
    x[static_cast<std::size_t>(v)] = std::clamp(val, vb.lower, vb.upper);
    return true;
  };

  for (const auto& op : witness) {
    switch (op.kind) {
      case WitnessOp::Kind::Define:
        if (!set(op.y, eval_expr(op.terms[0], x))) return false;
        break;
      case WitnessOp::Kind::Abs:
        if (!set(op.y, std::abs(eval_expr(op.terms[0], x)))) return false;
        break;
      case WitnessOp::Kind::Max:
      case WitnessOp::Kind::Min: {
        const bool is_max = op.kind == WitnessOp::Kind::Max;
        std::size_t k = 0;
        double best = eval_expr(op.terms[0], x);
        for (std::size_t i = 1; i < op.terms.size(); ++i) {
          const double v = eval_expr(op.terms[i], x);
          if (is_max ? v > best : v < best) {
            best = v;
            k = i;
          }
        }
        if (!set(op.y, best)) return false;
        if (op.compact) {
          for (std::size_t j = 0; j < op.binaries.size(); ++j)
            x[static_cast<std::size_t>(op.binaries[j])] = (j + 1 == k) ? 1.0 : 0.0;
        } else {
          for (std::size_t j = 0; j < op.binaries.size(); ++j)
            x[static_cast<std::size_t>(op.binaries[j])] = (j == k) ? 1.0 : 0.0;
        }
        break;
      }
      case WitnessOp::Kind::MinLe: {
        std::size_t k = 0;
        double best = eval_expr(op.terms[0], x);
        for (std::size_t i = 1; i < op.terms.size(); ++i) {
          const double v = eval_expr(op.terms[i], x);
          if (v < best) {
            best = v;
            k = i;
          }
        }
        if (best > eval_expr(op.rhs, x) + kTol) {
          if (std::getenv("PSMPC_WITNESS_DEBUG"))
            std::fprintf(stderr, "[wdbg] minle fail best=%.10g rhs=%.10g\n", best,
                         eval_expr(op.rhs, x));
          return false;
        }
        for (std::size_t j = 0; j < op.binaries.size(); ++j)
          x[static_cast<std::size_t>(op.binaries[j])] = (j + 1 == k) ? 1.0 : 0.0;
        break;
      }
      case WitnessOp::Kind::MaxMin: {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t at = 0;
        for (int gs : op.group_sizes) {
          double gmin = std::numeric_limits<double>::infinity();
          for (int t = 0; t < gs; ++t)
            gmin = std::min(gmin, eval_expr(op.terms[at + static_cast<std::size_t>(t)], x));
          best = std::max(best, gmin);
          at += static_cast<std::size_t>(gs);
        }
        // one-sided epigraph: anything at or above the max-min is feasible,
        // so a value below the variable's floor just sits on the floor
        best = std::max(best, variables[static_cast<std::size_t>(op.y)].lower);
        if (!set(op.y, best)) return false;
        break;
      }
    }
  }
  return true;
}

double MilpModel::max_violation(const std::vector<double>& x) const {
  double worst = 0.0;
  for (std::size_t j = 0; j < variables.size(); ++j) {
    const Variable& v = variables[j];
    const double s = 1.0 + std::max(std::abs(v.lower), std::abs(v.upper));
    worst = std::max(worst, (v.lower - x[j]) / s);
    worst = std::max(worst, (x[j] - v.upper) / s);
  }
  for (const auto& c : constraints) {
    double act = 0.0, scale = 1.0 + std::abs(c.rhs);
    for (const auto& e : c.row) {
      const double t = e.coef * x[static_cast<std::size_t>(e.var)];
      act += t;
      scale += std::abs(t);
    }
    if (c.sense != Sense::GE) worst = std::max(worst, (act - c.rhs) / scale);
    if (c.sense != Sense::LE) worst = std::max(worst, (c.rhs - act) / scale);
  }
  return worst;
}

void MilpModel::write_lp(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << to_lp_format();
}

}  // namespace psmpc::milp
