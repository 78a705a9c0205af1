// SPDX-License-Identifier: Apache-2.0
//
// Mixed-integer linear program container. All variable bounds are finite by
// construction (the big-M derivation in encode.hpp depends on it); binaries
// live in [0,1]. Minimization only.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace psmpc::milp {

enum class VarType { Continuous, Binary };
enum class Sense { LE, EQ, GE };

struct Variable {
  std::string name;
  double lower = 0.0;
  double upper = 0.0;
  VarType type = VarType::Continuous;
};

struct Entry {
  int var = -1;
  double coef = 0.0;
};

struct Constraint {
  std::string name;
  std::vector<Entry> row;  // sparse, variable indices unique
  Sense sense = Sense::LE;
  double rhs = 0.0;
};

// Affine expression over model variables; the lingua franca of the encoders.
struct LinExpr {
  std::vector<Entry> terms;
  double constant = 0.0;

  LinExpr() = default;
  explicit LinExpr(double c) : constant(c) {}
  static LinExpr var(int v, double coef = 1.0) {
    LinExpr e;
    e.terms.push_back({v, coef});
    return e;
  }
  LinExpr& add(int v, double coef) {
    terms.push_back({v, coef});
    return *this;
  }
};

// Replay script for recovering an integer-feasible assignment from decision
// variable values alone. The encoders append one op per operator they
// introduce; replaying the ops in record order computes every derived
// variable and selector binary, turning any guess for the true decision
// variables into a candidate incumbent.
struct WitnessOp {
  enum class Kind { Define, Max, Min, MinLe, Abs, MaxMin };
  Kind kind = Kind::Define;
  int y = -1;                    // defined variable (-1 for MinLe)
  std::vector<LinExpr> terms;    // operands; Define/Abs use terms[0]
  LinExpr rhs;                   // MinLe bound
  std::vector<int> binaries;     // selector binaries, in term order
  bool compact = false;          // k-1 binaries, all-zero pattern = term 0
  std::vector<int> group_sizes;  // MaxMin: terms partitioned into groups
};

struct MilpModel {
  std::vector<Variable> variables;
  std::vector<Constraint> constraints;
  std::vector<double> objective;  // aligned with variables
  double objective_offset = 0.0;
  std::vector<WitnessOp> witness;

  int add_variable(const std::string& name, double lower, double upper,
                   VarType type = VarType::Continuous);
  int add_constraint(const std::string& name, std::vector<Entry> row, Sense sense,
                     double rhs);
  int add_constraint(const std::string& name, const LinExpr& lhs, Sense sense,
                     double rhs);  // moves lhs.constant to the rhs
  void add_objective(int var, double coef);  // accumulates

  std::size_t num_variables() const { return variables.size(); }
  std::size_t num_binaries() const;

  // Interval of an expression from the variable bounds (the big-M source).
  double expr_lower(const LinExpr& e) const;
  double expr_upper(const LinExpr& e) const;

  // Overwrites every witness-defined variable in x (sized num_variables)
  // from the remaining entries, in record order. Returns false when a value
  // escapes its variable bounds or a MinLe condition cannot be met — the
  // decision values do not extend to a feasible point.
  bool replay_witness(std::vector<double>& x) const;

  // Largest relative violation over all rows and variable bounds at x.
  double max_violation(const std::vector<double>& x) const;

  // Throws ModelError on non-finite bounds, bad indices, or binaries whose
  // bounds leave [0,1].
  void validate() const;

  // Industry LP-format text (Minimize/Subject To/Bounds/Binaries/End),
  // coefficients printed with 17 significant digits.
  std::string to_lp_format() const;
  void write_lp(const std::string& path) const;
};

}  // namespace psmpc::milp
