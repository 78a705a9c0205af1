// SPDX-License-Identifier: Apache-2.0
//
// Error types shared across the library. Everything derives from
// std::runtime_error (or std::invalid_argument for caller bugs) so the CLI
// can map failures onto its exit-code contract.

#pragma once

#include <memory>
#include <stdexcept>
#include <string>

namespace psmpc {

// Target values were non-finite on the fitting grid, or the fit request was
// otherwise unusable.
class FitDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A density integrated to <= 0 and cannot be normalized.
class DegenerateDensityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A belief with zero sigma was handed to the pdf machinery.
class DegenerateBeliefError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// State left the domain some quantity is valid on (Table I box, fit domain).
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or unbounded MILP model.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace milp {
struct MilpModel;  // forward declaration for PlannerInfeasible
}

// The planner's MILP came back infeasible. Carries the model for post-mortem
// (dump to .lp); backup modes are out of scope.
class PlannerInfeasible : public std::runtime_error {
 public:
  PlannerInfeasible(const std::string& what, std::shared_ptr<const milp::MilpModel> model)
      : std::runtime_error(what), model_(std::move(model)) {}

  const std::shared_ptr<const milp::MilpModel>& model() const noexcept { return model_; }

 private:
  std::shared_ptr<const milp::MilpModel> model_;
};

}  // namespace psmpc
