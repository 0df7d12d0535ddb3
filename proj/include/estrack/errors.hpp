#pragma once

#include <stdexcept>
#include <string>

#include "estrack/linalg.hpp"

namespace estrack {

// A precondition on an argument or configuration value does not hold.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A state left the physical domain x1 > -1, x2 > -1.
class DomainError : public std::runtime_error {
 public:
  DomainError(const std::string& what, StateVec state)
      : std::runtime_error(what), state_(state) {}
  const StateVec& state() const noexcept { return state_; }

 private:
  StateVec state_;
};

// An iterative solver (Newton, shooting) gave up. Carries the last iterate
// and its residual norm.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, Vec2 last_iterate, double residual)
      : std::runtime_error(what), last_iterate_(last_iterate), residual_(residual) {}
  const Vec2& last_iterate() const noexcept { return last_iterate_; }
  double residual() const noexcept { return residual_; }

 private:
  Vec2 last_iterate_;
  double residual_;
};

// Adaptive step size fell below the configured minimum.
class StiffnessError : public std::runtime_error {
 public:
  StiffnessError(const std::string& what, double t, double h)
      : std::runtime_error(what), t_(t), h_(h) {}
  double time() const noexcept { return t_; }
  double step() const noexcept { return h_; }

 private:
  double t_;
  double h_;
};

}  // namespace estrack
