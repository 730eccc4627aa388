#pragma once

#include <stdexcept>
#include <string>

namespace bcshf {

/** @brief Invalid input parameters. */
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/** @brief Non-finite value produced by an integrand or potential. */
struct EvaluationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/** @brief Iterative solver did not reach its tolerance. */
struct ConvergenceError : std::runtime_error {
  double last_residual = 0.0;
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what), last_residual(residual) {}
};

/** @brief Zero-energy resonance: scattering length undefined. */
struct ResonanceError : std::runtime_error {
  double magnitude = 0.0;
  ResonanceError(const std::string& what, double mag)
      : std::runtime_error(what), magnitude(mag) {}
};

/** @brief Integral diverges (Fermi-surface logarithm at T = 0, Delta = 0). */
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/** @brief Linear-algebra failure or broken internal invariant. */
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace bcshf
