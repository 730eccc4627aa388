#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "radial_math.hpp"

namespace bcshf::dispersion {

using radial::RadialGrid;

/** @brief Physical knobs of the effective theory. */
struct ThermoParams {
  double T = 0.0;
  double mu = 1.0;
  double calV = 0.0;
  std::optional<double> a;

  void validate() const {
    if (!(T >= 0.0) || !std::isfinite(T)) throw ParameterError("ThermoParams: T must be >= 0");
    if (!(calV >= 0.0)) throw ParameterError("ThermoParams: calV must be >= 0");
    if (a && !(*a < 0.0)) throw ParameterError("ThermoParams: a must be negative");
  }
};

/** @brief Candidate state on a momentum grid. */
struct DispersionField {
  RadialGrid grid;
  std::vector<double> gamma_hat;
  /// Scalar gap (contact mode) or per-point gap (finite-range mode).
  std::variant<double, std::vector<double>> delta = 0.0;
  double mu_tilde = 0.0;

  double delta_at(std::size_t i) const {
    if (const double* d = std::get_if<double>(&delta)) return *d;
    return std::get<std::vector<double>>(delta)[i];
  }
};

inline constexpr double exp_clamp = 700.0;

/** @brief x / tanh(x) for x > 0, 1 otherwise. */
inline double kappa_c(double x) {
  if (x <= 0.0) return 1.0;
  if (x < 1e-4) return 1.0 + x * x / 3.0 - x * x * x * x / 45.0;
  if (x > 20.0) return x;
  return x / std::tanh(x);
}

/** @brief x / (e^x - 1), equal to 1 at 0. */
inline double xi(double x) {
  if (x < 0.0) throw ParameterError("xi: argument must be >= 0");
  if (x < 1e-8) return 1.0 - 0.5 * x;
  if (x > exp_clamp) return 0.0;
  return x / std::expm1(x);
}

/** @brief Fermi function 1/(1 + e^x). */
inline double fermi(double x) {
  if (x > exp_clamp) return 0.0;
  if (x < -exp_clamp) return 1.0;
  if (x > 0.0) {
    const double e = std::exp(-x);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(x));
}

/** @brief Occupation 1/(1 + e^(e/T)), step function at T = 0. */
inline double fermi_dirac(double e, double T) {
  if (T <= 0.0) return e < 0.0 ? 1.0 : (e > 0.0 ? 0.0 : 0.5);
  return fermi(e / T);
}

/** @brief 1 - tanh(z) for z >= 0 without cancellation. */
inline double one_minus_tanh(double z) {
  if (z > 0.5 * exp_clamp) return 0.0;
  return 2.0 / (std::exp(2.0 * z) + 1.0);
}

/** @brief Quasiparticle energy sqrt(shift^2 + delta^2). */
inline double energy_E(double /*p*/, double dispersion_shift, double delta_at_p) {
  return std::hypot(dispersion_shift, delta_at_p);
}

/** @brief K = E / tanh(E / 2T); K = E at T = 0. */
inline double K_value(double T, double E) {
  if (T <= 0.0) return E;
  return 2.0 * T * kappa_c(E / (2.0 * T));
}

/** @brief 1/K, finite at E = 0 for T > 0. */
inline double inverse_K(double T, double E) {
  if (T <= 0.0) return 1.0 / E;
  const double z = E / (2.0 * T);
  if (z < 1e-4) return (1.0 - z * z / 3.0 + 2.0 * z * z * z * z / 15.0) / (2.0 * T);
  return std::tanh(std::min(z, exp_clamp)) / E;
}

/**
 * @brief Occupation 1/2 - t/(2K) with t = eps - mu_tilde.
 *
 * Written as Delta^2/(E(E+t)) + (t/E)(1 - tanh) for t > 0 so the
 * large-momentum tail keeps full relative precision.
 */
inline double gamma_from_shift(double T, double t, double delta) {
  const double E = std::hypot(t, delta);
  if (E == 0.0) return 0.5;
  const double th = T > 0.0 ? std::tanh(std::min(E / (2.0 * T), exp_clamp)) : 1.0;
  if (t > 0.0) {
    const double omt = T > 0.0 ? one_minus_tanh(E / (2.0 * T)) : 0.0;
    return 0.5 * (delta * delta / (E * (E + t)) + (t / E) * omt);
  }
  return 0.5 * (1.0 - t * th / E);
}

/** @brief Pair amplitude -Delta/(2K). */
inline double alpha_from_shift(double T, double t, double delta) {
  if (delta == 0.0) return 0.0;
  return -0.5 * delta * inverse_K(T, std::hypot(t, delta));
}

/**
 * @brief Scale and width of the Fermi-surface feature for (nu, T, Delta).
 *
 * Returns a grid that resolves |p^2 - nu| ~ max(T, Delta) and extends to a
 * cutoff where the p^-4 tail estimate is accurate.
 */
inline RadialGrid fermi_surface_grid(double nu, double T, double Delta, double ratio = 1.5) {
  const double scale = std::sqrt(std::max({std::abs(nu), T, Delta, 1e-300}));
  const double cutoff = 1e3 * std::max(1.0, scale);
  const double feature = std::max(T, Delta);
  if (nu > 0.0) {
    const double c = std::sqrt(nu);
    const double w = feature > 0.0 ? 0.25 * feature / (2.0 * c) : 0.05 * c;
    if (w < 0.25 * c) return radial::build_graded_grid(cutoff, c, w, ratio);
  }
  return radial::build_graded_grid(cutoff, std::nullopt, 0.25 * scale, ratio);
}

/** @brief Angular average of Vhat(|p - q|) over directions, by quadrature. */
inline double angular_average(const std::function<double(double)>& Vhat, double p, double q,
                              double oscillation_length = 0.0) {
  const double lo = std::abs(p - q), hi = p + q;
  if (hi == 0.0) return Vhat(0.0);
  const double len = hi - lo;
  if (len == 0.0) return Vhat(lo);
  static const radial::GaussRule rule = radial::gauss_legendre(16);
  const std::size_t panels =
      1 + static_cast<std::size_t>(std::ceil(len * oscillation_length / radial::pi));
  const double h = len / static_cast<double>(panels);
  double s = 0.0;
  for (std::size_t k = 0; k < panels; ++k) {
    const double a = lo + h * static_cast<double>(k);
    const double mid = a + 0.5 * h;
    for (std::size_t j = 0; j < rule.x.size(); ++j) {
      const double x = mid + 0.5 * h * rule.x[j];
      s += 0.5 * h * rule.w[j] * Vhat(x) * x;
    }
  }
  return s / (2.0 * p * q);
}

/** @brief Hartree-Fock dispersion and renormalized chemical potential. */
struct EpsilonMu {
  std::vector<double> epsilon;
  double mu_tilde = 0.0;
};

/**
 * @brief eps(p) = p^2 - 2(2pi)^-3/2 int (Vhat(p-q) - Vhat(0)) gamma(q) d^3q
 * and mu_tilde = mu - 2(2pi)^-3/2 Vhat(0) int gamma.
 *
 * `oscillation_length` is the potential range; it sets the panel count of
 * the angular average.
 */
inline EpsilonMu epsilon_and_mutilde(std::span<const double> gamma_hat,
                                     const std::function<double(double)>& Vhat, double mu,
                                     const RadialGrid& grid, double oscillation_length = 0.0) {
  if (gamma_hat.size() != grid.size()) throw ParameterError("epsilon_and_mutilde: grid mismatch");
  const std::size_t n = grid.size();
  const double v0 = Vhat(0.0);
  const double N = radial::integrate_samples(gamma_hat, grid).value;
  EpsilonMu out;
  out.mu_tilde = mu - 2.0 * radial::inv_two_pi_32 * v0 * N;
  out.epsilon.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = grid.points[i];
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (gamma_hat[j] == 0.0) continue;
      const double q = grid.points[j];
      s += grid.weights[j] * q * q * (angular_average(Vhat, p, q, oscillation_length) - v0) *
           gamma_hat[j];
    }
    out.epsilon[i] = p * p - 2.0 * radial::inv_two_pi_32 * radial::four_pi * s;
  }
  return out;
}

/**
 * @brief m = (2pi)^-3 int (1/K - 1/p^2) d^3p on a given grid.
 *
 * Dispersion is p^2 - mu_tilde with constant gap Delta.
 */
inline double m_integral(double T, double mu_tilde, double Delta, const RadialGrid& grid) {
  if (T < 0.0 || Delta < 0.0) throw ParameterError("m_integral: T and Delta must be >= 0");
  if (T == 0.0 && Delta == 0.0 && mu_tilde >= 0.0)
    throw DivergenceError("m_integral: logarithmic divergence at the Fermi surface (T = 0, Delta = 0)");
  double s = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double p = grid.points[i];
    const double t = grid.shifted_square(i, mu_tilde);
    const double E = std::hypot(t, Delta);
    s += grid.weights[i] * (p * p * inverse_K(T, E) - 1.0);
  }
  double tail = 0.0;
  if (grid.tail_exponent > 0.0) {
    const double c = grid.cutoff;
    const double E = std::hypot(c * c - mu_tilde, Delta);
    if (c * c > 2.0 * std::abs(mu_tilde) && E > 40.0 * T) {
      // int_c^inf p^2 (1/(p^2 - mu) - 1/p^2) dp exactly, plus the -Delta^2/(2 p^6) term.
      const double r = std::sqrt(std::abs(mu_tilde));
      const double lead = mu_tilde >= 0.0 ? r * std::atanh(r / c) : -r * std::atan(r / c);
      tail = radial::four_pi * (lead - Delta * Delta / (6.0 * c * c * c));
    } else {
      const double f = inverse_K(T, E) - 1.0 / (c * c);
      tail = radial::power_tail(f, c, grid.tail_exponent);
    }
  }
  return radial::inv_two_pi_3 * (radial::four_pi * s + tail);
}

/** @brief m-integral on the adaptive Fermi-surface grid. */
inline double m_integral(double T, double mu_tilde, double Delta) {
  if (T == 0.0 && Delta == 0.0 && mu_tilde >= 0.0)
    throw DivergenceError("m_integral: logarithmic divergence at the Fermi surface (T = 0, Delta = 0)");
  return m_integral(T, mu_tilde, Delta, fermi_surface_grid(mu_tilde, T, Delta));
}

/** @brief int gamma_hat d^3p for the contact-mode closure. */
inline double density(double T, double mu_tilde, double Delta, const RadialGrid& grid) {
  double s = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double p = grid.points[i];
    s += grid.weights[i] * p * p * gamma_from_shift(T, grid.shifted_square(i, mu_tilde), Delta);
  }
  double tail = 0.0;
  if (grid.tail_exponent > 0.0 && Delta > 0.0) {
    const double c = grid.cutoff;
    tail = radial::power_tail(gamma_from_shift(T, c * c - mu_tilde, Delta), c, 4.0);
  }
  return radial::four_pi * s + tail;
}

inline double density(double T, double mu_tilde, double Delta) {
  return density(T, mu_tilde, Delta, fermi_surface_grid(mu_tilde, T, Delta));
}

}  // namespace bcshf::dispersion
