#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "dispersion.hpp"
#include "errors.hpp"

namespace bcshf::tc {

/** @brief F1 and F2 at (nu, T). */
struct FPair {
  double F1 = 0.0;
  double F2 = 0.0;
};

/** @brief Occupied density int (1 + e^((p^2 - nu)/T))^-1 d^3p. */
inline double fermi_density(double nu, double T) {
  if (T <= 0.0) {
    if (nu <= 0.0) return 0.0;
    return radial::four_pi / 3.0 * nu * std::sqrt(nu);
  }
  return dispersion::density(T, nu, 0.0);
}

/** @brief F1 = m-integral at Delta = 0; F2 = nu + 2 calV (2pi)^-3/2 * density. */
inline FPair eval_F(double nu, double T, double calV) {
  if (!(T > 0.0)) throw ParameterError("eval_F: T must be positive");
  FPair f;
  f.F1 = dispersion::m_integral(T, nu, 0.0);
  f.F2 = calV == 0.0 ? nu : nu + 2.0 * calV * radial::inv_two_pi_32 * fermi_density(nu, T);
  return f;
}

inline double F2_only(double nu, double T, double calV) {
  if (calV == 0.0) return nu;
  return nu + 2.0 * calV * radial::inv_two_pi_32 * fermi_density(nu, T);
}

/** @brief Unique root of F2(nu, T) = mu; T = 0 uses the step occupation. */
inline double solve_nu_of_T(double T, double mu, double calV, double tol = 1e-14) {
  if (T < 0.0) throw ParameterError("solve_nu_of_T: T must be >= 0");
  if (calV < 0.0) throw ParameterError("solve_nu_of_T: calV must be >= 0");
  if (calV == 0.0) return mu;
  double hi = mu;
  double step = std::max(1.0, std::abs(mu));
  double lo = mu - step;
  int guard = 0;
  while (F2_only(lo, T, calV) > mu) {
    hi = lo;
    step *= 2.0;
    lo = mu - step;
    if (++guard > 200) throw NumericalError("solve_nu_of_T: bracket failure");
  }
  for (int it = 0; it < 200 && hi - lo > tol * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (F2_only(mid, T, calV) > mu) hi = mid; else lo = mid;
  }
  return 0.5 * (lo + hi);
}

/** @brief Euler-Mascheroni form of the weak-coupling critical temperature. */
inline double tc_asymptotic(double mu_tilde, double a) {
  if (!(mu_tilde > 0.0) || !(a < 0.0)) throw ParameterError("tc_asymptotic: need mu_tilde > 0, a < 0");
  return mu_tilde * (8.0 / std::numbers::pi) * std::exp(std::numbers::egamma - 2.0) *
         std::exp(std::numbers::pi / (2.0 * std::sqrt(mu_tilde) * a));
}

struct BracketStep {
  double T_lo;
  double T_hi;
};

/** @brief Outcome of the critical-temperature solve. */
struct TcSolution {
  double t_c = 0.0;
  double mu_tilde_at_tc = 0.0;
  double residual_gap = 0.0;
  double residual_mu = 0.0;
  /// t_c fell below the bracket floor and is reported as zero.
  bool below_floor = false;
  std::vector<BracketStep> trace;
};

/** @brief Critical temperature from F1(nu_T, T) = -1/(4 pi a), F2(nu_T, T) = mu. */
inline TcSolution solve_tc(double mu, double a, double calV, double tol = 1e-13,
                           double T_floor_rel = 1e-250) {
  if (!(a < 0.0)) throw ParameterError("solve_tc: a must be negative");
  if (calV < 0.0) throw ParameterError("solve_tc: calV must be >= 0");
  TcSolution out;
  if (mu <= 0.0) {
    out.mu_tilde_at_tc = solve_nu_of_T(0.0, mu, calV);
    return out;
  }
  const double target = -1.0 / (4.0 * std::numbers::pi * a);
  auto h = [&](double T) {
    const double nu = solve_nu_of_T(T, mu, calV);
    return dispersion::m_integral(T, nu, 0.0) - target;
  };
  const double scale = std::max(mu, 1.0);
  double T_hi = scale;
  int guard = 0;
  while (h(T_hi) > 0.0) {
    T_hi *= 4.0;
    if (++guard > 200) throw NumericalError("solve_tc: upper bracket failure");
  }
  double T_lo = 0.1 * T_hi;
  const double floor = T_floor_rel * scale;
  while (h(T_lo) < 0.0) {
    T_hi = T_lo;
    out.trace.push_back({T_lo, T_hi});
    if (T_lo <= floor) {
      out.below_floor = true;
      out.mu_tilde_at_tc = solve_nu_of_T(0.0, mu, calV);
      return out;
    }
    T_lo = std::max(T_lo * 1e-3, floor);
  }
  out.trace.push_back({T_lo, T_hi});
  double llo = std::log(T_lo), lhi = std::log(T_hi);
  for (int it = 0; it < 400 && lhi - llo > tol; ++it) {
    const double mid = 0.5 * (llo + lhi);
    if (h(std::exp(mid)) > 0.0) llo = mid; else lhi = mid;
  }
  out.t_c = std::exp(0.5 * (llo + lhi));
  out.mu_tilde_at_tc = solve_nu_of_T(out.t_c, mu, calV);
  const FPair f = eval_F(out.mu_tilde_at_tc, out.t_c, calV);
  out.residual_gap = f.F1 - target;
  out.residual_mu = f.F2 - mu;
  return out;
}

/** @brief Finite-difference partials of (F1, F2) and their sign verdicts. */
struct JacobianReport {
  double dF1_dnu = 0.0, dF1_dT = 0.0, dF2_dnu = 0.0, dF2_dT = 0.0;
  double det = 0.0;
  bool f1_nu_ok = false, f1_T_ok = false, f2_nu_ok = false, f2_T_ok = false, det_ok = false;
  /// dF2/dT vanishes identically because calV = 0.
  bool f2_T_nonstrict = false;

  bool pass() const { return f1_nu_ok && f1_T_ok && f2_nu_ok && f2_T_ok && det_ok; }
};

inline JacobianReport jacobian_sign_check(double nu, double T, double calV, double h = 1e-4) {
  if (!(T > 0.0)) throw ParameterError("jacobian_sign_check: T must be positive");
  const double hn = h * std::max(1.0, std::abs(nu));
  const double hT = h * T;
  const FPair np = eval_F(nu + hn, T, calV), nm = eval_F(nu - hn, T, calV);
  const FPair tp = eval_F(nu, T + hT, calV), tm = eval_F(nu, T - hT, calV);
  JacobianReport r;
  r.dF1_dnu = (np.F1 - nm.F1) / (2.0 * hn);
  r.dF2_dnu = (np.F2 - nm.F2) / (2.0 * hn);
  r.dF1_dT = (tp.F1 - tm.F1) / (2.0 * hT);
  r.dF2_dT = (tp.F2 - tm.F2) / (2.0 * hT);
  r.det = r.dF1_dnu * r.dF2_dT - r.dF1_dT * r.dF2_dnu;
  r.f1_nu_ok = r.dF1_dnu > 0.0;
  r.f1_T_ok = r.dF1_dT < 0.0;
  r.f2_nu_ok = r.dF2_dnu > 0.0;
  if (calV == 0.0) {
    r.f2_T_nonstrict = true;
    r.f2_T_ok = r.dF2_dT == 0.0;
  } else {
    r.f2_T_ok = r.dF2_dT > 0.0;
  }
  r.det_ok = r.det > 0.0;
  return r;
}

}  // namespace bcshf::tc
