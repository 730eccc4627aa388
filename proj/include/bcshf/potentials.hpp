#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "errors.hpp"
#include "radial_math.hpp"

namespace bcshf::potentials {

/** @brief Core + well potential family. */
struct Example2Params {
  double omega = 1.0;
  double k_plus = 1.0;
  double ell = 0.1;
  double eps = 0.0;

  double k_plus_ell() const { return k_plus * std::pow(eps, -1.5); }
  double k_minus_ell() const { return (std::numbers::pi / 2.0 - ell * omega) / (ell - eps); }

  void validate() const {
    if (!(omega > 0.0) || !(k_plus > 0.0) || !(ell > 0.0))
      throw ParameterError("Example2Params: omega, k_plus and ell must be positive");
    if (!(eps > 0.0) || !(eps < ell))
      throw ParameterError("Example2Params: need 0 < eps < ell");
    if (!(eps < 2.0 * omega / std::numbers::pi * ell * ell))
      throw ParameterError("Example2Params: need eps < (2 omega / pi) ell^2");
    if (!(ell * omega < std::numbers::pi / 2.0))
      throw ParameterError("Example2Params: need ell * omega < pi / 2");
  }
};

/** @brief Parameters with eps = coeff * ell^2; coeff defaults to omega / pi. */
inline Example2Params make_example2(double omega, double k_plus, double ell, double eps_coeff = -1.0) {
  Example2Params p{omega, k_plus, ell, 0.0};
  const double c = eps_coeff > 0.0 ? eps_coeff : omega / std::numbers::pi;
  p.eps = c * ell * ell;
  p.validate();
  return p;
}

enum class PotentialKind { example2, scaled_family, tabulated, square_well };

inline std::string to_string(PotentialKind k) {
  switch (k) {
    case PotentialKind::example2: return "example2";
    case PotentialKind::scaled_family: return "scaled_family";
    case PotentialKind::tabulated: return "tabulated";
    case PotentialKind::square_well: return "square_well";
  }
  return "unknown";
}

/** @brief Radial potential with compact support. */
struct RadialPotential {
  std::function<double(double)> eval;
  double support_radius = 0.0;
  PotentialKind kind = PotentialKind::tabulated;
  /// Interior jump points, ascending, strictly inside (0, support_radius).
  std::vector<double> breakpoints;
  /// Closed-form Fourier transform, empty when unavailable.
  std::function<double(double)> fourier;

  double operator()(double r) const { return r > support_radius ? 0.0 : eval(r); }

  /** @brief Interval ends: breakpoints followed by support_radius. */
  std::vector<double> interval_ends() const {
    std::vector<double> b = breakpoints;
    b.push_back(support_radius);
    return b;
  }
};

/** @brief (sin x - x cos x) / x^3, equal to 1/3 at 0. */
inline double varsigma(double x) {
  const double ax = std::abs(x);
  if (ax < 1e-2) {
    const double x2 = x * x;
    return 1.0 / 3.0 - x2 / 30.0 + x2 * x2 / 840.0 - x2 * x2 * x2 / 45360.0;
  }
  return (std::sin(x) - x * std::cos(x)) / (x * x * x);
}

/** @brief V(r): (k+_l)^2 in the core, -(k-_l)^2 in the well, 0 outside. */
inline double example2_eval(const Example2Params& p, double r) {
  if (r < 0.0) throw ParameterError("example2_eval: r must be >= 0");
  if (r <= p.eps) {
    const double k = p.k_plus_ell();
    return k * k;
  }
  if (r <= p.ell) {
    const double k = p.k_minus_ell();
    return -k * k;
  }
  return 0.0;
}

/** @brief Closed-form Fourier transform of the core + well potential. */
inline double example2_fourier(const Example2Params& p, double k) {
  const double kp = p.k_plus_ell(), km = p.k_minus_ell();
  const double e3 = p.eps * p.eps * p.eps, l3 = p.ell * p.ell * p.ell;
  return std::sqrt(2.0 / std::numbers::pi) *
         (e3 * (kp * kp + km * km) * varsigma(k * p.eps) - km * km * l3 * varsigma(k * p.ell));
}

inline RadialPotential example2_potential(const Example2Params& p) {
  p.validate();
  RadialPotential V;
  V.eval = [p](double r) { return example2_eval(p, r); };
  V.support_radius = p.ell;
  V.kind = PotentialKind::example2;
  V.breakpoints = {p.eps};
  V.fourier = [p](double k) { return example2_fourier(p, k); };
  return V;
}

/** @brief Constant V0 inside radius R. */
inline RadialPotential square_well(double V0, double R) {
  if (!(R > 0.0)) throw ParameterError("square_well: R must be positive");
  RadialPotential V;
  V.eval = [V0, R](double r) { return r <= R ? V0 : 0.0; };
  V.support_radius = R;
  V.kind = PotentialKind::square_well;
  V.fourier = [V0, R](double k) {
    return std::sqrt(2.0 / std::numbers::pi) * V0 * R * R * R * varsigma(k * R);
  };
  return V;
}

/** @brief Identically zero potential on [0, R]. */
inline RadialPotential zero_potential(double R = 1.0) {
  RadialPotential V = square_well(0.0, R);
  V.kind = PotentialKind::tabulated;
  return V;
}

/** @brief Piecewise-linear interpolation of (r_i, V_i), zero beyond the last radius. */
inline RadialPotential tabulated_potential(std::vector<double> r, std::vector<double> v) {
  if (r.size() < 2 || r.size() != v.size()) throw ParameterError("tabulated_potential: need >= 2 samples");
  if (!std::is_sorted(r.begin(), r.end()) || r.front() < 0.0)
    throw ParameterError("tabulated_potential: radii must be sorted and >= 0");
  RadialPotential V;
  V.support_radius = r.back();
  V.kind = PotentialKind::tabulated;
  V.eval = [r = std::move(r), v = std::move(v)](double x) {
    if (x > r.back()) return 0.0;
    if (x <= r.front()) return v.front();
    const auto it = std::upper_bound(r.begin(), r.end(), x);
    const std::size_t j = static_cast<std::size_t>(it - r.begin());
    const double t = (x - r[j - 1]) / (r[j] - r[j - 1]);
    return (1.0 - t) * v[j - 1] + t * v[j];
  };
  return V;
}

/** @brief V_l(r) = lambda(l) l^-2 base(r / l), supported in radius l. */
inline RadialPotential scaled_family(const RadialPotential& base,
                                     const std::function<double(double)>& lambda_of_ell, double ell) {
  if (!(ell > 0.0)) throw ParameterError("scaled_family: ell must be positive");
  if (base.support_radius > 1.0 + 1e-12)
    throw ParameterError("scaled_family: base must be supported in the unit ball");
  const double lam = lambda_of_ell(ell);
  if (!(lam > 0.0 && lam <= 1.0))
    throw ParameterError("scaled_family: lambda must lie in (0, 1]");
  RadialPotential V;
  const double pref = lam / (ell * ell);
  V.eval = [base, pref, ell](double r) { return pref * base(r / ell); };
  V.support_radius = ell * base.support_radius;
  V.kind = PotentialKind::scaled_family;
  for (double b : base.breakpoints) V.breakpoints.push_back(ell * b);
  if (base.fourier) {
    V.fourier = [f = base.fourier, lam, ell](double k) { return lam * ell * f(ell * k); };
  }
  return V;
}

/** @brief Position grid with panel edges at the jumps of V. */
inline radial::RadialGrid potential_grid(const RadialPotential& V, std::size_t n) {
  const auto ends = V.interval_ends();
  std::vector<std::size_t> counts(ends.size());
  if (ends.size() == 2) {
    counts[0] = std::max<std::size_t>(n / 4, 8);
    counts[1] = std::max<std::size_t>(n - counts[0], 8);
  } else {
    for (auto& c : counts) c = std::max<std::size_t>(n / ends.size(), 8);
  }
  return radial::build_panel_grid(ends, counts);
}

/** @brief int |V| d^3x by piecewise Gauss quadrature. */
inline double l1_norm(const RadialPotential& V, std::size_t n = 400) {
  const auto g = potential_grid(V, n);
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    s += g.weights[i] * g.points[i] * g.points[i] * std::abs(V(g.points[i]));
  return radial::four_pi * s;
}

/** @brief Vhat(k) from the closed form if present, else by radial transform. */
inline double fourier_value(const RadialPotential& V, double k, std::size_t n = 400) {
  if (V.fourier) return V.fourier(k);
  const auto g = potential_grid(V, n);
  const double kk[1] = {k};
  return radial::radial_fourier_3d([&](double r) { return V(r); }, g, kk)[0];
}

/**
 * @brief Scattering length from the core + well closed form.
 *
 * Throws ResonanceError when the denominator vanishes.
 */
inline double example2_scattering_closed(const Example2Params& p) {
  p.validate();
  const double kp = p.k_plus_ell(), km = p.k_minus_ell();
  const double x = km * (p.ell - p.eps);
  const double c = std::cos(x);
  if (std::abs(c) < 1e-14) throw ResonanceError("example2_scattering_closed: tan argument at pi/2", 0.0);
  const double tn = std::tan(x);
  const double th = std::tanh(kp * p.eps);
  const double num = kp * tn + km * th;
  const double den = kp - km * tn * th;
  if (std::abs(den) <= 1e-13 * (std::abs(kp) + std::abs(km * tn * th)))
    throw ResonanceError("example2_scattering_closed: vanishing denominator", std::abs(num));
  return p.ell - num / (km * den);
}

/**
 * @brief Scattering length by shooting -u'' + V u = 0 with RK4.
 *
 * Steps are spread over the intervals between jumps in proportion to their
 * length times the local wave number.
 */
inline double scattering_shoot(const RadialPotential& V, double r_max, std::size_t n_steps = 200000) {
  if (!(r_max > V.support_radius)) throw ParameterError("scattering_shoot: r_max must exceed the support");
  const double r0 = 1e-8;
  std::vector<double> ends{r0};
  for (double b : V.interval_ends())
    if (b > r0) ends.push_back(b);
  std::vector<double> weight(ends.size() - 1);
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < ends.size(); ++k) {
    const double a = ends[k], b = ends[k + 1], len = b - a;
    double vmax = 0.0;
    for (int j = 1; j <= 16; ++j) {
      const double r = a + len * (j - 0.5) / 16.0;
      vmax = std::max(vmax, std::abs(V(r)));
    }
    weight[k] = len * (std::sqrt(vmax) + 1.0 / V.support_radius);
    total += weight[k];
  }
  double u = r0, du = 1.0;
  auto rhs = [&V](double r, double uu) { return V(r) * uu; };
  for (std::size_t k = 0; k + 1 < ends.size(); ++k) {
    const double a = ends[k], b = ends[k + 1];
    const std::size_t n = std::max<std::size_t>(
        64, static_cast<std::size_t>(std::ceil(n_steps * weight[k] / total)));
    const double h = (b - a) / static_cast<double>(n);
    // Sample V strictly inside the interval so jumps never leak across.
    const double inner = 1e-12 * h;
    for (std::size_t s = 0; s < n; ++s) {
      const double r = a + h * static_cast<double>(s);
      const double ra = std::max(r, a + inner);
      const double rm = r + 0.5 * h;
      const double rb = std::min(r + h, b - inner);
      const double k1u = du, k1v = rhs(ra, u);
      const double k2u = du + 0.5 * h * k1v, k2v = rhs(rm, u + 0.5 * h * k1u);
      const double k3u = du + 0.5 * h * k2v, k3v = rhs(rm, u + 0.5 * h * k2u);
      const double k4u = du + h * k3v, k4v = rhs(rb, u + h * k3u);
      u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
      du += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
  }
  // Free region: u is exactly linear.
  u += du * (r_max - V.support_radius);
  const double c1 = du, c2 = u - du * r_max;
  if (std::abs(c1) * r_max <= 1e-12 * std::abs(u))
    throw ResonanceError("scattering_shoot: zero-energy resonance", std::abs(c2));
  return -c2 / c1;
}

/** @brief Pass/fail entries of the potential assumption audit. */
struct AuditA3A5A6 {
  double vhat0 = 0.0;
  double sup_vhat = 0.0;
  double sup_at = 0.0;
  double scattering_length = 0.0;
  bool a3_negative_a = false;
  bool a5_positive_vhat0 = false;
  bool a6_sup_bound = false;
  double a6_margin = 0.0;
  std::string note;

  bool pass() const { return a3_negative_a && a5_positive_vhat0 && a6_sup_bound; }
};

/** @brief Checks a < 0, Vhat(0) > 0 and sup |Vhat| <= 2 Vhat(0) on a momentum scan. */
inline AuditA3A5A6 audit_assumptions_a3_a5_a6(const RadialPotential& V, double k_max = 0.0,
                                              std::size_t n_scan = 20000) {
  AuditA3A5A6 r;
  r.vhat0 = fourier_value(V, 0.0);
  r.a5_positive_vhat0 = r.vhat0 > 0.0;
  const double kmax = k_max > 0.0 ? k_max : 200.0 / V.support_radius;
  for (std::size_t i = 0; i <= n_scan; ++i) {
    const double k = kmax * static_cast<double>(i) / static_cast<double>(n_scan);
    const double v = std::abs(fourier_value(V, k));
    if (v > r.sup_vhat) {
      r.sup_vhat = v;
      r.sup_at = k;
    }
  }
  r.a6_margin = 2.0 * r.vhat0 - r.sup_vhat;
  r.a6_sup_bound = r.a6_margin >= 0.0;
  try {
    r.scattering_length = scattering_shoot(V, 2.0 * V.support_radius);
    r.a3_negative_a = r.scattering_length < 0.0;
  } catch (const ResonanceError& e) {
    r.note = e.what();
  }
  return r;
}

inline AuditA3A5A6 audit_assumptions_a3_a5_a6(const Example2Params& p, double k_max = 0.0,
                                              std::size_t n_scan = 20000) {
  const auto V = example2_potential(p);
  AuditA3A5A6 r = audit_assumptions_a3_a5_a6(V, k_max > 0.0 ? k_max : 50.0 / p.eps, n_scan);
  try {
    r.scattering_length = example2_scattering_closed(p);
    r.a3_negative_a = r.scattering_length < 0.0;
    r.note.clear();
  } catch (const ResonanceError& e) {
    r.a3_negative_a = false;
    r.note = e.what();
  }
  return r;
}

/** @brief Contact limit -2/(pi omega) of the family's scattering length. */
inline double example2_limit_a(double omega) { return -2.0 / (std::numbers::pi * omega); }

/**
 * @brief omega such that the family at (k_plus, ell) has scattering length a.
 *
 * eps follows eps = coeff * ell^2 with coeff = omega / pi unless given.
 */
inline Example2Params tune_example2(double a_target, double k_plus, double ell, double eps_coeff = -1.0) {
  if (!(a_target < 0.0)) throw ParameterError("tune_example2: target must be negative");
  auto a_of = [&](double om) { return example2_scattering_closed(make_example2(om, k_plus, ell, eps_coeff)); };
  double om = -2.0 / (std::numbers::pi * a_target);
  double lo = 0.5 * om, hi = std::min(2.0 * om, 0.999 * std::numbers::pi / (2.0 * ell));
  // a increases toward 0 with omega; bisection on the bracket.
  double flo = a_of(lo) - a_target, fhi = a_of(hi) - a_target;
  int guard = 0;
  while (flo > 0.0 && ++guard < 60) { lo *= 0.5; flo = a_of(lo) - a_target; }
  while (fhi < 0.0 && ++guard < 120) { hi = 0.5 * (hi + std::numbers::pi / (2.0 * ell)); fhi = a_of(hi) - a_target; }
  if (flo > 0.0 || fhi < 0.0) throw NumericalError("tune_example2: cannot bracket target");
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (a_of(mid) - a_target < 0.0) lo = mid; else hi = mid;
  }
  return make_example2(0.5 * (lo + hi), k_plus, ell, eps_coeff);
}

}  // namespace bcshf::potentials
