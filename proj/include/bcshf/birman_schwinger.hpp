#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <gsl/gsl_sf_expint.h>

#include "errors.hpp"
#include "potentials.hpp"
#include "radial_math.hpp"

namespace bcshf::bs {

using potentials::RadialPotential;
using radial::RadialGrid;

enum class BSMode { X, XK };

/**
 * @brief Symmetrized Nystrom matrix of |V|^1/2 G |V|^1/2.
 *
 * Vector entries are sqrt(w_i) r_i f(r_i); the Euclidean product then equals
 * the L2(R^3) product up to 4 pi.
 */
struct BSMatrix {
  RadialGrid grid;
  std::vector<double> J;
  /// sqrt(w_i) r_i |V(r_i)|^1/2.
  Eigen::VectorXd d;
  Eigen::MatrixXd matrix;
  BSMode mode = BSMode::X;

  Eigen::Index size() const { return matrix.rows(); }
  Eigen::VectorXd Jvec() const { return Eigen::Map<const Eigen::VectorXd>(J.data(), static_cast<Eigen::Index>(J.size())); }
};

namespace detail {

inline BSMatrix assemble(const RadialPotential& V, const RadialGrid& g) {
  const auto n = static_cast<Eigen::Index>(g.size());
  BSMatrix m;
  m.grid = g;
  m.J.resize(g.size());
  m.d.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = g.points[static_cast<std::size_t>(i)];
    const double v = V(r);
    if (!std::isfinite(v)) throw EvaluationError("build_bs_matrix: potential not finite on grid");
    m.J[static_cast<std::size_t>(i)] = v < 0.0 ? -1.0 : 1.0;
    m.d(i) = std::sqrt(g.weights[static_cast<std::size_t>(i)]) * r * std::sqrt(std::abs(v));
  }
  m.matrix.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double ri = g.points[static_cast<std::size_t>(i)], rj = g.points[static_cast<std::size_t>(j)];
      m.matrix(i, j) = m.d(i) * m.d(j) / std::max(ri, rj);
    }
  // Singularity subtraction: the kink of 1/max(r, r') on the diagonal is
  // integrated exactly, int_0^R dr'/max(r, r') = 1 + ln(R/r).
  double R = 0.0;
  for (double w : g.weights) R += w;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    const double ri = g.points[si];
    const double v = std::abs(V(ri));
    if (v == 0.0) continue;
    double s = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) s += g.weights[j] / std::max(ri, g.points[j]);
    m.matrix(i, i) += v * ri * ri * (1.0 + std::log(R / ri) - s);
  }
  return m;
}

}  // namespace detail

/** @brief X-mode matrix with Green kernel 1/max(r, r') on a two-panel grid, diagonal-corrected. */
inline BSMatrix build_bs_matrix(const RadialPotential& V, std::size_t n) {
  if (n < 32) throw ParameterError("build_bs_matrix: n must be >= 32");
  if (!(V.support_radius > 0.0) || !std::isfinite(V.support_radius))
    throw ParameterError("build_bs_matrix: potential needs a finite support");
  return detail::assemble(V, potentials::potential_grid(V, n));
}

/** @brief X-mode matrix on a caller-supplied position grid. */
inline BSMatrix build_bs_matrix(const RadialPotential& V, const RadialGrid& g) {
  return detail::assemble(V, g);
}

/**
 * @brief Momentum-diagonal operator 1/K - 1/p^2 sampled on a grid.
 *
 * `tail_c` is the coefficient of the p^-4 decay beyond the grid.
 */
struct MomentumKernel {
  RadialGrid grid;
  std::vector<double> g;
  double tail_c = 0.0;
};

/** @brief j0(p_i r_k) for all position/momentum node pairs. */
inline Eigen::MatrixXd bessel_table(const RadialGrid& pos, const RadialGrid& mom) {
  Eigen::MatrixXd B(static_cast<Eigen::Index>(pos.size()), static_cast<Eigen::Index>(mom.size()));
  for (std::size_t k = 0; k < pos.size(); ++k)
    for (std::size_t i = 0; i < mom.size(); ++i)
      B(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = radial::sinc(mom.points[i] * pos.points[k]);
  return B;
}

/**
 * @brief s-wave kernel M(r, r') of 1/K - 1/p^2 on the position grid.
 *
 * M = (2/pi) int (p^2/K - 1) j0(p r) j0(p r') dp.
 */
inline Eigen::MatrixXd remainder_kernel(const MomentumKernel& k, const RadialGrid& pos,
                                        const Eigen::MatrixXd& B) {
  const auto np = static_cast<Eigen::Index>(k.grid.size());
  Eigen::VectorXd c(np);
  for (Eigen::Index i = 0; i < np; ++i) {
    const double p = k.grid.points[static_cast<std::size_t>(i)];
    c(i) = (2.0 / std::numbers::pi) * k.grid.weights[static_cast<std::size_t>(i)] * p * p *
           k.g[static_cast<std::size_t>(i)];
  }
  Eigen::MatrixXd M = B * c.asDiagonal() * B.transpose();
  const double P = k.grid.cutoff;
  if (k.tail_c != 0.0) {
    const auto nr = static_cast<Eigen::Index>(pos.size());
    for (Eigen::Index a = 0; a < nr; ++a)
      for (Eigen::Index b = 0; b < nr; ++b)
        M(a, b) += (2.0 / std::numbers::pi) * k.tail_c / P *
                   radial::sinc(P * pos.points[static_cast<std::size_t>(a)]) *
                   radial::sinc(P * pos.points[static_cast<std::size_t>(b)]);
  }
  return M;
}

/** @brief XK-mode matrix |V|^1/2 K^-1 |V|^1/2 from an X-mode matrix. */
inline BSMatrix build_bs_matrix_K(const BSMatrix& x, const MomentumKernel& k, const Eigen::MatrixXd& B) {
  BSMatrix m = x;
  m.mode = BSMode::XK;
  const Eigen::MatrixXd M = remainder_kernel(k, x.grid, B);
  m.matrix = x.matrix + x.d.asDiagonal() * M * x.d.asDiagonal();
  return m;
}

/** @brief Lowest eigenpair of 1 + JX. */
struct EigenPair {
  double e = 1.0;
  /// Eigenvector of 1 + JX, unit Euclidean norm.
  Eigen::VectorXd phi;
  /// All eigenvalues of 1 + X^1/2 J X^1/2, ascending.
  Eigen::VectorXd spectrum;
};

/** @brief Positive square root of a symmetric PSD matrix, clipping round-off negatives. */
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& X) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (X + X.transpose()));
  if (es.info() != Eigen::Success) throw NumericalError("psd_sqrt: eigensolve failed");
  const Eigen::VectorXd s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
}

/** @brief Smallest eigenvalue of 1 + JX via the isospectral form 1 + X^1/2 J X^1/2. */
inline EigenPair smallest_eig_one_plus_jx(const BSMatrix& m) {
  const Eigen::Index n = m.size();
  const Eigen::MatrixXd R = psd_sqrt(m.matrix);
  const Eigen::VectorXd J = m.Jvec();
  Eigen::MatrixXd S = R * J.asDiagonal() * R;
  S = 0.5 * (S + S.transpose());
  S.diagonal().array() += 1.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  if (es.info() != Eigen::Success) throw NumericalError("smallest_eig_one_plus_jx: eigensolve failed");
  EigenPair out;
  out.spectrum = es.eigenvalues();
  out.e = es.eigenvalues()(0);
  const Eigen::VectorXd psi = es.eigenvectors().col(0);
  Eigen::VectorXd phi = J.asDiagonal() * (R * psi);
  const double nrm = phi.norm();
  if (nrm > 1e-300 * std::sqrt(static_cast<double>(n))) {
    phi /= nrm;
  } else {
    phi = psi;
  }
  // Fix the sign so the largest-magnitude component is positive.
  Eigen::Index imax = 0;
  phi.cwiseAbs().maxCoeff(&imax);
  if (phi(imax) < 0.0) phi = -phi;
  out.phi = phi;
  return out;
}

/** @brief Scattering length (1/4pi) <|V|^1/2, (1 + JX)^-1 V^1/2> on the grid. */
inline double bs_scattering_length(const BSMatrix& m, double resonance_tol = 1e-12) {
  if (m.d.isZero(0.0)) return 0.0;
  const EigenPair ep = smallest_eig_one_plus_jx(m);
  if (std::abs(ep.e) < resonance_tol)
    throw ResonanceError("bs_scattering_length: 1 + JX is singular", std::abs(ep.e));
  Eigen::MatrixXd A = m.matrix;
  A.diagonal() += m.Jvec();
  // (1 + JX) y = J d  <=>  (J + X) y = d
  const Eigen::VectorXd y = A.partialPivLu().solve(m.d);
  return m.d.dot(y);
}

/** @brief Birman-Schwinger spectral report. */
struct BSReport {
  double e_ell = 1.0;
  Eigen::VectorXd phi;
  double p_ell_norm_bound = 0.0;
  double a10_ratio = 0.0;
  double j_expectation = 0.0;
  /// <(1 + J) phi, phi> for the unit-normalized phi.
  double one_plus_j_expectation = 0.0;
  std::size_t near_zero_count = 0;
  bool projection_ok = false;
  bool invertible = false;
};

/** @brief Resolvent bounds: norm of (1+JX)^-1 (1 - P) and the overlap ratio. */
inline BSReport audit_a9_a10(const BSMatrix& m) {
  BSReport r;
  const EigenPair ep = smallest_eig_one_plus_jx(m);
  r.e_ell = ep.e;
  r.phi = ep.phi;
  for (Eigen::Index i = 0; i < ep.spectrum.size(); ++i)
    if (std::abs(ep.spectrum(i)) < 0.1) ++r.near_zero_count;
  const Eigen::VectorXd J = m.Jvec();
  // L2(R^3) normalization: entries carry sqrt(4 pi).
  const Eigen::VectorXd phi = ep.phi / std::sqrt(radial::four_pi);
  const Eigen::VectorXd Jphi = J.asDiagonal() * phi;
  const double jpp = radial::four_pi * Jphi.dot(phi);
  r.j_expectation = jpp;
  r.one_plus_j_expectation = ep.phi.dot(ep.phi) + ep.phi.dot(J.asDiagonal() * ep.phi);
  if (std::abs(jpp) < 1e-14)
    throw NumericalError("audit_a9_a10: <J phi, phi> = 0, projection undefined");
  r.projection_ok = true;
  r.a10_ratio = radial::four_pi * m.d.dot(phi.cwiseAbs()) / std::abs(jpp);
  const Eigen::Index n = m.size();
  Eigen::MatrixXd A = J.asDiagonal() * m.matrix;
  A.diagonal().array() += 1.0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  r.invertible = lu.isInvertible();
  if (!r.invertible) return r;
  const Eigen::MatrixXd Ainv = lu.inverse();
  const Eigen::MatrixXd P = (ep.phi * (J.asDiagonal() * ep.phi).transpose()) / ep.phi.dot(J.asDiagonal() * ep.phi);
  const Eigen::MatrixXd Q = Ainv * (Eigen::MatrixXd::Identity(n, n) - P);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Q);
  r.p_ell_norm_bound = svd.singularValues()(0);
  return r;
}

/** @brief Pieces of the trace-norm certificate. */
struct A8Report {
  double x_minus_norm = 0.0;
  double v_minus_l1 = 0.0;
  /// int p^2/(p^2+C) p^b/(p^2-p^b+C) dp, the exact trace-norm integral.
  double integral = 0.0;
  /// Same integral without the p^2/(p^2+C) factor; an upper bound.
  double integral_coarse = 0.0;
  double trace_norm = 0.0;
  double trace_norm_coarse = 0.0;
  double b = 0.5;
  double C = 10.0;
  bool certified = false;
};

/** @brief int_0^inf w(p) p^b / (p^2 - p^b + C) dp with w = p^2/(p^2+C) or w = 1. */
inline double a8_integral(double b, double C, bool with_resolvent_factor = true) {
  static const radial::GaussRule rule = radial::gauss_legendre(64);
  auto f = [b, C, with_resolvent_factor](double p) {
    const double w = with_resolvent_factor ? p * p / (p * p + C) : 1.0;
    return w * std::pow(p, b) / (p * p - std::pow(p, b) + C);
  };
  // Panels in log p cover [1e-12, 1e12]; outside, the integrand is a pure power.
  const double lo = -12.0, hi = 12.0;
  const int panels = 96;
  double s = 0.0;
  for (int k = 0; k < panels; ++k) {
    const double a = lo + (hi - lo) * k / panels, c = lo + (hi - lo) * (k + 1) / panels;
    for (std::size_t j = 0; j < rule.x.size(); ++j) {
      const double u = 0.5 * (a + c) + 0.5 * (c - a) * rule.x[j];
      const double p = std::pow(10.0, u);
      s += 0.5 * (c - a) * rule.w[j] * f(p) * p * std::log(10.0);
    }
  }
  const double p0 = 1e-12, p1 = 1e12;
  s += with_resolvent_factor ? std::pow(p0, b + 3.0) / (C * C * (b + 3.0)) : std::pow(p0, b + 1.0) / (C * (b + 1.0));
  s += std::pow(p1, b - 1.0) / (1.0 - b);
  return s;
}

/** @brief Attractive-part norm plus trace-norm bound on the remainder. */
inline A8Report audit_a8_trace_route(const RadialPotential& V, double b, double C, std::size_t n = 400) {
  if (!(b > 0.0 && b < 1.0)) throw ParameterError("audit_a8_trace_route: b must lie in (0, 1)");
  const double pstar = std::pow(b / 2.0, 1.0 / (2.0 - b));
  const double dmin = pstar * pstar - std::pow(pstar, b) + C;
  if (!(dmin > 0.0)) throw ParameterError("audit_a8_trace_route: p^2 - p^b + C must stay positive");
  A8Report r;
  r.b = b;
  r.C = C;
  RadialPotential Vm = V;
  Vm.eval = [V](double x) { return std::max(-V(x), 0.0); };
  const BSMatrix xm = build_bs_matrix(Vm, n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(xm.matrix, Eigen::EigenvaluesOnly);
  r.x_minus_norm = es.eigenvalues().cwiseAbs().maxCoeff();
  r.v_minus_l1 = potentials::l1_norm(Vm, n);
  r.integral = a8_integral(b, C, true);
  r.integral_coarse = a8_integral(b, C, false);
  r.trace_norm = radial::four_pi * radial::inv_two_pi_3 * r.v_minus_l1 * r.integral;
  r.trace_norm_coarse = radial::four_pi * radial::inv_two_pi_3 * r.v_minus_l1 * r.integral_coarse;
  r.certified = r.x_minus_norm + r.trace_norm < 1.0;
  return r;
}

/** @brief Both sides of sqrt2 |phi| |(J+X) phi| >= <phi, (X+ + 1 - X-) phi>. */
struct Lemma8Result {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds(double tol_rel = 1e-8, double phi_norm2 = 1.0) const { return lhs >= rhs - tol_rel * phi_norm2; }
};

inline Lemma8Result lemma8_inequality_check(const Eigen::VectorXd& phi, const BSMatrix& m) {
  if (phi.size() != m.size()) throw ParameterError("lemma8_inequality_check: size mismatch");
  const Eigen::VectorXd J = m.Jvec();
  Eigen::VectorXd plus = (J.array() > 0.0).cast<double>().matrix();
  Eigen::VectorXd minus = (J.array() < 0.0).cast<double>().matrix();
  Eigen::MatrixXd JX = m.matrix;
  JX.diagonal() += J;
  const Eigen::MatrixXd Xp = plus.asDiagonal() * m.matrix * plus.asDiagonal();
  const Eigen::MatrixXd Xm = minus.asDiagonal() * m.matrix * minus.asDiagonal();
  Lemma8Result r;
  r.lhs = std::sqrt(2.0) * phi.norm() * (JX * phi).norm();
  r.rhs = phi.dot(Xp * phi) + phi.squaredNorm() - phi.dot(Xm * phi);
  return r;
}

/** @brief int_y^inf (sin x / x - 1) / x^2 dx. */
inline double sinc_tail(double y) {
  if (y < 1e-3) return -std::numbers::pi / 4.0 + y / 6.0;
  const double si = gsl_sf_Si(y);
  return std::sin(y) / (2.0 * y * y) + std::cos(y) / (2.0 * y) - 0.5 * (std::numbers::pi / 2.0 - si) - 1.0 / y;
}

/** @brief a(d) = (2pi)^-3 int (1/K - 1/p^2)(sinc(p d) - 1) d^3p. */
inline double remainder_profile(const MomentumKernel& k, double d) {
  double s = 0.0;
  for (std::size_t i = 0; i < k.grid.size(); ++i) {
    const double p = k.grid.points[i];
    s += k.grid.weights[i] * p * p * k.g[i] * (radial::sinc(p * d) - 1.0);
  }
  const double P = k.grid.cutoff;
  // Beyond P: g ~ c / p^4.
  const double tail = d > 0.0 ? k.tail_c * d * sinc_tail(P * d) : 0.0;
  return (s + tail) / (2.0 * std::numbers::pi * std::numbers::pi);
}

/** @brief Hilbert-Schmidt norm of the remainder operator and its scaled ratio. */
struct HSResult {
  double norm = 0.0;
  double l1 = 0.0;
  double ratio = 0.0;
};

/**
 * @brief |A|_2 with A(x,y) = V^1/2(x) |V|^1/2(y) a(|x - y|).
 *
 * |A|_2^2 = 8 pi^2 int int |V(r)||V(r')| r r' int_{|r-r'|}^{r+r'} a(d)^2 d dd.
 */
inline HSResult remainder_hs_norm(const MomentumKernel& k, const RadialPotential& V, double q,
                                  std::size_t n = 200, std::size_t n_table = 4001) {
  if (!(q >= 0.0 && q < 1.0 + 1e-12)) throw ParameterError("remainder_hs_norm: q must lie in [0, 1]");
  HSResult out;
  out.l1 = potentials::l1_norm(V);
  if (out.l1 == 0.0) return out;
  const RadialGrid g = potentials::potential_grid(V, n);
  const double dmax = 2.0 * V.support_radius;
  const double h = dmax / static_cast<double>(n_table - 1);
  std::vector<double> a2d(n_table), cum(n_table, 0.0);
  for (std::size_t j = 0; j < n_table; ++j) {
    const double d = h * static_cast<double>(j);
    const double a = remainder_profile(k, d);
    a2d[j] = a * a * d;
  }
  for (std::size_t j = 1; j < n_table; ++j) cum[j] = cum[j - 1] + 0.5 * h * (a2d[j] + a2d[j - 1]);
  auto C = [&](double d) {
    const double x = std::clamp(d / h, 0.0, static_cast<double>(n_table - 1));
    const auto j = std::min<std::size_t>(static_cast<std::size_t>(x), n_table - 2);
    const double t = x - static_cast<double>(j);
    return (1.0 - t) * cum[j] + t * cum[j + 1];
  };
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double ri = g.points[i], vi = std::abs(V(ri));
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double rj = g.points[j], vj = std::abs(V(rj));
      s += g.weights[i] * g.weights[j] * vi * vj * ri * rj * (C(ri + rj) - C(std::abs(ri - rj)));
    }
  }
  out.norm = std::sqrt(8.0 * std::numbers::pi * std::numbers::pi * std::max(s, 0.0));
  out.ratio = out.norm / (std::pow(V.support_radius, q) * out.l1);
  return out;
}

}  // namespace bcshf::bs
