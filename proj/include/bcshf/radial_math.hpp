#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <type_traits>
#include <utility>
#include <vector>

#include <boost/math/special_functions/legendre.hpp>

#include "errors.hpp"

namespace bcshf::radial {

inline constexpr double pi = std::numbers::pi;
inline constexpr double four_pi = 4.0 * std::numbers::pi;
/// (2pi)^(-3/2)
inline const double inv_two_pi_32 = std::pow(2.0 * pi, -1.5);
/// (2pi)^(-3)
inline constexpr double inv_two_pi_3 = 1.0 / (8.0 * pi * pi * pi);

/** @brief Gauss-Legendre rule on [-1, 1]. */
struct GaussRule {
  std::vector<double> x;
  std::vector<double> w;
};

/** @brief n-point Gauss-Legendre nodes and weights, ascending. */
inline GaussRule gauss_legendre(unsigned n) {
  if (n < 1) throw ParameterError("gauss_legendre: n must be >= 1");
  const auto zeros = boost::math::legendre_p_zeros<double>(static_cast<int>(n));
  GaussRule rule;
  rule.x.reserve(n);
  rule.w.reserve(n);
  auto weight = [n](double x) {
    const double dp = boost::math::legendre_p_prime<double>(static_cast<int>(n), x);
    return 2.0 / ((1.0 - x * x) * dp * dp);
  };
  for (auto it = zeros.rbegin(); it != zeros.rend(); ++it) {
    if (*it == 0.0) continue;
    rule.x.push_back(-*it);
    rule.w.push_back(weight(*it));
  }
  for (double z : zeros) {
    rule.x.push_back(z);
    rule.w.push_back(weight(z));
  }
  return rule;
}

/// Panel order used by all composite grids.
inline constexpr unsigned panel_order = 8;

inline const GaussRule& panel_rule() {
  static const GaussRule rule = gauss_legendre(panel_order);
  return rule;
}

/**
 * @brief Quadrature nodes on [0, cutoff] for radial integrals.
 *
 * Each node also stores its offset from `center`, exact to rounding of the
 * panel construction, so p^2 - nu can be formed without cancellation near
 * a Fermi surface.
 */
struct RadialGrid {
  std::vector<double> points;
  std::vector<double> weights;
  std::vector<double> offsets;
  double center = 0.0;
  double cutoff = 0.0;
  /// Decay power of integrands beyond cutoff; 0 disables the tail.
  double tail_exponent = 4.0;

  std::size_t size() const { return points.size(); }

  /** @brief p_i^2 - nu, accurate when center^2 is close to nu. */
  double shifted_square(std::size_t i, double nu) const {
    const double d = offsets[i];
    return std::fma(center, center, -nu) + d * (2.0 * center + d);
  }
};

namespace detail {

struct Node {
  double p;
  double off;
  double w;
};

// Breakpoint offsets w*sinh(k/P * asinh(D/w)), k = 0..P.
inline std::vector<double> sinh_breaks(double D, double w, unsigned P) {
  std::vector<double> b(P + 1);
  const double A = std::asinh(D / w);
  for (unsigned k = 0; k <= P; ++k) b[k] = w * std::sinh(A * k / P);
  b[P] = D;
  return b;
}

inline void add_segment(std::vector<Node>& out, double c, double D, double dir, double w,
                        unsigned P) {
  const auto& rule = panel_rule();
  const auto b = sinh_breaks(D, w, P);
  for (unsigned k = 0; k < P; ++k) {
    const double lo = b[k], hi = b[k + 1];
    const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
    for (std::size_t j = 0; j < rule.x.size(); ++j) {
      const double off = dir * (mid + half * rule.x[j]);
      out.push_back({c + off, off, half * rule.w[j]});
    }
  }
}

inline RadialGrid finish(std::vector<Node> nodes, double center, double cutoff) {
  std::sort(nodes.begin(), nodes.end(), [](const Node& a, const Node& b) { return a.p < b.p; });
  RadialGrid g;
  g.center = center;
  g.cutoff = cutoff;
  g.points.reserve(nodes.size());
  g.weights.reserve(nodes.size());
  g.offsets.reserve(nodes.size());
  for (const auto& n : nodes) {
    g.points.push_back(n.p);
    g.weights.push_back(n.w);
    g.offsets.push_back(n.off);
  }
  return g;
}

inline unsigned panels_for(double D, double w, double ratio) {
  return 2u + static_cast<unsigned>(std::ceil(std::asinh(D / w) / std::log(ratio)));
}

}  // namespace detail

/**
 * @brief Composite Gauss grid on [0, cutoff].
 *
 * Panels are graded geometrically away from `refinement_center` (or from 0),
 * starting at panel scale `width`.
 */
inline RadialGrid build_grid(double cutoff, std::size_t n_points,
                             std::optional<double> refinement_center = std::nullopt,
                             std::optional<double> width = std::nullopt) {
  if (!(cutoff > 0.0) || !std::isfinite(cutoff))
    throw ParameterError("build_grid: cutoff must be positive");
  if (n_points < 16) throw ParameterError("build_grid: n_points must be >= 16");
  const unsigned P = std::max<unsigned>(2, static_cast<unsigned>(n_points / panel_order));
  std::vector<detail::Node> nodes;
  nodes.reserve(static_cast<std::size_t>(P) * panel_order);
  if (!refinement_center) {
    const double w = width.value_or(0.25 * std::min(1.0, cutoff));
    detail::add_segment(nodes, 0.0, cutoff, 1.0, w, P);
    return detail::finish(std::move(nodes), 0.0, cutoff);
  }
  const double c = *refinement_center;
  if (!(c > 0.0) || c >= cutoff)
    throw ParameterError("build_grid: refinement_center must lie in (0, cutoff)");
  const double w = width.value_or(0.05 * c);
  if (!(w > 0.0)) throw ParameterError("build_grid: width must be positive");
  const double al = std::asinh(c / w), ar = std::asinh((cutoff - c) / w);
  unsigned pl = static_cast<unsigned>(std::lround(P * al / (al + ar)));
  pl = std::clamp<unsigned>(pl, 1, P - 1);
  detail::add_segment(nodes, c, c, -1.0, w, pl);
  detail::add_segment(nodes, c, cutoff - c, 1.0, w, P - pl);
  return detail::finish(std::move(nodes), c, cutoff);
}

/**
 * @brief Grid whose panel count follows from a target growth ratio.
 *
 * Resolves features of size `width` at `center` (or at 0) and grows
 * geometrically up to `cutoff`.
 */
inline RadialGrid build_graded_grid(double cutoff, std::optional<double> center, double width,
                                    double ratio = 1.5) {
  if (!(cutoff > 0.0) || !(width > 0.0) || !(ratio > 1.0))
    throw ParameterError("build_graded_grid: invalid arguments");
  std::vector<detail::Node> nodes;
  if (!center) {
    detail::add_segment(nodes, 0.0, cutoff, 1.0, width,
                        detail::panels_for(cutoff, width, ratio));
    return detail::finish(std::move(nodes), 0.0, cutoff);
  }
  const double c = *center;
  if (!(c > 0.0) || c >= cutoff)
    throw ParameterError("build_graded_grid: center must lie in (0, cutoff)");
  detail::add_segment(nodes, c, c, -1.0, width, detail::panels_for(c, width, ratio));
  detail::add_segment(nodes, c, cutoff - c, 1.0, width,
                      detail::panels_for(cutoff - c, width, ratio));
  return detail::finish(std::move(nodes), c, cutoff);
}

/**
 * @brief Grid on [0, breaks.back()] with panel edges at every break.
 *
 * `nodes_per_interval[k]` Gauss nodes go into [breaks[k-1], breaks[k]]
 * (breaks[-1] = 0), split into panels of at most `max_order` nodes.
 * No tail: the grid covers a compact support.
 */
inline RadialGrid build_panel_grid(const std::vector<double>& breaks,
                                   const std::vector<std::size_t>& nodes_per_interval,
                                   unsigned max_order = 20) {
  if (breaks.empty() || breaks.size() != nodes_per_interval.size())
    throw ParameterError("build_panel_grid: breaks and node counts must match");
  std::vector<detail::Node> nodes;
  double lo = 0.0;
  for (std::size_t k = 0; k < breaks.size(); ++k) {
    const double hi = breaks[k];
    if (!(hi > lo)) throw ParameterError("build_panel_grid: breaks must increase from 0");
    const std::size_t n = std::max<std::size_t>(nodes_per_interval[k], 2);
    const std::size_t panels = (n + max_order - 1) / max_order;
    const unsigned q = static_cast<unsigned>((n + panels - 1) / panels);
    const GaussRule rule = gauss_legendre(q);
    const double h = (hi - lo) / static_cast<double>(panels);
    for (std::size_t j = 0; j < panels; ++j) {
      const double a = lo + h * static_cast<double>(j);
      const double b = (j + 1 == panels) ? hi : a + h;
      const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
      for (std::size_t i = 0; i < rule.x.size(); ++i) {
        const double p = mid + half * rule.x[i];
        nodes.push_back({p, p, half * rule.w[i]});
      }
    }
    lo = hi;
  }
  RadialGrid g = detail::finish(std::move(nodes), 0.0, breaks.back());
  g.tail_exponent = 0.0;
  return g;
}

/** @brief Result of a radial integral; `value` already includes `tail`. */
struct RadialIntegral {
  double value = 0.0;
  double tail = 0.0;
};

/** @brief 4 pi f(c) c^3 / (n - 3): integral of a p^-n tail beyond c. */
inline double power_tail(double f_at_cutoff, double cutoff, double exponent) {
  if (exponent <= 0.0 || f_at_cutoff == 0.0) return 0.0;
  if (exponent <= 3.0) throw ParameterError("power_tail: tail exponent must exceed 3");
  return four_pi * f_at_cutoff * cutoff * cutoff * cutoff / (exponent - 3.0);
}

/** @brief 4 pi sum w_i f_i p_i^2 plus tail, from samples on the grid. */
inline RadialIntegral integrate_samples(std::span<const double> f, const RadialGrid& grid) {
  if (f.size() != grid.size()) throw ParameterError("integrate_samples: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i)
    s += grid.weights[i] * f[i] * grid.points[i] * grid.points[i];
  RadialIntegral out;
  if (!f.empty() && grid.tail_exponent > 0.0) {
    const double pl = grid.points.back();
    const double f_c = f.back() * std::pow(pl / grid.cutoff, grid.tail_exponent);
    out.tail = power_tail(f_c, grid.cutoff, grid.tail_exponent);
  }
  out.value = four_pi * s + out.tail;
  return out;
}

/** @brief 3D integral of a radial function: 4 pi int f(p) p^2 dp. */
template <class F>
RadialIntegral integrate_radial(F&& f, const RadialGrid& grid) {
  static_assert(std::is_invocable_r_v<double, F, double>);
  double s = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double p = grid.points[i];
    const double v = f(p);
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "integrate_radial: non-finite integrand at p = " << p;
      throw EvaluationError(os.str());
    }
    s += grid.weights[i] * v * p * p;
  }
  RadialIntegral out;
  if (grid.tail_exponent > 0.0) {
    const double fc = f(grid.cutoff);
    if (!std::isfinite(fc)) throw EvaluationError("integrate_radial: non-finite integrand at cutoff");
    out.tail = power_tail(fc, grid.cutoff, grid.tail_exponent);
  }
  out.value = four_pi * s + out.tail;
  return out;
}

/** @brief sin(x)/x with the series near 0. */
inline double sinc(double x) {
  const double ax = std::abs(x);
  if (ax < 1e-4) {
    const double x2 = x * x;
    return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
  }
  return std::sin(x) / x;
}

/**
 * @brief Radial 3D Fourier transform: sqrt(2/pi) int r^2 f(r) j0(k r) dr.
 *
 * Self-inverse; pass momentum samples and a momentum grid for the inverse.
 */
inline std::vector<double> radial_fourier_3d(std::span<const double> values, const RadialGrid& from,
                                             std::span<const double> targets) {
  if (values.size() != from.size()) throw ParameterError("radial_fourier_3d: size mismatch");
  const double pref = std::sqrt(2.0 / pi);
  std::vector<double> out(targets.size(), 0.0);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const double k = targets[t];
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double r = from.points[i];
      s += from.weights[i] * r * r * values[i] * sinc(k * r);
    }
    out[t] = pref * s;
  }
  return out;
}

/** @brief Convenience overload sampling a callable on `from`. */
template <class F>
  requires std::is_invocable_r_v<double, F, double>
std::vector<double> radial_fourier_3d(F&& f, const RadialGrid& from, std::span<const double> targets) {
  std::vector<double> v(from.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(from.points[i]);
  return radial_fourier_3d(std::span<const double>(v), from, targets);
}

}  // namespace bcshf::radial
