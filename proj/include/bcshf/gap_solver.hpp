#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/tools/roots.hpp>

#include "birman_schwinger.hpp"
#include "critical_temperature.hpp"
#include "dispersion.hpp"
#include "errors.hpp"
#include "potentials.hpp"
#include "radial_math.hpp"

namespace bcshf::gap {

using dispersion::ThermoParams;
using potentials::RadialPotential;
using radial::RadialGrid;

enum class Phase { superfluid, normal };

inline std::string to_string(Phase p) { return p == Phase::superfluid ? "superfluid" : "normal"; }

/** @brief gamma_hat = 1/2 - (p^2 - mu_tilde)/(2K) on every grid node. */
inline std::vector<double> gamma_closure(double T, double mu_tilde, double Delta, const RadialGrid& grid) {
  std::vector<double> g(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    g[i] = dispersion::gamma_from_shift(T, grid.shifted_square(i, mu_tilde), Delta);
  return g;
}

/** @brief Solution of the contact-limit pair of equations. */
struct EffectiveSolution {
  double Delta = 0.0;
  double mu_tilde = 0.0;
  RadialGrid grid;
  std::vector<double> gamma_hat;
  int iterations = 0;
  /// m(T, mu_tilde, Delta) + 1/(4 pi a); not meaningful in the normal phase.
  double residual_gap = 0.0;
  /// mu_tilde - mu + 2 calV (2pi)^-3/2 int gamma_hat.
  double residual_mu = 0.0;
  Phase phase = Phase::normal;
};

namespace detail {

inline double mu_equation(double nu, double Delta, const ThermoParams& P) {
  if (P.calV == 0.0) return nu - P.mu;
  return nu - P.mu + 2.0 * P.calV * radial::inv_two_pi_32 * dispersion::density(P.T, nu, Delta);
}

/** @brief Root in nu of the mu_tilde equation; increasing in nu. */
inline double nu_of_delta(double Delta, const ThermoParams& P, double tol, int& evals) {
  if (P.calV == 0.0) return P.mu;
  double hi = P.mu;
  double step = std::max(1.0, std::abs(P.mu));
  double lo = P.mu - step;
  int guard = 0;
  while (mu_equation(lo, Delta, P) > 0.0) {
    hi = lo;
    step *= 2.0;
    lo = P.mu - step;
    if (++guard > 200) throw NumericalError("solve_effective: mu_tilde bracket failure");
  }
  for (int it = 0; it < 200 && hi - lo > tol * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    ++evals;
    if (mu_equation(mid, Delta, P) > 0.0) hi = mid; else lo = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/**
 * @brief Nested bisection for (Delta, mu_tilde): outer in Delta, inner in mu_tilde.
 *
 * Returns the normal phase when no positive gap solves the gap equation.
 */
inline EffectiveSolution solve_effective(const ThermoParams& P, double tol = 1e-12, int max_iter = 400) {
  P.validate();
  if (!P.a) throw ParameterError("solve_effective: scattering length a is required");
  if (!(tol > 0.0)) throw ParameterError("solve_effective: tol must be positive");
  const double inv4pia = 1.0 / (4.0 * std::numbers::pi * *P.a);
  int evals = 0;
  auto g = [&](double Delta, double& nu) {
    nu = detail::nu_of_delta(Delta, P, 1e-15, evals);
    if (Delta == 0.0 && P.T == 0.0 && nu >= 0.0) return std::numeric_limits<double>::infinity();
    return dispersion::m_integral(P.T, nu, Delta) + inv4pia;
  };
  EffectiveSolution out;
  double nu0 = 0.0;
  const double g0 = g(0.0, nu0);
  if (!(g0 > 0.0)) {
    out.phase = Phase::normal;
    out.mu_tilde = nu0;
    out.grid = dispersion::fermi_surface_grid(nu0, P.T, 0.0);
    out.gamma_hat = gamma_closure(P.T, nu0, 0.0, out.grid);
    out.residual_gap = g0;
    out.residual_mu = detail::mu_equation(nu0, 0.0, P);
    return out;
  }
  double hi = std::max({1.0, std::abs(P.mu), P.T});
  double nu = 0.0;
  int guard = 0;
  while (g(hi, nu) > 0.0) {
    hi *= 2.0;
    if (++guard > 200) throw NumericalError("solve_effective: gap bracket failure");
  }
  double lo = 0.0;
  int it = 0;
  for (; it < max_iter; ++it) {
    if (lo > 0.0 && hi - lo <= tol * hi) break;
    const double mid = lo > 0.0 ? std::sqrt(lo * hi) : hi * 1e-3;
    if (!(mid > 0.0)) break;
    if (g(mid, nu) > 0.0) lo = mid; else hi = mid;
  }
  if (it >= max_iter) {
    double nu_last = 0.0;
    throw ConvergenceError("solve_effective: max_iter exceeded", std::abs(g(hi, nu_last)));
  }
  if (!(lo > 0.0)) {
    out.phase = Phase::normal;
    out.mu_tilde = nu0;
    out.grid = dispersion::fermi_surface_grid(nu0, P.T, 0.0);
    out.gamma_hat = gamma_closure(P.T, nu0, 0.0, out.grid);
    out.residual_mu = detail::mu_equation(nu0, 0.0, P);
    out.iterations = it;
    return out;
  }
  out.phase = Phase::superfluid;
  out.Delta = 0.5 * (lo + hi);
  out.residual_gap = g(out.Delta, nu);
  out.mu_tilde = nu;
  out.residual_mu = detail::mu_equation(nu, out.Delta, P);
  out.grid = dispersion::fermi_surface_grid(nu, P.T, out.Delta);
  out.gamma_hat = gamma_closure(P.T, nu, out.Delta, out.grid);
  out.iterations = it;
  return out;
}

/** @brief Numerical knobs of the finite-range solver. */
struct FiniteRangeOptions {
  std::size_t n_pos = 200;
  /// Momentum cutoff in units of 1/range.
  double cutoff_factor = 200.0;
  double grid_ratio = 1.5;
  /// Sup-norm tolerance on the gamma_hat fixed point.
  double tol = 1e-10;
  /// Relative tolerance on the gap equation residual.
  double gap_tol = 1e-6;
  int max_iter = 300;
  double theta = 0.5;
  double theta_floor = 0.05;
  /// A positive seed selects the superfluid branch; zero returns the normal state.
  double seed_gap = 1.0;
  /// Expected gap scale used to size the Fermi-surface panels at T = 0.
  double delta_hint = 0.0;
  int max_recenter = 6;
};

/** @brief Translation-invariant BCS-HF state on a momentum grid. */
struct FiniteRangeState {
  double T = 0.0;
  double mu = 0.0;
  RadialGrid grid;
  std::vector<double> gamma_hat;
  std::vector<double> alpha_hat;
  std::vector<double> Delta_p;
  /// Hartree-Fock dispersion eps^gamma(p).
  std::vector<double> epsilon;
  /// eps^gamma(p) - p^2, kept separately for precision.
  std::vector<double> eps_shift;
  double mu_tilde = 0.0;
  double free_energy = 0.0;
  /// Free energy of the normal state on the same grid.
  double normal_free_energy = 0.0;
  RadialGrid pos;
  /// Position-space gap on `pos`; Delta_p is its Fourier transform.
  std::vector<double> Delta_check;
  Phase branch = Phase::normal;
  /// Sup change of gamma_hat in the last fixed-point step.
  double residual = 0.0;
  double gap_residual = 0.0;
  int iterations = 0;

  /** @brief eps(p_i) - mu_tilde without cancellation near the Fermi surface. */
  double shift(std::size_t i) const {
    return grid.shifted_square(i, mu_tilde) + eps_shift[i];
  }
};

namespace detail {

/** @brief Grids, tables and sampled potential shared by one finite-range solve. */
struct FiniteRangeSetup {
  RadialGrid mom;
  RadialGrid pos;
  Eigen::MatrixXd B;
  bs::BSMatrix X;
  std::vector<double> Vpos;
  /// Vhat(0) by quadrature on the position grid.
  double vhat0 = 0.0;
};

inline RadialGrid momentum_grid(const RadialPotential& V, double center, double T, double delta_hint,
                                const FiniteRangeOptions& o) {
  const double P = std::max(o.cutoff_factor / V.support_radius, 20.0 * std::max(center, 1.0));
  if (center > 0.0) {
    const double feature = std::max(T, delta_hint);
    const double w = feature > 0.0 ? 0.125 * feature / center : 0.01 * center;
    if (w < 0.25 * center) return radial::build_graded_grid(P, center, w, o.grid_ratio);
  }
  const double scale = std::max({std::sqrt(std::abs(center * center)), std::sqrt(T), 0.05});
  return radial::build_graded_grid(P, std::nullopt, 0.25 * scale, o.grid_ratio);
}

inline FiniteRangeSetup make_setup(const RadialPotential& V, double center, double T, double delta_hint,
                                   const FiniteRangeOptions& o) {
  FiniteRangeSetup s;
  s.mom = momentum_grid(V, center, T, delta_hint, o);
  s.X = bs::build_bs_matrix(V, o.n_pos);
  s.pos = s.X.grid;
  s.B = bs::bessel_table(s.pos, s.mom);
  s.Vpos.resize(s.pos.size());
  double iv = 0.0;
  for (std::size_t k = 0; k < s.pos.size(); ++k) {
    s.Vpos[k] = V(s.pos.points[k]);
    iv += s.pos.weights[k] * s.pos.points[k] * s.pos.points[k] * s.Vpos[k];
  }
  s.vhat0 = std::sqrt(2.0 / std::numbers::pi) * iv;
  return s;
}

/** @brief Inverse radial transform of momentum samples decaying like p^-4. */
inline Eigen::VectorXd to_position(const FiniteRangeSetup& s, const std::vector<double>& f) {
  const auto np = static_cast<Eigen::Index>(s.mom.size());
  Eigen::VectorXd c(np);
  for (Eigen::Index i = 0; i < np; ++i) {
    const double p = s.mom.points[static_cast<std::size_t>(i)];
    c(i) = s.mom.weights[static_cast<std::size_t>(i)] * p * p * f[static_cast<std::size_t>(i)];
  }
  Eigen::VectorXd out = std::sqrt(2.0 / std::numbers::pi) * (s.B * c);
  const double P = s.mom.cutoff, pl = s.mom.points.back();
  const double tail_c = f.back() * std::pow(pl, 4.0);
  for (Eigen::Index k = 0; k < out.size(); ++k)
    out(k) += std::sqrt(2.0 / std::numbers::pi) * tail_c / P * radial::sinc(P * s.pos.points[static_cast<std::size_t>(k)]);
  return out;
}

/** @brief Forward radial transform of position samples onto the momentum grid. */
inline std::vector<double> to_momentum(const FiniteRangeSetup& s, const Eigen::VectorXd& f) {
  const auto nr = static_cast<Eigen::Index>(s.pos.size());
  Eigen::VectorXd c(nr);
  for (Eigen::Index k = 0; k < nr; ++k) {
    const double r = s.pos.points[static_cast<std::size_t>(k)];
    c(k) = s.pos.weights[static_cast<std::size_t>(k)] * r * r * f(k);
  }
  const Eigen::VectorXd out = std::sqrt(2.0 / std::numbers::pi) * (s.B.transpose() * c);
  return {out.data(), out.data() + out.size()};
}

/** @brief Hartree-Fock data: s = eps - p^2, mu_tilde, density N and gamma(r). */
struct HFData {
  std::vector<double> s;
  double mu_tilde = 0.0;
  double N = 0.0;
  Eigen::VectorXd gamma_pos;
};

inline HFData hartree_fock(const FiniteRangeSetup& st, const std::vector<double>& gamma_hat, double mu) {
  HFData h;
  h.N = radial::integrate_samples(gamma_hat, st.mom).value;
  h.gamma_pos = to_position(st, gamma_hat);
  Eigen::VectorXd vg(h.gamma_pos.size());
  for (Eigen::Index k = 0; k < vg.size(); ++k) vg(k) = st.Vpos[static_cast<std::size_t>(k)] * h.gamma_pos(k);
  const std::vector<double> conv = to_momentum(st, vg);
  const double direct = radial::inv_two_pi_32 * st.vhat0 * h.N;
  h.mu_tilde = mu - 2.0 * direct;
  h.s.resize(conv.size());
  for (std::size_t i = 0; i < conv.size(); ++i) h.s[i] = -2.0 * (conv[i] - direct);
  return h;
}

/** @brief 1/K - 1/p^2 from t = eps - mu_tilde and d = p^2 - t, avoiding cancellation. */
inline double kernel_remainder(double T, double p2, double t, double d, double Delta) {
  const double E = std::hypot(t, Delta);
  const double K = dispersion::K_value(T, E);
  if (t <= 0.0 || !(K > 0.0)) return dispersion::inverse_K(T, E) - 1.0 / p2;
  double Kmt = Delta * Delta / (E + t);
  if (T > 0.0) {
    const double z = E / (2.0 * T);
    if (z < 20.0) {
      Kmt = K - t;
    } else {
      Kmt += E * dispersion::one_minus_tanh(z) / std::tanh(z);
    }
  }
  return (d - Kmt) / (K * p2);
}

inline std::vector<double> shifts(const FiniteRangeSetup& st, const HFData& h) {
  std::vector<double> t(st.mom.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = st.mom.shifted_square(i, h.mu_tilde) + h.s[i];
  return t;
}

inline bs::MomentumKernel momentum_kernel(const FiniteRangeSetup& st, double T, const std::vector<double>& t,
                                          const std::vector<double>& s, double mu_tilde,
                                          const std::vector<double>& Delta) {
  bs::MomentumKernel k;
  k.grid = st.mom;
  k.g.resize(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double p = st.mom.points[i];
    k.g[i] = kernel_remainder(T, p * p, t[i], mu_tilde - s[i], Delta[i]);
  }
  const double pl = st.mom.points.back();
  k.tail_c = k.g.back() * pl * pl * pl * pl;
  return k;
}

/** @brief Fermi momentum from sign changes of t, nearest to `hint`. */
inline std::optional<double> fermi_momentum(const RadialGrid& g, const std::vector<double>& t, double hint) {
  std::optional<double> best;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    if ((t[i] <= 0.0) != (t[i + 1] <= 0.0)) {
      const double x = g.points[i] + (g.points[i + 1] - g.points[i]) * t[i] / (t[i] - t[i + 1]);
      if (!best || std::abs(x - hint) < std::abs(*best - hint)) best = x;
    }
  }
  if (!best && !t.empty() && t.front() <= 0.0) best = g.points.back();
  return best;
}

inline double normal_gamma(double T, double t) {
  if (T <= 0.0) return t < 0.0 ? 1.0 : (t > 0.0 ? 0.0 : 0.5);
  return dispersion::fermi(t / T);
}

struct NormalRun {
  FiniteRangeSetup setup;
  std::vector<double> gamma_hat;
  HFData hf;
  std::vector<double> t;
  double residual = 0.0;
  int iterations = 0;
};

/** @brief Damped normal-state iteration on a fixed setup. */
inline void iterate_normal(NormalRun& run, double T, double mu, const FiniteRangeOptions& o) {
  double theta = o.theta;
  double prev = std::numeric_limits<double>::infinity();
  bool raised = false;
  for (int it = 0; it < o.max_iter; ++it) {
    run.hf = hartree_fock(run.setup, run.gamma_hat, mu);
    run.t = shifts(run.setup, run.hf);
    double res = 0.0;
    std::vector<double> next(run.t.size());
    for (std::size_t i = 0; i < next.size(); ++i) {
      next[i] = normal_gamma(T, run.t[i]);
      res = std::max(res, std::abs(next[i] - run.gamma_hat[i]));
    }
    ++run.iterations;
    run.residual = res;
    if (res < o.tol) {
      run.gamma_hat = std::move(next);
      run.hf = hartree_fock(run.setup, run.gamma_hat, mu);
      run.t = shifts(run.setup, run.hf);
      return;
    }
    if (res > prev) {
      if (theta > o.theta_floor) {
        theta = std::max(0.5 * theta, o.theta_floor);
      } else if (raised) {
        throw ConvergenceError("solve_normal_state: oscillation persists at minimum damping", res);
      } else {
        raised = true;
      }
    }
    prev = res;
    for (std::size_t i = 0; i < next.size(); ++i)
      run.gamma_hat[i] = (1.0 - theta) * run.gamma_hat[i] + theta * next[i];
  }
  throw ConvergenceError("solve_normal_state: max_iter exceeded", run.residual);
}

/** @brief Normal-state run with the momentum grid re-centred on the Fermi surface. */
inline NormalRun normal_run(double T, double mu, const RadialPotential& V, const FiniteRangeOptions& o) {
  double nu = mu;
  if (V.fourier) nu = tc::solve_nu_of_T(T, mu, std::max(V.fourier(0.0), 0.0));
  double center = nu > 0.0 ? std::sqrt(nu) : 0.0;
  NormalRun run;
  for (int rc = 0; rc <= o.max_recenter; ++rc) {
    run.setup = make_setup(V, center, T, o.delta_hint, o);
    run.gamma_hat.assign(run.setup.mom.size(), 0.0);
    for (std::size_t i = 0; i < run.gamma_hat.size(); ++i)
      run.gamma_hat[i] = normal_gamma(T, run.setup.mom.shifted_square(i, center * center));
    run.iterations = 0;
    iterate_normal(run, T, mu, o);
    const auto pf = fermi_momentum(run.setup.mom, run.t, center);
    if (!pf || center == 0.0) break;
    const double w = std::max(T, o.delta_hint) > 0.0 ? 0.125 * std::max(T, o.delta_hint) / center : 0.01 * center;
    if (std::abs(*pf - center) <= 0.05 * w) break;
    center = *pf;
  }
  return run;
}

inline void fill_common(FiniteRangeState& st, const FiniteRangeSetup& s, const HFData& h, double T, double mu) {
  st.T = T;
  st.mu = mu;
  st.grid = s.mom;
  st.pos = s.pos;
  st.mu_tilde = h.mu_tilde;
  st.eps_shift = h.s;
  st.epsilon.resize(s.mom.size());
  for (std::size_t i = 0; i < s.mom.size(); ++i)
    st.epsilon[i] = s.mom.points[i] * s.mom.points[i] + h.s[i];
}

}  // namespace detail

/** @brief Gamma eigenvalues 1/2 +- sqrt((gamma - 1/2)^2 + alpha^2) as (lower, upper). */
inline std::pair<double, double> gamma_matrix_eigenvalues(double gamma, double alpha) {
  const double r = std::hypot(gamma - 0.5, alpha);
  const double up = 0.5 + r;
  const double det = gamma * (1.0 - gamma) - alpha * alpha;
  const double lo = up > 0.0 ? det / up : 0.5 - r;
  return {lo, up};
}

namespace detail {

inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

/**
 * @brief Kinetic, pairing, entropy, exchange and direct terms.
 *
 * The pairing term uses int V |alpha|^2 = (1/2) int Delta alpha_hat, exact when
 * Delta is the transform of 2 V alpha, and is summed pointwise with the kinetic
 * term so their large-momentum tails cancel.
 */
inline double free_energy_on(const FiniteRangeSetup& s, const FiniteRangeState& st) {
  const auto& g = s.mom;
  double kin_pair = 0.0, ent = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double p = g.points[i];
    const double pair = st.Delta_p.empty() ? 0.0 : 0.5 * st.Delta_p[i] * st.alpha_hat[i];
    kin_pair += g.weights[i] * p * p * (g.shifted_square(i, st.mu) * st.gamma_hat[i] + pair);
    const double lo = std::clamp(gamma_matrix_eigenvalues(st.gamma_hat[i], st.alpha_hat[i]).first, 0.0, 1.0);
    // Trace one: the upper eigenvalue is 1 - lo.
    ent += g.weights[i] * p * p * (xlogx(lo) + (1.0 - lo) * std::log1p(-lo));
  }
  kin_pair *= radial::four_pi;
  ent *= radial::four_pi;
  const Eigen::VectorXd gpos = to_position(s, st.gamma_hat);
  double exch = 0.0;
  for (std::size_t k = 0; k < s.pos.size(); ++k) {
    const double r = s.pos.points[k];
    exch += s.pos.weights[k] * r * r * s.Vpos[k] * gpos(static_cast<Eigen::Index>(k)) * gpos(static_cast<Eigen::Index>(k));
  }
  exch *= radial::four_pi;
  const double N = radial::integrate_samples(st.gamma_hat, g).value;
  const double direct = 2.0 * radial::inv_two_pi_32 * N * N * s.vhat0;
  const double F = kin_pair + (st.T > 0.0 ? st.T * ent : 0.0) - exch + direct;
  if (!std::isfinite(F)) throw EvaluationError("free_energy: non-finite value");
  return F;
}

inline FiniteRangeState normal_state_from(const NormalRun& run, double T, double mu) {
  FiniteRangeState st;
  fill_common(st, run.setup, run.hf, T, mu);
  st.gamma_hat = run.gamma_hat;
  st.alpha_hat.assign(st.gamma_hat.size(), 0.0);
  st.Delta_p.assign(st.gamma_hat.size(), 0.0);
  st.Delta_check.assign(run.setup.pos.size(), 0.0);
  st.branch = Phase::normal;
  st.residual = run.residual;
  st.iterations = run.iterations;
  st.free_energy = free_energy_on(run.setup, st);
  st.normal_free_energy = st.free_energy;
  return st;
}

/** @brief Setup rebuilt from the grids stored in a state. */
inline FiniteRangeSetup setup_from_state(const FiniteRangeState& st, const RadialPotential& V) {
  FiniteRangeSetup s;
  s.mom = st.grid;
  s.pos = st.pos;
  s.X = bs::build_bs_matrix(V, s.pos);
  s.B = bs::bessel_table(s.pos, s.mom);
  s.Vpos.resize(s.pos.size());
  double iv = 0.0;
  for (std::size_t k = 0; k < s.pos.size(); ++k) {
    s.Vpos[k] = V(s.pos.points[k]);
    iv += s.pos.weights[k] * s.pos.points[k] * s.pos.points[k] * s.Vpos[k];
  }
  s.vhat0 = std::sqrt(2.0 / std::numbers::pi) * iv;
  return s;
}

}  // namespace detail

/** @brief Normal state (alpha = 0) by damped iteration of the Fermi-Dirac map. */
inline FiniteRangeState solve_normal_state(double T, double mu, const RadialPotential& V,
                                           const FiniteRangeOptions& o = {}) {
  if (!(T >= 0.0)) throw ParameterError("solve_normal_state: T must be >= 0");
  const auto run = detail::normal_run(T, mu, V, o);
  return detail::normal_state_from(run, T, mu);
}

/** @brief BCS-HF free energy of a state, term by term. */
inline double free_energy(const FiniteRangeState& st, const RadialPotential& V) {
  return detail::free_energy_on(detail::setup_from_state(st, V), st);
}

namespace detail {

/** @brief K^-1 applied to the position-space gap, evaluated on `pos`. */
inline Eigen::VectorXd apply_inverse_K(const FiniteRangeSetup& s, const FiniteRangeState& st,
                                       const Eigen::VectorXd& dcheck) {
  const auto nr = static_cast<Eigen::Index>(s.pos.size());
  Eigen::VectorXd u = Eigen::VectorXd::Zero(nr);
  double R = 0.0;
  for (double w : s.pos.weights) R += w;
  for (Eigen::Index a = 0; a < nr; ++a) {
    const double ra = s.pos.points[static_cast<std::size_t>(a)];
    double acc = 0.0, wsum = 0.0;
    for (Eigen::Index b = 0; b < nr; ++b) {
      const double rb = s.pos.points[static_cast<std::size_t>(b)];
      const double w = s.pos.weights[static_cast<std::size_t>(b)] / std::max(ra, rb);
      acc += w * rb * rb * dcheck(b);
      wsum += w;
    }
    // Same diagonal correction as the X-mode matrix.
    u(a) = acc + ra * ra * dcheck(a) * (1.0 + std::log(R / ra) - wsum);
  }
  std::vector<double> f(s.mom.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double p = s.mom.points[i];
    f[i] = kernel_remainder(st.T, p * p, st.shift(i), st.mu_tilde - st.eps_shift[i], std::abs(st.Delta_p[i])) *
           st.Delta_p[i];
  }
  u += to_position(s, f);
  return u;
}

inline double gap_residual_on(const FiniteRangeSetup& s, const FiniteRangeState& st) {
  const double dmax = std::accumulate(st.Delta_p.begin(), st.Delta_p.end(), 0.0,
                                      [](double m, double d) { return std::max(m, std::abs(d)); });
  if (dmax == 0.0) return 0.0;
  const Eigen::VectorXd dcheck = Eigen::Map<const Eigen::VectorXd>(st.Delta_check.data(),
                                                                    static_cast<Eigen::Index>(st.Delta_check.size()));
  const Eigen::VectorXd u = apply_inverse_K(s, st, dcheck);
  Eigen::VectorXd rho(u.size());
  for (Eigen::Index k = 0; k < u.size(); ++k) rho(k) = s.Vpos[static_cast<std::size_t>(k)] * u(k) + dcheck(k);
  const std::vector<double> R = to_momentum(s, rho);
  double m = 0.0;
  for (double r : R) m = std::max(m, std::abs(r));
  return m / dmax;
}

}  // namespace detail

/**
 * @brief Sup over the grid of |(2pi)^-3/2 Vhat * (Delta/K) + Delta|, relative to sup |Delta|.
 *
 * The convolution is evaluated as the transform of V (K^-1 Delta)^check.
 */
inline double gap_residual(const FiniteRangeState& st, const RadialPotential& V) {
  const bool zero = std::all_of(st.Delta_p.begin(), st.Delta_p.end(), [](double d) { return d == 0.0; });
  if (zero) return 0.0;
  return detail::gap_residual_on(detail::setup_from_state(st, V), st);
}

/** @brief Outcome of the pairing-instability test. */
struct InstabilityResult {
  bool unstable = false;
  double witness_eigenvalue = 1.0;
};

/** @brief Sign of the lowest eigenvalue of 1 + V^1/2 K^-1 |V|^1/2 at the normal state. */
inline InstabilityResult pairing_instability(const FiniteRangeState& normal, const RadialPotential& V) {
  if (!(normal.T > 0.0)) throw DivergenceError("pairing_instability: K^-1 is not integrable at T = 0");
  const auto s = detail::setup_from_state(normal, V);
  std::vector<double> t(s.mom.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal.shift(i);
  const std::vector<double> zero(t.size(), 0.0);
  const auto k = detail::momentum_kernel(s, normal.T, t, normal.eps_shift, normal.mu_tilde, zero);
  const auto XK = bs::build_bs_matrix_K(s.X, k, s.B);
  const auto ep = bs::smallest_eig_one_plus_jx(XK);
  if (!std::isfinite(ep.e)) throw NumericalError("pairing_instability: eigenvalue not finite");
  return {ep.e < 0.0, ep.e};
}

inline InstabilityResult pairing_instability(double T, double mu, const RadialPotential& V,
                                             const FiniteRangeOptions& o = {}) {
  return pairing_instability(solve_normal_state(T, mu, V, o), V);
}

namespace detail {

struct GapShape {
  double e = 1.0;
  Eigen::VectorXd phi;
};

/** @brief Lowest eigenpair of 1 + J X_K for the gap A * shape. */
inline GapShape gap_eigen(const FiniteRangeSetup& s, double T, const std::vector<double>& t,
                          const HFData& h, const std::vector<double>& shape, double A) {
  std::vector<double> D(shape.size());
  for (std::size_t i = 0; i < D.size(); ++i) D[i] = A * std::abs(shape[i]);
  const auto k = momentum_kernel(s, T, t, h.s, h.mu_tilde, D);
  const auto XK = bs::build_bs_matrix_K(s.X, k, s.B);
  const auto ep = bs::smallest_eig_one_plus_jx(XK);
  return {ep.e, ep.phi};
}

/** @brief Momentum-space gap from an eigenvector of 1 + J X_K, normalized to max 1. */
inline std::pair<std::vector<double>, Eigen::VectorXd> shape_from_phi(const FiniteRangeSetup& s,
                                                                      const Eigen::VectorXd& phi) {
  Eigen::VectorXd dcheck(phi.size());
  for (Eigen::Index k = 0; k < phi.size(); ++k) {
    const std::size_t kk = static_cast<std::size_t>(k);
    const double r = s.pos.points[kk];
    dcheck(k) = -std::sqrt(std::abs(s.Vpos[kk])) * phi(k) / (std::sqrt(s.pos.weights[kk]) * r);
  }
  std::vector<double> D = to_momentum(s, dcheck);
  double m = 0.0;
  for (double d : D) m = std::max(m, std::abs(d));
  if (!(m > 0.0)) throw NumericalError("solve_finite_range: gap eigenvector vanishes");
  const double sgn = D.front() < 0.0 ? -1.0 : 1.0;
  for (double& d : D) d *= sgn / m;
  dcheck *= sgn / m;
  return {D, dcheck};
}

}  // namespace detail

/**
 * @brief Self-consistent finite-range state.
 *
 * Each sweep updates the Hartree-Fock shift from gamma_hat, solves for the
 * gap amplitude at which 1 + J X_K acquires a zero eigenvalue, takes the gap
 * shape from that eigenvector and applies a damped update of gamma_hat. The
 * result is compared with the normal state and the lower free energy wins.
 */
inline FiniteRangeState solve_finite_range(double T, double mu, const RadialPotential& V,
                                           const FiniteRangeOptions& o = {}) {
  if (!(T >= 0.0)) throw ParameterError("solve_finite_range: T must be >= 0");
  if (V.fourier) {
    const auto audit = potentials::audit_assumptions_a3_a5_a6(V, 0.0, 4000);
    if (!audit.a6_sup_bound) throw ParameterError("solve_finite_range: sup |Vhat| exceeds 2 Vhat(0)");
  }
  FiniteRangeOptions on = o;
  if (T == 0.0 && on.delta_hint == 0.0) on.delta_hint = 1e-2;
  detail::NormalRun run = detail::normal_run(T, mu, V, on);
  FiniteRangeState normal = detail::normal_state_from(run, T, mu);
  if (!(o.seed_gap > 0.0)) return normal;
  const auto& s = run.setup;
  std::vector<double> gamma = run.gamma_hat;
  detail::HFData h = run.hf;
  std::vector<double> t = run.t;

  std::vector<double> zero(t.size(), 0.0);
  const double e0_bare = T > 0.0 ? detail::gap_eigen(s, T, t, h, zero, 0.0).e : -1.0;
  if (e0_bare >= 0.0) return normal;
  std::vector<double> shape(t.size(), 1.0);
  Eigen::VectorXd dcheck;
  if (T > 0.0) {
    auto ge = detail::gap_eigen(s, T, t, h, zero, 0.0);
    std::tie(shape, dcheck) = detail::shape_from_phi(s, ge.phi);
  }
  double A = o.seed_gap * std::max(T, 1e-3);
  double theta = o.theta;
  double prev = std::numeric_limits<double>::infinity();
  std::vector<double> Dp(t.size(), 0.0);
  double res = 0.0;
  int it = 0;
  bool converged = false;
  for (; it < o.max_iter; ++it) {
    auto e_of = [&](double a) { return detail::gap_eigen(s, T, t, h, shape, a).e; };
    double a_lo = 0.0, e_lo = T > 0.0 ? e_of(0.0) : -1.0;
    if (e_lo >= 0.0) return normal;
    double a_hi = std::max(A, 1e-12);
    double e_hi = e_of(a_hi);
    int guard = 0;
    while (e_hi < 0.0) {
      a_lo = a_hi;
      e_lo = e_hi;
      a_hi *= 2.0;
      e_hi = e_of(a_hi);
      if (++guard > 200) throw NumericalError("solve_finite_range: amplitude bracket failure");
    }
    if (a_lo == 0.0 && T == 0.0) {
      a_lo = a_hi;
      e_lo = e_hi;
      while (e_lo >= 0.0) {
        a_hi = a_lo;
        e_hi = e_lo;
        a_lo *= 0.5;
        e_lo = e_of(a_lo);
        if (++guard > 400) throw NumericalError("solve_finite_range: amplitude bracket failure");
      }
    }
    std::uintmax_t max_it = 200;
    const auto r = boost::math::tools::toms748_solve(e_of, a_lo, a_hi, e_lo, e_hi,
                                                     boost::math::tools::eps_tolerance<double>(48), max_it);
    A = 0.5 * (r.first + r.second);
    const auto ge = detail::gap_eigen(s, T, t, h, shape, A);
    auto [new_shape, new_dcheck] = detail::shape_from_phi(s, ge.phi);
    double shape_change = 0.0;
    for (std::size_t i = 0; i < shape.size(); ++i)
      shape_change = std::max(shape_change, std::abs(new_shape[i] - shape[i]));
    // The eigenvector belongs to the current shape; rescale the amplitude to keep Delta continuous.
    shape = std::move(new_shape);
    dcheck = std::move(new_dcheck);
    for (std::size_t i = 0; i < Dp.size(); ++i) Dp[i] = A * shape[i];
    res = 0.0;
    std::vector<double> next(t.size());
    for (std::size_t i = 0; i < next.size(); ++i) {
      next[i] = dispersion::gamma_from_shift(T, t[i], Dp[i]);
      res = std::max(res, std::abs(next[i] - gamma[i]));
    }
    if (res < o.tol && shape_change < 1e3 * o.tol) {
      gamma = std::move(next);
      converged = true;
      ++it;
      break;
    }
    if (res > prev) theta = std::max(0.5 * theta, o.theta_floor);
    prev = res;
    for (std::size_t i = 0; i < gamma.size(); ++i) gamma[i] = (1.0 - theta) * gamma[i] + theta * next[i];
    h = detail::hartree_fock(s, gamma, mu);
    t = detail::shifts(s, h);
  }
  if (!converged) throw ConvergenceError("solve_finite_range: max_iter exceeded", res);

  FiniteRangeState st;
  detail::fill_common(st, s, h, T, mu);
  st.gamma_hat = gamma;
  st.Delta_p = Dp;
  st.Delta_check.assign(dcheck.data(), dcheck.data() + dcheck.size());
  for (double& d : st.Delta_check) d *= A;
  st.alpha_hat.resize(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) st.alpha_hat[i] = dispersion::alpha_from_shift(T, t[i], Dp[i]);
  st.branch = Phase::superfluid;
  st.iterations = it;
  const detail::HFData hcheck = detail::hartree_fock(s, gamma, mu);
  double sc = std::abs(hcheck.mu_tilde - h.mu_tilde);
  for (std::size_t i = 0; i < t.size(); ++i) sc = std::max(sc, std::abs(hcheck.s[i] - h.s[i]));
  st.residual = sc;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto [lo, up] = gamma_matrix_eigenvalues(st.gamma_hat[i], st.alpha_hat[i]);
    if (lo < -1e-9 || up > 1.0 + 1e-9) throw NumericalError("solve_finite_range: state constraint 0 <= Gamma <= 1 violated");
  }
  st.gap_residual = detail::gap_residual_on(s, st);
  if (st.gap_residual > o.gap_tol)
    throw ConvergenceError("solve_finite_range: gap equation residual above tolerance", st.gap_residual);
  st.free_energy = detail::free_energy_on(s, st);
  st.normal_free_energy = normal.free_energy;
  if (normal.free_energy < st.free_energy) {
    normal.normal_free_energy = normal.free_energy;
    return normal;
  }
  return st;
}

/** @brief 1/K - 1/p^2 of a state on its momentum grid. */
inline bs::MomentumKernel momentum_kernel_of(const FiniteRangeState& st) {
  if (st.T == 0.0 && st.mu_tilde > 0.0 &&
      std::all_of(st.Delta_p.begin(), st.Delta_p.end(), [](double d) { return d == 0.0; }))
    throw DivergenceError("momentum_kernel_of: 1/K - 1/p^2 is not integrable at T = 0, Delta = 0");
  bs::MomentumKernel k;
  k.grid = st.grid;
  k.g.resize(st.grid.size());
  for (std::size_t i = 0; i < k.g.size(); ++i) {
    const double p = st.grid.points[i];
    k.g[i] = detail::kernel_remainder(st.T, p * p, st.shift(i), st.mu_tilde - st.eps_shift[i], std::abs(st.Delta_p[i]));
  }
  const double pl = st.grid.points.back();
  k.tail_c = k.g.back() * pl * pl * pl * pl;
  return k;
}

/** @brief Hilbert-Schmidt norm of the remainder kernel built from a state. */
inline bs::HSResult remainder_hs_norm(const FiniteRangeState& st, const RadialPotential& V, double q) {
  return bs::remainder_hs_norm(momentum_kernel_of(st), V, q);
}

/** @brief Relative variation (max - min)/max of |Delta(p)| over grid points in [p_lo, p_hi]. */
inline double delta_variation(const FiniteRangeState& st, double p_lo, double p_hi) {
  double mx = 0.0, mn = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < st.grid.size(); ++i) {
    const double p = st.grid.points[i];
    if (p < p_lo || p > p_hi) continue;
    const double d = std::abs(st.Delta_p[i]);
    mx = std::max(mx, d);
    mn = std::min(mn, d);
  }
  if (!(mx > 0.0)) return 0.0;
  return (mx - mn) / mx;
}

/** @brief |Delta| at p = 0 from the position-space gap. */
inline double delta_at_zero(const FiniteRangeState& st) {
  double s = 0.0;
  for (std::size_t k = 0; k < st.pos.size(); ++k) {
    const double r = st.pos.points[k];
    s += st.pos.weights[k] * r * r * st.Delta_check[k];
  }
  return std::abs(std::sqrt(2.0 / std::numbers::pi) * s);
}

}  // namespace bcshf::gap
