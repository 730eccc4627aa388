#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

/** @brief Pointwise data of a converged state: momentum, eps - mu_tilde, gap, occupations. */
struct StateSamples {
  double T = 0.0;
  std::vector<double> p, t, Delta, gamma, alpha;
};

/** @brief Largest deviations of the three identities and the Gamma spectrum. */
struct IdentityReport {
  double k_p = 0.0;
  double el_gamma_2 = 0.0;
  double el_gamma_3 = 0.0;
  double gamma_eig_min = 1.0;
  double gamma_eig_max = 0.0;
  std::size_t points = 0;
};

namespace oracle {

inline double fermi(double x) { return x > 0.0 ? std::exp(-x) / (1.0 + std::exp(-x)) : 1.0 / (1.0 + std::exp(x)); }

inline double xi(double x) { return x < 1e-12 ? 1.0 - 0.5 * x : (x > 700.0 ? 0.0 : x / std::expm1(x)); }

inline double K(double T, double E) {
  const double z = E / (2.0 * T);
  if (z < 1e-8) return 2.0 * T * (1.0 + z * z / 3.0);
  return E / std::tanh(z);
}

}  // namespace oracle

/**
 * @brief Evaluates the K-p identity (multiplied by p^2) and both Euler-Lagrange
 * rewrites of gamma_hat at every sample; deviations are scaled by the largest
 * term of each identity at that point.
 */
inline IdentityReport check_identities(const StateSamples& s) {
  IdentityReport r;
  const double T = s.T;
  for (std::size_t i = 0; i < s.p.size(); ++i) {
    const double p = s.p[i], t = s.t[i], D = s.Delta[i], g = s.gamma[i], a = s.alpha[i];
    const double E = std::hypot(t, D);
    const double K = oracle::K(T, E);
    const double f = oracle::fermi(E / T);
    const double p2 = p * p;
    // p^2 (1/K - 1/p^2) = -2 gamma + 2 f + (p^2 - t - 2 T xi(E/T)) / K
    const double lhs1 = p2 / K - 1.0;
    const double third = (p2 - t - 2.0 * T * oracle::xi(E / T)) / K;
    const double rhs1 = -2.0 * g + 2.0 * f + third;
    const double sc1 = std::max({1.0, std::abs(p2 / K), std::abs(third)});
    r.k_p = std::max(r.k_p, std::abs(lhs1 - rhs1) / sc1);
    // gamma = (1 - tanh(E/2T))/2 + (E - t)/(2K)
    const double rhs2 = 0.5 * (1.0 - std::tanh(E / (2.0 * T))) + 0.5 * (E - t) / K;
    r.el_gamma_2 = std::max(r.el_gamma_2, std::abs(g - rhs2));
    // gamma = f(E) + 2 alpha^2 K / (E + t), with E + t = Delta^2/(E - t) below the Fermi surface
    double pair = 0.0;
    if (a != 0.0) {
      const double Ept = t >= 0.0 ? E + t : D * D / (E - t);
      pair = 2.0 * a * a * K / Ept;
    }
    r.el_gamma_3 = std::max(r.el_gamma_3, std::abs(g - (f + pair)));
    Eigen::Matrix2d G;
    G << g, a, a, 1.0 - g;
    const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(G).eigenvalues();
    r.gamma_eig_min = std::min(r.gamma_eig_min, ev(0));
    r.gamma_eig_max = std::max(r.gamma_eig_max, ev(1));
    ++r.points;
  }
  return r;
}
