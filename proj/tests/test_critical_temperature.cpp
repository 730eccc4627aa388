#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include <bcshf/critical_temperature.hpp>
#include <bcshf/gap_solver.hpp>

#include "m_oracle.hpp"

using namespace bcshf;
using namespace bcshf::tc;

namespace {

constexpr double pi = std::numbers::pi;

/** @brief nu with nu + 2 calV (2pi)^-3/2 n(nu, T) = mu, by dense scan plus bisection. */
double nu_scan_oracle(double T, double mu, double calV) {
  auto F = [&](double nu) { return nu + 2.0 * calV * std::pow(2.0 * pi, -1.5) * oracle::density(nu, T) - mu; };
  double lo = mu - 5.0, hi = mu;
  double prev = lo, fprev = F(lo);
  for (int k = 1; k <= 2000; ++k) {
    const double nu = mu - 5.0 + 5.0 * k / 2000.0;
    const double f = F(nu);
    if (fprev < 0.0 && f >= 0.0) {
      lo = prev;
      hi = nu;
      break;
    }
    prev = nu;
    fprev = f;
  }
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (F(mid) < 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

dispersion::ThermoParams params(double T, double mu, double a, double calV) {
  dispersion::ThermoParams P;
  P.T = T;
  P.mu = mu;
  P.a = a;
  P.calV = calV;
  return P;
}

}  // namespace

TEST(EvalF, NoInteractionGivesIdentitySecondComponent) {
  for (double nu : {-1.0, 0.3, 2.0}) EXPECT_EQ(eval_F(nu, 0.2, 0.0).F2, nu);
}

TEST(EvalF, FirstComponentMatchesOracle) {
  const double ref = oracle::m_integral(0.1, 1.0, 0.0);
  EXPECT_NEAR(eval_F(1.0, 0.1, 0.0).F1, ref, 1e-11 * std::abs(ref));
  for (double T : {1e-3, 0.5}) EXPECT_NEAR(eval_F(1.0, T, 0.0).F1, oracle::m_integral(T, 1.0, 0.0), 1e-10);
}

TEST(EvalF, SecondComponentMatchesOracle) {
  for (double nu : {-0.5, 0.7, 2.0}) {
    const double ref = nu + 2.0 * 0.5 * std::pow(2.0 * pi, -1.5) * oracle::density(nu, 0.2);
    EXPECT_NEAR(eval_F(nu, 0.2, 0.5).F2, ref, 1e-11 * std::max(1.0, std::abs(ref)));
  }
}

TEST(EvalF, NonPositiveNuAtLowTemperature) {
  for (double nu : {-1.0, -0.1, 0.0}) EXPECT_LE(eval_F(nu, 1e-4, 0.0).F1, 0.0) << nu;
}

TEST(EvalF, RequiresPositiveTemperature) {
  EXPECT_THROW(eval_F(1.0, 0.0, 0.0), ParameterError);
}

TEST(EvalF, DivergesAsTemperatureVanishes) {
  std::vector<double> f;
  for (double T : {0.1, 0.01, 0.001}) f.push_back(eval_F(solve_nu_of_T(T, 1.0, 0.3), T, 0.3).F1);
  for (std::size_t i = 1; i < f.size(); ++i) EXPECT_GT(f[i] - f[i - 1], 0.05);
}

TEST(SolveNuOfT, NoInteractionReturnsMu) {
  EXPECT_EQ(solve_nu_of_T(0.1, 1.3, 0.0), 1.3);
}

TEST(SolveNuOfT, InteractionLowersNu) {
  for (double T : {0.05, 0.1, 1.0}) EXPECT_LT(solve_nu_of_T(T, 1.0, 0.2), 1.0);
}

TEST(SolveNuOfT, MatchesDenseScanOracle) {
  const double nu = solve_nu_of_T(0.1, 1.0, 0.5);
  EXPECT_NEAR(nu, nu_scan_oracle(0.1, 1.0, 0.5), 1e-10);
  const auto f = eval_F(nu, 0.1, 0.5);
  EXPECT_NEAR(f.F2, 1.0, 1e-12);
}

TEST(SolveTc, NonPositiveMuGivesZero) {
  for (double mu : {-0.5, -1.0, 0.0})
    for (double a : {-0.01, -0.3, -2.0}) EXPECT_EQ(solve_tc(mu, a, 0.0).t_c, 0.0);
  EXPECT_EQ(solve_tc(-0.5, -0.3, 0.4).t_c, 0.0);
}

TEST(SolveTc, RejectsNonNegativeScatteringLength) {
  EXPECT_THROW(solve_tc(1.0, 0.0, 0.0), ParameterError);
  EXPECT_THROW(solve_tc(1.0, 0.1, 0.0), ParameterError);
  EXPECT_THROW(solve_tc(1.0, -0.1, -0.1), ParameterError);
}

TEST(SolveTc, ResidualsBelowTolerance) {
  for (double calV : {0.0, 0.2, 0.5}) {
    const auto s = solve_tc(1.0, -0.3, calV);
    ASSERT_GT(s.t_c, 0.0);
    EXPECT_LT(std::abs(s.residual_gap), 1e-11);
    EXPECT_LT(std::abs(s.residual_mu), 1e-12);
    EXPECT_NEAR(oracle::m_integral(s.t_c, s.mu_tilde_at_tc, 0.0), -1.0 / (4.0 * pi * -0.3), 1e-10);
  }
}

TEST(SolveTc, WeakCouplingCloseToAsymptotic) {
  const auto s = solve_tc(1.0, -0.01, 0.0);
  ASSERT_GT(s.t_c, 0.0);
  EXPECT_FALSE(s.below_floor);
  EXPECT_NEAR(s.t_c / tc_asymptotic(1.0, -0.01), 1.0, 0.15);
}

TEST(SolveTc, AsymptoticRatioApproachesOne) {
  for (double a : {-0.1, -0.07, -0.05})
    EXPECT_NEAR(solve_tc(1.0, a, 0.0).t_c / tc_asymptotic(1.0, a), 1.0, 1e-10) << a;
  std::vector<double> dev;
  for (double a : {-1.0, -0.6, -0.4, -0.25}) dev.push_back(std::abs(solve_tc(1.0, a, 0.0).t_c / tc_asymptotic(1.0, a) - 1.0));
  for (std::size_t i = 1; i < dev.size(); ++i) EXPECT_LT(dev[i], dev[i - 1]) << i;
}

TEST(SolveTc, DecreasesAsScatteringLengthApproachesZero) {
  double prev = std::numeric_limits<double>::infinity();
  for (double a : {-1.0, -0.3, -0.1, -0.05, -0.02, -0.01}) {
    const double t = solve_tc(1.0, a, 0.0).t_c;
    EXPECT_LT(t, prev) << a;
    prev = t;
  }
}

TEST(SolveTc, NonIncreasingInInteraction) {
  const double t0 = solve_tc(1.0, -0.3, 0.0).t_c;
  const double t1 = solve_tc(1.0, -0.3, 0.2).t_c;
  const double t2 = solve_tc(1.0, -0.3, 0.5).t_c;
  EXPECT_LE(t1, t0);
  EXPECT_LE(t2, t1);
}

TEST(SolveTc, ConsistentWithGapSolver) {
  for (double calV : {0.0, 0.2}) {
    const double t = solve_tc(1.0, -0.3, calV).t_c;
    EXPECT_EQ(gap::solve_effective(params(t * (1.0 + 1e-3), 1.0, -0.3, calV)).phase, gap::Phase::normal);
    const auto below = gap::solve_effective(params(t * (1.0 - 1e-3), 1.0, -0.3, calV));
    EXPECT_EQ(below.phase, gap::Phase::superfluid);
    EXPECT_GT(below.Delta, 0.0);
  }
}

TEST(TcAsymptotic, FormulaValue) {
  const double expected = (8.0 / pi) * std::exp(std::numbers::egamma - 2.0) * std::exp(-50.0 * pi);
  EXPECT_NEAR(tc_asymptotic(1.0, -0.01), expected, 1e-12 * expected);
  EXPECT_GT(tc_asymptotic(1.0, -0.01), 0.0);
}

TEST(TcAsymptotic, ScaleCovariance) {
  for (double mt : {0.25, 1.0, 4.0})
    for (double a : {-0.1, -0.5}) EXPECT_NEAR(tc_asymptotic(mt, a), mt * tc_asymptotic(1.0, a * std::sqrt(mt)), 1e-13 * tc_asymptotic(mt, a));
}

TEST(TcAsymptotic, RejectsInvalidArguments) {
  EXPECT_THROW(tc_asymptotic(-1.0, -0.1), ParameterError);
  EXPECT_THROW(tc_asymptotic(1.0, 0.1), ParameterError);
}

TEST(JacobianSigns, RandomPoints) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> un(-2.0, 3.0), ut(0.05, 2.0);
  for (int k = 0; k < 20; ++k) {
    const double nu = un(rng), T = ut(rng), calV = k % 2 == 0 ? 0.0 : 0.5;
    const auto r = jacobian_sign_check(nu, T, calV);
    EXPECT_TRUE(r.pass()) << "nu=" << nu << " T=" << T << " calV=" << calV;
    EXPECT_EQ(r.f2_T_nonstrict, calV == 0.0);
    EXPECT_GT(r.det, 0.0);
  }
}

TEST(JacobianSigns, NegativeNuBranch) {
  for (double nu : {-2.0, -0.5, -0.01}) EXPECT_TRUE(jacobian_sign_check(nu, 0.3, 0.5).pass()) << nu;
}

TEST(JacobianSigns, StableUnderStepHalving) {
  const auto a = jacobian_sign_check(0.8, 0.3, 0.5, 1e-3);
  const auto b = jacobian_sign_check(0.8, 0.3, 0.5, 5e-4);
  EXPECT_NEAR(a.dF1_dnu, b.dF1_dnu, 1e-5 * std::abs(b.dF1_dnu));
  EXPECT_NEAR(a.dF1_dT, b.dF1_dT, 1e-5 * std::abs(b.dF1_dT));
  EXPECT_NEAR(a.dF2_dnu, b.dF2_dnu, 1e-5 * std::abs(b.dF2_dnu));
  EXPECT_NEAR(a.dF2_dT, b.dF2_dT, 1e-5 * std::abs(b.dF2_dT));
}
