#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <bcshf/birman_schwinger.hpp>
#include <bcshf/cli.hpp>
#include <bcshf/critical_temperature.hpp>
#include <bcshf/dispersion.hpp>
#include <bcshf/gap_solver.hpp>
#include <bcshf/potentials.hpp>

#include "identity_checks.hpp"

using namespace bcshf;

namespace {

constexpr double pi = std::numbers::pi;
const double calV_limit = std::sqrt(2.0 / pi) / 3.0;

std::map<int, std::string>& verdicts() {
  static std::map<int, std::string> v;
  return v;
}

/** @brief Records and prints one criterion line. */
void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::ostringstream s;
  s << "criterion " << id << " " << name << ": " << (pass ? "PASS" : "FAIL") << " (" << detail << ")";
  verdicts()[id] = s.str();
  std::printf("%s\n", s.str().c_str());
  std::fflush(stdout);
  EXPECT_TRUE(pass) << s.str();
}

std::string fmt(double x) {
  char b[32];
  std::snprintf(b, sizeof b, "%.6g", x);
  return b;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

dispersion::ThermoParams params(double T, double mu, double a, double calV) {
  dispersion::ThermoParams P;
  P.T = T;
  P.mu = mu;
  P.a = a;
  P.calV = calV;
  return P;
}

/** @brief Finite-range states of the tuned family at half the contact critical temperature. */
struct FiniteSweep {
  std::vector<double> ells{0.1, 0.05, 0.025};
  std::vector<gap::FiniteRangeState> states;
  double T = 0.0;
  double seconds = 0.0;
};

const FiniteSweep& finite_sweep() {
  static const FiniteSweep sw = [] {
    FiniteSweep s;
    const auto t0 = std::chrono::steady_clock::now();
    for (double ell : s.ells) {
      const auto ex = potentials::tune_example2(-0.3, 1.0, ell);
      const double a = potentials::example2_scattering_closed(ex);
      s.T = 0.5 * tc::solve_tc(1.0, a, calV_limit).t_c;
      s.states.push_back(gap::solve_finite_range(s.T, 1.0, potentials::example2_potential(ex), {}));
    }
    s.seconds = seconds_since(t0);
    return s;
  }();
  return sw;
}

StateSamples samples_of(const gap::FiniteRangeState& st) {
  StateSamples s;
  s.T = st.T;
  for (std::size_t i = 0; i < st.grid.size(); ++i) {
    s.p.push_back(st.grid.points[i]);
    s.t.push_back(st.shift(i));
    s.Delta.push_back(st.Delta_p[i]);
    s.gamma.push_back(st.gamma_hat[i]);
    s.alpha.push_back(st.alpha_hat[i]);
  }
  return s;
}

StateSamples samples_of(const gap::EffectiveSolution& e, double T) {
  StateSamples s;
  s.T = T;
  for (std::size_t i = 0; i < e.grid.size(); ++i) {
    const double t = e.grid.shifted_square(i, e.mu_tilde);
    s.p.push_back(e.grid.points[i]);
    s.t.push_back(t);
    s.Delta.push_back(e.Delta);
    s.gamma.push_back(e.gamma_hat[i]);
    s.alpha.push_back(dispersion::alpha_from_shift(T, t, e.Delta));
  }
  return s;
}

}  // namespace

TEST(Acceptance, C01_ScatteringCrossValidation) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_shoot = 0.0, worst_bs = 0.0;
  for (double ell : {0.1, 0.05, 0.025}) {
    const auto p = potentials::make_example2(1.0, 1.0, ell);
    const auto V = potentials::example2_potential(p);
    const double ac = potentials::example2_scattering_closed(p);
    const double as = potentials::scattering_shoot(V, 2.0 * ell);
    const double ab = bs::bs_scattering_length(bs::build_bs_matrix(V, 400));
    worst_shoot = std::max(worst_shoot, std::abs(ac - as) / std::abs(ac));
    worst_bs = std::max(worst_bs, std::abs(ab - ac) / std::abs(ac));
  }
  const double secs = seconds_since(t0);
  report(1, "scattering cross-validation", worst_shoot < 1e-8 && worst_bs < 1e-3 && secs < 10.0,
         "max rel shoot " + fmt(worst_shoot) + ", max rel bs " + fmt(worst_bs) + ", " + fmt(secs) + " s");
}

TEST(Acceptance, C02_ContactLimitRate) {
  std::vector<double> res;
  for (double ell : {0.1, 0.05, 0.025, 0.0125})
    res.push_back(std::abs(potentials::example2_scattering_closed(potentials::make_example2(1.0, 1.0, ell)) + 2.0 / pi));
  bool ok = true;
  std::string d = "ratios";
  for (std::size_t i = 1; i < res.size(); ++i) {
    const double r = res[i - 1] / res[i];
    ok = ok && r >= 1.6 && r <= 2.4;
    d += " " + fmt(r);
  }
  report(2, "contact limit of the scattering length", ok, d);
}

TEST(Acceptance, C03_EigenvalueSlope) {
  const std::vector<double> ls{0.05, 0.025, 0.0125};
  std::vector<double> es;
  for (double ell : ls)
    es.push_back(bs::smallest_eig_one_plus_jx(bs::build_bs_matrix(potentials::example2_potential(potentials::make_example2(1.0, 1.0, ell)), 400)).e);
  const auto [slope, icpt] = cli::ols(ls, es);
  const double target = 4.0 / pi;
  report(3, "e_ell slope", std::abs(slope / target - 1.0) < 0.05,
         "OLS slope " + fmt(slope) + " vs " + fmt(target) + ", intercept " + fmt(icpt) + ", rel dev " + fmt(slope / target - 1.0));
}

TEST(Acceptance, C04_CriticalTemperatureAsymptotics) {
  const auto t0 = std::chrono::steady_clock::now();
  // Deviations below this are rounding in the bisection and the m-integral.
  const double resolution = 1e-10;
  std::vector<double> dev;
  double worst_res = 0.0;
  double ratio_last = 0.0;
  std::string d = "ratio-1:";
  for (double a : {-0.1, -0.07, -0.05}) {
    const auto s = tc::solve_tc(1.0, a, 0.0);
    const double r = s.t_c / tc::tc_asymptotic(s.mu_tilde_at_tc, a);
    dev.push_back(std::abs(r - 1.0));
    worst_res = std::max({worst_res, std::abs(s.residual_gap), std::abs(s.residual_mu)});
    ratio_last = r;
    d += " " + fmt(r - 1.0);
  }
  bool mono = true;
  for (std::size_t i = 1; i < dev.size(); ++i) mono = mono && dev[i] <= dev[i - 1] + resolution;
  const double secs = seconds_since(t0);
  report(4, "critical temperature asymptotics",
         mono && std::abs(ratio_last - 1.0) < 0.25 && worst_res < 1e-8 && secs < 30.0,
         d + ", monotone within " + fmt(resolution) + ", max residual " + fmt(worst_res) + ", " + fmt(secs) + " s");
}

TEST(Acceptance, C05_NoCriticalTemperatureWithoutFermiSea) {
  const std::vector<std::pair<double, double>> pts{{-0.5, -0.1}, {-1.0, -0.3}, {0.0, -0.05}, {-2.0, -1.0}, {-0.1, -0.01}};
  bool ok = true;
  for (const auto& [mu, a] : pts) ok = ok && tc::solve_tc(mu, a, 0.0).t_c == 0.0 && tc::solve_tc(mu, a, 0.3).t_c == 0.0;
  report(5, "t_c = 0 for mu <= 0", ok, "5 (mu, a) pairs, calV in {0, 0.3}");
}

TEST(Acceptance, C06_GapClosureAtCriticalTemperature) {
  bool ok = true;
  std::string d;
  for (double calV : {0.0, 0.2}) {
    const double t = tc::solve_tc(1.0, -0.3, calV).t_c;
    const auto above = gap::solve_effective(params(1.001 * t, 1.0, -0.3, calV));
    const auto below = gap::solve_effective(params(0.999 * t, 1.0, -0.3, calV));
    ok = ok && above.phase == gap::Phase::normal && below.phase == gap::Phase::superfluid && below.Delta > 0.0;
    double prev = std::numeric_limits<double>::infinity();
    bool dec = true;
    for (int k = 1; k <= 10; ++k) {
      const double D = gap::solve_effective(params(t * k / 11.0, 1.0, -0.3, calV)).Delta;
      dec = dec && D < prev && D > 0.0;
      prev = D;
    }
    ok = ok && dec;
    d += "calV=" + fmt(calV) + ": Delta(0.999 t_c)=" + fmt(below.Delta) + ", decreasing=" + (dec ? "yes" : "no") + "; ";
  }
  report(6, "gap closes at t_c", ok, d);
}

TEST(Acceptance, C07_FiniteRangeGapApproachesContactGap) {
  const auto& sw = finite_sweep();
  std::vector<double> var;
  bool ok = true;
  for (const auto& st : sw.states) {
    ok = ok && st.branch == gap::Phase::superfluid;
    var.push_back(gap::delta_variation(st, 0.0, 2.0));
  }
  for (std::size_t i = 1; i < var.size(); ++i) ok = ok && var[i] < var[i - 1];
  const auto eff = gap::solve_effective(params(sw.T, 1.0, -0.3, calV_limit));
  const double d0 = gap::delta_at_zero(sw.states.back());
  const double rel = std::abs(d0 - eff.Delta) / eff.Delta;
  ok = ok && eff.phase == gap::Phase::superfluid && rel < 0.15 && sw.seconds < 300.0;
  report(7, "finite-range gap approaches contact gap", ok,
         "variation " + fmt(var[0]) + " " + fmt(var[1]) + " " + fmt(var[2]) + ", Delta_ell(0)=" + fmt(d0) +
             " vs effective " + fmt(eff.Delta) + " (rel " + fmt(rel) + "), " + fmt(sw.seconds) + " s");
}

TEST(Acceptance, C08_IdentitySuites) {
  IdentityReport worst;
  worst.gamma_eig_min = 1.0;
  auto fold = [&](const IdentityReport& r) {
    worst.k_p = std::max(worst.k_p, r.k_p);
    worst.el_gamma_2 = std::max(worst.el_gamma_2, r.el_gamma_2);
    worst.el_gamma_3 = std::max(worst.el_gamma_3, r.el_gamma_3);
    worst.gamma_eig_min = std::min(worst.gamma_eig_min, r.gamma_eig_min);
    worst.gamma_eig_max = std::max(worst.gamma_eig_max, r.gamma_eig_max);
    worst.points += r.points;
  };
  int n_states = 0;
  for (double calV : {0.0, 0.2})
    for (double a : {-0.3, -0.5}) {
      const double t = tc::solve_tc(1.0, a, calV).t_c;
      for (double f : {0.2, 0.5, 0.9}) {
        const auto e = gap::solve_effective(params(f * t, 1.0, a, calV));
        if (e.phase != gap::Phase::superfluid) continue;
        fold(check_identities(samples_of(e, f * t)));
        ++n_states;
      }
    }
  for (const auto& st : finite_sweep().states) {
    fold(check_identities(samples_of(st)));
    ++n_states;
  }
  const bool ok = worst.k_p < 1e-9 && worst.el_gamma_2 < 1e-9 && worst.el_gamma_3 < 1e-9 &&
                  worst.gamma_eig_min >= -1e-9 && worst.gamma_eig_max <= 1.0 + 1e-9;
  report(8, "identity suites", ok,
         std::to_string(n_states) + " states, " + std::to_string(worst.points) + " points; K-p " + fmt(worst.k_p) +
             ", el2 " + fmt(worst.el_gamma_2) + ", el3 " + fmt(worst.el_gamma_3) + ", Gamma eig [" +
             fmt(worst.gamma_eig_min) + ", " + fmt(worst.gamma_eig_max) + "]");
}

TEST(Acceptance, C09_MonotonicityCertificates) {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> un(-2.0, 3.0), ut(0.05, 2.0), ud(0.01, 1.0);
  int jac_pass = 0, m_pass = 0;
  for (int k = 0; k < 20; ++k) {
    const double nu = un(rng), T = ut(rng);
    if (tc::jacobian_sign_check(nu, T, k % 2 == 0 ? 0.0 : 0.5).pass()) ++jac_pass;
  }
  for (int k = 0; k < 20; ++k) {
    const double nu = un(rng), T = ut(rng), D = ud(rng);
    const double h = 1e-4;
    const double dT = dispersion::m_integral(T * (1 + h), nu, D) - dispersion::m_integral(T * (1 - h), nu, D);
    const double dn = dispersion::m_integral(T, nu + h, D) - dispersion::m_integral(T, nu - h, D);
    const double dD = dispersion::m_integral(T, nu, D * (1 + h)) - dispersion::m_integral(T, nu, D * (1 - h));
    if (dT < 0.0 && dn > 0.0 && dD < 0.0) ++m_pass;
  }
  report(9, "monotonicity certificates", jac_pass == 20 && m_pass == 20,
         "Jacobian " + std::to_string(jac_pass) + "/20, m-integral signs " + std::to_string(m_pass) + "/20");
}

TEST(Acceptance, C10_AssumptionAudit) {
  const char* argv[] = {"bcshf", "audit", "--format", "jsonl"};
  std::ostringstream out, err;
  const int code = cli::run(4, argv, out, err);
  nlohmann::json summary;
  bool l8 = true;
  std::istringstream in(out.str());
  std::string line;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j.contains("summary")) summary = j["summary"];
    if (j.contains("lemma8_pass")) l8 = l8 && j["lemma8_pass"].get<std::int64_t>() == 1;
  }
  const double hs = summary.value("hs_ratio_spread", 1e300);
  report(10, "assumption audit", code == 0 && l8 && hs < 3.0,
         "exit " + std::to_string(code) + ", inequality (eigenvector + 20 random per ell) " + (l8 ? "holds" : "fails") +
             ", HS ratio spread " + fmt(hs) + ", e_ell slope " + fmt(summary.value("e_ell_slope", 0.0)));
}

TEST(Acceptance, C11_InstabilityBracket) {
  const auto t0 = std::chrono::steady_clock::now();
  gap::FiniteRangeOptions o;
  o.n_pos = 400;
  o.cutoff_factor = 400.0;
  auto window = [&](double ell, bool& bracketed) {
    const auto ex = potentials::tune_example2(-0.3, 1.0, ell);
    const auto V = potentials::example2_potential(ex);
    const double tcv = tc::solve_tc(1.0, potentials::example2_scattering_closed(ex), calV_limit).t_c;
    double lo = 0.5 * tcv, hi = 2.0 * tcv;
    bracketed = gap::pairing_instability(lo, 1.0, V, o).unstable && !gap::pairing_instability(hi, 1.0, V, o).unstable;
    if (!bracketed) return std::numeric_limits<double>::infinity();
    for (int k = 0; k < 16; ++k) {
      const double mid = std::sqrt(lo * hi);
      if (gap::pairing_instability(mid, 1.0, V, o).unstable) lo = mid; else hi = mid;
    }
    return std::abs(std::sqrt(lo * hi) / tcv - 1.0);
  };
  bool b0 = false;
  const double w_pre = window(0.1, b0);
  std::vector<double> w;
  bool ok = true;
  for (double ell : {0.05, 0.025, 0.0125}) {
    bool b = false;
    w.push_back(window(ell, b));
    ok = ok && b;
  }
  for (std::size_t i = 1; i < w.size(); ++i) ok = ok && w[i] < w[i - 1];
  report(11, "instability bracket narrows", ok,
         "|T_flip/T_c - 1| at ell 0.05, 0.025, 0.0125: " + fmt(w[0]) + " " + fmt(w[1]) + " " + fmt(w[2]) +
             "; ell 0.1 (pre-asymptotic): " + fmt(w_pre) + "; " + fmt(seconds_since(t0)) + " s");
}

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  const int rc = RUN_ALL_TESTS();
  int passed = 0;
  std::printf("\nacceptance summary\n");
  for (const auto& [id, line] : verdicts()) {
    std::printf("%s\n", line.c_str());
    if (line.find(": PASS") != std::string::npos) ++passed;
  }
  std::printf("%d/%zu criteria pass\n", passed, verdicts().size());
  return rc;
}
