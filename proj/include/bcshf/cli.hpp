#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "birman_schwinger.hpp"
#include "critical_temperature.hpp"
#include "errors.hpp"
#include "gap_solver.hpp"
#include "potentials.hpp"

namespace bcshf::cli {

inline constexpr const char* version = "0.1.0";

/** @brief Every knob of a run; defaults are the documented ones. */
struct RunConfig {
  std::string command;
  std::vector<double> mu{1.0};
  std::vector<double> a{-0.05};
  std::vector<double> calV{0.0};
  std::vector<double> T;
  std::vector<double> T_rel;
  double omega = 1.0;
  double k_plus = 1.0;
  std::vector<double> ell{0.1, 0.05, 0.025};
  /// eps = coeff * ell^2; non-positive means omega/pi.
  double eps_rule = -1.0;
  std::optional<double> a_target;
  std::string mode = "effective";
  std::size_t n_bs = 400;
  std::size_t n_pos = 200;
  double cutoff_factor = 200.0;
  double tol = 1e-12;
  double fr_tol = 1e-10;
  int max_iter = 400;
  double theta = 0.5;
  double b = 0.5;
  double C = 10.0;
  double q = 0.9;
  double hs_T = 0.1;
  std::uint64_t seed = 12345;
  int random_vectors = 20;
  int flip_steps = 24;
  std::string format = "csv";
  std::string out;

  double eps_coeff() const { return eps_rule > 0.0 ? eps_rule : omega / std::numbers::pi; }

  std::vector<std::pair<std::string, std::string>> echo() const {
    auto list = [](const std::vector<double>& v) {
      std::ostringstream os;
      os.precision(17);
      for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
      return os.str();
    };
    auto num = [](double x) {
      std::ostringstream os;
      os.precision(17);
      os << x;
      return os.str();
    };
    return {{"command", command},
            {"mu", list(mu)},
            {"a", list(a)},
            {"calV", list(calV)},
            {"T", list(T)},
            {"T-rel", list(T_rel)},
            {"omega", num(omega)},
            {"k-plus", num(k_plus)},
            {"ell", list(ell)},
            {"eps-rule", num(eps_coeff())},
            {"a-target", a_target ? num(*a_target) : std::string("none")},
            {"mode", mode},
            {"n-bs", std::to_string(n_bs)},
            {"n-pos", std::to_string(n_pos)},
            {"cutoff-factor", num(cutoff_factor)},
            {"tol", num(tol)},
            {"fr-tol", num(fr_tol)},
            {"max-iter", std::to_string(max_iter)},
            {"theta", num(theta)},
            {"b", num(b)},
            {"C", num(C)},
            {"q", num(q)},
            {"hs-T", num(hs_T)},
            {"seed", std::to_string(seed)},
            {"random-vectors", std::to_string(random_vectors)},
            {"flip-steps", std::to_string(flip_steps)},
            {"format", format}};
  }
};

using Cell = std::variant<double, std::int64_t, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

struct CommandResult {
  Table table;
  int exit_code = 0;
  /// Human-readable summary lines, written to stderr.
  std::vector<std::string> summary;
  nlohmann::json report;
};

inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", x);
  return buf;
}

inline void write_csv(std::ostream& os, const Table& t, const RunConfig& c) {
  os << "# bcshf " << version << '\n';
  for (const auto& [k, v] : c.echo()) os << "# " << k << '=' << v << '\n';
  for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
  os << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) os << ',';
      std::visit([&](const auto& v) {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, double>) os << format_double(v);
        else os << v;
      }, row[i]);
    }
    os << '\n';
  }
}

inline nlohmann::json header_json(const RunConfig& c) {
  nlohmann::json h;
  h["tool"] = "bcshf";
  h["version"] = version;
  nlohmann::json cfg;
  for (const auto& [k, v] : c.echo()) cfg[k] = v;
  h["config"] = cfg;
  return h;
}

inline nlohmann::json cell_json(const Cell& c) {
  return std::visit([](const auto& v) -> nlohmann::json {
    using V = std::decay_t<decltype(v)>;
    if constexpr (std::is_same_v<V, double>) {
      if (!std::isfinite(v)) return nullptr;
      return v;
    } else {
      return v;
    }
  }, c);
}

inline void write_jsonl(std::ostream& os, const Table& t, const RunConfig& c) {
  nlohmann::json h;
  h["header"] = header_json(c);
  os << h.dump() << '\n';
  for (const auto& row : t.rows) {
    nlohmann::json r = nlohmann::json::object();
    for (std::size_t i = 0; i < row.size(); ++i) r[t.columns[i]] = cell_json(row[i]);
    os << r.dump() << '\n';
  }
}

/** @brief Worker count from BCSHF_THREADS, default 1. */
inline unsigned thread_count() {
  if (const char* e = std::getenv("BCSHF_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(e, &end, 10);
    if (end != e && v > 0) return static_cast<unsigned>(std::min<long>(v, 256));
  }
  return 1;
}

/** @brief Evaluates f(i) for i < n on a worker pool; results keep input order. */
template <class R>
std::vector<R> parallel_map(std::size_t n, const std::function<R(std::size_t)>& f) {
  std::vector<R> out(n);
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(thread_count(), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          out[i] = f(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

inline double nan() { return std::numeric_limits<double>::quiet_NaN(); }

inline potentials::Example2Params example2_for(const RunConfig& c, double ell) {
  if (c.a_target) {
    const double coeff = c.eps_rule > 0.0 ? c.eps_rule : -1.0;
    return potentials::tune_example2(*c.a_target, c.k_plus, ell, coeff);
  }
  return potentials::make_example2(c.omega, c.k_plus, ell, c.eps_coeff());
}

/** @brief Slope and intercept of an ordinary least-squares line. */
inline std::pair<double, double> ols(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return {slope, (sy - slope * sx) / n};
}

/** @brief Least-squares s, c in y = s x + c x^2. */
inline std::pair<double, double> fit_linear_quadratic(const std::vector<double>& x, const std::vector<double>& y) {
  double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x2 = x[i] * x[i];
    a11 += x2;
    a12 += x2 * x[i];
    a22 += x2 * x2;
    b1 += x[i] * y[i];
    b2 += x2 * y[i];
  }
  const double det = a11 * a22 - a12 * a12;
  return {(b1 * a22 - b2 * a12) / det, (a11 * b2 - a12 * b1) / det};
}

/** @brief Critical temperature rows over the (mu, a, calV) grid. */
inline CommandResult cmd_tc(const RunConfig& c) {
  struct P { double mu, a, V; };
  std::vector<P> pts;
  for (double mu : c.mu)
    for (double a : c.a)
      for (double V : c.calV) pts.push_back({mu, a, V});
  for (const auto& p : pts)
    if (!(p.a < 0.0) || p.V < 0.0) throw ParameterError("tc: need a < 0 and calV >= 0");
  CommandResult r;
  r.table.columns = {"mu", "a", "calV", "t_c", "mu_tilde", "residual_gap_eq", "residual_mu_eq", "asymptotic_ratio", "status"};
  auto rows = parallel_map<std::vector<Cell>>(pts.size(), [&](std::size_t i) -> std::vector<Cell> {
    const auto& p = pts[i];
    try {
      const auto s = tc::solve_tc(p.mu, p.a, p.V, std::max(c.tol, 1e-15));
      double ratio = nan();
      if (s.t_c > 0.0 && s.mu_tilde_at_tc > 0.0) ratio = s.t_c / tc::tc_asymptotic(s.mu_tilde_at_tc, p.a);
      const bool ok = std::abs(s.residual_gap) < 1e-8 && std::abs(s.residual_mu) < 1e-8;
      return {p.mu, p.a, p.V, s.t_c, s.mu_tilde_at_tc, s.residual_gap, s.residual_mu, ratio,
              std::string(s.below_floor ? "below_floor" : (ok ? "ok" : "not_converged"))};
    } catch (const std::exception& e) {
      return {p.mu, p.a, p.V, nan(), nan(), nan(), nan(), nan(), std::string("error")};
    }
  });
  for (auto& row : rows) {
    if (std::get<std::string>(row.back()) != "ok") r.exit_code = 2;
    r.table.rows.push_back(std::move(row));
  }
  return r;
}

inline std::vector<double> default_T_rel() {
  std::vector<double> v;
  for (int i = 0; i < 12; ++i) v.push_back(0.1 + 0.1 * i);
  return v;
}

/** @brief Effective or finite-range gap sweeps. */
inline CommandResult cmd_gap(const RunConfig& c) {
  CommandResult r;
  if (c.mode == "effective") {
    r.table.columns = {"mu", "a", "calV", "T", "Delta", "mu_tilde", "phase", "residual_gap_eq", "residual_mu_eq"};
    struct P { double mu, a, V, T; };
    std::vector<P> pts;
    for (double mu : c.mu)
      for (double a : c.a)
        for (double V : c.calV) {
          if (!(a < 0.0) || V < 0.0) throw ParameterError("gap: need a < 0 and calV >= 0");
          if (!c.T.empty()) {
            for (double T : c.T) pts.push_back({mu, a, V, T});
          } else {
            const double tcv = tc::solve_tc(mu, a, V).t_c;
            for (double f : c.T_rel.empty() ? default_T_rel() : c.T_rel) pts.push_back({mu, a, V, f * tcv});
          }
        }
    auto rows = parallel_map<std::vector<Cell>>(pts.size(), [&](std::size_t i) -> std::vector<Cell> {
      const auto& p = pts[i];
      dispersion::ThermoParams tp;
      tp.T = p.T;
      tp.mu = p.mu;
      tp.calV = p.V;
      tp.a = p.a;
      try {
        const auto s = gap::solve_effective(tp, std::max(c.tol, 1e-15), c.max_iter);
        return {p.mu, p.a, p.V, p.T, s.Delta, s.mu_tilde, gap::to_string(s.phase), s.residual_gap, s.residual_mu};
      } catch (const ConvergenceError&) {
        return {p.mu, p.a, p.V, p.T, nan(), nan(), std::string("not_converged"), nan(), nan()};
      }
    });
    for (auto& row : rows) {
      const auto& ph = std::get<std::string>(row[6]);
      if (ph != "normal" && ph != "superfluid") r.exit_code = 2;
      r.table.rows.push_back(std::move(row));
    }
    return r;
  }
  if (c.mode != "finite") throw ParameterError("gap: mode must be effective or finite");
  r.table.columns = {"T", "ell", "omega", "Delta_at_0", "Delta_variation", "mu_tilde", "free_energy_gap_vs_normal",
                     "branch", "gap_residual"};
  struct P { double T, ell; potentials::Example2Params ex; };
  std::vector<P> pts;
  const double mu = c.mu.front();
  const double calV_lim = std::sqrt(2.0 / std::numbers::pi) * c.k_plus * c.k_plus / 3.0;
  for (double ell : c.ell) {
    const auto ex = example2_for(c, ell);
    const double a_ell = potentials::example2_scattering_closed(ex);
    std::vector<double> Ts = c.T;
    if (Ts.empty()) {
      const double tcv = tc::solve_tc(mu, a_ell, calV_lim).t_c;
      for (double f : c.T_rel.empty() ? std::vector<double>{0.5} : c.T_rel) Ts.push_back(f * tcv);
    }
    for (double T : Ts) pts.push_back({T, ell, ex});
  }
  gap::FiniteRangeOptions o;
  o.n_pos = c.n_pos;
  o.cutoff_factor = c.cutoff_factor;
  o.tol = c.fr_tol;
  o.theta = c.theta;
  o.max_iter = c.max_iter;
  auto rows = parallel_map<std::vector<Cell>>(pts.size(), [&](std::size_t i) -> std::vector<Cell> {
    const auto& p = pts[i];
    const auto V = potentials::example2_potential(p.ex);
    try {
      const auto s = gap::solve_finite_range(p.T, mu, V, o);
      return {p.T, p.ell, p.ex.omega, gap::delta_at_zero(s), gap::delta_variation(s, 0.0, 2.0 * std::sqrt(std::max(mu, 0.0))),
              s.mu_tilde, s.free_energy - s.normal_free_energy, gap::to_string(s.branch), s.gap_residual};
    } catch (const ConvergenceError& e) {
      return {p.T, p.ell, p.ex.omega, nan(), nan(), nan(), nan(), std::string("not_converged"), e.last_residual};
    }
  });
  for (auto& row : rows) {
    if (std::get<std::string>(row[7]) == "not_converged") r.exit_code = 2;
    r.table.rows.push_back(std::move(row));
  }
  return r;
}

/** @brief Scattering lengths by closed form, shooting and Birman-Schwinger. */
inline CommandResult cmd_scatter(const RunConfig& c) {
  CommandResult r;
  r.table.columns = {"ell", "eps", "omega", "a_closed", "a_shoot", "a_bs", "limit_residual", "residual_ratio", "status"};
  auto rows = parallel_map<std::vector<Cell>>(c.ell.size(), [&](std::size_t i) -> std::vector<Cell> {
    const double ell = c.ell[i];
    try {
      const auto ex = example2_for(c, ell);
      const auto V = potentials::example2_potential(ex);
      const double ac = potentials::example2_scattering_closed(ex);
      const double as = potentials::scattering_shoot(V, 2.0 * ell);
      const double ab = bs::bs_scattering_length(bs::build_bs_matrix(V, c.n_bs));
      return {ell, ex.eps, ex.omega, ac, as, ab, ac + 2.0 / (std::numbers::pi * ex.omega), nan(), std::string("ok")};
    } catch (const ResonanceError&) {
      return {ell, nan(), c.omega, nan(), nan(), nan(), nan(), nan(), std::string("resonance")};
    }
  });
  double prev = nan();
  for (auto& row : rows) {
    const double res = std::get<double>(row[6]);
    if (std::isfinite(prev) && std::isfinite(res)) row[7] = prev / res;
    prev = res;
    if (std::get<std::string>(row[8]) != "ok") r.exit_code = 2;
    r.table.rows.push_back(std::move(row));
  }
  return r;
}

/** @brief Assumption audit over an ell sweep. */
inline CommandResult cmd_audit(const RunConfig& c) {
  CommandResult r;
  r.table.columns = {"ell", "omega", "vhat0", "sup_vhat", "a", "a3", "a5", "a6", "x_minus_norm", "trace_norm",
                     "trace_norm_coarse", "a8_certified", "e_ell", "p_ell_norm", "a10_ratio", "a10_over_sqrt_ell",
                     "near_zero_eigs", "lemma8_pass", "v_minus_l1", "hs_norm", "hs_ratio"};
  const double mu = c.mu.front();
  struct Row {
    std::vector<Cell> cells;
    bool hard_fail = false;
    double e, a10s, pn, hs, ell;
  };
  auto rows = parallel_map<Row>(c.ell.size(), [&](std::size_t i) -> Row {
    const double ell = c.ell[i];
    const auto ex = example2_for(c, ell);
    const auto V = potentials::example2_potential(ex);
    const auto a356 = potentials::audit_assumptions_a3_a5_a6(ex);
    const auto a8 = bs::audit_a8_trace_route(V, c.b, c.C, c.n_bs);
    const auto m = bs::build_bs_matrix(V, c.n_bs);
    const auto rep = bs::audit_a9_a10(m);
    bool l8 = bs::lemma8_inequality_check(rep.phi, m).holds();
    std::mt19937_64 rng(c.seed + i);
    std::normal_distribution<double> nd;
    for (int k = 0; k < c.random_vectors; ++k) {
      Eigen::VectorXd v(m.size());
      for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = nd(rng);
      v.normalize();
      l8 = l8 && bs::lemma8_inequality_check(v, m).holds();
    }
    gap::FiniteRangeOptions o;
    o.n_pos = c.n_pos;
    o.cutoff_factor = c.cutoff_factor;
    const auto normal = gap::solve_normal_state(c.hs_T, mu, V, o);
    const auto hs = gap::remainder_hs_norm(normal, V, c.q);
    Row row;
    row.ell = ell;
    row.e = rep.e_ell;
    row.a10s = rep.a10_ratio / std::sqrt(ell);
    row.pn = rep.p_ell_norm_bound;
    row.hs = hs.ratio;
    row.hard_fail = !a356.pass() || !a8.certified || !l8 || !rep.projection_ok || !rep.invertible;
    row.cells = {ell, ex.omega, a356.vhat0, a356.sup_vhat, a356.scattering_length,
                 std::int64_t{a356.a3_negative_a}, std::int64_t{a356.a5_positive_vhat0}, std::int64_t{a356.a6_sup_bound},
                 a8.x_minus_norm, a8.trace_norm, a8.trace_norm_coarse, std::int64_t{a8.certified}, rep.e_ell,
                 rep.p_ell_norm_bound, rep.a10_ratio, row.a10s, static_cast<std::int64_t>(rep.near_zero_count),
                 std::int64_t{l8}, a8.v_minus_l1, hs.norm, hs.ratio};
    return row;
  });
  std::vector<double> ls, es, a10s, pns, hss;
  bool hard = false;
  for (auto& row : rows) {
    hard = hard || row.hard_fail;
    ls.push_back(row.ell);
    es.push_back(row.e);
    a10s.push_back(row.a10s);
    pns.push_back(row.pn);
    hss.push_back(row.hs);
    r.table.rows.push_back(std::move(row.cells));
  }
  auto spread = [](const std::vector<double>& v) {
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    return *mx / *mn;
  };
  const double target = 4.0 * (c.a_target ? 1.0 : c.omega) / std::numbers::pi;
  nlohmann::json s;
  s["hard_failures"] = hard;
  bool trends = true;
  if (ls.size() >= 2) {
    const auto [slope_ols, icpt] = ols(ls, es);
    s["e_ell_slope_ols"] = slope_ols;
    s["e_ell_intercept_ols"] = icpt;
    if (ls.size() >= 3 && !c.a_target) {
      const auto [slope, curv] = fit_linear_quadratic(ls, es);
      s["e_ell_slope"] = slope;
      s["e_ell_curvature"] = curv;
      s["e_ell_slope_target"] = target;
      s["e_ell_slope_ok"] = std::abs(slope / target - 1.0) < 0.05;
      trends = trends && std::abs(slope / target - 1.0) < 0.05;
    }
    s["a10_over_sqrt_ell_spread"] = spread(a10s);
    s["p_ell_norm_spread"] = spread(pns);
    s["hs_ratio_spread"] = spread(hss);
    trends = trends && spread(a10s) < 3.0 && spread(pns) < 3.0 && spread(hss) < 3.0;
  }
  s["trends_ok"] = trends;
  r.report = s;
  r.exit_code = (hard || !trends) ? 2 : 0;
  r.summary.push_back(std::string("audit: ") + (r.exit_code == 0 ? "all checks pass" : "failures present"));
  r.summary.push_back("audit summary: " + s.dump());
  return r;
}

/** @brief Pairing-instability grid plus the empirical flip temperature per ell. */
inline CommandResult cmd_instability(const RunConfig& c) {
  CommandResult r;
  r.table.columns = {"kind", "T", "ell", "unstable", "witness_eigenvalue", "contact_tc"};
  const double mu = c.mu.front();
  const double calV_lim = std::sqrt(2.0 / std::numbers::pi) * c.k_plus * c.k_plus / 3.0;
  gap::FiniteRangeOptions o;
  o.n_pos = c.n_pos;
  o.cutoff_factor = c.cutoff_factor;
  const std::vector<double> rel = c.T_rel.empty() ? std::vector<double>{0.5, 0.8, 0.9, 1.1, 1.25, 2.0} : c.T_rel;
  auto blocks = parallel_map<std::vector<std::vector<Cell>>>(c.ell.size(), [&](std::size_t i) {
    const double ell = c.ell[i];
    const auto ex = example2_for(c, ell);
    const auto V = potentials::example2_potential(ex);
    const double a_ell = potentials::example2_scattering_closed(ex);
    const double tcv = tc::solve_tc(mu, a_ell, calV_lim).t_c;
    std::vector<std::vector<Cell>> out;
    std::vector<double> Ts = c.T;
    if (Ts.empty())
      for (double f : rel) Ts.push_back(f * tcv);
    for (double T : Ts) {
      const auto ins = gap::pairing_instability(T, mu, V, o);
      out.push_back({std::string("grid"), T, ell, std::int64_t{ins.unstable}, ins.witness_eigenvalue, tcv});
    }
    double lo = 0.5 * tcv, hi = 2.0 * tcv;
    const auto il = gap::pairing_instability(lo, mu, V, o), ih = gap::pairing_instability(hi, mu, V, o);
    if (il.unstable && !ih.unstable) {
      for (int k = 0; k < c.flip_steps; ++k) {
        const double mid = std::sqrt(lo * hi);
        if (gap::pairing_instability(mid, mu, V, o).unstable) lo = mid; else hi = mid;
      }
      const double Tf = std::sqrt(lo * hi);
      out.push_back({std::string("flip_proxy"), Tf, ell, std::int64_t{-1}, gap::pairing_instability(Tf, mu, V, o).witness_eigenvalue, tcv});
    } else {
      out.push_back({std::string("flip_proxy_missing"), nan(), ell, std::int64_t{-1}, nan(), tcv});
    }
    return out;
  });
  for (auto& b : blocks)
    for (auto& row : b) {
      if (std::get<std::string>(row[0]) == "flip_proxy_missing") r.exit_code = 2;
      r.table.rows.push_back(std::move(row));
    }
  r.summary.push_back("instability: flip_proxy rows give the empirical flip temperature, a proxy for the finite-range critical temperature");
  return r;
}

/** @brief Registers all options on the root app; subcommands fall through to it. */
inline void build_app(CLI::App& app, RunConfig& c) {
  app.set_config("--config", "", "flat key=value file; command-line flags take precedence");
  app.fallthrough();
  app.require_subcommand(1);
  app.add_option("--mu", c.mu, "chemical potential(s)")->delimiter(',');
  app.add_option("--a", c.a, "scattering length(s), negative")->delimiter(',');
  app.add_option("--calV", c.calV, "contact Hartree coupling(s), >= 0")->delimiter(',');
  app.add_option("--T", c.T, "absolute temperature(s)")->delimiter(',');
  app.add_option("--T-rel", c.T_rel, "temperatures as multiples of the critical temperature")->delimiter(',');
  app.add_option("--omega", c.omega, "well depth parameter omega");
  app.add_option("--k-plus", c.k_plus, "core wavenumber k+");
  app.add_option("--ell", c.ell, "range sweep")->delimiter(',');
  app.add_option("--eps-rule", c.eps_rule, "eps = coeff * ell^2; default omega/pi");
  app.add_option("--a-target", c.a_target, "tune omega per ell to this scattering length");
  app.add_option("--mode", c.mode, "gap mode")->check(CLI::IsMember({"effective", "finite"}));
  app.add_option("--n-bs", c.n_bs, "Nystrom points for Birman-Schwinger matrices")->check(CLI::Range(32, 4000));
  app.add_option("--n-pos", c.n_pos, "position nodes of the finite-range solver")->check(CLI::Range(32, 4000));
  app.add_option("--cutoff-factor", c.cutoff_factor, "momentum cutoff times range")->check(CLI::PositiveNumber);
  app.add_option("--tol", c.tol, "root-finding tolerance")->check(CLI::PositiveNumber);
  app.add_option("--fr-tol", c.fr_tol, "finite-range fixed-point tolerance")->check(CLI::PositiveNumber);
  app.add_option("--max-iter", c.max_iter, "iteration cap")->check(CLI::PositiveNumber);
  app.add_option("--theta", c.theta, "initial damping")->check(CLI::Range(0.0, 1.0));
  app.add_option("--b", c.b, "exponent b of the trace-norm certificate")->check(CLI::Range(0.0, 1.0));
  app.add_option("--C", c.C, "shift C of the trace-norm certificate");
  app.add_option("--q", c.q, "exponent of the remainder norm ratio")->check(CLI::Range(0.0, 1.0));
  app.add_option("--hs-T", c.hs_T, "temperature of the remainder norm")->check(CLI::PositiveNumber);
  app.add_option("--seed", c.seed, "rng seed for randomized checks");
  app.add_option("--random-vectors", c.random_vectors, "random vectors per ell in the sign-split inequality check");
  app.add_option("--flip-steps", c.flip_steps, "bisection steps for the flip temperature");
  app.add_option("--format", c.format, "csv or jsonl")->check(CLI::IsMember({"csv", "jsonl"}));
  app.add_option("--out", c.out, "output file; stdout when empty");
  const std::pair<const char*, const char*> subs[] = {
      {"tc", "critical temperature and chemical potential shift over (mu, a, calV)"},
      {"gap", "gap sweep over temperature, contact or finite-range"},
      {"scatter", "scattering length of the core-well potential by three methods"},
      {"audit", "assumption and spectral checks over a range sweep"},
      {"instability", "normal-state pairing instability and flip temperature"}};
  for (const auto& [name, desc] : subs) {
    auto* sub = app.add_subcommand(name, desc);
    sub->callback([&c, name] { c.command = name; });
  }
}

inline CommandResult dispatch(const RunConfig& c) {
  if (c.command == "tc") return cmd_tc(c);
  if (c.command == "gap") return cmd_gap(c);
  if (c.command == "scatter") return cmd_scatter(c);
  if (c.command == "audit") return cmd_audit(c);
  if (c.command == "instability") return cmd_instability(c);
  throw ParameterError("unknown command");
}

/** @brief Full CLI entry point; returns the process exit code. */
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"BCS-HF gap, critical temperature and scattering toolkit"};
  RunConfig c;
  build_app(app, c);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    bool in_sub = false;
    for (int i = 1; i < argc; ++i)
      for (const char* name : {"tc", "gap", "scatter", "audit", "instability"})
        if (std::string_view(argv[i]) == name) in_sub = true;
    if (in_sub) out << '\n' << app.get_formatter()->make_help(&app, "bcshf", CLI::AppFormatMode::Normal);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  for (auto* sub : app.get_subcommands())
    if (sub->count_all() > 0 && c.command.empty()) c.command = sub->get_name();
  CommandResult res;
  try {
    res = dispatch(c);
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  std::ofstream file;
  std::ostream* os = &out;
  if (!c.out.empty()) {
    file.open(c.out);
    if (!file) {
      err << "error: cannot open " << c.out << '\n';
      return 1;
    }
    os = &file;
  }
  if (c.format == "jsonl") {
    write_jsonl(*os, res.table, c);
    if (!res.report.is_null()) {
      nlohmann::json s;
      s["summary"] = res.report;
      *os << s.dump() << '\n';
    }
  } else {
    write_csv(*os, res.table, c);
  }
  for (const auto& line : res.summary) err << line << '\n';
  return res.exit_code;
}

}  // namespace bcshf::cli
