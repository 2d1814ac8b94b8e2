#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "mpptbench/errors.hpp"

namespace mpptbench {

inline constexpr double k_boltzmann = 1.380649e-23;       // J/K
inline constexpr double k_electron_charge = 1.602176634e-19;  // C
inline constexpr double k_celsius_to_kelvin = 273.15;

/// Thermal voltage kT/q at a cell temperature in degrees Celsius.
inline double thermal_voltage(double temp_c) {
  return k_boltzmann * (temp_c + k_celsius_to_kelvin) / k_electron_charge;
}

struct Environment {
  double irradiance = 1000.0;   // W/m^2
  double temperature = 25.0;    // degrees C

  void validate() const {
    if (!(irradiance >= 0.0)) throw DegenerateParams("irradiance must be >= 0");
  }
};

/// Electrical parameters of one PV cell, or of a module lumped from
/// n_series_cells identical cells (voltage scales by n, current unchanged).
struct CellParams {
  double isc_stc = 0.0;        // A, short-circuit current at STC
  double voc_stc = 0.0;        // V, per-cell open-circuit voltage at STC
  double i_s = 0.0;            // A, diode saturation current at reference
  double alpha_ideality = 1.0; // diode ideality factor
  double r_s = 0.0;            // ohm, per-cell series resistance
  double r_sh = 1e9;           // ohm, per-cell shunt resistance
  double k_i = 0.0;            // A/degC, current temperature coefficient
  double k_v = 0.0;            // V/degC, voltage temperature coefficient
  double t_stc = 25.0;         // degC, reference temperature
  double g_stc = 1000.0;       // W/m^2, reference irradiance
  int n_series_cells = 1;

  void validate() const {
    if (!(isc_stc > 0.0)) throw DegenerateParams("isc_stc must be > 0");
    if (!(voc_stc > 0.0)) throw DegenerateParams("voc_stc must be > 0");
    if (!(r_s >= 0.0)) throw DegenerateParams("r_s must be >= 0");
    if (!(r_sh > 0.0)) throw DegenerateParams("r_sh must be > 0");
    // High fill-factor cells need sub-unity ideality to reproduce their
    // measured V_mp/V_oc ratio, so the lower bound sits below 1.
    if (!(alpha_ideality > 0.4 && alpha_ideality <= 2.5))
      throw DegenerateParams("alpha_ideality out of range");
    if (t_stc != 25.0) throw DegenerateParams("t_stc must be 25 degC");
    if (g_stc != 1000.0) throw DegenerateParams("g_stc must be 1000 W/m^2");
    if (n_series_cells < 1) throw DegenerateParams("n_series_cells must be >= 1");
  }
};

struct OperatingPoint {
  double voltage = 0.0;  // V
  double current = 0.0;  // A
  double power = 0.0;    // W, always voltage * current
};

inline OperatingPoint make_operating_point(double v, double i) {
  return OperatingPoint{v, i, v * i};
}

/// Photocurrent at the given irradiance and temperature.
inline double photocurrent(const CellParams& p, const Environment& env) {
  return (p.isc_stc + p.k_i * (env.temperature - p.t_stc)) * env.irradiance / p.g_stc;
}

/// Temperature-corrected diode saturation current.
inline double saturation_current(const CellParams& p, const Environment& env) {
  const double dt = env.temperature - p.t_stc;
  const double a_vt = p.alpha_ideality * thermal_voltage(env.temperature);
  const double voc_t = p.voc_stc + p.k_v * dt;
  const double denom = std::expm1(voc_t / a_vt);
  if (!(denom > 0.0) || !std::isfinite(denom))
    throw DegenerateParams("saturation current denominator degenerate");
  return (p.isc_stc + p.k_i * dt) / denom;
}

namespace detail {

// Clamp diode exponent arguments so pathological parameter sets saturate
// instead of producing inf/nan inside the solvers.
inline double safe_exp(double x) { return std::exp(std::min(x, 600.0)); }
inline double safe_expm1(double x) { return std::expm1(std::min(x, 600.0)); }

/// Per-(params, environment) working set for the diode equation, with the
/// series-cell lumping folded in: all voltages below are per-cell.
struct DeviceEq {
  double i_ph;   // A
  double i_sat;  // A
  double a_vt;   // V, ideality * thermal voltage
  double r_s;    // ohm
  double r_sh;   // ohm
  double n;      // series cell count as double

  DeviceEq(const CellParams& p, const Environment& env)
      : i_ph(photocurrent(p, env)),
        i_sat(saturation_current(p, env)),
        a_vt(p.alpha_ideality * thermal_voltage(env.temperature)),
        r_s(p.r_s),
        r_sh(p.r_sh),
        n(static_cast<double>(p.n_series_cells)) {}

  // f(i) = i_ph - i_sat*(exp(u/a_vt)-1) - u/r_sh - i with u = v_cell + i*r_s.
  double current_residual(double i, double v_cell) const {
    const double u = v_cell + i * r_s;
    return i_ph - i_sat * safe_expm1(u / a_vt) - u / r_sh - i;
  }

  double current_residual_deriv(double i, double v_cell) const {
    const double u = v_cell + i * r_s;
    return -i_sat * (r_s / a_vt) * safe_exp(u / a_vt) - r_s / r_sh - 1.0;
  }

  // Solves i_sat*(exp(u/a_vt)-1) + u/r_sh = rhs for u (monotone increasing).
  double solve_diode_node(double rhs) const {
    double lo, hi;
    if (rhs > 0.0) {
      lo = 0.0;
      hi = a_vt * std::log1p(rhs / i_sat) + a_vt;
    } else {
      hi = 0.0;
      lo = (rhs - i_sat) * r_sh;
    }
    auto g = [&](double u) { return i_sat * safe_expm1(u / a_vt) + u / r_sh; };
    double u = 0.5 * (lo + hi);
    if (rhs > 0.0) u = a_vt * std::log1p(rhs / i_sat);  // shunt-free estimate
    for (int it = 0; it < 100; ++it) {
      const double gu = g(u) - rhs;
      if (std::abs(gu) < 1e-15 * std::max(1.0, std::abs(rhs))) return u;
      if (gu > 0.0) hi = u; else lo = u;
      const double dg = (i_sat / a_vt) * safe_exp(u / a_vt) + 1.0 / r_sh;
      double next = u - gu / dg;
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - u) < 1e-16 * std::max(1.0, std::abs(u))) return next;
      u = next;
    }
    return u;
  }
};

}  // namespace detail

/// Terminal current at device voltage v, solving the implicit diode equation
/// by damped Newton iteration with a bisection safeguard. The residual is
/// driven below 1e-12 A; the solution is unique because the residual is
/// strictly decreasing in current.
inline double solve_current(const CellParams& p, const Environment& env, double v) {
  const detail::DeviceEq eq(p, env);
  const double v_cell = v / eq.n;
  if (eq.r_s == 0.0) {
    return eq.i_ph - eq.i_sat * detail::safe_expm1(v_cell / eq.a_vt) - v_cell / eq.r_sh;
  }

  double hi = std::max(eq.i_ph, 0.0);  // residual(hi) <= 0 for v >= 0
  double lo = std::min(0.0, hi);
  double step = std::max(0.1 * std::abs(eq.i_ph), 1e-3);
  int guard = 0;
  while (eq.current_residual(lo, v_cell) <= 0.0) {
    lo -= step;
    step *= 2.0;
    if (++guard > 200) throw NoConvergence("cannot bracket diode current");
  }
  if (eq.current_residual(hi, v_cell) > 0.0) {
    step = std::max(0.1 * std::abs(eq.i_ph), 1e-3);
    while (eq.current_residual(hi, v_cell) > 0.0) {
      hi += step;
      step *= 2.0;
      if (++guard > 400) throw NoConvergence("cannot bracket diode current");
    }
  }

  double x = std::clamp(eq.current_residual(0.0, v_cell) != 0.0
                            ? eq.i_ph - eq.i_sat * detail::safe_expm1(v_cell / eq.a_vt) -
                                  v_cell / eq.r_sh
                            : 0.0,
                        lo, hi);
  for (int it = 0; it < 100; ++it) {
    const double fx = eq.current_residual(x, v_cell);
    if (std::abs(fx) < 1e-12) return x;
    if (fx > 0.0) lo = x; else hi = x;
    const double dfx = eq.current_residual_deriv(x, v_cell);
    double next = x - fx / dfx;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    x = next;
  }
  throw NoConvergence("diode current iteration exceeded 100 steps");
}

/// Device terminal voltage at a given current (monotone inverse of
/// solve_current). Throws OutOfRange when the current exceeds the
/// short-circuit current, i.e. the terminal voltage would be negative.
inline double solve_voltage(const CellParams& p, const Environment& env, double i) {
  const detail::DeviceEq eq(p, env);
  const double u = eq.solve_diode_node(eq.i_ph - i);
  double v_cell = u - i * eq.r_s;
  if (v_cell < -1e-9)
    throw OutOfRange("current exceeds short-circuit current");
  if (v_cell < 0.0) v_cell = 0.0;
  return eq.n * v_cell;
}

/// Open-circuit voltage of the device at the given environment.
inline double open_circuit_voltage(const CellParams& p, const Environment& env) {
  const detail::DeviceEq eq(p, env);
  if (eq.i_ph <= 0.0) return 0.0;
  return eq.n * eq.solve_diode_node(eq.i_ph);
}

inline double short_circuit_current(const CellParams& p, const Environment& env) {
  return solve_current(p, env, 0.0);
}

enum class SlopeMode { Full, Simplified };

/// Analytic dP/dV at an operating point on the device curve. Full mode keeps
/// the series/shunt terms; Simplified is the r_s -> 0, r_sh -> inf limit and
/// only needs the voltage of the operating point.
inline double analytic_slope(const CellParams& p, const Environment& env,
                             const OperatingPoint& op, SlopeMode mode) {
  const detail::DeviceEq eq(p, env);
  const double v_cell = op.voltage / eq.n;
  if (mode == SlopeMode::Simplified) {
    const double e = detail::safe_exp(v_cell / eq.a_vt);
    const double i_simple = eq.i_ph - eq.i_sat * (e - 1.0);
    const double didv = -(eq.i_sat / eq.a_vt) * e / eq.n;
    return i_simple + op.voltage * didv;
  }
  const double u = v_cell + op.current * eq.r_s;
  const double e = detail::safe_exp(u / eq.a_vt);
  const double a = (eq.i_sat / eq.a_vt) * e + 1.0 / eq.r_sh;
  const double didv = -(a / (1.0 + eq.r_s * a)) / eq.n;
  return op.current + op.voltage * didv;
}

/// Global maximum of P(V) = V * I(V) on [0, v_max]: a 2001-point uniform
/// sweep picks the best bracket, then golden-section refinement narrows the
/// maximizer to better than 1e-6 V. For multimodal curves this returns the
/// global peak resolved by the sweep.
inline OperatingPoint mpp_oracle(const std::function<double(double)>& current_at_v,
                                 double v_max) {
  if (!(v_max > 0.0)) return make_operating_point(0.0, current_at_v(0.0));
  constexpr int n_sweep = 2001;
  double best_v = 0.0, best_p = -std::numeric_limits<double>::infinity();
  int best_idx = 0;
  for (int k = 0; k < n_sweep; ++k) {
    const double v = v_max * static_cast<double>(k) / (n_sweep - 1);
    const double pwr = v * current_at_v(v);
    if (pwr > best_p) {
      best_p = pwr;
      best_v = v;
      best_idx = k;
    }
  }
  const double dv = v_max / (n_sweep - 1);
  double a = (best_idx > 0) ? best_v - dv : best_v;
  double b = (best_idx < n_sweep - 1) ? best_v + dv : best_v;

  const double gr = (1.0 + std::sqrt(5.0)) / 2.0;
  auto power_at = [&](double v) { return v * current_at_v(v); };
  while (b - a > 1e-6) {
    const double c = b - (b - a) / gr;
    const double d = a + (b - a) / gr;
    if (power_at(c) > power_at(d)) b = d; else a = c;
  }
  const double v_ref = 0.5 * (a + b);
  const double p_ref = power_at(v_ref);
  const double v_star = (p_ref >= best_p) ? v_ref : best_v;
  return make_operating_point(v_star, current_at_v(v_star));
}

inline OperatingPoint mpp_oracle(const CellParams& p, const Environment& env) {
  return mpp_oracle([&](double v) { return solve_current(p, env, v); },
                    open_circuit_voltage(p, env) + 1e-6);
}

/// Terminal data from a measured I-V sheet. Uncertainty fields set to zero
/// fall back to 1% of the corresponding value when used as fit targets.
struct Datasheet {
  double v_mp = 0.0;   // V
  double i_mp = 0.0;   // A
  double v_oc = 0.0;   // V
  double i_sc = 0.0;   // A
  double p_max = 0.0;  // W
  double u_v_mp = 0.0, u_i_mp = 0.0, u_v_oc = 0.0, u_i_sc = 0.0, u_p_max = 0.0;
};

/// The bundled reference cell: a high fill-factor c-Si cell measured at STC.
inline Datasheet reference_cell_datasheet() {
  Datasheet d;
  d.v_mp = 0.65035;
  d.i_mp = 0.1435;
  d.v_oc = 0.7214;
  d.i_sc = 0.1574;
  d.p_max = 0.0933;
  d.u_v_mp = 6.5e-3;
  d.u_i_mp = 1.435e-3;
  d.u_v_oc = 1.8e-3;
  d.u_i_sc = 1.5e-3;
  d.u_p_max = 1.0e-3;
  return d;
}

namespace detail {

struct FitTargets {
  double v_mp, i_mp, v_oc, i_sc, p_max;
  double s_v_mp, s_i_mp, s_v_oc, s_i_sc, s_p_max;  // normalizers

  explicit FitTargets(const Datasheet& d)
      : v_mp(d.v_mp), i_mp(d.i_mp), v_oc(d.v_oc), i_sc(d.i_sc), p_max(d.p_max),
        s_v_mp(d.u_v_mp > 0 ? d.u_v_mp : 0.01 * d.v_mp),
        s_i_mp(d.u_i_mp > 0 ? d.u_i_mp : 0.01 * d.i_mp),
        s_v_oc(d.u_v_oc > 0 ? d.u_v_oc : 0.01 * d.v_oc),
        s_i_sc(d.u_i_sc > 0 ? d.u_i_sc : 0.01 * d.i_sc),
        s_p_max(d.u_p_max > 0 ? d.u_p_max : 0.01 * d.p_max) {}
};

inline CellParams make_candidate(const Datasheet& d, double alpha, double rs,
                                 double rsh) {
  const Environment stc{1000.0, 25.0};
  CellParams p;
  p.isc_stc = d.i_sc;
  p.voc_stc = d.v_oc;
  p.alpha_ideality = alpha;
  p.r_s = rs;
  p.r_sh = rsh;
  p.k_i = 5e-4 * d.i_sc;    // +0.05 %/degC, typical c-Si
  p.k_v = -2.5e-3 * d.v_oc; // -0.25 %/degC
  p.n_series_cells = 1;
  p.i_s = saturation_current(p, stc);
  // Nudge the endpoint parameters so the modeled V_oc and I_sc land on the
  // sheet despite the shunt/series loading.
  for (int it = 0; it < 3; ++it) {
    p.voc_stc += d.v_oc - open_circuit_voltage(p, stc);
    p.isc_stc += d.i_sc - short_circuit_current(p, stc);
    p.i_s = saturation_current(p, stc);
  }
  return p;
}

// Worst normalized terminal mismatch of a candidate against the sheet.
inline double fit_residual(const CellParams& p, const FitTargets& t,
                           int sweep_points) {
  const Environment stc{1000.0, 25.0};
  const double voc_m = open_circuit_voltage(p, stc);
  const double isc_m = short_circuit_current(p, stc);

  double best_v = 0.0, best_pwr = -1.0;
  for (int k = 0; k < sweep_points; ++k) {
    const double v = voc_m * static_cast<double>(k) / (sweep_points - 1);
    const double pwr = v * solve_current(p, stc, v);
    if (pwr > best_pwr) { best_pwr = pwr; best_v = v; }
  }
  const double gr = (1.0 + std::sqrt(5.0)) / 2.0;
  double a = std::max(0.0, best_v - voc_m / (sweep_points - 1));
  double b = std::min(voc_m, best_v + voc_m / (sweep_points - 1));
  while (b - a > 1e-7) {
    const double c = b - (b - a) / gr;
    const double d = a + (b - a) / gr;
    const double pc = c * solve_current(p, stc, c);
    const double pd = d * solve_current(p, stc, d);
    if (pc > pd) b = d; else a = c;
  }
  const double vmp_m = 0.5 * (a + b);
  const double imp_m = solve_current(p, stc, vmp_m);
  const double pmax_m = vmp_m * imp_m;

  double r = std::abs(voc_m - t.v_oc) / t.s_v_oc;
  r = std::max(r, std::abs(isc_m - t.i_sc) / t.s_i_sc);
  r = std::max(r, std::abs(vmp_m - t.v_mp) / t.s_v_mp);
  r = std::max(r, std::abs(imp_m - t.i_mp) / t.s_i_mp);
  r = std::max(r, std::abs(pmax_m - t.p_max) / t.s_p_max);
  return r;
}

}  // namespace detail

/// Fits (alpha, r_s, r_sh) so the modeled terminal quantities match the
/// datasheet within its stated uncertainties, with the saturation current
/// pinned by the open-circuit condition. Deterministic: a fixed coarse grid
/// followed by shrinking pattern-search refinement.
inline CellParams calibrate(const Datasheet& d) {
  if (!(d.v_mp > 0 && d.v_mp < d.v_oc && d.i_mp > 0 && d.i_mp < d.i_sc))
    throw CalibrationFailure("datasheet violates 0 < v_mp < v_oc, 0 < i_mp < i_sc");
  const detail::FitTargets targets(d);

  const double alpha_lo = 0.45, alpha_hi = 2.0;
  double best_alpha = 1.0, best_rs = 0.0, best_rsh = 1e4;
  double best_r = std::numeric_limits<double>::infinity();
  const double rs_scale = (d.v_oc - d.v_mp) / d.i_mp;  // natural series-loss scale
  static constexpr std::array<double, 9> rsh_grid = {
      20.0, 50.0, 100.0, 200.0, 500.0, 1000.0, 3000.0, 1e4, 1e5};
  for (int ia = 0; ia <= 29; ++ia) {
    const double alpha = alpha_lo + (alpha_hi - alpha_lo) * ia / 29.0;
    for (int ir = 0; ir <= 10; ++ir) {
      const double rs = rs_scale * ir / 10.0;
      for (double rsh_rel : rsh_grid) {
        const double rsh = rsh_rel * d.v_oc / d.i_sc;
        const CellParams cand = detail::make_candidate(d, alpha, rs, rsh);
        const double r = detail::fit_residual(cand, targets, 201);
        if (r < best_r) {
          best_r = r;
          best_alpha = alpha;
          best_rs = rs;
          best_rsh = rsh;
        }
      }
    }
  }

  // Pattern search on (alpha, r_s, log10 r_sh).
  double step_a = 0.03, step_rs = 0.05 * rs_scale, step_lr = 0.15;
  double lr = std::log10(best_rsh);
  best_r = detail::fit_residual(detail::make_candidate(d, best_alpha, best_rs,
                                                       std::pow(10.0, lr)),
                                targets, 2001);
  for (int it = 0; it < 400 && step_a > 1e-5; ++it) {
    bool improved = false;
    const std::array<std::array<double, 3>, 6> moves = {{
        {step_a, 0, 0}, {-step_a, 0, 0},
        {0, step_rs, 0}, {0, -step_rs, 0},
        {0, 0, step_lr}, {0, 0, -step_lr}}};
    for (const auto& m : moves) {
      const double a2 = std::clamp(best_alpha + m[0], alpha_lo, alpha_hi);
      const double rs2 = std::max(0.0, best_rs + m[1]);
      const double lr2 = std::clamp(lr + m[2], 0.5, 7.0);
      const double r = detail::fit_residual(
          detail::make_candidate(d, a2, rs2, std::pow(10.0, lr2)), targets, 2001);
      if (r < best_r) {
        best_r = r;
        best_alpha = a2;
        best_rs = rs2;
        lr = lr2;
        improved = true;
      }
    }
    if (!improved) {
      step_a *= 0.5;
      step_rs *= 0.5;
      step_lr *= 0.5;
    }
  }

  if (best_r > 1.0)
    throw CalibrationFailure("calibration missed targets, best residual " +
                             std::to_string(best_r) + " (normalized)");
  return detail::make_candidate(d, best_alpha, best_rs, std::pow(10.0, lr));
}

/// Calibrated parameters of the bundled reference cell, memoized per process.
inline const CellParams& reference_cell() {
  static const CellParams cell = calibrate(reference_cell_datasheet());
  return cell;
}

}  // namespace mpptbench
