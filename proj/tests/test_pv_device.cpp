#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mpptbench/pv_device.hpp"

using namespace mpptbench;

namespace {

const Environment kStc{1000.0, 25.0};

CellParams ideal_cell(double alpha = 1.2) {
  CellParams p;
  p.isc_stc = 0.1574;
  p.voc_stc = 0.7214;
  p.alpha_ideality = alpha;
  p.r_s = 0.0;
  p.r_sh = 1e12;
  p.i_s = saturation_current(p, kStc);
  return p;
}

// Independent root finder for the diode equation, used to cross-check the
// Newton path.
double bisect_current(const CellParams& p, const Environment& env, double v) {
  const detail::DeviceEq eq(p, env);
  const double v_cell = v / eq.n;
  double lo = -1.0, hi = eq.i_ph + 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (eq.current_residual(mid, v_cell) > 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("thermal voltage at 25 degC") {
  const double vt = thermal_voltage(25.0);
  CHECK(vt > 0.0256);
  CHECK(vt < 0.0258);
}

TEST_CASE("photocurrent") {
  CellParams p;
  p.isc_stc = 0.1574;
  p.voc_stc = 0.7214;

  SECTION("collapses to isc at STC") {
    CHECK(photocurrent(p, kStc) == Catch::Approx(0.1574).epsilon(1e-12));
  }
  SECTION("scales linearly with irradiance") {
    CHECK(photocurrent(p, Environment{500.0, 25.0}) ==
          Catch::Approx(0.0787).epsilon(1e-12));
  }
  SECTION("temperature coefficient") {
    p.k_i = 1e-4;
    CHECK(photocurrent(p, Environment{1000.0, 50.0}) ==
          Catch::Approx(0.15990).epsilon(1e-12));
  }
  SECTION("linearity in G to 1e-12 relative") {
    const double i1 = photocurrent(p, Environment{123.456, 25.0});
    const double i2 = photocurrent(p, Environment{2.0 * 123.456, 25.0});
    CHECK(i2 == Catch::Approx(2.0 * i1).epsilon(1e-12));
  }
}

TEST_CASE("saturation current") {
  CellParams p = ideal_cell(1.2);

  SECTION("STC closed form with zero coefficients") {
    const double expected =
        p.isc_stc / std::expm1(p.voc_stc / (p.alpha_ideality * thermal_voltage(25.0)));
    CHECK(saturation_current(p, kStc) == Catch::Approx(expected).epsilon(1e-12));
  }
  SECTION("regression value for the 1.2-ideality cell") {
    const double i_s = saturation_current(p, kStc);
    CHECK(i_s > 0.0);
    CHECK(i_s < 1e-9);
    // Frozen from a direct evaluation of the temperature law.
    CHECK(i_s == Catch::Approx(1.0843879000e-11).epsilon(1e-9));
  }
  SECTION("grows with temperature for negative k_v") {
    p.k_v = -2e-3;
    const double at25 = saturation_current(p, kStc);
    const double at50 = saturation_current(p, Environment{1000.0, 50.0});
    CHECK(at50 > at25);
  }
}

TEST_CASE("solve_current") {
  SECTION("ideal cell at v=0 returns exactly the photocurrent") {
    CellParams p = ideal_cell();
    p.r_sh = std::numeric_limits<double>::infinity();
    CHECK(solve_current(p, kStc, 0.0) == photocurrent(p, kStc));
  }
  SECTION("calibrated cell endpoints") {
    const CellParams& cell = reference_cell();
    CHECK(solve_current(cell, kStc, 0.0) == Catch::Approx(0.1574).margin(1.5e-3));
    CHECK(solve_current(cell, kStc, 0.7214) == Catch::Approx(0.0).margin(1e-3));
  }
  SECTION("Newton agrees with bisection across the curve") {
    const CellParams& cell = reference_cell();
    const double voc = open_circuit_voltage(cell, kStc);
    for (int k = 0; k <= 40; ++k) {
      const double v = voc * k / 40.0;
      CHECK(solve_current(cell, kStc, v) ==
            Catch::Approx(bisect_current(cell, kStc, v)).margin(1e-9));
    }
  }
  SECTION("residual is driven below 1e-12 A") {
    const CellParams& cell = reference_cell();
    const detail::DeviceEq eq(cell, kStc);
    for (double v : {0.1, 0.4, 0.6, 0.7}) {
      const double i = solve_current(cell, kStc, v);
      CHECK(std::abs(eq.current_residual(i, v)) < 1e-12);
    }
  }
}

TEST_CASE("solve_voltage inverts solve_current") {
  const CellParams& cell = reference_cell();
  const double isc = short_circuit_current(cell, kStc);

  SECTION("i=0 gives the open-circuit voltage") {
    CHECK(solve_voltage(cell, kStc, 0.0) ==
          Catch::Approx(open_circuit_voltage(cell, kStc)).margin(1e-9));
  }
  SECTION("i=isc gives 0 V") {
    CHECK(solve_voltage(cell, kStc, isc) == Catch::Approx(0.0).margin(1e-9));
  }
  SECTION("round trip on the interior") {
    for (int k = 1; k < 10; ++k) {
      const double i = isc * k / 10.0;
      const double v = solve_voltage(cell, kStc, i);
      CHECK(solve_current(cell, kStc, v) == Catch::Approx(i).margin(1e-9));
    }
  }
  SECTION("beyond isc is out of range") {
    CHECK_THROWS_AS(solve_voltage(cell, kStc, 1.2 * isc), OutOfRange);
  }
}

TEST_CASE("temperature monotonicity of voc") {
  CellParams p = ideal_cell();
  p.k_v = -2e-3;
  CHECK(open_circuit_voltage(p, Environment{1000.0, 50.0}) <
        open_circuit_voltage(p, kStc));
}

TEST_CASE("analytic slope") {
  const CellParams& cell = reference_cell();
  const double voc = open_circuit_voltage(cell, kStc);

  auto op_at = [&](double v) {
    return make_operating_point(v, solve_current(cell, kStc, v));
  };

  SECTION("slope at V=0 equals the short-circuit current") {
    const double s = analytic_slope(cell, kStc, op_at(0.0), SlopeMode::Full);
    CHECK(s == Catch::Approx(short_circuit_current(cell, kStc)).epsilon(1e-9));
  }
  SECTION("full mode matches central finite differences") {
    const double h = 1e-5;
    for (int k = 0; k < 50; ++k) {
      const double v = voc * (0.05 + 0.9 * k / 49.0);
      const double analytic = analytic_slope(cell, kStc, op_at(v), SlopeMode::Full);
      const double p_plus = (v + h) * solve_current(cell, kStc, v + h);
      const double p_minus = (v - h) * solve_current(cell, kStc, v - h);
      const double fd = (p_plus - p_minus) / (2.0 * h);
      const double scale = std::max(std::abs(fd), 0.01 * short_circuit_current(cell, kStc));
      CHECK(std::abs(analytic - fd) / scale < 1e-4);
    }
  }
  SECTION("simplified mode matches finite differences in its regime") {
    CellParams p = ideal_cell(1.1);
    const double voc_i = open_circuit_voltage(p, kStc);
    const double h = 1e-5;
    for (int k = 0; k < 50; ++k) {
      const double v = voc_i * (0.05 + 0.9 * k / 49.0);
      const auto op = make_operating_point(v, solve_current(p, kStc, v));
      const double analytic = analytic_slope(p, kStc, op, SlopeMode::Simplified);
      const double p_plus = (v + h) * solve_current(p, kStc, v + h);
      const double p_minus = (v - h) * solve_current(p, kStc, v - h);
      const double fd = (p_plus - p_minus) / (2.0 * h);
      const double scale = std::max(std::abs(fd), 0.01 * short_circuit_current(p, kStc));
      CHECK(std::abs(analytic - fd) / scale < 1e-4);
    }
  }
  SECTION("near zero at the oracle MPP, correct signs elsewhere") {
    const auto mpp = mpp_oracle(cell, kStc);
    const double s_mpp =
        analytic_slope(cell, kStc, op_at(mpp.voltage), SlopeMode::Full);
    CHECK(std::abs(s_mpp) < 1e-3 * mpp.power / mpp.voltage);
    CHECK(analytic_slope(cell, kStc, op_at(0.5 * mpp.voltage), SlopeMode::Full) > 0.0);
    CHECK(analytic_slope(cell, kStc, op_at(0.5 * (mpp.voltage + voc)),
                         SlopeMode::Full) < 0.0);
  }
}

TEST_CASE("mpp oracle") {
  SECTION("constant current source peaks at v_max") {
    const auto mpp = mpp_oracle([](double) { return 0.25; }, 2.0);
    CHECK(mpp.voltage == Catch::Approx(2.0).margin(1e-5));
    CHECK(mpp.power == Catch::Approx(0.5).margin(1e-5));
  }
  SECTION("oracle dominates every sweep sample") {
    const CellParams& cell = reference_cell();
    const double voc = open_circuit_voltage(cell, kStc);
    const auto mpp = mpp_oracle(cell, kStc);
    for (int k = 0; k < 2001; ++k) {
      const double v = (voc + 1e-6) * k / 2000.0;
      CHECK(mpp.power >= v * solve_current(cell, kStc, v) - 1e-12);
    }
  }
  SECTION("power field is voltage times current") {
    const auto mpp = mpp_oracle(reference_cell(), kStc);
    CHECK(mpp.power == mpp.voltage * mpp.current);
  }
}

TEST_CASE("calibration hits the reference datasheet") {
  const CellParams& cell = reference_cell();
  const auto d = reference_cell_datasheet();

  const double voc_m = open_circuit_voltage(cell, kStc);
  const double isc_m = short_circuit_current(cell, kStc);
  const auto mpp = mpp_oracle(cell, kStc);

  CHECK(voc_m == Catch::Approx(d.v_oc).margin(1.8e-3));
  CHECK(isc_m == Catch::Approx(d.i_sc).margin(1.5e-3));
  CHECK(mpp.voltage == Catch::Approx(d.v_mp).margin(6.5e-3));
  CHECK(mpp.power == Catch::Approx(d.p_max).margin(1.0e-3));
}

TEST_CASE("calibration is idempotent on its own terminals") {
  const CellParams& cell = reference_cell();
  const auto mpp = mpp_oracle(cell, kStc);

  Datasheet round;
  round.v_mp = mpp.voltage;
  round.i_mp = mpp.current;
  round.v_oc = open_circuit_voltage(cell, kStc);
  round.i_sc = short_circuit_current(cell, kStc);
  round.p_max = mpp.power;
  const CellParams cell2 = calibrate(round);
  const auto mpp2 = mpp_oracle(cell2, kStc);

  CHECK(mpp2.voltage == Catch::Approx(mpp.voltage).epsilon(1e-3));
  CHECK(mpp2.power == Catch::Approx(mpp.power).epsilon(1e-3));
  CHECK(open_circuit_voltage(cell2, kStc) ==
        Catch::Approx(round.v_oc).epsilon(1e-3));
  CHECK(short_circuit_current(cell2, kStc) ==
        Catch::Approx(round.i_sc).epsilon(1e-3));
}

TEST_CASE("current-scaled datasheet calibrates to the larger-area device") {
  auto d = reference_cell_datasheet();
  const double scale = 10.49 / 3.915;
  d.i_mp *= scale;
  d.i_sc *= scale;
  d.p_max *= scale;
  d.u_i_mp *= scale;
  d.u_i_sc *= scale;
  d.u_p_max *= scale;
  const CellParams big = calibrate(d);
  const auto mpp = mpp_oracle(big, kStc);
  CHECK(mpp.power == Catch::Approx(0.250).epsilon(0.03));
}

TEST_CASE("datasheet preconditions") {
  Datasheet bad = reference_cell_datasheet();
  bad.v_mp = bad.v_oc + 0.1;
  CHECK_THROWS_AS(calibrate(bad), CalibrationFailure);
}
