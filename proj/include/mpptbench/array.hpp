#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mpptbench/errors.hpp"
#include "mpptbench/pv_device.hpp"

namespace mpptbench {

struct ArrayNode;

struct DeviceNode {
  CellParams cell;
  Environment env;
};
struct SeriesNode {
  std::vector<ArrayNode> children;
};
struct ParallelNode {
  std::vector<ArrayNode> children;
};
struct BypassedNode {
  std::vector<ArrayNode> child;  // exactly one element
};

/// Recursive composition tree: a device with its own environment, series or
/// parallel groups, or a subtree shunted by an ideal bypass diode (0 V drop).
/// Parallel children are decoupled by ideal blocking diodes, so a child never
/// sinks reverse current.
struct ArrayNode {
  std::variant<DeviceNode, SeriesNode, ParallelNode, BypassedNode> v;
};

inline ArrayNode device(const CellParams& cell, const Environment& env) {
  return ArrayNode{DeviceNode{cell, env}};
}
inline ArrayNode series(std::vector<ArrayNode> children) {
  if (children.empty()) throw Error("series node needs at least one child");
  return ArrayNode{SeriesNode{std::move(children)}};
}
inline ArrayNode parallel(std::vector<ArrayNode> children) {
  if (children.empty()) throw Error("parallel node needs at least one child");
  return ArrayNode{ParallelNode{std::move(children)}};
}
inline ArrayNode bypassed(ArrayNode child) {
  BypassedNode b;
  b.child.push_back(std::move(child));
  return ArrayNode{std::move(b)};
}

inline double current_at(const ArrayNode& node, double v);
inline double voltage_at(const ArrayNode& node, double i);

/// Open-circuit voltage of the whole subtree.
inline double open_circuit_voltage(const ArrayNode& node) {
  if (const auto* d = std::get_if<DeviceNode>(&node.v))
    return open_circuit_voltage(d->cell, d->env);
  if (const auto* s = std::get_if<SeriesNode>(&node.v)) {
    double sum = 0.0;
    for (const auto& c : s->children) sum += open_circuit_voltage(c);
    return sum;
  }
  if (const auto* p = std::get_if<ParallelNode>(&node.v)) {
    double m = 0.0;
    for (const auto& c : p->children) m = std::max(m, open_circuit_voltage(c));
    return m;
  }
  return std::max(0.0, open_circuit_voltage(std::get<BypassedNode>(node.v).child.front()));
}

namespace detail {

// Largest current the subtree can carry while voltage_at stays defined.
// A bypass diode takes over beyond its child's limit, hence infinity.
inline double carry_limit(const ArrayNode& node) {
  if (const auto* d = std::get_if<DeviceNode>(&node.v))
    return short_circuit_current(d->cell, d->env);
  if (const auto* s = std::get_if<SeriesNode>(&node.v)) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& c : s->children) m = std::min(m, carry_limit(c));
    return m;
  }
  if (const auto* p = std::get_if<ParallelNode>(&node.v)) {
    double sum = 0.0;
    for (const auto& c : p->children) sum += carry_limit(c);
    return sum;
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Short-circuit current of the subtree (current drawn at 0 V terminals).
inline double short_circuit_current(const ArrayNode& node) {
  return current_at(node, 0.0);
}

/// Voltage across the subtree at a given series current. Series nodes sum
/// child voltages, parallel nodes invert their summed current by bisection,
/// and a bypassed subtree clamps at 0 V once the current exceeds what its
/// child can deliver.
inline double voltage_at(const ArrayNode& node, double i) {
  if (i < 0.0) throw OutOfRange("current must be >= 0");
  if (const auto* d = std::get_if<DeviceNode>(&node.v))
    return solve_voltage(d->cell, d->env, i);
  if (const auto* s = std::get_if<SeriesNode>(&node.v)) {
    double sum = 0.0;
    for (const auto& c : s->children) sum += voltage_at(c, i);
    return sum;
  }
  if (const auto* p = std::get_if<ParallelNode>(&node.v)) {
    const ArrayNode& self = node;
    const double i_max = current_at(self, 0.0);
    if (i > i_max * (1.0 + 1e-9) + 1e-12)
      throw OutOfRange("current exceeds parallel group short-circuit current");
    double lo = 0.0, hi = open_circuit_voltage(self);
    if (hi <= 0.0) return 0.0;
    for (int it = 0; it < 100 && hi - lo > 1e-12 * std::max(1.0, hi); ++it) {
      const double mid = 0.5 * (lo + hi);
      if (current_at(self, mid) > i) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
  }
  const ArrayNode& inner = std::get<BypassedNode>(node.v).child.front();
  const double limit =
      std::min(detail::carry_limit(inner), current_at(inner, 0.0));
  if (i > limit * (1.0 + 1e-12) + 1e-15) return 0.0;
  return std::max(0.0, voltage_at(inner, std::min(i, limit)));
}

/// Terminal current of the subtree at a given voltage. Parallel nodes sum
/// blocked child currents; series nodes invert the summed child voltages by
/// bisection, saturating at the carrying limit when the requested voltage is
/// below what the string can reach.
inline double current_at(const ArrayNode& node, double v) {
  if (v < 0.0) throw OutOfRange("voltage must be >= 0");
  if (const auto* d = std::get_if<DeviceNode>(&node.v))
    return solve_current(d->cell, d->env, v);
  if (const auto* p = std::get_if<ParallelNode>(&node.v)) {
    double sum = 0.0;
    for (const auto& c : p->children) sum += std::max(0.0, current_at(c, v));
    return sum;
  }
  if (const auto* b = std::get_if<BypassedNode>(&node.v))
    return current_at(b->child.front(), v);

  const auto& s = std::get<SeriesNode>(node.v);
  double hi = 0.0;
  double carry = std::numeric_limits<double>::infinity();
  for (const auto& c : s.children) {
    hi = std::max(hi, current_at(c, 0.0));
    carry = std::min(carry, detail::carry_limit(c));
  }
  hi = std::min(hi, carry) * (1.0 + 1e-12) + 1e-15;
  auto total_v = [&](double i) {
    double sum = 0.0;
    for (const auto& c : s.children) sum += voltage_at(c, i);
    return sum;
  };
  if (total_v(0.0) <= v) return 0.0;  // at or beyond open circuit
  if (total_v(hi) > v) return hi;     // saturated at the carry limit
  double lo = 0.0;
  for (int it = 0; it < 100 && hi - lo > 1e-13 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (total_v(mid) > v) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

struct CurvePoint {
  double voltage;
  double current;
  double power;
};

/// Terminal I-V curve sampled on a uniform voltage grid over
/// [0, V_oc,total]; currents are checked to be non-increasing.
struct CurveTable {
  std::vector<CurvePoint> points;

  void validate() const {
    if (points.size() < 512) throw Error("curve table needs >= 512 points");
    for (size_t k = 1; k < points.size(); ++k) {
      if (points[k].voltage <= points[k - 1].voltage)
        throw Error("curve table voltages must be strictly increasing");
      if (points[k].current > points[k - 1].current + 1e-9)
        throw Error("curve table currents must be non-increasing");
    }
  }
};

inline CurveTable tabulate(const ArrayNode& node, int n_points) {
  if (n_points < 512) throw Error("tabulate needs n_points >= 512");
  const double v_oc = open_circuit_voltage(node);
  CurveTable table;
  table.points.reserve(static_cast<size_t>(n_points));
  for (int k = 0; k < n_points; ++k) {
    const double v = v_oc * static_cast<double>(k) / (n_points - 1);
    const double i = current_at(node, v);
    table.points.push_back(CurvePoint{v, i, v * i});
  }
  table.validate();
  return table;
}

inline void write_curve_csv(const CurveTable& table, std::ostream& os) {
  os << "voltage_V,current_A,power_W\n";
  char buf[96];
  for (const auto& pt : table.points) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g\n", pt.voltage, pt.current,
                  pt.power);
    os << buf;
  }
}

/// Counts local maxima of power along the tabulated curve, treating flat
/// stretches as a single extremum.
inline int count_local_maxima(const CurveTable& table) {
  const auto& pts = table.points;
  if (pts.size() < 3) return pts.empty() ? 0 : 1;
  double p_scale = 0.0;
  for (const auto& pt : pts) p_scale = std::max(p_scale, std::abs(pt.power));
  const double eps = 1e-9 * std::max(p_scale, 1e-30);

  int peaks = 0;
  int trend = 0;  // +1 rising, -1 falling
  double ref = pts.front().power;
  for (size_t k = 1; k < pts.size(); ++k) {
    const double d = pts[k].power - ref;
    if (d > eps) {
      trend = 1;
      ref = pts[k].power;
    } else if (d < -eps) {
      if (trend == 1) ++peaks;
      trend = -1;
      ref = pts[k].power;
    }
  }
  if (trend == 1) ++peaks;  // rising into the right edge
  return peaks;
}

/// Global maximum power point of the subtree via the sweep + refine oracle.
inline OperatingPoint mpp_oracle(const ArrayNode& node) {
  return mpp_oracle([&](double v) { return current_at(node, v); },
                    open_circuit_voltage(node) + 1e-9);
}

enum class Scenario { Stc, TwoPeaks, ThreePeaks, Moderate, Strong, Tct };

inline Scenario parse_scenario(std::string_view name) {
  std::string key;
  for (char c : name)
    if (c != '_' && c != '-' && c != ' ')
      key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (key == "stc") return Scenario::Stc;
  if (key == "twopeaks") return Scenario::TwoPeaks;
  if (key == "threepeaks") return Scenario::ThreePeaks;
  if (key == "moderate") return Scenario::Moderate;
  if (key == "strong") return Scenario::Strong;
  if (key == "tct") return Scenario::Tct;
  throw UnknownScenario("unknown scenario: " + std::string(name));
}

inline std::string scenario_key(Scenario s) {
  switch (s) {
    case Scenario::Stc: return "stc";
    case Scenario::TwoPeaks: return "two_peaks";
    case Scenario::ThreePeaks: return "three_peaks";
    case Scenario::Moderate: return "moderate";
    case Scenario::Strong: return "strong";
    case Scenario::Tct: return "tct";
  }
  throw UnknownScenario("unhandled scenario");
}

namespace detail {

inline ArrayNode shaded_string(const CellParams& module, double temp_c,
                               const std::vector<double>& irradiances) {
  std::vector<ArrayNode> mods;
  mods.reserve(irradiances.size());
  for (double g : irradiances)
    mods.push_back(bypassed(device(module, Environment{g, temp_c})));
  return series(std::move(mods));
}

}  // namespace detail

/// Builds the named shading fixture. Module-level irradiance assignments for
/// the two-level and three-level strings are frozen so that the global peak
/// sits left of the secondary peak and between two side peaks respectively;
/// the mesh-connected fixture is solved row-wise as series-connected
/// bypassed rows of paralleled modules.
inline ArrayNode build_scenario(Scenario s, const CellParams& module) {
  const double t = 25.0;
  switch (s) {
    case Scenario::Stc:
      return device(module, Environment{1000.0, t});
    case Scenario::TwoPeaks:
      return detail::shaded_string(module, t, {1000, 1000, 300, 300, 300});
    case Scenario::ThreePeaks:
      return detail::shaded_string(module, t, {1000, 1000, 600, 600, 350});
    case Scenario::Moderate: {
      std::vector<ArrayNode> strings;
      for (int k = 0; k < 3; ++k)
        strings.push_back(detail::shaded_string(module, t, {700, 700, 300, 300, 100}));
      return parallel(std::move(strings));
    }
    case Scenario::Strong: {
      std::vector<ArrayNode> strings;
      for (int k = 0; k < 3; ++k)
        strings.push_back(detail::shaded_string(module, t, {750, 750, 150, 150, 100}));
      return parallel(std::move(strings));
    }
    case Scenario::Tct: {
      static constexpr std::array<double, 5> row_g = {500, 300, 100, 200, 25};
      std::vector<ArrayNode> rows;
      for (double g : row_g) {
        std::vector<ArrayNode> row;
        for (int m = 0; m < 4; ++m) row.push_back(device(module, Environment{g, t}));
        rows.push_back(bypassed(parallel(std::move(row))));
      }
      return series(std::move(rows));
    }
  }
  throw UnknownScenario("unhandled scenario");
}

inline ArrayNode build_scenario(Scenario s) {
  return build_scenario(s, reference_cell());
}

/// Applies fn to every device node in the tree (used to rebind environments).
template <typename Fn>
void for_each_device(ArrayNode& node, Fn&& fn) {
  if (auto* d = std::get_if<DeviceNode>(&node.v)) {
    fn(*d);
    return;
  }
  if (auto* s = std::get_if<SeriesNode>(&node.v)) {
    for (auto& c : s->children) for_each_device(c, fn);
    return;
  }
  if (auto* p = std::get_if<ParallelNode>(&node.v)) {
    for (auto& c : p->children) for_each_device(c, fn);
    return;
  }
  for (auto& c : std::get<BypassedNode>(node.v).child) for_each_device(c, fn);
}

/// Copy of the tree with every device placed in the same environment.
inline ArrayNode with_uniform_environment(const ArrayNode& node, const Environment& env) {
  ArrayNode copy = node;
  for_each_device(copy, [&](DeviceNode& d) { d.env = env; });
  return copy;
}

}  // namespace mpptbench
