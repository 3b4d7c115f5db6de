#pragma once

// Scenario files: one JSON document with a versioned "schema" field.
//   qtraj.scenario/1  1-D stationary problem (solve, trajectory, verify)
//   qtraj.spin/1      3-D scene family (spin, verify --suite spin)
// Unknown keys are rejected and every number must be finite; validation
// happens before any computation.

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "qtraj/error.hpp"
#include "qtraj/numerics.hpp"
#include "qtraj/potentials.hpp"
#include "qtraj/qshje.hpp"
#include "qtraj/spin3d.hpp"

namespace qtraj {

inline constexpr const char* kScenarioSchema = "qtraj.scenario/1";
inline constexpr const char* kSpinSchema = "qtraj.spin/1";

struct LegendreSpec {
  double q = 0.0;
  double spacing = 0.01;
};

struct Scenario {
  std::string name;
  Constants constants;
  Potential potential = Potential::free();
  std::optional<Potential> tampered_potential;  // verification runs against this instead
  double E = 0.0;
  Microstate micro;
  Grid1D grid{-1.0, 1.0, 9};
  std::optional<double> step_E;
  BasisNormalization normalization = BasisNormalization::local_wavenumber;
  double trajectory_q0 = 0.0;
  std::optional<LegendreSpec> legendre;
  std::string output;
};

struct SpinScenario {
  std::string name;
  Constants constants;
  std::string family;  // plane_wave | aligned_density | exp_density
  double alpha = 1.0;
  double beta = 1.0;
  double W2 = 0.0;
  double V0 = 0.0;
  double E = 1.0;
  spin::Grid3D grid{{0, 1, 9}, {0, 1, 9}, {0, 1, 9}};
  spin::Mode mode = spin::Mode::analytic;
  std::optional<double> step_E;
  bool gauge = true;
  std::string output;

  spin::SceneFamily scene_family() const {
    if (family == "plane_wave") return spin::plane_wave_family(constants, V0);
    if (family == "exp_density") return spin::exp_density_family(constants, V0);
    return spin::aligned_density_family(constants, grid, alpha, beta, W2, V0);
  }
};

using AnyScenario = std::variant<Scenario, SpinScenario>;

namespace detail {

class Reader {
 public:
  Reader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw InputError(where_ + ": expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!ok.count(it.key())) throw InputError(where_ + ": unknown key '" + it.key() + "'");
    }
  }

  bool has(const char* k) const { return j_.contains(k); }

  const nlohmann::json& at(const char* k) const {
    if (!j_.contains(k)) throw InputError(where_ + ": missing field '" + std::string(k) + "'");
    return j_.at(k);
  }

  double number(const char* k) const {
    const auto& v = at(k);
    if (!v.is_number()) throw InputError(where_ + "." + k + ": expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw InputError(where_ + "." + k + ": must be finite");
    return x;
  }

  double number(const char* k, double fallback) const { return has(k) ? number(k) : fallback; }

  std::size_t count(const char* k) const {
    const auto& v = at(k);
    if (!v.is_number_integer() || v.get<long long>() <= 0) {
      throw InputError(where_ + "." + k + ": expected a positive integer");
    }
    return static_cast<std::size_t>(v.get<long long>());
  }

  std::string text(const char* k) const {
    const auto& v = at(k);
    if (!v.is_string()) throw InputError(where_ + "." + k + ": expected a string");
    return v.get<std::string>();
  }

  std::string text(const char* k, const std::string& fallback) const { return has(k) ? text(k) : fallback; }

  Reader sub(const char* k) const { return Reader(at(k), where_ + "." + k); }

  const std::string& where() const { return where_; }

 private:
  const nlohmann::json& j_;
  std::string where_;
};

inline Constants read_constants(const Reader& r) {
  Reader c = r.sub("constants");
  c.allow({"m", "hbar"});
  Constants k{c.number("m"), c.number("hbar")};
  k.validate();
  return k;
}

inline Potential read_potential(const Reader& p, const std::filesystem::path& base) {
  const std::string kind = p.text("kind");
  if (kind == "free") {
    p.allow({"kind"});
    return Potential::free();
  }
  if (kind == "linear") {
    p.allow({"kind", "slope"});
    return Potential::linear(p.number("slope"));
  }
  if (kind == "harmonic") {
    p.allow({"kind", "stiffness"});
    return Potential::harmonic(p.number("stiffness"));
  }
  if (kind == "square_well") {
    p.allow({"kind", "depth", "half_width"});
    return Potential::square_well(p.number("depth"), p.number("half_width"));
  }
  if (kind == "tabulated") {
    p.allow({"kind", "path"});
    std::filesystem::path path = p.text("path");
    if (path.is_relative()) path = base / path;
    return load_tabulated_csv(path.string());
  }
  throw InputError(p.where() + ".kind: unknown potential '" + kind + "'");
}

inline spin::Axis read_axis(const Reader& a) {
  a.allow({"min", "max", "nodes"});
  return {a.number("min"), a.number("max"), a.count("nodes")};
}

inline Scenario read_scenario(const Reader& r, const std::filesystem::path& base) {
  r.allow({"schema", "name", "constants", "potential", "tampered_potential", "energy", "microstate", "grid", "step_E",
           "normalization", "trajectory", "legendre", "output"});
  Scenario s;
  s.name = r.text("name", "scenario");
  s.constants = read_constants(r);
  s.potential = read_potential(r.sub("potential"), base);
  if (r.has("tampered_potential")) s.tampered_potential = read_potential(r.sub("tampered_potential"), base);
  s.E = r.number("energy");

  Reader m = r.sub("microstate");
  m.allow({"a", "b", "c", "d", "W0", "q0"});
  s.micro = Microstate{m.number("a"), m.number("b"), m.number("c"), m.number("d"), m.number("W0", 0.0),
                       m.number("q0", 0.0)};
  s.micro.validate();

  Reader g = r.sub("grid");
  g.allow({"min", "max", "nodes"});
  s.grid = Grid1D(g.number("min"), g.number("max"), g.count("nodes"));
  if (!s.grid.contains(s.micro.q0)) throw InputError("microstate.q0 lies outside the grid");
  // Tabulated potentials must cover the whole grid.
  for (const auto* pot : {&s.potential, s.tampered_potential ? &*s.tampered_potential : nullptr}) {
    if (pot) {
      pot->evaluate(s.grid.q_min());
      pot->evaluate(s.grid.q_max());
    }
  }

  if (r.has("step_E")) {
    s.step_E = r.number("step_E");
    if (!(*s.step_E > 0.0)) throw InputError("step_E must be positive");
  }
  const std::string norm = r.text("normalization", "local_wavenumber");
  if (norm == "unit_wronskian") s.normalization = BasisNormalization::unit_wronskian;
  else if (norm != "local_wavenumber") throw InputError("normalization: unknown value '" + norm + "'");

  s.trajectory_q0 = s.micro.q0;
  if (r.has("trajectory")) {
    Reader t = r.sub("trajectory");
    t.allow({"q0"});
    s.trajectory_q0 = t.number("q0");
    if (!s.grid.contains(s.trajectory_q0)) throw InputError("trajectory.q0 lies outside the grid");
  }
  if (r.has("legendre")) {
    Reader l = r.sub("legendre");
    l.allow({"q", "spacing"});
    s.legendre = LegendreSpec{l.number("q"), l.number("spacing", 0.01)};
    if (!s.grid.contains(s.legendre->q)) throw InputError("legendre.q lies outside the grid");
    if (!(s.legendre->spacing > 0.0)) throw InputError("legendre.spacing must be positive");
  }
  s.output = r.text("output", "");
  return s;
}

inline SpinScenario read_spin(const Reader& r) {
  r.allow({"schema", "name", "constants", "family", "energy", "grid", "mode", "step_E", "gauge", "output"});
  SpinScenario s;
  s.name = r.text("name", "spin");
  s.constants = read_constants(r);
  s.E = r.number("energy");

  Reader g = r.sub("grid");
  g.allow({"x", "y", "z"});
  s.grid = spin::Grid3D(read_axis(g.sub("x")), read_axis(g.sub("y")), read_axis(g.sub("z")));

  Reader f = r.sub("family");
  s.family = f.text("kind");
  if (s.family == "plane_wave" || s.family == "exp_density") {
    f.allow({"kind", "V0"});
  } else if (s.family == "aligned_density") {
    f.allow({"kind", "alpha", "beta", "W2", "V0"});
    s.alpha = f.number("alpha");
    s.beta = f.number("beta");
    s.W2 = f.number("W2", 0.0);
  } else {
    throw InputError("family.kind: unknown family '" + s.family + "'");
  }
  s.V0 = f.number("V0", 0.0);

  const std::string mode = r.text("mode", "analytic");
  if (mode == "sampled") s.mode = spin::Mode::sampled;
  else if (mode != "analytic") throw InputError("mode: unknown value '" + mode + "'");
  if (r.has("step_E")) {
    s.step_E = r.number("step_E");
    if (!(*s.step_E > 0.0)) throw InputError("step_E must be positive");
  }
  if (r.has("gauge")) {
    if (!r.at("gauge").is_boolean()) throw InputError("gauge: expected true or false");
    s.gauge = r.at("gauge").get<bool>();
  }
  s.output = r.text("output", "");
  return s;
}

}  // namespace detail

inline AnyScenario parse_scenario(const std::string& text, const std::filesystem::path& base = ".") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("scenario is not valid JSON: ") + e.what());
  }
  const detail::Reader r(j, "scenario");
  const std::string schema = r.text("schema");
  try {
    if (schema == kScenarioSchema) return detail::read_scenario(r, base);
    if (schema == kSpinSchema) return detail::read_spin(r);
  } catch (const DegenerateError& e) {
    throw InputError(e.what());
  } catch (const RangeError& e) {
    throw InputError(e.what());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("scenario: ") + e.what());
  }
  throw InputError("scenario.schema: unsupported schema '" + schema + "'");
}

inline AnyScenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open scenario " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path.parent_path());
}

}  // namespace qtraj
