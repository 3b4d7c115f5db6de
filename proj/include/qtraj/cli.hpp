#pragma once

// Scenario-driven commands behind the qtraj executable. Each command returns
// its exit code: 0 success, 1 verification or solver failure, 2 input error.

#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "qtraj/error.hpp"
#include "qtraj/floyd.hpp"
#include "qtraj/io.hpp"
#include "qtraj/qshje.hpp"
#include "qtraj/report.hpp"
#include "qtraj/scenario.hpp"
#include "qtraj/spin3d.hpp"

namespace qtraj::cli {

enum Exit : int { kOk = 0, kFailed = 1, kInput = 2 };

struct Options {
  std::string command;
  std::string scenario;
  std::string out;
  std::string suite = "all";
  bool svg = false;
};

struct Check {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  bool lower_bound = false;  // pass when value > tolerance instead of <= tolerance

  Json to_json() const {
    Json j;
    j["name"] = name;
    j["value"] = ResidualReport::finite_or_null(value);
    j["tolerance"] = tolerance;
    j["pass"] = pass;
    if (lower_bound) j["comparison"] = "greater";
    return j;
  }
};

// Pinned tolerances for the verification suites.
namespace tol {
inline constexpr double qshje = 1e-9;
inline constexpr double scriptW = 1e-5;
inline constexpr double continuity = 1e-8;
inline constexpr double q_routes = 1e-5;
inline constexpr double mobius = 1e-6;
inline constexpr double wronskian = 1e-8;
inline constexpr double wpwpe = 1e-4;
inline constexpr double time_formulas = 1e-5;
inline constexpr double chain = 1e-4;
inline constexpr double dtau = 1e-6;
inline constexpr double legendre = 1e-5;
inline constexpr double spin_constraints = 1e-10;
inline constexpr double analytic = 1e-10;
inline constexpr double sampled = 1e-6;
inline constexpr double energy_difference = 1e-6;
inline constexpr double gauge = 1e-8;
inline constexpr double mismatch = 0.1;
}  // namespace tol

inline Check upper(const std::string& name, double value, double tolerance) {
  return {name, value, tolerance, std::isfinite(value) && value <= tolerance, false};
}

inline Check lower(const std::string& name, double value, double bound) {
  return {name, value, bound, std::isfinite(value) && value > bound, true};
}

inline bool all_pass(const std::vector<Check>& checks) {
  for (const auto& c : checks) {
    if (!c.pass) return false;
  }
  return true;
}

inline Json checks_json(const std::vector<Check>& checks) {
  Json arr = Json::array();
  for (const auto& c : checks) arr.push_back(c.to_json());
  return arr;
}

// ---------------------------------------------------------------------------
// 1-D suites

inline const Potential& reference_potential(const Scenario& s) {
  return s.tampered_potential ? *s.tampered_potential : s.potential;
}

inline ActionSlice build_slice(const Scenario& s) {
  return solve_slice(s.potential, s.E, s.grid, s.micro, s.constants, s.normalization);
}

inline std::vector<Check> qshje_suite(const Scenario& s, const ActionSlice& slice) {
  std::vector<Check> out;
  const auto bps = s.potential.breakpoints();
  out.push_back(upper("qshje_identity", qshje_identity(slice).max, tol::qshje));
  out.push_back(upper("scriptW", verify_scriptW(slice, reference_potential(s)).max, tol::scriptW));
  out.push_back(upper("continuity", continuity_residual(slice).max, tol::continuity));
  out.push_back(upper("quantum_potential_routes", quantum_potential_routes(slice, bps).max, tol::q_routes));
  const auto basis = solve_basis(s.potential, s.E, s.grid, s.constants, s.normalization);
  out.push_back(upper("wronskian_drift", wronskian_drift(basis), tol::wronskian));
  // A fixed unimodular map; scriptW must not notice it.
  const auto mapped = microstate_action(basis, mobius_apply(s.micro, 2.0, 1.0, 1.0, 1.0), s.constants);
  double d = 0.0;
  for (std::size_t i = kEdgeNodes; i + kEdgeNodes < s.grid.size(); ++i) {
    d = std::max(d, std::abs(mapped.scriptW[i] - slice.scriptW[i]));
  }
  out.push_back(upper("scriptW_mobius_invariance", d, tol::mobius));
  return out;
}

inline std::vector<Check> floyd_suite(const Scenario& s, const ActionSlice& slice) {
  std::vector<Check> out;
  const double step = s.step_E.value_or(default_step_E(s.E));
  const auto deriv = energy_derivatives(s.potential, s.micro, s.E, step, s.grid, s.constants, s.normalization);
  out.push_back(upper("WpWpE_identity", identity_WpWpE(slice, deriv).params["relative"].get<double>(), tol::wpwpe));
  const auto tr = floyd_time(slice, deriv, s.trajectory_q0);
  out.push_back(upper("time_formulas", time_formula_agreement(tr).max, tol::time_formulas));
  const auto [chain, ratio] = velocity_chain(slice, deriv, tr, s.potential.breakpoints());
  out.push_back(upper("velocity_chain", chain.max, tol::chain));
  out.push_back(upper("dtau_dt", ratio.max, tol::dtau));
  if (s.legendre) {
    std::vector<double> Es;
    for (int k = -2; k <= 2; ++k) Es.push_back(s.E + k * s.legendre->spacing);
    const auto lg = legendre_check(s.potential, s.micro, Es, s.legendre->q, s.grid, s.constants, s.normalization);
    out.push_back(upper("legendre_roundtrip", lg.roundtrip.max, tol::legendre));
    out.push_back(upper("legendre_club", lg.club.max, tol::legendre));
    out.push_back(upper("legendre_slope", lg.slope.max, tol::legendre));
  }
  return out;
}

// ---------------------------------------------------------------------------
// 3-D suite

// s from the spin constraints at each point, with closure velocities. The
// Jacobian is a 4th-order central difference of that pointwise solution.
inline spin::VectorFn spin_vector_fn(const spin::FieldScene& scene, const Constants& c) {
  using spin::Vec3;
  spin::VectorFn f;
  f.value = [scene, c](const Vec3& p) {
    const Vec3 vB = scene.W.grad(p) / c.m;
    const Vec3 vS = (c.hbar / (2.0 * c.m * scene.rho.value(p))) * scene.rho.grad(p);
    const auto sol = spin::solve_spin(vB, vS);
    return sol.solutions.empty() ? Vec3{1.0, 0.0, 0.0} : sol.solutions.front();
  };
  f.jacobian = [value = f.value](const Vec3& p) {
    constexpr double h = 1e-3;
    spin::Mat3 J{};
    for (int d = 0; d < 3; ++d) {
      auto at = [&](double off) {
        Vec3 q = p;
        q[d] += off;
        return value(q);
      };
      const Vec3 g = (at(-2 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2 * h)) / (12.0 * h);
      for (int r = 0; r < 3; ++r) J[static_cast<std::size_t>(r)][d] = g[r];
    }
    return J;
  };
  return f;
}

// b = (0, 0, x y): curl b = (x, -y, 0), divergence-free.
inline spin::VectorFn gauge_field() {
  using spin::Vec3;
  return {[](const Vec3& p) { return Vec3{0.0, 0.0, p.x * p.y}; },
          [](const Vec3& p) { return spin::Mat3{Vec3{}, Vec3{}, Vec3{p.y, p.x, 0.0}}; }};
}

struct SpinRun {
  std::vector<Check> checks;
  spin::SpinScene scene;
  spin::VelocityVerdict verdict;
  std::map<std::string, std::size_t> multiplicity;
};

inline SpinRun spin_suite(const SpinScenario& s) {
  const auto& c = s.constants;
  const auto& g = s.grid;
  const spin::Mode mode = s.mode;
  const double id_tol = mode == spin::Mode::analytic ? tol::analytic : tol::sampled;
  const auto family = s.scene_family();
  const spin::FieldScene scene = family(s.E);

  SpinRun run;
  std::optional<spin::AlignedDensityExample> ex;
  if (s.family == "aligned_density") {
    const double W1 = std::sqrt(2.0 * c.m * (s.E - s.V0) - s.W2 * s.W2);
    ex = spin::aligned_density_build(s.alpha, s.beta, W1, s.W2, s.E, c, g, mode);
  }

  // Spin constraints at every node.
  const auto vel = spin::madelung_velocities(scene, c, g, mode);
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto sol = spin::solve_spin(vel.vB[i], vel.vS[i]);
    ++run.multiplicity[spin::to_string(sol.multiplicity)];
    if (sol.multiplicity != spin::Multiplicity::isolated_pair) continue;
    for (const auto& sv : sol.solutions) {
      for (double r : spin::spin_residuals(vel.vB[i], vel.vS[i], sv)) worst = std::max(worst, std::abs(r));
    }
  }
  run.checks.push_back(upper("spin_constraints", worst, tol::spin_constraints));

  run.checks.push_back(upper("quantum_potential_3d", spin::quantum_potential_3d(scene, c, g, mode).agreement.max, id_tol));
  const auto st = spin::stationary_residual(scene, c, g, mode);
  run.checks.push_back(upper("stationary_energy", st.energy.max, id_tol));
  run.checks.push_back(upper("stationary_continuity", st.continuity.max, id_tol));

  const spin::VectorFn s_field = ex ? ex->s : spin_vector_fn(scene, c);
  std::optional<spin::VectorFn> eta;
  if (ex) eta = ex->eta;
  std::optional<spin::VectorFn> gauge;
  if (s.gauge) gauge = gauge_field();
  run.scene = spin::current_decomposition(scene, s_field, c, g, mode, eta, gauge);
  run.checks.push_back(upper("div_J", run.scene.div_current.max, id_tol));
  if (eta) run.checks.push_back(upper("J_vs_eta", run.scene.eta_match.max, id_tol));
  if (gauge) {
    run.checks.push_back(upper("gauge_shift", run.scene.gauge_shift.max, tol::gauge));
    run.checks.push_back(upper("div_curl_b", run.scene.gauge_field.max, tol::gauge));
  }
  const auto sp = spin::speed_identity(scene, c, g, mode, s_field, eta);
  run.checks.push_back(upper("speed_pythagorean", sp.pythagorean.max, id_tol));
  run.checks.push_back(upper("speed_energy_form", sp.energy_form.max, id_tol));
  if (sp.eta_form) run.checks.push_back(upper("speed_eta_form", sp.eta_form->max, id_tol));
  if (ex) {
    run.checks.push_back(upper("density_balance", ex->density_balance.max, id_tol));
    run.checks.push_back(upper("rho_identity", ex->rho_identity.max, id_tol));
  }

  const double step = s.step_E.value_or(default_step_E(s.E));
  const auto tf = spin::time_field_3d(family, s.E, c, step, g, mode);
  run.checks.push_back(upper("energy_derivative", tf.energy_derivative.max, tol::energy_difference));
  run.checks.push_back(upper("div_dE_flux", tf.flux_divergence.max, tol::energy_difference));

  run.verdict = spin::current_vs_trajectory_report(family, s.E, c, step, g, mode, tol::mismatch);
  run.checks.push_back(upper("v_dot_vB", run.verdict.v_dot_vB.max, tol::spin_constraints));
  run.checks.push_back(lower("velocity_mismatch", run.verdict.mismatch_min, tol::mismatch));
  return run;
}

// ---------------------------------------------------------------------------
// Commands

inline std::filesystem::path out_dir(const Options& o, const std::string& scenario_out) {
  if (!o.out.empty()) return o.out;
  if (!scenario_out.empty()) return scenario_out;
  return ".";
}

inline int cmd_solve(const Scenario& s, const Options& o, std::ostream& log) {
  const auto slice = build_slice(s);
  const auto dir = out_dir(o, s.output);
  io::write_atomic(dir / (s.name + ".slice.csv"), io::slice_csv(slice));
  Json summary;
  summary["name"] = s.name;
  summary["energy"] = s.E;
  summary["nodes"] = s.grid.size();
  Json res = Json::array();
  res.push_back(verify_scriptW(slice, reference_potential(s)).to_json());
  res.push_back(continuity_residual(slice).to_json());
  res.push_back(qshje_identity(slice).to_json());
  summary["residuals"] = res;
  io::write_atomic(dir / (s.name + ".summary.json"), io::json_text(summary));
  log << "wrote " << (dir / (s.name + ".slice.csv")).string() << "\n";
  return kOk;
}

inline int cmd_trajectory(const Scenario& s, const Options& o, std::ostream& log) {
  const auto slice = build_slice(s);
  const double step = s.step_E.value_or(default_step_E(s.E));
  const auto deriv = energy_derivatives(s.potential, s.micro, s.E, step, s.grid, s.constants, s.normalization);
  const auto tr = floyd_time(slice, deriv, s.trajectory_q0);
  const auto dir = out_dir(o, s.output);
  io::write_atomic(dir / (s.name + ".trajectory.csv"), io::trajectory_csv(tr));
  if (o.svg) {
    io::write_atomic(dir / (s.name + ".trajectory.svg"), io::line_svg(tr.t, tr.q, "t", "q", s.name + ": q(t)"));
  }
  log << "wrote " << (dir / (s.name + ".trajectory.csv")).string() << "\n";
  return kOk;
}

inline int cmd_verify(const AnyScenario& any, const Options& o, std::ostream& log) {
  std::vector<Check> checks;
  std::string name;
  std::string out;
  if (const auto* s = std::get_if<Scenario>(&any)) {
    name = s->name;
    out = s->output;
    if (o.suite == "spin") throw InputError("suite 'spin' needs a " + std::string(kSpinSchema) + " scenario");
    const auto slice = build_slice(*s);
    if (o.suite == "qshje" || o.suite == "all") {
      for (auto& c : qshje_suite(*s, slice)) checks.push_back(std::move(c));
    }
    if (o.suite == "floyd" || o.suite == "all") {
      for (auto& c : floyd_suite(*s, slice)) checks.push_back(std::move(c));
    }
  } else {
    const auto& sp = std::get<SpinScenario>(any);
    name = sp.name;
    out = sp.output;
    if (o.suite != "spin" && o.suite != "all") {
      throw InputError("suite '" + o.suite + "' needs a " + std::string(kScenarioSchema) + " scenario");
    }
    checks = spin_suite(sp).checks;
  }
  const bool ok = all_pass(checks);
  Json rep;
  rep["name"] = name;
  rep["suite"] = o.suite;
  rep["pass"] = ok;
  rep["checks"] = checks_json(checks);
  io::write_atomic(out_dir(o, out) / (name + ".verify.json"), io::json_text(rep));
  for (const auto& c : checks) {
    if (!c.pass) log << "FAIL " << c.name << " value=" << io::fmt(c.value) << " tolerance=" << c.tolerance << "\n";
  }
  log << (ok ? "all checks passed" : "verification failed") << "\n";
  return ok ? kOk : kFailed;
}

inline int cmd_spin(const SpinScenario& s, const Options& o, std::ostream& log) {
  const auto run = spin_suite(s);
  const auto dir = out_dir(o, s.output);
  io::write_atomic(dir / (s.name + ".scene.csv"), io::scene_csv(s.grid, run.scene));
  Json rep;
  rep["name"] = s.name;
  rep["family"] = s.family;
  rep["mode"] = s.mode == spin::Mode::analytic ? "analytic" : "sampled";
  Json mult = Json::object();
  for (const auto& [k, v] : run.multiplicity) mult[k] = v;
  rep["multiplicity"] = mult;
  rep["verdict"] = run.verdict.to_json();
  rep["checks"] = checks_json(run.checks);
  const bool ok = all_pass(run.checks);
  rep["pass"] = ok;
  io::write_atomic(dir / (s.name + ".verdict.json"), io::json_text(rep));
  log << "mismatch |(1 - Q_E) - 3m| min=" << io::fmt(run.verdict.mismatch_min) << "\n";
  return ok ? kOk : kFailed;
}

// Library errors on the input side map to 2; solver failures map to 1 with
// a diagnostic JSON on stdout.
inline int run(const Options& o, std::ostream& out, std::ostream& err) {
  static const std::vector<std::string> suites{"qshje", "floyd", "spin", "all"};
  try {
    if (std::find(suites.begin(), suites.end(), o.suite) == suites.end()) {
      throw InputError("unknown suite '" + o.suite + "'");
    }
    const AnyScenario any = load_scenario(o.scenario);
    if (o.command == "verify") return cmd_verify(any, o, out);
    if (o.command == "spin") {
      const auto* s = std::get_if<SpinScenario>(&any);
      if (!s) throw InputError("spin needs a " + std::string(kSpinSchema) + " scenario");
      return cmd_spin(*s, o, out);
    }
    const auto* s = std::get_if<Scenario>(&any);
    if (!s) throw InputError(o.command + " needs a " + std::string(kScenarioSchema) + " scenario");
    if (o.command == "solve") return cmd_solve(*s, o, out);
    if (o.command == "trajectory") return cmd_trajectory(*s, o, out);
    throw InputError("unknown command '" + o.command + "'");
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kInput;
  } catch (const DomainError& e) {
    err << "input error: " << e.what() << "\n";
    return kInput;
  } catch (const DegenerateError& e) {
    err << "input error: " << e.what() << "\n";
    return kInput;
  } catch (const Error& e) {
    Json d;
    d["error"] = "solver_failure";
    d["message"] = e.what();
    out << io::json_text(d);
    err << "solver failure: " << e.what() << "\n";
    return kFailed;
  }
}

}  // namespace qtraj::cli
