#pragma once

// Floydian time, quantum mass and the energy-derivative identities of the
// trajectory representation. Energy derivatives are taken with the
// microstate (a, b, c, d, W0, q0) held fixed while the basis ODE is
// re-solved at shifted energies.

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qtraj/error.hpp"
#include "qtraj/numerics.hpp"
#include "qtraj/parallel.hpp"
#include "qtraj/potentials.hpp"
#include "qtraj/qshje.hpp"
#include "qtraj/report.hpp"

namespace qtraj {

inline double default_step_E(double E) { return 1e-4 * std::max(std::abs(E), 1.0); }

struct EnergyDerivatives {
  Grid1D grid;
  double E;
  double step_E;
  SampledField1D W_E;
  SampledField1D W_EE;
  SampledField1D Q_E;
  SampledField1D m_Q;   // m (1 - Q_E)
  SampledField1D Wp_E;  // d/dE of W'
};

// The five slices at E + k step_E, k = -2..2.
inline std::array<std::optional<ActionSlice>, 5> energy_stencil(const Potential& potential, const Microstate& micro,
                                                                double E, double step_E, const Grid1D& grid,
                                                                const Constants& constants,
                                                                BasisNormalization norm) {
  std::array<std::optional<ActionSlice>, 5> slices;
  parallel_for(5, [&](std::size_t k) {
    const double Ek = E + (static_cast<double>(k) - 2.0) * step_E;
    slices[k].emplace(solve_slice(potential, Ek, grid, micro, constants, norm));
  });
  return slices;
}

inline EnergyDerivatives energy_derivatives(const Potential& potential, const Microstate& micro, double E,
                                            double step_E, const Grid1D& grid, const Constants& constants,
                                            BasisNormalization norm = BasisNormalization::local_wavenumber) {
  if (!(step_E > 0.0) || !std::isfinite(step_E)) throw InputError("step_E must be positive");
  const auto slices = energy_stencil(potential, micro, E, step_E, grid, constants, norm);
  const std::size_t n = grid.size();
  std::vector<double> WE(n), WEE(n), QE(n), mQ(n), WpE(n);
  auto column = [&](auto member, std::size_t i) {
    std::array<double, 5> v{};
    for (std::size_t k = 0; k < 5; ++k) v[k] = ((*slices[k]).*member)[i];
    return v;
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto w = column(&ActionSlice::W, i);
    WE[i] = five_point(w, step_E, 1);
    WEE[i] = five_point(w, step_E, 2);
    QE[i] = five_point(column(&ActionSlice::Q, i), step_E, 1);
    WpE[i] = five_point(column(&ActionSlice::Wp, i), step_E, 1);
    mQ[i] = constants.m * (1.0 - QE[i]);
  }
  return {grid,
          E,
          step_E,
          SampledField1D(grid, std::move(WE)),
          SampledField1D(grid, std::move(WEE)),
          SampledField1D(grid, std::move(QE)),
          SampledField1D(grid, std::move(mQ)),
          SampledField1D(grid, std::move(WpE))};
}

struct Trajectory {
  double q0 = 0.0;
  std::vector<double> q;
  std::vector<double> t;        // dE of the W' integral from q0
  std::vector<double> tau;      // m * integral of dx/W' from q0
  std::vector<double> qdot;     // W' / (m (1 - Q_E))
  std::vector<double> dtau_dt;  // 1 / (1 - Q_E)
  // U-form time sqrt(m/2) * integral of (1 - Q_E)/sqrt(E - U), U = V + Q.
  std::vector<double> t_uform;
  std::vector<bool> uform_available;
  // Smallest E - U met between q0 and each node.
  std::vector<double> min_gap;
};

namespace detail {

inline void check_matching(const ActionSlice& s, const EnergyDerivatives& d) {
  if (!(s.grid == d.grid)) throw InputError("slice and energy derivatives live on different grids");
  if (std::abs(s.E - d.E) > 1e-12 * std::max(1.0, std::abs(s.E))) throw InputError("slice and energy derivatives differ in E");
}

}  // namespace detail

inline Trajectory floyd_time(const ActionSlice& slice, const EnergyDerivatives& deriv, double q0) {
  detail::check_matching(slice, deriv);
  const Grid1D& g = slice.grid;
  if (!g.contains(q0)) throw RangeError("trajectory anchor outside grid");
  const std::size_t n = g.size();
  const double m = slice.constants.m;

  Trajectory tr;
  tr.q0 = q0;
  tr.q = g.nodes();
  tr.t.resize(n);
  tr.qdot.resize(n);
  tr.dtau_dt.resize(n);

  const double WE0 = interpolate(deriv.W_E, q0);
  std::vector<double> inv(n), uform(n), gap(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (slice.Wp[i] == 0.0) throw SingularityError("tau undefined where W' = 0", i);
    const double one_minus = 1.0 - deriv.Q_E[i];
    tr.t[i] = deriv.W_E[i] - WE0;
    tr.qdot[i] = slice.Wp[i] / (m * one_minus);
    tr.dtau_dt[i] = 1.0 / one_minus;
    inv[i] = m / slice.Wp[i];
    // E - U = E - V - Q with V - E read off scriptW.
    gap[i] = -slice.scriptW[i] - slice.Q[i];
    // The root carries the sign of W', since E - U = (W')^2 / 2m.
    const double sgn = slice.Wp[i] > 0.0 ? 1.0 : -1.0;
    uform[i] = gap[i] > 0.0 ? sgn * std::sqrt(m / 2.0) * one_minus / std::sqrt(gap[i]) : 0.0;
  }
  const auto tau = cumulative_integral(SampledField1D(g, std::move(inv)), q0);
  tr.tau.assign(tau.values().begin(), tau.values().end());
  const auto tu = cumulative_integral(SampledField1D(g, uform), q0);
  tr.t_uform.assign(tu.values().begin(), tu.values().end());

  // Availability propagates outward from the cell holding q0.
  tr.uform_available.assign(n, false);
  tr.min_gap.assign(n, 0.0);
  const auto [cell, s] = g.locate(q0);
  (void)s;
  double run = std::min(gap[cell], gap[cell + 1]);
  for (std::size_t i = cell + 1; i < n; ++i) {
    run = std::min(run, gap[i]);
    tr.min_gap[i] = run;
  }
  run = std::min(gap[cell], gap[cell + 1]);
  for (std::size_t i = cell + 1; i-- > 0;) {
    run = std::min(run, gap[i]);
    tr.min_gap[i] = run;
  }
  for (std::size_t i = 0; i < n; ++i) {
    tr.uform_available[i] = tr.min_gap[i] > 0.0;
    if (!tr.uform_available[i]) tr.t_uform[i] = std::nan("");
  }
  return tr;
}

// The two time formulas compared over interior nodes whose path from q0
// keeps E - U >= min_gap.
inline ResidualReport time_formula_agreement(const Trajectory& tr, double min_gap = 0.1) {
  std::vector<double> r;
  const std::size_t n = tr.q.size();
  for (std::size_t i = kEdgeNodes; i + kEdgeNodes < n; ++i) {
    if (tr.uform_available[i] && tr.min_gap[i] >= min_gap) r.push_back(tr.t[i] - tr.t_uform[i]);
  }
  return {"time_formulas", residual_stats(r, 0, r.size()), Json{{"min_gap", min_gap}, {"q0", tr.q0}}};
}

inline double trajectory_at(const Trajectory& tr, double t) { return invert_monotone(tr.q, tr.t, t); }

// W' W'_E - m (1 - Q_E) over interior nodes; params.relative divides the
// max by max |m (1 - Q_E)|.
inline ResidualReport identity_WpWpE(const ActionSlice& slice, const EnergyDerivatives& deriv) {
  detail::check_matching(slice, deriv);
  const std::size_t n = slice.grid.size();
  std::vector<double> r(n);
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = slice.Wp[i] * deriv.Wp_E[i] - deriv.m_Q[i];
    if (i >= kEdgeNodes && i + kEdgeNodes < n) scale = std::max(scale, std::abs(deriv.m_Q[i]));
  }
  const auto st = interior_stats(r);
  return {"WpWpE_identity", st,
          Json{{"E", slice.E}, {"step_E", deriv.step_E}, {"relative", scale > 0.0 ? st.max / scale : st.max}}};
}

// Nodes with |1 - Q_E| below this fraction of its max are left out of the chain.
inline constexpr double kSingularFraction = 0.05;

// Velocity chain checked against the trajectory's own time table:
// m (1 - Q_E) (dq/dt) - W' with dq/dt = 1 / (dt/dq) from the stencil, and
// (dtau/dt)(1 - Q_E) - 1 with dtau/dt = (dtau/dq)/(dt/dq). Both relative.
inline std::pair<ResidualReport, ResidualReport> velocity_chain(const ActionSlice& slice,
                                                                const EnergyDerivatives& deriv,
                                                                const Trajectory& tr,
                                                                std::span<const double> breakpoints = {}) {
  detail::check_matching(slice, deriv);
  const double h = slice.grid.spacing();
  const auto dtdq = differentiate(tr.t, h, 1);
  const auto dtaudq = differentiate(tr.tau, h, 1);
  const std::size_t n = tr.q.size();
  double scale = 0.0;
  for (std::size_t i = kEdgeNodes; i + kEdgeNodes < n; ++i) scale = std::max(scale, std::abs(1.0 - deriv.Q_E[i]));
  std::vector<double> chain, ratio;
  std::size_t skipped = 0;
  for (std::size_t i = kEdgeNodes; i + kEdgeNodes < n; ++i) {
    const double one_minus = 1.0 - deriv.Q_E[i];
    // Stencils straddling a jump in V see the kink in t(q); where 1 - Q_E
    // nears zero dt/dq does too and the ratios are 0/0.
    if (detail::near_breakpoint(slice.grid, i, breakpoints, 4) || std::abs(one_minus) < kSingularFraction * scale) {
      ++skipped;
      continue;
    }
    chain.push_back((slice.constants.m * one_minus / dtdq[i] - slice.Wp[i]) / std::abs(slice.Wp[i]));
    ratio.push_back(dtaudq[i] / dtdq[i] * one_minus - 1.0);
  }
  const Json params{{"E", slice.E}, {"skipped", skipped}};
  return {ResidualReport("velocity_chain", residual_stats(chain, 0, chain.size()), params),
          ResidualReport("dtau_dt", residual_stats(ratio, 0, ratio.size()), params)};
}

struct LegendreReport {
  std::vector<double> E;
  std::vector<double> W;
  std::vector<double> t;    // dW/dE at fixed q
  std::vector<double> S;    // E W_E - W
  std::vector<double> S_t;  // dS/dt along the family
  ResidualReport roundtrip;  // W - (t E - S): S built from W, then W rebuilt with S_t = E
  ResidualReport club;       // W - (t S_t - S) with S_t measured
  ResidualReport slope;      // S_t - E
};

// Legendre pair W = t S_t - S, S = E W_E - W at fixed q over an energy grid.
inline LegendreReport legendre_check(const Potential& potential, const Microstate& micro,
                                     const std::vector<double>& E_grid, double q, const Grid1D& grid,
                                     const Constants& constants,
                                     BasisNormalization norm = BasisNormalization::local_wavenumber) {
  if (E_grid.size() < 5) throw InputError("legendre_check needs at least 5 energies");
  if (!grid.contains(q)) throw RangeError("legendre_check position outside grid");

  std::map<double, double> cache;
  auto W_of = [&](double E) {
    if (auto it = cache.find(E); it != cache.end()) return it->second;
    const double w = interpolate(solve_slice(potential, E, grid, micro, constants, norm).W, q);
    cache.emplace(E, w);
    return w;
  };
  auto t_of = [&](double E) { return param_derivative(W_of, E, 1e-3 * std::max(std::abs(E), 1.0), 1); };
  auto S_of = [&](double E) { return E * t_of(E) - W_of(E); };

  LegendreReport rep;
  std::vector<double> rt, club, slope;
  for (double E : E_grid) {
    const double outer = 1e-2 * std::max(std::abs(E), 1.0);
    const double W = W_of(E);
    const double t = t_of(E);
    const double S = E * t - W;
    const double dS = param_derivative(S_of, E, outer, 1);
    const double dt = param_derivative(W_of, E, outer, 2);
    const double St = dS / dt;
    rep.E.push_back(E);
    rep.W.push_back(W);
    rep.t.push_back(t);
    rep.S.push_back(S);
    rep.S_t.push_back(St);
    rt.push_back(W - (t * E - S));
    club.push_back(W - (t * St - S));
    slope.push_back(St - E);
  }
  const Json p{{"q", q}, {"energies", E_grid.size()}};
  rep.roundtrip = ResidualReport("legendre_roundtrip", residual_stats(rt, 0, rt.size()), p);
  rep.club = ResidualReport("legendre_club", residual_stats(club, 0, club.size()), p);
  rep.slope = ResidualReport("legendre_slope", residual_stats(slope, 0, slope.size()), p);
  return rep;
}

enum class Feasibility { requires_nonpositive_ratio, admits_positive_deltaE };

inline const char* to_string(Feasibility f) {
  return f == Feasibility::admits_positive_deltaE ? "admits_positive_deltaE" : "requires_nonpositive_ratio";
}

struct UncertaintyReport {
  double q;
  double threshold;  // (1 - Q_E) hbar / (2 W_EE)
  Feasibility feasibility;
  int ratio_sign;  // sign of (1 - Q_E)/W_EE
  double Q_E;
  double W_EE;
};

// Diagnostic for (dE)^2 >= (1 - Q_E) hbar / (2 W_EE) at fixed q. A positive
// infinitesimal energy change is only compatible when the ratio is <= 0.
inline UncertaintyReport uncertainty_report(const EnergyDerivatives& deriv, double q, const Constants& constants) {
  constants.validate();
  const double WEE = interpolate(deriv.W_EE, q);
  const double QE = interpolate(deriv.Q_E, q);
  if (WEE == 0.0) throw DegenerateError("W_EE vanishes at q=" + std::to_string(q));
  const double ratio = (1.0 - QE) / WEE;
  const int sign = ratio > 0.0 ? 1 : (ratio < 0.0 ? -1 : 0);
  return {q, (1.0 - QE) * constants.hbar / (2.0 * WEE),
          sign <= 0 ? Feasibility::admits_positive_deltaE : Feasibility::requires_nonpositive_ratio, sign, QE, WEE};
}

}  // namespace qtraj
