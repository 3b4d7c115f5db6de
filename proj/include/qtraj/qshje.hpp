#pragma once

// Stationary Schrödinger basis solver, microstate reduced actions and the
// quantum stationary Hamilton-Jacobi identity
//
//   (W')^2/2m + scriptW + Q = 0,   Q = (hbar^2/4m){W,q},
//   scriptW = -(hbar^2/4m){exp(2iW/hbar),q} = V - E.
//
// A microstate mixes a real basis pair (u, v) into p = a u + b v and
// r = c u + d v; then rho = p^2 + r^2 and W' = hbar (ad - bc) w / rho with
// w the basis Wronskian. Every derivative of W is taken analytically from
// (u, v, u', v') and the ODE itself.

#include <array>
#include <cmath>
#include <complex>
#include <span>
#include <string>
#include <vector>

#include "qtraj/error.hpp"
#include "qtraj/numerics.hpp"
#include "qtraj/potentials.hpp"
#include "qtraj/report.hpp"

namespace qtraj {

struct Constants {
  double m = 1.0;
  double hbar = 1.0;

  void validate() const {
    if (!(std::isfinite(m) && m > 0.0)) throw InputError("mass must be positive and finite");
    if (!(std::isfinite(hbar) && hbar > 0.0)) throw InputError("hbar must be positive and finite");
  }

  // 2m/hbar^2, the factor turning V - E into psi''/psi.
  double kappa_scale() const noexcept { return 2.0 * m / (hbar * hbar); }
};

// How the basis is fixed at the anchor q_a: u = 1, u' = 0, v = 0 and
// v' = kappa0 (local_wavenumber, kappa0 = sqrt(2m|E - V(q_a)|)/hbar) or
// v' = 1 (unit_wronskian). The local-wavenumber choice keeps the free
// particle's (1,0,0,1) microstate a plane wave at every energy.
enum class BasisNormalization { local_wavenumber, unit_wronskian };

struct BasisPair {
  Grid1D grid;
  double E;
  SampledField1D u;
  SampledField1D v;
  SampledField1D up;
  SampledField1D vp;
  SampledField1D upp;
  SampledField1D vpp;
  double wronskian;
  double anchor;
};

struct Microstate {
  double a = 1.0;
  double b = 0.0;
  double c = 0.0;
  double d = 1.0;
  double W0 = 0.0;
  double q0 = 0.0;

  double det() const noexcept { return a * d - b * c; }

  void validate() const {
    for (double x : {a, b, c, d, W0, q0}) {
      if (!std::isfinite(x)) throw InputError("microstate entries must be finite");
    }
    if (det() == 0.0) {
      throw DegenerateError("degenerate microstate: determinant a*d - b*c = 0 for (" + std::to_string(a) + ", " +
                            std::to_string(b) + ", " + std::to_string(c) + ", " + std::to_string(d) + ")");
    }
  }
};

struct ActionSlice {
  Grid1D grid;
  double E;
  Constants constants;
  Microstate micro;
  SampledField1D W;
  SampledField1D Wp;
  SampledField1D Wpp;
  SampledField1D Wppp;
  SampledField1D R;
  SampledField1D rho;
  SampledField1D Q;
  SampledField1D scriptW;
};

namespace detail {

using Mat2 = std::array<double, 4>;  // row-major

inline Mat2 mul(const Mat2& x, const Mat2& y) {
  return {x[0] * y[0] + x[1] * y[2], x[0] * y[1] + x[1] * y[3], x[2] * y[0] + x[3] * y[2], x[2] * y[1] + x[3] * y[3]};
}

inline std::array<double, 4> solve4(std::array<std::array<double, 4>, 4> a, std::array<double, 4> b) {
  for (std::size_t col = 0; col < 4; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < 4; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    for (std::size_t r = col + 1; r < 4; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t k = col; k < 4; ++k) a[r][k] -= f * a[col][k];
      b[r] -= f * b[col];
    }
  }
  std::array<double, 4> x{};
  for (std::size_t i = 4; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < 4; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

// One step of the two-stage Gauss-Legendre method for (f, f')' = [[0,1],[k(x),0]] (f, f').
// Returns the 2x2 propagator; it is symplectic, so det = 1 up to rounding.
template <class Kappa>
Mat2 gauss_step(double x, double h, const Kappa& kappa) {
  constexpr double s3 = 0.28867513459481288225;  // sqrt(3)/6
  constexpr double a11 = 0.25;
  constexpr double a12 = 0.25 - s3;
  constexpr double a21 = 0.25 + s3;
  constexpr double a22 = 0.25;
  const double k1 = kappa(x + (0.5 - s3) * h);
  const double k2 = kappa(x + (0.5 + s3) * h);
  const std::array<std::array<double, 4>, 4> sys{{
      {1.0, -h * a11, 0.0, -h * a12},
      {-k1 * h * a11, 1.0, -k1 * h * a12, 0.0},
      {0.0, -h * a21, 1.0, -h * a22},
      {-k2 * h * a21, 0.0, -k2 * h * a22, 1.0},
  }};
  // Columns: images of (1,0) and (0,1).
  const auto c0 = solve4(sys, {0.0, k1, 0.0, k2});
  const auto c1 = solve4(sys, {1.0, 0.0, 1.0, 0.0});
  return {1.0 + 0.5 * h * (c0[0] + c0[2]), 0.5 * h * (c1[0] + c1[2]), 0.5 * h * (c0[1] + c0[3]),
          1.0 + 0.5 * h * (c1[1] + c1[3])};
}

inline bool near_breakpoint(const Grid1D& g, std::size_t i, std::span<const double> bps, std::size_t radius) {
  for (double b : bps) {
    if (std::abs(g.node(i) - b) <= (static_cast<double>(radius) + 0.5) * g.spacing()) return true;
  }
  return false;
}

}  // namespace detail

inline BasisPair solve_basis(const Potential& potential, double E, const Grid1D& grid, const Constants& constants,
                             BasisNormalization norm = BasisNormalization::local_wavenumber) {
  constants.validate();
  if (!std::isfinite(E)) throw InputError("energy must be finite");
  const std::size_t n = grid.size();
  const double ks = constants.kappa_scale();
  const auto bps = potential.breakpoints();

  double anchor = 0.5 * (grid.q_min() + grid.q_max());
  std::size_t right = n / 2;      // first node reached stepping right
  std::size_t left = n / 2 - 1;   // first node reached stepping left
  if (n % 2 == 1) {
    anchor = grid.node(n / 2);
    right = n / 2 + 1;
    left = n / 2 - 1;
  }

  double kappa0 = 1.0;
  if (norm == BasisNormalization::local_wavenumber) {
    const double gap = std::abs(E - potential.evaluate(anchor));
    if (gap > 0.0) kappa0 = std::sqrt(constants.kappa_scale() * gap);
  }

  std::vector<double> u(n), v(n), up(n), vp(n), upp(n), vpp(n);
  constexpr double overflow_guard = 1e100;

  auto store = [&](std::size_t i, const detail::Mat2& y) {
    for (double e : y) {
      if (!std::isfinite(e) || std::abs(e) > overflow_guard) {
        throw DivergenceError("basis integration diverged near q=" + std::to_string(grid.node(i)) +
                              " (|u| or |v| beyond overflow guard)");
      }
    }
    u[i] = y[0];
    v[i] = y[1];
    up[i] = y[2];
    vp[i] = y[3];
  };

  // Advances y from x0 to x1, splitting the step at any interior jump of V.
  auto advance = [&](detail::Mat2 y, double x0, double x1) {
    std::vector<double> cuts{x0};
    for (double b : bps) {
      if ((b - x0) * (b - x1) < 0.0) cuts.push_back(b);
    }
    if (x1 < x0) {
      std::sort(cuts.begin() + 1, cuts.end(), std::greater<>());
    } else {
      std::sort(cuts.begin() + 1, cuts.end());
    }
    cuts.push_back(x1);
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
      const double lo = std::min(cuts[k], cuts[k + 1]);
      const double hi = std::max(cuts[k], cuts[k + 1]);
      auto kappa = [&](double x) { return ks * (potential.evaluate_in_cell(x, lo, hi) - E); };
      y = detail::mul(detail::gauss_step(cuts[k], cuts[k + 1] - cuts[k], kappa), y);
    }
    return y;
  };

  const detail::Mat2 start{1.0, 0.0, 0.0, kappa0};
  if (n % 2 == 1) store(n / 2, start);

  detail::Mat2 y = start;
  double x = anchor;
  for (std::size_t i = right; i < n; ++i) {
    y = advance(y, x, grid.node(i));
    x = grid.node(i);
    store(i, y);
  }
  y = start;
  x = anchor;
  for (std::size_t i = left + 1; i-- > 0;) {
    y = advance(y, x, grid.node(i));
    x = grid.node(i);
    store(i, y);
  }

  for (std::size_t i = 0; i < n; ++i) {
    const double k = ks * (potential.evaluate(grid.node(i)) - E);
    upp[i] = k * u[i];
    vpp[i] = k * v[i];
  }

  return BasisPair{grid,
                   E,
                   SampledField1D(grid, std::move(u)),
                   SampledField1D(grid, std::move(v)),
                   SampledField1D(grid, std::move(up)),
                   SampledField1D(grid, std::move(vp)),
                   SampledField1D(grid, std::move(upp)),
                   SampledField1D(grid, std::move(vpp)),
                   kappa0,
                   anchor};
}

// Largest relative deviation of u v' - u' v from the stored Wronskian.
inline double wronskian_drift(const BasisPair& basis) {
  double worst = 0.0;
  for (std::size_t i = 0; i < basis.grid.size(); ++i) {
    const double w = basis.u[i] * basis.vp[i] - basis.up[i] * basis.v[i];
    worst = std::max(worst, std::abs(w - basis.wronskian) / std::abs(basis.wronskian));
  }
  return worst;
}

// Max over interior nodes of |(-hbar^2/2m) f'' + (V - E) f| / max(1, max|f|)
// for f = u and f = v, with f'' from the 4th-order stencil. Nodes whose
// stencil straddles a jump of V are skipped.
inline double schrodinger_residual(const BasisPair& basis, const Potential& potential, const Constants& constants) {
  const auto bps = potential.breakpoints();
  const double c = constants.hbar * constants.hbar / (2.0 * constants.m);
  double worst = 0.0;
  for (const SampledField1D* f : {&basis.u, &basis.v}) {
    const auto fpp = differentiate(f->values(), basis.grid.spacing(), 2);
    double fmax = 1.0;
    for (double x : f->values()) fmax = std::max(fmax, std::abs(x));
    for (std::size_t i = kEdgeNodes; i + kEdgeNodes < basis.grid.size(); ++i) {
      if (detail::near_breakpoint(basis.grid, i, bps, 3)) continue;
      const double res = -c * fpp[i] + (potential.evaluate(basis.grid.node(i)) - basis.E) * (*f)[i];
      worst = std::max(worst, std::abs(res) / fmax);
    }
  }
  return worst;
}

// {f,q} = f'''/f' - (3/2)(f''/f')^2 pointwise; f itself does not enter.
inline SampledField1D schwarzian(const SampledField1D& f, const SampledField1D& fp, const SampledField1D& fpp,
                                 const SampledField1D& fppp) {
  const std::size_t n = fp.size();
  if (f.size() != n || fpp.size() != n || fppp.size() != n) throw InputError("schwarzian inputs differ in length");
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (fp[i] == 0.0) throw SingularityError("schwarzian undefined where f' = 0", i);
    const double r = fpp[i] / fp[i];
    s[i] = fppp[i] / fp[i] - 1.5 * r * r;
  }
  return {fp.grid(), std::move(s)};
}

inline ActionSlice microstate_action(const BasisPair& basis, const Microstate& micro, const Constants& constants) {
  constants.validate();
  micro.validate();
  const Grid1D& g = basis.grid;
  if (!g.contains(micro.q0)) throw RangeError("microstate anchor q0 outside grid");
  const std::size_t n = g.size();
  const double C = constants.hbar * micro.det() * basis.wronskian;

  std::vector<double> rho(n), R(n), Wp(n), Wpp(n), Wppp(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = micro.a * basis.u[i] + micro.b * basis.v[i];
    const double r = micro.c * basis.u[i] + micro.d * basis.v[i];
    const double pp = micro.a * basis.up[i] + micro.b * basis.vp[i];
    const double rp = micro.c * basis.up[i] + micro.d * basis.vp[i];
    const double ppp = micro.a * basis.upp[i] + micro.b * basis.vpp[i];
    const double rpp = micro.c * basis.upp[i] + micro.d * basis.vpp[i];
    const double rh = p * p + r * r;
    if (!(rh > 0.0)) throw SingularityError("rho vanishes (p and r both zero)", i);
    const double rh1 = 2.0 * (p * pp + r * rp);
    const double rh2 = 2.0 * (pp * pp + rp * rp + p * ppp + r * rpp);
    rho[i] = rh;
    R[i] = std::sqrt(rh);
    Wp[i] = C / rh;
    Wpp[i] = -C * rh1 / (rh * rh);
    Wppp[i] = -C * (rh2 / (rh * rh) - 2.0 * rh1 * rh1 / (rh * rh * rh));
  }

  SampledField1D Wp_f(g, std::move(Wp));
  SampledField1D Wpp_f(g, std::move(Wpp));
  SampledField1D Wppp_f(g, std::move(Wppp));
  // W' = hbar d/dq arg(p + i r), so W is the unwrapped phase; no quadrature.
  std::vector<double> theta(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    const double p0 = micro.a * basis.u[i - 1] + micro.b * basis.v[i - 1];
    const double r0 = micro.c * basis.u[i - 1] + micro.d * basis.v[i - 1];
    const double p1 = micro.a * basis.u[i] + micro.b * basis.v[i];
    const double r1 = micro.c * basis.u[i] + micro.d * basis.v[i];
    theta[i] = theta[i - 1] + std::atan2(p0 * r1 - r0 * p1, p0 * p1 + r0 * r1);
  }
  SampledField1D theta_f(g, std::move(theta));
  const double theta0 = interpolate(theta_f, micro.q0);
  std::vector<double> Wv(n);
  for (std::size_t i = 0; i < n; ++i) Wv[i] = micro.W0 + constants.hbar * (theta_f[i] - theta0);
  SampledField1D W_f(g, std::move(Wv));

  const auto sch = schwarzian(W_f, Wp_f, Wpp_f, Wppp_f);
  const double qscale = constants.hbar * constants.hbar / (4.0 * constants.m);
  std::vector<double> Q(n), scriptW(n);
  for (std::size_t i = 0; i < n; ++i) {
    Q[i] = qscale * sch[i];
    scriptW[i] = -Wp_f[i] * Wp_f[i] / (2.0 * constants.m) - Q[i];
  }

  return ActionSlice{g,
                     basis.E,
                     constants,
                     micro,
                     std::move(W_f),
                     std::move(Wp_f),
                     std::move(Wpp_f),
                     std::move(Wppp_f),
                     SampledField1D(g, std::move(R)),
                     SampledField1D(g, std::move(rho)),
                     SampledField1D(g, std::move(Q)),
                     SampledField1D(g, std::move(scriptW))};
}

inline ActionSlice solve_slice(const Potential& potential, double E, const Grid1D& grid, const Microstate& micro,
                               const Constants& constants,
                               BasisNormalization norm = BasisNormalization::local_wavenumber) {
  return microstate_action(solve_basis(potential, E, grid, constants, norm), micro, constants);
}

// scriptW straight from its definition -(hbar^2/4m){exp(2iW/hbar),q}, using
// complex arithmetic on f' = i a W' f, f'' = (i a W'' - a^2 W'^2) f, ...
// with a = 2/hbar. Returns the real part; the imaginary part is rounding.
inline std::vector<std::complex<double>> scriptW_complex(const ActionSlice& s) {
  using cd = std::complex<double>;
  const double a = 2.0 / s.constants.hbar;
  const cd I(0.0, 1.0);
  std::vector<cd> out(s.grid.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double w1 = s.Wp[i];
    const double w2 = s.Wpp[i];
    const double w3 = s.Wppp[i];
    const cd f1 = I * a * w1;
    const cd f2 = I * a * w2 - a * a * w1 * w1;
    const cd f3 = I * a * w3 - 3.0 * a * a * w1 * w2 - I * a * a * a * w1 * w1 * w1;
    const cd sch = f3 / f1 - 1.5 * (f2 / f1) * (f2 / f1);
    out[i] = -(s.constants.hbar * s.constants.hbar / (4.0 * s.constants.m)) * sch;
  }
  return out;
}

// (1/2m)(W')^2 + scriptW + Q at interior nodes.
inline ResidualReport qshje_identity(const ActionSlice& s) {
  std::vector<double> r(s.grid.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = s.Wp[i] * s.Wp[i] / (2.0 * s.constants.m) + s.scriptW[i] + s.Q[i];
  }
  return {"qshje_identity", interior_stats(r), Json{{"E", s.E}}};
}

// Relative spread of rho W' about its value at the middle node.
inline ResidualReport continuity_residual(const ActionSlice& s) {
  const std::size_t n = s.grid.size();
  const double ref = s.rho[n / 2] * s.Wp[n / 2];
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = (s.rho[i] * s.Wp[i] - ref) / std::abs(ref);
  return {"continuity", interior_stats(r), Json{{"E", s.E}}};
}

// Schwarzian Q against Q = -(hbar^2/2m) R''/R with R'' from the stencil.
inline ResidualReport quantum_potential_routes(const ActionSlice& s, std::span<const double> breakpoints = {}) {
  const auto Rpp = differentiate(s.R.values(), s.grid.spacing(), 2);
  const double c = s.constants.hbar * s.constants.hbar / (2.0 * s.constants.m);
  std::vector<double> r;
  for (std::size_t i = kEdgeNodes; i + kEdgeNodes < s.grid.size(); ++i) {
    if (detail::near_breakpoint(s.grid, i, breakpoints, 3)) continue;
    r.push_back(s.Q[i] + c * Rpp[i] / s.R[i]);
  }
  return {"quantum_potential_routes", residual_stats(r, 0, r.size()), Json{{"E", s.E}}};
}

// |scriptW - (V - E)| over interior nodes.
inline ResidualReport verify_scriptW(const ActionSlice& s, const Potential& potential) {
  std::vector<double> r(s.grid.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = s.scriptW[i] - (potential.evaluate(s.grid.node(i)) - s.E);
  }
  return {"scriptW", interior_stats(r), Json{{"E", s.E}, {"potential", potential.name()}}};
}

// The microstate whose ratio r/p is carried to (A x + B)/(C x + D). Maps
// compose as the matrix product [[A,B],[C,D]]: applying M1 then M2 equals
// applying M2*M1.
inline Microstate mobius_apply(const Microstate& micro, double A, double B, double C, double D) {
  for (double x : {A, B, C, D}) {
    if (!std::isfinite(x)) throw InputError("Moebius coefficients must be finite");
  }
  if (A * D - B * C == 0.0) throw InputError("Moebius map is degenerate: A*D - B*C = 0");
  Microstate out = micro;
  out.a = D * micro.a + C * micro.c;
  out.b = D * micro.b + C * micro.d;
  out.c = B * micro.a + A * micro.c;
  out.d = B * micro.b + A * micro.d;
  return out;
}

enum class ExponentMode { inverse_slope, standard };

struct WaveFunction {
  Grid1D grid;
  std::vector<std::complex<double>> psi;
  double residual;  // max |(-hbar^2/2m) psi'' + scriptW psi| / max|psi|, interior nodes
};

// psi = (W')^k [A exp(-iW/hbar) + B exp(iW/hbar)] with k = -1 (inverse_slope) or
// k = -1/2 (standard). The residual uses scriptW = V - E from the slice.
inline WaveFunction wavefunction(const ActionSlice& s, std::complex<double> A, std::complex<double> B, ExponentMode mode,
                                 std::span<const double> breakpoints = {}) {
  using cd = std::complex<double>;
  const double k = mode == ExponentMode::inverse_slope ? -1.0 : -0.5;
  const std::size_t n = s.grid.size();
  std::vector<cd> psi(n);
  std::vector<double> re(n), im(n);
  double pmax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (s.Wp[i] == 0.0) throw SingularityError("W' vanishes", i);
    const double ph = s.W[i] / s.constants.hbar;
    const cd pref = std::pow(cd(s.Wp[i], 0.0), k);
    psi[i] = pref * (A * std::exp(cd(0.0, -ph)) + B * std::exp(cd(0.0, ph)));
    re[i] = psi[i].real();
    im[i] = psi[i].imag();
    pmax = std::max(pmax, std::abs(psi[i]));
  }
  const auto re2 = differentiate(re, s.grid.spacing(), 2);
  const auto im2 = differentiate(im, s.grid.spacing(), 2);
  const double c = s.constants.hbar * s.constants.hbar / (2.0 * s.constants.m);
  double worst = 0.0;
  for (std::size_t i = kEdgeNodes; i + kEdgeNodes < n; ++i) {
    if (detail::near_breakpoint(s.grid, i, breakpoints, 3)) continue;
    const cd res = -c * cd(re2[i], im2[i]) + s.scriptW[i] * psi[i];
    worst = std::max(worst, std::abs(res));
  }
  return {s.grid, std::move(psi), pmax > 0.0 ? worst / pmax : worst};
}

}  // namespace qtraj
