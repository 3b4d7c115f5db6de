#pragma once

// Stationary 3-D Madelung fields and the spin-vector construction:
//   v_B = grad W / m,  v_S = hbar grad rho / (2 m rho),
//   |s| = 1,  v_S . s = 0,  v_B . (v_S x s) = 0,
//   v = v_B + v_S x s,  J = rho v + J0,  J0 = (hbar rho / 2m) curl s.
//
// Scenes are analytic closures. Every operation can evaluate them in
// analytic mode (closure derivatives) or sampled mode (values sampled on a
// Grid3D, derivatives from the 4th-order stencils). Divergences and curls of
// assembled fields are always taken with stencils.

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qtraj/error.hpp"
#include "qtraj/numerics.hpp"
#include "qtraj/qshje.hpp"
#include "qtraj/report.hpp"

namespace qtraj::spin {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator-(Vec3 a) { return {-a.x, -a.y, -a.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend Vec3 operator*(Vec3 a, double s) { return s * a; }
  friend Vec3 operator/(Vec3 a, double s) { return {a.x / s, a.y / s, a.z / s}; }
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) { return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x}; }
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

// Row i holds the gradient of component i.
using Mat3 = std::array<Vec3, 3>;

inline Vec3 curl_of(const Mat3& J) { return {J[2].y - J[1].z, J[0].z - J[2].x, J[1].x - J[0].y}; }

struct Axis {
  double min = 0.0;
  double max = 1.0;
  std::size_t n = 9;
};

class Grid3D {
 public:
  Grid3D(Axis x, Axis y, Axis z) : axes_{x, y, z} {
    for (const auto& a : axes_) {
      if (!std::isfinite(a.min) || !std::isfinite(a.max) || !(a.max > a.min)) throw InputError("grid axis needs max > min");
      if (a.n < 9) throw InputError("grid axis needs at least 9 nodes");
    }
  }

  const Axis& axis(int d) const { return axes_[static_cast<std::size_t>(d)]; }
  std::size_t n(int d) const { return axis(d).n; }
  double spacing(int d) const { return (axis(d).max - axis(d).min) / static_cast<double>(axis(d).n - 1); }
  std::size_t size() const { return n(0) * n(1) * n(2); }

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return (k * n(1) + j) * n(0) + i; }

  std::array<std::size_t, 3> unindex(std::size_t idx) const {
    const std::size_t i = idx % n(0);
    const std::size_t j = (idx / n(0)) % n(1);
    return {i, j, idx / (n(0) * n(1))};
  }

  double coord(int d, std::size_t i) const {
    return i + 1 == n(d) ? axis(d).max : axis(d).min + static_cast<double>(i) * spacing(d);
  }

  Vec3 node(std::size_t idx) const {
    const auto [i, j, k] = unindex(idx);
    return {coord(0, i), coord(1, j), coord(2, k)};
  }

  bool interior(std::size_t idx) const {
    const auto ijk = unindex(idx);
    for (int d = 0; d < 3; ++d) {
      const std::size_t c = ijk[static_cast<std::size_t>(d)];
      if (c < kEdgeNodes || c + kEdgeNodes >= n(d)) return false;
    }
    return true;
  }

 private:
  std::array<Axis, 3> axes_;
};

struct ScalarFn {
  std::function<double(const Vec3&)> value;
  std::function<Vec3(const Vec3&)> grad;
  std::function<Vec3(const Vec3&)> second;  // (f_xx, f_yy, f_zz)

  bool analytic() const { return value && grad && second; }

  static ScalarFn constant(double c) {
    return {[c](const Vec3&) { return c; }, [](const Vec3&) { return Vec3{}; }, [](const Vec3&) { return Vec3{}; }};
  }
};

struct VectorFn {
  std::function<Vec3(const Vec3&)> value;
  std::function<Mat3(const Vec3&)> jacobian;

  static VectorFn constant(Vec3 c) {
    return {[c](const Vec3&) { return c; }, [](const Vec3&) { return Mat3{}; }};
  }
};

struct FieldScene {
  ScalarFn rho;
  ScalarFn W;
  ScalarFn V;
  double E = 0.0;
  std::string label;
};

enum class Mode { analytic, sampled };

using SceneFamily = std::function<FieldScene(double E)>;

// ---------------------------------------------------------------------------
// Stencil calculus on Grid3D

inline std::vector<double> axis_derivative(const Grid3D& g, const std::vector<double>& f, int axis, int order) {
  std::vector<double> out(f.size());
  const std::size_t na = g.n(axis);
  std::vector<double> line(na);
  const std::size_t n0 = g.n(0), n1 = g.n(1), n2 = g.n(2);
  const std::array<std::size_t, 3> dims{n0, n1, n2};
  const std::size_t o1 = axis == 0 ? 1 : 0;
  const std::size_t o2 = axis == 2 ? 1 : 2;
  for (std::size_t b = 0; b < dims[o2]; ++b) {
    for (std::size_t a = 0; a < dims[o1]; ++a) {
      auto at = [&](std::size_t t) {
        std::array<std::size_t, 3> ijk{};
        ijk[static_cast<std::size_t>(axis)] = t;
        ijk[o1] = a;
        ijk[o2] = b;
        return g.index(ijk[0], ijk[1], ijk[2]);
      };
      for (std::size_t t = 0; t < na; ++t) line[t] = f[at(t)];
      const auto d = differentiate(line, g.spacing(axis), order);
      for (std::size_t t = 0; t < na; ++t) out[at(t)] = d[t];
    }
  }
  return out;
}

inline std::vector<double> component(const std::vector<Vec3>& v, int c) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i][c];
  return out;
}

inline std::vector<double> divergence(const Grid3D& g, const std::vector<Vec3>& v) {
  std::vector<double> out(v.size(), 0.0);
  for (int d = 0; d < 3; ++d) {
    const auto dd = axis_derivative(g, component(v, d), d, 1);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += dd[i];
  }
  return out;
}

inline std::vector<Vec3> gradient(const Grid3D& g, const std::vector<double>& f) {
  std::vector<Vec3> out(f.size());
  for (int d = 0; d < 3; ++d) {
    const auto dd = axis_derivative(g, f, d, 1);
    for (std::size_t i = 0; i < out.size(); ++i) out[i][d] = dd[i];
  }
  return out;
}

inline std::vector<Vec3> curl(const Grid3D& g, const std::vector<Vec3>& v) {
  // rows[c][d] = d v_c / d x_d
  std::array<std::array<std::vector<double>, 3>, 3> rows;
  for (int c = 0; c < 3; ++c) {
    const auto comp = component(v, c);
    for (int d = 0; d < 3; ++d) {
      if (c != d) rows[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)] = axis_derivative(g, comp, d, 1);
    }
  }
  std::vector<Vec3> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = {rows[2][1][i] - rows[1][2][i], rows[0][2][i] - rows[2][0][i], rows[1][0][i] - rows[0][1][i]};
  }
  return out;
}

inline std::vector<double> sample(const Grid3D& g, const std::function<double(const Vec3&)>& f) {
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(g.node(i));
  return out;
}

inline std::vector<Vec3> sample(const Grid3D& g, const std::function<Vec3(const Vec3&)>& f) {
  std::vector<Vec3> out(g.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(g.node(i));
  return out;
}

// Curl of a vector field: closure Jacobian in analytic mode, stencils otherwise.
inline std::vector<Vec3> curl_field(const VectorFn& f, const Grid3D& g, Mode mode) {
  if (mode == Mode::analytic) {
    if (!f.jacobian) throw InputError("analytic mode needs the vector field's Jacobian");
    std::vector<Vec3> out(g.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = curl_of(f.jacobian(g.node(i)));
    return out;
  }
  return curl(g, sample(g, f.value));
}

inline Residuals interior_stats(const Grid3D& g, const std::vector<double>& r) {
  std::vector<double> picked;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (g.interior(i)) picked.push_back(r[i]);
  }
  return residual_stats(picked, 0, picked.size());
}

// ---------------------------------------------------------------------------
// Scene evaluation

struct SceneSample {
  std::vector<double> rho, W, V;
  std::vector<Vec3> grad_rho, grad_W;
  std::vector<double> lap_rho, lap_W;
  std::vector<double> rho_yy;
  std::vector<double> lapR_over_R;
};

inline SceneSample evaluate_scene(const FieldScene& scene, const Grid3D& g, Mode mode) {
  SceneSample s;
  s.rho = sample(g, scene.rho.value);
  s.W = sample(g, scene.W.value);
  s.V = sample(g, scene.V.value);
  for (std::size_t i = 0; i < s.rho.size(); ++i) {
    if (!(s.rho[i] > 0.0)) {
      const Vec3 p = g.node(i);
      throw DomainError("rho must be positive; rho=" + std::to_string(s.rho[i]) + " at (" + std::to_string(p.x) + ", " +
                        std::to_string(p.y) + ", " + std::to_string(p.z) + ")");
    }
  }
  const std::size_t n = g.size();
  s.lap_rho.resize(n);
  s.lap_W.resize(n);
  s.rho_yy.resize(n);
  s.lapR_over_R.resize(n);
  if (mode == Mode::analytic) {
    if (!scene.rho.analytic() || !scene.W.analytic()) throw InputError("analytic mode needs closure derivatives of rho and W");
    s.grad_rho = sample(g, scene.rho.grad);
    s.grad_W = sample(g, scene.W.grad);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 p = g.node(i);
      const Vec3 r2 = scene.rho.second(p);
      const Vec3 w2 = scene.W.second(p);
      s.lap_rho[i] = r2.x + r2.y + r2.z;
      s.lap_W[i] = w2.x + w2.y + w2.z;
      s.rho_yy[i] = r2.y;
      const double g2 = dot(s.grad_rho[i], s.grad_rho[i]);
      s.lapR_over_R[i] = s.lap_rho[i] / (2.0 * s.rho[i]) - g2 / (4.0 * s.rho[i] * s.rho[i]);
    }
  } else {
    s.grad_rho = gradient(g, s.rho);
    s.grad_W = gradient(g, s.W);
    std::vector<double> R(n);
    for (std::size_t i = 0; i < n; ++i) R[i] = std::sqrt(s.rho[i]);
    std::fill(s.lapR_over_R.begin(), s.lapR_over_R.end(), 0.0);
    for (int d = 0; d < 3; ++d) {
      const auto r2 = axis_derivative(g, s.rho, d, 2);
      const auto w2 = axis_derivative(g, s.W, d, 2);
      const auto R2 = axis_derivative(g, R, d, 2);
      for (std::size_t i = 0; i < n; ++i) {
        s.lap_rho[i] += r2[i];
        s.lap_W[i] += w2[i];
        s.lapR_over_R[i] += R2[i] / R[i];
        if (d == 1) s.rho_yy[i] = r2[i];
      }
    }
  }
  return s;
}

struct Velocities {
  std::vector<Vec3> vB;
  std::vector<Vec3> vS;
};

inline Velocities madelung_velocities(const SceneSample& s, const Constants& c) {
  Velocities v;
  v.vB.resize(s.rho.size());
  v.vS.resize(s.rho.size());
  for (std::size_t i = 0; i < s.rho.size(); ++i) {
    v.vB[i] = s.grad_W[i] / c.m;
    v.vS[i] = (c.hbar / (2.0 * c.m * s.rho[i])) * s.grad_rho[i];
  }
  return v;
}

inline Velocities madelung_velocities(const FieldScene& scene, const Constants& c, const Grid3D& g, Mode mode) {
  c.validate();
  return madelung_velocities(evaluate_scene(scene, g, mode), c);
}

struct QuantumPotential3D {
  std::vector<double> from_density;   // (hbar^2/4m)[ (1/2)|grad rho/rho|^2 - lap rho/rho ]
  std::vector<double> from_osmotic;   // -(m/2) v_S^2 - (hbar/2) div v_S
  ResidualReport agreement;
};

inline QuantumPotential3D quantum_potential_3d(const FieldScene& scene, const Constants& c, const Grid3D& g, Mode mode) {
  c.validate();
  const auto s = evaluate_scene(scene, g, mode);
  const auto v = madelung_velocities(s, c);
  const std::size_t n = g.size();
  QuantumPotential3D out;
  out.from_density.resize(n);
  out.from_osmotic.resize(n);
  std::vector<double> div_vS;
  if (mode == Mode::sampled) div_vS = divergence(g, v.vS);
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 lg = s.grad_rho[i] / s.rho[i];
    out.from_density[i] = c.hbar * c.hbar / (4.0 * c.m) * (0.5 * dot(lg, lg) - s.lap_rho[i] / s.rho[i]);
    const double dv = mode == Mode::sampled ? div_vS[i]
                                            : c.hbar / (2.0 * c.m) * (s.lap_rho[i] / s.rho[i] - dot(lg, lg));
    out.from_osmotic[i] = -0.5 * c.m * dot(v.vS[i], v.vS[i]) - 0.5 * c.hbar * dv;
    diff[i] = out.from_density[i] - out.from_osmotic[i];
  }
  out.agreement = ResidualReport("quantum_potential_3d", interior_stats(g, diff),
                                 Json{{"scene", scene.label}, {"mode", mode == Mode::analytic ? "analytic" : "sampled"}});
  return out;
}

// ---------------------------------------------------------------------------
// Spin constraints

enum class Multiplicity { isolated_pair, one_parameter_family, degenerate };

inline const char* to_string(Multiplicity m) {
  switch (m) {
    case Multiplicity::isolated_pair: return "isolated_pair";
    case Multiplicity::one_parameter_family: return "one_parameter_family";
    default: return "degenerate";
  }
}

struct SpinSolution {
  Multiplicity multiplicity = Multiplicity::degenerate;
  // isolated_pair: {s, -s}; one_parameter_family: orthonormal {e1, e2}
  // spanning the solution circle; degenerate: empty.
  std::vector<Vec3> solutions;
};

// (|s|^2 - 1, v_S . s, v_B . (v_S x s))
inline std::array<double, 3> spin_residuals(Vec3 vB, Vec3 vS, Vec3 s) {
  return {dot(s, s) - 1.0, dot(vS, s), dot(vB, cross(vS, s))};
}

namespace detail {

inline Vec3 solve3(const Mat3& a, Vec3 b) {
  const double det = dot(a[0], cross(a[1], a[2]));
  if (det == 0.0) return {};
  const Vec3 c0 = cross(a[1], a[2]);
  const Vec3 c1 = cross(a[2], a[0]);
  const Vec3 c2 = cross(a[0], a[1]);
  // inverse = [c0 c1 c2] / det (columns)
  return Vec3{c0.x * b.x + c1.x * b.y + c2.x * b.z, c0.y * b.x + c1.y * b.y + c2.y * b.z,
              c0.z * b.x + c1.z * b.y + c2.z * b.z} /
         det;
}

// Newton on (|s|^2 - 1, a . s, b . s) with unit a, b.
inline Vec3 polish(Vec3 s, Vec3 a, Vec3 b) {
  for (int it = 0; it < 8; ++it) {
    const Vec3 F{dot(s, s) - 1.0, dot(a, s), dot(b, s)};
    if (std::abs(F.x) + std::abs(F.y) + std::abs(F.z) < 1e-16) break;
    const Vec3 step = solve3({2.0 * s, a, b}, F);
    s = s - step;
  }
  return s;
}

inline Vec3 any_orthogonal(Vec3 a) {
  const Vec3 trial = std::abs(a.x) < 0.9 * norm(a) ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  const Vec3 o = cross(a, trial);
  return o / norm(o);
}

// Deterministic Fibonacci lattice on the unit sphere.
inline Vec3 fibonacci_point(std::size_t i, std::size_t count) {
  constexpr double golden = 2.39996322972865332;  // pi (3 - sqrt 5)
  const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(count);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double phi = golden * static_cast<double>(i);
  return {r * std::cos(phi), r * std::sin(phi), z};
}

}  // namespace detail

// Constraints: s on the unit sphere, orthogonal to v_S and to v_B x v_S
// (since v_B . (v_S x s) = s . (v_B x v_S)). For v_S != 0 and v_B not
// parallel to v_S this pins s to +-(component of v_B orthogonal to v_S).
inline SpinSolution solve_spin(Vec3 vB, Vec3 vS) {
  SpinSolution out;
  const double nS = norm(vS);
  const double nB = norm(vB);
  if (nS <= 1e-14 * std::max(1.0, nB)) return out;
  const Vec3 a = vS / nS;
  const Vec3 nvec = cross(vB, vS);
  const double nn = norm(nvec);
  if (nn <= 1e-12 * nB * nS || nB == 0.0) {
    out.multiplicity = Multiplicity::one_parameter_family;
    const Vec3 e1 = detail::any_orthogonal(a);
    out.solutions = {e1, cross(a, e1)};
    return out;
  }
  const Vec3 b = nvec / nn;
  Vec3 s = cross(a, b);
  s = detail::polish(s / norm(s), a, b);
  auto ok = [&](Vec3 cand) {
    const auto r = spin_residuals(vB, vS, cand);
    return std::abs(r[0]) <= 1e-10 && std::abs(r[1]) <= 1e-10 && std::abs(r[2]) <= 1e-10;
  };
  if (!ok(s)) {
    // Seeded fallback: best point of a coarse sphere scan, then Newton.
    constexpr std::size_t count = 20000;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < count; ++i) {
      const Vec3 p = detail::fibonacci_point(i, count);
      const double f = std::abs(dot(a, p)) + std::abs(dot(b, p));
      if (f < best) {
        best = f;
        s = p;
      }
    }
    s = detail::polish(s, a, b);
  }
  out.multiplicity = Multiplicity::isolated_pair;
  out.solutions = {s, -s};
  return out;
}

// ---------------------------------------------------------------------------
// Current decomposition

struct SpinScene {
  std::vector<double> rho;
  std::vector<double> W;
  std::vector<Vec3> vB, vS, s, v, J0, J;
  std::vector<Vec3> eta;  // empty unless supplied
  std::vector<double> divJ;
  ResidualReport div_current;   // div J over interior nodes
  ResidualReport eta_match;     // |J - eta|, when eta is supplied
  ResidualReport gauge_shift;   // |div(J + curl b) - div J|, when b is supplied
  ResidualReport gauge_field;   // |div curl b|, when b is supplied
};

inline SpinScene current_decomposition(const FieldScene& scene, const VectorFn& s_field, const Constants& c,
                                       const Grid3D& g, Mode mode, const std::optional<VectorFn>& eta = std::nullopt,
                                       const std::optional<VectorFn>& gauge = std::nullopt, double eta_tol = 1e-6) {
  c.validate();
  const auto smp = evaluate_scene(scene, g, mode);
  const auto vel = madelung_velocities(smp, c);
  const std::size_t n = g.size();
  SpinScene out;
  out.rho = smp.rho;
  out.W = smp.W;
  out.vB = vel.vB;
  out.vS = vel.vS;
  out.s = sample(g, s_field.value);
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(dot(out.s[i], out.s[i]) - 1.0) > 1e-8) throw InputError("spin field must be unit length");
  }
  const auto curl_s = curl_field(s_field, g, mode);
  out.v.resize(n);
  out.J0.resize(n);
  out.J.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.v[i] = out.vB[i] + cross(out.vS[i], out.s[i]);
    out.J0[i] = (c.hbar * out.rho[i] / (2.0 * c.m)) * curl_s[i];
    out.J[i] = out.rho[i] * out.v[i] + out.J0[i];
  }
  const Json p{{"scene", scene.label}, {"mode", mode == Mode::analytic ? "analytic" : "sampled"}};
  out.divJ = divergence(g, out.J);
  out.div_current = ResidualReport("div_J", interior_stats(g, out.divJ), p);

  if (eta) {
    out.eta = sample(g, eta->value);
    const auto div_eta = divergence(g, out.eta);
    const auto st = interior_stats(g, div_eta);
    double scale = 0.0;
    for (const auto& e : out.eta) scale = std::max(scale, norm(e));
    if (st.max > eta_tol * std::max(1.0, scale)) {
      throw InputError("eta is not divergence-free: max |div eta| = " + std::to_string(st.max));
    }
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = norm(out.J[i] - out.eta[i]);
    out.eta_match = ResidualReport("J_vs_eta", interior_stats(g, d), p);
  }
  if (gauge) {
    const auto cb = curl_field(*gauge, g, mode);
    std::vector<Vec3> shifted(n);
    for (std::size_t i = 0; i < n; ++i) shifted[i] = out.J[i] + cb[i];
    const auto div_shift = divergence(g, shifted);
    const auto div_cb = divergence(g, cb);
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = div_shift[i] - out.divJ[i];
    out.gauge_shift = ResidualReport("gauge_shift", interior_stats(g, d), p);
    out.gauge_field = ResidualReport("div_curl_b", interior_stats(g, div_cb), p);
  }
  return out;
}

// s chosen pointwise from solve_spin; where the constraints leave s free
// the first family vector (or the x axis when fully degenerate) is used.
inline std::vector<Vec3> spin_field(const Velocities& v) {
  std::vector<Vec3> s(v.vB.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto sol = solve_spin(v.vB[i], v.vS[i]);
    s[i] = sol.solutions.empty() ? Vec3{1.0, 0.0, 0.0} : sol.solutions.front();
  }
  return s;
}

// ---------------------------------------------------------------------------
// Identities

struct StationaryReport {
  ResidualReport energy;      // (1/2m)|grad W|^2 - (hbar^2/2m) lap R / R + V - E
  ResidualReport continuity;  // div(rho grad W)
};

inline StationaryReport stationary_residual(const FieldScene& scene, const Constants& c, const Grid3D& g, Mode mode) {
  c.validate();
  const auto s = evaluate_scene(scene, g, mode);
  const std::size_t n = g.size();
  std::vector<double> e(n), cont(n);
  std::vector<double> flux_div;
  if (mode == Mode::sampled) {
    std::vector<Vec3> flux(n);
    for (std::size_t i = 0; i < n; ++i) flux[i] = s.rho[i] * s.grad_W[i];
    flux_div = divergence(g, flux);
  }
  for (std::size_t i = 0; i < n; ++i) {
    e[i] = dot(s.grad_W[i], s.grad_W[i]) / (2.0 * c.m) - c.hbar * c.hbar / (2.0 * c.m) * s.lapR_over_R[i] + s.V[i] -
           scene.E;
    cont[i] = mode == Mode::sampled ? flux_div[i] : dot(s.grad_rho[i], s.grad_W[i]) + s.rho[i] * s.lap_W[i];
  }
  const Json p{{"scene", scene.label}, {"mode", mode == Mode::analytic ? "analytic" : "sampled"}};
  return {ResidualReport("stationary_energy", interior_stats(g, e), p),
          ResidualReport("stationary_continuity", interior_stats(g, cont), p)};
}

struct SpeedReport {
  ResidualReport pythagorean;  // |v|^2 - |v_B|^2 - |v_S|^2
  ResidualReport energy_form;  // |v_B|^2 + |v_S|^2 - (2/m)(E - V) - (hbar^2/2m^2) lap rho / rho
  std::optional<ResidualReport> eta_form;  // |v|^2 - |eta/rho - (hbar/2m) curl s|^2
};

inline SpeedReport speed_identity(const FieldScene& scene, const Constants& c, const Grid3D& g, Mode mode,
                                  const std::optional<VectorFn>& s_field = std::nullopt,
                                  const std::optional<VectorFn>& eta = std::nullopt) {
  c.validate();
  const auto smp = evaluate_scene(scene, g, mode);
  const auto vel = madelung_velocities(smp, c);
  const std::vector<Vec3> s = s_field ? sample(g, s_field->value) : spin_field(vel);
  std::vector<Vec3> curl_s(g.size());
  if (s_field) curl_s = curl_field(*s_field, g, mode);
  else curl_s = curl(g, s);
  const std::size_t n = g.size();
  std::vector<double> py(n), en(n), ef;
  std::vector<Vec3> eta_v;
  if (eta) {
    eta_v = sample(g, eta->value);
    ef.resize(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 v = vel.vB[i] + cross(vel.vS[i], s[i]);
    const double vb2 = dot(vel.vB[i], vel.vB[i]);
    const double vs2 = dot(vel.vS[i], vel.vS[i]);
    py[i] = dot(v, v) - vb2 - vs2;
    en[i] = vb2 + vs2 - (2.0 / c.m) * (scene.E - smp.V[i]) -
            c.hbar * c.hbar / (2.0 * c.m * c.m) * smp.lap_rho[i] / smp.rho[i];
    if (eta) {
      const Vec3 w = eta_v[i] / smp.rho[i] - (c.hbar / (2.0 * c.m)) * curl_s[i];
      ef[i] = dot(v, v) - dot(w, w);
    }
  }
  const Json p{{"scene", scene.label}, {"mode", mode == Mode::analytic ? "analytic" : "sampled"}};
  SpeedReport rep{ResidualReport("speed_pythagorean", interior_stats(g, py), p),
                  ResidualReport("speed_energy_form", interior_stats(g, en), p), std::nullopt};
  if (eta) rep.eta_form = ResidualReport("speed_eta_form", interior_stats(g, ef), p);
  return rep;
}

// ---------------------------------------------------------------------------
// Energy derivatives of a scene family

struct TimeField {
  std::vector<Vec3> grad_W;
  std::vector<Vec3> grad_t;           // grad W_E
  std::vector<double> Q_E;
  std::vector<Vec3> xdot;             // |grad W|^2 / (m (1 - Q_E) d_i W); NaN where d_i W = 0
  std::vector<Vec3> xdot_inverse;     // 1 / d_i W_E; NaN where singular
  std::vector<std::array<bool, 3>> singular;
  ResidualReport time_gradient;                // grad W . grad t - m (1 - Q_E)
  ResidualReport energy_derivative;                // (1/m) grad W . grad W_E + Q_E - 1
  ResidualReport flux_divergence;     // div d_E(rho grad W)
};

inline TimeField time_field_3d(const SceneFamily& family, double E, const Constants& c, double step_E, const Grid3D& g,
                               Mode mode) {
  c.validate();
  if (!(step_E > 0.0)) throw InputError("step_E must be positive");
  const std::size_t n = g.size();
  std::array<std::vector<Vec3>, 5> gradW;
  std::array<std::vector<double>, 5> Q;
  std::array<std::vector<Vec3>, 5> flux;
  SceneSample centre;
  for (std::size_t k = 0; k < 5; ++k) {
    const FieldScene sc = family(E + (static_cast<double>(k) - 2.0) * step_E);
    auto smp = evaluate_scene(sc, g, mode);
    gradW[k] = smp.grad_W;
    Q[k] = quantum_potential_3d(sc, c, g, mode).from_density;
    flux[k].resize(n);
    for (std::size_t i = 0; i < n; ++i) flux[k][i] = smp.rho[i] * smp.grad_W[i];
    if (k == 2) centre = std::move(smp);
  }
  TimeField tf;
  tf.grad_W = centre.grad_W;
  tf.grad_t.resize(n);
  tf.Q_E.resize(n);
  tf.xdot.resize(n);
  tf.xdot_inverse.resize(n);
  tf.singular.resize(n);
  std::vector<Vec3> dflux(n);
  std::vector<double> r_time(n), r_energy(n);
  const double nan = std::nan("");
  for (std::size_t i = 0; i < n; ++i) {
    for (int d = 0; d < 3; ++d) {
      std::array<double, 5> gw{}, fl{};
      for (std::size_t k = 0; k < 5; ++k) {
        gw[k] = gradW[k][i][d];
        fl[k] = flux[k][i][d];
      }
      tf.grad_t[i][d] = five_point(gw, step_E, 1);
      dflux[i][d] = five_point(fl, step_E, 1);
    }
    std::array<double, 5> qv{};
    for (std::size_t k = 0; k < 5; ++k) qv[k] = Q[k][i];
    tf.Q_E[i] = five_point(qv, step_E, 1);
    const Vec3 gW = tf.grad_W[i];
    const double one_minus = 1.0 - tf.Q_E[i];
    const double gw2 = dot(gW, gW);
    for (int d = 0; d < 3; ++d) {
      const bool sing = gW[d] == 0.0 || std::abs(gW[d]) < 1e-12 * std::sqrt(gw2);
      tf.singular[i][static_cast<std::size_t>(d)] = sing;
      tf.xdot[i][d] = sing ? nan : gw2 / (c.m * one_minus * gW[d]);
      tf.xdot_inverse[i][d] = tf.grad_t[i][d] == 0.0 ? nan : 1.0 / tf.grad_t[i][d];
    }
    r_time[i] = dot(gW, tf.grad_t[i]) - c.m * one_minus;
    r_energy[i] = dot(gW, tf.grad_t[i]) / c.m + tf.Q_E[i] - 1.0;
  }
  const Json p{{"E", E}, {"step_E", step_E}, {"mode", mode == Mode::analytic ? "analytic" : "sampled"}};
  tf.time_gradient = ResidualReport("time_gradient", interior_stats(g, r_time), p);
  tf.energy_derivative = ResidualReport("energy_derivative", interior_stats(g, r_energy), p);
  tf.flux_divergence = ResidualReport("div_dE_flux", interior_stats(g, divergence(g, dflux)), p);
  return tf;
}

struct VelocityVerdict {
  double one_minus_QE_min = 0.0;
  double one_minus_QE_max = 0.0;
  double three_m = 0.0;
  double mismatch_min = 0.0;  // min over interior nodes of |(1 - Q_E) - 3m|
  double mismatch_max = 0.0;
  double summed_component_ratio = 0.0;  // m (1 - Q_E) xdot . grad W / |grad W|^2, mean over interior nodes
  double summed_component_target = 3.0;
  ResidualReport v_dot_vB;  // v . v_B - |v_B|^2
  bool current_is_not_trajectory = false;

  Json to_json() const {
    Json j;
    j["one_minus_QE_min"] = one_minus_QE_min;
    j["one_minus_QE_max"] = one_minus_QE_max;
    j["three_m"] = three_m;
    j["mismatch_min"] = mismatch_min;
    j["mismatch_max"] = mismatch_max;
    j["summed_component_ratio"] = summed_component_ratio;
    j["summed_component_target"] = summed_component_target;
    j["v_dot_vB"] = v_dot_vB.to_json();
    j["current_is_not_trajectory"] = current_is_not_trajectory;
    return j;
  }
};

// Identifying the current velocity v with dx/dt would force (1 - Q_E) = 3m;
// the verdict reports how far the family is from that.
inline VelocityVerdict current_vs_trajectory_report(const SceneFamily& family, double E, const Constants& c,
                                                    double step_E, const Grid3D& g, Mode mode,
                                                    double threshold = 0.1) {
  const auto tf = time_field_3d(family, E, c, step_E, g, mode);
  const FieldScene scene = family(E);
  const auto vel = madelung_velocities(scene, c, g, mode);
  const auto s = spin_field(vel);
  VelocityVerdict out;
  out.three_m = 3.0 * c.m;
  out.one_minus_QE_min = std::numeric_limits<double>::infinity();
  out.one_minus_QE_max = -std::numeric_limits<double>::infinity();
  out.mismatch_min = std::numeric_limits<double>::infinity();
  std::vector<double> vv(g.size());
  double lhs_sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec3 v = vel.vB[i] + cross(vel.vS[i], s[i]);
    vv[i] = dot(v, vel.vB[i]) - dot(vel.vB[i], vel.vB[i]);
    if (!g.interior(i)) continue;
    const double om = 1.0 - tf.Q_E[i];
    out.one_minus_QE_min = std::min(out.one_minus_QE_min, om);
    out.one_minus_QE_max = std::max(out.one_minus_QE_max, om);
    const double mm = std::abs(om - out.three_m);
    out.mismatch_min = std::min(out.mismatch_min, mm);
    out.mismatch_max = std::max(out.mismatch_max, mm);
    const double gw2 = dot(tf.grad_W[i], tf.grad_W[i]);
    if (gw2 > 0.0) {
      double lhs = 0.0;
      for (int d = 0; d < 3; ++d) {
        if (!tf.singular[i][static_cast<std::size_t>(d)]) lhs += tf.xdot[i][d] * tf.grad_W[i][d];
      }
      lhs_sum += c.m * om * lhs / gw2;
      ++count;
    }
  }
  out.summed_component_ratio = count ? lhs_sum / static_cast<double>(count) : 0.0;
  out.v_dot_vB = ResidualReport("v_dot_vB", interior_stats(g, vv), Json{{"scene", scene.label}});
  out.current_is_not_trajectory = out.mismatch_min > threshold;
  return out;
}

// ---------------------------------------------------------------------------
// Explicit solvable family: s = i, grad rho along j, 2 rho^(1/2) = alpha y + beta

struct AlignedDensityExample {
  FieldScene scene;
  VectorFn s;
  VectorFn eta;  // (rho W1/m, rho W2/m, -hbar rho_y/(2m))
  ResidualReport density_balance;
  ResidualReport rho_identity;  // rho rho_yy - (1/2) rho_y^2
  ResidualReport direction;     // |d rho/dx| + |d rho/dz|
  bool degenerate_spin = false; // rho_y = 0 everywhere: v_S = 0
};

namespace detail {

inline void finish_aligned_density(AlignedDensityExample& ex, double W1, double W2, const Constants& c, const Grid3D& g, Mode mode) {
  const auto smp = evaluate_scene(ex.scene, g, mode);
  const std::size_t n = g.size();
  std::vector<double> r_balance(n), rid(n), dir(n);
  bool all_flat = true;
  for (std::size_t i = 0; i < n; ++i) {
    const double rho = smp.rho[i];
    const double ry = smp.grad_rho[i].y;
    const double ryy = smp.rho_yy[i];
    const double m = c.m;
    const double hb = c.hbar;
    r_balance[i] = 2.0 * rho * rho / m * (ex.scene.E - smp.V[i]) + hb * hb * rho * ryy / (2.0 * m * m) -
             rho * rho / (m * m) * (W1 * W1 + W2 * W2) - hb * hb * ry * ry / (4.0 * m * m);
    rid[i] = rho * ryy - 0.5 * ry * ry;
    dir[i] = std::abs(smp.grad_rho[i].x) + std::abs(smp.grad_rho[i].z);
    if (ry != 0.0) all_flat = false;
  }
  const Json p{{"scene", ex.scene.label}, {"mode", mode == Mode::analytic ? "analytic" : "sampled"}};
  ex.density_balance = ResidualReport("density_balance", interior_stats(g, r_balance), p);
  ex.rho_identity = ResidualReport("rho_identity", interior_stats(g, rid), p);
  ex.direction = ResidualReport("grad_rho_direction", interior_stats(g, dir), p);
  ex.degenerate_spin = all_flat;
}

inline VectorFn eta_aligned_density(const ScalarFn& rho, double W1, double W2, const Constants& c, double alpha) {
  const double m = c.m;
  const double hb = c.hbar;
  VectorFn eta;
  eta.value = [=](const Vec3& p) {
    const Vec3 gr = rho.grad ? rho.grad(p) : Vec3{};
    const double r = rho.value(p);
    return Vec3{r * W1 / m, r * W2 / m, -hb * gr.y / (2.0 * m)};
  };
  if (rho.grad && rho.second) {
    eta.jacobian = [=](const Vec3& p) {
      const Vec3 gr = rho.grad(p);
      const double ryy = rho.second(p).y;
      (void)alpha;
      return Mat3{Vec3{gr.x * W1 / m, gr.y * W1 / m, gr.z * W1 / m}, Vec3{gr.x * W2 / m, gr.y * W2 / m, gr.z * W2 / m},
                  Vec3{0.0, -hb * ryy / (2.0 * m), 0.0}};
    };
  }
  return eta;
}

}  // namespace detail

// alpha, beta constant: grad rho is exactly along j. V = E - (W1^2 + W2^2)/(2m).
inline AlignedDensityExample aligned_density_build(double alpha, double beta, double W1, double W2, double E, const Constants& c,
                                  const Grid3D& g, Mode mode = Mode::analytic) {
  c.validate();
  for (std::size_t j = 0; j < g.n(1); ++j) {
    const double y = g.coord(1, j);
    if (!(alpha * y + beta > 0.0)) {
      throw DomainError("alpha*y + beta must be positive (rho^(1/2) > 0); fails at y=" + std::to_string(y));
    }
  }
  AlignedDensityExample ex;
  ScalarFn rho;
  rho.value = [=](const Vec3& p) {
    const double r = 0.5 * (alpha * p.y + beta);
    return r * r;
  };
  rho.grad = [=](const Vec3& p) { return Vec3{0.0, 0.5 * alpha * (alpha * p.y + beta), 0.0}; };
  rho.second = [=](const Vec3&) { return Vec3{0.0, 0.5 * alpha * alpha, 0.0}; };
  ScalarFn W;
  W.value = [=](const Vec3& p) { return W1 * p.x + W2 * p.y; };
  W.grad = [=](const Vec3&) { return Vec3{W1, W2, 0.0}; };
  W.second = [](const Vec3&) { return Vec3{}; };
  ex.scene = FieldScene{rho, W, ScalarFn::constant(E - (W1 * W1 + W2 * W2) / (2.0 * c.m)), E, "aligned_density"};
  ex.s = VectorFn::constant({1.0, 0.0, 0.0});
  ex.eta = detail::eta_aligned_density(rho, W1, W2, c, alpha);
  detail::finish_aligned_density(ex, W1, W2, c, g, mode);
  return ex;
}

// alpha(x, z), beta(x, z) general: only values are known, so the scene is
// evaluated in sampled mode and the direction of grad rho is reported.
inline AlignedDensityExample aligned_density_build(const std::function<double(double, double)>& alpha,
                                  const std::function<double(double, double)>& beta, double W1, double W2, double E,
                                  const Constants& c, const Grid3D& g) {
  c.validate();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec3 p = g.node(i);
    if (!(alpha(p.x, p.z) * p.y + beta(p.x, p.z) > 0.0)) {
      throw DomainError("alpha*y + beta must be positive (rho^(1/2) > 0)");
    }
  }
  AlignedDensityExample ex;
  ScalarFn rho;
  rho.value = [=](const Vec3& p) {
    const double r = 0.5 * (alpha(p.x, p.z) * p.y + beta(p.x, p.z));
    return r * r;
  };
  ScalarFn W;
  W.value = [=](const Vec3& p) { return W1 * p.x + W2 * p.y; };
  ex.scene = FieldScene{rho, W, ScalarFn::constant(E - (W1 * W1 + W2 * W2) / (2.0 * c.m)), E, "aligned_density_general"};
  ex.s = VectorFn::constant({1.0, 0.0, 0.0});
  const double m = c.m;
  const double hb = c.hbar;
  const Grid3D grid = g;
  // eta_3 needs rho_y: sampled through a central difference at the grid's y spacing.
  const double hy = g.spacing(1);
  ex.eta.value = [=](const Vec3& p) {
    const double r = rho.value(p);
    auto at = [&](double dy) { return rho.value({p.x, p.y + dy, p.z}); };
    const double ry = (at(-2 * hy) - 8 * at(-hy) + 8 * at(hy) - at(2 * hy)) / (12 * hy);
    return Vec3{r * W1 / m, r * W2 / m, -hb * ry / (2.0 * m)};
  };
  (void)grid;
  detail::finish_aligned_density(ex, W1, W2, c, g, Mode::sampled);
  return ex;
}

// ---------------------------------------------------------------------------
// Shipped E-families (V held fixed while E varies)

// rho = 1, W = sqrt(2m(E - V0)) x.
inline SceneFamily plane_wave_family(const Constants& c, double V0 = 0.0) {
  return [=](double E) {
    const double k = std::sqrt(2.0 * c.m * (E - V0));
    ScalarFn W;
    W.value = [k](const Vec3& p) { return k * p.x; };
    W.grad = [k](const Vec3&) { return Vec3{k, 0.0, 0.0}; };
    W.second = [](const Vec3&) { return Vec3{}; };
    return FieldScene{ScalarFn::constant(1.0), W, ScalarFn::constant(V0), E, "plane_wave"};
  };
}

// aligned_density scene with W2 fixed and W1 = sqrt(2m(E - V0) - W2^2).
inline SceneFamily aligned_density_family(const Constants& c, const Grid3D& g, double alpha, double beta, double W2 = 0.0,
                                     double V0 = 0.0) {
  return [=](double E) {
    const double W1 = std::sqrt(2.0 * c.m * (E - V0) - W2 * W2);
    return aligned_density_build(alpha, beta, W1, W2, E, c, g).scene;
  };
}

// rho = exp(2y), W = k x with k^2 = 2m(E - V0) + hbar^2; Q = -hbar^2/2m.
inline SceneFamily exp_density_family(const Constants& c, double V0 = 0.0) {
  return [=](double E) {
    const double k = std::sqrt(2.0 * c.m * (E - V0) + c.hbar * c.hbar);
    ScalarFn rho;
    rho.value = [](const Vec3& p) { return std::exp(2.0 * p.y); };
    rho.grad = [](const Vec3& p) { return Vec3{0.0, 2.0 * std::exp(2.0 * p.y), 0.0}; };
    rho.second = [](const Vec3& p) { return Vec3{0.0, 4.0 * std::exp(2.0 * p.y), 0.0}; };
    ScalarFn W;
    W.value = [k](const Vec3& p) { return k * p.x; };
    W.grad = [k](const Vec3&) { return Vec3{k, 0.0, 0.0}; };
    W.second = [](const Vec3&) { return Vec3{}; };
    return FieldScene{rho, W, ScalarFn::constant(V0), E, "exp_density"};
  };
}

}  // namespace qtraj::spin
