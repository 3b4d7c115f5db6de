#pragma once

// Grid algebra on uniform 1-D grids: 4th-order finite-difference stencils,
// cubic-exact quadrature, monotone table inversion and five-point
// differentiation with respect to a scalar parameter.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qtraj/error.hpp"

namespace qtraj {

// Verification suites skip this many nodes at each edge of a grid.
inline constexpr std::size_t kEdgeNodes = 4;

class Grid1D {
 public:
  Grid1D(double q_min, double q_max, std::size_t n) : q_min_(q_min), q_max_(q_max), n_(n) {
    if (!std::isfinite(q_min) || !std::isfinite(q_max)) throw InputError("grid bounds must be finite");
    if (!(q_max > q_min)) throw InputError("grid requires q_max > q_min");
    if (n < 9) throw InputError("grid requires at least 9 nodes, got " + std::to_string(n));
    h_ = (q_max - q_min) / static_cast<double>(n - 1);
  }

  double q_min() const noexcept { return q_min_; }
  double q_max() const noexcept { return q_max_; }
  std::size_t size() const noexcept { return n_; }
  double spacing() const noexcept { return h_; }

  double node(std::size_t i) const noexcept {
    return i + 1 == n_ ? q_max_ : q_min_ + static_cast<double>(i) * h_;
  }

  std::vector<double> nodes() const {
    std::vector<double> out(n_);
    for (std::size_t i = 0; i < n_; ++i) out[i] = node(i);
    return out;
  }

  bool contains(double q) const noexcept {
    const double slack = 1e-12 * (q_max_ - q_min_);
    return q >= q_min_ - slack && q <= q_max_ + slack;
  }

  // Cell index i in [0, n-2] and fractional offset s in [0, 1] of q.
  std::pair<std::size_t, double> locate(double q) const {
    if (!contains(q)) throw RangeError("position " + std::to_string(q) + " outside grid");
    double pos = (q - q_min_) / h_;
    pos = std::clamp(pos, 0.0, static_cast<double>(n_ - 1));
    auto i = static_cast<std::size_t>(std::floor(pos));
    if (i > n_ - 2) i = n_ - 2;
    return {i, pos - static_cast<double>(i)};
  }

  // Refined grid with `factor` times as many cells over the same range.
  Grid1D refined(std::size_t factor) const { return Grid1D(q_min_, q_max_, (n_ - 1) * factor + 1); }

  friend bool operator==(const Grid1D& a, const Grid1D& b) noexcept {
    return a.q_min_ == b.q_min_ && a.q_max_ == b.q_max_ && a.n_ == b.n_;
  }

 private:
  double q_min_;
  double q_max_;
  std::size_t n_;
  double h_;
};

class SampledField1D {
 public:
  SampledField1D(Grid1D grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size()) {
      throw InputError("field has " + std::to_string(values_.size()) + " values for " +
                       std::to_string(grid_.size()) + " nodes");
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i])) throw InputError("non-finite field value at node " + std::to_string(i));
    }
  }

  static SampledField1D sample(const Grid1D& grid, const std::function<double(double)>& f) {
    std::vector<double> v(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) v[i] = f(grid.node(i));
    return {grid, std::move(v)};
  }

  const Grid1D& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

 private:
  Grid1D grid_;
  std::vector<double> values_;
};

namespace detail {

// Fornberg's recursion for the weights of the `order`-th derivative at x0 on
// arbitrary distinct nodes.
inline std::vector<double> fd_weights(double x0, std::span<const double> x, int order) {
  const std::size_t n = x.size();
  const auto m = static_cast<std::size_t>(order);
  std::vector<std::vector<double>> c(n, std::vector<double>(m + 1, 0.0));
  double c1 = 1.0;
  double c4 = x[0] - x0;
  c[0][0] = 1.0;
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t mn = std::min(i, m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x[i] - x0;
    for (std::size_t j = 0; j < i; ++j) {
      const double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (std::size_t k = mn; k >= 1; --k) {
          c[i][k] = c1 * (static_cast<double>(k) * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        }
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (std::size_t k = mn; k >= 1; --k) {
        c[j][k] = (c4 * c[j][k] - static_cast<double>(k) * c[j][k - 1]) / c3;
      }
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = c[i][m];
  return w;
}

inline double lagrange4(std::span<const double, 4> y, double x) {
  const double l0 = -(x - 1.0) * (x - 2.0) * (x - 3.0) / 6.0;
  const double l1 = x * (x - 2.0) * (x - 3.0) / 2.0;
  const double l2 = -x * (x - 1.0) * (x - 3.0) / 2.0;
  const double l3 = x * (x - 1.0) * (x - 2.0) / 6.0;
  return l0 * y[0] + l1 * y[1] + l2 * y[2] + l3 * y[3];
}

inline std::size_t cubic_window(std::size_t cell, std::size_t n) {
  return std::min(cell == 0 ? std::size_t{0} : cell - 1, n - 4);
}

// Integral of the local cubic interpolant over [x_cell, x_cell + s*h] in units of h.
inline double cell_integral(std::span<const double> v, std::size_t cell, double s) {
  if (s == 0.0) return 0.0;
  const std::size_t j0 = cubic_window(cell, v.size());
  const std::span<const double, 4> y(v.data() + j0, 4);
  const double off = static_cast<double>(cell - j0);
  // Three-point Gauss-Legendre is exact on the cubic.
  static constexpr std::array<double, 3> xi{-0.7745966692414834, 0.0, 0.7745966692414834};
  static constexpr std::array<double, 3> wt{5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  double acc = 0.0;
  for (std::size_t k = 0; k < 3; ++k) acc += wt[k] * lagrange4(y, off + 0.5 * s * (1.0 + xi[k]));
  return 0.5 * s * acc;
}

inline std::vector<double> cumulative_nodes(std::span<const double> v) {
  std::vector<double> cum(v.size(), 0.0);
  for (std::size_t i = 0; i + 1 < v.size(); ++i) cum[i + 1] = cum[i] + cell_integral(v, i, 1.0);
  return cum;
}

}  // namespace detail

// One row of a finite-difference operator: weights (unscaled by h) applied to
// samples [start, start + weights.size()).
struct StencilRow {
  std::size_t start = 0;
  std::vector<double> weights;
};

// Centered stencils of 4th-order accuracy in the interior (5 points for
// orders 1 and 2, 7 for order 3); one-sided windows of order+4 points near
// the ends keep the same accuracy.
inline StencilRow stencil_row(int order, std::size_t n, std::size_t i) {
  if (order < 1 || order > 3) throw InputError("derivative order must be 1, 2 or 3");
  if (n < 9) throw InputError("stencils need at least 9 nodes");
  const std::size_t centered = order == 2 ? 5 : static_cast<std::size_t>(order) + 4;
  const std::size_t half = centered / 2;
  std::size_t width = centered;
  std::size_t start = 0;
  if (i >= half && i + half < n) {
    start = i - half;
  } else {
    width = static_cast<std::size_t>(order) + 4;
    start = i < width / 2 ? 0 : std::min(i - width / 2, n - width);
  }
  std::vector<double> offsets(width);
  for (std::size_t k = 0; k < width; ++k) {
    offsets[k] = static_cast<double>(start + k) - static_cast<double>(i);
  }
  return {start, detail::fd_weights(0.0, offsets, order)};
}

// Applies the order-th derivative stencil to samples with uniform spacing h.
inline std::vector<double> differentiate(std::span<const double> v, double h, int order) {
  const std::size_t n = v.size();
  if (n < 9) throw InputError("differentiation needs at least 9 nodes, got " + std::to_string(n));
  const double scale = std::pow(h, -order);
  std::vector<double> out(n);
  StencilRow interior;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t half = order == 2 ? 2 : static_cast<std::size_t>(order + 4) / 2;
    const bool is_interior = i >= half && i + half < n;
    StencilRow row;
    if (is_interior) {
      if (interior.weights.empty()) interior = stencil_row(order, n, i);
      row.start = i - half;
      row.weights = interior.weights;
    } else {
      row = stencil_row(order, n, i);
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < row.weights.size(); ++k) acc += row.weights[k] * v[row.start + k];
    out[i] = acc * scale;
  }
  return out;
}

inline SampledField1D diff_central(const SampledField1D& field, int order) {
  if (order < 1 || order > 3) throw InputError("derivative order must be 1, 2 or 3");
  return {field.grid(), differentiate(field.values(), field.grid().spacing(), order)};
}

// Composite quadrature, exact on piecewise cubics, between arbitrary points
// of the grid range.
inline double integrate(const SampledField1D& field, double q_lo, double q_hi) {
  const Grid1D& g = field.grid();
  if (!g.contains(q_lo) || !g.contains(q_hi)) throw InputError("integration limits outside grid range");
  const auto v = field.values();
  const auto cum = detail::cumulative_nodes(v);
  auto antiderivative = [&](double q) {
    const auto [i, s] = g.locate(q);
    return cum[i] + detail::cell_integral(v, i, s);
  };
  return (antiderivative(q_hi) - antiderivative(q_lo)) * g.spacing();
}

// Node values of the integral from `anchor` to each node.
inline SampledField1D cumulative_integral(const SampledField1D& field, double anchor) {
  const Grid1D& g = field.grid();
  const auto v = field.values();
  const auto [i, s] = g.locate(anchor);
  auto cum = detail::cumulative_nodes(v);
  const double base = cum[i] + detail::cell_integral(v, i, s);
  for (double& c : cum) c = (c - base) * g.spacing();
  return {g, std::move(cum)};
}

// Cubic interpolation of a sampled field at an arbitrary position.
inline double interpolate(const SampledField1D& field, double q) {
  const auto [i, s] = field.grid().locate(q);
  const std::size_t j0 = detail::cubic_window(i, field.size());
  const std::span<const double, 4> y(field.values().data() + j0, 4);
  return detail::lagrange4(y, static_cast<double>(i - j0) + s);
}

// Solves y(x) = y for a strictly monotone table using the local cubic
// interpolant of the bracketing cell.
inline double invert_monotone(std::span<const double> xs, std::span<const double> ys, double y) {
  const std::size_t n = ys.size();
  if (xs.size() != n || n < 2) throw InputError("inversion tables must have equal length >= 2");
  const bool increasing = ys[1] > ys[0];
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const bool ok = increasing ? ys[i + 1] > ys[i] : ys[i + 1] < ys[i];
    if (!ok) throw InputError("table is not strictly monotone at index " + std::to_string(i));
    if (!(xs[i + 1] > xs[i])) throw InputError("abscissae must be strictly increasing");
  }
  const double lo = increasing ? ys.front() : ys.back();
  const double hi = increasing ? ys.back() : ys.front();
  if (!(y >= lo && y <= hi)) throw RangeError("value " + std::to_string(y) + " outside table range");

  std::size_t k = 0;
  {
    std::size_t a = 0;
    std::size_t b = n - 1;
    while (b - a > 1) {
      const std::size_t mid = (a + b) / 2;
      const bool below = increasing ? ys[mid] <= y : ys[mid] >= y;
      (below ? a : b) = mid;
    }
    k = a;
  }
  if (ys[k] == y) return xs[k];
  if (ys[k + 1] == y) return xs[k + 1];

  auto interp = [&](double x) {
    if (n < 4) return ys[k] + (ys[k + 1] - ys[k]) * (x - xs[k]) / (xs[k + 1] - xs[k]);
    const std::size_t j0 = detail::cubic_window(k, n);
    double acc = 0.0;
    for (std::size_t j = j0; j < j0 + 4; ++j) {
      double l = 1.0;
      for (std::size_t m = j0; m < j0 + 4; ++m) {
        if (m != j) l *= (x - xs[m]) / (xs[j] - xs[m]);
      }
      acc += l * ys[j];
    }
    return acc;
  };

  double a = xs[k];
  double b = xs[k + 1];
  double fa = ys[k] - y;
  for (int it = 0; it < 200 && b - a > 0.0; ++it) {
    const double mid = 0.5 * (a + b);
    if (mid == a || mid == b) break;
    const double fm = interp(mid) - y;
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (fa < 0.0)) {
      a = mid;
      fa = fm;
    } else {
      b = mid;
    }
  }
  return 0.5 * (a + b);
}

// Derivative from samples at x0-2h, x0-h, x0, x0+h, x0+2h. Order 1 is the
// 4th-order central difference; order 2 is the Richardson combination of the
// second differences at h and 2h.
inline double five_point(const std::array<double, 5>& f, double step, int order) {
  if (order == 1) return (f[0] - 8.0 * f[1] + 8.0 * f[3] - f[4]) / (12.0 * step);
  if (order == 2) {
    const double d1 = (f[1] - 2.0 * f[2] + f[3]) / (step * step);
    const double d2 = (f[0] - 2.0 * f[2] + f[4]) / (4.0 * step * step);
    return (4.0 * d1 - d2) / 3.0;
  }
  throw InputError("parameter derivative order must be 1 or 2");
}

inline double param_derivative(const std::function<double(double)>& f, double x0, double step, int order) {
  if (!(step > 0.0)) throw InputError("parameter step must be positive");
  if (order != 1 && order != 2) throw InputError("parameter derivative order must be 1 or 2");
  std::array<double, 5> vals{};
  for (int k = -2; k <= 2; ++k) {
    vals[static_cast<std::size_t>(k + 2)] = k == 0 && order == 1 ? 0.0 : f(x0 + k * step);
  }
  return five_point(vals, step, order);
}

struct Residuals {
  double max = 0.0;
  double rms = 0.0;
  std::size_t nodes = 0;
};

// max and RMS of |values| over [lo, hi).
inline Residuals residual_stats(std::span<const double> values, std::size_t lo, std::size_t hi) {
  Residuals r;
  double ss = 0.0;
  for (std::size_t i = lo; i < hi && i < values.size(); ++i) {
    const double a = std::abs(values[i]);
    r.max = std::max(r.max, a);
    ss += a * a;
    ++r.nodes;
  }
  r.rms = r.nodes ? std::sqrt(ss / static_cast<double>(r.nodes)) : 0.0;
  return r;
}

inline Residuals interior_stats(std::span<const double> values) {
  return residual_stats(values, kEdgeNodes, values.size() - kEdgeNodes);
}

}  // namespace qtraj
