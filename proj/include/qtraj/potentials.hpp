#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "qtraj/error.hpp"
#include "qtraj/numerics.hpp"

namespace qtraj {

struct FreePotential {};

struct LinearPotential {
  double slope = 0.0;
};

struct HarmonicPotential {
  double stiffness = 0.0;
};

// -depth for |q| < half_width, 0 outside.
struct SquareWellPotential {
  double depth = 0.0;
  double half_width = 0.0;
};

// Natural cubic spline through (q, V) nodes.
class TabulatedPotential {
 public:
  TabulatedPotential(std::vector<double> q, std::vector<double> v) : q_(std::move(q)), v_(std::move(v)) {
    if (q_.size() != v_.size() || q_.size() < 2) throw InputError("tabulated potential needs >= 2 (q, V) rows");
    for (std::size_t i = 0; i < q_.size(); ++i) {
      if (!std::isfinite(q_[i]) || !std::isfinite(v_[i])) throw InputError("tabulated potential has non-finite entry");
      if (i > 0 && !(q_[i] > q_[i - 1])) throw InputError("tabulated q column must be strictly increasing");
    }
    build_spline();
  }

  explicit TabulatedPotential(const SampledField1D& field)
      : TabulatedPotential(field.grid().nodes(), std::vector<double>(field.values().begin(), field.values().end())) {}

  double q_min() const noexcept { return q_.front(); }
  double q_max() const noexcept { return q_.back(); }

  double operator()(double q) const {
    const double slack = 1e-12 * (q_max() - q_min());
    if (!(q >= q_min() - slack && q <= q_max() + slack)) {
      throw RangeError("q=" + std::to_string(q) + " outside tabulated potential range");
    }
    q = std::clamp(q, q_min(), q_max());
    auto it = std::upper_bound(q_.begin(), q_.end(), q);
    std::size_t k = it == q_.begin() ? 0 : static_cast<std::size_t>(it - q_.begin()) - 1;
    if (k >= q_.size() - 1) k = q_.size() - 2;
    const double h = q_[k + 1] - q_[k];
    const double a = (q_[k + 1] - q) / h;
    const double b = (q - q_[k]) / h;
    return a * v_[k] + b * v_[k + 1] + ((a * a * a - a) * m_[k] + (b * b * b - b) * m_[k + 1]) * h * h / 6.0;
  }

 private:
  void build_spline() {
    const std::size_t n = q_.size();
    m_.assign(n, 0.0);
    if (n < 3) return;
    std::vector<double> c(n, 0.0);
    std::vector<double> d(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = q_[i] - q_[i - 1];
      const double h1 = q_[i + 1] - q_[i];
      const double rhs = 6.0 * ((v_[i + 1] - v_[i]) / h1 - (v_[i] - v_[i - 1]) / h0);
      const double diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
      c[i] = h1 / diag;
      d[i] = (rhs - h0 * d[i - 1]) / diag;
    }
    for (std::size_t i = n - 2; i >= 1; --i) m_[i] = d[i] - c[i] * m_[i + 1];
  }

  std::vector<double> q_;
  std::vector<double> v_;
  std::vector<double> m_;
};

class Potential {
 public:
  using Kind = std::variant<FreePotential, LinearPotential, HarmonicPotential, SquareWellPotential, TabulatedPotential>;

  Potential() = default;
  Potential(Kind kind) : kind_(std::move(kind)) { validate(); }  // NOLINT(google-explicit-constructor)

  static Potential free() { return {FreePotential{}}; }
  static Potential linear(double g) { return {LinearPotential{g}}; }
  static Potential harmonic(double k) { return {HarmonicPotential{k}}; }
  static Potential square_well(double depth, double half_width) { return {SquareWellPotential{depth, half_width}}; }

  const Kind& kind() const noexcept { return kind_; }

  std::string name() const {
    return std::visit(
        [](const auto& p) -> std::string {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, FreePotential>) return "free";
          if constexpr (std::is_same_v<T, LinearPotential>) return "linear";
          if constexpr (std::is_same_v<T, HarmonicPotential>) return "harmonic";
          if constexpr (std::is_same_v<T, SquareWellPotential>) return "square_well";
          if constexpr (std::is_same_v<T, TabulatedPotential>) return "tabulated";
        },
        kind_);
  }

  double evaluate(double q) const {
    if (!std::isfinite(q)) throw InputError("potential evaluated at non-finite position");
    return std::visit(
        [q](const auto& p) -> double {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, FreePotential>) return 0.0;
          if constexpr (std::is_same_v<T, LinearPotential>) return p.slope * q;
          if constexpr (std::is_same_v<T, HarmonicPotential>) return 0.5 * p.stiffness * q * q;
          if constexpr (std::is_same_v<T, SquareWellPotential>) return std::abs(q) < p.half_width ? -p.depth : 0.0;
          if constexpr (std::is_same_v<T, TabulatedPotential>) return p(q);
        },
        kind_);
  }

  double operator()(double q) const { return evaluate(q); }

  // Positions where V jumps.
  std::vector<double> breakpoints() const {
    if (const auto* w = std::get_if<SquareWellPotential>(&kind_)) return {-w->half_width, w->half_width};
    return {};
  }

  // V at q for an integration cell [lo, hi] that contains no breakpoint in
  // its interior. Piecewise-constant potentials are sampled at the cell
  // centre so that a node sitting on a jump takes the value of this cell.
  double evaluate_in_cell(double q, double lo, double hi) const {
    if (std::holds_alternative<SquareWellPotential>(kind_)) return evaluate(0.5 * (lo + hi));
    return evaluate(q);
  }

 private:
  void validate() const {
    std::visit(
        [](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, LinearPotential>) {
            if (!std::isfinite(p.slope)) throw InputError("linear slope must be finite");
          } else if constexpr (std::is_same_v<T, HarmonicPotential>) {
            if (!std::isfinite(p.stiffness)) throw InputError("harmonic stiffness must be finite");
          } else if constexpr (std::is_same_v<T, SquareWellPotential>) {
            if (!std::isfinite(p.depth) || !std::isfinite(p.half_width)) throw InputError("square well parameters must be finite");
            if (!(p.half_width > 0.0)) throw InputError("square well half-width must be positive");
          }
        },
        kind_);
  }

  Kind kind_ = FreePotential{};
};

namespace detail {

inline bool parse_double(const std::string& s, double& out) {
  const char* begin = s.c_str();
  while (*begin == ' ' || *begin == '\t') ++begin;
  if (*begin == '\0') return false;
  char* end = nullptr;
  out = std::strtod(begin, &end);
  while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
  return end != begin && *end == '\0';
}

}  // namespace detail

// Two-column CSV (q, V); a non-numeric first row is taken as a header.
inline Potential load_tabulated_csv(std::istream& in) {
  std::vector<double> q;
  std::vector<double> v;
  std::string line;
  std::size_t row = 0;
  if (in.peek() == 0xEF) {
    char bom[3];
    in.read(bom, 3);
  }
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw InputError("potential CSV row " + std::to_string(row) + " has no comma");
    double a = 0.0;
    double b = 0.0;
    const bool ok = detail::parse_double(line.substr(0, comma), a) && detail::parse_double(line.substr(comma + 1), b);
    if (!ok) {
      if (q.empty() && row == 1) continue;
      throw InputError("potential CSV row " + std::to_string(row) + " is not two numbers");
    }
    q.push_back(a);
    v.push_back(b);
  }
  return Potential(TabulatedPotential(std::move(q), std::move(v)));
}

inline Potential load_tabulated_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open potential table " + path);
  return load_tabulated_csv(in);
}

}  // namespace qtraj
