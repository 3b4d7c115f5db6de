#pragma once

// CSV / JSON / SVG writers. Every file goes through write_atomic, so readers
// never see a half-written output and reruns produce identical bytes.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "qtraj/error.hpp"
#include "qtraj/floyd.hpp"
#include "qtraj/qshje.hpp"
#include "qtraj/report.hpp"
#include "qtraj/spin3d.hpp"

namespace qtraj::io {

// 17 significant digits, '.' decimal point regardless of locale.
inline std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  std::string s(buf);
  for (auto& ch : s) {
    if (ch == ',') ch = '.';
  }
  return s;
}

inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw InputError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw InputError("cannot rename into " + path.string() + ": " + ec.message());
  }
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : cols_(header.size()) { line(header); }

  void row(std::initializer_list<double> values) {
    if (values.size() != cols_) throw InputError("csv row width mismatch");
    bool first = true;
    for (double v : values) {
      if (!first) os_ << ',';
      os_ << fmt(v);
      first = false;
    }
    os_ << '\n';
  }

  std::string str() const { return os_.str(); }

 private:
  void line(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << cells[i];
    os_ << '\n';
  }

  std::size_t cols_;
  std::ostringstream os_;
};

inline std::string slice_csv(const ActionSlice& s) {
  CsvTable t({"q", "W", "Wp", "Wpp", "R", "rho", "Q", "scriptW"});
  for (std::size_t i = 0; i < s.grid.size(); ++i) {
    t.row({s.grid.node(i), s.W[i], s.Wp[i], s.Wpp[i], s.R[i], s.rho[i], s.Q[i], s.scriptW[i]});
  }
  return t.str();
}

inline std::string trajectory_csv(const Trajectory& tr) {
  CsvTable t({"q", "t", "tau", "qdot", "dtau_dt"});
  for (std::size_t i = 0; i < tr.q.size(); ++i) t.row({tr.q[i], tr.t[i], tr.tau[i], tr.qdot[i], tr.dtau_dt[i]});
  return t.str();
}

inline std::string scene_csv(const spin::Grid3D& g, const spin::SpinScene& sc) {
  CsvTable t({"x", "y", "z", "rho", "W", "sx", "sy", "sz", "Jx", "Jy", "Jz"});
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto p = g.node(i);
    t.row({p.x, p.y, p.z, sc.rho[i], sc.W[i], sc.s[i].x, sc.s[i].y, sc.s[i].z, sc.J[i].x, sc.J[i].y, sc.J[i].z});
  }
  return t.str();
}

inline std::string json_text(const Json& j) { return j.dump(2) + "\n"; }

// Static line plot: frame, one polyline, axis labels and extents.
inline std::string line_svg(const std::vector<double>& xs, const std::vector<double>& ys, const std::string& xlabel,
                            const std::string& ylabel, const std::string& title) {
  constexpr double W = 640, H = 420, L = 70, R = 20, T = 40, B = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) continue;
    x0 = std::min(x0, xs[i]);
    x1 = std::max(x1, xs[i]);
    y0 = std::min(y0, ys[i]);
    y1 = std::max(y1, ys[i]);
  }
  if (!(x1 > x0)) x1 = x0 + 1.0;
  if (!(y1 > y0)) y1 = y0 + 1.0;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  auto num = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.6g", v);
    return std::string(b);
  };
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n"
     << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
     << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
  bool first = true;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) continue;
    os << (first ? "" : " ") << num(px(xs[i])) << ',' << num(py(ys[i]));
    first = false;
  }
  os << "\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"" << T - 15 << "\" text-anchor=\"middle\">" << title << "</text>\n"
     << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << xlabel << "</text>\n"
     << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << (T + H - B) / 2 << ")\">" << ylabel << "</text>\n"
     << "<text x=\"" << L << "\" y=\"" << H - B + 16 << "\" text-anchor=\"start\">" << num(x0) << "</text>\n"
     << "<text x=\"" << W - R << "\" y=\"" << H - B + 16 << "\" text-anchor=\"end\">" << num(x1) << "</text>\n"
     << "<text x=\"" << L - 4 << "\" y=\"" << H - B << "\" text-anchor=\"end\">" << num(y0) << "</text>\n"
     << "<text x=\"" << L - 4 << "\" y=\"" << T + 4 << "\" text-anchor=\"end\">" << num(y1) << "</text>\n"
     << "</svg>\n";
  return os.str();
}

}  // namespace qtraj::io
