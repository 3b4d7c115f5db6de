#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "qtraj/io.hpp"
#include "qtraj/scenario.hpp"

using namespace qtraj;

namespace {

std::string free_scenario(const std::string& extra = "") {
  return R"({"schema": "qtraj.scenario/1", "name": "f", "constants": {"m": 1, "hbar": 1},
             "potential": {"kind": "free"}, "energy": 0.5,
             "microstate": {"a": 1, "b": 0, "c": 0, "d": 1},
             "grid": {"min": -10, "max": 10, "nodes": 201})" +
         extra + "}";
}

std::string error_of(const std::string& text) {
  try {
    parse_scenario(text);
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Format, SeventeenSignificantDigits) {
  EXPECT_EQ(io::fmt(0.1), "0.10000000000000001");
  EXPECT_EQ(io::fmt(1.0), "1");
  EXPECT_EQ(io::fmt(-2.5e-300), "-2.5e-300");
  EXPECT_EQ(io::fmt(1.0 / 3.0), "0.33333333333333331");
  EXPECT_EQ(std::stod(io::fmt(M_PI)), M_PI);
}

TEST(Csv, SliceColumnsAndRows) {
  const Grid1D g(-1.0, 1.0, 11);
  const auto s = solve_slice(Potential::free(), 0.5, g, {}, Constants{});
  const auto text = io::slice_csv(s);
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "q,W,Wp,Wpp,R,rho,Q,scriptW");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 7);
  }
  EXPECT_EQ(rows, 11u);
}

TEST(Csv, WidthMismatchThrows) {
  io::CsvTable t({"a", "b"});
  EXPECT_THROW(t.row({1.0}), InputError);
}

TEST(WriteAtomic, ReplacesContentAndLeavesNoTemp) {
  const auto dir = std::filesystem::temp_directory_path() / "qtraj_atomic_test";
  std::filesystem::remove_all(dir);
  io::write_atomic(dir / "a.txt", "first");
  io::write_atomic(dir / "a.txt", "second");
  std::ifstream in(dir / "a.txt");
  std::string s;
  std::getline(in, s);
  EXPECT_EQ(s, "second");
  EXPECT_FALSE(std::filesystem::exists(dir / "a.txt.tmp"));
  std::filesystem::remove_all(dir);
}

TEST(Svg, HasOnePolyline) {
  const auto svg = io::line_svg({0, 1, 2}, {0, 1, 4}, "t", "q", "demo");
  EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
  std::size_t count = 0;
  for (std::size_t p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++count;
  EXPECT_EQ(count, 1u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST(Scenario, ParsesTheFreeParticle) {
  const auto any = parse_scenario(free_scenario());
  const auto& s = std::get<Scenario>(any);
  EXPECT_EQ(s.name, "f");
  EXPECT_EQ(s.grid.size(), 201u);
  EXPECT_EQ(s.potential.name(), "free");
  EXPECT_FALSE(s.step_E.has_value());
}

TEST(Scenario, SchemaViolations) {
  EXPECT_NE(error_of(free_scenario(R"(, "colour": "red")")).find("unknown key 'colour'"), std::string::npos);
  EXPECT_NE(error_of(R"({"schema": "qtraj.scenario/1", "name": "x", "constants": {"m": 1, "hbar": 1},
                         "energy": 0.5, "microstate": {"a": 1, "b": 0, "c": 0, "d": 1},
                         "grid": {"min": -1, "max": 1, "nodes": 21}})")
                .find("potential"),
            std::string::npos);
  std::string singular = free_scenario();
  const std::string coeffs = R"("a": 1, "b": 0, "c": 0, "d": 1)";
  singular.replace(singular.find(coeffs), coeffs.size(), R"("a": 1, "b": 2, "c": 2, "d": 4)");
  EXPECT_NE(error_of(singular).find("determinant"), std::string::npos);
  EXPECT_NE(error_of(R"({"schema": "qtraj.scenario/9"})").find("unsupported schema"), std::string::npos);
  EXPECT_NE(error_of("{not json").find("not valid JSON"), std::string::npos);
  EXPECT_NE(error_of(free_scenario(R"(, "step_E": -1)")).find("step_E"), std::string::npos);
  EXPECT_NE(error_of(free_scenario(R"(, "normalization": "other")")).find("normalization"), std::string::npos);
}

TEST(Scenario, TabulatedMustCoverTheGrid) {
  const auto dir = std::filesystem::temp_directory_path() / "qtraj_tab_scn";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "v.csv") << "q,V\n-1,0\n0,0\n1,0\n";
  }
  const std::string text = R"({"schema": "qtraj.scenario/1", "constants": {"m": 1, "hbar": 1},
      "potential": {"kind": "tabulated", "path": "v.csv"}, "energy": 0.5,
      "microstate": {"a": 1, "b": 0, "c": 0, "d": 1}, "grid": {"min": -1, "max": 1, "nodes": 21}})";
  EXPECT_NO_THROW(parse_scenario(text, dir));
  std::string wide = text;
  wide.replace(wide.find("\"max\": 1"), 8, "\"max\": 3");
  EXPECT_THROW(parse_scenario(wide, dir), InputError);
  std::filesystem::remove_all(dir);
}

TEST(Scenario, SpinSchema) {
  const std::string text = R"({"schema": "qtraj.spin/1", "name": "s", "constants": {"m": 1, "hbar": 1},
      "family": {"kind": "aligned_density", "alpha": 1, "beta": 1}, "energy": 1,
      "grid": {"x": {"min": 0, "max": 1, "nodes": 9}, "y": {"min": 0, "max": 1, "nodes": 9},
               "z": {"min": 0, "max": 1, "nodes": 9}}, "mode": "sampled"})";
  const auto& s = std::get<SpinScenario>(parse_scenario(text));
  EXPECT_EQ(s.family, "aligned_density");
  EXPECT_EQ(s.mode, spin::Mode::sampled);
  EXPECT_TRUE(s.gauge);
  std::string bad = text;
  bad.replace(bad.find("aligned_density"), std::string("aligned_density").size(), "vortex_ring");
  EXPECT_THROW(parse_scenario(bad), InputError);
}
