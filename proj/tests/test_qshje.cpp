#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <random>

#include "qtraj/qshje.hpp"

using namespace qtraj;

namespace {

const Constants kUnit{1.0, 1.0};
const Grid1D kFreeGrid(-10.0, 10.0, 2001);

double interior_max_abs(const std::vector<double>& r) {
  double worst = 0.0;
  for (std::size_t i = kEdgeNodes; i + kEdgeNodes < r.size(); ++i) worst = std::max(worst, std::abs(r[i]));
  return worst;
}

}  // namespace

TEST(SolveBasis, FreeParticleIsCosineAndSine) {
  const auto b = solve_basis(Potential::free(), 0.5, kFreeGrid, kUnit);
  EXPECT_DOUBLE_EQ(b.anchor, 0.0);
  for (std::size_t i = 0; i < kFreeGrid.size(); ++i) {
    const double q = kFreeGrid.node(i);
    ASSERT_NEAR(b.u[i], std::cos(q), 1e-7) << q;
    ASSERT_NEAR(b.v[i], std::sin(q), 1e-7) << q;
  }
}

TEST(SolveBasis, WronskianIsConservedAcrossPotentials) {
  EXPECT_LE(wronskian_drift(solve_basis(Potential::free(), 0.5, kFreeGrid, kUnit)), 1e-8);
  EXPECT_LE(wronskian_drift(solve_basis(Potential::linear(1.0), 1.0, Grid1D(-8.0, 2.0, 4001), kUnit)), 1e-8);
  EXPECT_LE(wronskian_drift(solve_basis(Potential::harmonic(1.0), 0.75, Grid1D(-3.0, 3.0, 2001), kUnit)), 1e-8);
  EXPECT_LE(wronskian_drift(solve_basis(Potential::square_well(2.0, 1.0), 0.5, Grid1D(-5.0, 5.0, 2001), kUnit)), 1e-8);
  EXPECT_LE(wronskian_drift(solve_basis(Potential::harmonic(1.0), 0.75, Grid1D(-3.0, 3.0, 2000), kUnit,
                                        BasisNormalization::unit_wronskian)),
            1e-8);
}

TEST(SolveBasis, HarmonicSelfConvergence) {
  const Grid1D coarse(-3.0, 3.0, 501);
  const auto a = solve_basis(Potential::harmonic(1.0), 0.75, coarse, kUnit);
  const auto b = solve_basis(Potential::harmonic(1.0), 0.75, coarse.refined(4), kUnit);
  double worst = 0.0;
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    worst = std::max({worst, std::abs(a.u[i] - b.u[4 * i]), std::abs(a.v[i] - b.v[4 * i])});
  }
  EXPECT_LE(worst, 1e-7);
}

TEST(SolveBasis, SatisfiesTheSchrodingerEquation) {
  const Grid1D g(-3.0, 3.0, 2001);
  const auto h = Potential::harmonic(1.0);
  EXPECT_LE(schrodinger_residual(solve_basis(h, 0.75, g, kUnit), h, kUnit), 1e-7);
  const auto w = Potential::square_well(2.0, 1.0);
  EXPECT_LE(schrodinger_residual(solve_basis(w, 0.5, Grid1D(-5.0, 5.0, 2001), kUnit), w, kUnit), 1e-6);
}

TEST(SolveBasis, OverflowIsReportedAsDivergence) {
  // Deep in a forbidden region the growing solution passes 1e100.
  EXPECT_THROW(solve_basis(Potential::harmonic(50.0), 0.5, Grid1D(-40.0, 40.0, 8001), kUnit), DivergenceError);
}

TEST(MicrostateAction, FreeParticlePlaneWave) {
  const auto s = solve_slice(Potential::free(), 0.5, kFreeGrid, Microstate{}, kUnit);
  for (std::size_t i = 0; i < kFreeGrid.size(); ++i) {
    const double q = kFreeGrid.node(i);
    ASSERT_NEAR(s.W[i], q, 1e-9);
    ASSERT_NEAR(s.rho[i], 1.0, 1e-9);
    ASSERT_NEAR(s.Q[i], 0.0, 1e-9);
    ASSERT_NEAR(s.scriptW[i], -0.5, 1e-9);
  }
}

TEST(MicrostateAction, FreeParticleMixedMicrostate) {
  // (2,0,0,1): p = 2 cos q, r = sin q, rho = 4cos^2 + sin^2, W' = 2/rho.
  const auto s = solve_slice(Potential::free(), 0.5, kFreeGrid, Microstate{2.0, 0.0, 0.0, 1.0, 0.0, 0.0}, kUnit);
  double qmin = 1e300, qmax = -1e300;
  for (std::size_t i = kEdgeNodes; i + kEdgeNodes < kFreeGrid.size(); ++i) {
    const double q = kFreeGrid.node(i);
    const double rho = 4.0 * std::cos(q) * std::cos(q) + std::sin(q) * std::sin(q);
    ASSERT_NEAR(s.rho[i], rho, 1e-6);
    ASSERT_NEAR(s.Wp[i], 2.0 / rho, 1e-6);
    ASSERT_NEAR(s.scriptW[i], -0.5, 1e-6);
    qmin = std::min(qmin, s.Q[i]);
    qmax = std::max(qmax, s.Q[i]);
  }
  EXPECT_GT(qmax - qmin, 0.1);
  // W itself: arctan(tan(q)/2) unwrapped, checked on (-pi/2, pi/2).
  for (std::size_t i = 0; i < kFreeGrid.size(); ++i) {
    const double q = kFreeGrid.node(i);
    if (std::abs(q) < 1.5) ASSERT_NEAR(s.W[i], std::atan(std::tan(q) / 2.0), 1e-7) << q;
  }
}

TEST(MicrostateAction, ContinuityHoldsForEveryPotential) {
  const Microstate mu{1.0, 0.3, -0.2, 1.5, 0.7, 0.5};
  EXPECT_LE(continuity_residual(solve_slice(Potential::linear(1.0), 1.0, Grid1D(-8.0, 2.0, 4001), mu, kUnit)).max,
            1e-6);
  EXPECT_LE(continuity_residual(solve_slice(Potential::harmonic(1.0), 0.75, Grid1D(-3.0, 3.0, 2001), mu, kUnit)).max,
            1e-6);
}

TEST(MicrostateAction, AnchorsWAtQ0) {
  const Microstate mu{1.0, 0.0, 0.5, 1.0, 2.5, -1.0};
  const auto s = solve_slice(Potential::harmonic(1.0), 0.75, Grid1D(-3.0, 3.0, 2001), mu, kUnit);
  EXPECT_NEAR(interpolate(s.W, -1.0), 2.5, 1e-10);
}

TEST(MicrostateAction, RejectsDegenerateMicrostate) {
  try {
    solve_slice(Potential::free(), 0.5, kFreeGrid, Microstate{1.0, 2.0, 2.0, 4.0, 0.0, 0.0}, kUnit);
    FAIL() << "expected DegenerateError";
  } catch (const DegenerateError& e) {
    EXPECT_NE(std::string(e.what()).find("determinant"), std::string::npos);
  }
}

TEST(Schwarzian, LinearAndMobiusFunctionsVanish) {
  const Grid1D g(0.5, 2.0, 31);
  auto field = [&](auto f) { return SampledField1D::sample(g, f); };
  const auto s = schwarzian(field([](double q) { return 3.0 * q; }), field([](double) { return 3.0; }),
                            field([](double) { return 0.0; }), field([](double) { return 0.0; }));
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(s[i], 0.0);
  // f = 1/q is Moebius: {f, q} = 0 as well.
  const auto m = schwarzian(field([](double q) { return 1.0 / q; }), field([](double q) { return -1.0 / (q * q); }),
                            field([](double q) { return 2.0 / (q * q * q); }),
                            field([](double q) { return -6.0 / (q * q * q * q); }));
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(m[i], 0.0, 1e-12);
}

TEST(Schwarzian, MatchesFiniteDifferenceOracle) {
  std::mt19937 rng(20240601);
  std::uniform_real_distribution<double> coef(-0.15, 0.15);
  for (int trial = 0; trial < 5; ++trial) {
    const double a1 = coef(rng), a2 = coef(rng), a3 = coef(rng);
    auto f = [&](double q) { return q + a1 * std::sin(q) + a2 * std::sin(2 * q + 1) + a3 * q * q * q / 10.0; };
    auto f1 = [&](double q) { return 1 + a1 * std::cos(q) + 2 * a2 * std::cos(2 * q + 1) + 0.3 * a3 * q * q; };
    auto f2 = [&](double q) { return -a1 * std::sin(q) - 4 * a2 * std::sin(2 * q + 1) + 0.6 * a3 * q; };
    auto f3 = [&](double q) { return -a1 * std::cos(q) - 8 * a2 * std::cos(2 * q + 1) + 0.6 * a3; };
    const Grid1D g(-1.0, 1.0, 41);
    const auto s = schwarzian(SampledField1D::sample(g, f), SampledField1D::sample(g, f1),
                              SampledField1D::sample(g, f2), SampledField1D::sample(g, f3));
    // Oracle: derivatives of f alone by wide central differences.
    const double h = 1e-2;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double q = g.node(i);
      const double d1 = (f(q - 2 * h) - 8 * f(q - h) + 8 * f(q + h) - f(q + 2 * h)) / (12 * h);
      const double d2 = (-f(q - 2 * h) + 16 * f(q - h) - 30 * f(q) + 16 * f(q + h) - f(q + 2 * h)) / (12 * h * h);
      const double d3 = (f(q - 3 * h) - 8 * f(q - 2 * h) + 13 * f(q - h) - 13 * f(q + h) + 8 * f(q + 2 * h) -
                         f(q + 3 * h)) /
                        (8 * h * h * h);
      const double oracle = d3 / d1 - 1.5 * (d2 / d1) * (d2 / d1);
      ASSERT_NEAR(s[i], oracle, 1e-5) << "trial " << trial << " q " << q;
    }
  }
}

TEST(Schwarzian, SingularWhereDerivativeVanishes) {
  const Grid1D g(-1.0, 1.0, 11);
  auto field = [&](auto f) { return SampledField1D::sample(g, f); };
  EXPECT_THROW(schwarzian(field([](double q) { return q * q; }), field([](double q) { return 2 * q; }),
                          field([](double) { return 2.0; }), field([](double) { return 0.0; })),
               SingularityError);
}

TEST(QshjeIdentity, HoldsOnShippedPotentials) {
  const Microstate mu{};
  const std::vector<std::pair<Potential, std::pair<double, Grid1D>>> cases{
      {Potential::free(), {0.5, kFreeGrid}},
      {Potential::linear(1.0), {1.0, Grid1D(-8.0, 2.0, 4001)}},
      {Potential::harmonic(1.0), {0.75, Grid1D(-3.0, 3.0, 2001)}},
      {Potential::square_well(2.0, 1.0), {0.5, Grid1D(-5.0, 5.0, 2001)}},
  };
  for (const auto& [pot, eg] : cases) {
    const auto s = solve_slice(pot, eg.first, eg.second, mu, kUnit);
    EXPECT_LE(qshje_identity(s).max, 1e-9) << pot.name();
    // Same identity with scriptW from the complex exponential route.
    const auto cw = scriptW_complex(s);
    std::vector<double> r(cw.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = s.Wp[i] * s.Wp[i] / 2.0 + cw[i].real() + s.Q[i];
    EXPECT_LE(interior_max_abs(r), 1e-9) << pot.name();
  }
}

TEST(VerifyScriptW, FreeAndLinear) {
  EXPECT_LE(verify_scriptW(solve_slice(Potential::free(), 0.5, kFreeGrid, Microstate{}, kUnit), Potential::free()).max,
            1e-9);
  const auto lin = Potential::linear(1.0);
  EXPECT_LE(verify_scriptW(solve_slice(lin, 1.0, Grid1D(-8.0, 2.0, 4001), Microstate{}, kUnit), lin).max, 1e-5);
}

TEST(VerifyScriptW, DetectsAWrongPotential) {
  const auto s = solve_slice(Potential::linear(1.0), 1.0, Grid1D(-8.0, 2.0, 4001), Microstate{}, kUnit);
  EXPECT_GT(verify_scriptW(s, Potential::linear(1.05)).max, 1e-2);
}

TEST(QuantumPotentialRoutes, SchwarzianAgreesWithAmplitude) {
  const Microstate mu{2.0, 0.0, 0.0, 1.0, 0.0, 0.0};
  EXPECT_LE(quantum_potential_routes(solve_slice(Potential::free(), 0.5, kFreeGrid, mu, kUnit)).max, 1e-5);
  EXPECT_LE(quantum_potential_routes(solve_slice(Potential::linear(1.0), 1.0, Grid1D(-8.0, 2.0, 4001), mu, kUnit)).max,
            1e-5);
  const auto w = Potential::square_well(2.0, 1.0);
  EXPECT_LE(quantum_potential_routes(solve_slice(w, 0.5, Grid1D(-5.0, 5.0, 2001), mu, kUnit), w.breakpoints()).max,
            1e-5);
}

TEST(Mobius, IdentityAndComposition) {
  const Microstate mu{1.2, -0.4, 0.3, 0.9, 0.1, 0.0};
  const auto same = mobius_apply(mu, 1.0, 0.0, 0.0, 1.0);
  EXPECT_EQ(same.a, mu.a);
  EXPECT_EQ(same.b, mu.b);
  EXPECT_EQ(same.c, mu.c);
  EXPECT_EQ(same.d, mu.d);
  // M1 then M2 equals M2*M1.
  const double A1 = 2, B1 = 1, C1 = 1, D1 = 3;
  const double A2 = 0.5, B2 = -1, C2 = 2, D2 = 1;
  const auto two = mobius_apply(mobius_apply(mu, A1, B1, C1, D1), A2, B2, C2, D2);
  const auto one = mobius_apply(mu, A2 * A1 + B2 * C1, A2 * B1 + B2 * D1, C2 * A1 + D2 * C1, C2 * B1 + D2 * D1);
  EXPECT_NEAR(two.a, one.a, 1e-14);
  EXPECT_NEAR(two.b, one.b, 1e-14);
  EXPECT_NEAR(two.c, one.c, 1e-14);
  EXPECT_NEAR(two.d, one.d, 1e-14);
  EXPECT_NEAR(one.det(), mu.det() * (A1 * D1 - B1 * C1) * (A2 * D2 - B2 * C2), 1e-12);
  EXPECT_THROW(mobius_apply(mu, 1, 2, 2, 4), InputError);
}

TEST(Mobius, CarriesTheRatio) {
  // r/p -> (A x + B)/(C x + D) for x = r/p at every node.
  const auto b = solve_basis(Potential::harmonic(1.0), 0.75, Grid1D(-3.0, 3.0, 201), kUnit);
  const Microstate mu{1.0, 0.2, 0.1, 1.0, 0.0, 0.0};
  const double A = 2, B = 1, C = 0.5, D = 1.5;
  const auto mapped = mobius_apply(mu, A, B, C, D);
  for (std::size_t i = 0; i < 201; i += 10) {
    const double p = mu.a * b.u[i] + mu.b * b.v[i], r = mu.c * b.u[i] + mu.d * b.v[i];
    const double p2 = mapped.a * b.u[i] + mapped.b * b.v[i], r2 = mapped.c * b.u[i] + mapped.d * b.v[i];
    const double x = r / p;
    EXPECT_NEAR(r2 / p2, (A * x + B) / (C * x + D), 1e-10);
  }
}

TEST(Mobius, ScriptWInvariantUnderRandomMaps) {
  const auto pot = Potential::linear(1.0);
  const Grid1D g(-8.0, 2.0, 4001);
  const auto basis = solve_basis(pot, 1.0, g, kUnit);
  const Microstate mu{};
  const auto base = microstate_action(basis, mu, kUnit);
  const double r0 = verify_scriptW(base, pot).max;
  std::mt19937 rng(12345);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  for (int k = 0; k < 20; ++k) {
    double A, B, C, D;
    do {
      A = coef(rng), B = coef(rng), C = coef(rng), D = coef(rng);
    } while (std::abs(A * D - B * C) < 0.1);
    const auto s = microstate_action(basis, mobius_apply(mu, A, B, C, D), kUnit);
    EXPECT_LE(std::abs(verify_scriptW(s, pot).max - r0), 1e-6) << k;
    EXPECT_LE(verify_scriptW(s, pot).max, 1e-5) << k;
  }
}

TEST(WaveFunction, StandardModeSolvesTheEquation) {
  const auto s = solve_slice(Potential::free(), 0.5, kFreeGrid, Microstate{}, kUnit);
  EXPECT_LE(wavefunction(s, 0.0, 1.0, ExponentMode::standard).residual, 1e-7);
  // Constant W': both exponents give a solution.
  EXPECT_LE(wavefunction(s, 0.0, 1.0, ExponentMode::inverse_slope).residual, 1e-7);
  const auto st = wavefunction(s, 0.5, 0.5, ExponentMode::standard);
  for (std::size_t i = 0; i < kFreeGrid.size(); ++i) {
    ASSERT_NEAR(st.psi[i].real(), std::cos(kFreeGrid.node(i)), 1e-7);
    ASSERT_NEAR(st.psi[i].imag(), 0.0, 1e-12);
  }
}

TEST(WaveFunction, ExponentModesDifferWhenWpVaries) {
  const auto pot = Potential::harmonic(1.0);
  const auto s = solve_slice(pot, 0.75, Grid1D(-2.0, 2.0, 2001), Microstate{2.0, 0.0, 0.0, 1.0, 0.0, 0.0}, kUnit);
  const double standard = wavefunction(s, 0.0, 1.0, ExponentMode::standard).residual;
  const double inverse = wavefunction(s, 0.0, 1.0, ExponentMode::inverse_slope).residual;
  EXPECT_LE(standard, 1e-6);
  EXPECT_GT(inverse, 1e-3);
}
