#include <gtest/gtest.h>

#include <cmath>

#include "qtraj/floyd.hpp"

using namespace qtraj;

namespace {

const Constants kUnit{1.0, 1.0};
const Grid1D kFreeGrid(-10.0, 10.0, 2001);
const Grid1D kLinearGrid(-8.0, 2.0, 4001);

struct Run {
  ActionSlice slice;
  EnergyDerivatives deriv;
};

Run run(const Potential& p, double E, const Grid1D& g, const Microstate& mu = {}, double step = 0.0) {
  const double s = step > 0.0 ? step : default_step_E(E);
  return {solve_slice(p, E, g, mu, kUnit), energy_derivatives(p, mu, E, s, g, kUnit)};
}

}  // namespace

TEST(EnergyDerivatives, FreeParticleClosedForm) {
  const auto r = run(Potential::free(), 0.5, kFreeGrid);
  // W = sqrt(2mE) q, so W_E = q sqrt(m/2E) and W_E(2) = 2.
  EXPECT_NEAR(interpolate(r.deriv.W_E, 2.0), 2.0, 1e-8);
  for (std::size_t i = kEdgeNodes; i + kEdgeNodes < kFreeGrid.size(); ++i) {
    ASSERT_NEAR(r.deriv.Q_E[i], 0.0, 1e-8);
    ASSERT_NEAR(r.deriv.m_Q[i], 1.0, 1e-8);
    ASSERT_NEAR(r.deriv.W_E[i], kFreeGrid.node(i), 1e-6);
  }
}

TEST(EnergyDerivatives, RejectsBadStep) {
  EXPECT_THROW(energy_derivatives(Potential::free(), {}, 0.5, 0.0, kFreeGrid, kUnit), InputError);
}

TEST(EnergyDerivatives, ResultDoesNotDependOnThreadCount) {
  setenv("QTRAJ_THREADS", "1", 1);
  const auto a = energy_derivatives(Potential::linear(1.0), {}, 1.0, 1e-4, kLinearGrid, kUnit);
  setenv("QTRAJ_THREADS", "5", 1);
  const auto b = energy_derivatives(Potential::linear(1.0), {}, 1.0, 1e-4, kLinearGrid, kUnit);
  unsetenv("QTRAJ_THREADS");
  for (std::size_t i = 0; i < kLinearGrid.size(); ++i) {
    ASSERT_EQ(a.W_E[i], b.W_E[i]);
    ASSERT_EQ(a.Q_E[i], b.Q_E[i]);
  }
}

TEST(FloydTime, FreeParticleIsUniformMotion) {
  const auto r = run(Potential::free(), 0.5, kFreeGrid);
  const auto tr = floyd_time(r.slice, r.deriv, 0.0);
  for (std::size_t i = kEdgeNodes; i + kEdgeNodes < kFreeGrid.size(); ++i) {
    const double q = kFreeGrid.node(i);
    ASSERT_NEAR(tr.t[i], q, 1e-6);
    ASSERT_NEAR(tr.tau[i], q, 1e-6);
    ASSERT_NEAR(tr.qdot[i], 1.0, 1e-6);
    ASSERT_NEAR(tr.dtau_dt[i], 1.0, 1e-6);
  }
  EXPECT_LE(time_formula_agreement(tr).max, 1e-6);
  for (std::size_t i = 1; i < tr.t.size(); ++i) ASSERT_GT(tr.t[i], tr.t[i - 1]);
}

TEST(FloydTime, LinearPotentialTimeFormulasAgree) {
  const auto r = run(Potential::linear(1.0), 1.0, kLinearGrid);
  const auto tr = floyd_time(r.slice, r.deriv, -3.0);
  const auto rep = time_formula_agreement(tr, 0.1);
  EXPECT_GT(rep.nodes, 1000u);
  EXPECT_LE(rep.max, 1e-5);
  // E - U = W'^2 / 2m > 0, so the quantum path has no turning point even
  // past the classical one at q = 1.
  for (bool ok : tr.uform_available) ASSERT_TRUE(ok);
  EXPECT_GT(tr.min_gap.back(), 0.0);
}

TEST(FloydTime, ChainRelations) {
  for (const auto& [pot, E, g] : {std::tuple{Potential::free(), 0.5, kFreeGrid},
                                  std::tuple{Potential::linear(1.0), 1.0, kLinearGrid},
                                  std::tuple{Potential::harmonic(1.0), 0.75, Grid1D(-3.0, 3.0, 2001)}}) {
    const auto r = run(pot, E, g);
    const auto tr = floyd_time(r.slice, r.deriv, 0.0);
    const auto [chain, ratio] = velocity_chain(r.slice, r.deriv, tr);
    EXPECT_LE(chain.max, 1e-4) << pot.name();
    EXPECT_LE(ratio.max, 1e-6) << pot.name();
    // q' (1 - Q_E) m = W' holds by construction of q'.
    for (std::size_t i = 0; i < g.size(); ++i) {
      ASSERT_NEAR(tr.qdot[i] * r.deriv.m_Q[i], r.slice.Wp[i], 1e-12 * std::abs(r.slice.Wp[i]));
    }
  }
}

TEST(TrajectoryAt, FreeParticleAndRoundTrip) {
  const auto r = run(Potential::free(), 0.5, kFreeGrid);
  const auto tr = floyd_time(r.slice, r.deriv, 0.0);
  EXPECT_NEAR(trajectory_at(tr, 1.25), 1.25, 1e-6);
  for (std::size_t i = 100; i < kFreeGrid.size() - 100; i += 97) {
    EXPECT_NEAR(trajectory_at(tr, tr.t[i]), kFreeGrid.node(i), 1e-8);
  }
}

TEST(TrajectoryAt, LinearAgreesWithDenseResolve) {
  const auto coarse = run(Potential::linear(1.0), 1.0, kLinearGrid);
  const Grid1D dense = kLinearGrid.refined(2);
  const auto fine = run(Potential::linear(1.0), 1.0, dense);
  const auto a = floyd_time(coarse.slice, coarse.deriv, -3.0);
  const auto b = floyd_time(fine.slice, fine.deriv, -3.0);
  for (double t : {-1.0, 0.5, 1.5}) EXPECT_NEAR(trajectory_at(a, t), trajectory_at(b, t), 1e-5) << t;
}

TEST(IdentityWpWpE, FreeParticle) {
  const auto r = run(Potential::free(), 0.5, kFreeGrid);
  EXPECT_LE(identity_WpWpE(r.slice, r.deriv).max, 1e-8);
  const Microstate mixed{2.0, 0.0, 0.0, 1.0, 0.0, 0.0};
  const auto m = run(Potential::free(), 0.5, kFreeGrid, mixed, 1e-4 * 0.5);
  EXPECT_LE(identity_WpWpE(m.slice, m.deriv).params["relative"].get<double>(), 1e-4);
}

TEST(IdentityWpWpE, LinearPotentialAndConvergenceOrder) {
  const auto r = run(Potential::linear(1.0), 1.0, kLinearGrid);
  EXPECT_LE(identity_WpWpE(r.slice, r.deriv).params["relative"].get<double>(), 1e-4);
  // Steps where truncation still dominates rounding but the stencil is asymptotic.
  auto rel = [](double step) {
    const Microstate mixed{2.0, 0.0, 0.0, 1.0, 0.0, 0.0};
    const auto x = run(Potential::free(), 0.5, kFreeGrid, mixed, step);
    return identity_WpWpE(x.slice, x.deriv).params["relative"].get<double>();
  };
  const double ratio = rel(0.02) / rel(0.01);
  EXPECT_GE(ratio, 4.0);
}

TEST(Legendre, FreeParticleClosedForm) {
  const std::vector<double> Es{0.46, 0.48, 0.5, 0.52, 0.54};
  const auto rep = legendre_check(Potential::free(), {}, Es, 1.0, kFreeGrid, kUnit);
  for (std::size_t k = 0; k < Es.size(); ++k) {
    EXPECT_NEAR(rep.W[k], std::sqrt(2.0 * Es[k]), 1e-6);
    EXPECT_NEAR(rep.S[k], -std::sqrt(Es[k] / 2.0), 1e-6);
  }
  EXPECT_LE(rep.roundtrip.max, 1e-10);
  EXPECT_LE(rep.club.max, 1e-6);
  EXPECT_LE(rep.slope.max, 1e-6);
}

TEST(Legendre, LinearPotential) {
  const std::vector<double> Es{0.96, 0.98, 1.0, 1.02, 1.04};
  const auto rep = legendre_check(Potential::linear(1.0), {}, Es, -2.0, kLinearGrid, kUnit);
  EXPECT_LE(rep.club.max, 1e-5);
  EXPECT_LE(rep.slope.max, 1e-5);
  EXPECT_THROW(legendre_check(Potential::free(), {}, {0.5, 0.6}, 1.0, kFreeGrid, kUnit), InputError);
}

TEST(Uncertainty, FreeParticleAdmitsPositiveChange) {
  const auto r = run(Potential::free(), 0.5, kFreeGrid);
  const auto u = uncertainty_report(r.deriv, 2.0, kUnit);
  // W_EE = -q sqrt(m/2) E^(-3/2) / 2 = -2 at q = 2.
  // Second E-difference at the default step: rounding in W divided by step^2.
  EXPECT_NEAR(u.W_EE, -2.0, 1e-4);
  EXPECT_NEAR(u.threshold, -0.25, 1e-5);
  EXPECT_EQ(u.feasibility, Feasibility::admits_positive_deltaE);
  EXPECT_EQ(u.ratio_sign, -1);
}

TEST(Uncertainty, SignRuleAndHbarScaling) {
  const Grid1D g(0.0, 1.0, 11);
  auto field = [&](double c) { return SampledField1D::sample(g, [c](double) { return c; }); };
  const EnergyDerivatives synthetic{g, 1.0, 1e-4, field(0.0), field(3.0), field(0.0), field(1.0), field(0.0)};
  const auto a = uncertainty_report(synthetic, 0.5, Constants{1.0, 1.0});
  EXPECT_EQ(a.feasibility, Feasibility::requires_nonpositive_ratio);
  const auto b = uncertainty_report(synthetic, 0.5, Constants{1.0, 2.0});
  EXPECT_NEAR(b.threshold, 2.0 * a.threshold, 1e-15);
  const EnergyDerivatives flat{g, 1.0, 1e-4, field(0.0), field(0.0), field(0.0), field(1.0), field(0.0)};
  EXPECT_THROW(uncertainty_report(flat, 0.5, Constants{}), DegenerateError);
}
