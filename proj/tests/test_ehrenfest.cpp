#include <gtest/gtest.h>

#include <cmath>

#include "qtraj/ehrenfest.hpp"

using namespace qtraj;

namespace {

const Constants kUnit{1.0, 1.0};
const Grid1D kBox(-20.0, 20.0, 402);  // 400 interior nodes

}  // namespace

TEST(Ehrenfest, FreePacketFollowsTheCommutator) {
  const auto rep = ehrenfest_check(Potential::free(), kUnit, kBox, Packet{-3.0, 1.0, 1.0}, 2.0, 1e-3);
  EXPECT_LE(rep.commutator.max, 1e-6);
  EXPECT_TRUE(rep.inequality_holds);
  EXPECT_GE(rep.min_margin, 0.0);
  EXPECT_LE(rep.norm_drift, 1e-10);
  EXPECT_LE(rep.energy_drift, 1e-10);
  // The packet moves right at roughly p/m.
  EXPECT_GT(rep.mean_q.back() - rep.mean_q.front(), 1.5);
}

TEST(Ehrenfest, MomentumOperatorRoute) {
  // d<Q>/dt = <p>/m, with p the central difference; on this grid the
  // discretized current and central-difference momentum differ at O(h^2).
  const auto rep = ehrenfest_check(Potential::free(), kUnit, Grid1D(-20.0, 20.0, 802), Packet{-3.0, 1.0, 1.0}, 0.5,
                                   1e-2);
  EXPECT_LE(rep.momentum.max, 1e-3);
  EXPECT_LE(rep.commutator.max, 1e-6);
}

TEST(Ehrenfest, HarmonicPacketKeepsTheBound) {
  const auto rep = ehrenfest_check(Potential::harmonic(1.0), kUnit, kBox, Packet{2.0, 0.8, 0.0}, 3.0, 1e-3);
  EXPECT_LE(rep.commutator.max, 1e-6);
  EXPECT_TRUE(rep.inequality_holds);
}

TEST(Ehrenfest, StationaryStateDoesNotMove) {
  const BoxHamiltonian H(Potential::harmonic(1.0), kUnit, kBox);
  const auto rep = ehrenfest_evolve(H, H.ground_state(), 1.0, 1e-2);
  for (double v : rep.dq_dt) EXPECT_NEAR(v, 0.0, 1e-8);
  for (double v : rep.commutator_rate) EXPECT_NEAR(v, 0.0, 1e-8);
  EXPECT_TRUE(rep.inequality_holds);
}

TEST(Ehrenfest, ResidualConvergesAtSecondOrderInDt) {
  // A free packet has <q> linear in t, which the difference quotient hits exactly.
  const Packet p{2.0, 0.8, 0.0};
  const auto osc = Potential::harmonic(1.0);
  const double coarse = ehrenfest_check(osc, kUnit, kBox, p, 1.0, 0.02).commutator.max;
  const double fine = ehrenfest_check(osc, kUnit, kBox, p, 1.0, 0.01).commutator.max;
  EXPECT_GE(std::log2(coarse / fine), 1.9);
}

TEST(Ehrenfest, InputValidation) {
  EXPECT_THROW(BoxHamiltonian(Potential::free(), kUnit, Grid1D(-5.0, 5.0, 100)), InputError);
  // Packet starting next to a wall.
  EXPECT_THROW(ehrenfest_check(Potential::free(), kUnit, kBox, Packet{-17.0, 1.0, 0.0}, 1.0, 1e-2), InputError);
  EXPECT_THROW(ehrenfest_check(Potential::free(), kUnit, kBox, Packet{0.0, 1.0, 0.0}, 1.0, 0.0), InputError);
  EXPECT_THROW(ehrenfest_check(Potential::free(), kUnit, kBox, Packet{0.0, -1.0, 0.0}, 1.0, 1e-2), InputError);
}
