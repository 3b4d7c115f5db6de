#pragma once

// Ehrenfest relation d<Q>/dt = (1/hbar)<i[H,Q]> and the bound
// dE dQ >= (hbar/2)|d<Q>/dt| on a Dirichlet box, Q the position operator.
// H = -(hbar^2/2m) D2 + V uses the 3-point Laplacian on interior nodes;
// states evolve by exact unitary steps exp(-i H dt / hbar) built from the
// eigendecomposition of the tridiagonal matrix.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include "qtraj/error.hpp"
#include "qtraj/numerics.hpp"
#include "qtraj/potentials.hpp"
#include "qtraj/qshje.hpp"
#include "qtraj/report.hpp"

namespace qtraj {

struct Packet {
  double center = 0.0;
  double width = 1.0;
  double momentum = 0.0;
};

class BoxHamiltonian {
 public:
  using State = Eigen::VectorXcd;

  BoxHamiltonian(const Potential& potential, const Constants& constants, const Grid1D& box)
      : constants_(constants), box_(box) {
    constants.validate();
    if (box.size() < 200) throw InputError("Ehrenfest box needs at least 200 nodes");
    const auto n = static_cast<Eigen::Index>(box.size() - 2);
    const double h = box.spacing();
    hop_ = -constants.hbar * constants.hbar / (2.0 * constants.m * h * h);
    x_.resize(n);
    diag_.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      x_[j] = box.node(static_cast<std::size_t>(j) + 1);
      diag_[j] = -2.0 * hop_ + potential.evaluate(x_[j]);
    }
    Eigen::VectorXd off = Eigen::VectorXd::Constant(n - 1, hop_);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag_, off, Eigen::ComputeEigenvectors);
    if (es.info() != Eigen::Success) throw IntegratorError("tridiagonal eigensolver failed");
    energies_ = es.eigenvalues();
    modes_ = es.eigenvectors();
  }

  Eigen::Index dim() const noexcept { return x_.size(); }
  const Eigen::VectorXd& positions() const noexcept { return x_; }
  const Grid1D& box() const noexcept { return box_; }

  State apply(const State& psi) const {
    State out(psi.size());
    const Eigen::Index n = psi.size();
    for (Eigen::Index j = 0; j < n; ++j) {
      std::complex<double> acc = diag_[j] * psi[j];
      if (j > 0) acc += hop_ * psi[j - 1];
      if (j + 1 < n) acc += hop_ * psi[j + 1];
      out[j] = acc;
    }
    return out;
  }

  State ground_state() const { return modes_.col(0).cast<std::complex<double>>(); }

  // Normalized Gaussian exp(-(x-c)^2/(4 w^2) + i p x / hbar) on the interior nodes.
  State gaussian(const Packet& p) const {
    if (!(p.width > 0.0)) throw InputError("packet width must be positive");
    State psi(dim());
    for (Eigen::Index j = 0; j < dim(); ++j) {
      const double d = x_[j] - p.center;
      psi[j] = std::exp(std::complex<double>(-d * d / (4.0 * p.width * p.width), p.momentum * x_[j] / constants_.hbar));
    }
    return psi / psi.norm();
  }

  Eigen::VectorXcd to_modes(const State& psi) const { return modes_.transpose().cast<std::complex<double>>() * psi; }
  State from_modes(const Eigen::VectorXcd& c) const { return modes_.cast<std::complex<double>>() * c; }

  Eigen::VectorXcd phases(double dt) const {
    Eigen::VectorXcd ph(dim());
    for (Eigen::Index k = 0; k < dim(); ++k) {
      ph[k] = std::exp(std::complex<double>(0.0, -energies_[k] * dt / constants_.hbar));
    }
    return ph;
  }

  const Constants& constants() const noexcept { return constants_; }

 private:
  Constants constants_;
  Grid1D box_;
  double hop_ = 0.0;
  Eigen::VectorXd x_;
  Eigen::VectorXd diag_;
  Eigen::VectorXd energies_;
  Eigen::MatrixXd modes_;
};

struct EhrenfestReport {
  ResidualReport commutator;  // |d<Q>/dt - (1/hbar)<i[H,Q]>|
  ResidualReport momentum;    // |d<Q>/dt - <p>/m| with p = -i hbar (central difference)
  double min_margin = 0.0;    // min over steps of dE dQ - (hbar/2)|d<Q>/dt|
  bool inequality_holds = false;
  double norm_drift = 0.0;
  double energy_drift = 0.0;
  std::vector<double> times;
  std::vector<double> mean_q;
  std::vector<double> dq_dt;
  std::vector<double> commutator_rate;
  std::vector<double> delta_E;
  std::vector<double> delta_Q;

  Json to_json() const {
    Json j;
    j["commutator"] = commutator.to_json();
    j["momentum"] = momentum.to_json();
    j["min_margin"] = min_margin;
    j["inequality_holds"] = inequality_holds;
    j["norm_drift"] = norm_drift;
    j["energy_drift"] = energy_drift;
    j["steps"] = times.size();
    return j;
  }
};

inline EhrenfestReport ehrenfest_evolve(const BoxHamiltonian& H, const BoxHamiltonian::State& psi0, double t_span,
                                        double dt) {
  if (!(dt > 0.0) || !(t_span > 0.0)) throw InputError("t_span and dt must be positive");
  if (psi0.size() != H.dim()) throw InputError("initial state has wrong dimension");
  const auto steps = static_cast<std::size_t>(std::llround(t_span / dt));
  if (steps < 2) throw InputError("t_span must cover at least two steps");
  const double hbar = H.constants().hbar;
  const double m = H.constants().m;
  const auto& x = H.positions();
  const double h = H.box().spacing();
  const double lo = H.box().q_min();
  const double hi = H.box().q_max();

  Eigen::VectorXcd c = H.to_modes(psi0 / psi0.norm());
  const Eigen::VectorXcd ph = H.phases(dt);

  EhrenfestReport rep;
  std::vector<double> p_over_m;
  double E0 = 0.0;
  for (std::size_t s = 0; s <= steps; ++s) {
    if (s > 0) c = c.cwiseProduct(ph);
    const BoxHamiltonian::State psi = H.from_modes(c);
    const double norm2 = psi.squaredNorm();
    rep.norm_drift = std::max(rep.norm_drift, std::abs(std::sqrt(norm2) - 1.0));
    if (rep.norm_drift > 1e-6) throw IntegratorError("norm drift exceeded 1e-6");

    const BoxHamiltonian::State Hpsi = H.apply(psi);
    double q1 = 0.0;
    double q2 = 0.0;
    std::complex<double> hq = 0.0;
    std::complex<double> p = 0.0;
    const Eigen::Index n = psi.size();
    for (Eigen::Index j = 0; j < n; ++j) {
      const double w = std::norm(psi[j]);
      q1 += x[j] * w;
      q2 += x[j] * x[j] * w;
      hq += std::conj(Hpsi[j]) * x[j] * psi[j];
      const std::complex<double> up = j + 1 < n ? psi[j + 1] : 0.0;
      const std::complex<double> dn = j > 0 ? psi[j - 1] : 0.0;
      p += std::conj(psi[j]) * (up - dn);
    }
    p *= std::complex<double>(0.0, -hbar / (2.0 * h));
    const double e1 = psi.dot(Hpsi).real();  // Eigen's dot conjugates the first argument
    const double e2 = Hpsi.squaredNorm();
    if (s == 0) E0 = e1;
    rep.energy_drift = std::max(rep.energy_drift, std::abs(e1 - E0));

    const double dQ = std::sqrt(std::max(0.0, q2 - q1 * q1));
    if (q1 - 6.0 * dQ < lo || q1 + 6.0 * dQ > hi) throw InputError("packet comes within 6 widths of the box walls");

    rep.times.push_back(static_cast<double>(s) * dt);
    rep.mean_q.push_back(q1);
    rep.delta_Q.push_back(dQ);
    rep.delta_E.push_back(std::sqrt(std::max(0.0, e2 - e1 * e1)));
    // <i[H,Q]> = -2 Im <psi|H Q psi>, and <psi|H Q psi> = <H psi|Q psi> = hq.
    rep.commutator_rate.push_back(-2.0 * hq.imag() / hbar);
    p_over_m.push_back(p.real() / m);
  }

  const std::size_t N = rep.times.size();
  rep.dq_dt.resize(N);
  for (std::size_t s = 0; s < N; ++s) {
    if (s == 0) {
      rep.dq_dt[s] = (-3.0 * rep.mean_q[0] + 4.0 * rep.mean_q[1] - rep.mean_q[2]) / (2.0 * dt);
    } else if (s + 1 == N) {
      rep.dq_dt[s] = (3.0 * rep.mean_q[s] - 4.0 * rep.mean_q[s - 1] + rep.mean_q[s - 2]) / (2.0 * dt);
    } else {
      rep.dq_dt[s] = (rep.mean_q[s + 1] - rep.mean_q[s - 1]) / (2.0 * dt);
    }
  }

  std::vector<double> rc, rp;
  for (std::size_t s = 1; s + 1 < N; ++s) {
    rc.push_back(rep.dq_dt[s] - rep.commutator_rate[s]);
    rp.push_back(rep.dq_dt[s] - p_over_m[s]);
  }
  const Json params{{"dt", dt}, {"t_span", t_span}, {"nodes", H.box().size()}};
  rep.commutator = ResidualReport("ehrenfest_commutator", residual_stats(rc, 0, rc.size()), params);
  rep.momentum = ResidualReport("ehrenfest_momentum", residual_stats(rp, 0, rp.size()), params);

  rep.min_margin = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < N; ++s) {
    rep.min_margin = std::min(rep.min_margin, rep.delta_E[s] * rep.delta_Q[s] - 0.5 * hbar * std::abs(rep.dq_dt[s]));
  }
  // Rounding slack: an eigenstate has both sides zero.
  rep.inequality_holds = rep.min_margin >= -1e-10 * hbar;
  return rep;
}

inline EhrenfestReport ehrenfest_check(const Potential& potential, const Constants& constants, const Grid1D& box,
                                       const Packet& packet, double t_span, double dt) {
  const BoxHamiltonian H(potential, constants, box);
  return ehrenfest_evolve(H, H.gaussian(packet), t_span, dt);
}

}  // namespace qtraj
