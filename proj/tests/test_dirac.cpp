#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "emtime/relativistic.hpp"
#include "emtime/tdse.hpp"

using namespace emt;
using Complexd = std::complex<double>;

namespace {

DiracSpec desk_spec(double light_speed, Eigen::Index n_points) {
  DiracSpec spec;
  spec.light_speed = light_speed;
  spec.mass = 1.0;
  spec.x_min = -8.0;
  spec.x_max = 8.0;
  spec.n_points = n_points;
  return spec;
}

ClassicalTrajectory straight_clock(double speed, double r_start,
                                   double duration) {
  EnvSpec env;
  env.form = EnvSpec::Form::Free;
  env.mass = 1.0;
  const EffectivePotential pot(env);
  const Eigen::VectorXd ts = Eigen::VectorXd::LinSpaced(101, 0.0, duration);
  return classical_trajectory(pot, 0.5 * speed * speed, r_start, 1, ts);
}

double overlap_phase_total(const DiracSpec& spec, const SpinorState& psi0,
                           const DiracSeries& series) {
  // Unwrapped phase of <psi0|psi(t)> accumulated across samples.
  double total = 0.0, last = 0.0;
  for (Eigen::Index k = 0; k < series.t.size(); ++k) {
    const Complexd ov =
        spec.dx() * (psi0.upper.dot(series.states[k].upper) +
                     psi0.lower.dot(series.states[k].lower));
    const double phase = std::arg(ov);
    if (k > 0) {
      double d = phase - last;
      while (d > M_PI) d -= 2.0 * M_PI;
      while (d < -M_PI) d += 2.0 * M_PI;
      total += d;
    }
    last = phase;
  }
  return total;
}

}  // namespace

TEST_CASE("alpha and beta satisfy the Clifford algebra exactly") {
  const Eigen::Matrix2cd a = DiracSpec::alpha();
  const Eigen::Matrix2cd b = DiracSpec::beta();
  const Eigen::Matrix2cd id = Eigen::Matrix2cd::Identity();
  CHECK((a * a - id).cwiseAbs().maxCoeff() == 0.0);
  CHECK((b * b - id).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a * b + b * a).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a - a.adjoint()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((b - b.adjoint()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("validation enforces the Compton resolution") {
  DiracSpec coarse = desk_spec(10.0, 256);  // dx = 0.0625 > 1/(4 m c)
  CHECK_FALSE(coarse.validate().empty());
  const SpinorState psi0 = positive_energy_plane_wave(desk_spec(10.0, 640), 1);
  const ClassicalTrajectory traj = straight_clock(1.0, -8.0, 16.0);
  SpinorState bad;
  bad.upper = psi0.upper.head(256);
  bad.lower = psi0.lower.head(256);
  CHECK_THROWS_AS(propagate_tdde(coarse, traj, bad, 0.0, 1.0), ConfigError);

  DiracSpec fine = desk_spec(10.0, 640);  // dx = 0.025 = 1/(4 m c)
  CHECK(fine.validate().empty());
  DiracSpec negative = fine;
  negative.mass = -1.0;
  CHECK_FALSE(negative.validate().empty());
  DiracSpec flat = fine;
  flat.x_max = flat.x_min;
  CHECK_FALSE(flat.validate().empty());
}

TEST_CASE("positive-energy plane waves carry the group velocity") {
  const DiracSpec spec = desk_spec(5.0, 512);
  for (const Eigen::Index mode : {3, 509, 0}) {
    const SpinorState wave = positive_energy_plane_wave(spec, mode);
    CHECK(std::abs(spinor_norm(spec, wave) - 1.0) < 1e-12);
    const double k = spec.wavenumber(mode);
    const double e = spec.mode_energy(mode);
    const double expected = spec.light_speed * spec.light_speed * k / e;
    CHECK(std::abs(velocity_expectation(spec, wave) - expected) < 1e-10);
    const Eigen::VectorXd modes = upper_mode_populations(spec, wave);
    const double a = spec.rest_energy() + e;
    const double b = spec.light_speed * k;
    CHECK(std::abs(modes(mode) - a * a / (a * a + b * b)) < 1e-12);
  }

  // Equal superposition of +k and -k has zero velocity by symmetry.
  const SpinorState plus = positive_energy_plane_wave(spec, 3);
  const SpinorState minus = positive_energy_plane_wave(spec, 512 - 3);
  SpinorState both;
  both.upper = (plus.upper + minus.upper) / std::sqrt(2.0);
  both.lower = (plus.lower + minus.lower) / std::sqrt(2.0);
  CHECK(std::abs(velocity_expectation(spec, both)) < 1e-12);
}

TEST_CASE("free plane wave only rotates its phase") {
  // [Exact per-mode propagator: the measured rotation rate must equal
  //  sqrt(c^2 k^2 + m^2 c^4) and the spinor composition must stay frozen.]
  const DiracSpec spec = desk_spec(5.0, 512);
  const SpinorState psi0 = positive_energy_plane_wave(spec, 3);
  const ClassicalTrajectory traj = straight_clock(1.0, -8.0, 2.5);
  const DiracSeries series =
      propagate_tdde(spec, traj, psi0, 0.0, 2.0, 1e-9, 401);

  const double energy = spec.mode_energy(3);
  const double total = overlap_phase_total(spec, psi0, series);
  CHECK(std::abs(total + energy * 2.0) / (energy * 2.0) < 1e-8);
  for (Eigen::Index k = 0; k < series.t.size(); ++k)
    CHECK(std::abs(series.populations(0, k) - series.populations(0, 0)) <
          1e-9);
  CHECK(series.norm_defect < 1e-10);
  CHECK(series.trajectory_speed_ratio_max == 0.0);
}

TEST_CASE("constant scalar potential is a pure phase") {
  const DiracSpec base = desk_spec(5.0, 512);
  DiracSpec spec = base;
  const double v0 = 0.37;
  spec.coupling = [v0](double, double) { return v0; };
  const SpinorState psi0 = positive_energy_plane_wave(spec, 2);
  const ClassicalTrajectory traj = straight_clock(1.0, -8.0, 2.5);
  const DiracSeries series =
      propagate_tdde(spec, traj, psi0, 0.0, 2.0, 1e-9, 201);

  const double energy = spec.mode_energy(2) + v0;
  const double total = overlap_phase_total(spec, psi0, series);
  CHECK(std::abs(total + energy * 2.0) / (energy * 2.0) < 1e-10);
  CHECK(series.norm_defect < 1e-10);
  CHECK(series.trajectory_speed_ratio_max == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("norm stays put through a strong pulse") {
  DiracSpec spec = desk_spec(10.0, 640);
  const double q = 2.0 * M_PI * 4.0 / spec.length();
  spec.coupling = [q](double x, double r) {
    return 0.3 * std::cos(q * x) * std::exp(-0.5 * r * r / (1.6 * 1.6));
  };
  const SpinorState psi0 = positive_energy_plane_wave(spec, 1);
  const ClassicalTrajectory traj = straight_clock(1.0, -8.0, 16.0);
  const DiracSeries series =
      propagate_tdde(spec, traj, psi0, 0.0, 16.0, 1e-9, 41);

  CHECK(series.norm_defect < 1e-10);
  for (Eigen::Index k = 0; k < series.t.size(); ++k)
    CHECK(std::abs(series.populations.col(k).sum() - 1.0) < 1e-9);
  CHECK(series.steps_taken > 400);
  // The pulse moves weight into the lower component and other modes.
  CHECK(series.populations(1, 40) > 1e-6);
}

TEST_CASE("splitting self-converges as the tolerance shrinks") {
  DiracSpec spec = desk_spec(5.0, 320);
  const double q = 2.0 * M_PI * 4.0 / spec.length();
  spec.coupling = [q](double x, double r) {
    return 0.2 * std::cos(q * x) * std::exp(-0.5 * r * r);
  };
  const SpinorState psi0 = positive_energy_plane_wave(spec, 1);
  const ClassicalTrajectory traj = straight_clock(1.0, -4.0, 8.0);

  const DiracSeries ref = propagate_tdde(spec, traj, psi0, 0.0, 8.0, 1e-11, 9);
  double previous = std::numeric_limits<double>::max();
  for (const double tol : {1e-5, 1e-7}) {
    const DiracSeries run = propagate_tdde(spec, traj, psi0, 0.0, 8.0, tol, 9);
    const double err = std::sqrt(
        spec.dx() *
        ((run.states[8].upper - ref.states[8].upper).squaredNorm() +
         (run.states[8].lower - ref.states[8].lower).squaredNorm()));
    CHECK(err < previous);
    previous = err;
  }
  CHECK(previous < 1e-5);
}

TEST_CASE("gauge transform shifts spinor phases but not densities") {
  DiracSpec spec = desk_spec(5.0, 320);
  spec.coupling = [](double x, double r) {
    return 0.2 * std::cos(x) * std::exp(-0.5 * r * r);
  };
  const SpinorState psi0 = positive_energy_plane_wave(spec, 1);
  const ClassicalTrajectory traj = straight_clock(1.0, -4.0, 8.0);
  const DiracSeries res = propagate_tdde(spec, traj, psi0, 0.0, 8.0, 1e-9, 17);

  SUBCASE("zero offset is the identity") {
    const DiracSeries same = gauge_transform_dirac(res, [](double) { return 0.0; });
    for (Eigen::Index k = 0; k < res.t.size(); ++k) {
      CHECK((same.states[k].upper - res.states[k].upper).norm() == 0.0);
      CHECK(same.gauge_phase(k) == res.gauge_phase(k));
    }
  }

  SUBCASE("constant offset is a global ramp") {
    const double c = 0.45;
    const DiracSeries out = gauge_transform_dirac(res, [c](double) { return c; });
    for (Eigen::Index k = 0; k < res.t.size(); ++k) {
      const Complexd ramp = std::exp(Complexd(0.0, c * (res.t(k) - res.t(0))));
      CHECK((out.states[k].upper - ramp * res.states[k].upper).norm() < 1e-12);
      CHECK((out.states[k].lower - ramp * res.states[k].lower).norm() < 1e-12);
      for (Eigen::Index n = 0; n < 2; ++n)
        CHECK(out.populations(n, k) == res.populations(n, k));
    }
  }

  SUBCASE("transforming back restores the amplitudes") {
    const auto u = [](double t) { return 0.2 * std::sin(t) + 0.05 * t * t; };
    const auto w = [](double t) { return -(0.2 * std::sin(t) + 0.05 * t * t); };
    const DiracSeries back = gauge_transform_dirac(gauge_transform_dirac(res, u), w);
    for (Eigen::Index k = 0; k < res.t.size(); ++k) {
      CHECK((back.states[k].upper - res.states[k].upper).norm() < 1e-12);
      CHECK((back.states[k].lower - res.states[k].lower).norm() < 1e-12);
      CHECK(std::abs(back.gauge_phase(k) - res.gauge_phase(k)) < 1e-12);
    }
  }
}

TEST_CASE("shrinking 1/c^2 gap to the nonrelativistic reference") {
  // [Bragg-style pulse between lattice momentum modes; the matched two-level
  //  reference evolves the same mode ladder with kinetic k^2/2m. Residual
  //  disagreement is the relativistic correction and drops fourfold per
  //  doubling of c.]
  const double box = 8.0, lambda = 0.1, sigma_r = 1.6;
  const double length = 2.0 * box;
  const double q = 2.0 * M_PI * 4.0 / length;
  const double k0 = 2.0 * M_PI * 1.0 / length;
  const int j_max = 4;
  const ClassicalTrajectory traj = straight_clock(1.0, -10.0, 20.0);
  auto gauss = [sigma_r](double r) {
    return std::exp(-0.5 * r * r / (sigma_r * sigma_r));
  };

  const int dim = 2 * j_max + 1;
  EffectiveHamiltonian ham;
  ham.t_begin = 0.0;
  ham.t_end = 20.0;
  ham.dim = dim;
  ham.matrix = [=](double t) {
    const double r = -10.0 + t;
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(dim, dim);
    for (int j = -j_max; j <= j_max; ++j) {
      const double k = k0 + j * q;
      h(j + j_max, j + j_max) = 0.5 * k * k;
      if (j < j_max) {
        h(j + j_max, j + 1 + j_max) = 0.5 * lambda * gauss(r);
        h(j + 1 + j_max, j + j_max) = 0.5 * lambda * gauss(r);
      }
    }
    return h;
  };
  Eigen::VectorXcd c0 = Eigen::VectorXcd::Zero(dim);
  c0(j_max) = 1.0;
  const PropagationResult nr = propagate(ham, c0, 0.0, 20.0, 1e-12, 11);
  CHECK(std::abs(nr.populations.col(10).sum() - 1.0) < 1e-10);
  CHECK(nr.populations(j_max - 1, 10) > 1e-3);  // the Bragg partner moved

  double dev5 = 0.0, dev10 = 0.0;
  for (const double c : {5.0, 10.0}) {
    DiracSpec spec = desk_spec(c, c == 5.0 ? 320 : 640);
    spec.coupling = [=](double x, double r) {
      return lambda * std::cos(q * x) * gauss(r);
    };
    const SpinorState psi0 = positive_energy_plane_wave(spec, 1);
    const DiracSeries series =
        propagate_tdde(spec, traj, psi0, 0.0, 20.0, 1e-9, 11);
    CHECK(series.norm_defect < 1e-10);
    const Eigen::VectorXd modes =
        upper_mode_populations(spec, series.states.back());
    double dev = 0.0;
    for (int j = -j_max; j <= j_max; ++j) {
      Eigen::Index mu = 1 + 4 * j;
      if (mu < 0) mu += spec.n_points;
      dev += std::abs(modes(mu) - nr.populations(j + j_max, 10));
    }
    (c == 5.0 ? dev5 : dev10) = dev;
  }
  CHECK(dev5 > 1e-4);
  CHECK(dev5 < 5e-3);
  CHECK(dev5 / dev10 > 3.0);
  CHECK(dev5 / dev10 < 5.0);
}

TEST_CASE("propagation rejects bad inputs") {
  const DiracSpec spec = desk_spec(5.0, 320);
  const SpinorState psi0 = positive_energy_plane_wave(spec, 1);
  const ClassicalTrajectory traj = straight_clock(1.0, -4.0, 8.0);

  SpinorState off = psi0;
  off.upper *= 1.5;
  CHECK_THROWS_AS(propagate_tdde(spec, traj, off, 0.0, 8.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(propagate_tdde(spec, traj, psi0, 0.0, 9.0), NumericError);
  CHECK_THROWS_AS(propagate_tdde(spec, traj, psi0, 0.0, 8.0, -1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(positive_energy_plane_wave(spec, 320),
                  std::invalid_argument);
  SpinorState not_norm = psi0;
  not_norm.lower *= 3.0;
  CHECK_THROWS_AS(velocity_expectation(spec, not_norm),
                  std::invalid_argument);
}
