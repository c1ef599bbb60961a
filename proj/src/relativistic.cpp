#include "emtime/relativistic.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>

#include <unsupported/Eigen/FFT>

namespace emt {

namespace {

using Complex = std::complex<double>;

struct ModeTable {
  Eigen::VectorXd k;       // signed wavenumber per FFT bin
  Eigen::VectorXd energy;  // sqrt(c^2 k^2 + m^2 c^4)
};

ModeTable mode_table(const DiracSpec& spec) {
  ModeTable table;
  table.k.resize(spec.n_points);
  table.energy.resize(spec.n_points);
  for (Eigen::Index mode = 0; mode < spec.n_points; ++mode) {
    table.k(mode) = spec.wavenumber(mode);
    table.energy(mode) = spec.mode_energy(mode);
  }
  return table;
}

// psi -> exp(-i h (c alpha k + beta m c^2)) psi in the mode basis:
// cos(E h) I - i sin(E h) / E * [[mc^2, ck], [ck, -mc^2]].
void free_step(const DiracSpec& spec, const ModeTable& modes, double h,
               Eigen::VectorXcd* uhat, Eigen::VectorXcd* what) {
  const double mc2 = spec.rest_energy();
  for (Eigen::Index mode = 0; mode < spec.n_points; ++mode) {
    const double e = modes.energy(mode);
    const double ck = spec.light_speed * modes.k(mode);
    const double co = std::cos(e * h);
    const double si = std::sin(e * h) / e;
    const Complex u = (*uhat)(mode);
    const Complex w = (*what)(mode);
    (*uhat)(mode) = co * u - Complex(0.0, si) * (mc2 * u + ck * w);
    (*what)(mode) = co * w - Complex(0.0, si) * (ck * u - mc2 * w);
  }
}

struct Stepper {
  const DiracSpec& spec;
  const ClassicalTrajectory& traj;
  ModeTable modes;
  Eigen::FFT<double> fft;
  Eigen::VectorXd x;
  double speed_ratio_max = 0.0;

  explicit Stepper(const DiracSpec& s, const ClassicalTrajectory& tr)
      : spec(s), traj(tr), modes(mode_table(s)) {
    x.resize(spec.n_points);
    for (Eigen::Index j = 0; j < spec.n_points; ++j) x(j) = spec.node(j);
  }

  // Strang step with the coupling frozen at the midpoint position of the
  // clock: kick(h/2), exact free flight(h), kick(h/2).
  void advance(double t, double h, Eigen::VectorXcd* u, Eigen::VectorXcd* w) {
    Eigen::VectorXcd kick;
    if (spec.coupling) {
      const double t_mid = t + 0.5 * h;
      const double r = traj.position(t_mid);
      const double ratio =
          std::abs(traj.momentum_at(t_mid)) / (traj.mass * spec.light_speed);
      speed_ratio_max = std::max(speed_ratio_max, ratio);
      kick.resize(spec.n_points);
      for (Eigen::Index j = 0; j < spec.n_points; ++j)
        kick(j) = std::exp(Complex(0.0, -0.5 * h * spec.coupling(x(j), r)));
      *u = u->cwiseProduct(kick);
      *w = w->cwiseProduct(kick);
    }
    Eigen::VectorXcd uhat, what;
    fft.fwd(uhat, *u);
    fft.fwd(what, *w);
    free_step(spec, modes, h, &uhat, &what);
    fft.inv(*u, uhat);
    fft.inv(*w, what);
    if (kick.size() > 0) {
      *u = u->cwiseProduct(kick);
      *w = w->cwiseProduct(kick);
    }
  }
};

}  // namespace

double DiracSpec::wavenumber(Eigen::Index mode) const {
  const Eigen::Index folded = mode <= n_points / 2 ? mode : mode - n_points;
  return 2.0 * M_PI * static_cast<double>(folded) / length();
}

double DiracSpec::mode_energy(Eigen::Index mode) const {
  const double ck = light_speed * wavenumber(mode);
  return std::sqrt(ck * ck + rest_energy() * rest_energy());
}

Eigen::Matrix2cd DiracSpec::alpha() {
  Eigen::Matrix2cd a = Eigen::Matrix2cd::Zero();
  a(0, 1) = 1.0;
  a(1, 0) = 1.0;
  return a;
}

Eigen::Matrix2cd DiracSpec::beta() {
  Eigen::Matrix2cd b = Eigen::Matrix2cd::Zero();
  b(0, 0) = 1.0;
  b(1, 1) = -1.0;
  return b;
}

std::vector<std::string> DiracSpec::validate() const {
  std::vector<std::string> v;
  if (!(light_speed > 0.0)) v.push_back("light speed must be > 0");
  if (!(mass > 0.0)) v.push_back("mass must be > 0");
  if (n_points < 8) v.push_back("grid needs at least 8 points");
  if (!(x_max > x_min)) v.push_back("grid needs x_max > x_min");
  if (light_speed > 0.0 && mass > 0.0 && n_points >= 8 && x_max > x_min &&
      dx() > 1.0 / (4.0 * mass * light_speed))
    v.push_back("grid spacing does not resolve the Compton scale 1/(4 m c)");
  return v;
}

void require_valid(const DiracSpec& spec) {
  const std::vector<std::string> problems = spec.validate();
  if (problems.empty()) return;
  std::string msg = "invalid Dirac spec:";
  for (const std::string& p : problems) msg += "\n  " + p;
  throw ConfigError(msg);
}

double spinor_norm(const DiracSpec& spec, const SpinorState& state) {
  return std::sqrt(spec.dx() *
                   (state.upper.squaredNorm() + state.lower.squaredNorm()));
}

SpinorState positive_energy_plane_wave(const DiracSpec& spec,
                                       Eigen::Index mode) {
  require_valid(spec);
  if (mode < 0 || mode >= spec.n_points)
    throw std::invalid_argument("plane wave: mode index outside the grid");
  const double k = spec.wavenumber(mode);
  const double e = spec.mode_energy(mode);
  const double a = spec.rest_energy() + e;
  const double b = spec.light_speed * k;
  const double scale = 1.0 / (std::sqrt(spec.length()) * std::hypot(a, b));
  SpinorState state;
  state.upper.resize(spec.n_points);
  state.lower.resize(spec.n_points);
  for (Eigen::Index j = 0; j < spec.n_points; ++j) {
    const Complex wave = std::exp(Complex(0.0, k * spec.node(j)));
    state.upper(j) = scale * a * wave;
    state.lower(j) = scale * b * wave;
  }
  return state;
}

double velocity_expectation(const DiracSpec& spec, const SpinorState& state) {
  if (state.upper.size() != spec.n_points ||
      state.lower.size() != spec.n_points)
    throw std::invalid_argument("velocity: state size mismatch");
  if (std::abs(spinor_norm(spec, state) - 1.0) > 1e-10)
    throw std::invalid_argument("velocity: state must be normalized");
  return 2.0 * spec.light_speed * spec.dx() *
         state.upper.dot(state.lower).real();
}

Eigen::VectorXd upper_mode_populations(const DiracSpec& spec,
                                       const SpinorState& state) {
  Eigen::FFT<double> fft;
  Eigen::VectorXcd uhat;
  Eigen::VectorXcd u = state.upper;
  fft.fwd(uhat, u);
  return spec.dx() / static_cast<double>(spec.n_points) * uhat.cwiseAbs2();
}

DiracSeries propagate_tdde(const DiracSpec& spec,
                           const ClassicalTrajectory& traj,
                           const SpinorState& psi0, double t0, double t1,
                           double tol, Eigen::Index n_samples) {
  require_valid(spec);
  if (psi0.upper.size() != spec.n_points ||
      psi0.lower.size() != spec.n_points)
    throw std::invalid_argument("dirac propagate: state size mismatch");
  if (std::abs(spinor_norm(spec, psi0) - 1.0) > 1e-12)
    throw std::invalid_argument(
        "dirac propagate: initial state must be normalized");
  if (!(tol > 0.0))
    throw std::invalid_argument("dirac propagate: tol must be > 0");
  if (n_samples < 2)
    throw std::invalid_argument("dirac propagate: need at least two samples");
  if (!(t1 > t0))
    throw std::invalid_argument("dirac propagate: need t1 > t0");
  if (traj.t.size() < 2 || t0 < traj.t(0) - 1e-12 ||
      t1 > traj.t(traj.t.size() - 1) + 1e-12)
    throw NumericError("dirac propagate: trajectory does not cover the window");

  const double span = t1 - t0;
  const double dt_floor = 1e-14 * std::max(1.0, span);
  const double root_dx = std::sqrt(spec.dx());

  DiracSeries out;
  out.t = Eigen::VectorXd::LinSpaced(n_samples, t0, t1);
  out.states.resize(n_samples);
  out.states[0] = psi0;
  out.gauge_phase = Eigen::VectorXd::Zero(n_samples);
  out.populations.resize(2, n_samples);

  Stepper stepper(spec, traj);
  Eigen::VectorXcd u = psi0.upper, w = psi0.lower;
  double dt = span / 1024.0;
  for (Eigen::Index k = 0; k + 1 < n_samples; ++k) {
    double t = out.t(k);
    const double t_next = out.t(k + 1);
    while (t_next - t > dt_floor) {
      double h = dt;
      bool clipped = false;
      if (t + h >= t_next) {
        h = t_next - t;
        clipped = true;
      }
      if (h < dt_floor)
        throw NumericError("dirac propagate: time step underflow");
      Eigen::VectorXcd u_full = u, w_full = w;
      stepper.advance(t, h, &u_full, &w_full);
      Eigen::VectorXcd u_half = u, w_half = w;
      stepper.advance(t, 0.5 * h, &u_half, &w_half);
      stepper.advance(t + 0.5 * h, 0.5 * h, &u_half, &w_half);
      const double err =
          root_dx * std::sqrt((u_full - u_half).squaredNorm() +
                              (w_full - w_half).squaredNorm());
      if (err <= tol) {
        u = u_half;
        w = w_half;
        t += h;
        ++out.steps_taken;
        if (!clipped) {
          const double factor =
              err > 0.0 ? std::clamp(0.9 * std::cbrt(tol / err), 0.3, 2.0)
                        : 2.0;
          dt = h * factor;
        }
      } else {
        dt = h * std::max(0.3, 0.9 * std::cbrt(tol / err));
        if (dt < dt_floor)
          throw NumericError("dirac propagate: time step underflow");
      }
    }
    out.states[k + 1].upper = u;
    out.states[k + 1].lower = w;
  }

  out.trajectory_speed_ratio_max = stepper.speed_ratio_max;
  out.norm_defect = 0.0;
  for (Eigen::Index k = 0; k < n_samples; ++k) {
    const double up = spec.dx() * out.states[k].upper.squaredNorm();
    const double low = spec.dx() * out.states[k].lower.squaredNorm();
    out.populations(0, k) = up;
    out.populations(1, k) = low;
    out.norm_defect =
        std::max(out.norm_defect, std::abs(std::sqrt(up + low) - 1.0));
  }
  return out;
}

DiracSeries gauge_transform_dirac(const DiracSeries& series,
                                  const std::function<double(double)>& u_s) {
  if (!u_s)
    throw std::invalid_argument("gauge transform: offset function is empty");
  if (series.t.size() == 0)
    throw std::invalid_argument("gauge transform: empty series");
  DiracSeries out = series;
  double phi = 0.0;
  for (Eigen::Index k = 0; k < series.t.size(); ++k) {
    if (k > 0)
      phi += adaptive_integral(u_s, series.t(k - 1), series.t(k), 1e-13);
    const Complex ramp = std::exp(Complex(0.0, phi));
    out.states[k].upper *= ramp;
    out.states[k].lower *= ramp;
    out.gauge_phase(k) += phi;
  }
  return out;
}

}  // namespace emt
