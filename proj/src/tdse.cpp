#include "emtime/tdse.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>

namespace emt {

namespace {

using Complex = std::complex<double>;

// One exact unitary step psi -> exp(-i h H(t + h/2)) psi through the
// eigendecomposition of the midpoint Hamiltonian.
Eigen::VectorXcd midpoint_step(const EffectiveHamiltonian& ham, double t,
                               double h, const Eigen::VectorXcd& psi) {
  const Eigen::MatrixXcd hs = ham.at(t + 0.5 * h);
  const double scale = std::max(1.0, hs.cwiseAbs().maxCoeff());
  if ((hs - hs.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw NumericError("propagate: Hamiltonian sample is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(hs);
  if (es.info() != Eigen::Success)
    throw NumericError("propagate: eigendecomposition failed");
  Eigen::VectorXcd coeffs = es.eigenvectors().adjoint() * psi;
  for (Eigen::Index i = 0; i < coeffs.size(); ++i)
    coeffs(i) *= std::exp(Complex(0.0, -h * es.eigenvalues()(i)));
  return es.eigenvectors() * coeffs;
}

}  // namespace

Eigen::MatrixXcd EffectiveHamiltonian::at(double t) const {
  if (!matrix)
    throw std::invalid_argument("effective hamiltonian: no matrix function");
  const double slack =
      1e-12 * std::max({1.0, std::abs(t_begin), std::abs(t_end)});
  if (t < t_begin - slack || t > t_end + slack)
    throw NumericError(
        "effective hamiltonian: time outside the trajectory window");
  return matrix(t);
}

double EffectiveHamiltonian::offset_at(double t) const {
  if (!offset) return 0.0;
  const double slack =
      1e-12 * std::max({1.0, std::abs(t_begin), std::abs(t_end)});
  if (t < t_begin - slack || t > t_end + slack)
    throw NumericError(
        "effective hamiltonian: time outside the trajectory window");
  return offset(t);
}

EffectiveHamiltonian effective_hamiltonian(const CompositeModel& model,
                                           const ClassicalTrajectory& traj) {
  require_valid(model);
  if (traj.t.size() < 2)
    throw std::invalid_argument(
        "effective hamiltonian: trajectory needs at least two samples");
  EffectiveHamiltonian ham;
  ham.t_begin = traj.t(0);
  ham.t_end = traj.t(traj.t.size() - 1);
  ham.dim = model.system.dim();
  const Eigen::MatrixXcd h_sys = model.system.hamiltonian;
  const CouplingSpec coupling = model.coupling;
  const EnvSpec env = model.env;
  ham.matrix = [h_sys, coupling, traj](double t) -> Eigen::MatrixXcd {
    if (coupling.is_zero()) return h_sys;
    return h_sys + coupling.at(traj.position(t));
  };
  ham.offset = [env, traj](double t) { return env.potential(traj.position(t)); };
  return ham;
}

PropagationResult propagate(const EffectiveHamiltonian& ham,
                            const Eigen::VectorXcd& psi0, double t0, double t1,
                            double tol, Eigen::Index n_samples) {
  if (!ham.matrix)
    throw std::invalid_argument("propagate: effective Hamiltonian is empty");
  if (psi0.size() != ham.dim)
    throw std::invalid_argument("propagate: state dimension mismatch");
  if (std::abs(psi0.norm() - 1.0) > 1e-12)
    throw std::invalid_argument("propagate: initial state must be normalized");
  if (!(tol > 0.0)) throw std::invalid_argument("propagate: tol must be > 0");
  if (n_samples < 2)
    throw std::invalid_argument("propagate: need at least two samples");
  if (!(t1 > t0)) throw std::invalid_argument("propagate: need t1 > t0");
  const double slack =
      1e-12 * std::max({1.0, std::abs(ham.t_begin), std::abs(ham.t_end)});
  if (t0 < ham.t_begin - slack || t1 > ham.t_end + slack)
    throw NumericError("propagate: time window exceeds the Hamiltonian domain");

  const double span = t1 - t0;
  const double dt_floor = 1e-14 * std::max(1.0, span);

  PropagationResult out;
  out.t = Eigen::VectorXd::LinSpaced(n_samples, t0, t1);
  out.psi.resize(ham.dim, n_samples);
  out.psi.col(0) = psi0;
  out.gauge_phase = Eigen::VectorXd::Zero(n_samples);

  Eigen::VectorXcd psi = psi0;
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
        throw NumericError("propagate: time step underflow");
      const Eigen::VectorXcd full = midpoint_step(ham, t, h, psi);
      const Eigen::VectorXcd halves =
          midpoint_step(ham, t + 0.5 * h, 0.5 * h,
                        midpoint_step(ham, t, 0.5 * h, psi));
      const double err = (full - halves).norm();
      if (err <= tol) {
        psi = halves;
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
          throw NumericError("propagate: time step underflow");
      }
    }
    out.psi.col(k + 1) = psi;
    if (ham.offset) {
      const std::function<double(double)>& u = ham.offset;
      out.gauge_phase(k + 1) =
          out.gauge_phase(k) + adaptive_integral(u, out.t(k), t_next, 1e-13);
    }
  }

  out.populations = out.psi.cwiseAbs2();
  out.norm_defect = 0.0;
  for (Eigen::Index k = 0; k < n_samples; ++k)
    out.norm_defect =
        std::max(out.norm_defect, std::abs(out.psi.col(k).norm() - 1.0));
  return out;
}

PropagationResult gauge_transform(const PropagationResult& result,
                                  const std::function<double(double)>& u_s) {
  if (!u_s)
    throw std::invalid_argument("gauge transform: offset function is empty");
  if (result.t.size() == 0)
    throw std::invalid_argument("gauge transform: empty propagation result");
  PropagationResult out = result;
  double phi = 0.0;
  for (Eigen::Index k = 0; k < result.t.size(); ++k) {
    if (k > 0)
      phi += adaptive_integral(u_s, result.t(k - 1), result.t(k), 1e-13);
    out.psi.col(k) *= std::exp(Complex(0.0, phi));
    out.gauge_phase(k) += phi;
  }
  return out;
}

ImpactResult impact_parameter_run(const CompositeModel& model,
                                  double beam_momentum,
                                  const Eigen::VectorXcd& psi0, double tol,
                                  Eigen::Index n_samples) {
  require_valid(model);
  if (!(beam_momentum > 0.0))
    throw std::invalid_argument("impact run: beam momentum must be > 0");
  if (psi0.size() != model.system.dim())
    throw std::invalid_argument("impact run: state dimension mismatch");
  if (std::abs(psi0.norm() - 1.0) > 1e-12)
    throw std::invalid_argument("impact run: initial state must be normalized");
  if (coupling_boundary_ratio(model) > 1e-10)
    throw NumericError(
        "impact run: coupling is not negligible at the window edges");

  ImpactResult out;
  out.beam_momentum = beam_momentum;
  const double mass = model.env.mass;
  out.speed = beam_momentum / mass;
  const double kinetic = 0.5 * beam_momentum * beam_momentum / mass;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(model.system.hamiltonian);
  if (es.info() != Eigen::Success)
    throw NumericError("impact run: system eigendecomposition failed");
  out.channel_energies = es.eigenvalues();
  const double gap =
      out.channel_energies(out.channel_energies.size() - 1) -
      out.channel_energies(0);
  out.kinetic_to_spacing =
      gap > 0.0 ? kinetic / gap : std::numeric_limits<double>::infinity();
  out.adiabatic_warning = out.kinetic_to_spacing < 10.0;

  const Eigen::VectorXd entry_weights =
      (es.eigenvectors().adjoint() * psi0).cwiseAbs2();
  entry_weights.maxCoeff(&out.entry_channel);
  out.matched_energy = kinetic + out.channel_energies(out.entry_channel);

  // Straight-line clock Z(t) = Z_min + v t across the grid window.
  const double z_min = model.grid.r_min;
  const double duration = (model.grid.r_max - z_min) / out.speed;
  const double v = out.speed;
  const Eigen::MatrixXcd h_sys = model.system.hamiltonian;
  const CouplingSpec coupling = model.coupling;
  const EnvSpec env = model.env;
  EffectiveHamiltonian ham;
  ham.t_begin = 0.0;
  ham.t_end = duration;
  ham.dim = model.system.dim();
  ham.matrix = [h_sys, coupling, z_min, v](double t) -> Eigen::MatrixXcd {
    if (coupling.is_zero()) return h_sys;
    return h_sys + coupling.at(z_min + v * t);
  };
  ham.offset = [env, z_min, v](double t) {
    return env.potential(z_min + v * t);
  };

  out.evolution = propagate(ham, psi0, 0.0, duration, tol, n_samples);
  out.final_probabilities =
      (es.eigenvectors().adjoint() * out.evolution.psi.col(n_samples - 1))
          .cwiseAbs2();
  return out;
}

}  // namespace emt
