#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emtime/numeric.hpp"
#include "emtime/semiclassical.hpp"

namespace emt {

// 1+1D two-component Dirac problem on a periodic x-grid, driven by the
// classical environment coordinate through the scalar coupling V(x, R).
struct DiracSpec {
  double light_speed = 137.0;
  double mass = 1.0;
  double x_min = 0.0;
  double x_max = 0.0;
  Eigen::Index n_points = 0;
  std::function<double(double, double)> coupling;  // V(x, R), may be empty

  double length() const { return x_max - x_min; }
  double dx() const { return length() / static_cast<double>(n_points); }
  double node(Eigen::Index j) const {
    return x_min + static_cast<double>(j) * dx();
  }
  // Signed lattice wavenumber of FFT bin `mode` (0..n-1).
  double wavenumber(Eigen::Index mode) const;
  double rest_energy() const { return mass * light_speed * light_speed; }
  double mode_energy(Eigen::Index mode) const;  // sqrt(c^2 k^2 + m^2 c^4)

  static Eigen::Matrix2cd alpha();  // sigma_x
  static Eigen::Matrix2cd beta();   // sigma_z

  std::vector<std::string> validate() const;
};

void require_valid(const DiracSpec& spec);

struct SpinorState {
  Eigen::VectorXcd upper;
  Eigen::VectorXcd lower;
};

double spinor_norm(const DiracSpec& spec, const SpinorState& state);

// Positive-energy eigenspinor of c alpha k + beta m c^2 on one lattice mode,
// normalized so the integral of |u|^2 + |w|^2 over the box is one.
SpinorState positive_energy_plane_wave(const DiracSpec& spec,
                                       Eigen::Index mode);

// <c alpha> of a normalized state; for a positive-energy plane wave this is
// the relativistic group velocity c^2 p / E.
double velocity_expectation(const DiracSpec& spec, const SpinorState& state);

// Per-FFT-bin population of the upper component, summing to the total upper
// weight.
Eigen::VectorXd upper_mode_populations(const DiracSpec& spec,
                                       const SpinorState& state);

struct DiracSeries {
  Eigen::VectorXd t;
  std::vector<SpinorState> states;
  Eigen::MatrixXd populations;  // row 0: upper weight, row 1: lower weight
  Eigen::VectorXd gauge_phase;
  double norm_defect = 0.0;
  Eigen::Index steps_taken = 0;
  // max |dR/dt| / c seen along the trajectory, the size of the neglected
  // relativistic correction to the classical clock.
  double trajectory_speed_ratio_max = 0.0;
};

// Split-step integration of i dpsi/dt = [c alpha p + beta m c^2
// + V(x, R(t))] psi: the free factor is applied exactly per momentum mode,
// the coupling as a position-space phase kick at the step midpoint, with
// step-doubling control of the splitting defect. All time dependence enters
// through the trajectory.
DiracSeries propagate_tdde(const DiracSpec& spec,
                           const ClassicalTrajectory& traj,
                           const SpinorState& psi0, double t0, double t1,
                           double tol = 1e-9, Eigen::Index n_samples = 201);

// Same contract as the nonrelativistic gauge transform: multiply every
// snapshot by exp(+i Phi(t)), keep densities untouched, update the ledger.
DiracSeries gauge_transform_dirac(const DiracSeries& series,
                                  const std::function<double(double)>& u_s);

}  // namespace emt
