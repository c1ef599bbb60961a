#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "emtime/model.hpp"
#include "emtime/numeric.hpp"

namespace emt {

// Effective potential seen by the environment coordinate: the bare
// environment potential, optionally augmented by a tabulated averaged system
// energy (one value per grid node, interpolated by a cubic spline so the
// derivative used by trajectories is smooth).
class EffectivePotential {
 public:
  EffectivePotential() = default;  // free particle, unit mass
  explicit EffectivePotential(const EnvSpec& env);
  EffectivePotential(const EnvSpec& env, const Grid& grid,
                     const Eigen::VectorXd& averaged_term);

  double value(double r) const;
  double derivative(double r) const;
  double mass() const { return env_.mass; }
  bool includes_average() const { return has_average_; }

  // Domain on which the potential is defined; unbounded unless a tabulated
  // ingredient restricts it.
  bool bounded() const { return bounded_; }
  double domain_min() const { return domain_min_; }
  double domain_max() const { return domain_max_; }

 private:
  EnvSpec env_;
  bool has_average_ = false;
  CubicSpline average_;
  bool bounded_ = false;
  double domain_min_ = 0.0;
  double domain_max_ = 0.0;
};

// Primitive semiclassical wave data on a grid: local momentum
// P = sqrt(2M(E - V_eff)), accumulated phase W(R) = integral of P from the
// first valid node, and flux-normalized amplitude A = P^{-1/2} so that A^2 P
// is constant. Nodes too close to a turning point (or classically forbidden)
// are masked invalid; only the first contiguous valid run carries data.
struct WkbState {
  Eigen::VectorXd r;
  Eigen::VectorXd momentum;
  Eigen::VectorXd action;
  Eigen::VectorXd amplitude;
  std::vector<std::uint8_t> valid;
  double energy = 0.0;
  // Largest |P'| / (2 P^2) over the valid run: the size of the amplitude
  // derivative dropped by the primitive approximation relative to the
  // retained phase derivative.
  double validity_max = 0.0;

  // Travelling wave A e^{iW}; zero on masked nodes.
  Eigen::VectorXcd wave() const;
};

// Builds the primitive travelling wave at the given energy. An explicit
// window restricts evaluation to [window.first, window.second]; without one
// the whole grid is scanned. Throws NumericError when no classically allowed
// node exists in the window.
WkbState wkb_wavefunction(const EffectivePotential& pot, const Grid& grid,
                          double energy,
                          std::optional<std::pair<double, double>> window = {});

// Two-sided standing wave N P^{-1/2} cos(W - pi/4) between the turning
// points bracketing the allowed region of a single well, with W measured
// from the left turning point and N fixed by unit L2 norm over the valid
// mask. Masked nodes are zero. Intended for comparisons against bound
// eigenstates of the same well.
Eigen::VectorXd wkb_standing_wave(const EffectivePotential& pot,
                                  const Grid& grid, double energy,
                                  std::vector<std::uint8_t>* valid_out = nullptr);

// Classical trajectory of the environment coordinate: Hamiltonian flow of
// P^2/2M + V_eff sampled on the caller's time grid.
struct ClassicalTrajectory {
  Eigen::VectorXd t;
  Eigen::VectorXd r;
  Eigen::VectorXd p;
  double energy = 0.0;
  double mass = 0.0;
  EffectivePotential potential;
  bool turning_encountered = false;
  bool truncated = false;      // stopped early at a turning point on request
  bool exited_domain = false;  // stopped early at the edge of a bounded domain
  double energy_residual_max = 0.0;

  double position(double time) const;
  double momentum_at(double time) const;

  // Interpolants over the stored samples, built once by classical_trajectory.
  CubicSpline r_of_t;
  CubicSpline p_of_t;
};

// Integrates the flow from (r_start, direction * |P(r_start)|) over t_grid
// (ascending, t_grid(0) is the initial time). Adaptive embedded Runge-Kutta
// with local error at most err_rate * dt per step. With stop_at_turning the
// samples end at the last one before the first momentum sign change;
// otherwise the flow continues through turning points.
ClassicalTrajectory classical_trajectory(const EffectivePotential& pot,
                                         double energy, double r_start,
                                         int direction,
                                         const Eigen::VectorXd& t_grid,
                                         bool stop_at_turning = false,
                                         double err_rate = 1e-10);

// Monotone time-of-arrival map t(R) recovered from quadrature of M/P along
// the trajectory's swept interval, independent of the flow integration.
struct TimeMap {
  Eigen::VectorXd r;  // ascending
  Eigen::VectorXd t;
  bool increasing_in_r = true;
  double max_sample_mismatch = 0.0;  // quadrature vs trajectory samples

  double at(double r_query) const;

 private:
  friend TimeMap time_map(const ClassicalTrajectory& traj);
  CubicSpline t_of_r_;
};

// Requires strictly monotone positions (a single branch between turning
// points); throws NumericError otherwise.
TimeMap time_map(const ClassicalTrajectory& traj);

}  // namespace emt
