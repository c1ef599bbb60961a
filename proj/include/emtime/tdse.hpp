#pragma once

#include <functional>

#include <Eigen/Dense>

#include "emtime/model.hpp"
#include "emtime/numeric.hpp"
#include "emtime/semiclassical.hpp"

namespace emt {

// Time-parameterized system Hamiltonian H_S + H_ES(R(t)) plus the scalar
// environment term U_S(R(t)) that the gauge transformation removes.
struct EffectiveHamiltonian {
  std::function<Eigen::MatrixXcd(double)> matrix;
  std::function<double(double)> offset;  // may be empty: no scalar term
  double t_begin = 0.0;
  double t_end = 0.0;
  Eigen::Index dim = 0;

  Eigen::MatrixXcd at(double t) const;  // range-checked
  double offset_at(double t) const;
};

// Builds the effective Hamiltonian along a classical trajectory: the system
// block follows R(t) through the trajectory interpolant, the scalar offset
// is the environment potential on the same path.
EffectiveHamiltonian effective_hamiltonian(const CompositeModel& model,
                                           const ClassicalTrajectory& traj);

// Amplitudes, populations, and ledgers sampled on a uniform time grid.
struct PropagationResult {
  Eigen::VectorXd t;
  Eigen::MatrixXcd psi;         // dim x n_samples, column per sample
  Eigen::MatrixXd populations;  // |psi_n|^2
  Eigen::VectorXd gauge_phase;  // integral of the scalar offset up to t
  double norm_defect = 0.0;     // max | ||psi|| - 1 | over samples
  Eigen::Index steps_taken = 0;
};

// Unitary midpoint-exponential propagation of i dpsi/dt = H(t) psi from t0
// to t1 with step doubling: each step is the exact exponential of the
// midpoint Hamiltonian (via its eigendecomposition), and the step size is
// adapted so the full-step vs two-half-steps defect stays below tol.
PropagationResult propagate(const EffectiveHamiltonian& ham,
                            const Eigen::VectorXcd& psi0, double t0, double t1,
                            double tol = 1e-10, Eigen::Index n_samples = 201);

// Multiplies every sample by exp(+i Phi(t)) with Phi the integral of u_s
// from the first sample; populations are reused untouched, the phase ledger
// accumulates Phi. Applying with -u_s inverts the transform.
PropagationResult gauge_transform(const PropagationResult& result,
                                  const std::function<double(double)>& u_s);

// Straight-line impact-parameter evolution: the environment coordinate is
// demoted to the clock Z(t) = Z_min + (P_Z/M) t across the grid window.
struct ImpactResult {
  double beam_momentum = 0.0;
  double speed = 0.0;
  double kinetic_to_spacing = 0.0;  // P^2/2M over the largest level gap
  bool adiabatic_warning = false;   // ratio below 10
  double matched_energy = 0.0;      // P^2/2M + entry channel energy
  Eigen::Index entry_channel = 0;
  Eigen::VectorXd channel_energies;
  PropagationResult evolution;
  Eigen::VectorXd final_probabilities;  // populations in the H_S eigenbasis
};

ImpactResult impact_parameter_run(const CompositeModel& model,
                                  double beam_momentum,
                                  const Eigen::VectorXcd& psi0,
                                  double tol = 1e-10,
                                  Eigen::Index n_samples = 201);

}  // namespace emt
