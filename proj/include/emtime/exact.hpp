#pragma once

// Ground-truth solvers for the composite eigenvalue problem: bound spectra,
// single-surface environment eigenstates, and multichannel scattering. These
// solve the discretized stationary problem directly, with no dynamical or
// semiclassical approximations, so every emergent-time result can be judged
// against them.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <vector>

#include "emtime/adiabatic.hpp"
#include "emtime/model.hpp"

namespace emt {

enum class SolveMethod { Auto, Dense, Iterative };

struct BoundSolution {
  Eigen::VectorXd energies;  // ascending
  // Columns normalized so that h * sum_i |Psi_i|^2 = 1.
  Eigen::MatrixXcd states;
  Eigen::VectorXd residuals;  // ||(H - E) v|| / ||v|| per pair
  // Probability mass on the two outermost grid nodes, worst case over the
  // returned states; a direct probe of hard-wall box sensitivity.
  double boundary_tail = 0.0;
};

// Lowest k eigenpairs of the composite Hamiltonian. Dense diagonalization up
// to dimension 2000, shift-invert Lanczos on the sparse matrix above that;
// the method can be forced for cross-checks. Throws NumericError when the
// box does not confine the requested range or the residual contract (1e-8)
// cannot be met.
BoundSolution solve_bound(const CompositeModel& model, Eigen::Index k_lowest,
                          SolveMethod method = SolveMethod::Auto);

struct EnvEigenstate {
  Eigen::VectorXd chi;  // real bound amplitude, integral of |chi|^2 equals 1
  double energy = 0.0;
  Eigen::Index surface = 0;
  Eigen::Index node_count = 0;  // sign changes, the 1D quantum number
  double residual = 0.0;
  double boundary_tail = 0.0;
};

// Lowest k eigenstates of the environment Hamiltonian on one adiabatic
// surface: H_E + E_m(R). Refuses surfaces that touch a flagged crossing.
std::vector<EnvEigenstate> solve_env_single_channel(
    const CompositeModel& model, const AdiabaticBasis& basis,
    Eigen::Index surface, Eigen::Index k_lowest);

// Same eigenproblem with an arbitrary tabulated effective potential added to
// the environment terms (pass a zero vector for the bare environment).
std::vector<EnvEigenstate> solve_env_states(const Grid& grid,
                                            const EnvSpec& env,
                                            const Eigen::VectorXd& u_extra,
                                            Eigen::Index k_lowest);

// Eigenstates nearest a target energy, via shift-invert at that energy.
std::vector<EnvEigenstate> solve_env_near(const Grid& grid, const EnvSpec& env,
                                          const Eigen::VectorXd& u_extra,
                                          double target,
                                          Eigen::Index count);

// Stationary scattering state of the coupled-channel problem at total energy
// E. Channels are the eigenvectors of the bare system Hamiltonian; all
// system-environment coupling enters through the potential matrix. The
// asymptotic region must be flat: coupling decayed below 1e-10 of its peak
// at both edges and equal environment potential at both edges.
//
// The discrete problem is solved as one banded linear system with radiation
// boundary rows built from the lattice dispersion cos(kappa h) =
// 1 - h^2 k^2 / 2, so unitarity holds to solver precision at any energy.
struct ChannelSolution {
  double energy = 0.0;
  Eigen::Index incoming = 0;        // channel index of the driven solve
  Eigen::VectorXd thresholds;       // asymptotic channel energies
  Eigen::VectorXd k_open;           // continuum momenta of open channels
  Eigen::VectorXd kappa_open;       // lattice momenta used for matching
  std::vector<Eigen::Index> open_channels;

  // Flux-normalized reflection/transmission blocks over open channels, for
  // incidence from the left and from the right.
  Eigen::MatrixXcd r_left, t_left, r_right, t_right;

  // Full two-sided scattering matrix [[r_left, t_right], [t_left, r_right]].
  Eigen::MatrixXcd full_s() const;
  double unitarity_defect() const;
  // |t|^2 + |r|^2 summed per outgoing channel for the stored incidence.
  Eigen::VectorXd transition_probabilities() const;

  // Total wave per channel for left incidence in channel `incoming`.
  Eigen::MatrixXcd channel_waves;  // n_points x n_sys

  // Asymmetry diagnostics of the incoming-channel wave: environment energy
  // <chi|H_E|chi> against the averaged system potential <chi|E_in(R)|chi>.
  double e_env = 0.0;
  double e_sys = 0.0;
  double asymmetry_ratio() const;
};

ChannelSolution solve_close_coupling(const CompositeModel& model,
                                     const AdiabaticBasis& basis,
                                     double energy, Eigen::Index incoming);

}  // namespace emt
