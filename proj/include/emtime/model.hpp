#pragma once

// Model definitions for a bipartite quantum system: a small discrete system
// coupled to a single heavy environment coordinate R on a uniform grid.
// Everything works in units with hbar = 1.
//
// Composite states live on the tensor product (environment grid) x (system
// levels) with the environment index outermost: component (i, s) of a
// composite vector sits at flat index i * n_sys + s.
//
// Grid convention: stored nodes run from r_min to r_max inclusive. The
// kinetic stencil assumes hard walls, i.e. the wavefunction vanishes at the
// virtual nodes r_min - h and r_max + h.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <string>
#include <vector>

#include "emtime/numeric.hpp"

namespace emt {

struct Grid {
  double r_min = 0.0;
  double r_max = 0.0;
  Eigen::Index n_points = 0;

  double spacing() const {
    return (r_max - r_min) / static_cast<double>(n_points - 1);
  }
  double point(Eigen::Index i) const { return r_min + spacing() * i; }
  Eigen::VectorXd points() const;
  std::vector<std::string> validate() const;
};

// The few-level system: a fixed Hermitian Hamiltonian with no coordinate of
// its own.
struct SystemSpec {
  Eigen::MatrixXcd hamiltonian;

  Eigen::Index dim() const { return hamiltonian.rows(); }
  static SystemSpec two_level(double splitting);
  static SystemSpec ladder(const Eigen::VectorXd& energies);
  std::vector<std::string> validate() const;
};

// Environment coordinate: mass plus a one dimensional potential.
struct EnvSpec {
  enum class Form { Free, Harmonic, GaussianBarrier, Tabulated };

  Form form = Form::Free;
  double mass = 1.0;
  double offset = 0.0;  // constant shift added to every form
  // Harmonic: offset + mass/2 * omega^2 (R - center)^2
  double omega = 1.0;
  double center = 0.0;
  // GaussianBarrier: offset + height * exp(-(R - center)^2 / (2 width^2))
  double height = 0.0;
  double width = 1.0;
  // Tabulated: values at table_r nodes, linearly interpolated in between
  Eigen::VectorXd table_r;
  Eigen::VectorXd table_v;

  double potential(double r) const;
  double potential_derivative(double r) const;
  Eigen::VectorXd potential_on(const Grid& grid) const;
  std::vector<std::string> validate() const;
};

// System-environment coupling H_ES(R): a fixed Hermitian matrix pattern
// scaled by a scalar envelope, or a tabulated Hermitian block per grid node.
struct CouplingSpec {
  enum class Form { None, LinearR, GaussianEnvelope, Tabulated };

  Form form = Form::None;
  double strength = 0.0;  // overall factor lambda
  // LinearR: envelope = R;  GaussianEnvelope: exp(-(R - center)^2/(2 width^2))
  double center = 0.0;
  double width = 1.0;
  Eigen::MatrixXcd pattern;  // Hermitian matrix multiplied by the envelope
  // Tabulated: one Hermitian block per table_r node, linear in between
  Eigen::VectorXd table_r;
  std::vector<Eigen::MatrixXcd> table;

  double envelope(double r) const;
  Eigen::MatrixXcd at(double r) const;
  bool is_zero() const;
  std::vector<std::string> validate(Eigen::Index n_sys) const;
};

struct CompositeModel {
  Grid grid;
  SystemSpec system;
  EnvSpec env;
  CouplingSpec coupling;
  // Hard cap on the composite dimension n_points * n_sys.
  Eigen::Index dimension_cap = 20000;

  Eigen::Index n_sys() const { return system.dim(); }
  Eigen::Index composite_dim() const { return grid.n_points * n_sys(); }
};

// Three point kinetic energy matrix -1/(2 M) d^2/dR^2 with hard walls.
Eigen::MatrixXd kinetic_operator(const Grid& grid, double mass);
Eigen::SparseMatrix<double> kinetic_operator_sparse(const Grid& grid,
                                                    double mass);

// Matrix-free application of the same stencil; identical arithmetic to the
// assembled operator, usable on grids too large to materialize.
Eigen::VectorXcd apply_kinetic(const Grid& grid, double mass,
                               const Eigen::VectorXcd& psi);

// Central difference momentum operator -i d/dR with hard walls.
Eigen::MatrixXcd momentum_operator(const Grid& grid);
Eigen::VectorXcd apply_momentum(const Grid& grid, const Eigen::VectorXcd& psi);

// Environment Hamiltonian K + diag(V_E) plus an optional extra potential
// sampled on the grid (used for single-surface reductions).
Eigen::MatrixXd env_hamiltonian(const Grid& grid, const EnvSpec& env);
Eigen::MatrixXd env_hamiltonian(const Grid& grid, const EnvSpec& env,
                                const Eigen::VectorXd& extra);

// Dense composite Hamiltonian
//   H = K (x) 1 + V_E(R) (x) 1 + 1 (x) H_S + H_ES(R).
// Throws std::length_error when the dimension exceeds model.dimension_cap.
Eigen::MatrixXcd assemble_composite(const CompositeModel& model);
Eigen::SparseMatrix<Complex> assemble_composite_sparse(
    const CompositeModel& model);

// Collects human readable descriptions of every violated invariant; an empty
// result means the model is well formed.
std::vector<std::string> validate_model(const CompositeModel& model);

// Throws ConfigError listing all violations unless validate_model is clean.
void require_valid(const CompositeModel& model);

// Largest coupling magnitude at the two edge nodes relative to the largest
// over the whole grid; scattering setups require this to be tiny.
double coupling_boundary_ratio(const CompositeModel& model);

}  // namespace emt
