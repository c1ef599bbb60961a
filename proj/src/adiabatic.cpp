#include "emtime/adiabatic.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace emt {

namespace {

// Rotates a column so its first component above threshold is real positive.
void fix_seed_phase(Eigen::Ref<Eigen::VectorXcd> column) {
  for (Eigen::Index k = 0; k < column.size(); ++k) {
    const double mag = std::abs(column(k));
    if (mag > 1e-12) {
      column *= std::conj(column(k)) / mag;
      return;
    }
  }
}

}  // namespace

AdiabaticBasis adiabatic_states(const CompositeModel& model) {
  require_valid(model);
  const Eigen::Index np = model.grid.n_points;
  const Eigen::Index ns = model.n_sys();

  AdiabaticBasis basis;
  basis.r = model.grid.points();
  basis.states.resize(np);
  basis.surfaces.resize(np, ns);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver;
  for (Eigen::Index i = 0; i < np; ++i) {
    Eigen::MatrixXcd block = model.system.hamiltonian;
    if (!model.coupling.is_zero())
      block += model.coupling.at(model.grid.point(i));
    solver.compute(block);
    basis.surfaces.row(i) = solver.eigenvalues().transpose();
    basis.states[i] = solver.eigenvectors();
    for (Eigen::Index m = 0; m + 1 < ns; ++m)
      if (basis.surfaces(i, m + 1) - basis.surfaces(i, m) < 1e-10) {
        basis.crossings.push_back(i);
        break;
      }
  }

  // Phase continuation sweep from r_min. A vanishing overlap (possible right
  // at a flagged crossing) leaves the phase untouched.
  for (Eigen::Index m = 0; m < ns; ++m)
    fix_seed_phase(basis.states[0].col(m));
  for (Eigen::Index i = 1; i < np; ++i)
    for (Eigen::Index m = 0; m < ns; ++m) {
      const Complex overlap =
          basis.states[i - 1].col(m).dot(basis.states[i].col(m));
      const double mag = std::abs(overlap);
      if (mag > 1e-12) basis.states[i].col(m) *= std::conj(overlap) / mag;
    }
  return basis;
}

CouplingTensor nonadiabatic_couplings(const AdiabaticBasis& basis,
                                      const Grid& grid) {
  const Eigen::Index np = basis.n_points();
  const Eigen::Index ns = basis.n_sys();
  if (np != grid.n_points)
    throw std::invalid_argument("nonadiabatic_couplings: grid mismatch");
  if (np < 3)
    throw std::invalid_argument("nonadiabatic_couplings: need 3 nodes");
  const double h = grid.spacing();

  CouplingTensor tensor;
  tensor.r = basis.r.segment(1, np - 2);
  tensor.f.resize(np - 2);
  tensor.g2.resize(np - 2, ns);
  tensor.unreliable.assign(np - 2, 0);

  for (Eigen::Index i = 1; i + 1 < np; ++i) {
    // Antisymmetrized centered difference: O(h^2) accurate for
    // <psi_m | d/dR psi_n> and exactly anti-Hermitian, so the antisymmetry
    // identity for real bases holds to roundoff regardless of h.
    const Eigen::MatrixXcd fwd = basis.states[i - 1].adjoint() * basis.states[i + 1];
    tensor.f[i - 1] = (fwd - fwd.adjoint()) / (4.0 * h);
    for (Eigen::Index m = 0; m < ns; ++m) {
      const Complex lap = basis.states[i].col(m).dot(
          basis.states[i + 1].col(m) + basis.states[i - 1].col(m) -
          2.0 * basis.states[i].col(m));
      tensor.g2(i - 1, m) = lap.real() / (h * h);
    }
  }

  for (const Eigen::Index c : basis.crossings)
    for (Eigen::Index i = 1; i + 1 < np; ++i)
      if (std::abs(i - c) <= 3) tensor.unreliable[i - 1] = 1;
  return tensor;
}

static void check_weights(const Eigen::VectorXcd& weights, Eigen::Index ns) {
  if (weights.size() != ns)
    throw std::invalid_argument("averaged_potential: weight count mismatch");
  if (std::abs(weights.squaredNorm() - 1.0) > 1e-12)
    throw std::invalid_argument(
        "averaged_potential: weights not normalized to unit probability");
}

Eigen::VectorXd averaged_potential(const AdiabaticBasis& basis,
                                   const Eigen::VectorXcd& weights) {
  check_weights(weights, basis.n_sys());
  return basis.surfaces * weights.cwiseAbs2();
}

Eigen::VectorXd averaged_potential(const AdiabaticBasis& basis,
                                   const Eigen::VectorXcd& weights,
                                   const CouplingTensor& tensor, double mass) {
  Eigen::VectorXd u = averaged_potential(basis, weights);
  if (tensor.g2.rows() != basis.n_points() - 2)
    throw std::invalid_argument("averaged_potential: tensor size mismatch");
  if (!(mass > 0.0))
    throw std::invalid_argument("averaged_potential: mass must be positive");
  const Eigen::VectorXd diag = tensor.g2 * weights.cwiseAbs2();
  for (Eigen::Index i = 1; i + 1 < basis.n_points(); ++i)
    u(i) -= 0.5 / mass * diag(i - 1);
  u(0) -= 0.5 / mass * diag(0);
  u(basis.n_points() - 1) -= 0.5 / mass * diag(diag.size() - 1);
  return u;
}

}  // namespace emt
