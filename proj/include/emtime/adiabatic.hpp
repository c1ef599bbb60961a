#pragma once

// Parametric eigenbasis of the system block: at each environment coordinate
// R the matrix H_S + H_ES(R) is diagonalized, giving potential surfaces
// E_n(R) and states psi_n(R). First and second derivative couplings between
// those states drive every correction to the single-surface picture.

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "emtime/model.hpp"

namespace emt {

struct AdiabaticBasis {
  Eigen::VectorXd r;                     // grid nodes
  std::vector<Eigen::MatrixXcd> states;  // per node, columns are psi_n
  Eigen::MatrixXd surfaces;              // n_points x n_sys, ascending per row
  std::vector<Eigen::Index> crossings;   // nodes with near-degenerate levels

  Eigen::Index n_points() const { return r.size(); }
  Eigen::Index n_sys() const { return surfaces.cols(); }
};

// Derivative couplings, defined at interior nodes only (centered stencils).
//   f[i](m, n)  ~ <psi_m | d/dR psi_n>   at r(i)
//   g2(i, m)    ~ <psi_m | d^2/dR^2 psi_m>
// The first-derivative blocks are exactly anti-Hermitian by construction.
struct CouplingTensor {
  Eigen::VectorXd r;  // interior nodes
  std::vector<Eigen::MatrixXcd> f;
  Eigen::MatrixXd g2;
  std::vector<std::uint8_t> unreliable;  // within 3 nodes of a crossing
};

// Diagonalizes the system block at every node, sorts surfaces ascending and
// fixes phases by overlap continuation from r_min (first significant
// component made real positive there, then each node rotated so its overlap
// with the previous node is real nonnegative). Near-degeneracies within an
// absolute gap of 1e-10 are flagged, not rejected.
AdiabaticBasis adiabatic_states(const CompositeModel& model);

CouplingTensor nonadiabatic_couplings(const AdiabaticBasis& basis,
                                      const Grid& grid);

// Population-weighted surface average U_S(R) = sum_m |a_m|^2 E_m(R). The
// weights must carry unit norm. The overload with a coupling tensor adds the
// diagonal second-derivative term -(1/2M) sum_m |a_m|^2 g2_m(R), which the
// lowest-order reduction drops; endpoint nodes reuse the nearest interior
// stencil value.
Eigen::VectorXd averaged_potential(const AdiabaticBasis& basis,
                                   const Eigen::VectorXcd& weights);
Eigen::VectorXd averaged_potential(const AdiabaticBasis& basis,
                                   const Eigen::VectorXcd& weights,
                                   const CouplingTensor& tensor, double mass);

}  // namespace emt
