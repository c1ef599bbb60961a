#pragma once

// Diagnostics on top of the solvers: uncertainty bookkeeping for the
// environment clock, exact-versus-emergent channel comparisons, the
// weak-coupling decoupling study, and generic convergence ladders.
//
// Conventions: hbar = 1; grid wavefunctions are normalized so that
// h * sum_i |psi_i|^2 = 1; composite vectors use the (i, s) -> i * n_sys + s
// layout from model.hpp.

#include <Eigen/Dense>

#include <random>
#include <string>
#include <vector>

#include "emtime/exact.hpp"
#include "emtime/model.hpp"

namespace emt {

// How to reduce a composite state to an environment state: trace out the
// system, or project onto the most populated system channel and renormalize.
// Both are physically defensible conditional states, so callers that care
// report the two side by side.
enum class EnvReduction { PartialTrace, DominantChannel };

// Spreads of the environment clock and the derived time resolution.
// dt = dr / |<P>/M| is the only time definition used; when <P> vanishes the
// packet is a standing wave and dt is left undefined (dt_defined = false).
struct UncertaintyReport {
  double dh_env = 0.0;         // spread of the environment energy
  double dr = 0.0;             // spread of the environment coordinate
  double mean_p_over_m = 0.0;  // signed classical velocity <P>/M
  bool dt_defined = false;
  double dt = 0.0;       // dr / |<P>/M| when defined
  double de_sys = 0.0;   // system energy spread: equals dh_env for a bare
                         // environment state (total energy is sharp), taken
                         // from the reduced system state for composite input
  double bound = 0.5;    // hbar / 2
  double slack = 0.0;    // dh_env * dr - |<P>| / (2 M)
  double product = 0.0;  // de_sys * dt when dt is defined
};

// Evaluates the spreads on the grid. Accepts a bare environment state
// (length n_points) or a composite state (length n_points * n_sys);
// composite input is reduced per `reduction` for the environment-side
// quantities while de_sys always comes from the reduced system state.
// The commutator identity [H, R] = -i P / M holds exactly for the grid
// stencils, so dh_env * dr >= |<P>| / (2 M) is a theorem here; a violation
// beyond roundoff (1e-9 relative slack) throws NumericError.
UncertaintyReport uncertainty_check(
    const Eigen::VectorXcd& state, const CompositeModel& model,
    EnvReduction reduction = EnvReduction::PartialTrace);

// Pairing of stationary scattering probabilities with the final populations
// of a driven beam run, one row per open channel.
struct ComparisonReport {
  std::vector<Eigen::Index> channels;      // system channel index per row
  Eigen::VectorXd exact_probabilities;     // |S|^2 for the stored incidence
  Eigen::VectorXd emergent_probabilities;  // matched final populations
  double max_abs_difference = 0.0;
  double mean_abs_difference = 0.0;
  double emergent_unmatched = 0.0;  // emergent weight outside open channels
  double asymmetry_ratio = 0.0;     // e_env / |e_sys| of the exact solve
  bool asymmetry_ok = true;         // ratio at or above the threshold
  double ladder_parameter = 0.0;    // rung label (mass or beam momentum)
};

// Pairs exact.transition_probabilities() with the emergent channel
// probabilities. An empty channel_map means identity; otherwise
// channel_map[c] names the emergent slot for system channel c and must have
// one entry per emergent slot. Throws std::invalid_argument on any mapping
// mismatch and NumericError when probabilities leave [0, 1] or the exact
// side fails to sum to 1 within 1e-6. A ratio below asymmetry_threshold
// clears asymmetry_ok: the heavy-environment picture is then suspect.
ComparisonReport compare_exact_vs_emergent(
    const ChannelSolution& exact, const Eigen::VectorXd& emergent,
    double ladder_parameter, const std::vector<Eigen::Index>& channel_map = {},
    double asymmetry_threshold = 100.0);

// One rung of the weak-coupling study: the system energy spread of the
// final beam state shrinks with the coupling strength while the inferred
// time resolution dt = (hbar/2) / de_sys grows. Their product is hbar/2 by
// construction, so it is reported as definitional, not as an independent
// check. lambda = 0 is the separable sentinel: the composite factorizes,
// the environment no longer provides a clock, and dt is infinite.
struct DecouplingRow {
  double lambda = 0.0;
  bool separable = false;
  double de_sys = 0.0;
  double dt_inferred = 0.0;  // infinity on the sentinel row
  double product = 0.0;      // hbar/2 on coupled rows, 0 on the sentinel
};

// Runs the matched-energy beam at every strength in `lambdas` (strictly
// decreasing, nonnegative, at least two entries; a trailing 0 produces the
// sentinel row). The base model supplies everything but coupling.strength.
std::vector<DecouplingRow> decoupling_limit_study(
    const CompositeModel& base, const Eigen::VectorXd& lambdas,
    double beam_momentum, const Eigen::VectorXcd& psi0, double tol = 1e-10);

// Refinement table: error ratios between consecutive rungs of a parameter
// ladder. ratio(i) = error(i-1) / error(i); the first row carries NaN.
struct ConvergenceRow {
  double parameter = 0.0;
  double error = 0.0;
  double ratio = 0.0;
};

// Tabulates a ladder of at least three rungs; errors must be nonnegative
// and a zero error yields an infinite ratio.
std::vector<ConvergenceRow> convergence_ladder(
    const Eigen::VectorXd& parameters, const Eigen::VectorXd& errors);

// Normalized random wave packet on the grid: one or two Gaussian lumps with
// random centers, widths, momenta, and phases. Deterministic for a fixed
// generator state.
Eigen::VectorXcd random_packet(std::mt19937_64& rng, const Grid& grid);

// "[PASS] name" / "[FAIL] name" line for plain-text summaries.
std::string pass_fail_line(const std::string& name, bool ok);

}  // namespace emt
