#include "emtime/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "emtime/tdse.hpp"

namespace emt {

namespace {

// Accumulated grid moments of R, P and H_E, additive over channel slices so
// the same code serves pure states and partial traces. Variances come from
// centered residuals in a second pass: subtracting squared means would cancel
// catastrophically for a fast packet, where <H^2> dwarfs the energy spread.
struct EnvMoments {
  double r = 0.0, p = 0.0, h = 0.0;  // means, first pass
  double r2c = 0.0, h2c = 0.0;       // centered second moments, second pass
};

Eigen::VectorXcd env_apply(const Grid& grid, const EnvSpec& env,
                           const Eigen::VectorXd& potential,
                           const Eigen::VectorXcd& chi) {
  Eigen::VectorXcd h_chi = apply_kinetic(grid, env.mass, chi);
  h_chi.array() += potential.array().cast<Complex>() * chi.array();
  return h_chi;
}

void accumulate_means(const Grid& grid, const Eigen::VectorXd& nodes,
                      const Eigen::VectorXcd& chi,
                      const Eigen::VectorXcd& h_chi, EnvMoments* m) {
  const double h = grid.spacing();
  m->r += (h * chi.cwiseAbs2()).dot(nodes);
  m->p += h * chi.dot(apply_momentum(grid, chi)).real();
  m->h += h * chi.dot(h_chi).real();
}

void accumulate_centered(const Grid& grid, const Eigen::VectorXd& nodes,
                         const Eigen::VectorXcd& chi,
                         const Eigen::VectorXcd& h_chi,
                         const EnvMoments& means, EnvMoments* m) {
  const double h = grid.spacing();
  m->r2c += (h * chi.cwiseAbs2())
                .dot((nodes.array() - means.r).square().matrix());
  m->h2c += h * (h_chi - means.h * chi).squaredNorm();
}

EnvMoments env_moments(const Grid& grid, const EnvSpec& env,
                       const Eigen::VectorXd& nodes,
                       const Eigen::VectorXd& potential,
                       const std::vector<Eigen::VectorXcd>& parts) {
  std::vector<Eigen::VectorXcd> h_parts;
  h_parts.reserve(parts.size());
  for (const auto& part : parts)
    h_parts.push_back(env_apply(grid, env, potential, part));
  EnvMoments m;
  for (std::size_t i = 0; i < parts.size(); ++i)
    accumulate_means(grid, nodes, parts[i], h_parts[i], &m);
  const EnvMoments means = m;
  for (std::size_t i = 0; i < parts.size(); ++i)
    accumulate_centered(grid, nodes, parts[i], h_parts[i], means, &m);
  return m;
}

double spread(double second_moment, double mean) {
  return std::sqrt(std::max(0.0, second_moment - mean * mean));
}

}  // namespace

UncertaintyReport uncertainty_check(const Eigen::VectorXcd& state,
                                    const CompositeModel& model,
                                    EnvReduction reduction) {
  require_valid(model);
  const Eigen::Index np = model.grid.n_points;
  const Eigen::Index ns = model.n_sys();
  const bool composite = state.size() == np * ns && ns > 1;
  if (!composite && state.size() != np)
    throw std::invalid_argument(
        "uncertainty check: state length matches neither the grid nor the "
        "composite dimension");
  const double h = model.grid.spacing();
  if (std::abs(h * state.squaredNorm() - 1.0) > 1e-10)
    throw std::invalid_argument("uncertainty check: state is not normalized");

  const Eigen::VectorXd nodes = model.grid.points();
  const Eigen::VectorXd potential = model.env.potential_on(model.grid);

  // Channel slices of the composite vector; a bare environment state is a
  // single slice of weight one.
  std::vector<Eigen::VectorXcd> slices;
  if (composite) {
    for (Eigen::Index s = 0; s < ns; ++s) {
      Eigen::VectorXcd slice(np);
      for (Eigen::Index i = 0; i < np; ++i) slice(i) = state(i * ns + s);
      slices.push_back(std::move(slice));
    }
  } else {
    slices.push_back(state);
  }

  UncertaintyReport out;
  if (composite && reduction == EnvReduction::DominantChannel) {
    Eigen::Index best = 0;
    double best_weight = -1.0;
    for (Eigen::Index s = 0; s < ns; ++s) {
      const double w = slices[s].squaredNorm();
      if (w > best_weight) {
        best_weight = w;
        best = s;
      }
    }
    if (best_weight <= 0.0)
      throw NumericError("uncertainty check: empty dominant channel");
    slices = {Eigen::VectorXcd(slices[best] /
                               (std::sqrt(h) * slices[best].norm()))};
  }
  const EnvMoments m =
      env_moments(model.grid, model.env, nodes, potential, slices);

  out.dh_env = std::sqrt(std::max(0.0, m.h2c));
  out.dr = std::sqrt(std::max(0.0, m.r2c));
  out.mean_p_over_m = m.p / model.env.mass;

  if (composite) {
    // Reduced system state rho_S = h * sum_i psi(r_i) psi(r_i)^dagger; the
    // variance of H_S in rho_S is the spread of the system energy
    // distribution because H_S and H_S^2 share an eigenbasis.
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(ns, ns);
    for (Eigen::Index i = 0; i < np; ++i) {
      const auto seg = state.segment(i * ns, ns);
      rho.noalias() += h * seg * seg.adjoint();
    }
    const Eigen::MatrixXcd& hs = model.system.hamiltonian;
    const double mean = (rho * hs).trace().real();
    out.de_sys = spread((rho * hs * hs).trace().real(), mean);
  } else {
    // The composite energy is sharp, so the system spread mirrors the
    // environment spread.
    out.de_sys = out.dh_env;
  }

  const double rhs = 0.5 * std::abs(out.mean_p_over_m);
  out.slack = out.dh_env * out.dr - rhs;
  if (out.slack < -1e-9 * std::max(1.0, rhs))
    throw NumericError("uncertainty check: commutator bound violated (slack " +
                       format_full(out.slack) + ")");

  out.dt_defined = std::abs(out.mean_p_over_m) > 1e-12;
  if (out.dt_defined) {
    out.dt = out.dr / std::abs(out.mean_p_over_m);
    out.product = out.de_sys * out.dt;
  }
  return out;
}

ComparisonReport compare_exact_vs_emergent(
    const ChannelSolution& exact, const Eigen::VectorXd& emergent,
    double ladder_parameter, const std::vector<Eigen::Index>& channel_map,
    double asymmetry_threshold) {
  const Eigen::Index n_open =
      static_cast<Eigen::Index>(exact.open_channels.size());
  if (n_open == 0)
    throw std::invalid_argument("channel comparison: no open channels");
  if (!channel_map.empty() &&
      static_cast<Eigen::Index>(channel_map.size()) != emergent.size())
    throw std::invalid_argument(
        "channel comparison: channel map length does not match the emergent "
        "state");

  const Eigen::VectorXd p_exact = exact.transition_probabilities();
  for (Eigen::Index i = 0; i < p_exact.size(); ++i)
    if (p_exact(i) < -1e-9 || p_exact(i) > 1.0 + 1e-9)
      throw NumericError("channel comparison: exact probability out of range");
  for (Eigen::Index i = 0; i < emergent.size(); ++i)
    if (emergent(i) < -1e-9 || emergent(i) > 1.0 + 1e-9)
      throw NumericError(
          "channel comparison: emergent probability out of range");
  if (std::abs(p_exact.sum() - 1.0) > 1e-6)
    throw NumericError("channel comparison: exact probabilities sum to " +
                       format_full(p_exact.sum()));

  ComparisonReport out;
  out.ladder_parameter = ladder_parameter;
  out.asymmetry_ratio = exact.asymmetry_ratio();
  out.asymmetry_ok = out.asymmetry_ratio >= asymmetry_threshold;
  out.exact_probabilities.resize(n_open);
  out.emergent_probabilities.resize(n_open);

  double matched = 0.0;
  for (Eigen::Index i = 0; i < n_open; ++i) {
    const Eigen::Index channel = exact.open_channels[i];
    Eigen::Index slot = channel;
    if (!channel_map.empty()) {
      if (channel >= static_cast<Eigen::Index>(channel_map.size()))
        throw std::invalid_argument(
            "channel comparison: open channel outside the channel map");
      slot = channel_map[static_cast<std::size_t>(channel)];
    }
    if (slot < 0 || slot >= emergent.size())
      throw std::invalid_argument(
          "channel comparison: mapped slot outside the emergent state");
    out.channels.push_back(channel);
    out.exact_probabilities(i) = p_exact(i);
    out.emergent_probabilities(i) = emergent(slot);
    matched += emergent(slot);
  }
  out.emergent_unmatched = std::max(0.0, emergent.sum() - matched);

  const Eigen::VectorXd diff =
      (out.exact_probabilities - out.emergent_probabilities).cwiseAbs();
  out.max_abs_difference = diff.maxCoeff();
  out.mean_abs_difference = diff.mean();
  return out;
}

std::vector<DecouplingRow> decoupling_limit_study(
    const CompositeModel& base, const Eigen::VectorXd& lambdas,
    double beam_momentum, const Eigen::VectorXcd& psi0, double tol) {
  if (lambdas.size() < 2)
    throw std::invalid_argument(
        "decoupling study: need at least two coupling strengths");
  for (Eigen::Index i = 0; i < lambdas.size(); ++i) {
    if (lambdas(i) < 0.0)
      throw std::invalid_argument(
          "decoupling study: coupling strengths must be nonnegative");
    if (i > 0 && lambdas(i) >= lambdas(i - 1))
      throw std::invalid_argument(
          "decoupling study: coupling strengths must decrease strictly");
  }
  if (base.coupling.form == CouplingSpec::Form::None)
    throw std::invalid_argument(
        "decoupling study: base model has no coupling to scale");

  std::vector<DecouplingRow> rows;
  for (Eigen::Index i = 0; i < lambdas.size(); ++i) {
    DecouplingRow row;
    row.lambda = lambdas(i);
    if (row.lambda == 0.0) {
      row.separable = true;
      row.dt_inferred = std::numeric_limits<double>::infinity();
      rows.push_back(row);
      continue;
    }
    CompositeModel model = base;
    model.coupling.strength = row.lambda;
    const ImpactResult run =
        impact_parameter_run(model, beam_momentum, psi0, tol);
    const Eigen::VectorXd& p = run.final_probabilities;
    const Eigen::VectorXd& e = run.channel_energies;
    const double mean = p.dot(e);
    row.de_sys = spread(p.dot(e.cwiseAbs2()), mean);
    if (row.de_sys > 0.0) {
      row.dt_inferred = 0.5 / row.de_sys;
      row.product = 0.5;
    } else {
      row.dt_inferred = std::numeric_limits<double>::infinity();
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<ConvergenceRow> convergence_ladder(
    const Eigen::VectorXd& parameters, const Eigen::VectorXd& errors) {
  if (parameters.size() != errors.size())
    throw std::invalid_argument(
        "convergence ladder: parameter and error lists differ in length");
  if (parameters.size() < 3)
    throw std::invalid_argument("convergence ladder: need at least three "
                                "rungs");
  for (Eigen::Index i = 0; i < errors.size(); ++i)
    if (!(errors(i) >= 0.0))
      throw std::invalid_argument(
          "convergence ladder: errors must be nonnegative");

  std::vector<ConvergenceRow> rows;
  for (Eigen::Index i = 0; i < parameters.size(); ++i) {
    ConvergenceRow row;
    row.parameter = parameters(i);
    row.error = errors(i);
    if (i == 0)
      row.ratio = std::numeric_limits<double>::quiet_NaN();
    else if (errors(i) > 0.0)
      row.ratio = errors(i - 1) / errors(i);
    else
      row.ratio = std::numeric_limits<double>::infinity();
    rows.push_back(row);
  }
  return rows;
}

Eigen::VectorXcd random_packet(std::mt19937_64& rng, const Grid& grid) {
  const auto issues = grid.validate();
  if (!issues.empty())
    throw std::invalid_argument("random packet: " + issues.front());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double span = grid.r_max - grid.r_min;
  const double h = grid.spacing();

  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(grid.n_points);
  const int lumps = u(rng) < 0.4 ? 2 : 1;
  for (int l = 0; l < lumps; ++l) {
    const double center = grid.r_min + span * (0.25 + 0.5 * u(rng));
    const double width = span * (0.02 + 0.08 * u(rng));
    const double momentum = (2.0 * u(rng) - 1.0) * 0.3 / h;
    const double weight = 0.3 + 0.7 * u(rng);
    const double phase = 2.0 * M_PI * u(rng);
    for (Eigen::Index j = 0; j < grid.n_points; ++j) {
      const double r = grid.point(j);
      const double envelope =
          weight * std::exp(-(r - center) * (r - center) / (4.0 * width * width));
      psi(j) += envelope * std::exp(Complex(0.0, momentum * r + phase));
    }
  }
  const double norm = std::sqrt(h) * psi.norm();
  if (norm <= 0.0) throw NumericError("random packet: degenerate draw");
  return psi / norm;
}

std::string pass_fail_line(const std::string& name, bool ok) {
  return std::string(ok ? "[PASS] " : "[FAIL] ") + name;
}

}  // namespace emt
