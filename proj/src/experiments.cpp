#include "emtime/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <utility>

#include <json.hpp>

#include "emtime/adiabatic.hpp"
#include "emtime/analysis.hpp"
#include "emtime/csv.hpp"
#include "emtime/exact.hpp"
#include "emtime/model.hpp"
#include "emtime/numeric.hpp"
#include "emtime/relativistic.hpp"
#include "emtime/semiclassical.hpp"
#include "emtime/tdse.hpp"

namespace emt {

namespace {

using OrderedJson = nlohmann::ordered_json;

std::string hex64(std::uint64_t value) {
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx",
                static_cast<unsigned long long>(value));
  return buffer;
}

// Collects files and summary lines; run_experiment writes them in one pass.
struct Outputs {
  std::vector<std::pair<std::string, std::string>> files;
  std::vector<std::string> summary;

  void add_table(const std::string& name, const CsvTable& table) {
    files.emplace_back(name, table.str());
  }
  void line(std::string text) { summary.push_back(std::move(text)); }
  void check(const std::string& name, bool ok) {
    summary.push_back(pass_fail_line(name, ok));
  }
};

Eigen::VectorXcd unit_channel(Eigen::Index dim, Eigen::Index channel) {
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(dim);
  psi(channel) = 1.0;
  return psi;
}

// Gaussian wave packet normalized so h * sum |psi|^2 = 1.
Eigen::VectorXcd grid_gaussian(const Grid& grid, double center, double width,
                               double momentum) {
  Eigen::VectorXcd psi(grid.n_points);
  for (Eigen::Index j = 0; j < grid.n_points; ++j) {
    const double r = grid.point(j);
    psi(j) = std::exp(-(r - center) * (r - center) / (4.0 * width * width)) *
             std::exp(Complex(0.0, momentum * r));
  }
  psi /= std::sqrt(grid.spacing()) * psi.norm();
  return psi;
}

ClassicalTrajectory bare_trajectory(const EnvSpec& env, double r_start,
                                    double momentum, double duration,
                                    Eigen::Index samples) {
  const EffectivePotential pot(env);
  const double energy =
      momentum * momentum / (2.0 * env.mass) + pot.value(r_start);
  const int direction = momentum >= 0.0 ? 1 : -1;
  const Eigen::VectorXd t_grid =
      Eigen::VectorXd::LinSpaced(samples, 0.0, duration);
  return classical_trajectory(pot, energy, r_start, direction, t_grid);
}

// Relative L2 residual between two real shapes after fitting the overall
// scale: sin of their angle under the given nonnegative weights.
double shape_error(const Eigen::VectorXd& exact, const Eigen::VectorXd& trial,
                   const Eigen::VectorXd& weight) {
  double ee = 0.0, tt = 0.0, et = 0.0;
  for (Eigen::Index i = 0; i < exact.size(); ++i) {
    ee += weight(i) * exact(i) * exact(i);
    tt += weight(i) * trial(i) * trial(i);
    et += weight(i) * exact(i) * trial(i);
  }
  if (ee <= 0.0 || tt <= 0.0)
    throw NumericError("shape comparison: empty overlap window");
  const double cos2 = (et * et) / (ee * tt);
  return std::sqrt(std::max(0.0, 1.0 - cos2));
}

void run_validate(const RunConfig& config, Outputs* out) {
  if (config.has_model) {
    const CompositeModel& m = config.model;
    out->line("grid: [" + format_full(m.grid.r_min) + ", " +
              format_full(m.grid.r_max) + "] with " +
              std::to_string(m.grid.n_points) + " nodes, spacing " +
              format_full(m.grid.spacing()));
    out->line("system levels: " + std::to_string(m.n_sys()));
    out->line("composite dimension: " + std::to_string(m.composite_dim()));
    out->line("coupling boundary ratio: " +
              format_full(coupling_boundary_ratio(m)));
    out->check("model valid", true);
  }
  if (config.has_dirac) {
    const DiracSpec& d = config.dirac;
    out->line("dirac grid: [" + format_full(d.x_min) + ", " +
              format_full(d.x_max) + "] with " + std::to_string(d.n_points) +
              " nodes");
    out->line("compton scale 1/(4 m c): " +
              format_full(1.0 / (4.0 * d.mass * d.light_speed)));
    out->check("dirac spec valid", true);
  }
}

void run_adiabatic(const RunConfig& config, Outputs* out) {
  const CompositeModel& model = config.model;
  const AdiabaticBasis basis = adiabatic_states(model);
  const CouplingTensor tensor = nonadiabatic_couplings(basis, model.grid);
  const Eigen::Index ns = model.n_sys();

  std::vector<std::string> surface_cols{"r"};
  for (Eigen::Index n = 0; n < ns; ++n)
    surface_cols.push_back("e_" + std::to_string(n));
  CsvTable surfaces(surface_cols);
  for (Eigen::Index i = 0; i < basis.n_points(); ++i) {
    std::vector<double> row{basis.r(i)};
    for (Eigen::Index n = 0; n < ns; ++n) row.push_back(basis.surfaces(i, n));
    surfaces.add_row(row);
  }
  out->add_table("surfaces.csv", surfaces);

  std::vector<std::string> coupling_cols{"r"};
  for (Eigen::Index m = 0; m < ns; ++m)
    for (Eigen::Index n = m + 1; n < ns; ++n) {
      coupling_cols.push_back("f_" + std::to_string(m) + std::to_string(n) +
                              "_re");
      coupling_cols.push_back("f_" + std::to_string(m) + std::to_string(n) +
                              "_im");
    }
  for (Eigen::Index m = 0; m < ns; ++m)
    coupling_cols.push_back("g2_" + std::to_string(m));
  CsvTable couplings(coupling_cols);
  double antisymmetry = 0.0;
  for (std::size_t i = 0; i < tensor.f.size(); ++i) {
    std::vector<double> row{tensor.r(static_cast<Eigen::Index>(i))};
    for (Eigen::Index m = 0; m < ns; ++m)
      for (Eigen::Index n = m + 1; n < ns; ++n) {
        row.push_back(tensor.f[i](m, n).real());
        row.push_back(tensor.f[i](m, n).imag());
      }
    for (Eigen::Index m = 0; m < ns; ++m)
      row.push_back(tensor.g2(static_cast<Eigen::Index>(i), m));
    couplings.add_row(row);
    antisymmetry = std::max(
        antisymmetry, (tensor.f[i] + tensor.f[i].adjoint()).cwiseAbs().maxCoeff());
  }
  out->add_table("couplings.csv", couplings);

  out->line("crossing flags: " + std::to_string(basis.crossings.size()));
  out->line("max |F + F^dagger|: " + format_full(antisymmetry));
  out->check("derivative coupling antisymmetric (1e-8)", antisymmetry < 1e-8);
}

void run_solve_bound(const RunConfig& config, Outputs* out) {
  SolveMethod method = SolveMethod::Auto;
  if (config.bound_method == "dense") method = SolveMethod::Dense;
  if (config.bound_method == "iterative") method = SolveMethod::Iterative;
  const BoundSolution solution =
      solve_bound(config.model, config.bound_count, method);

  CsvTable table({"index", "energy", "residual"});
  for (Eigen::Index i = 0; i < solution.energies.size(); ++i)
    table.add_row({static_cast<double>(i), solution.energies(i),
                   solution.residuals(i)});
  out->add_table("energies.csv", table);

  out->line("boundary tail: " + format_full(solution.boundary_tail));
  out->line("max residual: " + format_full(solution.residuals.maxCoeff()));
  out->check("eigenpair residuals within contract (1e-8)",
             solution.residuals.maxCoeff() < 1e-8);
}

void run_solve_scatter(const RunConfig& config, Outputs* out) {
  const AdiabaticBasis basis = adiabatic_states(config.model);
  const ChannelSolution solution =
      solve_close_coupling(config.model, basis, config.scatter_energy,
                           config.scatter_incoming);
  const Eigen::VectorXd probabilities = solution.transition_probabilities();

  CsvTable table({"channel", "threshold", "k", "kappa", "probability"});
  for (std::size_t i = 0; i < solution.open_channels.size(); ++i) {
    const Eigen::Index c = solution.open_channels[i];
    table.add_row({static_cast<double>(c), solution.thresholds(c),
                   solution.k_open(static_cast<Eigen::Index>(i)),
                   solution.kappa_open(static_cast<Eigen::Index>(i)),
                   probabilities(static_cast<Eigen::Index>(i))});
  }
  out->add_table("channels.csv", table);

  out->line("open channels: " + std::to_string(solution.open_channels.size()));
  out->line("unitarity defect: " + format_full(solution.unitarity_defect()));
  out->line("environment to system energy ratio: " +
            format_full(solution.asymmetry_ratio()));
  out->check("s-matrix unitary (1e-8)", solution.unitarity_defect() < 1e-8);
}

}  // namespace

// Fixed-potential mass ladder: rung masses replace env.mass while the
// potential function stays frozen (for a harmonic environment the frequency
// is rescaled as omega ~ 1/sqrt(M)). The reference eigenstate is Richardson
// extrapolated from a coarse/fine grid pair so lattice dispersion cannot
// mask the semiclassical error, and the comparison weight tapers off before
// the turning strips where the primitive wave diverges.
std::vector<WkbRung> wkb_mass_ladder(const CompositeModel& model,
                                     Eigen::Index surface, Eigen::Index state,
                                     const Eigen::VectorXd& masses) {
  if (surface < 0 || surface >= model.n_sys())
    throw ConfigError("wkb: surface out of range");
  if (state < 0) throw ConfigError("wkb: state index must be nonnegative");
  const double m0 = masses(0);
  const double base_mass = model.env.mass;
  const double base_omega = model.env.omega;

  const auto env_for = [&](double mass) {
    EnvSpec env = model.env;
    env.mass = mass;
    if (env.form == EnvSpec::Form::Harmonic)
      env.omega = base_omega * std::sqrt(base_mass / mass);
    return env;
  };
  const auto surface_on = [&](const Grid& grid) {
    CompositeModel probe = model;
    probe.grid = grid;
    probe.dimension_cap =
        std::max(probe.dimension_cap, grid.n_points * model.n_sys());
    const AdiabaticBasis basis = adiabatic_states(probe);
    return Eigen::VectorXd(basis.surfaces.col(surface));
  };

  // The base rung pins the target energy; heavier rungs track it by
  // shift-invert, so the classical orbit stays fixed while the local
  // wavelength shrinks.
  const auto base_states = solve_env_states(model.grid, env_for(m0),
                                            surface_on(model.grid), state + 1);
  if (static_cast<Eigen::Index>(base_states.size()) <= state)
    throw NumericError("wkb: the well holds fewer bound states than requested");
  const double target = base_states[static_cast<std::size_t>(state)].energy;

  std::vector<WkbRung> rungs;
  for (Eigen::Index k = 0; k < masses.size(); ++k) {
    const double mass = masses(k);
    const auto factor =
        static_cast<Eigen::Index>(std::ceil(std::sqrt(mass / m0)));
    Grid grid = model.grid;
    grid.n_points = (model.grid.n_points - 1) * factor + 1;
    Grid fine = grid;
    fine.n_points = 2 * grid.n_points - 1;

    const EnvSpec env = env_for(mass);
    const Eigen::VectorXd u_coarse = surface_on(grid);
    const Eigen::VectorXd u_fine = surface_on(fine);

    const auto coarse = solve_env_near(grid, env, u_coarse, target, 1);
    if (coarse.empty()) throw NumericError("wkb: no state near the target");
    const auto fine_states =
        solve_env_near(fine, env, u_fine, coarse.front().energy, 1);
    if (fine_states.empty())
      throw NumericError("wkb: no fine-grid state near the target");

    Eigen::VectorXd chi_fine(grid.n_points);
    for (Eigen::Index j = 0; j < grid.n_points; ++j)
      chi_fine(j) = fine_states.front().chi(2 * j);
    if (chi_fine.dot(coarse.front().chi) < 0.0) chi_fine = -chi_fine;
    const Eigen::VectorXd chi = (4.0 * chi_fine - coarse.front().chi) / 3.0;
    const double energy =
        (4.0 * fine_states.front().energy - coarse.front().energy) / 3.0;

    const EffectivePotential pot(env, grid, u_coarse);
    std::vector<std::uint8_t> mask;
    const Eigen::VectorXd wkb = wkb_standing_wave(pot, grid, energy, &mask);

    Eigen::Index lo = -1, hi = -1;
    for (Eigen::Index i = 0; i < grid.n_points; ++i)
      if (mask[static_cast<std::size_t>(i)]) {
        if (lo < 0) lo = i;
        hi = i;
      }
    if (lo < 0 || hi <= lo)
      throw NumericError("wkb: no classically allowed region");
    const double center = 0.5 * (grid.point(lo) + grid.point(hi));
    const double radius =
        std::max(0.5 * (grid.point(hi) - grid.point(lo)), grid.spacing());
    Eigen::VectorXd taper = Eigen::VectorXd::Zero(grid.n_points);
    for (Eigen::Index i = lo; i <= hi; ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      const double x = std::abs(grid.point(i) - center) / radius;
      if (x <= 0.5) {
        taper(i) = 1.0;
      } else if (x < 0.8) {
        const double c = std::cos(0.5 * M_PI * (x - 0.5) / 0.3);
        taper(i) = c * c;
      }
    }
    rungs.push_back({mass, energy, shape_error(chi, wkb, taper)});
  }
  return rungs;
}

namespace {

void run_wkb(const RunConfig& config, Outputs* out) {
  const std::vector<WkbRung> rungs = wkb_mass_ladder(
      config.model, config.wkb_surface, config.wkb_state, config.wkb_masses);

  Eigen::VectorXd errors(static_cast<Eigen::Index>(rungs.size()));
  for (std::size_t i = 0; i < rungs.size(); ++i)
    errors(static_cast<Eigen::Index>(i)) = rungs[i].error;
  const std::vector<ConvergenceRow> ladder =
      convergence_ladder(config.wkb_masses, errors);

  CsvTable table({"mass", "energy", "error", "ratio"});
  for (std::size_t i = 0; i < rungs.size(); ++i)
    table.add_row(
        {rungs[i].mass, rungs[i].energy, rungs[i].error, ladder[i].ratio});
  out->add_table("wkb_ladder.csv", table);

  bool decreasing = true;
  for (std::size_t i = 1; i < rungs.size(); ++i)
    decreasing = decreasing && rungs[i].error < rungs[i - 1].error;
  out->line("tapered shape errors from " + format_full(rungs.front().error) +
            " down to " + format_full(rungs.back().error));
  out->check("semiclassical error decreases with mass", decreasing);
}

void run_trajectory(const RunConfig& config, Outputs* out) {
  const ClassicalTrajectory traj =
      bare_trajectory(config.model.env, config.traj_r_start,
                      config.traj_momentum, config.traj_duration,
                      config.traj_samples);

  CsvTable table({"t", "r", "p"});
  for (Eigen::Index i = 0; i < traj.t.size(); ++i)
    table.add_row({traj.t(i), traj.r(i), traj.p(i)});
  out->add_table("trajectory.csv", table);

  out->line("energy: " + format_full(traj.energy));
  out->line("max energy residual: " + format_full(traj.energy_residual_max));
  out->line(std::string("turning point encountered: ") +
            (traj.turning_encountered ? "yes" : "no"));
  out->check("energy conserved along the flow (1e-8)",
             traj.energy_residual_max < 1e-8);
}

void run_propagate(const RunConfig& config, Outputs* out) {
  const Eigen::Index traj_samples =
      std::max<Eigen::Index>(801, 4 * config.traj_samples);
  const ClassicalTrajectory traj =
      bare_trajectory(config.model.env, config.traj_r_start,
                      config.traj_momentum, config.traj_duration,
                      traj_samples);
  const EffectiveHamiltonian ham = effective_hamiltonian(config.model, traj);
  const Eigen::VectorXcd psi0 =
      unit_channel(config.model.n_sys(), config.initial_channel);
  const PropagationResult result =
      propagate(ham, psi0, 0.0, config.traj_duration, config.tol,
                config.traj_samples);

  std::vector<std::string> cols{"t"};
  for (Eigen::Index n = 0; n < config.model.n_sys(); ++n)
    cols.push_back("pop_" + std::to_string(n));
  cols.push_back("gauge_phase");
  CsvTable table(cols);
  for (Eigen::Index k = 0; k < result.t.size(); ++k) {
    std::vector<double> row{result.t(k)};
    for (Eigen::Index n = 0; n < config.model.n_sys(); ++n)
      row.push_back(result.populations(n, k));
    row.push_back(result.gauge_phase(k));
    table.add_row(row);
  }
  out->add_table("populations.csv", table);

  out->line("steps taken: " + std::to_string(result.steps_taken));
  out->line("norm defect: " + format_full(result.norm_defect));
  out->check("norm conserved (1e-10)", result.norm_defect < 1e-10);
}

void run_impact(const RunConfig& config, Outputs* out) {
  const ImpactResult run = impact_parameter_run(
      config.model, config.beam_momentum,
      unit_channel(config.model.n_sys(), config.beam_channel), config.tol);

  std::vector<std::string> cols{"t"};
  for (Eigen::Index n = 0; n < config.model.n_sys(); ++n)
    cols.push_back("pop_" + std::to_string(n));
  cols.push_back("gauge_phase");
  CsvTable evolution(cols);
  for (Eigen::Index k = 0; k < run.evolution.t.size(); ++k) {
    std::vector<double> row{run.evolution.t(k)};
    for (Eigen::Index n = 0; n < config.model.n_sys(); ++n)
      row.push_back(run.evolution.populations(n, k));
    row.push_back(run.evolution.gauge_phase(k));
    evolution.add_row(row);
  }
  out->add_table("evolution.csv", evolution);

  CsvTable final_table({"channel", "energy", "probability"});
  for (Eigen::Index n = 0; n < run.channel_energies.size(); ++n)
    final_table.add_row({static_cast<double>(n), run.channel_energies(n),
                         run.final_probabilities(n)});
  out->add_table("final.csv", final_table);

  out->line("beam momentum: " + format_full(run.beam_momentum));
  out->line("kinetic over level spacing: " +
            format_full(run.kinetic_to_spacing));
  out->line("matched total energy: " + format_full(run.matched_energy));
  out->line("entry channel: " + std::to_string(run.entry_channel));
  out->line(std::string("slow beam warning: ") +
            (run.adiabatic_warning ? "yes" : "no"));
  out->check("norm conserved (1e-10)", run.evolution.norm_defect < 1e-10);
}

void run_dirac(const RunConfig& config, Outputs* out) {
  DiracSpec spec = config.dirac;
  if (config.dirac_lambda != 0.0) {
    const double q =
        2.0 * M_PI * static_cast<double>(config.dirac_q_mode) / spec.length();
    const double sigma = config.dirac_sigma_r;
    const double lambda = config.dirac_lambda;
    spec.coupling = [q, sigma, lambda](double x, double r) {
      return lambda * std::cos(q * x) *
             std::exp(-0.5 * r * r / (sigma * sigma));
    };
  }
  const SpinorState psi0 =
      positive_energy_plane_wave(spec, config.dirac_k_mode);

  const EffectivePotential free_line;
  const double speed = config.dirac_speed;
  const Eigen::VectorXd t_grid =
      Eigen::VectorXd::LinSpaced(101, 0.0, config.dirac_duration);
  const ClassicalTrajectory traj =
      classical_trajectory(free_line, 0.5 * speed * speed,
                           config.dirac_r_start, speed >= 0.0 ? 1 : -1,
                           t_grid);

  const DiracSeries series =
      propagate_tdde(spec, traj, psi0, 0.0, config.dirac_duration, config.tol,
                     config.dirac_samples);

  CsvTable table({"t", "upper", "lower", "gauge_phase"});
  for (Eigen::Index k = 0; k < series.t.size(); ++k)
    table.add_row({series.t(k), series.populations(0, k),
                   series.populations(1, k), series.gauge_phase(k)});
  out->add_table("dirac.csv", table);

  const Eigen::VectorXd modes =
      upper_mode_populations(spec, series.states.back());
  CsvTable mode_table({"mode", "wavenumber", "population"});
  for (Eigen::Index m = 0; m < modes.size(); ++m)
    mode_table.add_row(
        {static_cast<double>(m), spec.wavenumber(m), modes(m)});
  out->add_table("modes.csv", mode_table);

  const double k_wave = spec.wavenumber(config.dirac_k_mode);
  const double energy = spec.mode_energy(config.dirac_k_mode);
  const double ideal =
      spec.light_speed * spec.light_speed * k_wave / energy;
  const double velocity = velocity_expectation(spec, psi0);
  out->line("plane wave velocity: " + format_full(velocity) +
            " (free value " + format_full(ideal) + ")");
  out->line("max beam speed over c: " +
            format_full(series.trajectory_speed_ratio_max));
  out->line("steps taken: " + std::to_string(series.steps_taken));
  out->check("plane wave velocity matches c^2 p / E (1e-10)",
             std::abs(velocity - ideal) < 1e-10);
  out->check("norm conserved (1e-10)", series.norm_defect < 1e-10);
}

void run_uncertainty(const RunConfig& config, Outputs* out) {
  const Eigen::VectorXcd packet =
      grid_gaussian(config.model.grid, config.packet_center,
                    config.packet_width, config.packet_momentum);
  const UncertaintyReport report = uncertainty_check(packet, config.model);

  CsvTable table({"dh_env", "dr", "mean_p_over_m", "dt_defined", "dt",
                  "de_sys", "bound", "slack", "product"});
  table.add_row({report.dh_env, report.dr, report.mean_p_over_m,
                 report.dt_defined ? 1.0 : 0.0, report.dt, report.de_sys,
                 report.bound, report.slack, report.product});
  out->add_table("report.csv", table);

  const double rhs = 0.5 * std::abs(report.mean_p_over_m);
  out->check("commutator bound respected (1e-9)",
             report.slack >= -1e-9 * std::max(1.0, rhs));
  if (report.dt_defined)
    out->line("saturation excess (product / bound - 1): " +
              format_full(report.product / report.bound - 1.0));
  else
    out->line("standing wave: mean momentum vanishes, no time resolution");

  if (config.packet_trials > 0) {
    std::mt19937_64 rng(config.seed);
    CsvTable trials({"trial", "dh_env", "dr", "mean_p_over_m", "slack"});
    bool all_ok = true;
    for (Eigen::Index trial = 0; trial < config.packet_trials; ++trial) {
      const Eigen::VectorXcd psi = random_packet(rng, config.model.grid);
      const UncertaintyReport r = uncertainty_check(psi, config.model);
      trials.add_row({static_cast<double>(trial), r.dh_env, r.dr,
                      r.mean_p_over_m, r.slack});
      const double trial_rhs = 0.5 * std::abs(r.mean_p_over_m);
      all_ok = all_ok && r.slack >= -1e-9 * std::max(1.0, trial_rhs);
    }
    out->add_table("trials.csv", trials);
    out->check("commutator bound respected across " +
                   std::to_string(config.packet_trials) + " random packets",
               all_ok);
  }
}

}  // namespace

// One matched-energy collision per kinetic energy: the beam run provides the
// emergent channel populations, the stationary solve at the same total
// energy provides |S|^2, and the rung records their disagreement on the
// transfer probability out of the entry channel.
std::vector<MottRung> mott_momentum_ladder(const CompositeModel& model,
                                           const Eigen::VectorXd& kinetic,
                                           Eigen::Index channel, double tol) {
  const AdiabaticBasis basis = adiabatic_states(model);
  const Eigen::VectorXcd psi0 = unit_channel(model.n_sys(), channel);
  std::vector<MottRung> rungs;
  for (Eigen::Index k = 0; k < kinetic.size(); ++k) {
    MottRung rung;
    rung.kinetic = kinetic(k);
    rung.momentum = std::sqrt(2.0 * model.env.mass * kinetic(k));
    const ImpactResult run =
        impact_parameter_run(model, rung.momentum, psi0, tol);
    const ChannelSolution exact = solve_close_coupling(
        model, basis, run.matched_energy, run.entry_channel);
    const ComparisonReport report = compare_exact_vs_emergent(
        exact, run.final_probabilities, rung.momentum);

    Eigen::Index entry_row = -1;
    for (std::size_t i = 0; i < report.channels.size(); ++i)
      if (report.channels[i] == run.entry_channel)
        entry_row = static_cast<Eigen::Index>(i);
    if (entry_row < 0)
      throw NumericError("mott: entry channel closed in the exact solve");

    rung.kinetic_to_spacing = run.kinetic_to_spacing;
    rung.transfer_exact = 1.0 - report.exact_probabilities(entry_row);
    rung.transfer_emergent = 1.0 - report.emergent_probabilities(entry_row);
    rung.abs_diff = report.max_abs_difference;
    rung.rel_diff = std::abs(rung.transfer_exact - rung.transfer_emergent) /
                    std::max(rung.transfer_exact, 1e-300);
    rung.asymmetry = report.asymmetry_ratio;
    rung.asymmetry_ok = report.asymmetry_ok;
    rungs.push_back(rung);
  }
  return rungs;
}

namespace {

void run_mott(const RunConfig& config, Outputs* out) {
  const std::vector<MottRung> rungs = mott_momentum_ladder(
      config.model, config.mott_kinetic, config.beam_channel, config.tol);

  CsvTable table({"kinetic", "momentum", "kinetic_to_spacing",
                  "transfer_exact", "transfer_emergent", "max_abs_difference",
                  "relative_difference", "asymmetry_ratio"});
  for (const MottRung& rung : rungs)
    table.add_row({rung.kinetic, rung.momentum, rung.kinetic_to_spacing,
                   rung.transfer_exact, rung.transfer_emergent, rung.abs_diff,
                   rung.rel_diff, rung.asymmetry});
  out->add_table("mott.csv", table);

  if (rungs.size() >= 3) {
    Eigen::VectorXd momenta(static_cast<Eigen::Index>(rungs.size()));
    Eigen::VectorXd errors(static_cast<Eigen::Index>(rungs.size()));
    for (std::size_t i = 0; i < rungs.size(); ++i) {
      momenta(static_cast<Eigen::Index>(i)) = rungs[i].momentum;
      errors(static_cast<Eigen::Index>(i)) = rungs[i].rel_diff;
    }
    const std::vector<ConvergenceRow> ladder =
        convergence_ladder(momenta, errors);
    CsvTable ladder_table({"momentum", "relative_difference", "ratio"});
    for (const ConvergenceRow& row : ladder)
      ladder_table.add_row({row.parameter, row.error, row.ratio});
    out->add_table("ladder.csv", ladder_table);
  }

  bool nonincreasing = true;
  for (std::size_t i = 1; i < rungs.size(); ++i)
    nonincreasing = nonincreasing && rungs[i].rel_diff <= rungs[i - 1].rel_diff;
  bool fast_rungs_match = true;
  for (const MottRung& rung : rungs)
    if (rung.kinetic_to_spacing >= 100.0)
      fast_rungs_match = fast_rungs_match && rung.rel_diff < 0.02;
  out->line("relative differences from " + format_full(rungs.front().rel_diff) +
            " down to " + format_full(rungs.back().rel_diff));
  out->check("differences nonincreasing along the momentum ladder",
             nonincreasing);
  out->check("relative difference below 2% wherever kinetic/spacing >= 100",
             fast_rungs_match);
}

void run_decoupling(const RunConfig& config, Outputs* out) {
  const std::vector<DecouplingRow> rows = decoupling_limit_study(
      config.model, config.decoupling_lambdas, config.beam_momentum,
      unit_channel(config.model.n_sys(), config.beam_channel), config.tol);

  CsvTable table({"lambda", "separable", "de_sys", "dt_inferred", "product"});
  for (const DecouplingRow& row : rows)
    table.add_row({row.lambda, row.separable ? 1.0 : 0.0, row.de_sys,
                   row.dt_inferred, row.product});
  out->add_table("decoupling.csv", table);

  bool decreasing = true;
  const DecouplingRow* previous = nullptr;
  for (const DecouplingRow& row : rows) {
    if (row.separable) continue;
    if (previous != nullptr)
      decreasing = decreasing && row.de_sys < previous->de_sys;
    previous = &row;
  }
  out->check("system energy spread decreases strictly with coupling",
             decreasing);
  if (!rows.empty() && rows.back().separable)
    out->line("separable: environment no longer provides time");
  out->line("product column is hbar/2 by construction (definitional)");
}

void run_ladder(const RunConfig& config, Outputs* out) {
  const std::string& parameter = config.ladder_parameter;
  Eigen::VectorXd errors(config.ladder_values.size());
  std::string value_name;

  if (parameter == "grid") {
    value_name = "n_points";
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(
        config.model.system.hamiltonian);
    const double analytic = config.model.env.offset +
                            0.5 * config.model.env.omega +
                            es.eigenvalues().minCoeff();
    for (Eigen::Index i = 0; i < config.ladder_values.size(); ++i) {
      CompositeModel m = config.model;
      m.grid.n_points =
          static_cast<Eigen::Index>(std::llround(config.ladder_values(i)));
      m.dimension_cap = std::max(m.dimension_cap, m.composite_dim());
      const BoundSolution solution = solve_bound(m, 1);
      errors(i) = std::abs(solution.energies(0) - analytic);
    }
  } else if (parameter == "mass") {
    value_name = "mass";
    const std::vector<WkbRung> rungs =
        wkb_mass_ladder(config.model, config.wkb_surface, config.wkb_state,
                        config.ladder_values);
    for (std::size_t i = 0; i < rungs.size(); ++i)
      errors(static_cast<Eigen::Index>(i)) = rungs[i].error;
  } else if (parameter == "momentum") {
    value_name = "kinetic";
    const std::vector<MottRung> rungs = mott_momentum_ladder(
        config.model, config.ladder_values, config.beam_channel, config.tol);
    for (std::size_t i = 0; i < rungs.size(); ++i)
      errors(static_cast<Eigen::Index>(i)) = rungs[i].rel_diff;
  } else {  // tol
    value_name = "tol";
    const Eigen::Index traj_samples =
        std::max<Eigen::Index>(801, 4 * config.traj_samples);
    const ClassicalTrajectory traj =
        bare_trajectory(config.model.env, config.traj_r_start,
                        config.traj_momentum, config.traj_duration,
                        traj_samples);
    const EffectiveHamiltonian ham =
        effective_hamiltonian(config.model, traj);
    const Eigen::VectorXcd psi0 =
        unit_channel(config.model.n_sys(), config.initial_channel);
    const PropagationResult reference =
        propagate(ham, psi0, 0.0, config.traj_duration, 1e-13, 2);
    for (Eigen::Index i = 0; i < config.ladder_values.size(); ++i) {
      const PropagationResult run =
          propagate(ham, psi0, 0.0, config.traj_duration,
                    config.ladder_values(i), 2);
      errors(i) = (run.psi.col(1) - reference.psi.col(1)).norm();
    }
  }

  const std::vector<ConvergenceRow> ladder =
      convergence_ladder(config.ladder_values, errors);
  CsvTable table({value_name, "error", "ratio"});
  for (const ConvergenceRow& row : ladder)
    table.add_row({row.parameter, row.error, row.ratio});
  out->add_table("ladder.csv", table);

  bool decreasing = true;
  for (std::size_t i = 1; i < ladder.size(); ++i)
    decreasing = decreasing && ladder[i].error < ladder[i - 1].error;
  out->line("parameter: " + parameter);
  out->check("error decreases along the ladder", decreasing);
}

}  // namespace

RunManifest run_experiment(const RunConfig& config) {
  using Clock = std::chrono::steady_clock;
  const auto seconds_between = [](Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
  };
  const auto t_begin = Clock::now();

  Outputs out;
  out.line("experiment: " + experiment_name(config.experiment));
  out.line("config hash: " + config.config_hash);
  try {
    switch (config.experiment) {
      case Experiment::Validate: run_validate(config, &out); break;
      case Experiment::Adiabatic: run_adiabatic(config, &out); break;
      case Experiment::SolveBound: run_solve_bound(config, &out); break;
      case Experiment::SolveScatter: run_solve_scatter(config, &out); break;
      case Experiment::Wkb: run_wkb(config, &out); break;
      case Experiment::Trajectory: run_trajectory(config, &out); break;
      case Experiment::Propagate: run_propagate(config, &out); break;
      case Experiment::Impact: run_impact(config, &out); break;
      case Experiment::Dirac: run_dirac(config, &out); break;
      case Experiment::Uncertainty: run_uncertainty(config, &out); break;
      case Experiment::Mott: run_mott(config, &out); break;
      case Experiment::Decoupling: run_decoupling(config, &out); break;
      case Experiment::Ladder: run_ladder(config, &out); break;
    }
  } catch (const ConfigError& e) {
    throw ConfigError(experiment_name(config.experiment) + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(experiment_name(config.experiment) + ": " + e.what());
  }
  const auto t_run = Clock::now();

  std::string summary;
  for (const std::string& line : out.summary) {
    summary += line;
    summary += '\n';
  }
  out.files.emplace_back("summary.txt", summary);

  RunManifest manifest;
  manifest.config_hash = config.config_hash;
  for (const auto& [name, text] : out.files) {
    write_file(config.out_dir + "/" + name, text);
    manifest.checksums.emplace_back(name, hex64(fnv1a64(text)));
  }
  const auto t_write = Clock::now();
  manifest.timings.emplace_back("run", seconds_between(t_begin, t_run));
  manifest.timings.emplace_back("write", seconds_between(t_run, t_write));
  manifest.timings.emplace_back("total", seconds_between(t_begin, t_write));

  OrderedJson json;
  json["config_hash"] = manifest.config_hash;
  json["version"] = manifest.version;
  OrderedJson checksums = OrderedJson::object();
  for (const auto& [name, hash] : manifest.checksums) checksums[name] = hash;
  json["checksums"] = checksums;
  OrderedJson timings = OrderedJson::object();
  for (const auto& [stage, value] : manifest.timings) timings[stage] = value;
  json["wall_clock_seconds"] = timings;
  write_file(config.out_dir + "/manifest.json", json.dump(2) + "\n");

  return manifest;
}

}  // namespace emt
