#include "emtime/semiclassical.hpp"

#include <algorithm>
#include <cmath>

namespace emt {

namespace {

double turning_eps(double energy) { return 1e-6 * std::max(1.0, std::abs(energy)); }

// Local momentum magnitude with the argument clamped so quadrature callbacks
// never take sqrt of a negative rounding residue.
double momentum_mag(const EffectivePotential& pot, double energy, double r) {
  const double arg = 2.0 * pot.mass() * std::max(energy - pot.value(r), 0.0);
  return std::sqrt(arg);
}

// Root of E - V on [a, b] given E - V(a) and E - V(b) of opposite sign.
double turning_point(const EffectivePotential& pot, double energy, double a,
                     double b) {
  double fa = energy - pot.value(a);
  for (int i = 0; i < 200; ++i) {
    const double m = 0.5 * (a + b);
    const double fm = energy - pot.value(m);
    if ((fa <= 0.0) == (fm <= 0.0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
    if (b - a < 1e-15 * std::max(1.0, std::abs(a) + std::abs(b))) break;
  }
  return 0.5 * (a + b);
}

}  // namespace

EffectivePotential::EffectivePotential(const EnvSpec& env) : env_(env) {
  if (env_.form == EnvSpec::Form::Tabulated) {
    bounded_ = true;
    domain_min_ = env_.table_r(0);
    domain_max_ = env_.table_r(env_.table_r.size() - 1);
  }
}

EffectivePotential::EffectivePotential(const EnvSpec& env, const Grid& grid,
                                       const Eigen::VectorXd& averaged_term)
    : env_(env), has_average_(true), average_(grid.points(), averaged_term) {
  bounded_ = true;
  domain_min_ = grid.r_min;
  domain_max_ = grid.r_max;
  if (env_.form == EnvSpec::Form::Tabulated) {
    domain_min_ = std::max(domain_min_, env_.table_r(0));
    domain_max_ = std::min(domain_max_, env_.table_r(env_.table_r.size() - 1));
  }
}

double EffectivePotential::value(double r) const {
  // Flow integrators probe slightly past the edge of a bounded domain while
  // locating the exit; clamping keeps those stage evaluations defined.
  if (bounded_) r = std::clamp(r, domain_min_, domain_max_);
  double v = env_.potential(r);
  if (has_average_) v += average_.at(r);
  return v;
}

double EffectivePotential::derivative(double r) const {
  if (bounded_) r = std::clamp(r, domain_min_, domain_max_);
  double d = env_.potential_derivative(r);
  if (has_average_) d += average_.derivative(r);
  return d;
}

Eigen::VectorXcd WkbState::wave() const {
  Eigen::VectorXcd w = Eigen::VectorXcd::Zero(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i)
    if (valid[static_cast<std::size_t>(i)])
      w(i) = amplitude(i) * std::exp(Complex(0.0, action(i)));
  return w;
}

WkbState wkb_wavefunction(const EffectivePotential& pot, const Grid& grid,
                          double energy,
                          std::optional<std::pair<double, double>> window) {
  const double lo = window ? window->first : grid.r_min;
  const double hi = window ? window->second : grid.r_max;
  std::vector<double> nodes;
  for (Eigen::Index i = 0; i < grid.n_points; ++i) {
    const double r = grid.point(i);
    if (r >= lo - 1e-12 && r <= hi + 1e-12) nodes.push_back(r);
  }
  if (nodes.empty()) throw NumericError("wkb: window excludes every grid node");

  const double eps = turning_eps(energy);
  const Eigen::Index n = static_cast<Eigen::Index>(nodes.size());
  std::vector<std::uint8_t> allowed(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i)
    allowed[i] = energy - pot.value(nodes[i]) > eps ? 1 : 0;

  // Keep only the first contiguous allowed run; the accumulated phase has no
  // meaning across a forbidden gap.
  const auto first =
      std::find(allowed.begin(), allowed.end(), std::uint8_t{1});
  if (first == allowed.end())
    throw NumericError("wkb: no classically allowed node at this energy");
  const auto past = std::find(first, allowed.end(), std::uint8_t{0});
  std::fill(past, allowed.end(), std::uint8_t{0});
  const Eigen::Index run_begin = first - allowed.begin();
  const Eigen::Index run_end = past - allowed.begin();

  WkbState state;
  state.energy = energy;
  state.r = Eigen::Map<const Eigen::VectorXd>(nodes.data(), n);
  state.valid = allowed;
  state.momentum = Eigen::VectorXd::Zero(n);
  state.action = Eigen::VectorXd::Zero(n);
  state.amplitude = Eigen::VectorXd::Zero(n);

  const auto p_of_r = [&](double r) { return momentum_mag(pot, energy, r); };
  for (Eigen::Index i = run_begin; i < run_end; ++i) {
    const double p = p_of_r(nodes[static_cast<std::size_t>(i)]);
    state.momentum(i) = p;
    state.amplitude(i) = 1.0 / std::sqrt(p);
    if (i > run_begin)
      state.action(i) =
          state.action(i - 1) +
          refined_trapezoid(p_of_r, nodes[static_cast<std::size_t>(i - 1)],
                            nodes[static_cast<std::size_t>(i)]);
    const double dp_dr = pot.mass() * std::abs(pot.derivative(
                             nodes[static_cast<std::size_t>(i)])) / p;
    state.validity_max = std::max(state.validity_max, dp_dr / (2.0 * p * p));
  }
  return state;
}

Eigen::VectorXd wkb_standing_wave(const EffectivePotential& pot,
                                  const Grid& grid, double energy,
                                  std::vector<std::uint8_t>* valid_out) {
  const double eps = turning_eps(energy);
  const Eigen::Index n = grid.n_points;
  std::vector<std::uint8_t> allowed(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    allowed[static_cast<std::size_t>(i)] =
        energy - pot.value(grid.point(i)) > eps ? 1 : 0;
  const auto first =
      std::find(allowed.begin(), allowed.end(), std::uint8_t{1});
  if (first == allowed.end())
    throw NumericError("wkb: no classically allowed node at this energy");
  const auto past = std::find(first, allowed.end(), std::uint8_t{0});
  std::fill(past, allowed.end(), std::uint8_t{0});
  const Eigen::Index run_begin = first - allowed.begin();
  const Eigen::Index run_end = past - allowed.begin();

  // Left turning point: on the wall when the run touches it, otherwise the
  // zero of E - V inside the bracketing interval.
  double r_left = grid.point(run_begin);
  if (run_begin > 0)
    r_left = turning_point(pot, energy, grid.point(run_begin - 1),
                           grid.point(run_begin));

  const auto p_of_r = [&](double r) { return momentum_mag(pot, energy, r); };
  Eigen::VectorXd chi = Eigen::VectorXd::Zero(n);
  double w = refined_trapezoid(p_of_r, r_left, grid.point(run_begin));
  double norm2 = 0.0;
  for (Eigen::Index i = run_begin; i < run_end; ++i) {
    if (i > run_begin)
      w += refined_trapezoid(p_of_r, grid.point(i - 1), grid.point(i));
    const double p = p_of_r(grid.point(i));
    chi(i) = std::cos(w - 0.25 * M_PI) / std::sqrt(p);
    norm2 += chi(i) * chi(i);
  }
  chi /= std::sqrt(norm2 * grid.spacing());
  if (valid_out) *valid_out = allowed;
  return chi;
}

namespace {

struct FlowState {
  double r;
  double p;
};

FlowState flow_rhs(const EffectivePotential& pot, double mass, FlowState y) {
  return {y.p / mass, -pot.derivative(y.r)};
}

// One embedded Dormand-Prince step; returns the fifth order result and the
// infinity norm of the difference against the fourth order one.
FlowState dp_step(const EffectivePotential& pot, double mass, FlowState y,
                  double dt, double* err) {
  const auto f = [&](FlowState s) { return flow_rhs(pot, mass, s); };
  const auto adv = [&](double cr, double cp) {
    return FlowState{y.r + dt * cr, y.p + dt * cp};
  };
  const FlowState k1 = f(y);
  const FlowState k2 = f(adv(0.2 * k1.r, 0.2 * k1.p));
  const FlowState k3 = f(adv(3.0 / 40 * k1.r + 9.0 / 40 * k2.r,
                             3.0 / 40 * k1.p + 9.0 / 40 * k2.p));
  const FlowState k4 =
      f(adv(44.0 / 45 * k1.r - 56.0 / 15 * k2.r + 32.0 / 9 * k3.r,
            44.0 / 45 * k1.p - 56.0 / 15 * k2.p + 32.0 / 9 * k3.p));
  const FlowState k5 =
      f(adv(19372.0 / 6561 * k1.r - 25360.0 / 2187 * k2.r +
                64448.0 / 6561 * k3.r - 212.0 / 729 * k4.r,
            19372.0 / 6561 * k1.p - 25360.0 / 2187 * k2.p +
                64448.0 / 6561 * k3.p - 212.0 / 729 * k4.p));
  const FlowState k6 =
      f(adv(9017.0 / 3168 * k1.r - 355.0 / 33 * k2.r + 46732.0 / 5247 * k3.r +
                49.0 / 176 * k4.r - 5103.0 / 18656 * k5.r,
            9017.0 / 3168 * k1.p - 355.0 / 33 * k2.p + 46732.0 / 5247 * k3.p +
                49.0 / 176 * k4.p - 5103.0 / 18656 * k5.p));
  const double r5 = y.r + dt * (35.0 / 384 * k1.r + 500.0 / 1113 * k3.r +
                                125.0 / 192 * k4.r - 2187.0 / 6784 * k5.r +
                                11.0 / 84 * k6.r);
  const double p5 = y.p + dt * (35.0 / 384 * k1.p + 500.0 / 1113 * k3.p +
                                125.0 / 192 * k4.p - 2187.0 / 6784 * k5.p +
                                11.0 / 84 * k6.p);
  const FlowState k7 = f({r5, p5});
  const double r4 = y.r + dt * (5179.0 / 57600 * k1.r + 7571.0 / 16695 * k3.r +
                                393.0 / 640 * k4.r - 92097.0 / 339200 * k5.r +
                                187.0 / 2100 * k6.r + 1.0 / 40 * k7.r);
  const double p4 = y.p + dt * (5179.0 / 57600 * k1.p + 7571.0 / 16695 * k3.p +
                                393.0 / 640 * k4.p - 92097.0 / 339200 * k5.p +
                                187.0 / 2100 * k6.p + 1.0 / 40 * k7.p);
  *err = std::max(std::abs(r5 - r4), std::abs(p5 - p4));
  return {r5, p5};
}

}  // namespace

double ClassicalTrajectory::position(double time) const {
  return r_of_t.at(time);
}

double ClassicalTrajectory::momentum_at(double time) const {
  return p_of_t.at(time);
}

ClassicalTrajectory classical_trajectory(const EffectivePotential& pot,
                                         double energy, double r_start,
                                         int direction,
                                         const Eigen::VectorXd& t_grid,
                                         bool stop_at_turning,
                                         double err_rate) {
  if (direction != 1 && direction != -1)
    throw std::invalid_argument("trajectory: direction must be +1 or -1");
  if (t_grid.size() < 2)
    throw std::invalid_argument("trajectory: need at least two sample times");
  for (Eigen::Index i = 1; i < t_grid.size(); ++i)
    if (!(t_grid(i) > t_grid(i - 1)))
      throw std::invalid_argument("trajectory: sample times must increase");

  const double mass = pot.mass();
  const double kin0 = energy - pot.value(r_start);
  if (kin0 < -turning_eps(energy))
    throw NumericError("trajectory: start point is classically forbidden");

  ClassicalTrajectory traj;
  traj.energy = energy;
  traj.mass = mass;
  traj.potential = pot;
  const Eigen::Index n = t_grid.size();
  traj.t = t_grid;
  traj.r = Eigen::VectorXd::Zero(n);
  traj.p = Eigen::VectorXd::Zero(n);

  FlowState y{r_start, direction * std::sqrt(2.0 * mass * std::max(kin0, 0.0))};
  traj.r(0) = y.r;
  traj.p(0) = y.p;
  Eigen::Index recorded = 1;
  double dt = (t_grid(n - 1) - t_grid(0)) / 1024.0;
  const double dt_floor = 1e-14 * std::max(1.0, t_grid(n - 1) - t_grid(0));
  bool stopped = false;

  for (Eigen::Index k = 1; k < n && !stopped; ++k) {
    double t = t_grid(k - 1);
    const double t_target = t_grid(k);
    while (t < t_target) {
      const double step = std::min(dt, t_target - t);
      double err = 0.0;
      const FlowState trial = dp_step(pot, mass, y, step, &err);
      const double scale =
          std::max(1.0, std::max(std::abs(y.r), std::abs(y.p)));
      const double tol = err_rate * step * scale;
      if (err > tol && step > dt_floor) {
        dt = std::max(dt_floor,
                      step * std::max(0.3, 0.9 * std::pow(tol / std::max(err, 1e-300), 0.2)));
        continue;
      }
      if (step <= dt_floor && err > tol)
        throw NumericError("trajectory: step size underflow");
      const bool sign_flip = y.p * trial.p < 0.0;
      if (sign_flip) traj.turning_encountered = true;
      const bool outside =
          pot.bounded() &&
          (trial.r < pot.domain_min() || trial.r > pot.domain_max());
      if ((sign_flip && stop_at_turning) || outside) {
        traj.truncated = true;
        traj.exited_domain = outside;
        stopped = true;
        break;
      }
      y = trial;
      t += step;
      dt = std::max(dt_floor,
                    std::min(step * 2.0,
                             step * std::max(0.3, 0.9 * std::pow(tol / std::max(err, 1e-300), 0.2))));
    }
    if (stopped) break;
    traj.r(k) = y.r;
    traj.p(k) = y.p;
    recorded = k + 1;
  }

  if (recorded < n) {
    traj.t = t_grid.head(recorded).eval();
    traj.r = traj.r.head(recorded).eval();
    traj.p = traj.p.head(recorded).eval();
  }
  for (Eigen::Index k = 0; k < recorded; ++k)
    traj.energy_residual_max =
        std::max(traj.energy_residual_max,
                 std::abs(traj.p(k) * traj.p(k) / (2.0 * mass) +
                          pot.value(traj.r(k)) - energy));
  if (recorded >= 2) {
    traj.r_of_t = CubicSpline(traj.t, traj.r);
    traj.p_of_t = CubicSpline(traj.t, traj.p);
  }
  return traj;
}

double TimeMap::at(double r_query) const { return t_of_r_.at(r_query); }

TimeMap time_map(const ClassicalTrajectory& traj) {
  const Eigen::Index n = traj.r.size();
  if (n < 2) throw NumericError("time map: trajectory has too few samples");
  const bool increasing = traj.r(1) > traj.r(0);
  for (Eigen::Index i = 1; i < n; ++i) {
    const bool step_up = traj.r(i) > traj.r(i - 1);
    if (traj.r(i) == traj.r(i - 1) || step_up != increasing)
      throw NumericError(
          "time map: positions are not strictly monotone; restrict the "
          "trajectory to a single branch between turning points");
  }

  const double mass = traj.mass;
  const double energy = traj.energy;
  const double sign = increasing ? 1.0 : -1.0;
  const auto dt_dr = [&](double r) {
    const double arg =
        2.0 * mass * std::max(energy - traj.potential.value(r), 1e-300);
    return mass / (sign * std::sqrt(arg));
  };

  TimeMap map;
  map.increasing_in_r = increasing;
  Eigen::VectorXd t_quad(n);
  t_quad(0) = traj.t(0);
  for (Eigen::Index i = 1; i < n; ++i)
    t_quad(i) = t_quad(i - 1) +
                refined_trapezoid(dt_dr, traj.r(i - 1), traj.r(i));
  map.max_sample_mismatch = (t_quad - traj.t).cwiseAbs().maxCoeff();

  if (increasing) {
    map.r = traj.r;
    map.t = t_quad;
  } else {
    map.r = traj.r.reverse().eval();
    map.t = t_quad.reverse().eval();
  }
  map.t_of_r_ = CubicSpline(map.r, map.t);
  return map;
}

}  // namespace emt
