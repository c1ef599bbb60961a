#include "emtime/model.hpp"

#include <cmath>

namespace emt {

Eigen::VectorXd Grid::points() const {
  return Eigen::VectorXd::LinSpaced(n_points, r_min, r_max);
}

std::vector<std::string> Grid::validate() const {
  std::vector<std::string> v;
  if (n_points < 8) v.push_back("grid: needs at least 8 points");
  if (!(r_max > r_min)) v.push_back("grid: r_max must exceed r_min");
  if (!std::isfinite(r_min) || !std::isfinite(r_max))
    v.push_back("grid: bounds must be finite");
  return v;
}

SystemSpec SystemSpec::two_level(double splitting) {
  SystemSpec s;
  s.hamiltonian = Eigen::MatrixXcd::Zero(2, 2);
  s.hamiltonian(1, 1) = splitting;
  return s;
}

SystemSpec SystemSpec::ladder(const Eigen::VectorXd& energies) {
  SystemSpec s;
  s.hamiltonian =
      energies.cast<Complex>().asDiagonal().toDenseMatrix();
  return s;
}

std::vector<std::string> SystemSpec::validate() const {
  std::vector<std::string> v;
  if (hamiltonian.rows() < 1 || hamiltonian.rows() != hamiltonian.cols()) {
    v.push_back("system: Hamiltonian must be square and non-empty");
    return v;
  }
  if (!hamiltonian.allFinite())
    v.push_back("system Hamiltonian entries not finite");
  else if (hermiticity_error(hamiltonian) > 1e-12)
    v.push_back("system Hamiltonian not Hermitian");
  return v;
}

double EnvSpec::potential(double r) const {
  switch (form) {
    case Form::Free:
      return offset;
    case Form::Harmonic: {
      const double d = r - center;
      return offset + 0.5 * mass * omega * omega * d * d;
    }
    case Form::GaussianBarrier: {
      const double d = r - center;
      return offset + height * std::exp(-d * d / (2.0 * width * width));
    }
    case Form::Tabulated:
      return offset + linear_interp(table_r, table_v, r);
  }
  return offset;
}

double EnvSpec::potential_derivative(double r) const {
  switch (form) {
    case Form::Free:
      return 0.0;
    case Form::Harmonic:
      return mass * omega * omega * (r - center);
    case Form::GaussianBarrier: {
      const double d = r - center;
      const double w2 = width * width;
      return -height * d / w2 * std::exp(-d * d / (2.0 * w2));
    }
    case Form::Tabulated: {
      // One sided at the table edges, central inside.
      const double h = 1e-6 * (table_r(table_r.size() - 1) - table_r(0));
      const double lo = std::max(table_r(0), r - h);
      const double hi = std::min(table_r(table_r.size() - 1), r + h);
      return (linear_interp(table_r, table_v, hi) -
              linear_interp(table_r, table_v, lo)) /
             (hi - lo);
    }
  }
  return 0.0;
}

Eigen::VectorXd EnvSpec::potential_on(const Grid& grid) const {
  Eigen::VectorXd v(grid.n_points);
  for (Eigen::Index i = 0; i < grid.n_points; ++i)
    v(i) = potential(grid.point(i));
  return v;
}

std::vector<std::string> EnvSpec::validate() const {
  std::vector<std::string> v;
  if (!(mass > 0.0) || !std::isfinite(mass))
    v.push_back("environment mass nonpositive or not finite");
  if (form == Form::Harmonic && !(omega > 0.0))
    v.push_back("env: harmonic frequency must be positive");
  if (form == Form::GaussianBarrier && !(width > 0.0))
    v.push_back("env: barrier width must be positive");
  if (form == Form::Tabulated) {
    if (table_r.size() < 2 || table_r.size() != table_v.size())
      v.push_back("env: tabulated potential needs matched nodes and values");
    else {
      for (Eigen::Index i = 1; i < table_r.size(); ++i)
        if (!(table_r(i) > table_r(i - 1))) {
          v.push_back("env: tabulated nodes must strictly increase");
          break;
        }
      if (!table_v.allFinite())
        v.push_back("env: tabulated values must be finite");
    }
  }
  return v;
}

double CouplingSpec::envelope(double r) const {
  switch (form) {
    case Form::None:
      return 0.0;
    case Form::LinearR:
      return r;
    case Form::GaussianEnvelope: {
      const double d = r - center;
      return std::exp(-d * d / (2.0 * width * width));
    }
    case Form::Tabulated:
      return 1.0;
  }
  return 0.0;
}

Eigen::MatrixXcd CouplingSpec::at(double r) const {
  if (form == Form::Tabulated) {
    const Eigen::Index n = table_r.size();
    if (n < 2) throw std::invalid_argument("coupling: table too short");
    if (r < table_r(0) - 1e-12 || r > table_r(n - 1) + 1e-12)
      throw NumericError("coupling: query outside table range");
    Eigen::Index lo = 0, hi = n - 1;
    while (hi - lo > 1) {
      const Eigen::Index mid = (lo + hi) / 2;
      (table_r(mid) <= r ? lo : hi) = mid;
    }
    const double w = (r - table_r(lo)) / (table_r(lo + 1) - table_r(lo));
    return strength * ((1.0 - w) * table[lo] + w * table[lo + 1]);
  }
  if (form == Form::None || pattern.size() == 0)
    return Eigen::MatrixXcd();  // caller handles the empty case
  return strength * envelope(r) * pattern;
}

bool CouplingSpec::is_zero() const {
  if (form == Form::None || strength == 0.0) return true;
  if (form == Form::Tabulated) {
    for (const auto& block : table)
      if (block.cwiseAbs().maxCoeff() > 0.0) return false;
    return true;
  }
  return pattern.size() == 0 || pattern.cwiseAbs().maxCoeff() == 0.0;
}

std::vector<std::string> CouplingSpec::validate(Eigen::Index n_sys) const {
  std::vector<std::string> v;
  if (form == Form::None) return v;
  if (!std::isfinite(strength))
    v.push_back("coupling: strength must be finite");
  if (form == Form::GaussianEnvelope && !(width > 0.0))
    v.push_back("coupling: envelope width must be positive");
  if (form == Form::Tabulated) {
    if (table_r.size() < 2 ||
        static_cast<Eigen::Index>(table.size()) != table_r.size()) {
      v.push_back("coupling: tabulated blocks must match the node list");
      return v;
    }
    for (Eigen::Index i = 1; i < table_r.size(); ++i)
      if (!(table_r(i) > table_r(i - 1))) {
        v.push_back("coupling: tabulated nodes must strictly increase");
        break;
      }
    for (const auto& block : table) {
      if (block.rows() != n_sys || block.cols() != n_sys) {
        v.push_back("coupling: tabulated block dimension mismatch");
        return v;
      }
      if (hermiticity_error(block) > 1e-12) {
        v.push_back("coupling: tabulated blocks must be Hermitian");
        return v;
      }
    }
    return v;
  }
  if (pattern.rows() != n_sys || pattern.cols() != n_sys)
    v.push_back("coupling: pattern dimension mismatch");
  else if (!pattern.allFinite())
    v.push_back("coupling: pattern entries must be finite");
  else if (hermiticity_error(pattern) > 1e-12)
    v.push_back("coupling: pattern must be Hermitian");
  return v;
}

Eigen::MatrixXd kinetic_operator(const Grid& grid, double mass) {
  const Eigen::Index n = grid.n_points;
  const double h = grid.spacing();
  const double diag = 1.0 / (mass * h * h);
  const double off = -0.5 / (mass * h * h);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = diag;
    if (i > 0) k(i, i - 1) = off;
    if (i + 1 < n) k(i, i + 1) = off;
  }
  return k;
}

Eigen::SparseMatrix<double> kinetic_operator_sparse(const Grid& grid,
                                                    double mass) {
  const Eigen::Index n = grid.n_points;
  const double h = grid.spacing();
  const double diag = 1.0 / (mass * h * h);
  const double off = -0.5 / (mass * h * h);
  Eigen::SparseMatrix<double> k(n, n);
  k.reserve(Eigen::VectorXi::Constant(n, 3));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i > 0) k.insert(i, i - 1) = off;
    k.insert(i, i) = diag;
    if (i + 1 < n) k.insert(i, i + 1) = off;
  }
  k.makeCompressed();
  return k;
}

Eigen::VectorXcd apply_kinetic(const Grid& grid, double mass,
                               const Eigen::VectorXcd& psi) {
  const Eigen::Index n = grid.n_points;
  if (psi.size() != n)
    throw std::invalid_argument("apply_kinetic: size mismatch");
  const double h = grid.spacing();
  const double inv = 0.5 / (mass * h * h);
  Eigen::VectorXcd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Complex left = i > 0 ? psi(i - 1) : Complex(0.0);
    const Complex right = i + 1 < n ? psi(i + 1) : Complex(0.0);
    out(i) = inv * (2.0 * psi(i) - left - right);
  }
  return out;
}

Eigen::MatrixXcd momentum_operator(const Grid& grid) {
  const Eigen::Index n = grid.n_points;
  const double h = grid.spacing();
  const Complex c(0.0, -0.5 / h);
  Eigen::MatrixXcd p = Eigen::MatrixXcd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i + 1 < n) p(i, i + 1) = c;
    if (i > 0) p(i, i - 1) = -c;
  }
  return p;
}

Eigen::VectorXcd apply_momentum(const Grid& grid, const Eigen::VectorXcd& psi) {
  const Eigen::Index n = grid.n_points;
  if (psi.size() != n)
    throw std::invalid_argument("apply_momentum: size mismatch");
  const double h = grid.spacing();
  const Complex c(0.0, -0.5 / h);
  Eigen::VectorXcd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Complex left = i > 0 ? psi(i - 1) : Complex(0.0);
    const Complex right = i + 1 < n ? psi(i + 1) : Complex(0.0);
    out(i) = c * (right - left);
  }
  return out;
}

Eigen::MatrixXd env_hamiltonian(const Grid& grid, const EnvSpec& env) {
  Eigen::MatrixXd h = kinetic_operator(grid, env.mass);
  h.diagonal() += env.potential_on(grid);
  return h;
}

Eigen::MatrixXd env_hamiltonian(const Grid& grid, const EnvSpec& env,
                                const Eigen::VectorXd& extra) {
  if (extra.size() != grid.n_points)
    throw std::invalid_argument("env_hamiltonian: extra potential size");
  Eigen::MatrixXd h = env_hamiltonian(grid, env);
  h.diagonal() += extra;
  return h;
}

Eigen::MatrixXcd assemble_composite(const CompositeModel& model) {
  const Eigen::Index dim = model.composite_dim();
  if (dim > model.dimension_cap)
    throw std::length_error("assemble_composite: dimension " +
                            std::to_string(dim) + " exceeds the dense cap " +
                            std::to_string(model.dimension_cap));
  const Eigen::Index ns = model.n_sys();
  const Eigen::Index np = model.grid.n_points;
  const double h = model.grid.spacing();
  const double kd = 1.0 / (model.env.mass * h * h);
  const double ko = -0.5 / (model.env.mass * h * h);
  const Eigen::VectorXd ve = model.env.potential_on(model.grid);

  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
  for (Eigen::Index i = 0; i < np; ++i) {
    const Eigen::Index base = i * ns;
    Eigen::MatrixXcd block = model.system.hamiltonian;
    if (!model.coupling.is_zero()) block += model.coupling.at(model.grid.point(i));
    block.diagonal().array() += Complex(ve(i) + kd, 0.0);
    m.block(base, base, ns, ns) = block;
    if (i + 1 < np) {
      for (Eigen::Index s = 0; s < ns; ++s) {
        m(base + s, base + ns + s) = ko;
        m(base + ns + s, base + s) = ko;
      }
    }
  }
  return m;
}

Eigen::SparseMatrix<Complex> assemble_composite_sparse(
    const CompositeModel& model) {
  if (model.composite_dim() > model.dimension_cap)
    throw std::length_error(
        "assemble_composite_sparse: dimension " +
        std::to_string(model.composite_dim()) + " exceeds the cap " +
        std::to_string(model.dimension_cap));
  const Eigen::Index ns = model.n_sys();
  const Eigen::Index np = model.grid.n_points;
  const double h = model.grid.spacing();
  const double kd = 1.0 / (model.env.mass * h * h);
  const double ko = -0.5 / (model.env.mass * h * h);
  const Eigen::VectorXd ve = model.env.potential_on(model.grid);

  std::vector<Eigen::Triplet<Complex>> trip;
  trip.reserve(static_cast<std::size_t>(np) * (ns * ns + 2 * ns));
  for (Eigen::Index i = 0; i < np; ++i) {
    const Eigen::Index base = i * ns;
    Eigen::MatrixXcd block = model.system.hamiltonian;
    if (!model.coupling.is_zero()) block += model.coupling.at(model.grid.point(i));
    block.diagonal().array() += Complex(ve(i) + kd, 0.0);
    for (Eigen::Index a = 0; a < ns; ++a)
      for (Eigen::Index b = 0; b < ns; ++b)
        if (block(a, b) != Complex(0.0))
          trip.emplace_back(base + a, base + b, block(a, b));
    if (i + 1 < np)
      for (Eigen::Index s = 0; s < ns; ++s) {
        trip.emplace_back(base + s, base + ns + s, Complex(ko));
        trip.emplace_back(base + ns + s, base + s, Complex(ko));
      }
  }
  Eigen::SparseMatrix<Complex> m(np * ns, np * ns);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return m;
}

std::vector<std::string> validate_model(const CompositeModel& model) {
  std::vector<std::string> v = model.grid.validate();
  for (auto& s : model.system.validate()) v.push_back(s);
  for (auto& s : model.env.validate()) v.push_back(s);
  for (auto& s : model.coupling.validate(model.n_sys())) v.push_back(s);
  if (!v.empty()) return v;

  if (model.composite_dim() > model.dimension_cap)
    v.push_back("composite dimension " + std::to_string(model.composite_dim()) +
                " exceeds the configured cap " +
                std::to_string(model.dimension_cap));

  if (model.env.form == EnvSpec::Form::Tabulated &&
      (model.env.table_r(0) > model.grid.r_min + 1e-12 ||
       model.env.table_r(model.env.table_r.size() - 1) <
           model.grid.r_max - 1e-12))
    v.push_back("env: tabulated potential must cover the grid range");
  if (model.coupling.form == CouplingSpec::Form::Tabulated &&
      (model.coupling.table_r(0) > model.grid.r_min + 1e-12 ||
       model.coupling.table_r(model.coupling.table_r.size() - 1) <
           model.grid.r_max - 1e-12))
    v.push_back("coupling: tabulated blocks must cover the grid range");
  if (v.empty() && !model.env.potential_on(model.grid).allFinite())
    v.push_back("env: potential must be finite on the grid");
  return v;
}

void require_valid(const CompositeModel& model) {
  const auto violations = validate_model(model);
  if (violations.empty()) return;
  std::string msg = "invalid model:";
  for (const auto& s : violations) msg += "\n  " + s;
  throw ConfigError(msg);
}

double coupling_boundary_ratio(const CompositeModel& model) {
  if (model.coupling.is_zero()) return 0.0;
  double peak = 0.0;
  for (Eigen::Index i = 0; i < model.grid.n_points; ++i)
    peak = std::max(peak,
                    model.coupling.at(model.grid.point(i)).cwiseAbs().maxCoeff());
  if (peak == 0.0) return 0.0;
  const double edge =
      std::max(model.coupling.at(model.grid.r_min).cwiseAbs().maxCoeff(),
               model.coupling.at(model.grid.r_max).cwiseAbs().maxCoeff());
  return edge / peak;
}

}  // namespace emt
