#include "emtime/config.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "emtime/numeric.hpp"

namespace emt {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

std::string line_tag(int line) {
  return " (line " + std::to_string(line) + ")";
}

double parse_double_token(const std::string& token, const std::string& where,
                          int line) {
  const std::string t = trim(token);
  if (t.empty())
    throw ConfigError("empty number for " + where + line_tag(line));
  errno = 0;
  char* end = nullptr;
  const double value = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || errno == ERANGE)
    throw ConfigError("cannot parse '" + t + "' as a number for " + where +
                      line_tag(line));
  return value;
}

std::int64_t parse_int_token(const std::string& token, const std::string& where,
                             int line) {
  const std::string t = trim(token);
  if (t.empty())
    throw ConfigError("empty integer for " + where + line_tag(line));
  errno = 0;
  char* end = nullptr;
  const std::int64_t value = std::strtoll(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size() || errno == ERANGE)
    throw ConfigError("cannot parse '" + t + "' as an integer for " + where +
                      line_tag(line));
  return value;
}

}  // namespace

IniFile IniFile::parse(const std::string& text) {
  IniFile out;
  std::istringstream stream(text);
  std::string raw;
  int line = 0;
  while (std::getline(stream, raw)) {
    ++line;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    const std::string s = trim(raw);
    if (s.empty() || s.front() == '#' || s.front() == ';') continue;

    if (s.front() == '[') {
      if (s.back() != ']')
        throw ConfigError("malformed section header '" + s + "'" +
                          line_tag(line));
      const std::string name = trim(s.substr(1, s.size() - 2));
      if (name.empty())
        throw ConfigError("empty section name" + line_tag(line));
      for (const auto& section : out.sections_)
        if (section.name == name)
          throw ConfigError("duplicate section [" + name + "]" +
                            line_tag(line));
      out.sections_.push_back({name, line, {}});
      continue;
    }

    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected 'key = value' or a section header, got '" +
                        s + "'" + line_tag(line));
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key" + line_tag(line));
    if (value.empty())
      throw ConfigError("empty value for key '" + key + "'" + line_tag(line));
    if (out.sections_.empty())
      throw ConfigError("key '" + key + "' appears before any [section]" +
                        line_tag(line));
    for (const auto& entry : out.sections_.back().entries)
      if (entry.key == key)
        throw ConfigError("duplicate key '" + key + "' in [" +
                          out.sections_.back().name + "]" + line_tag(line));
    out.sections_.back().entries.push_back({key, value, line, false});
  }
  for (const auto& section : out.sections_)
    if (section.entries.empty())
      throw ConfigError("empty section [" + section.name + "]" +
                        line_tag(section.line));
  return out;
}

bool IniFile::has_section(const std::string& name) const {
  for (const auto& section : sections_)
    if (section.name == name) return true;
  return false;
}

bool IniFile::has_key(const std::string& section,
                      const std::string& key) const {
  for (const auto& s : sections_)
    if (s.name == section)
      for (const auto& entry : s.entries)
        if (entry.key == key) return true;
  return false;
}

IniEntry* IniFile::find(const std::string& section, const std::string& key) {
  for (auto& s : sections_)
    if (s.name == section)
      for (auto& entry : s.entries)
        if (entry.key == key) {
          entry.consumed = true;
          return &entry;
        }
  return nullptr;
}

std::string IniFile::get_string(const std::string& section,
                                const std::string& key) {
  IniEntry* entry = find(section, key);
  if (entry == nullptr)
    throw ConfigError("missing key '" + key + "' in [" + section + "]");
  return entry->value;
}

std::string IniFile::get_string_or(const std::string& section,
                                   const std::string& key,
                                   const std::string& fallback) {
  IniEntry* entry = find(section, key);
  return entry == nullptr ? fallback : entry->value;
}

double IniFile::get_double(const std::string& section, const std::string& key) {
  IniEntry* entry = find(section, key);
  if (entry == nullptr)
    throw ConfigError("missing key '" + key + "' in [" + section + "]");
  return parse_double_token(entry->value, "'" + key + "'", entry->line);
}

double IniFile::get_double_or(const std::string& section,
                              const std::string& key, double fallback) {
  IniEntry* entry = find(section, key);
  if (entry == nullptr) return fallback;
  return parse_double_token(entry->value, "'" + key + "'", entry->line);
}

std::int64_t IniFile::get_int(const std::string& section,
                              const std::string& key) {
  IniEntry* entry = find(section, key);
  if (entry == nullptr)
    throw ConfigError("missing key '" + key + "' in [" + section + "]");
  return parse_int_token(entry->value, "'" + key + "'", entry->line);
}

std::int64_t IniFile::get_int_or(const std::string& section,
                                 const std::string& key,
                                 std::int64_t fallback) {
  IniEntry* entry = find(section, key);
  if (entry == nullptr) return fallback;
  return parse_int_token(entry->value, "'" + key + "'", entry->line);
}

Eigen::VectorXd IniFile::get_list(const std::string& section,
                                  const std::string& key) {
  IniEntry* entry = find(section, key);
  if (entry == nullptr)
    throw ConfigError("missing key '" + key + "' in [" + section + "]");
  std::vector<double> values;
  std::string token;
  std::istringstream stream(entry->value);
  while (std::getline(stream, token, ','))
    values.push_back(
        parse_double_token(token, "'" + key + "'", entry->line));
  if (values.empty())
    throw ConfigError("empty list for key '" + key + "'" +
                      line_tag(entry->line));
  return Eigen::Map<Eigen::VectorXd>(values.data(),
                                     static_cast<Eigen::Index>(values.size()));
}

void IniFile::consume_section(const std::string& name) {
  for (auto& section : sections_)
    if (section.name == name)
      for (auto& entry : section.entries) entry.consumed = true;
}

void IniFile::ensure_consumed() const {
  for (const auto& section : sections_)
    for (const auto& entry : section.entries)
      if (!entry.consumed)
        throw ConfigError("unknown key '" + entry.key + "' in [" +
                          section.name + "]" + line_tag(entry.line));
}

Experiment experiment_from_name(const std::string& name) {
  if (name == "validate") return Experiment::Validate;
  if (name == "adiabatic") return Experiment::Adiabatic;
  if (name == "solve-bound") return Experiment::SolveBound;
  if (name == "solve-scatter") return Experiment::SolveScatter;
  if (name == "wkb") return Experiment::Wkb;
  if (name == "trajectory") return Experiment::Trajectory;
  if (name == "propagate") return Experiment::Propagate;
  if (name == "impact") return Experiment::Impact;
  if (name == "dirac") return Experiment::Dirac;
  if (name == "uncertainty") return Experiment::Uncertainty;
  if (name == "mott") return Experiment::Mott;
  if (name == "decoupling") return Experiment::Decoupling;
  if (name == "ladder") return Experiment::Ladder;
  throw ConfigError("unknown experiment kind '" + name + "'");
}

std::string experiment_name(Experiment experiment) {
  switch (experiment) {
    case Experiment::Validate: return "validate";
    case Experiment::Adiabatic: return "adiabatic";
    case Experiment::SolveBound: return "solve-bound";
    case Experiment::SolveScatter: return "solve-scatter";
    case Experiment::Wkb: return "wkb";
    case Experiment::Trajectory: return "trajectory";
    case Experiment::Propagate: return "propagate";
    case Experiment::Impact: return "impact";
    case Experiment::Dirac: return "dirac";
    case Experiment::Uncertainty: return "uncertainty";
    case Experiment::Mott: return "mott";
    case Experiment::Decoupling: return "decoupling";
    case Experiment::Ladder: return "ladder";
  }
  throw ConfigError("unknown experiment kind");
}

namespace {

// [grid] + [system] + [env] + optional [coupling] -> CompositeModel.
CompositeModel parse_model(IniFile* ini) {
  CompositeModel model;
  model.grid.r_min = ini->get_double("grid", "r_min");
  model.grid.r_max = ini->get_double("grid", "r_max");
  model.grid.n_points = ini->get_int("grid", "n_points");
  model.dimension_cap = ini->get_int_or("grid", "cap", model.dimension_cap);

  const bool has_splitting = ini->has_key("system", "splitting");
  const bool has_levels = ini->has_key("system", "levels");
  if (has_splitting == has_levels)
    throw ConfigError(
        "[system] needs exactly one of 'splitting' (two levels) or 'levels' "
        "(explicit energies)");
  if (has_splitting) {
    model.system = SystemSpec::two_level(ini->get_double("system", "splitting"));
  } else {
    model.system = SystemSpec::ladder(ini->get_list("system", "levels"));
  }

  const std::string env_form = ini->get_string("env", "form");
  if (env_form == "free") {
    model.env.form = EnvSpec::Form::Free;
  } else if (env_form == "harmonic") {
    model.env.form = EnvSpec::Form::Harmonic;
    model.env.omega = ini->get_double_or("env", "omega", 1.0);
    model.env.center = ini->get_double_or("env", "center", 0.0);
  } else if (env_form == "gaussian_barrier") {
    model.env.form = EnvSpec::Form::GaussianBarrier;
    model.env.height = ini->get_double("env", "height");
    model.env.width = ini->get_double_or("env", "width", 1.0);
    model.env.center = ini->get_double_or("env", "center", 0.0);
  } else {
    throw ConfigError("unknown [env] form '" + env_form +
                      "' (free, harmonic, gaussian_barrier)");
  }
  model.env.mass = ini->get_double_or("env", "mass", 1.0);
  model.env.offset = ini->get_double_or("env", "offset", 0.0);

  if (ini->has_section("coupling")) {
    const std::string form = ini->get_string("coupling", "form");
    if (form == "none") {
      model.coupling.form = CouplingSpec::Form::None;
    } else if (form == "linear_r" || form == "gaussian") {
      model.coupling.form = form == "linear_r"
                                ? CouplingSpec::Form::LinearR
                                : CouplingSpec::Form::GaussianEnvelope;
      model.coupling.strength = ini->get_double("coupling", "strength");
      model.coupling.center = ini->get_double_or("coupling", "center", 0.0);
      model.coupling.width = ini->get_double_or("coupling", "width", 1.0);
      const std::string pattern =
          ini->get_string_or("coupling", "pattern", "offdiag");
      const Eigen::Index ns = model.n_sys();
      if (pattern == "sigma_x") {
        if (ns != 2)
          throw ConfigError("coupling pattern 'sigma_x' needs two levels");
        model.coupling.pattern = Eigen::MatrixXcd::Zero(2, 2);
        model.coupling.pattern(0, 1) = 1.0;
        model.coupling.pattern(1, 0) = 1.0;
      } else if (pattern == "offdiag") {
        model.coupling.pattern = Eigen::MatrixXcd::Zero(ns, ns);
        for (Eigen::Index i = 0; i + 1 < ns; ++i) {
          model.coupling.pattern(i, i + 1) = 1.0;
          model.coupling.pattern(i + 1, i) = 1.0;
        }
      } else if (pattern == "identity") {
        model.coupling.pattern = Eigen::MatrixXcd::Identity(ns, ns);
      } else {
        throw ConfigError("unknown coupling pattern '" + pattern +
                          "' (sigma_x, offdiag, identity)");
      }
    } else {
      throw ConfigError("unknown [coupling] form '" + form +
                        "' (none, linear_r, gaussian)");
    }
  }
  return model;
}

void parse_dirac(IniFile* ini, RunConfig* config) {
  config->dirac.light_speed = ini->get_double("dirac", "c");
  config->dirac.mass = ini->get_double_or("dirac", "mass", 1.0);
  config->dirac.x_min = ini->get_double("dirac", "x_min");
  config->dirac.x_max = ini->get_double("dirac", "x_max");
  config->dirac.n_points = ini->get_int("dirac", "n_points");
  config->dirac_k_mode = ini->get_int_or("dirac", "k_mode", 1);
  config->dirac_lambda = ini->get_double_or("dirac", "lambda", 0.0);
  config->dirac_q_mode = ini->get_int_or("dirac", "q_mode", 4);
  config->dirac_sigma_r = ini->get_double_or("dirac", "sigma_r", 1.6);
  config->dirac_r_start = ini->get_double_or("dirac", "r_start", -10.0);
  config->dirac_speed = ini->get_double_or("dirac", "speed", 1.0);
  config->dirac_duration = ini->get_double_or("dirac", "duration", 20.0);
  config->dirac_samples = ini->get_int_or("dirac", "samples", 201);
  config->has_dirac = true;
  require_valid(config->dirac);
  if (config->dirac_samples < 2)
    throw ConfigError("[dirac] samples must be at least 2");
  if (config->dirac_duration <= 0.0)
    throw ConfigError("[dirac] duration must be positive");
}

}  // namespace

RunConfig parse_run_config(const std::string& text,
                           const ConfigOverrides& overrides) {
  IniFile ini = IniFile::parse(text);
  RunConfig config;

  std::string config_kind;
  if (ini.has_section("experiment")) {
    config_kind = ini.get_string_or("experiment", "kind", "");
    config.seed = static_cast<std::uint64_t>(
        ini.get_int_or("experiment", "seed", 42));
    config.tol = ini.get_double_or("experiment", "tol", 1e-10);
    config.out_dir = ini.get_string_or("experiment", "out", "out");
  }
  if (overrides.kind.has_value()) {
    config.experiment = experiment_from_name(*overrides.kind);
  } else if (!config_kind.empty()) {
    config.experiment = experiment_from_name(config_kind);
  } else {
    throw ConfigError(
        "no experiment kind: set 'kind' under [experiment] or pass a "
        "subcommand");
  }
  // `validate` checks someone else's config, so parse under the kind the
  // config declares; every other subcommand must win over the config.
  Experiment parse_kind = config.experiment;
  if (config.experiment == Experiment::Validate && !config_kind.empty())
    parse_kind = experiment_from_name(config_kind);
  if (overrides.out_dir.has_value()) config.out_dir = *overrides.out_dir;
  if (overrides.seed.has_value()) config.seed = *overrides.seed;
  if (overrides.tol.has_value()) config.tol = *overrides.tol;
  if (config.tol <= 0.0) throw ConfigError("tolerance must be positive");

  const bool needs_model = parse_kind != Experiment::Dirac;
  if (needs_model) {
    config.model = parse_model(&ini);
    config.has_model = true;
  }

  switch (parse_kind) {
    case Experiment::Validate:
    case Experiment::Adiabatic:
      break;
    case Experiment::SolveBound:
      config.bound_count = ini.get_int_or("bound", "count", 6);
      config.bound_method = ini.get_string_or("bound", "method", "auto");
      if (config.bound_count < 1)
        throw ConfigError("[bound] count must be at least 1");
      if (config.bound_method != "auto" && config.bound_method != "dense" &&
          config.bound_method != "iterative")
        throw ConfigError("unknown [bound] method '" + config.bound_method +
                          "' (auto, dense, iterative)");
      break;
    case Experiment::SolveScatter:
      config.scatter_energy = ini.get_double("scatter", "energy");
      config.scatter_incoming = ini.get_int_or("scatter", "incoming", 0);
      if (config.scatter_incoming < 0 ||
          config.scatter_incoming >= config.model.n_sys())
        throw ConfigError("[scatter] incoming channel out of range");
      break;
    case Experiment::Wkb:
      config.wkb_surface = ini.get_int_or("wkb", "surface", 0);
      config.wkb_state = ini.get_int_or("wkb", "state", 4);
      config.wkb_masses = ini.get_list("wkb", "masses");
      if (config.wkb_masses.size() < 3)
        throw ConfigError("[wkb] masses ladder needs at least 3 rungs");
      for (Eigen::Index i = 0; i < config.wkb_masses.size(); ++i) {
        if (config.wkb_masses(i) <= 0.0)
          throw ConfigError("[wkb] masses must be positive");
        if (i > 0 && config.wkb_masses(i) <= config.wkb_masses(i - 1))
          throw ConfigError("[wkb] masses must increase strictly");
      }
      break;
    case Experiment::Trajectory:
    case Experiment::Propagate: {
      const std::string section =
          parse_kind == Experiment::Trajectory ? "trajectory" : "propagate";
      config.traj_r_start = ini.get_double(section, "r_start");
      config.traj_momentum = ini.get_double(section, "momentum");
      config.traj_duration = ini.get_double(section, "duration");
      config.traj_samples = ini.get_int_or(section, "samples", 201);
      if (parse_kind == Experiment::Propagate)
        config.initial_channel = ini.get_int_or(section, "channel", 0);
      if (config.traj_duration <= 0.0)
        throw ConfigError("[" + section + "] duration must be positive");
      if (config.traj_samples < 2)
        throw ConfigError("[" + section + "] samples must be at least 2");
      if (config.traj_momentum == 0.0)
        throw ConfigError("[" + section + "] momentum must be nonzero");
      if (config.initial_channel < 0 ||
          config.initial_channel >= config.model.n_sys())
        throw ConfigError("[" + section + "] channel out of range");
      break;
    }
    case Experiment::Impact:
      config.beam_momentum = ini.get_double("impact", "momentum");
      config.beam_channel = ini.get_int_or("impact", "channel", 0);
      if (config.beam_momentum <= 0.0)
        throw ConfigError("[impact] momentum must be positive");
      if (config.beam_channel < 0 ||
          config.beam_channel >= config.model.n_sys())
        throw ConfigError("[impact] channel out of range");
      break;
    case Experiment::Dirac:
      parse_dirac(&ini, &config);
      break;
    case Experiment::Uncertainty:
      config.packet_center = ini.get_double_or("packet", "center", 0.0);
      config.packet_width = ini.get_double("packet", "width");
      config.packet_momentum = ini.get_double_or("packet", "momentum", 0.0);
      config.packet_trials = ini.get_int_or("packet", "trials", 0);
      if (config.packet_width <= 0.0)
        throw ConfigError("[packet] width must be positive");
      if (config.packet_trials < 0)
        throw ConfigError("[packet] trials must be nonnegative");
      break;
    case Experiment::Mott:
      config.mott_kinetic = ini.get_list("mott", "kinetic");
      config.beam_channel = ini.get_int_or("mott", "channel", 0);
      if (config.mott_kinetic.size() < 2)
        throw ConfigError("[mott] kinetic ladder needs at least 2 rungs");
      for (Eigen::Index i = 0; i < config.mott_kinetic.size(); ++i) {
        if (config.mott_kinetic(i) <= 0.0)
          throw ConfigError("[mott] kinetic energies must be positive");
        if (i > 0 && config.mott_kinetic(i) <= config.mott_kinetic(i - 1))
          throw ConfigError("[mott] kinetic energies must increase strictly");
      }
      if (config.beam_channel < 0 ||
          config.beam_channel >= config.model.n_sys())
        throw ConfigError("[mott] channel out of range");
      break;
    case Experiment::Decoupling:
      config.decoupling_lambdas = ini.get_list("decoupling", "lambdas");
      config.beam_momentum = ini.get_double("decoupling", "momentum");
      config.beam_channel = ini.get_int_or("decoupling", "channel", 0);
      if (config.beam_momentum <= 0.0)
        throw ConfigError("[decoupling] momentum must be positive");
      if (config.beam_channel < 0 ||
          config.beam_channel >= config.model.n_sys())
        throw ConfigError("[decoupling] channel out of range");
      break;
    case Experiment::Ladder: {
      config.ladder_parameter = ini.get_string("ladder", "parameter");
      config.ladder_values = ini.get_list("ladder", "values");
      if (config.ladder_values.size() < 3)
        throw ConfigError("[ladder] needs at least 3 rungs");
      const std::string& p = config.ladder_parameter;
      if (p == "grid") {
        if (!config.model.coupling.is_zero())
          throw ConfigError(
              "[ladder] parameter 'grid' needs an uncoupled model (the "
              "analytic reference is the bare harmonic spectrum)");
        if (config.model.env.form != EnvSpec::Form::Harmonic)
          throw ConfigError(
              "[ladder] parameter 'grid' needs a harmonic environment");
        for (Eigen::Index i = 0; i < config.ladder_values.size(); ++i)
          if (config.ladder_values(i) < 8.0)
            throw ConfigError("[ladder] grid sizes must be at least 8");
      } else if (p == "mass") {
        config.wkb_surface = ini.get_int_or("wkb", "surface", 0);
        config.wkb_state = ini.get_int_or("wkb", "state", 4);
        for (Eigen::Index i = 0; i < config.ladder_values.size(); ++i)
          if (config.ladder_values(i) <= 0.0)
            throw ConfigError("[ladder] masses must be positive");
      } else if (p == "momentum") {
        config.beam_channel = ini.get_int_or("ladder", "channel", 0);
        for (Eigen::Index i = 0; i < config.ladder_values.size(); ++i)
          if (config.ladder_values(i) <= 0.0)
            throw ConfigError("[ladder] kinetic energies must be positive");
      } else if (p == "tol") {
        config.traj_r_start = ini.get_double("propagate", "r_start");
        config.traj_momentum = ini.get_double("propagate", "momentum");
        config.traj_duration = ini.get_double("propagate", "duration");
        config.traj_samples = ini.get_int_or("propagate", "samples", 201);
        config.initial_channel = ini.get_int_or("propagate", "channel", 0);
        for (Eigen::Index i = 0; i < config.ladder_values.size(); ++i) {
          if (config.ladder_values(i) <= 0.0)
            throw ConfigError("[ladder] tolerances must be positive");
          if (i > 0 && config.ladder_values(i) >= config.ladder_values(i - 1))
            throw ConfigError("[ladder] tolerances must decrease strictly");
        }
      } else {
        throw ConfigError("unknown [ladder] parameter '" + p +
                          "' (grid, mass, momentum, tol)");
      }
      break;
    }
  }

  if (config.has_model) require_valid(config.model);
  ini.ensure_consumed();

  // The hash covers everything that shapes the output bytes: the config
  // text plus the effective kind, seed and tolerance. The output directory
  // only decides where artifacts land and stays out.
  const std::string salt = text + "\n|kind=" + experiment_name(parse_kind) +
                           "|seed=" + std::to_string(config.seed) +
                           "|tol=" + format_full(config.tol);
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(salt)));
  config.config_hash = hex;
  return config;
}

RunConfig load_run_config(const std::string& path,
                          const ConfigOverrides& overrides) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return parse_run_config(buffer.str(), overrides);
}

}  // namespace emt
