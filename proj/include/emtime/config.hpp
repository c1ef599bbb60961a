#pragma once

// Experiment configuration: a strict INI dialect ([section] headers,
// key = value lines, full-line # or ; comments) parsed into a RunConfig.
// Strict means no silent tolerance: duplicate sections or keys, keys outside
// a section, and keys no experiment consumes are all errors with the
// offending line number, so a misspelled key can never fall back to a
// default unnoticed.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emtime/model.hpp"
#include "emtime/relativistic.hpp"

namespace emt {

struct IniEntry {
  std::string key;
  std::string value;
  int line = 0;
  bool consumed = false;
};

struct IniSection {
  std::string name;
  int line = 0;
  std::vector<IniEntry> entries;
};

// Parsed INI text with consumption tracking. Lookups mark entries consumed;
// ensure_consumed() then rejects every key nothing asked for.
class IniFile {
 public:
  static IniFile parse(const std::string& text);

  bool has_section(const std::string& name) const;
  bool has_key(const std::string& section, const std::string& key) const;

  // Typed lookups. The plain forms throw ConfigError when section or key is
  // missing; the *_or forms return the fallback instead.
  std::string get_string(const std::string& section, const std::string& key);
  std::string get_string_or(const std::string& section, const std::string& key,
                            const std::string& fallback);
  double get_double(const std::string& section, const std::string& key);
  double get_double_or(const std::string& section, const std::string& key,
                       double fallback);
  std::int64_t get_int(const std::string& section, const std::string& key);
  std::int64_t get_int_or(const std::string& section, const std::string& key,
                          std::int64_t fallback);
  // Comma-separated list of doubles.
  Eigen::VectorXd get_list(const std::string& section, const std::string& key);

  // Marks a whole section consumed without reading it (used by `validate`).
  void consume_section(const std::string& name);

  // Throws ConfigError naming the first unconsumed key and its line.
  void ensure_consumed() const;

 private:
  IniEntry* find(const std::string& section, const std::string& key);
  std::vector<IniSection> sections_;
};

enum class Experiment {
  Validate,
  Adiabatic,
  SolveBound,
  SolveScatter,
  Wkb,
  Trajectory,
  Propagate,
  Impact,
  Dirac,
  Uncertainty,
  Mott,
  Decoupling,
  Ladder,
};

// Subcommand spelling ("solve-bound", "mott", ...). Unknown names throw
// ConfigError.
Experiment experiment_from_name(const std::string& name);
std::string experiment_name(Experiment experiment);

// Everything run_experiment needs. Fields are only meaningful for the
// experiment that reads them; parsing fills exactly the sections the
// selected experiment consumes and rejects the rest.
struct RunConfig {
  Experiment experiment = Experiment::Validate;
  std::string out_dir = "out";
  std::uint64_t seed = 42;
  double tol = 1e-10;

  CompositeModel model;  // [grid], [system], [env], [coupling]
  bool has_model = false;

  // solve-bound
  Eigen::Index bound_count = 6;
  std::string bound_method = "auto";  // auto | dense | iterative

  // solve-scatter
  double scatter_energy = 0.0;
  Eigen::Index scatter_incoming = 0;

  // wkb mass ladder
  Eigen::Index wkb_surface = 0;
  Eigen::Index wkb_state = 4;
  Eigen::VectorXd wkb_masses;

  // trajectory / propagate
  double traj_r_start = 0.0;
  double traj_momentum = 0.0;
  double traj_duration = 0.0;
  Eigen::Index traj_samples = 201;
  Eigen::Index initial_channel = 0;

  // impact / mott / decoupling beam
  double beam_momentum = 0.0;
  Eigen::Index beam_channel = 0;
  Eigen::VectorXd mott_kinetic;    // kinetic energy rungs
  Eigen::VectorXd decoupling_lambdas;

  // uncertainty packet
  double packet_center = 0.0;
  double packet_width = 1.0;
  double packet_momentum = 0.0;
  Eigen::Index packet_trials = 0;

  // dirac
  DiracSpec dirac;
  bool has_dirac = false;
  double dirac_lambda = 0.0;
  Eigen::Index dirac_q_mode = 4;
  Eigen::Index dirac_k_mode = 1;
  double dirac_sigma_r = 1.6;
  double dirac_r_start = -10.0;
  double dirac_speed = 1.0;
  double dirac_duration = 20.0;
  Eigen::Index dirac_samples = 201;

  // generic ladder
  std::string ladder_parameter;  // grid | mass | momentum | tol
  Eigen::VectorXd ladder_values;

  // FNV-1a hash of the config text and the applied overrides; two runs with
  // equal hashes must produce byte-identical CSV outputs.
  std::string config_hash;
};

// Command-line values that take precedence over their config counterparts.
struct ConfigOverrides {
  std::optional<std::string> kind;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
};

// Parses config text, applies overrides, validates per-experiment inputs,
// and rejects unconsumed keys. Throws ConfigError on any violation.
RunConfig parse_run_config(const std::string& text,
                           const ConfigOverrides& overrides = {});

// parse_run_config on the contents of a file; the file must exist.
RunConfig load_run_config(const std::string& path,
                          const ConfigOverrides& overrides = {});

}  // namespace emt
