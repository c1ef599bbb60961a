#pragma once

// Experiment orchestration: run_experiment executes the configured pipeline,
// writes its CSV tables plus a plain-text summary (summary.txt) and a
// manifest (manifest.json) into the output directory, and returns the
// manifest. Every pipeline is single threaded and deterministic for a fixed
// config and seed, so reruns produce byte-identical CSVs; the manifest's
// wall-clock figures are the only content allowed to differ between reruns.

#include <string>
#include <utility>
#include <vector>

#include "emtime/config.hpp"

namespace emt {

inline constexpr const char* kArtifactVersion = "1.0.0";

struct RunManifest {
  std::string config_hash;
  std::string version = kArtifactVersion;
  // Output file name -> FNV-1a 64 checksum (hex) of the written bytes, in
  // write order. Covers every CSV and the summary, not the manifest itself.
  std::vector<std::pair<std::string, std::string>> checksums;
  // Stage name -> wall-clock seconds.
  std::vector<std::pair<std::string, double>> timings;
};

// Throws ConfigError for configuration-level failures and NumericError (or
// the underlying module error) for numerical ones, prefixed with the
// experiment name.
RunManifest run_experiment(const RunConfig& config);

// One rung of the semiclassical mass ladder: the environment mass replaces
// model.env.mass while the potential shape stays frozen (a harmonic
// frequency is rescaled as omega ~ 1/sqrt(M)), the eigenstate closest to the
// base rung's target energy is Richardson extrapolated from a coarse/fine
// grid pair, and the error is the scale-fitted residual against the
// primitive semiclassical standing wave, tapered to the classically allowed
// region.
struct WkbRung {
  double mass = 0.0;
  double energy = 0.0;
  double error = 0.0;
};

std::vector<WkbRung> wkb_mass_ladder(const CompositeModel& model,
                                     Eigen::Index surface, Eigen::Index state,
                                     const Eigen::VectorXd& masses);

// One matched-energy collision per beam kinetic energy: the driven
// time-dependent run provides emergent channel populations, the stationary
// solve at the same total energy provides |S|^2, and the rung records their
// relative disagreement on the transfer probability out of the entry
// channel.
struct MottRung {
  double kinetic = 0.0;
  double momentum = 0.0;
  double kinetic_to_spacing = 0.0;
  double transfer_exact = 0.0;
  double transfer_emergent = 0.0;
  double abs_diff = 0.0;
  double rel_diff = 0.0;
  double asymmetry = 0.0;
  bool asymmetry_ok = true;
};

std::vector<MottRung> mott_momentum_ladder(const CompositeModel& model,
                                           const Eigen::VectorXd& kinetic,
                                           Eigen::Index channel,
                                           double tol = 1e-10);

}  // namespace emt
