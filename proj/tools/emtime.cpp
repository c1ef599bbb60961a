#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "emtime/config.hpp"
#include "emtime/experiments.hpp"
#include "emtime/numeric.hpp"

namespace {

const std::vector<std::pair<std::string, std::string>> kSubcommands = {
    {"validate", "parse a config and report model diagnostics"},
    {"adiabatic", "level surfaces and derivative couplings"},
    {"solve-bound", "lowest composite eigenpairs"},
    {"solve-scatter", "stationary scattering at fixed total energy"},
    {"wkb", "semiclassical mass ladder against exact eigenstates"},
    {"trajectory", "classical flow on the effective potential"},
    {"propagate", "system amplitudes along a classical clock"},
    {"impact", "matched-energy beam collision"},
    {"dirac", "relativistic pulse driven by a classical clock"},
    {"uncertainty", "time-energy bound on wave packets"},
    {"mott", "beam collision against the stationary solve"},
    {"decoupling", "time resolution as the coupling is switched off"},
    {"ladder", "convergence ladder over a chosen parameter"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"numerical laboratory for time emerging from entanglement"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  long long seed = 0;
  double tol = 0.0;
  for (const auto& [name, description] : kSubcommands) {
    CLI::App* sub = app.add_subcommand(name, description);
    sub->add_option("--config", config_path, "INI config file")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--tol", tol, "propagation tolerance");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    const CLI::App* sub = app.get_subcommands().front();
    emt::ConfigOverrides overrides;
    overrides.kind = sub->get_name();
    if (sub->count("--out") > 0) overrides.out_dir = out_dir;
    if (sub->count("--seed") > 0)
      overrides.seed = static_cast<std::uint64_t>(seed);
    if (sub->count("--tol") > 0) overrides.tol = tol;

    const emt::RunConfig config = emt::load_run_config(config_path, overrides);
    const emt::RunManifest manifest = emt::run_experiment(config);

    std::ifstream summary(config.out_dir + "/summary.txt");
    std::cout << summary.rdbuf();
    for (const auto& [name, hash] : manifest.checksums)
      std::cout << "wrote " << config.out_dir << "/" << name << " (" << hash
                << ")\n";
    std::cout << "wrote " << config.out_dir << "/manifest.json\n";
    return 0;
  } catch (const emt::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const emt::NumericError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  }
}
