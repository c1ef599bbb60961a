#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "emtime/config.hpp"
#include "emtime/csv.hpp"
#include "emtime/experiments.hpp"
#include "emtime/numeric.hpp"

using namespace emt;

namespace {

std::string parse_failure(const std::string& text,
                          const ConfigOverrides& overrides = {}) {
  try {
    parse_run_config(text, overrides);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

bool mentions(const std::string& message, const std::string& needle) {
  return message.find(needle) != std::string::npos;
}

const std::string kBoundConfig =
    "[experiment]\n"
    "kind = solve-bound\n"
    "\n"
    "[grid]\n"
    "r_min = -10\n"
    "r_max = 10\n"
    "n_points = 201\n"
    "\n"
    "[system]\n"
    "splitting = 1.0\n"
    "\n"
    "[env]\n"
    "form = harmonic\n"
    "\n"
    "[bound]\n"
    "count = 4\n";

std::filesystem::path scratch_dir(const std::string& leaf) {
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / ("emtime_cli_" + leaf);
  std::filesystem::remove_all(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  REQUIRE(static_cast<bool>(file));
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return buffer.str();
}

}  // namespace

/* [syntax errors carry line numbers]
   Strict INI: every malformed construct is rejected with the offending line,
   so a typo cannot silently fall back to a default. */
TEST_CASE("ini parser rejects malformed input with line numbers") {
  const auto fails_with = [](const std::string& text,
                             const std::string& needle) {
    try {
      IniFile::parse(text);
    } catch (const ConfigError& e) {
      CHECK_MESSAGE(mentions(e.what(), needle), e.what());
      return;
    }
    FAIL_CHECK("no error for: " << text);
  };

  fails_with("key = 1\n", "before any [section] (line 1)");
  fails_with("[grid\nr_min = 0\n", "malformed section header");
  fails_with("[]\n", "empty section name (line 1)");
  fails_with("[s]\njust words\n", "expected 'key = value'");
  fails_with("[s]\n= 3\n", "empty key (line 2)");
  fails_with("[s]\nk =\n", "empty value for key 'k' (line 2)");
  fails_with("[s]\nk = 1\nk = 2\n", "duplicate key 'k' in [s] (line 3)");
  fails_with("[s]\nk = 1\n[s]\nk = 2\n", "duplicate section [s] (line 3)");
  fails_with("[s]\n", "empty section [s]");

  // Comments, blank lines, and CRLF endings are all tolerated.
  IniFile ini = IniFile::parse(
      "# leading comment\r\n[s]\r\n; another\nk = 1\n\nj = 2.5, -3\n");
  CHECK(ini.get_int("s", "k") == 1);
  REQUIRE(ini.get_list("s", "j").size() == 2);
  CHECK(ini.get_list("s", "j")(1) == -3.0);
}

/* [no silent defaults for misspellings]
   A key the experiment never reads is an error naming the key and its line,
   not a silently ignored setting. */
TEST_CASE("unknown keys are rejected by name and line") {
  const std::string text =
      "[experiment]\n"       // 1
      "kind = solve-bound\n"  // 2
      "\n"                    // 3
      "[grid]\n"              // 4
      "r_min = -5\n"          // 5
      "r_max = 5\n"           // 6
      "n_points = 101\n"      // 7
      "\n"                    // 8
      "[system]\n"            // 9
      "splitting = 1.0\n"     // 10
      "\n"                    // 11
      "[env]\n"               // 12
      "form = harmonic\n"     // 13
      "masss = 1\n";          // 14
  const std::string message = parse_failure(text);
  CHECK_MESSAGE(mentions(message, "unknown key 'masss' in [env] (line 14)"),
                message);

  // A whole section the experiment never reads is equally fatal.
  const std::string extra = kBoundConfig + "\n[beam]\nmomentum = 3\n";
  CHECK(mentions(parse_failure(extra), "unknown key 'momentum' in [beam]"));

  // The same config parsed under a different subcommand consumes different
  // sections, so leftovers are judged against the subcommand that runs.
  ConfigOverrides as_mott;
  as_mott.kind = "mott";
  CHECK(mentions(parse_failure(kBoundConfig, as_mott), "[mott]"));
}

/* [defaults, declared values, and overrides]
   Missing optional keys fall back to documented defaults; command-line
   overrides beat config keys and are folded into the config hash. */
TEST_CASE("defaults and overrides land in the run config") {
  const RunConfig base = parse_run_config(kBoundConfig);
  CHECK(base.experiment == Experiment::SolveBound);
  CHECK(base.seed == 42);
  CHECK(base.tol == 1e-10);
  CHECK(base.out_dir == "out");
  CHECK(base.bound_count == 4);
  CHECK(base.bound_method == "auto");
  CHECK(base.has_model);
  CHECK(base.model.grid.n_points == 201);
  CHECK(base.model.n_sys() == 2);
  REQUIRE(base.config_hash.size() == 16);
  CHECK(base.config_hash.find_first_not_of("0123456789abcdef") ==
        std::string::npos);

  // Identical text, identical hash.
  CHECK(parse_run_config(kBoundConfig).config_hash == base.config_hash);

  ConfigOverrides overrides;
  overrides.seed = 7;
  overrides.tol = 1e-8;
  const RunConfig tweaked = parse_run_config(kBoundConfig, overrides);
  CHECK(tweaked.seed == 7);
  CHECK(tweaked.tol == 1e-8);
  CHECK(tweaked.config_hash != base.config_hash);

  // The output directory decides where artifacts land, never their bytes,
  // so redirecting it leaves the hash alone.
  ConfigOverrides rehomed;
  rehomed.out_dir = "elsewhere";
  const RunConfig moved = parse_run_config(kBoundConfig, rehomed);
  CHECK(moved.out_dir == "elsewhere");
  CHECK(moved.config_hash == base.config_hash);

  // A config with no [experiment] section works once a subcommand names the
  // kind; with no kind from either side the parse fails.
  const std::string headless =
      kBoundConfig.substr(kBoundConfig.find("[grid]"));
  ConfigOverrides as_bound;
  as_bound.kind = "solve-bound";
  CHECK(parse_run_config(headless, as_bound).experiment ==
        Experiment::SolveBound);
  CHECK(mentions(parse_failure(headless), "no experiment kind"));
  CHECK(mentions(parse_failure("[experiment]\nkind = warp\n"),
                 "unknown experiment kind 'warp'"));
  ConfigOverrides bad_tol;
  bad_tol.tol = -1.0;
  CHECK(mentions(parse_failure(kBoundConfig, bad_tol),
                 "tolerance must be positive"));
}

/* [validate checks someone else's config]
   The validate subcommand parses under the kind the config declares, so a
   beam config passes validation with its [mott] section consumed; every
   other subcommand wins over the declared kind. */
TEST_CASE("validate parses under the declared kind") {
  ConfigOverrides as_validate;
  as_validate.kind = "validate";
  const RunConfig checked = parse_run_config(kBoundConfig, as_validate);
  CHECK(checked.experiment == Experiment::Validate);
  CHECK(checked.bound_count == 4);
  // Hash matches the run the config describes, not the validate pass.
  CHECK(checked.config_hash == parse_run_config(kBoundConfig).config_hash);

  // Without a declared kind, validate has nothing to parse [bound] against.
  const std::string headless =
      kBoundConfig.substr(kBoundConfig.find("[grid]"));
  CHECK(mentions(parse_failure(headless, as_validate), "[bound]"));
}

/* [ladder lists]
   Comma-separated values parse into ordered ladders with per-experiment
   sanity rules. */
TEST_CASE("list keys parse into ladders") {
  const std::string mott_text =
      "[experiment]\n"
      "kind = mott\n"
      "[grid]\n"
      "r_min = -10\n"
      "r_max = 10\n"
      "n_points = 201\n"
      "[system]\n"
      "splitting = 1.0\n"
      "[env]\n"
      "form = free\n"
      "[coupling]\n"
      "form = gaussian\n"
      "strength = 0.1\n"
      "pattern = sigma_x\n"
      "[mott]\n"
      "kinetic = 25, 100, 400, 1600\n";
  const RunConfig config = parse_run_config(mott_text);
  REQUIRE(config.mott_kinetic.size() == 4);
  CHECK(config.mott_kinetic(0) == 25.0);
  CHECK(config.mott_kinetic(3) == 1600.0);

  const std::string shuffled = [&] {
    std::string t = mott_text;
    return t.replace(t.find("25, 100, 400, 1600"), 18, "25, 400, 100, 1600");
  }();
  CHECK(mentions(parse_failure(shuffled), "increase strictly"));

  const std::string short_ladder = [&] {
    std::string t = mott_text;
    return t.replace(t.find("25, 100, 400, 1600"), 18, "25");
  }();
  CHECK(mentions(parse_failure(short_ladder), "at least 2 rungs"));
}

/* [csv assembly]
   Tables render with a header row, comma delimiters, newline rows, and
   full-precision numbers. */
TEST_CASE("csv tables render full precision text") {
  CsvTable table({"a", "b"});
  table.add_row({0.0, 0.5});
  table.add_row({1.0 / 3.0, 1e-300});
  CHECK(table.str() == "a,b\n0,0.5\n0.33333333333333331,1e-300\n");

  CHECK_THROWS_AS(CsvTable(std::vector<std::string>{}), std::invalid_argument);
  CHECK_THROWS_AS(table.add_row({1.0}), std::invalid_argument);

  const std::filesystem::path dir = scratch_dir("csv");
  write_file((dir / "nested" / "t.csv").string(), table.str());
  CHECK(slurp(dir / "nested" / "t.csv") == table.str());
  std::filesystem::remove_all(dir);
}

/* [deterministic artifacts]
   The same config run twice produces byte-identical tables: the manifest
   checksums agree file by file and only wall-clock timings may differ. */
TEST_CASE("experiments write deterministic artifacts") {
  const std::filesystem::path dir = scratch_dir("bound");
  ConfigOverrides overrides;
  overrides.out_dir = dir.string();
  const RunConfig config = parse_run_config(kBoundConfig, overrides);

  const RunManifest first = run_experiment(config);
  CHECK(first.config_hash == config.config_hash);
  REQUIRE(first.checksums.size() == 2);
  CHECK(first.checksums[0].first == "energies.csv");
  CHECK(first.checksums[1].first == "summary.txt");
  CHECK(std::filesystem::exists(dir / "energies.csv"));
  CHECK(std::filesystem::exists(dir / "manifest.json"));

  const std::string table = slurp(dir / "energies.csv");
  CHECK(table.rfind("index,energy,residual\n", 0) == 0);
  const std::string summary = slurp(dir / "summary.txt");
  CHECK(mentions(summary, "[PASS] eigenpair residuals within contract"));
  CHECK(mentions(summary, "config hash: " + config.config_hash));

  const RunManifest second = run_experiment(config);
  REQUIRE(second.checksums.size() == first.checksums.size());
  for (std::size_t i = 0; i < first.checksums.size(); ++i) {
    CHECK(second.checksums[i].first == first.checksums[i].first);
    CHECK(second.checksums[i].second == first.checksums[i].second);
  }
  std::filesystem::remove_all(dir);
}

/* [pipeline smoke]
   A fast end-to-end pass over two more experiment kinds: the trajectory
   table and the packet uncertainty report with random trials. */
TEST_CASE("trajectory and uncertainty pipelines write their tables") {
  const std::filesystem::path traj_dir = scratch_dir("traj");
  const std::string traj_text =
      "[experiment]\n"
      "kind = trajectory\n"
      "[grid]\n"
      "r_min = -10\n"
      "r_max = 10\n"
      "n_points = 201\n"
      "[system]\n"
      "splitting = 1.0\n"
      "[env]\n"
      "form = harmonic\n"
      "[trajectory]\n"
      "r_start = -2\n"
      "momentum = 1.5\n"
      "duration = 6.0\n"
      "samples = 41\n";
  ConfigOverrides traj_overrides;
  traj_overrides.out_dir = traj_dir.string();
  run_experiment(parse_run_config(traj_text, traj_overrides));
  const std::string table = slurp(traj_dir / "trajectory.csv");
  CHECK(table.rfind("t,r,p\n", 0) == 0);
  // Header plus one row per sample.
  CHECK(std::count(table.begin(), table.end(), '\n') == 42);
  CHECK(mentions(slurp(traj_dir / "summary.txt"),
                 "[PASS] energy conserved along the flow"));
  std::filesystem::remove_all(traj_dir);

  const std::filesystem::path pack_dir = scratch_dir("packet");
  const std::string packet_text =
      "[experiment]\n"
      "kind = uncertainty\n"
      "[grid]\n"
      "r_min = -20\n"
      "r_max = 20\n"
      "n_points = 401\n"
      "[system]\n"
      "splitting = 1.0\n"
      "[env]\n"
      "form = free\n"
      "[packet]\n"
      "center = -3\n"
      "width = 2\n"
      "momentum = 4\n"
      "trials = 5\n";
  ConfigOverrides pack_overrides;
  pack_overrides.out_dir = pack_dir.string();
  pack_overrides.seed = 11;
  const RunManifest manifest =
      run_experiment(parse_run_config(packet_text, pack_overrides));
  CHECK(manifest.checksums.size() == 3);
  const std::string trials = slurp(pack_dir / "trials.csv");
  CHECK(trials.rfind("trial,dh_env,dr,mean_p_over_m,slack\n", 0) == 0);
  CHECK(std::count(trials.begin(), trials.end(), '\n') == 6);
  CHECK(mentions(slurp(pack_dir / "summary.txt"),
                 "[PASS] commutator bound respected across 5 random packets"));
  std::filesystem::remove_all(pack_dir);
}
