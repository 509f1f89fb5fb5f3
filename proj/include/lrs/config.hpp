#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lrs/adapt.hpp"
#include "lrs/datagen.hpp"
#include "lrs/model.hpp"
#include "lrs/solver_rank1.hpp"

namespace lrs {

/// Which fit a sweep point runs.
enum class SweepMode { fit, fit_dp, fit_rank1 };

struct SweepSpec {
  /// One of: epsilon, k, sparsity (percent of d, sets k), sigma, m, t, r.
  std::string param;
  std::vector<double> values;
  SweepMode mode = SweepMode::fit;
  /// Fresh test samples per task used for the reported RMSE.
  int test_m = 100;
};

/// Everything one experiment needs, loadable from a JSON document.
///
/// Top-level keys: name, output_dir, seeds, baselines, gen, solver, privacy,
/// rank1, adapt, sweep. Each section takes the field names of the matching
/// struct; enums are strings ("exact"/"capped", "gaussian"/"ones",
/// "reuse"/"split", "fit"/"fit-dp"/"fit-rank1"). Unknown keys are errors.
struct ExperimentConfig {
  std::string name = "experiment";
  std::filesystem::path output_dir = "out";
  std::vector<std::uint64_t> seeds{0};
  bool baselines = false;
  GenConfig gen;
  SolverConfig solver;
  PrivacyConfig privacy;
  /// Clip levels given explicitly in the file (otherwise estimated from data).
  bool clips_given = false;
  /// sigma_dp given explicitly (otherwise derived from epsilon and delta).
  bool sigma_dp_given = false;
  Rank1Config rank1;
  AdaptConfig adapt;
  std::optional<SweepSpec> sweep;

  /// Runs every sub-config check; throws ConfigError naming the invariant.
  void validate() const;
};

/// Parses a config document. Syntax errors and bad fields are reported as
/// ConfigError with "name:line:column" when the location is known.
ExperimentConfig parse_config(const std::string& text, const std::string& name = "config");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Serializes every field; parse_config(config_to_json(c)) reproduces c.
std::string config_to_json(const ExperimentConfig& cfg);

/// Throws ConfigError unless dir can be created and written to.
void ensure_writable_dir(const std::filesystem::path& dir);

} // namespace lrs
