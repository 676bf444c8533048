#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sagp/error.hpp"
#include "sagp/geometry.hpp"
#include "sagp/io.hpp"
#include "sagp/model.hpp"

namespace sagp::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kInputError = 2, kOptimizerFailure = 3, kGridMismatch = 4 };

int exit_code(ErrorKind kind);

struct DomainConfig {
  std::string domain_id;
  GridSpec grid;
  fs::path membership;
  std::vector<std::pair<std::string, fs::path>> polygons;  // dataset id, polygon CSV
  DatasetSchemes schemes;
  bool snap_to_nearest = false;
};

struct TargetConfig {
  std::string task_id = "refine";
  std::string domain_id;
  std::string dataset_id;
  fs::path membership;  // fine partition, rows for dataset_id only
  fs::path polygons;
  AggregationScheme scheme = AggregationScheme::Average;
  fs::path truth;  // observations CSV of the fine regions, optional
  bool baselines = false;
};

struct SynthConfig {
  std::string scenario = "refinement";  // refinement | transfer
  int L = 2;
  bool share_weights = false;
};

/// One run, read from an INI file. Relative paths resolve against the
/// config file's directory.
struct RunConfig {
  fs::path source;
  std::string text;  // verbatim config
  std::string task;  // fit | refine | cv | synth | predict
  std::uint64_t seed = 0;
  fs::path out = "out";
  fs::path model_dir;
  bool dump_moments = false;
  bool heatmaps = false;

  fs::path observations;
  std::vector<DomainConfig> domains;
  ModelConfig model;
  std::vector<int> candidates;
  std::optional<TargetConfig> target;
  SynthConfig synth;

  /// Hash of the config text and every override applied to it.
  std::string hash() const;
};

/// Throws ParseError with the file and key on malformed input.
RunConfig parse_run_config(const std::string& text, const fs::path& base_dir, const fs::path& source = {});
RunConfig load_run_config(const fs::path& path);

struct Overrides {
  std::optional<std::string> task;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
  std::optional<double> jitter;
  bool dump_moments = false;
};

void apply(RunConfig& config, const Overrides& overrides);

/// Reads every domain named in the config.
std::vector<DomainData> load_domains(const RunConfig& config);

int cmd_fit(const RunConfig& config, std::ostream& log);
int cmd_refine(const RunConfig& config, std::ostream& log);
int cmd_cv(const RunConfig& config, std::ostream& log);
int cmd_synth(const RunConfig& config, std::ostream& log);
int cmd_predict(const RunConfig& config, std::ostream& log);

/// Dispatches on config.task and maps errors to exit codes; messages go to
/// `err`.
int run(const RunConfig& config, std::ostream& log, std::ostream& err);

/// Loads, applies overrides and runs; parse failures exit with kInputError.
int run_file(const fs::path& config_path, const Overrides& overrides, std::ostream& log, std::ostream& err);

}  // namespace sagp::cli
