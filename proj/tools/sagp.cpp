#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sagp/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Spatially aggregated Gaussian processes: fit, refine, cross-validate, synthesize, predict."};
  app.set_version_flag("--version", "sagp 0.1.0");

  std::string config_path;
  std::optional<std::string> task;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> jitter;
  bool dump = false;

  app.add_option("config", config_path, "Run configuration (INI)")->required()->check(CLI::ExistingFile);
  app.add_option("--task", task, "Override [run] task")
      ->check(CLI::IsMember({"fit", "refine", "cv", "synth", "predict"}));
  app.add_option("--seed", seed, "Override [run] seed");
  app.add_option("--out", out, "Override the output directory");
  app.add_option("--jitter", jitter, "Override [model] jitter")->check(CLI::NonNegativeNumber);
  app.add_flag("--dump-moments", dump, "Write mu and C of every domain as CSV after fitting");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : sagp::cli::kInputError;
  }

  sagp::cli::Overrides overrides;
  overrides.task = task;
  overrides.seed = seed;
  if (out) overrides.out = *out;
  overrides.jitter = jitter;
  overrides.dump_moments = dump;
  return sagp::cli::run_file(config_path, overrides, std::cout, std::cerr);
}
