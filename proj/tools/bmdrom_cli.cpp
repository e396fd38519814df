#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "bmdrom/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kNumerical = 3, kMissing = 4 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grid LPV reduced-order modelling pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir;
  std::string plant_path;
  int jobs = 1;
  std::uint64_t seed = 0;
  bool quiet = false;
  app.add_option("--config", config_path, "experiment config (JSON)");
  app.add_option("--out", out_dir, "output directory (overrides the config)");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides the config)");
  app.add_option("--plant", plant_path, "load the plant from this archive");
  app.add_flag("--quiet", quiet, "no progress lines");

  const char* names[] = {"generate", "fit", "eval", "mpc", "report", "all"};
  for (const char* n : names) app.add_subcommand(n, std::string("run ") + n);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    bmdrom::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = bmdrom::load_config(config_path);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (*seed_opt) cfg.seed = seed;
    if (!plant_path.empty()) cfg.plant_file = plant_path;
    bmdrom::validate(cfg);
    bmdrom::RunOptions opt{jobs, quiet};

    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "generate" || cmd == "all") bmdrom::cmd_generate(cfg, opt);
    if (cmd == "fit" || cmd == "all") bmdrom::cmd_fit(cfg, opt);
    if (cmd == "eval" || cmd == "all") bmdrom::cmd_eval(cfg, opt);
    if (cmd == "mpc" || cmd == "all") bmdrom::cmd_mpc(cfg, opt);
    if (cmd == "report" || cmd == "all") bmdrom::cmd_report(cfg, opt);
  } catch (const bmdrom::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const bmdrom::MissingPrerequisite& e) {
    std::fprintf(stderr, "missing prerequisite: %s\n", e.what());
    return kMissing;
  } catch (const bmdrom::NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kOk;
}
