#include <iostream>

#include "CLI11.hpp"
#include "ucfl/commands.hpp"

int main(int argc, char** argv) {
  using namespace ucfl::cli;
  CLI::App app{"User-centric federated learning simulator"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  CommandOptions opts;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    auto* cfg = sub->add_option("--config", opts.config_path, "Run configuration (JSON)");
    auto* pre = sub->add_option("--preset", opts.preset, "Built-in preset name");
    cfg->excludes(pre);
    sub->add_option("--out", opts.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--seed-override", seed, "Replace every seed in the config, derived from one integer");
  };

  auto* run = app.add_subcommand("run", "Train under the configured rule and write metrics");
  add_common(run);
  run->add_option("--streams", opts.streams, "Number of personalized streams m_t, or 'auto'");

  auto* sim = app.add_subcommand("similarity", "Run only the similarity round and report W");
  add_common(sim);

  auto* timing = app.add_subcommand("timing", "Convert a metrics file into accuracy-vs-time curves");
  add_common(timing);
  timing->add_option("--metrics", opts.metrics_path, "metrics.csv from a previous run")->required();
  timing->add_option("--streams", opts.streams, "Override m_t");

  auto* bound = app.add_subcommand("validate-bound", "Monte Carlo check of the risk bound");
  add_common(bound);

  auto* presets = app.add_subcommand("presets", "Inspect built-in presets");
  presets->require_subcommand(1);
  presets->add_subcommand("list", "Print preset names");
  std::string show_name;
  auto* show = presets->add_subcommand("show", "Print a preset as JSON");
  show->add_option("name", show_name)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInvalidConfig;
  }

  for (auto* sub : {run, sim, timing, bound})
    if (sub->parsed() && sub->count("--seed-override")) opts.seed_override = seed;

  if (run->parsed()) return cmd_run(opts, std::cerr);
  if (sim->parsed()) return cmd_similarity(opts, std::cerr);
  if (timing->parsed()) return cmd_timing(opts, std::cerr);
  if (bound->parsed()) return cmd_validate_bound(opts, std::cerr);
  if (show->parsed()) return cmd_presets_show(show_name, std::cout, std::cerr);
  return cmd_presets_list(std::cout);
}
