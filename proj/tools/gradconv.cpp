#include "gradconv/acceptance.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"gradient uniform convergence experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir, model;
  std::optional<int> d, trials, draws;
  std::optional<double> delta;
  std::vector<int> only;
  bool timing = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "flat key = value config file");
    sub->add_option("--seed", seed, "root seed");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--model", model, "glm, rr or relu")->check(CLI::IsMember({"glm", "rr", "relu"}));
    sub->add_option("--d", d, "dimension");
    sub->add_option("--trials", trials, "trials per grid point");
    sub->add_option("--delta", delta, "confidence parameter");
    sub->add_option("--draws", draws, "Monte-Carlo draws");
    sub->add_flag("--timing", timing, "record wall-clock times");
  };
  for (const char* name : {"rates", "rademacher", "gd-check", "lower-bound", "margin"})
    add_common(app.add_subcommand(name, std::string(name) + " experiment"));
  auto* verify = app.add_subcommand("verify", "run every acceptance check");
  add_common(verify);
  verify->add_option("--only", only, "criterion ids to run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : gradconv::kExitUsage;
  }

  gradconv::ExperimentConfig cfg;
  try {
    if (!config_path.empty()) gradconv::load_config_file(config_path, cfg);
    cfg.command = app.get_subcommands().front()->get_name();
    if (seed) cfg.seed = *seed;
    if (out_dir) cfg.out = *out_dir;
    if (model) cfg.model = *model;
    if (d) cfg.d = *d;
    if (trials) cfg.trials = *trials;
    if (delta) cfg.delta = *delta;
    if (draws) cfg.mc_draws = *draws;
    if (timing) cfg.timing = true;
    gradconv::validate(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return gradconv::kExitUsage;
  }

  try {
    if (cfg.command == "verify") return gradconv::run_verify(cfg, std::cout, only);
    return gradconv::run_command(cfg, std::cout);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return gradconv::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return gradconv::kExitViolation;
  }
}
