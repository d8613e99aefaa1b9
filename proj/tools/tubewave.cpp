#include <iostream>

#include <CLI11.hpp>

#include "tubewave/cli.hpp"

int main(int argc, char** argv) {
  using namespace tubewave;
  CLI::App app{"Wave dynamics in inflated hyperelastic tubes"};
  app.require_subcommand(1);
  std::string config_path;
  cli::Options opt;
  std::string out = "out";
  app.add_option("--config", config_path, "key = value configuration file");
  app.add_option("--out", out, "output directory");
  app.add_option("--snapshot-every", opt.snapshot_every, "write a snapshot every n samples (0: first only)");
  app.add_flag("--quiet", opt.quiet, "suppress progress output");
  const std::pair<const char*, const char*> commands[] = {
      {"dispersion", "branch table of a uniform state"},
      {"equilibrium", "equilibrium stretches at fixed pressure"},
      {"run", "time-dependent experiment"},
      {"kink-search", "bisection for the standing kink"},
      {"profile", "standing solitary wave or kink profile"},
      {"eigenfunction", "unstable mode of the standing solitary wave"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? cli::exit_ok : cli::exit_validation;
  }
  opt.out = out;
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const Config cfg = config_path.empty() ? Config{} : Config::load(config_path);
    return cli::execute(command, cfg, opt, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::exit_code_for(e);
  }
}
