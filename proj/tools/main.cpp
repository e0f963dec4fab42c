#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "stm/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Space-time moment equations for SPDEs with Levy noise"};
  app.require_subcommand(1, 1);

  std::string config;
  std::string out;
  stm::RunOptions options;

  for (const auto& name : stm::subcommands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory")->required();
    sub->add_option("--threads", options.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--strict-sequential", options.strict_sequential, "run every stage on one thread");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(stm::ExitStatus::config_error);
  }

  const std::string subcommand = app.get_subcommands().front()->get_name();
  return static_cast<int>(stm::run(subcommand, config, out, options, std::cerr));
}
