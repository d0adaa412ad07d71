// Command-line driver: tdbem_cli <command> <config.json> [--out DIR] [--quiet]

#include "CLI11.hpp"
#include "tdbem/error.hpp"
#include "tdbem/parallel.hpp"
#include "tdbem/runner.hpp"

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Time-domain boundary integral solver for the scalar wave equation"};
  app.require_subcommand(1);

  std::string config_path;
  tdbem::RunOptions options;
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (default: TDBEM_THREADS or all cores)");

  const std::vector<std::pair<tdbem::Command, std::string>> commands = {
      {tdbem::Command::Solve, "solve a transmission problem by convolution quadrature"},
      {tdbem::Command::CheckHypotheses, "check the evolution hypotheses and integrate the system"},
      {tdbem::Command::ErrorStudy, "run a refinement ladder against an exact solution"},
      {tdbem::Command::ProbeBounds, "estimate Laplace-domain operator norms along a vertical line"},
  };
  std::vector<CLI::App*> subs;
  for (const auto& [command, help] : commands) {
    CLI::App* sub = app.add_subcommand(tdbem::to_string(command), help);
    sub->add_option("config", config_path, "JSON scenario file")->required();
    sub->add_option("--out", options.out_dir, "output directory (overrides output_dir)");
    sub->add_flag("--quiet", options.quiet, "suppress progress messages");
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (threads > 0) tdbem::set_thread_count(threads);

  for (std::size_t k = 0; k < subs.size(); ++k) {
    if (!subs[k]->parsed()) continue;
    try {
      const tdbem::ScenarioConfig config = tdbem::load_config(config_path);
      return tdbem::run_scenario(config, commands[k].first, options, std::cerr);
    } catch (const tdbem::ConfigError& e) {
      std::cerr << "configuration error: " << e.what() << std::endl;
      return 2;
    }
  }
  return 2;
}
