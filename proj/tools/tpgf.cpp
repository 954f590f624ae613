#include <CLI11.hpp>

#include <iostream>

#include "tpgf/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Seq2Seq spatio-temporal forecasting with scheduled and progressive sampling"};
  app.require_subcommand(1, 1);

  tpgf::CommandLine cl;
  std::uint64_t seed = 0;
  std::string out, checkpoint;

  auto add = [&](const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", cl.configs, "Config file (key = value lines)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--out", out, "Override the output directory");
    return sub;
  };
  add("generate", "Write the synthetic dataset");
  add("train", "Train a model");
  add("evaluate", "Closed-loop test metrics")->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate");
  add("compare", "Tabulate evaluated runs (repeat --config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  cl.command = sub->get_name();
  if (sub->count("--seed")) cl.seed = seed;
  if (sub->count("--out")) cl.out = out;
  if (cl.command == "evaluate" && sub->count("--checkpoint")) cl.checkpoint = checkpoint;
  return tpgf::run_command(cl, std::cout, std::cerr);
}
