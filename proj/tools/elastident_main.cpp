// elastident: forward simulation, synthetic observation generation and
// material identification from the command line.

#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "elastident/cli.hpp"

namespace {

using namespace elastident;

struct Flags {
  std::string scene;
  std::string obs;
  std::string out;
  std::optional<int> frames;
  std::optional<std::uint64_t> seed;
  std::string init = "manual";
  std::optional<int> iters;
  std::optional<double> lr;
  std::optional<double> lambda;
  bool deterministic = true;
  std::string mllm_endpoint;
};

cli::SceneArgs scene_args(const Flags& f) { return {f.scene, f.frames, f.seed}; }

void add_scene_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--scene", f.scene, "Scene file")->required();
  cmd->add_option("--out", f.out, "Output directory")->required();
  cmd->add_option("--frames", f.frames, "Number of frames (overrides the scene)");
  cmd->add_option("--seed", f.seed, "Particle sampling seed (overrides the scene)");
  cmd->add_flag("--deterministic,!--no-deterministic", f.deterministic,
                "Serial, bit-reproducible execution (the only mode currently implemented)");
}

void add_init_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--init", f.init, "Initial field: manual | mllm | file:PATH");
  cmd->add_option("--mllm-endpoint", f.mllm_endpoint, "Material service URL used by --init mllm");
}

int run(int argc, char** argv) {
  CLI::App app{"elastident: MPM material identification toolkit"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen-observations", "Simulate ground truth and write observations");
  add_scene_flags(gen, f);

  auto* ident = app.add_subcommand("identify", "Recover material parameters from observations");
  add_scene_flags(ident, f);
  add_init_flags(ident, f);
  ident->add_option("--obs", f.obs, "Observation directory written by gen-observations")->required();
  ident->add_option("--iters", f.iters, "Maximum optimizer iterations");
  ident->add_option("--lr", f.lr, "Adam learning rate in parameter space");
  ident->add_option("--lambda", f.lambda, "Flow loss weight");

  auto* sim = app.add_subcommand("simulate", "Forward simulation, writes the trajectory");
  add_scene_flags(sim, f);
  add_init_flags(sim, f);

  auto* render = app.add_subcommand("render", "Forward simulation, writes frames and flows");
  add_scene_flags(render, f);
  add_init_flags(render, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << category_name(ErrorCategory::usage) << ": " << e.what() << "\n";
    return exit_code(ErrorCategory::usage);
  }

  if (gen->parsed()) {
    cli::gen_observations({scene_args(f), f.out});
  } else if (ident->parsed()) {
    cli::IdentifyArgs a{scene_args(f), f.obs, f.out, f.init, f.mllm_endpoint, {}};
    if (f.iters) a.options.max_iters = *f.iters;
    if (f.lr) a.options.learning_rate = *f.lr;
    if (f.lambda) a.options.lambda_flow = *f.lambda;
    const auto report = cli::identify(a);
    std::cout << cli::format_report(report);
  } else if (sim->parsed()) {
    cli::simulate_command({scene_args(f), f.out, f.init, f.mllm_endpoint});
  } else if (render->parsed()) {
    cli::render_command({scene_args(f), f.out, f.init, f.mllm_endpoint});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const elastident::Error& e) {
    std::cerr << "error: " << elastident::category_name(e.category()) << ": " << e.what() << "\n";
    return elastident::exit_code(e.category());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << elastident::category_name(elastident::ErrorCategory::io) << ": " << e.what() << "\n";
    return elastident::exit_code(elastident::ErrorCategory::io);
  }
}
