#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "contact_flow/cli/config.hpp"
#include "contact_flow/cli/runner.hpp"

namespace cli = contact_flow::cli;

namespace {

struct Options {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void add_common(CLI::App* sub, Options& o, bool config_required) {
  auto* c = sub->add_option("--config", o.config, "configuration file");
  if (config_required) c->required();
  sub->add_option("--out", o.out, "output directory (created if missing)");
  sub->add_option("--seed", o.seed, "override [run] seed");
  sub->add_flag("--quiet", o.quiet, "no progress output on stderr");
}

int run_mode(cli::Mode mode, const Options& o) {
  std::optional<cli::Runner> runner;
  try {
    cli::RunContext ctx;
    ctx.out_dir = o.out;
    ctx.quiet = o.quiet;
    ctx.threads = cli::threads_from_env();
    runner.emplace(cli::load_config(o.config, mode, o.seed), ctx);
  } catch (const contact_flow::Error& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return cli::exit_config;
  }
  try {
    return runner->run().exit_code;
  } catch (const cli::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return cli::exit_runtime;
  } catch (const contact_flow::Error& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return runner->failure(e.what()).exit_code;
  }
}

int run_info(const Options& o) {
  try {
    std::optional<cli::RunConfig> config;
    if (!o.config.empty()) config = cli::load_config(o.config, cli::Mode::info, o.seed);
    std::cout << cli::info_report(config).dump(2) << "\n";
    return cli::exit_ok;
  } catch (const contact_flow::Error& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return cli::exit_config;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contact Hamiltonian flows: simulation, invariant checks and canonical ensembles"};
  app.set_version_flag("--version", std::string(contact_flow::version));
  app.require_subcommand(1);

  Options opts;
  struct Sub {
    cli::Mode mode;
    const char* help;
  };
  const Sub subs[] = {
      {cli::Mode::simulate, "integrate one orbit and write trajectory CSV plus report"},
      {cli::Mode::verify, "run the identity and invariance battery"},
      {cli::Mode::ensemble, "sample the canonical measure and test pushforward invariance"},
      {cli::Mode::sample, "draw canonical samples"},
      {cli::Mode::info, "list built-in systems, or describe a configured one"},
  };
  for (const auto& s : subs) {
    add_common(app.add_subcommand(cli::to_string(s.mode), s.help), opts, s.mode != cli::Mode::info);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::exit_config;
  }

  for (const auto& s : subs) {
    if (!app.got_subcommand(cli::to_string(s.mode))) continue;
    return s.mode == cli::Mode::info ? run_info(opts) : run_mode(s.mode, opts);
  }
  return cli::exit_config;
}
