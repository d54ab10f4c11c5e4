// seqrand: reproduces the CGLMP table, violation curves, trusted and
// device-independent randomness data as CSV.

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

#include "seqrand/cli.hpp"

namespace cli = seqrand::cli;

namespace {

// Raw flag values; only flags the user actually passed override the config.
struct Flags {
  std::string config, state, mode, grid, setting, scope, profile, out, theta;
  double tol = 0.0, epsilon = 0.0;
  std::uint64_t seed = 0;
  std::size_t instances = 0;
  bool reduced = false, complex_moments = false;
};

struct Bound {
  CLI::App* app;
  std::map<std::string, CLI::Option*> opts;
};

Bound add_command(CLI::App& root, cli::Command cmd, const std::string& help, Flags& f) {
  Bound b{root.add_subcommand(cli::to_string(cmd), help), {}};
  auto* app = b.app;
  b.opts["config"] = app->add_option("--config", f.config, "JSON file with default values for the flags");
  b.opts["state"] = app->add_option("--state", f.state, "mes or mvs");
  b.opts["out"] = app->add_option("--out", f.out, "output path (stdout if omitted)");
  b.opts["tol"] = app->add_option("--tol", f.tol, "solver duality-gap tolerance");
  switch (cmd) {
    case cli::Command::Table1: break;
    case cli::Command::Curves:
      b.opts["mode"] = app->add_option("--mode", f.mode, "Bob 1 instrument: sqrt (default) or mixture");
      b.opts["grid"] = app->add_option("--grid", f.grid, "lo:hi:step or window:N");
      break;
    case cli::Command::GuessDecomp:
    case cli::Command::NpaBound:
      b.opts["mode"] = app->add_option("--mode", f.mode, "Bob 1 instrument: mixture (default) or sqrt");
      b.opts["grid"] = app->add_option("--grid", f.grid, "lo:hi:step or window:N");
      b.opts["setting"] = app->add_option("--setting", f.setting, "x,y1,y2");
      b.opts["scope"] = app->add_option("--scope", f.scope, "local or global");
      b.opts["profile"] = app->add_option("--profile", f.profile, "NPA word profile: default or extended");
      b.opts["complex"] = app->add_flag("--complex", f.complex_moments, "complex moment matrix");
      b.opts["theta"] = app->add_option("--theta", f.theta, "cyclic branch basis: eigen (default) or computational");
      break;
    case cli::Command::TheoremCheck:
      b.opts["seed"] = app->add_option("--seed", f.seed, "random seed");
      b.opts["instances"] = app->add_option("--instances", f.instances, "instances per battery");
      break;
    case cli::Command::ExportSdp:
      b.opts["mode"] = app->add_option("--mode", f.mode, "Bob 1 instrument: mixture (default) or sqrt");
      b.opts["setting"] = app->add_option("--setting", f.setting, "x,y1,y2");
      b.opts["profile"] = app->add_option("--profile", f.profile, "NPA word profile: default or extended");
      b.opts["epsilon"] = app->add_option("--epsilon", f.epsilon, "Bob 1 sharpness");
      b.opts["reduced"] = app->add_flag("--reduced", f.reduced, "write the facially reduced problem");
      b.opts["complex"] = app->add_flag("--complex", f.complex_moments, "complex moment matrix");
      b.opts["theta"] = app->add_option("--theta", f.theta, "cyclic branch basis: eigen (default) or computational");
      break;
  }
  return b;
}

cli::Overrides from_flags(const Bound& b, const Flags& f) {
  cli::Overrides o;
  auto given = [&](const char* name) {
    auto it = b.opts.find(name);
    return it != b.opts.end() && it->second->count() > 0;
  };
  if (given("state")) o.state = f.state;
  if (given("mode")) o.mode = f.mode;
  if (given("grid")) o.grid = f.grid;
  if (given("setting")) o.setting = f.setting;
  if (given("scope")) o.scope = f.scope;
  if (given("profile")) o.profile = f.profile;
  if (given("out")) o.out = f.out;
  if (given("tol")) o.tol = f.tol;
  if (given("epsilon")) o.epsilon = f.epsilon;
  if (given("seed")) o.seed = f.seed;
  if (given("instances")) o.instances = f.instances;
  if (given("reduced")) o.reduced = f.reduced;
  if (given("complex")) o.complex_moments = f.complex_moments;
  if (given("theta")) o.theta = f.theta;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App root{"Randomness from sequential CGLMP measurements"};
  root.require_subcommand(1);
  Flags flags;
  std::vector<std::pair<cli::Command, Bound>> commands;
  auto add = [&](cli::Command c, const std::string& help) { commands.emplace_back(c, add_command(root, c, help, flags)); };
  add(cli::Command::Table1, "CGLMP maxima and double-violation window, published vs computed");
  add(cli::Command::Curves, "first- and second-round CGLMP values over an eps grid");
  add(cli::Command::GuessDecomp, "guessing probability of the decomposition attack");
  add(cli::Command::NpaBound, "device-independent guessing bound from the sequential NPA relaxation");
  add(cli::Command::TheoremCheck, "random-instance check of the constructive quantum strategies");
  add(cli::Command::ExportSdp, "write one NPA relaxation as an SDPA sparse file");

  try {
    root.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = root.exit(e);
    return rc == 0 ? 0 : 2;
  }

  for (const auto& [cmd, bound] : commands) {
    if (!bound.app->parsed()) continue;
    try {
      cli::RunConfig cfg;
      cfg.command = cmd;
      if (!flags.config.empty()) cli::load_overrides(flags.config).apply(cfg);
      from_flags(bound, flags).apply(cfg);
      return cli::execute(cfg, std::cout, std::cerr);
    } catch (const seqrand::Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return cli::exit_code(e.code());
    }
  }
  return 2;
}
