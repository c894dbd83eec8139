#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace hjbqvi;
  cli::RunConfig cfg;
  std::string scheme = "central", solver = "direct";
  double x0 = 0.0;

  CLI::App app{"Finite-difference policy iteration for impulse / stochastic control QVIs"};
  app.set_config("--config", "", "key=value file; command-line flags take precedence");
  app.require_subcommand(1);

  app.add_option("--model", cfg.model, "forest | custom")->check(CLI::IsMember({"forest", "custom"}));
  app.add_option("--spec-file", cfg.spec_file, "affine 1-D model file for --model custom");
  app.add_option("--delta-x", cfg.delta_x, "space step");
  app.add_option("--t-horizon", cfg.t_horizon, "horizon T");
  app.add_option("--n-t", cfg.n_t, "number of time steps");
  app.add_option("--x-max", cfg.params.x_max, "right end of the forest domain");
  app.add_option("--x-tilde", cfg.params.x_tilde, "replanting biomass");
  app.add_option("--beta", cfg.params.beta, "proportional harvesting cost");
  app.add_option("--q", cfg.params.Q, "replanting cost");
  app.add_option("--mu", cfg.params.mu, "growth rate");
  app.add_option("--sigma", cfg.params.sigma, "volatility");
  app.add_option("--lambda", cfg.params.lambda, "discount rate");
  app.add_option("--scheme", scheme, "central | one_sided")->check(CLI::IsMember({"central", "one_sided"}));
  app.add_option("--tol", cfg.tol, "policy iteration tolerance");
  app.add_option("--solver", solver, "direct | sweep")->check(CLI::IsMember({"direct", "sweep"}));
  app.add_option("--seed", cfg.seed, "Monte Carlo seed");
  app.add_option("--out", cfg.out, "output directory");
  app.add_flag("--cold-start", cfg.cold_start, "start every time step from zero (diagnostic)");
  app.add_flag("--terminal-q", cfg.terminal_q, "subtract the discounted replanting cost from the terminal value");
  app.add_option("--delta-list", cfg.delta_list, "space steps for the convergence study, descending")
      ->delimiter(',');
  app.add_option("--paths", cfg.paths, "Monte Carlo paths");
  auto* x0_opt = app.add_option("--x0", x0, "Monte Carlo start state (default x_tilde)");
  app.add_option("--t0", cfg.t0, "Monte Carlo start time (a time node)");

  for (const char* name : {"infinite", "finite", "convergence", "simulate"}) app.add_subcommand(name)->fallthrough();
  app.get_subcommand("infinite")->description("stationary forest problem against the analytic solution");
  app.get_subcommand("finite")->description("finite-horizon backward induction");
  app.get_subcommand("convergence")->description("error versus space step for the stationary problem");
  app.get_subcommand("simulate")->description("Monte Carlo value of the extracted finite-horizon policy");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  cfg.command = app.get_subcommands().front()->get_name();
  if (*x0_opt) cfg.x0 = x0;

  try {
    cfg.scheme = cli::parse_scheme(scheme);
    cfg.solver = cli::parse_solver(solver);
    const int rc = cli::run(cfg);
    if (rc != 0) std::cerr << "hjbqvi: invariant checks failed; see report.json\n";
    return rc;
  } catch (const cli::UsageError& e) {
    std::cerr << "hjbqvi: usage: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "hjbqvi: " << e.what() << '\n';
    return 1;
  }
}
