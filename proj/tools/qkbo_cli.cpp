// Command-line driver for the regression, BO, SPSA, MPS and feature-dimension experiments.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qkbo/errors.hpp"
#include "qkbo/experiments.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> repeats;
  std::optional<std::string> out;
  std::optional<int> threads;
  bool full_scale = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "INI file layered over the defaults")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Base seed");
  sub->add_option("--repeats", c.repeats, "Number of independent repeats")->check(CLI::PositiveNumber);
  sub->add_option("--out", c.out, "Output directory");
  sub->add_option("--threads", c.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  sub->add_flag("--full-scale", c.full_scale, "Use the large repeat counts (100, or 1000 for spsa)");
}

qkbo::ExperimentConfig resolve(qkbo::ExperimentKind kind, const Common& c) {
  auto cfg = c.config.empty() ? qkbo::default_config(kind) : qkbo::load_config(c.config, kind);
  if (c.full_scale) qkbo::apply_full_scale(cfg);
  if (c.seed) cfg.seed = *c.seed;
  if (c.repeats) cfg.repeats = *c.repeats;
  if (c.out) cfg.out_dir = *c.out;
  if (c.threads) cfg.threads = *c.threads;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum-kernel Bayesian optimization experiments"};
  app.require_subcommand(1);

  using qkbo::ExperimentKind;
  const ExperimentKind kinds[] = {ExperimentKind::regress,     ExperimentKind::regress_local, ExperimentKind::bo,
                                  ExperimentKind::spsa,        ExperimentKind::mps_regress,   ExperimentKind::feature_dim,
                                  ExperimentKind::find_opt};
  const char* help[] = {"GP regression over the full parameter range",
                        "GP regression in boxes of half-width pi/s around random anchors",
                        "Bayesian optimization of the VQE energy",
                        "SPSA baseline",
                        "Regression with MPS-approximated state kernels",
                        "Feature-space dimensions and bounds",
                        "Reference optimum by multistart L-BFGS"};
  Common common[7];
  CLI::App* subs[7];
  for (int i = 0; i < 7; ++i) {
    subs[i] = app.add_subcommand(qkbo::to_string(kinds[i]), help[i]);
    add_common(subs[i], common[i]);
  }
  std::string verify_dir;
  auto* verify = app.add_subcommand("verify", "Recompute aggregate.csv from the traces and compare");
  verify->add_option("dir", verify_dir, "Output directory of a bo or spsa run")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify->parsed()) return qkbo::verify_outputs(verify_dir, std::cout) ? 0 : 1;
    for (int i = 0; i < 7; ++i)
      if (subs[i]->parsed()) {
        const auto cfg = resolve(kinds[i], common[i]);
        qkbo::run_experiment(cfg, std::cout);
        std::cout << "outputs in " << cfg.out_dir << '\n';
      }
  } catch (const qkbo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
