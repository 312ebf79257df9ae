#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qkbo/bo.hpp"
#include "qkbo/circuit.hpp"
#include "qkbo/kernels.hpp"
#include "qkbo/pauli.hpp"
#include "qkbo/spsa.hpp"

namespace qkbo {

constexpr int kTraceSchemaVersion = 1;

enum class ExperimentKind { regress, regress_local, bo, spsa, mps_regress, feature_dim, find_opt };

std::string to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(const std::string& s);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::regress;

  // [ansatz] brickwork RY/CX
  int n_qubits = 4;
  int depth = 4;
  // [hamiltonian] transverse-field Ising
  double J = 0.5;
  double hx = -0.5;
  double hz = 0.5;
  bool periodic = true;

  // [run]
  int repeats = 20;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  /// Worker threads for independent repeats; 0 picks the hardware concurrency.
  int threads = 0;

  /// Kernels for regression and BO sweeps.
  std::vector<KernelKind> kernels{KernelKind::state,    KernelKind::unitary, KernelKind::matern32,
                                  KernelKind::matern52, KernelKind::rbf,     KernelKind::rq};

  // [regress]
  std::vector<int> n_train{10, 25, 50, 75, 100, 136, 150, 200};
  int n_valid = 100;
  /// Scale reduction factors s for local regression.
  std::vector<double> scales{10.0, 100.0};

  // [noise]
  NoiseModel noise;

  // [bo], [spsa]
  BOConfig bo;
  SPSAConfig spsa;
  /// Reference optimum; also read from `e_opt_file` when that is set.
  std::optional<double> e_opt;
  std::string e_opt_file;

  // [mps]
  int mps_qubits = 6;
  int mps_depth = 20;
  int block_params = 10;
  std::vector<int> chi{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<int> mps_n_train{25, 50, 100, 200, 400};
  /// Noise-hyperparameter settings to run for the approximated kernels.
  std::vector<bool> mps_noise{false, true};

  // [feature_dim]
  std::vector<int> fd_qubits{2, 3, 4};
  std::vector<int> fd_depths{1, 2, 3, 4};
  /// Brute-force ranks are skipped above these sizes.
  int fd_state_rank_max_qubits = 6;
  int fd_unitary_rank_max_params = 6;

  // [find_opt]
  int attempts = 200;

  void validate() const;
  Ansatz ansatz() const;
  PauliSum hamiltonian() const;
};

/// Defaults for one experiment kind, with the kind-specific overrides (e.g. the mps grid).
ExperimentConfig default_config(ExperimentKind kind);
/// Reads an INI file over the defaults for `kind`. Unknown keys are a config error.
ExperimentConfig load_config(const std::string& path, ExperimentKind kind);
ExperimentConfig parse_config(const std::string& ini_text, ExperimentKind kind);
/// Effective configuration in the same INI layout.
std::string config_to_ini(const ExperimentConfig& cfg);
/// Paper-scale repeat counts: 100 for regression and BO, 1000 for SPSA.
void apply_full_scale(ExperimentConfig& cfg);

/// splitmix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x);
/// Seed for repeat r: splitmix64(base + r).
std::uint64_t repeat_seed(std::uint64_t base, int repeat);

/// Runs fn(0..count-1) on up to `threads` workers. Exceptions are rethrown after all workers stop.
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

struct RegressionRow {
  std::string kernel;
  double scale = 1.0;
  int n_train = 0;
  int repeat = 0;
  std::uint64_t seed = 0;
  double r2v = 0.0;
  double log10_error = 0.0;
  double signal_variance = 0.0;
  double noise_variance = 0.0;
  double lengthscale = 0.0;
  double alpha = 0.0;
  double lml = 0.0;
};

/// Global (kind regress) or local (kind regress_local, one pass per scale) regression sweep.
/// Each repeat draws one training pool of max(n_train) points and every N_t uses its prefix.
std::vector<RegressionRow> run_regression_sweep(const ExperimentConfig& cfg);

struct FindOptResult {
  GateAngles theta;
  double energy = 0.0;
  int attempts = 0;
};

/// Multistart L-BFGS with parameter-shift gradients from uniform random starts.
FindOptResult find_opt(const Ansatz& a, const PauliSum& h, int attempts, std::uint64_t seed);
FindOptResult find_opt(const ExperimentConfig& cfg);

struct BOSweep {
  std::vector<BOTrace> traces;
  std::vector<int> repeats;
};

/// One BO run per (kernel, repeat); repeat r uses repeat_seed(seed, r) for every kernel.
BOSweep run_bo_sweep(const ExperimentConfig& cfg);

struct SPSASweep {
  std::vector<SPSAResult> runs;
};

/// One SPSA run per repeat from a uniform random start.
SPSASweep run_spsa_sweep(const ExperimentConfig& cfg);

struct MpsRegressionRow {
  /// 0 marks the full state kernel.
  int chi = 0;
  bool noise_hyper = false;
  int n_train = 0;
  int repeat = 0;
  std::uint64_t seed = 0;
  double fidelity = 1.0;
  double r2v = 0.0;
  double log_bayes_factor = 0.0;
  double noise_variance = 0.0;
};

/// Block-wise regression with MPS-approximated state kernels against the full state kernel.
std::vector<MpsRegressionRow> run_mps_regression(const ExperimentConfig& cfg);

struct FeatureDimRow {
  int n = 0;
  int depth = 0;
  int p = 0;
  std::uint64_t state_bound = 0;
  std::uint64_t unitary_bound = 0;
  std::uint64_t real_dim = 0;
  /// -1 when skipped.
  int state_rank = -1;
  int unitary_rank = -1;
};

std::vector<FeatureDimRow> run_feature_dim(const ExperimentConfig& cfg);

struct IterationStats {
  std::string method;
  int iteration = 0;
  int count = 0;
  double median = 0.0;
  double mean = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

/// Per-method, per-iteration statistics of the energy error; records without an error are skipped.
std::vector<IterationStats> summarize_errors(const std::vector<BOTrace>& traces);
double median(std::vector<double> v);
/// Linear-interpolated quantile, q in [0, 1].
double quantile(std::vector<double> v, double q);

/// Reads the reference energy written by the find-opt experiment.
double read_e_opt(const std::string& path);

/// Runs the experiment and writes config.ini, results/summary CSVs and JSON-lines traces into cfg.out_dir.
void run_experiment(const ExperimentConfig& cfg, std::ostream& log);

/// Recomputes aggregate.csv from the traces in `dir` and reports mismatches; returns true when consistent.
bool verify_outputs(const std::string& dir, std::ostream& log);

}  // namespace qkbo
