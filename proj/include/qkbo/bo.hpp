#pragma once

#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qkbo/circuit.hpp"
#include "qkbo/gp.hpp"
#include "qkbo/kernels.hpp"

namespace qkbo {

struct BOConfig {
  int n_init = 25;
  int n_queries = 80;
  double xi = 0.01;
  double lower = -std::numbers::pi;
  double upper = std::numbers::pi;
  int acq_restarts = 20;
  /// Uniform candidates scored before the restarts; the best ones seed the random restarts. 0 disables.
  int acq_raw_samples = 0;
  int hyperopt_every = 1;
  /// Unset means: tune sigma_n^2 only when the evaluator is noisy.
  std::optional<bool> optimize_noise;
  int hyperopt_restarts = 3;
  double fd_step = 1e-6;
  LbfgsOptions acq_lbfgs{10, 100, 1e-9, 1e-12, 30};
  std::uint64_t seed = 0;
  /// Reference optimum for the energy-error metric.
  std::optional<double> e_opt;

  void validate() const;
};

struct BORecord {
  int iteration = 0;
  GateAngles theta;
  double y = 0.0;
  double best_y = 0.0;
  /// Noiseless energy at theta.
  double exact_energy = 0.0;
  std::optional<double> error;
  double signal_variance = 0.0;
  double noise_variance = 0.0;
  double lengthscale = 0.0;
  double alpha = 0.0;
  /// Acquisition value at the proposal; NaN for initial points.
  double ei = 0.0;
  double wall_time = 0.0;
};

struct BOTrace {
  std::string method;
  std::uint64_t seed = 0;
  std::vector<BORecord> records;
  std::uint64_t evaluator_calls = 0;
  std::uint64_t kernel_pair_evaluations = 0;
  bool hyperopt_warning = false;
};

double normal_cdf(double z);
double normal_pdf(double z);

/// EI for minimization given the posterior mean and standard deviation.
double expected_improvement(double mean, double sd, double y_best, double xi);
double expected_improvement(const GPModel& m, const GateAngles& x, double y_best, double xi);

/// EI value and its gradient. Dense quantum kernels use a reverse sweep through the ansatz; other kinds
/// take cross-kernel derivatives by central differences with `fd_step`.
double expected_improvement_with_gradient(const GPModel& m, const GateAngles& x, double y_best, double xi,
                                          double fd_step, Eigen::VectorXd* grad);

struct Proposal {
  GateAngles x;
  double ei = 0.0;
};

/// Multi-start EI maximization over the box from random points plus the incumbent.
Proposal propose(const GPModel& m, const BOConfig& cfg, std::mt19937_64& rng, const GateAngles& incumbent,
                 double y_best);

/// (min(y) - e_opt) / |e_opt|.
double best_seen_energy_error(const std::vector<double>& y, double e_opt);

BOTrace run_bo(EnergyEvaluator& evaluator, const KernelSpec& kernel, const BOConfig& cfg,
               const std::function<void(const BORecord&)>& on_record = {});

}  // namespace qkbo
