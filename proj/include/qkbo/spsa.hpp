#pragma once

#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>

#include "qkbo/bo.hpp"
#include "qkbo/circuit.hpp"

namespace qkbo {

struct SPSAConfig {
  /// Total energy evaluations including calibration.
  int max_evaluations = 1000;
  int calibration_evaluations = 50;
  double alpha = 0.602;
  double gamma = 0.101;
  /// Defaults to 0.01 * number of update iterations.
  std::optional<double> stability;
  /// Defaults to 0.1 for exact evaluators and 0.2 for noisy ones.
  std::optional<double> c;
  /// Calibrated from the first gradient samples when unset.
  std::optional<double> a;
  double target_step = 2 * std::numbers::pi / 10;
  std::uint64_t seed = 0;
  std::optional<double> e_opt;
  /// Window for the final-error statistic.
  int final_window = 25;

  void validate() const;
  int iterations() const { return (max_evaluations - calibration_evaluations) / 2; }
};

struct SPSAResult {
  BOTrace trace;
  GateAngles theta;
  double a = 0.0;
  double c = 0.0;
  double stability = 0.0;
  /// Mean per-evaluation energy error over the last `final_window` evaluations.
  std::optional<double> final_error;
};

/// Two-point estimate (f(theta + c d) - f(theta - c d)) / (2c) * d for a Rademacher direction d.
GateAngles spsa_gradient(const std::function<double(const GateAngles&)>& f, const GateAngles& theta, double c,
                         const GateAngles& d);

/// SPSA on an arbitrary objective; every evaluation becomes one trace record.
SPSAResult run_spsa(const std::function<double(const GateAngles&)>& f, const SPSAConfig& cfg, const GateAngles& theta0,
                    bool noisy = false);

/// SPSA on a VQE energy; records carry the per-evaluation energy error when e_opt is set.
SPSAResult run_spsa(EnergyEvaluator& evaluator, const SPSAConfig& cfg, const GateAngles& theta0);

}  // namespace qkbo
