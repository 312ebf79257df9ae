#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "qkbo/kernels.hpp"
#include "qkbo/optimize.hpp"

namespace qkbo {

enum class Hyper { signal_variance, noise_variance, lengthscale, alpha };

struct Posterior {
  double mean = 0.0;
  double variance = 0.0;
};

/// Box bounds for hyperparameter optimization (applied in log space).
struct HyperBounds {
  static constexpr double variance_lo = 1e-12, variance_hi = 1e3;
  static constexpr double lengthscale_lo = 1e-3, lengthscale_hi = 1e3;
  static constexpr double alpha_lo = 1e-3, alpha_hi = 1e5;
};

/// GP regression model with a constant mean, fitted against a shared kernel cache.
/// The model uses the first y.size() points of the cache.
class GPModel {
 public:
  /// Builds a fresh cache from X using the hyperparameters in `spec`.
  static GPModel fit(const KernelSpec& spec, const std::vector<GateAngles>& X, const Eigen::VectorXd& y, double mean);
  /// Reuses `data`; hyperparameters come from `hypers` (its kind must match the cache).
  static GPModel fit(std::shared_ptr<const KernelData> data, const KernelSpec& hypers, const Eigen::VectorXd& y,
                     double mean);

  const KernelSpec& kernel() const { return spec_; }
  const KernelData& data() const { return *data_; }
  std::shared_ptr<const KernelData> data_ptr() const { return data_; }
  Eigen::Index size() const { return y_.size(); }
  const Eigen::VectorXd& targets() const { return y_; }
  double mean() const { return mean_; }
  /// Diagonal jitter actually used (1e-10 unless escalation was needed).
  double jitter() const { return jitter_; }
  const Eigen::VectorXd& alpha_vec() const { return beta_; }
  /// K_base of the training points.
  const Eigen::MatrixXd& base_gram() const { return k0_; }
  /// sigma^2 K_base + (sigma_n^2 + jitter) I.
  Eigen::MatrixXd total_gram() const;
  const Eigen::LLT<Eigen::MatrixXd>& factor() const { return llt_; }

  Posterior predict(const GateAngles& x) const;
  /// Posterior from base cross-kernel values k_base(x*, x_i).
  Posterior predict_from_base(const Eigen::VectorXd& k_base) const;

  double log_marginal_likelihood() const;
  double lml_gradient(Hyper h) const;

  /// Model with the same data and new hyperparameters.
  GPModel refit(const KernelSpec& hypers) const;

 private:
  GPModel() = default;
  void factorize();

  KernelSpec spec_;
  std::shared_ptr<const KernelData> data_;
  Eigen::VectorXd y_;
  double mean_ = 0.0;
  Eigen::MatrixXd k0_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd beta_;
  double jitter_ = kGramJitter;
};

struct HyperOptOptions {
  bool optimize_noise = false;
  int restarts = 3;
  std::uint64_t seed = 0;
  /// Extra starting point, typically the previous BO iteration's hyperparameters.
  std::optional<KernelSpec> warm_start;
  LbfgsOptions lbfgs{10, 100, 1e-6, 1e-10, 30};
};

struct HyperOptResult {
  GPModel model;
  double initial_lml = 0.0;
  double final_lml = 0.0;
  /// Set when every restart failed to produce a finite likelihood.
  bool warning = false;
};

/// sigma^2 = r^T K_base^{-1} r / m, the likelihood maximizer at sigma_n^2 = 0.
double closed_form_signal_variance(const GPModel& m);

/// Maximizes the log marginal likelihood over log-hyperparameters. Quantum kernels only tune
/// (sigma^2, sigma_n^2); classical kernels add the lengthscale and, for rq, alpha.
HyperOptResult optimize_hypers(const GPModel& m, const HyperOptOptions& opts = {});

/// 1 - sum (y - yhat)^2 / sum (y - mean(y))^2.
double validation_score(const GPModel& m, const std::vector<GateAngles>& X_v, const Eigen::VectorXd& y_v);
double validation_score(const Eigen::VectorXd& predicted, const Eigen::VectorXd& y_v);

double log_bayes_factor(const GPModel& a, const GPModel& b);

}  // namespace qkbo
