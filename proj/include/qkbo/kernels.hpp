#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qkbo/circuit.hpp"
#include "qkbo/mps.hpp"

namespace qkbo {

enum class KernelKind { state, unitary, mps_state, matern32, matern52, rbf, rq };

std::string to_string(KernelKind k);
KernelKind kernel_kind_from_string(const std::string& s);
bool is_quantum(KernelKind k);

/// Kernel choice plus hyperparameters. For mps_state, `ansatz` is the parameterized block U_B and
/// `mps_input` the compressed prefix state.
struct KernelSpec {
  KernelKind kind = KernelKind::rbf;
  std::shared_ptr<const Ansatz> ansatz;
  std::shared_ptr<const MPS> mps_input;
  double lengthscale = 1.0;
  double alpha = 1.0;
  double signal_variance = 1.0;
  double noise_variance = 0.0;
  int max_unitary_qubits = 10;

  void validate() const;
};

constexpr double kGramJitter = 1e-10;

double classical_kernel(const KernelSpec& spec, const GateAngles& x, const GateAngles& x2);
double state_kernel(const Ansatz& a, const GateAngles& x, const GateAngles& x2);
double unitary_kernel(const Ansatz& a, const GateAngles& x, const GateAngles& x2, int max_qubits = 10);

/// Kernel value without sigma^2 scaling.
double base_kernel(const KernelSpec& spec, const GateAngles& x, const GateAngles& x2);

/// Quantum kinds cache the kernel value itself; classical kinds cache the squared distance so the
/// lengthscale can change without touching the inputs.
double base_from_statistic(const KernelSpec& spec, double stat);
double dbase_dlengthscale(const KernelSpec& spec, double stat);
double dbase_dalpha(const KernelSpec& spec, double stat);

/// sigma^2 K_base + (sigma_n^2 + jitter) I.
Eigen::MatrixXd gram(const KernelSpec& spec, const std::vector<GateAngles>& X);
/// sigma^2 k_base(x*, x_i).
Eigen::VectorXd cross_kernel(const KernelSpec& spec, const std::vector<GateAngles>& X, const GateAngles& xs);

/// Growing per-point cache of kernel embeddings and pair statistics. Each unordered pair is
/// evaluated exactly once, which `pair_evaluations` counts.
class KernelData {
 public:
  explicit KernelData(KernelSpec spec);

  const KernelSpec& spec() const { return spec_; }
  /// Only hyperparameters may change; the kind and inputs stay fixed.
  void set_hyperparameters(double lengthscale, double alpha, double signal_variance, double noise_variance);

  void add(const GateAngles& x);
  void add_all(const std::vector<GateAngles>& X);

  std::size_t size() const { return points_.size(); }
  const std::vector<GateAngles>& points() const { return points_; }
  /// m x m pair statistics.
  const Eigen::MatrixXd& stats() const { return stats_; }
  /// m x m base kernel under the current hyperparameters.
  Eigen::MatrixXd base_gram() const;
  /// Pair statistics between x* and all cached points.
  Eigen::VectorXd cross_stats(const GateAngles& xs) const;
  /// Base kernel between x* and all cached points.
  Eigen::VectorXd cross_base(const GateAngles& xs) const;

  std::uint64_t pair_evaluations() const { return pair_evals_; }
  /// True for the dense state and unitary kinds, which support weighted_cross_gradient.
  bool has_weighted_gradient() const;
  /// Column c is the gradient in x* of sum_j W(j, c) k_base(x*, x_j) over the first W.rows() cached points,
  /// computed with one forward and one reverse sweep through the ansatz.
  Eigen::MatrixXd weighted_cross_gradient(const GateAngles& xs, const Eigen::MatrixXd& W) const;

 private:
  Eigen::VectorXcd embed(const GateAngles& x) const;
  MPS embed_mps(const GateAngles& x) const;

  KernelSpec spec_;
  std::vector<GateAngles> points_;
  Eigen::MatrixXd stats_;
  // Columns are per-point embeddings (statevector or vec U) for dense quantum kinds.
  Eigen::MatrixXcd embeddings_;
  std::vector<MPS> mps_embeddings_;
  double embed_norm_ = 1.0;
  std::uint64_t pair_evals_ = 0;
};

}  // namespace qkbo
