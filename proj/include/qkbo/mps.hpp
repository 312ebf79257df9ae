#pragma once

#include <array>
#include <complex>
#include <istream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qkbo/circuit.hpp"

namespace qkbo {

/// Outcome of one two-site gate application.
struct TruncationReport {
  int kept = 0;
  int available = 0;
  /// Sum of kept squared singular values of the normalized two-site tensor.
  double svd_fidelity = 1.0;
  /// Fidelity after the optional local re-optimization.
  double fidelity = 1.0;
  int sweeps = 0;
};

/// Open-boundary MPS; site q carries qubit q. Each site stores one Dl x Dr matrix per physical index.
class MPS {
 public:
  using Site = std::array<Eigen::MatrixXcd, 2>;

  /// |0...0> with all bonds 1.
  explicit MPS(int n);

  int num_sites() const { return static_cast<int>(sites_.size()); }
  /// Dimension of bond b between sites b and b+1.
  int bond_dim(int b) const;
  std::vector<int> bond_dims() const;
  int max_bond() const;
  const Site& site(int q) const { return sites_.at(static_cast<std::size_t>(q)); }

  void apply_1q(const Eigen::Matrix2cd& g, int site);
  /// Gate on (left, left+1); matrix index is 2*bit(left) + bit(left+1). chi_max <= 0 means no cap.
  TruncationReport apply_2q(const Eigen::Matrix4cd& g, int left, int chi_max, bool reoptimize);
  /// Applies a fixed gate or single/two-qubit Pauli rotation; two-qubit elements must be nearest-neighbour.
  TruncationReport apply(const Element& e, const GateAngles& theta, int chi_max, bool reoptimize);

  /// <this|other>.
  cplx overlap(const MPS& other) const;
  double norm2() const;

  /// Mixed-canonical form with the orthogonality center on `center`.
  void canonicalize(int center);

  Statevector to_statevector() const;

  /// Text dump: `MPS n`, bond dims, then row-major entries per site and physical index.
  std::string dump() const;
  static MPS load(std::istream& in);

 private:
  void left_orthogonalize(int q);
  void right_orthogonalize(int q);

  std::vector<Site> sites_;
  // Sites < lo_ are left-canonical, sites > hi_ right-canonical.
  int lo_ = 0;
  int hi_ = 0;
};

/// Partition U = U_C U_B U_A with U_B holding every rotation with parameter index >= first_block_param.
struct BlockSplit {
  Ansatz prefix;
  GateAngles theta_prefix;
  Ansatz block;
};

/// Elements that commute past the block's light cone join the prefix; elements after the last block
/// rotation form U_C and are dropped, since they cancel in the state kernel.
BlockSplit split_ansatz(const Ansatz& a, int first_block_param, const GateAngles& theta_prefix);

struct CompressionResult {
  MPS state;
  /// Product of per-gate fidelities; exact when no truncation happened.
  double fidelity_estimate = 1.0;
  int truncations = 0;
};

/// Contracts U_A into |0...0> with bonds capped at chi_max and local re-optimization.
CompressionResult compress_prefix(const BlockSplit& split, int chi_max);

/// U_B(theta)|psiA> applied without truncation.
MPS apply_block(const MPS& psiA, const Ansatz& block, const GateAngles& theta);

/// |<psiA| U_B(theta')^dag U_B(theta) |psiA>|^2.
double approx_state_kernel(const MPS& psiA, const Ansatz& block, const GateAngles& theta, const GateAngles& theta2);

}  // namespace qkbo
