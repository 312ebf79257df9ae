#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "qkbo/circuit.hpp"
#include "qkbo/pauli.hpp"

namespace qkbo {

/// Kronecker product of (1, sin t_q, cos t_q) over parameters, the last parameter varying slowest.
/// Component index is sum_q d_q 3^q with d_q in {0: 1, 1: sin, 2: cos}.
Eigen::VectorXd fourier_vector(const GateAngles& theta, int max_params = 12);

/// Operators O_i with rho(theta) = R_{p+1} (sum_i v_i(theta) O_i) R_{p+1}^dag, one per Fourier slot.
/// Each O_i is the unvectorized s_i|rho_0>> and is Hermitian.
std::vector<Eigen::MatrixXcd> build_operator_vector_states(const Ansatz& a);

/// Full superoperators s_i in the row-major vec convention vec(AXB) = (A kron B^T) vec(X).
std::vector<Eigen::MatrixXcd> build_superoperators(const Ansatz& a);

/// Gram matrix together with a factor F satisfying F^T F = gram.
struct GramFactor {
  Eigen::MatrixXd gram;
  Eigen::MatrixXd factor;
};

/// Eigen-decomposition factor with negative eigenvalues clipped; rows for zero eigenvalues are dropped.
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& m);

/// S_ij = Tr(O_i O_j).
GramFactor build_S(const Ansatz& a);
/// T_ij = Tr(s_i^dag s_j) / 4^n.
GramFactor build_T(const Ansatz& a);

/// h_i = Tr(R_{p+1}^dag H R_{p+1} O_i), so E(theta) = h . v(theta).
Eigen::VectorXd energy_weights(const Ansatz& a, const PauliSum& h);

/// Count of singular values above rel_cutoff times the largest one.
int numerical_rank(const Eigen::MatrixXd& m, double rel_cutoff = 1e-8);

/// Dimension of the real span of {O_i}, i.e. rank(S), tracked layer by layer so that 3^p never
/// has to be materialized.
int state_feature_rank(const Ansatz& a, double rel_cutoff = 1e-8);
/// Dimension of the real span of {s_i}, i.e. rank(T). Intended for n <= 2.
int unitary_feature_rank(const Ansatz& a, double rel_cutoff = 1e-8);

std::uint64_t state_dim_bound(int n, int p);
std::uint64_t unitary_dim_bound(int n, int p);
std::uint64_t real_ansatz_dim(int n);

}  // namespace qkbo
