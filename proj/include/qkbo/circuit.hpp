#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "qkbo/pauli.hpp"

namespace qkbo {

using GateAngles = Eigen::VectorXd;

/// Fixed 1- or 2-qubit unitary. For two qubits the matrix index is 2*bit(qubits[0]) + bit(qubits[1]).
struct FixedGate {
  std::vector<int> qubits;
  Eigen::MatrixXcd matrix;
  std::string name;
};

/// exp(-i theta_k P / 2) with k = param.
struct PauliRotation {
  PauliString pauli;
  int param;
};

using Element = std::variant<FixedGate, PauliRotation>;

Eigen::Matrix2cd ry_matrix(double theta);
Eigen::Matrix2cd hadamard_matrix();
/// exp(-i theta P / 2) for a single-qubit Pauli.
Eigen::Matrix2cd rotation_matrix(Pauli p, double theta);
Eigen::Matrix4cd cx_matrix();

/// Ordered program of fixed gates and Pauli rotations acting on |0...0>.
class Ansatz {
 public:
  explicit Ansatz(int num_qubits);

  int num_qubits() const { return n_; }
  int num_params() const { return p_; }
  const std::vector<Element>& program() const { return program_; }

  void add_fixed(std::vector<int> qubits, Eigen::MatrixXcd matrix, std::string name = "FIXED");
  void add_cx(int control, int target);
  /// Appends RY on `qubit` with a fresh parameter index and returns it.
  int add_ry(int qubit);
  /// Appends a rotation; param < 0 allocates a fresh index.
  int add_rotation(const PauliString& p, int param = -1);

  std::size_t count_fixed(const std::string& name) const;
  /// True when every parameter index drives exactly one rotation.
  bool parameters_independent() const;

  /// Text form: `RY q<i> p<k>`, `CX q<i> q<j>`, `FIXED q<i>[,q<j>] re,im ...`, `PPR <pauli> p<k>`.
  std::string to_text() const;
  static Ansatz from_text(std::istream& in);
  static Ansatz from_text(const std::string& text);

 private:
  void check_qubit(int q) const;

  int n_;
  int p_ = 0;
  std::vector<Element> program_;
  std::vector<int> param_uses_;
};

/// Initial RY layer, then `depth` alternating CX layers each followed by RYs on the touched qubits.
Ansatz build_brickwork_ry_cx(int n, int depth);

/// In-place gates. `psi` may hold several states back to back (a column-major matrix viewed as one
/// vector); the gate then acts on each of them.
void apply_1q(Eigen::Ref<Statevector> psi, const Eigen::Matrix2cd& g, int qubit);
void apply_2q(Eigen::Ref<Statevector> psi, const Eigen::Matrix4cd& g, int q0, int q1);
void apply_element(Statevector& psi, const Element& e, const GateAngles& theta);
/// exp(-i t P / 2) on every dim-sized block of `v`.
void apply_rotation_blocks(Eigen::Ref<Statevector> v, const PauliString& p, double t, Eigen::Index dim);
/// Element (or its inverse) on every dim-sized block of `v`.
void apply_element_blocks(Eigen::Ref<Statevector> v, const Element& e, const GateAngles& theta, Eigen::Index dim,
                          bool inverse = false);

Statevector zero_state(int n);

/// U(theta)|0...0>.
Statevector simulate(const Ansatz& a, const GateAngles& theta);
/// U(theta)|psi0>.
Statevector simulate_from(const Ansatz& a, const GateAngles& theta, Statevector psi0);
/// Dense U(theta), built column by column. Throws CapacityError above max_qubits.
Eigen::MatrixXcd unitary(const Ansatz& a, const GateAngles& theta, int max_qubits = 10);

double energy(const Ansatz& a, const GateAngles& theta, const PauliSum& h);

/// (E(theta + pi/2 e_i) - E(theta - pi/2 e_i)) / 2 for each i.
Eigen::VectorXd parameter_shift_gradient(const Ansatz& a, const GateAngles& theta, const PauliSum& h);

struct NoiseModel {
  std::optional<std::int64_t> shots;
  double depolarizing = 0.0;
};

/// Exact or shot-sampled energy oracle. Sampled calls use an RNG seeded by (seed, call index),
/// so a given call is reproducible regardless of threading.
class EnergyEvaluator {
 public:
  EnergyEvaluator(Ansatz ansatz, PauliSum h, NoiseModel noise = {}, std::uint64_t seed = 0);

  double operator()(const GateAngles& theta);
  /// Noiseless energy; does not advance the call counter.
  double exact(const GateAngles& theta) const;

  bool noisy() const { return noise_.shots.has_value() || noise_.depolarizing > 0.0; }
  std::uint64_t calls() const { return calls_; }
  const Ansatz& ansatz() const { return ansatz_; }
  const PauliSum& hamiltonian() const { return h_; }
  const NoiseModel& noise() const { return noise_; }

 private:
  Ansatz ansatz_;
  PauliSum h_;
  NoiseModel noise_;
  std::uint64_t seed_;
  std::uint64_t calls_ = 0;
};

/// One shot-sampled estimate of <H> from the two measurement groups (Z-diagonal and X).
double sampled_energy(const Statevector& psi, const PauliSum& h, std::int64_t shots, double depolarizing,
                      std::uint64_t seed, std::uint64_t stream);

/// Haar-random unitary of the given dimension (QR of a complex Ginibre matrix with phase fix).
Eigen::MatrixXcd haar_unitary(int dim, std::uint64_t seed);

std::string angles_to_csv(const GateAngles& theta);
GateAngles angles_from_csv(const std::string& row);

}  // namespace qkbo
