#pragma once

#include <complex>
#include <cstdint>
#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace qkbo {

using cplx = std::complex<double>;

/// Dense amplitudes, basis index bit q holds qubit q.
using Statevector = Eigen::VectorXcd;

enum class Pauli : char { I = 'I', X = 'X', Y = 'Y', Z = 'Z' };

/// Tensor product of single-qubit Paulis; character k of the text form acts on qubit k.
class PauliString {
 public:
  PauliString() = default;
  explicit PauliString(int num_qubits);
  explicit PauliString(std::string_view ops);

  static PauliString single(int num_qubits, int qubit, Pauli op);

  int num_qubits() const { return static_cast<int>(ops_.size()); }
  Pauli operator[](int qubit) const { return ops_.at(qubit); }
  void set(int qubit, Pauli op);

  bool is_identity() const;
  /// True when every factor is I or Z.
  bool is_diagonal() const;
  /// True when every factor is I or X.
  bool is_x_type() const;
  std::vector<int> support() const;
  std::string str() const;

  /// Bit masks for the action P|x> = i^{#Y} (-1)^{popcount(x & z)} |x ^ x_mask>.
  std::uint64_t x_mask() const;
  std::uint64_t z_mask() const;
  int y_count() const;

  auto operator<=>(const PauliString&) const = default;

 private:
  std::vector<Pauli> ops_;
};

/// Returns P|psi>.
Statevector apply_pauli(const PauliString& p, const Statevector& psi);

/// <psi|P|psi>, real part; P is Hermitian so the imaginary part is round-off.
double pauli_expectation(const PauliString& p, const Statevector& psi);

/// Real-weighted sum of Pauli strings with merged duplicates. Zero weights are dropped.
class PauliSum {
 public:
  struct Term {
    double coeff;
    PauliString pauli;
  };

  explicit PauliSum(int num_qubits) : n_(num_qubits) {}

  void add(double coeff, const PauliString& p);
  void add(double coeff, std::string_view ops) { add(coeff, PauliString(ops)); }

  int num_qubits() const { return n_; }
  const std::vector<Term>& terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }

  /// Coefficient of the all-identity string.
  double identity_coefficient() const;

  PauliSum scaled(double factor) const;
  PauliSum operator+(const PauliSum& other) const;

 private:
  int n_;
  std::vector<Term> terms_;
  std::map<PauliString, std::size_t> index_;
};

/// J sum ZZ over nearest-neighbour edges + hx sum X + hz sum Z.
PauliSum build_tfim(int n, double J, double hx, double hz, bool periodic);

double expectation(const PauliSum& h, const Statevector& psi);

/// Tr H, i.e. 2^n times the identity coefficient.
double trace_coefficient(const PauliSum& h);

/// H - (Tr H / 2^n) I.
PauliSum remove_trace(const PauliSum& h);

/// Dense 2^n x 2^n matrix of H; intended for n <= ~10.
Eigen::MatrixXcd to_dense(const PauliSum& h);

/// Plain-text term list, one `coeff pauli_string` per line.
std::string to_text(const PauliSum& h);
PauliSum pauli_sum_from_text(std::istream& in);
PauliSum pauli_sum_from_text(std::string_view text);

}  // namespace qkbo
