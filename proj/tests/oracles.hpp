#pragma once

// Dense reference constructions used to check the library. They deliberately avoid the
// library's bitmask and in-place gate kernels.

#include <complex>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include "qkbo/circuit.hpp"
#include "qkbo/pauli.hpp"

namespace oracle {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;

inline Mat single(char op) {
  Mat m(2, 2);
  const cplx i{0, 1};
  switch (op) {
    case 'X': m << 0, 1, 1, 0; break;
    case 'Y': m << 0, -i, i, 0; break;
    case 'Z': m << 1, 0, 0, -1; break;
    default: m << 1, 0, 0, 1;
  }
  return m;
}

/// Kronecker product with qubit n-1 as the leftmost factor (basis bit q = qubit q).
inline Mat pauli(const std::string& ops) {
  Mat m = Mat::Ones(1, 1);
  for (char c : ops) m = Eigen::kroneckerProduct(single(c), m).eval();
  return m;
}

inline Mat hamiltonian(const qkbo::PauliSum& h) {
  const Eigen::Index d = Eigen::Index{1} << h.num_qubits();
  Mat m = Mat::Zero(d, d);
  for (const auto& t : h.terms()) m += t.coeff * pauli(t.pauli.str());
  return m;
}

/// Embeds a 1- or 2-qubit gate into the full space by explicit index bookkeeping.
inline Mat embed(const Mat& g, const std::vector<int>& qubits, int n) {
  const Eigen::Index d = Eigen::Index{1} << n;
  Mat full = Mat::Zero(d, d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) {
      bool others_equal = true;
      for (int q = 0; q < n; ++q) {
        bool in_gate = false;
        for (int gq : qubits) in_gate |= (gq == q);
        if (!in_gate && (((r >> q) & 1) != ((c >> q) & 1))) others_equal = false;
      }
      if (!others_equal) continue;
      int gr = 0, gc = 0;
      for (int gq : qubits) {
        gr = 2 * gr + static_cast<int>((r >> gq) & 1);
        gc = 2 * gc + static_cast<int>((c >> gq) & 1);
      }
      full(r, c) = g(gr, gc);
    }
  return full;
}

inline Mat unitary(const qkbo::Ansatz& a, const Eigen::VectorXd& theta) {
  const int n = a.num_qubits();
  const Eigen::Index d = Eigen::Index{1} << n;
  Mat u = Mat::Identity(d, d);
  const cplx i{0, 1};
  for (const auto& e : a.program()) {
    if (auto* g = std::get_if<qkbo::FixedGate>(&e)) {
      u = embed(g->matrix, g->qubits, n) * u;
    } else {
      const auto& r = std::get<qkbo::PauliRotation>(e);
      const double t = theta[r.param];
      u = (std::cos(t / 2) * Mat::Identity(d, d) - i * std::sin(t / 2) * pauli(r.pauli.str())) * u;
    }
  }
  return u;
}

inline Eigen::VectorXcd state(const qkbo::Ansatz& a, const Eigen::VectorXd& theta) {
  return oracle::unitary(a, theta).col(0);
}

inline Eigen::VectorXd random_angles(std::mt19937_64& rng, Eigen::Index p) {
  std::uniform_real_distribution<double> u(-M_PI, M_PI);
  Eigen::VectorXd x(p);
  for (auto& v : x) v = u(rng);
  return x;
}

inline Eigen::VectorXcd random_state(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> nd;
  Eigen::VectorXcd v(Eigen::Index{1} << n);
  for (auto& c : v) c = cplx(nd(rng), nd(rng));
  return v / v.norm();
}

}  // namespace oracle
