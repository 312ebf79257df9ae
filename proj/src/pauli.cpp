#include "qkbo/pauli.hpp"

#include <bit>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "qkbo/errors.hpp"

namespace qkbo {

namespace {

Pauli parse_pauli(char c) {
  switch (c) {
    case 'I': return Pauli::I;
    case 'X': return Pauli::X;
    case 'Y': return Pauli::Y;
    case 'Z': return Pauli::Z;
    default: throw ConfigError(std::string("invalid Pauli symbol '") + c + "'");
  }
}

// i^k for k mod 4
cplx i_power(int k) {
  switch (k & 3) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, 1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, -1.0};
  }
}

}  // namespace

PauliString::PauliString(int num_qubits) {
  if (num_qubits < 1 || num_qubits > 62) throw InvalidSizeError("Pauli string needs 1..62 qubits");
  ops_.assign(static_cast<std::size_t>(num_qubits), Pauli::I);
}

PauliString::PauliString(std::string_view ops) {
  if (ops.empty() || ops.size() > 62) throw InvalidSizeError("Pauli string needs 1..62 qubits");
  ops_.reserve(ops.size());
  for (char c : ops) ops_.push_back(parse_pauli(c));
}

PauliString PauliString::single(int num_qubits, int qubit, Pauli op) {
  PauliString p(num_qubits);
  p.set(qubit, op);
  return p;
}

void PauliString::set(int qubit, Pauli op) {
  if (qubit < 0 || qubit >= num_qubits()) throw IndexError("qubit index out of range");
  ops_[static_cast<std::size_t>(qubit)] = op;
}

bool PauliString::is_identity() const {
  for (Pauli p : ops_)
    if (p != Pauli::I) return false;
  return true;
}

bool PauliString::is_diagonal() const {
  for (Pauli p : ops_)
    if (p == Pauli::X || p == Pauli::Y) return false;
  return true;
}

bool PauliString::is_x_type() const {
  for (Pauli p : ops_)
    if (p == Pauli::Z || p == Pauli::Y) return false;
  return true;
}

std::vector<int> PauliString::support() const {
  std::vector<int> out;
  for (int q = 0; q < num_qubits(); ++q)
    if (ops_[static_cast<std::size_t>(q)] != Pauli::I) out.push_back(q);
  return out;
}

std::string PauliString::str() const {
  std::string s;
  s.reserve(ops_.size());
  for (Pauli p : ops_) s.push_back(static_cast<char>(p));
  return s;
}

std::uint64_t PauliString::x_mask() const {
  std::uint64_t m = 0;
  for (int q = 0; q < num_qubits(); ++q) {
    Pauli p = ops_[static_cast<std::size_t>(q)];
    if (p == Pauli::X || p == Pauli::Y) m |= std::uint64_t{1} << q;
  }
  return m;
}

std::uint64_t PauliString::z_mask() const {
  std::uint64_t m = 0;
  for (int q = 0; q < num_qubits(); ++q) {
    Pauli p = ops_[static_cast<std::size_t>(q)];
    if (p == Pauli::Z || p == Pauli::Y) m |= std::uint64_t{1} << q;
  }
  return m;
}

int PauliString::y_count() const {
  int c = 0;
  for (Pauli p : ops_) c += (p == Pauli::Y);
  return c;
}

Statevector apply_pauli(const PauliString& p, const Statevector& psi) {
  const std::uint64_t dim = std::uint64_t{1} << p.num_qubits();
  if (static_cast<std::uint64_t>(psi.size()) != dim) throw ShapeError("statevector size does not match Pauli string");
  const std::uint64_t xm = p.x_mask();
  const std::uint64_t zm = p.z_mask();
  const cplx base = i_power(p.y_count());
  Statevector out(psi.size());
  for (std::uint64_t x = 0; x < dim; ++x) {
    const double sign = (std::popcount(x & zm) & 1) ? -1.0 : 1.0;
    out[static_cast<Eigen::Index>(x ^ xm)] = base * sign * psi[static_cast<Eigen::Index>(x)];
  }
  return out;
}

double pauli_expectation(const PauliString& p, const Statevector& psi) {
  const std::uint64_t dim = std::uint64_t{1} << p.num_qubits();
  if (static_cast<std::uint64_t>(psi.size()) != dim) throw ShapeError("statevector size does not match Pauli string");
  const std::uint64_t xm = p.x_mask();
  const std::uint64_t zm = p.z_mask();
  cplx acc{0.0, 0.0};
  for (std::uint64_t x = 0; x < dim; ++x) {
    const double sign = (std::popcount(x & zm) & 1) ? -1.0 : 1.0;
    acc += sign * std::conj(psi[static_cast<Eigen::Index>(x ^ xm)]) * psi[static_cast<Eigen::Index>(x)];
  }
  return (i_power(p.y_count()) * acc).real();
}

void PauliSum::add(double coeff, const PauliString& p) {
  if (p.num_qubits() != n_) throw ShapeError("Pauli string qubit count does not match sum");
  if (coeff == 0.0) return;
  auto it = index_.find(p);
  if (it != index_.end()) {
    terms_[it->second].coeff += coeff;
    if (terms_[it->second].coeff == 0.0) {
      const std::size_t idx = it->second;
      terms_.erase(terms_.begin() + static_cast<std::ptrdiff_t>(idx));
      index_.erase(it);
      for (auto& [key, pos] : index_)
        if (pos > idx) --pos;
    }
    return;
  }
  index_.emplace(p, terms_.size());
  terms_.push_back({coeff, p});
}

double PauliSum::identity_coefficient() const {
  for (const auto& t : terms_)
    if (t.pauli.is_identity()) return t.coeff;
  return 0.0;
}

PauliSum PauliSum::scaled(double factor) const {
  PauliSum out(n_);
  for (const auto& t : terms_) out.add(factor * t.coeff, t.pauli);
  return out;
}

PauliSum PauliSum::operator+(const PauliSum& other) const {
  if (other.n_ != n_) throw ShapeError("adding Pauli sums of different sizes");
  PauliSum out = *this;
  for (const auto& t : other.terms_) out.add(t.coeff, t.pauli);
  return out;
}

PauliSum build_tfim(int n, double J, double hx, double hz, bool periodic) {
  if (n < 2) throw InvalidSizeError("TFIM needs at least 2 qubits");
  PauliSum h(n);
  std::set<std::pair<int, int>> edges;
  for (int i = 0; i + 1 < n; ++i) edges.insert({i, i + 1});
  if (periodic) edges.insert({0, n - 1});
  for (auto [a, b] : edges) {
    PauliString p(n);
    p.set(a, Pauli::Z);
    p.set(b, Pauli::Z);
    h.add(J, p);
  }
  for (int i = 0; i < n; ++i) h.add(hx, PauliString::single(n, i, Pauli::X));
  for (int i = 0; i < n; ++i) h.add(hz, PauliString::single(n, i, Pauli::Z));
  return h;
}

double expectation(const PauliSum& h, const Statevector& psi) {
  if (psi.size() != (Eigen::Index{1} << h.num_qubits())) throw ShapeError("statevector size does not match Hamiltonian");
  double e = 0.0;
  for (const auto& t : h.terms()) e += t.coeff * pauli_expectation(t.pauli, psi);
  return e;
}

double trace_coefficient(const PauliSum& h) {
  return std::ldexp(h.identity_coefficient(), h.num_qubits());
}

PauliSum remove_trace(const PauliSum& h) {
  PauliSum out = h;
  const double c = h.identity_coefficient();
  if (c != 0.0) out.add(-c, PauliString(h.num_qubits()));
  return out;
}

Eigen::MatrixXcd to_dense(const PauliSum& h) {
  const Eigen::Index dim = Eigen::Index{1} << h.num_qubits();
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
  for (const auto& t : h.terms()) {
    const std::uint64_t xm = t.pauli.x_mask();
    const std::uint64_t zm = t.pauli.z_mask();
    const cplx base = i_power(t.pauli.y_count()) * t.coeff;
    for (std::uint64_t x = 0; x < static_cast<std::uint64_t>(dim); ++x) {
      const double sign = (std::popcount(x & zm) & 1) ? -1.0 : 1.0;
      m(static_cast<Eigen::Index>(x ^ xm), static_cast<Eigen::Index>(x)) += base * sign;
    }
  }
  return m;
}

std::string to_text(const PauliSum& h) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (const auto& t : h.terms()) os << t.coeff << ' ' << t.pauli.str() << '\n';
  return os.str();
}

PauliSum pauli_sum_from_text(std::istream& in) {
  std::vector<std::pair<double, std::string>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    double c;
    std::string ops;
    if (!(ls >> c)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      throw ConfigError("malformed Hamiltonian term on line " + std::to_string(lineno));
    }
    if (!(ls >> ops)) throw ConfigError("missing Pauli string on line " + std::to_string(lineno));
    rows.emplace_back(c, ops);
  }
  if (rows.empty()) throw ConfigError("Hamiltonian text contains no terms");
  PauliSum h(static_cast<int>(rows.front().second.size()));
  for (const auto& [c, ops] : rows) h.add(c, PauliString(ops));
  return h;
}

PauliSum pauli_sum_from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  return pauli_sum_from_text(in);
}

}  // namespace qkbo
