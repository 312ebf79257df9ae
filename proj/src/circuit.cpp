#include "qkbo/circuit.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "qkbo/errors.hpp"

namespace qkbo {

namespace {

using Index = Eigen::Index;

int parse_tagged(const std::string& tok, char tag) {
  if (tok.size() < 2 || tok[0] != tag) throw ConfigError("expected '" + std::string(1, tag) + "<int>', got '" + tok + "'");
  try {
    std::size_t used = 0;
    int v = std::stoi(tok.substr(1), &used);
    if (used + 1 != tok.size()) throw ConfigError("trailing characters in '" + tok + "'");
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("bad integer in '" + tok + "'");
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

}  // namespace

Eigen::Matrix2cd ry_matrix(double theta) {
  const double c = std::cos(theta / 2), s = std::sin(theta / 2);
  Eigen::Matrix2cd m;
  m << c, -s, s, c;
  return m;
}

Eigen::Matrix2cd hadamard_matrix() {
  const double r = std::numbers::sqrt2 / 2;
  Eigen::Matrix2cd m;
  m << r, r, r, -r;
  return m;
}

Eigen::Matrix2cd rotation_matrix(Pauli p, double theta) {
  const double c = std::cos(theta / 2), s = std::sin(theta / 2);
  const cplx i{0.0, 1.0};
  Eigen::Matrix2cd m;
  switch (p) {
    case Pauli::I: m << cplx(c, -s), 0.0, 0.0, cplx(c, -s); break;
    case Pauli::X: m << c, -i * s, -i * s, c; break;
    case Pauli::Y: m << c, -s, s, c; break;
    case Pauli::Z: m << cplx(c, -s), 0.0, 0.0, cplx(c, s); break;
  }
  return m;
}

Eigen::Matrix4cd cx_matrix() {
  Eigen::Matrix4cd m = Eigen::Matrix4cd::Zero();
  m(0, 0) = m(1, 1) = m(2, 3) = m(3, 2) = 1.0;
  return m;
}

Ansatz::Ansatz(int num_qubits) : n_(num_qubits) {
  if (num_qubits < 1 || num_qubits > 30) throw InvalidSizeError("ansatz needs 1..30 qubits");
}

void Ansatz::check_qubit(int q) const {
  if (q < 0 || q >= n_) throw IndexError("qubit " + std::to_string(q) + " out of range");
}

void Ansatz::add_fixed(std::vector<int> qubits, Eigen::MatrixXcd matrix, std::string name) {
  if (qubits.empty() || qubits.size() > 2) throw UnsupportedError("fixed gates act on 1 or 2 qubits");
  for (int q : qubits) check_qubit(q);
  if (qubits.size() == 2 && qubits[0] == qubits[1]) throw ConfigError("two-qubit gate on repeated qubit");
  const Index dim = Index{1} << qubits.size();
  if (matrix.rows() != dim || matrix.cols() != dim) throw ShapeError("fixed gate matrix has wrong shape");
  program_.emplace_back(FixedGate{std::move(qubits), std::move(matrix), std::move(name)});
}

void Ansatz::add_cx(int control, int target) {
  add_fixed({control, target}, cx_matrix(), "CX");
}

int Ansatz::add_ry(int qubit) {
  check_qubit(qubit);
  return add_rotation(PauliString::single(n_, qubit, Pauli::Y));
}

int Ansatz::add_rotation(const PauliString& p, int param) {
  if (p.num_qubits() != n_) throw ShapeError("rotation Pauli has wrong qubit count");
  if (param < 0) param = p_;
  if (param >= p_) {
    p_ = param + 1;
    param_uses_.resize(static_cast<std::size_t>(p_), 0);
  }
  ++param_uses_[static_cast<std::size_t>(param)];
  program_.emplace_back(PauliRotation{p, param});
  return param;
}

std::size_t Ansatz::count_fixed(const std::string& name) const {
  return static_cast<std::size_t>(std::count_if(program_.begin(), program_.end(), [&](const Element& e) {
    auto* g = std::get_if<FixedGate>(&e);
    return g && g->name == name;
  }));
}

bool Ansatz::parameters_independent() const {
  return std::all_of(param_uses_.begin(), param_uses_.end(), [](int u) { return u == 1; });
}

std::string Ansatz::to_text() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "QUBITS " << n_ << '\n';
  for (const auto& e : program_) {
    if (auto* r = std::get_if<PauliRotation>(&e)) {
      auto sup = r->pauli.support();
      if (sup.size() == 1 && r->pauli[sup[0]] == Pauli::Y)
        os << "RY q" << sup[0] << " p" << r->param << '\n';
      else
        os << "PPR " << r->pauli.str() << " p" << r->param << '\n';
    } else {
      const auto& g = std::get<FixedGate>(e);
      if (g.name == "CX" && g.matrix.isApprox(Eigen::MatrixXcd(cx_matrix()), 0.0)) {
        os << "CX q" << g.qubits[0] << " q" << g.qubits[1] << '\n';
        continue;
      }
      os << "FIXED q" << g.qubits[0];
      if (g.qubits.size() == 2) os << ",q" << g.qubits[1];
      for (Index r = 0; r < g.matrix.rows(); ++r)
        for (Index c = 0; c < g.matrix.cols(); ++c) os << ' ' << g.matrix(r, c).real() << ',' << g.matrix(r, c).imag();
      os << '\n';
    }
  }
  return os.str();
}

Ansatz Ansatz::from_text(std::istream& in) {
  std::string line;
  std::optional<Ansatz> a;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string op;
    if (!(ls >> op)) continue;
    if (op == "QUBITS") {
      int n;
      if (!(ls >> n) || a) throw ConfigError("bad QUBITS line");
      a.emplace(n);
      continue;
    }
    if (!a) throw ConfigError("ansatz text must start with QUBITS <n>");
    std::string t1, t2;
    if (op == "RY") {
      ls >> t1 >> t2;
      int q = parse_tagged(t1, 'q');
      a->check_qubit(q);
      a->add_rotation(PauliString::single(a->n_, q, Pauli::Y), parse_tagged(t2, 'p'));
    } else if (op == "PPR") {
      ls >> t1 >> t2;
      a->add_rotation(PauliString(t1), parse_tagged(t2, 'p'));
    } else if (op == "CX") {
      ls >> t1 >> t2;
      a->add_cx(parse_tagged(t1, 'q'), parse_tagged(t2, 'q'));
    } else if (op == "FIXED") {
      ls >> t1;
      std::vector<int> qs;
      for (const auto& s : split(t1, ',')) qs.push_back(parse_tagged(s, 'q'));
      const Index dim = Index{1} << qs.size();
      Eigen::MatrixXcd m(dim, dim);
      for (Index r = 0; r < dim; ++r)
        for (Index c = 0; c < dim; ++c) {
          std::string tok;
          if (!(ls >> tok)) throw ConfigError("FIXED gate needs " + std::to_string(dim * dim) + " entries");
          auto parts = split(tok, ',');
          if (parts.size() != 2) throw ConfigError("complex entry must be re,im");
          m(r, c) = cplx(std::stod(parts[0]), std::stod(parts[1]));
        }
      a->add_fixed(qs, m);
    } else {
      throw ConfigError("unknown ansatz instruction '" + op + "'");
    }
  }
  if (!a) throw ConfigError("empty ansatz text");
  for (int u : a->param_uses_)
    if (u == 0) throw ConfigError("ansatz parameter indices are not contiguous");
  return *a;
}

Ansatz Ansatz::from_text(const std::string& text) {
  std::istringstream in(text);
  return from_text(in);
}

Ansatz build_brickwork_ry_cx(int n, int depth) {
  if (n < 2) throw InvalidSizeError("brickwork ansatz needs n >= 2");
  if (depth < 1) throw InvalidSizeError("brickwork ansatz needs depth >= 1");
  Ansatz a(n);
  for (int q = 0; q < n; ++q) a.add_ry(q);
  for (int layer = 0; layer < depth; ++layer) {
    for (int q = layer % 2; q + 1 < n; q += 2) {
      a.add_cx(q, q + 1);
      a.add_ry(q);
      a.add_ry(q + 1);
    }
  }
  return a;
}

void apply_1q(Eigen::Ref<Statevector> psi, const Eigen::Matrix2cd& g, int qubit) {
  const Index stride = Index{1} << qubit;
  const Index dim = psi.size();
  const cplx g00 = g(0, 0), g01 = g(0, 1), g10 = g(1, 0), g11 = g(1, 1);
  for (Index base = 0; base < dim; base += 2 * stride)
    for (Index i = base; i < base + stride; ++i) {
      const cplx a0 = psi[i], a1 = psi[i + stride];
      psi[i] = g00 * a0 + g01 * a1;
      psi[i + stride] = g10 * a0 + g11 * a1;
    }
}

void apply_2q(Eigen::Ref<Statevector> psi, const Eigen::Matrix4cd& g, int q0, int q1) {
  const Index b0 = Index{1} << q0, b1 = Index{1} << q1;
  const Index dim = psi.size();
  for (Index x = 0; x < dim; ++x) {
    if (x & (b0 | b1)) continue;
    const Index idx[4] = {x, x | b1, x | b0, x | b0 | b1};
    cplx in[4], out[4];
    for (int k = 0; k < 4; ++k) in[k] = psi[idx[k]];
    for (int r = 0; r < 4; ++r) out[r] = g(r, 0) * in[0] + g(r, 1) * in[1] + g(r, 2) * in[2] + g(r, 3) * in[3];
    for (int k = 0; k < 4; ++k) psi[idx[k]] = out[k];
  }
}

void apply_element(Statevector& psi, const Element& e, const GateAngles& theta) {
  if (auto* g = std::get_if<FixedGate>(&e)) {
    if (g->qubits.size() == 1)
      apply_1q(psi, g->matrix, g->qubits[0]);
    else
      apply_2q(psi, g->matrix, g->qubits[0], g->qubits[1]);
    return;
  }
  const auto& r = std::get<PauliRotation>(e);
  const double t = theta[r.param];
  auto sup = r.pauli.support();
  if (sup.size() == 1) {
    apply_1q(psi, rotation_matrix(r.pauli[sup[0]], t), sup[0]);
    return;
  }
  const double c = std::cos(t / 2), s = std::sin(t / 2);
  Statevector pp = apply_pauli(r.pauli, psi);
  psi = c * psi - cplx(0.0, s) * pp;
}

void apply_rotation_blocks(Eigen::Ref<Statevector> v, const PauliString& p, double t, Index dim) {
  const auto sup = p.support();
  if (sup.size() == 1) {
    apply_1q(v, rotation_matrix(p[sup[0]], t), sup[0]);
    return;
  }
  const double c = std::cos(t / 2), s = std::sin(t / 2);
  for (Index b = 0; b < v.size(); b += dim) {
    const Statevector blk = v.segment(b, dim);
    v.segment(b, dim) = c * blk - cplx(0.0, s) * apply_pauli(p, blk);
  }
}

void apply_element_blocks(Eigen::Ref<Statevector> v, const Element& e, const GateAngles& theta, Index dim,
                          bool inverse) {
  if (auto* g = std::get_if<FixedGate>(&e)) {
    const Eigen::MatrixXcd m = inverse ? Eigen::MatrixXcd(g->matrix.adjoint()) : g->matrix;
    if (g->qubits.size() == 1)
      apply_1q(v, m, g->qubits[0]);
    else
      apply_2q(v, m, g->qubits[0], g->qubits[1]);
    return;
  }
  const auto& r = std::get<PauliRotation>(e);
  apply_rotation_blocks(v, r.pauli, inverse ? -theta[r.param] : theta[r.param], dim);
}

Statevector zero_state(int n) {
  Statevector psi = Statevector::Zero(Index{1} << n);
  psi[0] = 1.0;
  return psi;
}

Statevector simulate_from(const Ansatz& a, const GateAngles& theta, Statevector psi) {
  if (theta.size() != a.num_params()) throw ShapeError("angle vector length does not match ansatz parameter count");
  if (psi.size() != (Index{1} << a.num_qubits())) throw ShapeError("initial state has wrong dimension");
  for (const auto& e : a.program()) apply_element(psi, e, theta);
  return psi;
}

Statevector simulate(const Ansatz& a, const GateAngles& theta) {
  return simulate_from(a, theta, zero_state(a.num_qubits()));
}

Eigen::MatrixXcd unitary(const Ansatz& a, const GateAngles& theta, int max_qubits) {
  if (a.num_qubits() > max_qubits) throw CapacityError("dense unitary exceeds the qubit cap");
  const Index dim = Index{1} << a.num_qubits();
  if (theta.size() != a.num_params()) throw ShapeError("angle vector length does not match ansatz parameter count");
  // All basis columns evolve together as one stacked vector.
  Eigen::MatrixXcd u = Eigen::MatrixXcd::Identity(dim, dim);
  Eigen::Map<Statevector> flat(u.data(), u.size());
  for (const auto& e : a.program()) apply_element_blocks(flat, e, theta, dim);
  return u;
}

double energy(const Ansatz& a, const GateAngles& theta, const PauliSum& h) {
  if (h.num_qubits() != a.num_qubits()) throw ShapeError("Hamiltonian and ansatz qubit counts differ");
  return expectation(h, simulate(a, theta));
}

Eigen::VectorXd parameter_shift_gradient(const Ansatz& a, const GateAngles& theta, const PauliSum& h) {
  if (!a.parameters_independent()) throw UnsupportedError("parameter shift requires one rotation per parameter");
  if (theta.size() != a.num_params()) throw ShapeError("angle vector length does not match ansatz parameter count");
  Eigen::VectorXd g(a.num_params());
  GateAngles t = theta;
  for (Index i = 0; i < theta.size(); ++i) {
    t[i] = theta[i] + std::numbers::pi / 2;
    const double ep = energy(a, t, h);
    t[i] = theta[i] - std::numbers::pi / 2;
    const double em = energy(a, t, h);
    t[i] = theta[i];
    g[i] = 0.5 * (ep - em);
  }
  return g;
}

namespace {

// Draws a multinomial sample of `shots` from probs via conditional binomials, returns the count-weighted
// sum of f(x).
template <typename F>
double sample_group(const Eigen::VectorXd& probs, std::int64_t shots, std::mt19937_64& rng, F&& value) {
  std::int64_t left = shots;
  double mass = 1.0;
  double acc = 0.0;
  for (Index x = 0; x < probs.size() && left > 0; ++x) {
    const double p = probs[x];
    std::int64_t k;
    if (x + 1 == probs.size() || p >= mass) {
      k = left;
    } else {
      const double q = std::clamp(p / mass, 0.0, 1.0);
      k = std::binomial_distribution<std::int64_t>(left, q)(rng);
    }
    if (k) acc += static_cast<double>(k) * value(static_cast<std::uint64_t>(x));
    left -= k;
    mass -= p;
  }
  return acc / static_cast<double>(shots);
}

Eigen::VectorXd outcome_probs(const Statevector& psi, double lambda) {
  Eigen::VectorXd p = psi.cwiseAbs2();
  p /= p.sum();
  if (lambda > 0.0) p = (1.0 - lambda) * p + Eigen::VectorXd::Constant(p.size(), lambda / static_cast<double>(p.size()));
  return p;
}

}  // namespace

double sampled_energy(const Statevector& psi, const PauliSum& h, std::int64_t shots, double depolarizing,
                      std::uint64_t seed, std::uint64_t stream) {
  if (shots <= 0) throw ConfigError("shots must be positive");
  if (depolarizing < 0.0 || depolarizing > 1.0) throw ConfigError("depolarizing parameter must lie in [0,1]");
  std::vector<std::pair<double, std::uint64_t>> zterms, xterms;
  double offset = 0.0;
  for (const auto& t : h.terms()) {
    if (t.pauli.is_identity())
      offset += t.coeff;
    else if (t.pauli.is_diagonal())
      zterms.emplace_back(t.coeff, t.pauli.z_mask());
    else if (t.pauli.is_x_type())
      xterms.emplace_back(t.coeff, t.pauli.x_mask());
    else
      throw UnsupportedError("term " + t.pauli.str() + " is neither Z-diagonal nor X-type");
  }
  std::seed_seq sseq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                     static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::mt19937_64 rng(sseq);
  auto parity_sum = [](const std::vector<std::pair<double, std::uint64_t>>& terms) {
    return [&terms](std::uint64_t x) {
      double v = 0.0;
      for (const auto& [c, m] : terms) v += (std::popcount(x & m) & 1) ? -c : c;
      return v;
    };
  };
  double e = offset;
  if (!zterms.empty()) e += sample_group(outcome_probs(psi, depolarizing), shots, rng, parity_sum(zterms));
  if (!xterms.empty()) {
    Statevector rot = psi;
    const int n = h.num_qubits();
    const Eigen::Matrix2cd had = hadamard_matrix();
    for (int q = 0; q < n; ++q) apply_1q(rot, had, q);
    e += sample_group(outcome_probs(rot, depolarizing), shots, rng, parity_sum(xterms));
  }
  return e;
}

EnergyEvaluator::EnergyEvaluator(Ansatz ansatz, PauliSum h, NoiseModel noise, std::uint64_t seed)
    : ansatz_(std::move(ansatz)), h_(std::move(h)), noise_(noise), seed_(seed) {
  if (h_.num_qubits() != ansatz_.num_qubits()) throw ShapeError("Hamiltonian and ansatz qubit counts differ");
  if (noise_.shots && *noise_.shots <= 0) throw ConfigError("shots must be positive");
  if (noise_.depolarizing < 0.0 || noise_.depolarizing > 1.0) throw ConfigError("depolarizing parameter must lie in [0,1]");
}

double EnergyEvaluator::exact(const GateAngles& theta) const {
  return energy(ansatz_, theta, h_);
}

double EnergyEvaluator::operator()(const GateAngles& theta) {
  const std::uint64_t call = calls_++;
  const Statevector psi = simulate(ansatz_, theta);
  if (noise_.shots) return sampled_energy(psi, h_, *noise_.shots, noise_.depolarizing, seed_, call);
  const double e = expectation(h_, psi);
  if (noise_.depolarizing == 0.0) return e;
  const double mixed = h_.identity_coefficient();
  return (1.0 - noise_.depolarizing) * e + noise_.depolarizing * mixed;
}

Eigen::MatrixXcd haar_unitary(int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXcd z(dim, dim);
  for (Index r = 0; r < dim; ++r)
    for (Index c = 0; c < dim; ++c) z(r, c) = cplx(nd(rng), nd(rng));
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(z);
  Eigen::MatrixXcd q = qr.householderQ();
  Eigen::MatrixXcd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index c = 0; c < dim; ++c) {
    const cplx d = r(c, c);
    q.col(c) *= d / std::abs(d);
  }
  return q;
}

std::string angles_to_csv(const GateAngles& theta) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (Index i = 0; i < theta.size(); ++i) os << (i ? "," : "") << theta[i];
  return os.str();
}

GateAngles angles_from_csv(const std::string& row) {
  auto parts = split(row, ',');
  GateAngles t(static_cast<Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    try {
      t[static_cast<Index>(i)] = std::stod(parts[i]);
    } catch (const std::logic_error&) {
      throw ConfigError("bad angle '" + parts[i] + "'");
    }
  }
  return t;
}

}  // namespace qkbo
