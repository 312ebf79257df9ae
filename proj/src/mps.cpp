#include "qkbo/mps.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include <unsupported/Eigen/KroneckerProduct>

#include "qkbo/errors.hpp"

namespace qkbo {

namespace {

using Index = Eigen::Index;
using Mat = Eigen::MatrixXcd;

constexpr double kZeroSingular = 1e-13;
constexpr double kReoptTol = 1e-10;
constexpr int kReoptSweeps = 50;

Mat thin_q(const Mat& m) {
  const Index k = std::min(m.rows(), m.cols());
  Eigen::HouseholderQR<Mat> qr(m);
  return qr.householderQ() * Mat::Identity(m.rows(), k);
}

Eigen::Matrix4cd swap_qubit_order(const Eigen::Matrix4cd& g) {
  const int perm[4] = {0, 2, 1, 3};
  Eigen::Matrix4cd out;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) out(perm[r], perm[c]) = g(r, c);
  return out;
}

Eigen::Matrix2cd pauli_matrix(Pauli p) {
  Eigen::Matrix2cd m;
  switch (p) {
    case Pauli::I: m << 1, 0, 0, 1; break;
    case Pauli::X: m << 0, 1, 1, 0; break;
    case Pauli::Y: m << 0, cplx(0, -1), cplx(0, 1), 0; break;
    case Pauli::Z: m << 1, 0, 0, -1; break;
  }
  return m;
}

}  // namespace

MPS::MPS(int n) {
  if (n < 1) throw InvalidSizeError("MPS needs at least one site");
  sites_.resize(static_cast<std::size_t>(n));
  for (auto& s : sites_) {
    s[0] = Mat::Ones(1, 1);
    s[1] = Mat::Zero(1, 1);
  }
}

int MPS::bond_dim(int b) const {
  if (b < 0 || b + 1 >= num_sites()) throw IndexError("bond index out of range");
  return static_cast<int>(sites_[static_cast<std::size_t>(b)][0].cols());
}

std::vector<int> MPS::bond_dims() const {
  std::vector<int> out;
  for (int b = 0; b + 1 < num_sites(); ++b) out.push_back(bond_dim(b));
  return out;
}

int MPS::max_bond() const {
  int m = 1;
  for (int b : bond_dims()) m = std::max(m, b);
  return m;
}

void MPS::left_orthogonalize(int q) {
  auto& s = sites_[static_cast<std::size_t>(q)];
  const Index dl = s[0].rows(), dr = s[0].cols();
  Mat m(2 * dl, dr);
  m << s[0], s[1];
  Eigen::HouseholderQR<Mat> qr(m);
  const Index k = std::min(2 * dl, dr);
  Mat q_mat = qr.householderQ() * Mat::Identity(2 * dl, k);
  Mat r = q_mat.adjoint() * m;
  s[0] = q_mat.topRows(dl);
  s[1] = q_mat.bottomRows(dl);
  auto& nxt = sites_[static_cast<std::size_t>(q + 1)];
  nxt[0] = r * nxt[0];
  nxt[1] = r * nxt[1];
}

void MPS::right_orthogonalize(int q) {
  auto& s = sites_[static_cast<std::size_t>(q)];
  const Index dl = s[0].rows(), dr = s[0].cols();
  Mat m(dl, 2 * dr);
  m << s[0], s[1];
  Mat q_mat = thin_q(m.adjoint());  // (2dr x k)
  Mat l = m * q_mat;                // dl x k, m = l q^H
  Mat qh = q_mat.adjoint();
  s[0] = qh.leftCols(dr);
  s[1] = qh.rightCols(dr);
  auto& prv = sites_[static_cast<std::size_t>(q - 1)];
  prv[0] = prv[0] * l;
  prv[1] = prv[1] * l;
}

void MPS::canonicalize(int center) {
  if (center < 0 || center >= num_sites()) throw IndexError("canonical center out of range");
  for (int q = lo_; q < center; ++q) left_orthogonalize(q);
  for (int q = hi_; q > center; --q) right_orthogonalize(q);
  lo_ = hi_ = center;
}

void MPS::apply_1q(const Eigen::Matrix2cd& g, int site) {
  if (site < 0 || site >= num_sites()) throw IndexError("site index out of range");
  auto& s = sites_[static_cast<std::size_t>(site)];
  Mat a0 = g(0, 0) * s[0] + g(0, 1) * s[1];
  Mat a1 = g(1, 0) * s[0] + g(1, 1) * s[1];
  s[0] = std::move(a0);
  s[1] = std::move(a1);
}

TruncationReport MPS::apply_2q(const Eigen::Matrix4cd& g, int left, int chi_max, bool reoptimize) {
  if (left < 0 || left + 1 >= num_sites()) throw IndexError("two-site gate out of range");
  canonicalize(left);
  auto& A = sites_[static_cast<std::size_t>(left)];
  auto& B = sites_[static_cast<std::size_t>(left + 1)];
  const Index dl = A[0].rows(), dr = B[0].cols();

  Mat t[2][2];
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) t[a][b] = A[a] * B[b];
  Mat m = Mat::Zero(2 * dl, 2 * dr);
  for (int s1 = 0; s1 < 2; ++s1)
    for (int s2 = 0; s2 < 2; ++s2) {
      auto blk = m.block(s1 * dl, s2 * dr, dl, dr);
      for (int t1 = 0; t1 < 2; ++t1)
        for (int t2 = 0; t2 < 2; ++t2) {
          const cplx c = g(2 * s1 + s2, 2 * t1 + t2);
          if (c != cplx(0.0)) blk += c * t[t1][t2];
        }
    }
  m /= m.norm();

  // JacobiSVD: Eigen 3.4.0 BDCSVD fails on the strongly degenerate spectra common here.
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double total = sv.squaredNorm();
  Index nonzero = 0;
  while (nonzero < sv.size() && sv[nonzero] > kZeroSingular * sv[0]) ++nonzero;
  nonzero = std::max<Index>(nonzero, 1);
  const Index k = chi_max > 0 ? std::min<Index>(nonzero, chi_max) : nonzero;

  TruncationReport rep;
  rep.available = static_cast<int>(nonzero);
  rep.kept = static_cast<int>(k);
  rep.svd_fidelity = sv.head(k).squaredNorm() / total;
  rep.fidelity = rep.svd_fidelity;

  Mat q = svd.matrixU().leftCols(k);
  Mat r = sv.head(k).asDiagonal() * svd.matrixV().leftCols(k).adjoint();

  if (reoptimize && k < nonzero) {
    // Alternating updates of the left isometry and right factor against the exact two-site tensor.
    double f_prev = r.squaredNorm();
    Mat best_q = q, best_r = r;
    double best_f = f_prev;
    for (int sweep = 1; sweep <= kReoptSweeps; ++sweep) {
      q = thin_q(m * r.adjoint());
      r = q.adjoint() * m;
      const double f = r.squaredNorm();
      rep.sweeps = sweep;
      if (f > best_f) {
        best_f = f;
        best_q = q;
        best_r = r;
      }
      if (std::abs(f - f_prev) < kReoptTol * f) break;
      f_prev = f;
    }
    q = best_q;
    r = best_r;
    rep.fidelity = best_f / total;
  }
  r /= r.norm();

  A[0] = q.topRows(dl);
  A[1] = q.bottomRows(dl);
  B[0] = r.leftCols(dr);
  B[1] = r.rightCols(dr);
  lo_ = hi_ = left + 1;
  return rep;
}

TruncationReport MPS::apply(const Element& e, const GateAngles& theta, int chi_max, bool reoptimize) {
  if (auto* g = std::get_if<FixedGate>(&e)) {
    if (g->qubits.size() == 1) {
      apply_1q(g->matrix, g->qubits[0]);
      return {};
    }
    const int a = g->qubits[0], b = g->qubits[1];
    if (b == a + 1) return apply_2q(g->matrix, a, chi_max, reoptimize);
    if (a == b + 1) return apply_2q(swap_qubit_order(g->matrix), b, chi_max, reoptimize);
    throw UnsupportedError("non-adjacent two-qubit gate on MPS");
  }
  const auto& r = std::get<PauliRotation>(e);
  const double t = theta[r.param];
  auto sup = r.pauli.support();
  if (sup.size() == 1) {
    apply_1q(rotation_matrix(r.pauli[sup[0]], t), sup[0]);
    return {};
  }
  if (sup.size() == 2 && sup[1] == sup[0] + 1) {
    Eigen::Matrix4cd p = Eigen::kroneckerProduct(pauli_matrix(r.pauli[sup[0]]), pauli_matrix(r.pauli[sup[1]]));
    Eigen::Matrix4cd u = std::cos(t / 2) * Eigen::Matrix4cd::Identity() - cplx(0, std::sin(t / 2)) * p;
    return apply_2q(u, sup[0], chi_max, reoptimize);
  }
  throw UnsupportedError("MPS supports Pauli rotations on at most two adjacent qubits");
}

cplx MPS::overlap(const MPS& other) const {
  if (other.num_sites() != num_sites()) throw ShapeError("MPS overlap between different sizes");
  Mat env = Mat::Ones(1, 1);
  for (int q = 0; q < num_sites(); ++q) {
    const auto& a = sites_[static_cast<std::size_t>(q)];
    const auto& b = other.sites_[static_cast<std::size_t>(q)];
    Mat nxt = a[0].adjoint() * env * b[0];
    nxt.noalias() += a[1].adjoint() * env * b[1];
    env = std::move(nxt);
  }
  return env(0, 0);
}

double MPS::norm2() const {
  return overlap(*this).real();
}

Statevector MPS::to_statevector() const {
  const int n = num_sites();
  if (n > 24) throw CapacityError("statevector conversion limited to 24 sites");
  // Sweep left to right keeping a (2^q x D) block of partial amplitudes.
  Mat acc = Mat::Ones(1, 1);
  for (int q = 0; q < n; ++q) {
    const auto& s = sites_[static_cast<std::size_t>(q)];
    Mat nxt(acc.rows() * 2, s[0].cols());
    // Basis index bit q is qubit q, so the new bit is the most significant one so far.
    nxt.topRows(acc.rows()) = acc * s[0];
    nxt.bottomRows(acc.rows()) = acc * s[1];
    acc = std::move(nxt);
  }
  return acc.col(0);
}

std::string MPS::dump() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "MPS " << num_sites() << '\n';
  for (int b : bond_dims()) os << b << ' ';
  os << '\n';
  for (const auto& s : sites_)
    for (const auto& m : s) {
      for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) os << m(r, c).real() << ' ' << m(r, c).imag() << ' ';
      os << '\n';
    }
  return os.str();
}

MPS MPS::load(std::istream& in) {
  std::string tag;
  int n;
  if (!(in >> tag >> n) || tag != "MPS" || n < 1) throw ConfigError("bad MPS header");
  std::vector<Index> dims(static_cast<std::size_t>(n + 1), 1);
  for (int b = 1; b < n; ++b)
    if (!(in >> dims[static_cast<std::size_t>(b)])) throw ConfigError("bad MPS bond dims");
  MPS out(n);
  for (int q = 0; q < n; ++q)
    for (auto& m : out.sites_[static_cast<std::size_t>(q)]) {
      m.resize(dims[static_cast<std::size_t>(q)], dims[static_cast<std::size_t>(q + 1)]);
      for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) {
          double re, im;
          if (!(in >> re >> im)) throw ConfigError("truncated MPS dump");
          m(r, c) = cplx(re, im);
        }
    }
  // Gauge is unknown after loading.
  out.lo_ = 0;
  out.hi_ = n - 1;
  return out;
}

BlockSplit split_ansatz(const Ansatz& a, int first_block_param, const GateAngles& theta_prefix) {
  if (first_block_param < 0 || first_block_param >= a.num_params())
    throw ConfigError("first block parameter out of range");
  if (theta_prefix.size() != first_block_param) throw ShapeError("prefix angles must cover parameters below the block");
  const auto& prog = a.program();
  auto is_block = [&](const Element& e) {
    auto* r = std::get_if<PauliRotation>(&e);
    return r && r->param >= first_block_param;
  };
  std::size_t first = prog.size(), last = 0;
  for (std::size_t i = 0; i < prog.size(); ++i)
    if (is_block(prog[i])) {
      first = std::min(first, i);
      last = i;
    }

  BlockSplit out{Ansatz(a.num_qubits()), theta_prefix, Ansatz(a.num_qubits())};
  std::set<int> touched;
  auto qubits_of = [](const Element& e) {
    if (auto* g = std::get_if<FixedGate>(&e)) return g->qubits;
    return std::get<PauliRotation>(e).pauli.support();
  };
  auto append = [](Ansatz& dst, const Element& e, int param_shift) {
    if (auto* g = std::get_if<FixedGate>(&e))
      dst.add_fixed(g->qubits, g->matrix, g->name);
    else {
      const auto& r = std::get<PauliRotation>(e);
      dst.add_rotation(r.pauli, r.param - param_shift);
    }
  };

  for (std::size_t i = 0; i <= last; ++i) {
    const Element& e = prog[i];
    if (i < first) {
      append(out.prefix, e, 0);
      continue;
    }
    const auto qs = qubits_of(e);
    const bool in_cone = is_block(e) || std::any_of(qs.begin(), qs.end(), [&](int q) { return touched.count(q) > 0; });
    if (!in_cone) {
      append(out.prefix, e, 0);
      continue;
    }
    touched.insert(qs.begin(), qs.end());
    if (is_block(e)) {
      append(out.block, e, first_block_param);
      continue;
    }
    if (auto* r = std::get_if<PauliRotation>(&e)) {
      // Prefix-parameter rotation trapped inside the light cone: freeze it as a fixed gate.
      if (qs.size() != 1) throw UnsupportedError("multi-qubit frozen rotation inside block");
      out.block.add_fixed(qs, rotation_matrix(r->pauli[qs[0]], theta_prefix[r->param]), "FROZEN");
    } else {
      append(out.block, e, 0);
    }
  }
  return out;
}

CompressionResult compress_prefix(const BlockSplit& split, int chi_max) {
  CompressionResult res{MPS(split.prefix.num_qubits())};
  GateAngles theta = GateAngles::Zero(std::max<Eigen::Index>(split.prefix.num_params(), split.theta_prefix.size()));
  theta.head(split.theta_prefix.size()) = split.theta_prefix;
  for (const auto& e : split.prefix.program()) {
    TruncationReport r = res.state.apply(e, theta, chi_max, true);
    if (r.kept < r.available) ++res.truncations;
    res.fidelity_estimate *= r.fidelity;
  }
  return res;
}

MPS apply_block(const MPS& psiA, const Ansatz& block, const GateAngles& theta) {
  if (theta.size() != block.num_params()) throw ShapeError("block angle vector has wrong length");
  MPS out = psiA;
  for (const auto& e : block.program()) out.apply(e, theta, 0, false);
  return out;
}

double approx_state_kernel(const MPS& psiA, const Ansatz& block, const GateAngles& theta, const GateAngles& theta2) {
  const MPS a = apply_block(psiA, block, theta);
  const MPS b = apply_block(psiA, block, theta2);
  return std::norm(b.overlap(a));
}

}  // namespace qkbo
