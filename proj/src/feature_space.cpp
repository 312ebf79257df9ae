#include "qkbo/feature_space.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>

#include <unsupported/Eigen/KroneckerProduct>

#include "qkbo/errors.hpp"

namespace qkbo {

namespace {

using Index = Eigen::Index;
using Mat = Eigen::MatrixXcd;

// Upper limit on 3^p times the per-operator entry count for dense constructions.
constexpr std::uint64_t kDenseEntryCap = std::uint64_t{1} << 24;

struct Layer {
  Mat R;
  Mat P;
  int param;
};

struct Segmented {
  int n;
  int p;
  std::vector<Layer> layers;
  Mat final_R;
};

Mat pauli_dense(const PauliString& p) {
  PauliSum s(p.num_qubits());
  s.add(1.0, p);
  return to_dense(s);
}

Segmented segment(const Ansatz& a) {
  if (!a.parameters_independent()) throw UnsupportedError("feature maps require one rotation per parameter");
  const Index dim = Index{1} << a.num_qubits();
  Segmented seg{a.num_qubits(), a.num_params(), {}, Mat::Identity(dim, dim)};
  const GateAngles unused = GateAngles::Zero(a.num_params());
  Mat R = Mat::Identity(dim, dim);
  for (const auto& e : a.program()) {
    if (auto* r = std::get_if<PauliRotation>(&e)) {
      seg.layers.push_back({R, pauli_dense(r->pauli), r->param});
      R = Mat::Identity(dim, dim);
      continue;
    }
    for (Index c = 0; c < dim; ++c) {
      Statevector col = R.col(c);
      apply_element(col, e, unused);
      R.col(c) = col;
    }
  }
  seg.final_R = R;
  return seg;
}

std::uint64_t pow3(int p) {
  std::uint64_t v = 1;
  for (int i = 0; i < p; ++i) v *= 3;
  return v;
}

void check_cap(int p, std::uint64_t entries_per_item) {
  if (p > 20 || pow3(p) * entries_per_item > kDenseEntryCap)
    throw CapacityError("dense feature construction exceeds the size cap");
}

// Applies the three branch maps of one rotation layer to a density-like operator.
std::array<Mat, 3> state_branches(const Layer& L, const Mat& o) {
  const Mat rho = L.R * o * L.R.adjoint();
  const Mat prp = L.P * rho * L.P;
  const cplx i{0.0, 1.0};
  return {0.5 * (rho + prp), 0.5 * i * (rho * L.P - L.P * rho), 0.5 * (rho - prp)};
}

struct SuperLayer {
  Mat K;
  std::array<Mat, 3> M;
};

SuperLayer super_layer(const Layer& L) {
  const Index d = L.P.rows();
  const Mat I = Mat::Identity(d, d);
  const Mat ppc = Eigen::kroneckerProduct(L.P, L.P.conjugate()).eval();
  const Mat ipc = Eigen::kroneckerProduct(I, L.P.conjugate()).eval();
  const Mat pi = Eigen::kroneckerProduct(L.P, I).eval();
  const Mat id = Mat::Identity(d * d, d * d);
  const cplx i{0.0, 1.0};
  SuperLayer s;
  s.K = Eigen::kroneckerProduct(L.R, L.R.conjugate()).eval();
  s.M = {0.5 * (id + ppc), 0.5 * (i * ipc - i * pi), 0.5 * (id - ppc)};
  return s;
}

Eigen::VectorXd realify(const Mat& m) {
  const Index sz = m.size();
  Eigen::VectorXd v(2 * sz);
  Eigen::Map<const Eigen::VectorXcd> flat(m.data(), sz);
  v.head(sz) = flat.real();
  v.tail(sz) = flat.imag();
  return v;
}

Mat complexify(const Eigen::VectorXd& v, Index rows, Index cols) {
  const Index sz = rows * cols;
  Mat m(rows, cols);
  for (Index k = 0; k < sz; ++k) m.data()[k] = cplx(v[k], v[sz + k]);
  return m;
}

// Real-span dimension of all branch products, keeping an orthonormal basis per layer.
// Pivot magnitudes stand in for singular values in the relative cutoff.
int span_rank(const Mat& init, std::size_t layers, const std::function<std::array<Mat, 3>(std::size_t, const Mat&)>& step,
              double rel_cutoff) {
  std::vector<Mat> basis{init / init.norm()};
  const Index rows = init.rows(), cols = init.cols();
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd cand(2 * rows * cols, static_cast<Index>(3 * basis.size()));
    Index c = 0;
    for (const auto& b : basis)
      for (const auto& img : step(l, b)) cand.col(c++) = realify(img);
    // Rank-revealing QR; the gap between kept and dropped pivots is many orders of magnitude here.
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(cand);
    const Eigen::MatrixXd R = qr.matrixR().template triangularView<Eigen::Upper>();
    const Index diag = std::min(R.rows(), R.cols());
    Index r = 0;
    while (r < diag && std::abs(R(r, r)) > rel_cutoff * std::abs(R(0, 0))) ++r;
    Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(cand.rows(), r);
    Q = qr.householderQ() * Q;
    basis.clear();
    for (Index k = 0; k < r; ++k) basis.push_back(complexify(Q.col(k), rows, cols));
  }
  return static_cast<int>(basis.size());
}

}  // namespace

Eigen::VectorXd fourier_vector(const GateAngles& theta, int max_params) {
  const int p = static_cast<int>(theta.size());
  if (p > max_params) throw CapacityError("Fourier vector exceeds the parameter cap");
  Eigen::VectorXd v = Eigen::VectorXd::Ones(1);
  for (int q = 0; q < p; ++q) {
    const double tri[3] = {1.0, std::sin(theta[q]), std::cos(theta[q])};
    Eigen::VectorXd next(3 * v.size());
    for (int d = 0; d < 3; ++d) next.segment(d * v.size(), v.size()) = tri[d] * v;
    v = std::move(next);
  }
  return v;
}

std::vector<Eigen::MatrixXcd> build_operator_vector_states(const Ansatz& a) {
  const Index dim = Index{1} << a.num_qubits();
  check_cap(a.num_params(), static_cast<std::uint64_t>(dim * dim));
  const Segmented seg = segment(a);
  std::vector<std::pair<std::uint64_t, Mat>> items;
  Mat rho0 = Mat::Zero(dim, dim);
  rho0(0, 0) = 1.0;
  items.emplace_back(0, rho0);
  for (const auto& L : seg.layers) {
    const std::uint64_t stride = pow3(L.param);
    std::vector<std::pair<std::uint64_t, Mat>> next;
    next.reserve(items.size() * 3);
    for (const auto& [idx, o] : items) {
      auto br = state_branches(L, o);
      for (int d = 0; d < 3; ++d) next.emplace_back(idx + static_cast<std::uint64_t>(d) * stride, std::move(br[d]));
    }
    items = std::move(next);
  }
  std::vector<Mat> out(items.size());
  for (auto& [idx, o] : items) out[idx] = std::move(o);
  return out;
}

std::vector<Eigen::MatrixXcd> build_superoperators(const Ansatz& a) {
  const Index dim = Index{1} << a.num_qubits();
  check_cap(a.num_params(), static_cast<std::uint64_t>(dim * dim * dim * dim));
  const Segmented seg = segment(a);
  std::vector<std::pair<std::uint64_t, Mat>> items;
  items.emplace_back(0, Mat::Identity(dim * dim, dim * dim));
  for (const auto& L : seg.layers) {
    const SuperLayer s = super_layer(L);
    const std::uint64_t stride = pow3(L.param);
    std::vector<std::pair<std::uint64_t, Mat>> next;
    next.reserve(items.size() * 3);
    for (const auto& [idx, x] : items) {
      const Mat kx = s.K * x;
      for (int d = 0; d < 3; ++d) next.emplace_back(idx + static_cast<std::uint64_t>(d) * stride, s.M[d] * kx);
    }
    items = std::move(next);
  }
  std::vector<Mat> out(items.size());
  for (auto& [idx, x] : items) out[idx] = std::move(x);
  return out;
}

namespace {

struct Spectrum {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

// Eigen's tridiagonal QR occasionally hits its iteration cap on large, highly degenerate Gram
// matrices; fall back to a Jacobi SVD and recover each eigenvalue's sign from u . v.
Spectrum symmetric_spectrum(const Eigen::MatrixXd& m, bool vectors) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (es.info() == Eigen::Success) return {es.eigenvalues(), vectors ? es.eigenvectors() : Eigen::MatrixXd()};
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Spectrum out{svd.singularValues(), svd.matrixU()};
  for (Index k = 0; k < out.values.size(); ++k)
    if (svd.matrixU().col(k).dot(svd.matrixV().col(k)) < 0) out.values[k] = -out.values[k];
  return out;
}

}  // namespace

Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& m) {
  const Spectrum es = symmetric_spectrum(0.5 * (m + m.transpose()), true);
  const auto& ev = es.values;
  std::vector<Index> keep;
  for (Index k = 0; k < ev.size(); ++k)
    if (ev[k] > 0.0) keep.push_back(k);
  Eigen::MatrixXd f(static_cast<Index>(keep.size()), m.cols());
  for (std::size_t r = 0; r < keep.size(); ++r)
    f.row(static_cast<Index>(r)) = std::sqrt(ev[keep[r]]) * es.vectors.col(keep[r]).transpose();
  return f;
}

namespace {

GramFactor gram_of(const std::vector<Mat>& items, double scale) {
  const Index cnt = static_cast<Index>(items.size());
  const Index sz = items.front().size();
  Mat A(sz, cnt);
  for (Index k = 0; k < cnt; ++k)
    A.col(k) = Eigen::Map<const Eigen::VectorXcd>(items[static_cast<std::size_t>(k)].data(), sz);
  GramFactor g;
  g.gram = (A.adjoint() * A).real() / scale;
  g.factor = psd_factor(g.gram);
  return g;
}

}  // namespace

GramFactor build_S(const Ansatz& a) {
  return gram_of(build_operator_vector_states(a), 1.0);
}

GramFactor build_T(const Ansatz& a) {
  const double d = static_cast<double>(Index{1} << a.num_qubits());
  return gram_of(build_superoperators(a), d * d);
}

Eigen::VectorXd energy_weights(const Ansatz& a, const PauliSum& h) {
  if (h.num_qubits() != a.num_qubits()) throw ShapeError("Hamiltonian and ansatz qubit counts differ");
  const auto ops = build_operator_vector_states(a);
  const Segmented seg = segment(a);
  const Mat hp = seg.final_R.adjoint() * to_dense(h) * seg.final_R;
  Eigen::VectorXd w(static_cast<Index>(ops.size()));
  for (std::size_t k = 0; k < ops.size(); ++k) w[static_cast<Index>(k)] = (hp * ops[k]).trace().real();
  return w;
}

int numerical_rank(const Eigen::MatrixXd& m, double rel_cutoff) {
  if (m.size() == 0) return 0;
  Eigen::VectorXd sv;
  if (m.rows() == m.cols() && (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * m.cwiseAbs().maxCoeff()) {
    // Symmetric input (Gram matrices): singular values are the absolute eigenvalues.
    sv = symmetric_spectrum(m, false).values.cwiseAbs();
    std::sort(sv.data(), sv.data() + sv.size(), std::greater<>());
  } else {
    sv = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
  }
  if (sv[0] == 0.0) return 0;
  int r = 0;
  while (r < sv.size() && sv[r] > rel_cutoff * sv[0]) ++r;
  return r;
}

int state_feature_rank(const Ansatz& a, double rel_cutoff) {
  const Segmented seg = segment(a);
  const Index dim = Index{1} << a.num_qubits();
  Mat rho0 = Mat::Zero(dim, dim);
  rho0(0, 0) = 1.0;
  return span_rank(
      rho0, seg.layers.size(), [&](std::size_t l, const Mat& o) { return state_branches(seg.layers[l], o); },
      rel_cutoff);
}

int unitary_feature_rank(const Ansatz& a, double rel_cutoff) {
  if (a.num_qubits() > 3) throw CapacityError("unitary feature rank is limited to 3 qubits");
  const Segmented seg = segment(a);
  std::vector<SuperLayer> sl;
  for (const auto& L : seg.layers) sl.push_back(super_layer(L));
  const Index dim = Index{1} << a.num_qubits();
  return span_rank(
      Mat::Identity(dim * dim, dim * dim), sl.size(),
      [&](std::size_t l, const Mat& x) {
        const Mat kx = sl[l].K * x;
        return std::array<Mat, 3>{sl[l].M[0] * kx, sl[l].M[1] * kx, sl[l].M[2] * kx};
      },
      rel_cutoff);
}

namespace {

constexpr std::uint64_t kSat = std::numeric_limits<std::uint64_t>::max();

std::uint64_t sat_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > kSat / a) return kSat;
  return a * b;
}

std::uint64_t sat_pow(std::uint64_t base, int e) {
  std::uint64_t v = 1;
  for (int i = 0; i < e; ++i) v = sat_mul(v, base);
  return v;
}

}  // namespace

std::uint64_t state_dim_bound(int n, int p) {
  if (n < 1 || p < 0) throw InvalidSizeError("state_dim_bound needs n >= 1 and p >= 0");
  const std::uint64_t full = sat_pow(4, n);
  std::uint64_t d = 1;
  for (int k = 0; k < p; ++k) {
    const std::uint64_t half = full == kSat ? kSat : full / 2 + d;
    d = std::min({full, sat_mul(3, d), half});
  }
  return d;
}

std::uint64_t unitary_dim_bound(int n, int p) {
  if (n < 1 || p < 0) throw InvalidSizeError("unitary_dim_bound needs n >= 1 and p >= 0");
  const std::uint64_t sq = sat_pow(16, n);
  const std::uint64_t cap = sq == kSat ? kSat : sq - 2 * (sat_pow(4, n) - 1);
  return std::min(cap, sat_pow(3, p));
}

std::uint64_t real_ansatz_dim(int n) {
  if (n < 1) throw InvalidSizeError("real_ansatz_dim needs n >= 1");
  std::uint64_t total = 0;
  std::uint64_t binom = 1;  // C(n, k)
  for (int k = 0; k <= n; ++k) {
    if (k % 2 == 0) total += sat_mul(sat_pow(3, n - k), binom);
    binom = binom * static_cast<std::uint64_t>(n - k) / static_cast<std::uint64_t>(k + 1);
  }
  return total;
}

}  // namespace qkbo
