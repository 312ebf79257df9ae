#include "qkbo/kernels.hpp"

#include <cmath>
#include <numbers>

#include "qkbo/errors.hpp"

namespace qkbo {

namespace {

using Index = Eigen::Index;

double squared_distance(const GateAngles& x, const GateAngles& x2) {
  if (x.size() != x2.size()) throw ShapeError("kernel inputs have different lengths");
  return (x - x2).squaredNorm();
}

}  // namespace

std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::state: return "state";
    case KernelKind::unitary: return "unitary";
    case KernelKind::mps_state: return "mps_state";
    case KernelKind::matern32: return "matern32";
    case KernelKind::matern52: return "matern52";
    case KernelKind::rbf: return "rbf";
    case KernelKind::rq: return "rq";
  }
  return "?";
}

KernelKind kernel_kind_from_string(const std::string& s) {
  for (KernelKind k : {KernelKind::state, KernelKind::unitary, KernelKind::mps_state, KernelKind::matern32,
                       KernelKind::matern52, KernelKind::rbf, KernelKind::rq})
    if (to_string(k) == s) return k;
  if (s == "mps-state") return KernelKind::mps_state;
  throw ConfigError("unknown kernel kind '" + s + "'");
}

bool is_quantum(KernelKind k) {
  return k == KernelKind::state || k == KernelKind::unitary || k == KernelKind::mps_state;
}

void KernelSpec::validate() const {
  if (!(signal_variance > 0.0)) throw ConfigError("signal variance must be positive");
  if (!(noise_variance >= 0.0)) throw ConfigError("noise variance must be nonnegative");
  if (is_quantum(kind)) {
    if (!ansatz) throw ConfigError(to_string(kind) + " kernel needs an ansatz");
    if (kind == KernelKind::mps_state && !mps_input) throw ConfigError("mps_state kernel needs an input MPS");
    if (kind == KernelKind::unitary && ansatz->num_qubits() > max_unitary_qubits)
      throw CapacityError("unitary kernel exceeds the dense qubit cap");
    return;
  }
  if (!(lengthscale > 0.0)) throw ConfigError("lengthscale must be positive");
  if (kind == KernelKind::rq && !(alpha > 0.0)) throw ConfigError("rq alpha must be positive");
}

double base_from_statistic(const KernelSpec& spec, double stat) {
  const double l = spec.lengthscale;
  switch (spec.kind) {
    case KernelKind::state:
    case KernelKind::unitary:
    case KernelKind::mps_state:
      return stat;
    case KernelKind::rbf:
      return std::exp(-stat / (2 * l * l));
    case KernelKind::matern32: {
      const double a = std::sqrt(3.0 * stat) / l;
      return (1 + a) * std::exp(-a);
    }
    case KernelKind::matern52: {
      const double a = std::sqrt(5.0 * stat) / l;
      return (1 + a + a * a / 3) * std::exp(-a);
    }
    case KernelKind::rq:
      return std::pow(1 + stat / (2 * spec.alpha * l * l), -spec.alpha);
  }
  return 0.0;
}

double dbase_dlengthscale(const KernelSpec& spec, double stat) {
  const double l = spec.lengthscale;
  switch (spec.kind) {
    case KernelKind::rbf:
      return base_from_statistic(spec, stat) * stat / (l * l * l);
    case KernelKind::matern32: {
      const double a = std::sqrt(3.0 * stat) / l;
      return a * a * std::exp(-a) / l;
    }
    case KernelKind::matern52: {
      const double a = std::sqrt(5.0 * stat) / l;
      return a * a * (1 + a) * std::exp(-a) / (3 * l);
    }
    case KernelKind::rq: {
      const double u = stat / (2 * spec.alpha * l * l);
      return base_from_statistic(spec, stat) * (stat / (l * l * l)) / (1 + u);
    }
    default:
      throw ConfigError(to_string(spec.kind) + " kernel has no lengthscale");
  }
}

double dbase_dalpha(const KernelSpec& spec, double stat) {
  if (spec.kind != KernelKind::rq) throw ConfigError(to_string(spec.kind) + " kernel has no alpha");
  const double u = stat / (2 * spec.alpha * spec.lengthscale * spec.lengthscale);
  return base_from_statistic(spec, stat) * (-std::log1p(u) + u / (1 + u));
}

double classical_kernel(const KernelSpec& spec, const GateAngles& x, const GateAngles& x2) {
  if (is_quantum(spec.kind)) throw ConfigError("classical_kernel called with a quantum kind");
  spec.validate();
  return base_from_statistic(spec, squared_distance(x, x2));
}

double state_kernel(const Ansatz& a, const GateAngles& x, const GateAngles& x2) {
  const Statevector s1 = simulate(a, x);
  const Statevector s2 = simulate(a, x2);
  return std::norm(s2.dot(s1));
}

double unitary_kernel(const Ansatz& a, const GateAngles& x, const GateAngles& x2, int max_qubits) {
  const Eigen::MatrixXcd u1 = unitary(a, x, max_qubits);
  const Eigen::MatrixXcd u2 = unitary(a, x2, max_qubits);
  const double d = static_cast<double>(u1.rows());
  return std::norm((u2.adjoint() * u1).trace() / d);
}

double base_kernel(const KernelSpec& spec, const GateAngles& x, const GateAngles& x2) {
  switch (spec.kind) {
    case KernelKind::state:
      spec.validate();
      return state_kernel(*spec.ansatz, x, x2);
    case KernelKind::unitary:
      spec.validate();
      return unitary_kernel(*spec.ansatz, x, x2, spec.max_unitary_qubits);
    case KernelKind::mps_state:
      spec.validate();
      return approx_state_kernel(*spec.mps_input, *spec.ansatz, x, x2);
    default:
      return classical_kernel(spec, x, x2);
  }
}

Eigen::MatrixXd gram(const KernelSpec& spec, const std::vector<GateAngles>& X) {
  if (X.empty()) throw ConfigError("gram needs at least one point");
  KernelData data(spec);
  data.add_all(X);
  Eigen::MatrixXd k = spec.signal_variance * data.base_gram();
  k.diagonal().array() += spec.noise_variance + kGramJitter;
  return k;
}

Eigen::VectorXd cross_kernel(const KernelSpec& spec, const std::vector<GateAngles>& X, const GateAngles& xs) {
  if (X.empty()) throw ConfigError("cross_kernel needs at least one point");
  KernelData data(spec);
  data.add_all(X);
  return spec.signal_variance * data.cross_base(xs);
}

KernelData::KernelData(KernelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.kind == KernelKind::unitary) embed_norm_ = static_cast<double>(Index{1} << spec_.ansatz->num_qubits());
}

void KernelData::set_hyperparameters(double lengthscale, double alpha, double signal_variance, double noise_variance) {
  KernelSpec s = spec_;
  s.lengthscale = lengthscale;
  s.alpha = alpha;
  s.signal_variance = signal_variance;
  s.noise_variance = noise_variance;
  s.validate();
  spec_ = std::move(s);
}

Eigen::VectorXcd KernelData::embed(const GateAngles& x) const {
  if (spec_.kind == KernelKind::state) return simulate(*spec_.ansatz, x);
  const Eigen::MatrixXcd u = unitary(*spec_.ansatz, x, spec_.max_unitary_qubits);
  return Eigen::Map<const Eigen::VectorXcd>(u.data(), u.size());
}

MPS KernelData::embed_mps(const GateAngles& x) const {
  return apply_block(*spec_.mps_input, *spec_.ansatz, x);
}

void KernelData::add(const GateAngles& x) {
  if (!points_.empty() && x.size() != points_.front().size()) throw ShapeError("kernel input length changed");
  if (is_quantum(spec_.kind) && x.size() != spec_.ansatz->num_params())
    throw ShapeError("kernel input length does not match ansatz parameter count");
  const Index m = static_cast<Index>(points_.size());
  Eigen::VectorXd col(m + 1);
  switch (spec_.kind) {
    case KernelKind::state:
    case KernelKind::unitary: {
      Eigen::VectorXcd phi = embed(x);
      if (m == 0) embeddings_.resize(phi.size(), 0);
      embeddings_.conservativeResize(Eigen::NoChange, m + 1);
      embeddings_.col(m) = phi;
      Eigen::VectorXcd ov = embeddings_.adjoint() * phi;
      col = ov.cwiseAbs2() / (embed_norm_ * embed_norm_);
      break;
    }
    case KernelKind::mps_state: {
      mps_embeddings_.push_back(embed_mps(x));
      const MPS& me = mps_embeddings_.back();
      for (Index i = 0; i <= m; ++i) col[i] = std::norm(mps_embeddings_[static_cast<std::size_t>(i)].overlap(me));
      break;
    }
    default:
      for (Index i = 0; i < m; ++i) col[i] = squared_distance(points_[static_cast<std::size_t>(i)], x);
      col[m] = 0.0;
  }
  pair_evals_ += static_cast<std::uint64_t>(m + 1);
  stats_.conservativeResize(m + 1, m + 1);
  stats_.row(m) = col.transpose();
  stats_.col(m) = col;
  points_.push_back(x);
}

void KernelData::add_all(const std::vector<GateAngles>& X) {
  for (const auto& x : X) add(x);
}

Eigen::MatrixXd KernelData::base_gram() const {
  if (is_quantum(spec_.kind)) return stats_;
  return stats_.unaryExpr([this](double s) { return base_from_statistic(spec_, s); });
}

Eigen::VectorXd KernelData::cross_stats(const GateAngles& xs) const {
  const Index m = static_cast<Index>(points_.size());
  Eigen::VectorXd out(m);
  switch (spec_.kind) {
    case KernelKind::state:
    case KernelKind::unitary: {
      if (m == 0) return out;
      Eigen::VectorXcd ov = embeddings_.adjoint() * embed(xs);
      return ov.cwiseAbs2() / (embed_norm_ * embed_norm_);
    }
    case KernelKind::mps_state: {
      const MPS me = embed_mps(xs);
      for (Index i = 0; i < m; ++i) out[i] = std::norm(mps_embeddings_[static_cast<std::size_t>(i)].overlap(me));
      return out;
    }
    default:
      for (Index i = 0; i < m; ++i) out[i] = squared_distance(points_[static_cast<std::size_t>(i)], xs);
      return out;
  }
}

Eigen::VectorXd KernelData::cross_base(const GateAngles& xs) const {
  Eigen::VectorXd s = cross_stats(xs);
  if (is_quantum(spec_.kind)) return s;
  return s.unaryExpr([this](double v) { return base_from_statistic(spec_, v); });
}

bool KernelData::has_weighted_gradient() const {
  return spec_.kind == KernelKind::state || spec_.kind == KernelKind::unitary;
}

Eigen::MatrixXd KernelData::weighted_cross_gradient(const GateAngles& xs, const Eigen::MatrixXd& W) const {
  if (!has_weighted_gradient()) throw UnsupportedError("weighted cross-kernel gradient needs a dense quantum kernel");
  const Index m = W.rows();
  if (m > static_cast<Index>(points_.size())) throw ShapeError("weight matrix has more rows than cached points");
  const Ansatz& a = *spec_.ansatz;
  if (xs.size() != a.num_params()) throw ShapeError("kernel input length does not match ansatz parameter count");
  const Index dim = Index{1} << a.num_qubits();

  Eigen::MatrixXcd psi;
  if (spec_.kind == KernelKind::state)
    psi = simulate(a, xs);
  else
    psi = unitary(a, xs, spec_.max_unitary_qubits);
  Eigen::Map<Eigen::VectorXcd> phi(psi.data(), psi.size());
  // k_j = |c_j|^2 / N^2 with c_j = <e_j|phi>, so sum_j w_j dk_j = (2 / N^2) Re <sum_j w_j c_j e_j | dphi>.
  const Eigen::VectorXcd c = embeddings_.leftCols(m).adjoint() * phi;
  Eigen::MatrixXcd lam = embeddings_.leftCols(m) * (W.cast<cplx>().array().colwise() * c.array()).matrix();
  const double scale = 2.0 / (embed_norm_ * embed_norm_);

  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(xs.size(), W.cols());
  Eigen::Map<Eigen::VectorXcd> lam_flat(lam.data(), lam.size());
  const auto& prog = a.program();
  for (auto it = prog.rbegin(); it != prog.rend(); ++it) {
    if (auto* r = std::get_if<PauliRotation>(&*it)) {
      // d/dt exp(-i t P/2) = exp(-i (t + pi) P/2) / 2.
      Eigen::VectorXcd d = phi;
      apply_rotation_blocks(d, r->pauli, std::numbers::pi, dim);
      for (Index col = 0; col < W.cols(); ++col) grad(r->param, col) += 0.5 * scale * lam.col(col).dot(d).real();
    }
    apply_element_blocks(phi, *it, xs, dim, true);
    apply_element_blocks(lam_flat, *it, xs, dim, true);
  }
  return grad;
}

}  // namespace qkbo
