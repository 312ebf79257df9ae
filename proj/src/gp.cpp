#include "qkbo/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "qkbo/errors.hpp"

namespace qkbo {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Index = Eigen::Index;

constexpr double kMaxJitter = 1e-4;

struct Layout {
  bool noise = false;
  bool lengthscale = false;
  bool alpha = false;
  int size() const { return 1 + noise + lengthscale + alpha; }
};

VectorXd pack(const KernelSpec& s, const Layout& l) {
  VectorXd v(l.size());
  int k = 0;
  v[k++] = std::log(s.signal_variance);
  if (l.noise) v[k++] = std::log(s.noise_variance);
  if (l.lengthscale) v[k++] = std::log(s.lengthscale);
  if (l.alpha) v[k++] = std::log(s.alpha);
  return v;
}

KernelSpec unpack(KernelSpec s, const Layout& l, const VectorXd& v) {
  int k = 0;
  s.signal_variance = std::exp(v[k++]);
  if (l.noise) s.noise_variance = std::exp(v[k++]);
  if (l.lengthscale) s.lengthscale = std::exp(v[k++]);
  if (l.alpha) s.alpha = std::exp(v[k++]);
  return s;
}

void log_bounds(const Layout& l, VectorXd& lo, VectorXd& hi) {
  lo.resize(l.size());
  hi.resize(l.size());
  int k = 0;
  lo[k] = std::log(HyperBounds::variance_lo);
  hi[k++] = std::log(HyperBounds::variance_hi);
  if (l.noise) {
    lo[k] = std::log(HyperBounds::variance_lo);
    hi[k++] = std::log(HyperBounds::variance_hi);
  }
  if (l.lengthscale) {
    lo[k] = std::log(HyperBounds::lengthscale_lo);
    hi[k++] = std::log(HyperBounds::lengthscale_hi);
  }
  if (l.alpha) {
    lo[k] = std::log(HyperBounds::alpha_lo);
    hi[k++] = std::log(HyperBounds::alpha_hi);
  }
}

}  // namespace

GPModel GPModel::fit(const KernelSpec& spec, const std::vector<GateAngles>& X, const VectorXd& y, double mean) {
  auto data = std::make_shared<KernelData>(spec);
  data->add_all(X);
  return fit(data, spec, y, mean);
}

GPModel GPModel::fit(std::shared_ptr<const KernelData> data, const KernelSpec& hypers, const VectorXd& y, double mean) {
  if (!data) throw ConfigError("GP needs kernel data");
  if (y.size() < 1) throw ConfigError("GP needs at least one training point");
  if (static_cast<std::size_t>(y.size()) > data->size()) throw ShapeError("more targets than cached kernel inputs");
  if (hypers.kind != data->spec().kind) throw ConfigError("hyperparameter kind does not match kernel cache");
  hypers.validate();
  GPModel m;
  m.spec_ = hypers;
  m.data_ = std::move(data);
  m.y_ = y;
  m.mean_ = mean;
  const Index n = y.size();
  const MatrixXd stats = m.data_->stats().topLeftCorner(n, n);
  if (is_quantum(hypers.kind))
    m.k0_ = stats;
  else
    m.k0_ = stats.unaryExpr([&](double s) { return base_from_statistic(hypers, s); });
  m.factorize();
  return m;
}

void GPModel::factorize() {
  for (jitter_ = kGramJitter; jitter_ <= kMaxJitter * 1.0000001; jitter_ *= 10) {
    llt_.compute(total_gram());
    if (llt_.info() == Eigen::Success && llt_.matrixLLT().diagonal().minCoeff() > 0.0 &&
        llt_.matrixLLT().diagonal().allFinite()) {
      beta_ = llt_.solve(y_ - VectorXd::Constant(y_.size(), mean_));
      if (beta_.allFinite()) return;
    }
  }
  throw ConditioningError("Gram matrix not positive definite even with jitter 1e-4");
}

MatrixXd GPModel::total_gram() const {
  MatrixXd k = spec_.signal_variance * k0_;
  k.diagonal().array() += spec_.noise_variance + jitter_;
  return k;
}

GPModel GPModel::refit(const KernelSpec& hypers) const {
  return fit(data_, hypers, y_, mean_);
}

Posterior GPModel::predict_from_base(const VectorXd& k_base) const {
  if (k_base.size() < y_.size()) throw ShapeError("cross-kernel vector too short");
  const VectorXd k = spec_.signal_variance * k_base.head(y_.size());
  Posterior p;
  p.mean = mean_ + k.dot(beta_);
  const VectorXd v = llt_.matrixL().solve(k);
  p.variance = std::max(spec_.signal_variance - v.squaredNorm(), 0.0);
  return p;
}

Posterior GPModel::predict(const GateAngles& x) const {
  return predict_from_base(data_->cross_base(x));
}

double GPModel::log_marginal_likelihood() const {
  const VectorXd r = y_ - VectorXd::Constant(y_.size(), mean_);
  const double logdet = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
  return -0.5 * r.dot(beta_) - 0.5 * logdet - 0.5 * static_cast<double>(y_.size()) * std::log(2 * std::numbers::pi);
}

double GPModel::lml_gradient(Hyper h) const {
  const Index n = y_.size();
  MatrixXd dk;
  switch (h) {
    case Hyper::signal_variance:
      dk = k0_;
      break;
    case Hyper::noise_variance:
      dk = MatrixXd::Identity(n, n);
      break;
    case Hyper::lengthscale: {
      if (is_quantum(spec_.kind)) throw ConfigError("quantum kernels have no lengthscale");
      const MatrixXd stats = data_->stats().topLeftCorner(n, n);
      dk = spec_.signal_variance * stats.unaryExpr([&](double s) { return dbase_dlengthscale(spec_, s); });
      break;
    }
    case Hyper::alpha: {
      if (spec_.kind != KernelKind::rq) throw ConfigError("only the rq kernel has alpha");
      const MatrixXd stats = data_->stats().topLeftCorner(n, n);
      dk = spec_.signal_variance * stats.unaryExpr([&](double s) { return dbase_dalpha(spec_, s); });
      break;
    }
  }
  const MatrixXd kinv = llt_.solve(MatrixXd::Identity(n, n));
  return 0.5 * (beta_.dot(dk * beta_) - (kinv.cwiseProduct(dk)).sum());
}

double closed_form_signal_variance(const GPModel& m) {
  const VectorXd r = m.targets() - VectorXd::Constant(m.size(), m.mean());
  MatrixXd k0 = m.base_gram();
  k0.diagonal().array() += kGramJitter;
  Eigen::LDLT<MatrixXd> ldlt(k0);
  return r.dot(ldlt.solve(r)) / static_cast<double>(m.size());
}

HyperOptResult optimize_hypers(const GPModel& m, const HyperOptOptions& opts) {
  Layout layout;
  layout.noise = opts.optimize_noise;
  layout.lengthscale = !is_quantum(m.kernel().kind);
  layout.alpha = m.kernel().kind == KernelKind::rq;
  VectorXd lo, hi;
  log_bounds(layout, lo, hi);

  auto objective = [&](const VectorXd& v, VectorXd* grad) -> double {
    try {
      const GPModel g = m.refit(unpack(m.kernel(), layout, v));
      const double lml = g.log_marginal_likelihood();
      if (grad) {
        grad->resize(v.size());
        int k = 0;
        (*grad)[k++] = -g.kernel().signal_variance * g.lml_gradient(Hyper::signal_variance);
        if (layout.noise) (*grad)[k++] = -g.kernel().noise_variance * g.lml_gradient(Hyper::noise_variance);
        if (layout.lengthscale) (*grad)[k++] = -g.kernel().lengthscale * g.lml_gradient(Hyper::lengthscale);
        if (layout.alpha) (*grad)[k++] = -g.kernel().alpha * g.lml_gradient(Hyper::alpha);
      }
      return std::isfinite(lml) ? -lml : std::numeric_limits<double>::infinity();
    } catch (const ConditioningError&) {
      if (grad) grad->setZero(v.size());
      return std::numeric_limits<double>::infinity();
    }
  };

  // Default start: closed-form sigma^2 at unit lengthscale/alpha, sigma_n^2 = 1e-4 sigma^2.
  KernelSpec init = m.kernel();
  init.lengthscale = 1.0;
  init.alpha = 1.0;
  init.noise_variance = m.kernel().noise_variance;
  {
    const GPModel base = m.refit(init);
    init.signal_variance = std::clamp(closed_form_signal_variance(base), HyperBounds::variance_lo, HyperBounds::variance_hi);
  }
  if (layout.noise) init.noise_variance = std::clamp(1e-4 * init.signal_variance, HyperBounds::variance_lo, HyperBounds::variance_hi);

  std::vector<VectorXd> starts{pack(init, layout).cwiseMax(lo).cwiseMin(hi)};
  if (opts.warm_start) {
    KernelSpec w = *opts.warm_start;
    if (!layout.noise) w.noise_variance = m.kernel().noise_variance;
    starts.push_back(pack(w, layout).cwiseMax(lo).cwiseMin(hi));
  }
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  while (static_cast<int>(starts.size()) < std::max(opts.restarts, 1)) {
    VectorXd s = starts.front();
    for (Index i = 0; i < s.size(); ++i) s[i] += nd(rng);
    starts.push_back(s.cwiseMax(lo).cwiseMin(hi));
  }

  HyperOptResult res{m, m.log_marginal_likelihood(), m.log_marginal_likelihood(), false};
  bool any_finite = std::isfinite(res.initial_lml);
  double best = any_finite ? -res.initial_lml : std::numeric_limits<double>::infinity();
  VectorXd best_v;
  for (const auto& s : starts) {
    BoxResult r = minimize_box(objective, s, lo, hi, opts.lbfgs);
    if (std::isfinite(r.f)) any_finite = true;
    if (r.f < best) {
      best = r.f;
      best_v = r.x;
    }
  }
  if (best_v.size()) {
    res.model = m.refit(unpack(m.kernel(), layout, best_v));
    res.final_lml = res.model.log_marginal_likelihood();
  }
  res.warning = !any_finite;
  return res;
}

double validation_score(const VectorXd& predicted, const VectorXd& y_v) {
  if (predicted.size() != y_v.size()) throw ShapeError("prediction and target lengths differ");
  if (y_v.size() < 2) throw UndefinedMetricError("validation score needs at least two points");
  const double ss = (y_v.array() - y_v.mean()).square().sum();
  if (!(ss > 0.0)) throw UndefinedMetricError("validation targets have zero variance");
  return 1.0 - (y_v - predicted).squaredNorm() / ss;
}

double validation_score(const GPModel& m, const std::vector<GateAngles>& X_v, const VectorXd& y_v) {
  if (static_cast<Index>(X_v.size()) != y_v.size()) throw ShapeError("validation inputs and targets differ in length");
  VectorXd pred(y_v.size());
  for (Index i = 0; i < y_v.size(); ++i) pred[i] = m.predict(X_v[static_cast<std::size_t>(i)]).mean;
  return validation_score(pred, y_v);
}

double log_bayes_factor(const GPModel& a, const GPModel& b) {
  if (a.size() != b.size() || a.targets() != b.targets())
    throw ConfigError("Bayes factor needs models fitted on the same targets");
  return a.log_marginal_likelihood() - b.log_marginal_likelihood();
}

}  // namespace qkbo
