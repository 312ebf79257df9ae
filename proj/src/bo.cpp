#include "qkbo/bo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "qkbo/errors.hpp"

namespace qkbo {

namespace {

using Eigen::VectorXd;
using Index = Eigen::Index;

GateAngles uniform_point(std::mt19937_64& rng, Index p, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  GateAngles x(p);
  for (Index i = 0; i < p; ++i) x[i] = u(rng);
  return x;
}

}  // namespace

void BOConfig::validate() const {
  if (n_init < 1) throw ConfigError("bo.n_init must be at least 1");
  if (n_queries < 0) throw ConfigError("bo.n_queries must be nonnegative");
  if (xi < 0) throw ConfigError("bo.xi must be nonnegative");
  if (!(lower < upper)) throw ConfigError("bo bounds are empty");
  if (acq_restarts < 1) throw ConfigError("bo.acq_restarts must be at least 1");
  if (hyperopt_every < 1) throw ConfigError("bo.hyperopt_every must be at least 1");
  if (!(fd_step > 0)) throw ConfigError("bo.fd_step must be positive");
}

double normal_cdf(double z) {
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2 * std::numbers::pi);
}

double expected_improvement(double mean, double sd, double y_best, double xi) {
  const double imp = y_best - mean + xi;
  if (!(sd > 0.0)) return std::max(imp, 0.0);
  const double z = imp / sd;
  return std::max(imp * normal_cdf(z) + sd * normal_pdf(z), 0.0);
}

double expected_improvement(const GPModel& m, const GateAngles& x, double y_best, double xi) {
  const Posterior p = m.predict(x);
  return expected_improvement(p.mean, std::sqrt(p.variance), y_best, xi);
}

double expected_improvement_with_gradient(const GPModel& m, const GateAngles& x, double y_best, double xi,
                                          double fd_step, VectorXd* grad) {
  const Index n = m.size();
  const double s2 = m.kernel().signal_variance;
  const VectorXd k = s2 * m.data().cross_base(x).head(n);
  const VectorXd kinv_k = m.factor().solve(k);
  const double mean = m.mean() + k.dot(m.alpha_vec());
  const double var = std::max(s2 - k.dot(kinv_k), 0.0);
  const double sd = std::sqrt(var);
  const double imp = y_best - mean + xi;
  const double ei = expected_improvement(mean, sd, y_best, xi);
  if (!grad) return ei;

  grad->setZero(x.size());
  if (!(sd > 0.0) && imp <= 0.0) return ei;
  const double cdf = sd > 0.0 ? normal_cdf(imp / sd) : 1.0;
  const double pdf = sd > 0.0 ? normal_pdf(imp / sd) : 0.0;
  if (m.data().has_weighted_gradient()) {
    Eigen::MatrixXd w(n, 2);
    w << m.alpha_vec(), kinv_k;
    const Eigen::MatrixXd dk = s2 * m.data().weighted_cross_gradient(x, w);
    // d(var) = -2 dk.K^{-1}k, d(sd) = d(var)/(2 sd)
    const VectorXd dsd = sd > 0.0 ? VectorXd(-dk.col(1) / sd) : VectorXd::Zero(x.size());
    *grad = -cdf * dk.col(0) + pdf * dsd;
    return ei;
  }
  GateAngles xp = x;
  for (Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + fd_step;
    const VectorXd kp = m.data().cross_base(xp).head(n);
    xp[i] = x[i] - fd_step;
    const VectorXd km = m.data().cross_base(xp).head(n);
    xp[i] = x[i];
    const VectorXd dk = s2 * (kp - km) / (2 * fd_step);
    const double dmean = dk.dot(m.alpha_vec());
    double dsd = 0.0;
    if (sd > 0.0) dsd = -dk.dot(kinv_k) / sd;  // d(var) = -2 dk.K^{-1}k, d(sd) = d(var)/(2 sd)
    (*grad)[i] = -cdf * dmean + pdf * dsd;
  }
  return ei;
}

Proposal propose(const GPModel& m, const BOConfig& cfg, std::mt19937_64& rng, const GateAngles& incumbent,
                 double y_best) {
  const Index p = incumbent.size();
  const VectorXd lo = VectorXd::Constant(p, cfg.lower), hi = VectorXd::Constant(p, cfg.upper);

  std::vector<GateAngles> starts;
  const int n_random = cfg.acq_restarts;
  if (cfg.acq_raw_samples > 0) {
    std::vector<std::pair<double, GateAngles>> pool;
    for (int i = 0; i < cfg.acq_raw_samples; ++i) {
      GateAngles x = uniform_point(rng, p, cfg.lower, cfg.upper);
      pool.emplace_back(expected_improvement(m, x, y_best, cfg.xi), std::move(x));
    }
    std::stable_sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int i = 0; i < n_random && i < static_cast<int>(pool.size()); ++i) starts.push_back(pool[static_cast<std::size_t>(i)].second);
  } else {
    for (int i = 0; i < n_random; ++i) starts.push_back(uniform_point(rng, p, cfg.lower, cfg.upper));
  }
  starts.push_back(incumbent.cwiseMax(lo).cwiseMin(hi));

  auto objective = [&](const VectorXd& x, VectorXd* g) {
    const double ei = expected_improvement_with_gradient(m, x, y_best, cfg.xi, cfg.fd_step, g);
    if (g) *g = -*g;
    return -ei;
  };

  Proposal best{starts.front(), -std::numeric_limits<double>::infinity()};
  for (const auto& s : starts) {
    const BoxResult r = minimize_box(objective, s, lo, hi, cfg.acq_lbfgs);
    const double ei = -r.f;
    if (ei > best.ei) best = {r.x, ei};
  }
  return best;
}

double best_seen_energy_error(const std::vector<double>& y, double e_opt) {
  if (e_opt == 0.0) throw UndefinedMetricError("energy error undefined for a zero reference energy");
  if (y.empty()) throw UndefinedMetricError("energy error needs at least one observation");
  return (*std::min_element(y.begin(), y.end()) - e_opt) / std::abs(e_opt);
}

BOTrace run_bo(EnergyEvaluator& evaluator, const KernelSpec& kernel, const BOConfig& cfg,
               const std::function<void(const BORecord&)>& on_record) {
  cfg.validate();
  const Index p = evaluator.ansatz().num_params();
  if (is_quantum(kernel.kind) && kernel.ansatz && kernel.ansatz->num_params() != p)
    throw ShapeError("kernel ansatz and evaluator ansatz differ in parameter count");
  const bool tune_noise = cfg.optimize_noise.value_or(evaluator.noisy());
  const double mean = evaluator.hamiltonian().identity_coefficient();
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  BOTrace trace;
  trace.method = to_string(kernel.kind);
  trace.seed = cfg.seed;
  std::mt19937_64 rng(cfg.seed);
  auto data = std::make_shared<KernelData>(kernel);
  std::vector<double> ys;
  double best_y = std::numeric_limits<double>::infinity();
  GateAngles incumbent;
  KernelSpec hypers = kernel;
  const std::uint64_t calls0 = evaluator.calls();

  auto record = [&](const GateAngles& x, double y, double ei) {
    ys.push_back(y);
    if (y < best_y) {
      best_y = y;
      incumbent = x;
    }
    BORecord r;
    r.iteration = static_cast<int>(ys.size());
    r.theta = x;
    r.y = y;
    r.best_y = best_y;
    r.exact_energy = evaluator.noisy() ? evaluator.exact(x) : y;
    if (cfg.e_opt) r.error = best_seen_energy_error(ys, *cfg.e_opt);
    r.signal_variance = hypers.signal_variance;
    r.noise_variance = hypers.noise_variance;
    r.lengthscale = hypers.lengthscale;
    r.alpha = hypers.alpha;
    r.ei = ei;
    r.wall_time = elapsed();
    trace.records.push_back(r);
    if (on_record) on_record(r);
  };

  for (int i = 0; i < cfg.n_init; ++i) {
    GateAngles x = uniform_point(rng, p, cfg.lower, cfg.upper);
    const double y = evaluator(x);
    data->add(x);
    record(x, y, std::numeric_limits<double>::quiet_NaN());
  }

  std::optional<KernelSpec> warm;
  for (int q = 0; q < cfg.n_queries; ++q) {
    const VectorXd yv = Eigen::Map<const VectorXd>(ys.data(), static_cast<Index>(ys.size()));
    GPModel model = GPModel::fit(data, hypers, yv, mean);
    if (q % cfg.hyperopt_every == 0) {
      HyperOptOptions ho;
      ho.optimize_noise = tune_noise;
      ho.restarts = cfg.hyperopt_restarts;
      ho.seed = cfg.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(q + 1));
      ho.warm_start = warm;
      HyperOptResult hr = optimize_hypers(model, ho);
      trace.hyperopt_warning |= hr.warning;
      model = std::move(hr.model);
      hypers = model.kernel();
      warm = hypers;
    }
    const Proposal prop = propose(model, cfg, rng, incumbent, best_y);
    const double y = evaluator(prop.x);
    data->add(prop.x);
    record(prop.x, y, prop.ei);
  }
  trace.evaluator_calls = evaluator.calls() - calls0;
  trace.kernel_pair_evaluations = data->pair_evaluations();
  return trace;
}

}  // namespace qkbo
