#include "qkbo/spsa.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "qkbo/errors.hpp"

namespace qkbo {

namespace {

using Index = Eigen::Index;

GateAngles rademacher(std::mt19937_64& rng, Index p) {
  std::bernoulli_distribution coin(0.5);
  GateAngles d(p);
  for (Index i = 0; i < p; ++i) d[i] = coin(rng) ? 1.0 : -1.0;
  return d;
}

}  // namespace

GateAngles spsa_gradient(const std::function<double(const GateAngles&)>& f, const GateAngles& theta, double c,
                         const GateAngles& d) {
  if (d.size() != theta.size()) throw ShapeError("perturbation length does not match theta");
  // Rademacher entries are +-1, so 1/d_i = d_i.
  const double fp = f(theta + c * d);
  const double fm = f(theta - c * d);
  return (fp - fm) / (2 * c) * d;
}

void SPSAConfig::validate() const {
  if (max_evaluations < calibration_evaluations) throw ConfigError("spsa.max_evaluations below calibration budget");
  if (calibration_evaluations < 0 || calibration_evaluations % 2) throw ConfigError("spsa.calibration_evaluations must be even");
  if (!(alpha > 0) || !(gamma > 0)) throw ConfigError("spsa gain exponents must be positive");
  if (c && !(*c > 0)) throw ConfigError("spsa.c must be positive");
  if (a && !(*a > 0)) throw ConfigError("spsa.a must be positive");
  if (stability && *stability < 0) throw ConfigError("spsa.stability must be nonnegative");
  if (!a && calibration_evaluations == 0) throw ConfigError("spsa needs calibration evaluations or an explicit a");
  if (final_window < 1) throw ConfigError("spsa.final_window must be positive");
}

SPSAResult run_spsa(const std::function<double(const GateAngles&)>& f, const SPSAConfig& cfg, const GateAngles& theta0,
                    bool noisy) {
  cfg.validate();
  const Index p = theta0.size();
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(cfg.seed);

  SPSAResult res;
  res.trace.method = "spsa";
  res.trace.seed = cfg.seed;
  res.c = cfg.c.value_or(noisy ? 0.2 : 0.1);
  res.stability = cfg.stability.value_or(0.01 * cfg.iterations());
  double best = std::numeric_limits<double>::infinity();

  auto eval = [&](const GateAngles& x) {
    const double y = f(x);
    best = std::min(best, y);
    BORecord r;
    r.iteration = static_cast<int>(res.trace.records.size()) + 1;
    r.theta = x;
    r.y = y;
    r.best_y = best;
    r.exact_energy = y;
    r.ei = std::numeric_limits<double>::quiet_NaN();
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.trace.records.push_back(std::move(r));
    return y;
  };

  GateAngles theta = theta0;
  const int pairs = cfg.calibration_evaluations / 2;
  if (pairs > 0) {
    double avg = 0.0;
    for (int k = 0; k < pairs; ++k) {
      const GateAngles d = rademacher(rng, p);
      const double fp = eval(theta + res.c * d);
      const double fm = eval(theta - res.c * d);
      avg += std::abs((fp - fm) / (2 * res.c));
    }
    avg /= pairs;
    // Scaled so that the first update moves each component by about target_step.
    res.a = avg > 1e-12 ? cfg.target_step / avg * std::pow(1 + res.stability, cfg.alpha) : cfg.target_step;
  }
  if (cfg.a) res.a = *cfg.a;

  for (int k = 0; k < cfg.iterations(); ++k) {
    const double ak = res.a / std::pow(k + 1 + res.stability, cfg.alpha);
    const double ck = res.c / std::pow(k + 1, cfg.gamma);
    theta -= ak * spsa_gradient(eval, theta, ck, rademacher(rng, p));
  }
  res.theta = theta;
  return res;
}

SPSAResult run_spsa(EnergyEvaluator& evaluator, const SPSAConfig& cfg, const GateAngles& theta0) {
  if (theta0.size() != evaluator.ansatz().num_params()) throw ShapeError("theta0 length does not match ansatz");
  const std::uint64_t calls0 = evaluator.calls();
  SPSAResult res = run_spsa([&](const GateAngles& x) { return evaluator(x); }, cfg, theta0, evaluator.noisy());
  res.trace.evaluator_calls = evaluator.calls() - calls0;
  if (evaluator.noisy())
    for (auto& r : res.trace.records) r.exact_energy = evaluator.exact(r.theta);
  if (cfg.e_opt) {
    if (*cfg.e_opt == 0.0) throw UndefinedMetricError("energy error undefined for a zero reference energy");
    for (auto& r : res.trace.records) r.error = (r.y - *cfg.e_opt) / std::abs(*cfg.e_opt);
    const auto& recs = res.trace.records;
    const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(cfg.final_window), recs.size());
    if (w > 0) {
      double s = 0.0;
      for (std::size_t i = recs.size() - w; i < recs.size(); ++i) s += *recs[i].error;
      res.final_error = s / static_cast<double>(w);
    }
  }
  return res;
}

}  // namespace qkbo
