#include "qkbo/optimize.hpp"

#include <cmath>
#include <deque>

#include "qkbo/errors.hpp"

namespace qkbo {

namespace {

using Eigen::VectorXd;

VectorXd project(const VectorXd& x, const VectorXd& lo, const VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// Variables pinned at a bound with the gradient pushing outward.
Eigen::Array<bool, Eigen::Dynamic, 1> active_set(const VectorXd& x, const VectorXd& g, const VectorXd& lo,
                                                 const VectorXd& hi) {
  Eigen::Array<bool, Eigen::Dynamic, 1> act(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) act[i] = (x[i] <= lo[i] && g[i] > 0) || (x[i] >= hi[i] && g[i] < 0);
  return act;
}

}  // namespace

BoxResult minimize_box(const Objective& f, const VectorXd& x0, const VectorXd& lower, const VectorXd& upper,
                       const LbfgsOptions& opts) {
  const auto n = x0.size();
  if (lower.size() != n || upper.size() != n) throw ShapeError("bounds do not match the starting point");
  if ((lower.array() > upper.array()).any()) throw ConfigError("lower bound exceeds upper bound");

  BoxResult res;
  VectorXd x = project(x0, lower, upper);
  VectorXd g(n);
  double fx = f(x, &g);
  ++res.evaluations;
  if (!std::isfinite(fx)) {
    res.x = x;
    res.f = fx;
    return res;
  }

  std::deque<VectorXd> S, Y;
  std::deque<double> rho;
  for (int it = 0; it < opts.max_iterations; ++it) {
    res.iterations = it + 1;
    const VectorXd pg = x - project(x - g, lower, upper);
    if (pg.lpNorm<Eigen::Infinity>() < opts.pgtol) {
      res.converged = true;
      break;
    }
    const auto act = active_set(x, g, lower, upper);
    auto mask = [&](VectorXd v) {
      for (Eigen::Index i = 0; i < n; ++i)
        if (act[i]) v[i] = 0.0;
      return v;
    };

    // Two-loop recursion on the free variables.
    VectorXd q = mask(g);
    std::vector<double> alpha(S.size());
    for (int k = static_cast<int>(S.size()) - 1; k >= 0; --k) {
      alpha[static_cast<std::size_t>(k)] = rho[static_cast<std::size_t>(k)] * mask(S[static_cast<std::size_t>(k)]).dot(q);
      q -= alpha[static_cast<std::size_t>(k)] * mask(Y[static_cast<std::size_t>(k)]);
    }
    if (!S.empty()) {
      const VectorXd& sl = S.back();
      const VectorXd& yl = Y.back();
      q *= sl.dot(yl) / yl.squaredNorm();
    }
    for (std::size_t k = 0; k < S.size(); ++k) {
      const double beta = rho[k] * mask(Y[k]).dot(q);
      q += (alpha[k] - beta) * mask(S[k]);
    }
    VectorXd d = -mask(q);
    if (d.dot(g) >= 0.0) {
      S.clear();
      Y.clear();
      rho.clear();
      d = -mask(g);
    }
    double step = S.empty() ? std::min(1.0, 1.0 / std::max(d.lpNorm<Eigen::Infinity>(), 1e-300)) : 1.0;

    VectorXd xn, gn(n);
    double fn = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < opts.max_linesearch; ++ls) {
      xn = project(x + step * d, lower, upper);
      fn = f(xn, &gn);
      ++res.evaluations;
      if (std::isfinite(fn) && fn <= fx + 1e-4 * g.dot(xn - x)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    const VectorXd s = xn - x;
    const VectorXd y = gn - g;
    const double sy = s.dot(y);
    const double df = fx - fn;
    x = xn;
    g = gn;
    fx = fn;
    if (sy > 1e-12 * y.squaredNorm() && sy > 0.0) {
      S.push_back(s);
      Y.push_back(y);
      rho.push_back(1.0 / sy);
      if (static_cast<int>(S.size()) > opts.memory) {
        S.pop_front();
        Y.pop_front();
        rho.pop_front();
      }
    }
    if (df <= opts.ftol * std::max(1.0, std::abs(fx))) {
      res.converged = true;
      break;
    }
  }
  res.x = x;
  res.f = fx;
  return res;
}

}  // namespace qkbo
