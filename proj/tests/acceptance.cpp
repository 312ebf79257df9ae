// Acceptance suite. Prints one PASS/FAIL line per criterion; `--only AC-3,AC-4` selects a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qkbo/experiments.hpp"
#include "qkbo/feature_space.hpp"
#include "qkbo/gp.hpp"
#include "qkbo/mps.hpp"

using namespace qkbo;
using Eigen::VectorXd;

namespace {

// Pinned thresholds.
namespace tol {
constexpr double e_opt_reference = -2.762194;
constexpr double e_opt_bound = -2.76219;
constexpr double e_opt_window = 1e-4;
constexpr double saturated_r2 = 1 - 1e-6;
constexpr double rank_cutoff = 1e-8;
const double state_median_max = std::pow(10.0, -2.5);
const double state_good_run = std::pow(10.0, -3.5);
constexpr double state_good_fraction = 0.25;
constexpr double unitary_lo = 0.01, unitary_hi = 0.10;
constexpr double spsa_lo = 0.01, spsa_hi = 0.20;
constexpr int bo_budget_vs_spsa = 105;
constexpr double feature_map = 1e-9;
constexpr double lml_gradient_rel = 1e-5;
constexpr double interpolation = 1e-8;
constexpr double prior_slack = 1e-10;
constexpr double mps_exact = 1e-8;
constexpr double fidelity_slack = 1e-10;
// Median R2_v drop from its peak that counts as a collapse, and the drop allowed without one.
constexpr double collapse_drop = 0.1;
constexpr double stable_drop = 0.05;
}  // namespace tol

constexpr int kRepeats = 20;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

ExperimentConfig base_config(ExperimentKind kind) {
  auto cfg = default_config(kind);
  cfg.repeats = kRepeats;
  cfg.seed = 2024;
  cfg.threads = 0;
  return cfg;
}

std::optional<double> cached_e_opt;

double e_opt() {
  if (!cached_e_opt) cached_e_opt = find_opt(base_config(ExperimentKind::find_opt)).energy;
  return *cached_e_opt;
}

std::map<std::string, std::vector<double>> final_errors(const std::vector<BOTrace>& traces, int iteration = -1) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& t : traces) {
    const BORecord* rec = &t.records.back();
    if (iteration > 0) rec = &t.records.at(static_cast<std::size_t>(iteration - 1));
    out[t.method].push_back(rec->error.value());
  }
  return out;
}

std::optional<BOSweep> noiseless_sweep;

const BOSweep& noiseless_bo(std::vector<KernelKind> kernels) {
  if (!noiseless_sweep) {
    auto cfg = base_config(ExperimentKind::bo);
    cfg.kernels = std::move(kernels);
    cfg.e_opt = e_opt();
    noiseless_sweep = run_bo_sweep(cfg);
  }
  return *noiseless_sweep;
}

const std::vector<KernelKind> kAllKernels{KernelKind::state,    KernelKind::unitary, KernelKind::matern32,
                                          KernelKind::matern52, KernelKind::rbf,     KernelKind::rq};
const std::vector<KernelKind> kClassical{KernelKind::matern32, KernelKind::matern52, KernelKind::rbf, KernelKind::rq};

Outcome ac1() {
  const auto r = find_opt(base_config(ExperimentKind::find_opt));
  cached_e_opt = r.energy;
  return {r.energy <= tol::e_opt_bound && std::abs(r.energy - tol::e_opt_reference) <= tol::e_opt_window,
          "E = " + fmt(r.energy)};
}

Outcome ac2() {
  auto cfg = base_config(ExperimentKind::regress);
  cfg.kernels = {KernelKind::state};
  cfg.n_train = {136};
  std::vector<double> r2;
  for (const auto& row : run_regression_sweep(cfg)) r2.push_back(row.r2v);
  const double med = median(r2);

  const Ansatz a = cfg.ansatz();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
  std::vector<GateAngles> X;
  for (int i = 0; i < 150; ++i) X.push_back(GateAngles::NullaryExpr(a.num_params(), [&] { return u(rng); }));
  KernelSpec spec;
  spec.kind = KernelKind::state;
  spec.ansatz = std::make_shared<const Ansatz>(a);
  const int rank = numerical_rank(gram(spec, X), tol::rank_cutoff);
  return {med >= tol::saturated_r2 && rank == 136,
          "median R2v(N_t=136) = 1 - " + fmt(1 - med) + ", rank(K_150) = " + std::to_string(rank)};
}

Outcome ac3() {
  const auto errs = final_errors(noiseless_bo(kAllKernels).traces);
  const double s = median(errs.at("state")), u = median(errs.at("unitary"));
  double worst_classical = -1;
  std::string detail = "medians: state " + fmt(s) + ", unitary " + fmt(u);
  for (auto k : kClassical) {
    const double m = median(errs.at(to_string(k)));
    worst_classical = std::max(worst_classical, m);
    detail += ", " + to_string(k) + " " + fmt(m);
  }
  const auto& se = errs.at("state");
  const double good = static_cast<double>(std::count_if(se.begin(), se.end(), [](double e) { return e <= tol::state_good_run; })) /
                      static_cast<double>(se.size());
  detail += "; state runs <= 10^-3.5: " + fmt(100 * good) + "%";
  return {s < u && u < worst_classical && s <= tol::state_median_max && good >= tol::state_good_fraction, detail};
}

Outcome ac4() {
  const auto errs = final_errors(noiseless_bo(kAllKernels).traces);
  const double u = median(errs.at("unitary"));
  return {u >= tol::unitary_lo && u <= tol::unitary_hi, "unitary median final error " + fmt(u)};
}

Outcome ac5() {
  auto cfg = base_config(ExperimentKind::spsa);
  cfg.repeats = 50;
  cfg.spsa.max_evaluations = 1000;
  cfg.e_opt = e_opt();
  std::vector<double> spsa;
  for (const auto& r : run_spsa_sweep(cfg).runs) spsa.push_back(r.final_error.value());
  const double sm = median(spsa);
  // Reuses the AC-3 sweep when it ran in this process; otherwise runs only the state kernel.
  const auto& sweep = noiseless_bo(noiseless_sweep ? kAllKernels : std::vector<KernelKind>{KernelKind::state});
  const double bo = median(final_errors(sweep.traces, tol::bo_budget_vs_spsa).at("state"));
  return {sm >= tol::spsa_lo && sm <= tol::spsa_hi && bo < sm,
          "spsa median " + fmt(sm) + " after 1000 evals; state BO median " + fmt(bo) + " after " +
              std::to_string(tol::bo_budget_vs_spsa)};
}

Outcome ac6() {
  auto cfg = base_config(ExperimentKind::bo);
  cfg.repeats = 10;
  cfg.kernels = {KernelKind::state};
  cfg.kernels.insert(cfg.kernels.end(), kClassical.begin(), kClassical.end());
  cfg.noise.shots = 10000;
  cfg.noise.depolarizing = 0.02;
  cfg.e_opt = e_opt();
  const auto errs = final_errors(run_bo_sweep(cfg).traces);
  const double s = median(errs.at("state"));
  bool ok = true;
  std::string detail = "medians: state " + fmt(s);
  for (auto k : kClassical) {
    const double m = median(errs.at(to_string(k)));
    ok &= s < m;
    detail += ", " + to_string(k) + " " + fmt(m);
  }
  return {ok, detail};
}

Ansatz haar_interleaved(int n, int p, std::uint64_t seed) {
  Ansatz a(n);
  const std::string ops = "XYZ";
  std::mt19937_64 rng(seed);
  for (int k = 0; k < p; ++k) {
    if (n == 1)
      a.add_fixed({0}, haar_unitary(2, rng()));
    else
      a.add_fixed({0, 1}, haar_unitary(4, rng()));
    std::string s(static_cast<std::size_t>(n), 'I');
    s[static_cast<std::size_t>(k % n)] = ops[static_cast<std::size_t>(k % 3)];
    a.add_rotation(PauliString(s));
  }
  a.add_fixed({0}, haar_unitary(2, rng()));
  return a;
}

PauliSum test_hamiltonian(int n) {
  if (n == 1) {
    PauliSum h(1);
    h.add(0.7, "Z");
    h.add(-0.4, "X");
    h.add(0.2, "I");
    return h;
  }
  return build_tfim(n, 0.5, -0.5, 0.5, true);
}

Outcome ac7() {
  std::vector<Ansatz> ansatzes{build_brickwork_ry_cx(2, 1), build_brickwork_ry_cx(2, 3), build_brickwork_ry_cx(3, 1),
                               haar_interleaved(1, 6, 1),   haar_interleaved(2, 5, 2),   haar_interleaved(3, 4, 3)};
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
  double es = 0, eu = 0, ee = 0;
  for (const auto& a : ansatzes) {
    const auto S = build_S(a).gram, T = build_T(a).gram;
    const auto h = test_hamiltonian(a.num_qubits());
    const VectorXd w = energy_weights(a, h);
    for (int t = 0; t < 50; ++t) {
      const GateAngles x = GateAngles::NullaryExpr(a.num_params(), [&] { return u(rng); });
      const GateAngles y = GateAngles::NullaryExpr(a.num_params(), [&] { return u(rng); });
      const VectorXd vx = fourier_vector(x), vy = fourier_vector(y);
      es = std::max(es, std::abs(state_kernel(a, x, y) - vx.dot(S * vy)));
      eu = std::max(eu, std::abs(unitary_kernel(a, x, y) - vx.dot(T * vy)));
      ee = std::max(ee, std::abs(energy(a, x, h) - w.dot(vx)));
    }
  }
  return {es < tol::feature_map && eu < tol::feature_map && ee < tol::feature_map,
          "max errors: state " + fmt(es) + ", unitary " + fmt(eu) + ", energy " + fmt(ee)};
}

Outcome ac8() {
  bool ok = true;
  std::string detail;
  for (int n = 1; n <= 2; ++n)
    for (int p = 1; p <= 6; ++p) {
      const Ansatz a = haar_interleaved(n, p, 100 + 10 * static_cast<std::uint64_t>(n) + static_cast<std::uint64_t>(p));
      const auto rs = static_cast<std::uint64_t>(numerical_rank(build_S(a).gram, tol::rank_cutoff));
      const auto ru = static_cast<std::uint64_t>(numerical_rank(build_T(a).gram, tol::rank_cutoff));
      if (rs != state_dim_bound(n, p) || ru != unitary_dim_bound(n, p)) {
        ok = false;
        detail += "mismatch n=" + std::to_string(n) + " p=" + std::to_string(p) + " (" + std::to_string(rs) + "/" +
                  std::to_string(state_dim_bound(n, p)) + ", " + std::to_string(ru) + "/" +
                  std::to_string(unitary_dim_bound(n, p)) + "); ";
      }
    }
  ok &= real_ansatz_dim(4) == 136;
  return {ok, detail + "12 (n, p) cases, real_ansatz_dim(4) = " + std::to_string(real_ansatz_dim(4))};
}

Outcome ac9() {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.3, 2.0), ang(-std::numbers::pi, std::numbers::pi);
  const Ansatz a = build_brickwork_ry_cx(3, 2);
  const auto h = build_tfim(3, 0.5, -0.5, 0.5, true);
  auto points = [&](int m) {
    std::vector<GateAngles> X;
    for (int i = 0; i < m; ++i) X.push_back(GateAngles::NullaryExpr(a.num_params(), [&] { return ang(rng); }));
    return X;
  };
  auto energies = [&](const std::vector<GateAngles>& X) {
    VectorXd y(static_cast<Eigen::Index>(X.size()));
    for (std::size_t i = 0; i < X.size(); ++i) y[static_cast<Eigen::Index>(i)] = energy(a, X[i], h);
    return y;
  };
  const KernelKind kinds[] = {KernelKind::state, KernelKind::unitary, KernelKind::matern32, KernelKind::matern52,
                              KernelKind::rq};
  double worst_grad = 0, worst_interp = 0, worst_var = -1e300;
  for (int trial = 0; trial < 50; ++trial) {
    KernelSpec spec;
    spec.kind = kinds[trial % 5];
    if (is_quantum(spec.kind)) spec.ansatz = std::make_shared<const Ansatz>(a);
    spec.signal_variance = u(rng);
    spec.noise_variance = 0.05 * u(rng);
    spec.lengthscale = u(rng);
    spec.alpha = u(rng);
    const auto X = points(20);
    const VectorXd y = energies(X);
    const auto m = GPModel::fit(spec, X, y, 0.0);
    std::vector<Hyper> hypers{Hyper::signal_variance, Hyper::noise_variance};
    if (!is_quantum(spec.kind)) hypers.push_back(Hyper::lengthscale);
    if (spec.kind == KernelKind::rq) hypers.push_back(Hyper::alpha);
    for (Hyper hp : hypers) {
      auto shifted = [&](double d) {
        KernelSpec s = spec;
        double* v = hp == Hyper::signal_variance ? &s.signal_variance
                    : hp == Hyper::noise_variance ? &s.noise_variance
                    : hp == Hyper::lengthscale    ? &s.lengthscale
                                                  : &s.alpha;
        const double step = 1e-6 * *v;
        *v += d * step;
        return std::make_pair(m.refit(s).log_marginal_likelihood(), step);
      };
      const auto [fp, step] = shifted(1);
      const double fm = shifted(-1).first;
      const double fd = (fp - fm) / (2 * step);
      worst_grad = std::max(worst_grad, std::abs(m.lml_gradient(hp) - fd) / std::max(1.0, std::abs(fd)));
    }
    // Noiseless refit: interpolation, and variance below the prior at fresh points.
    KernelSpec clean = spec;
    clean.noise_variance = 0;
    const auto m0 = m.refit(clean);
    for (std::size_t i = 0; i < X.size(); ++i)
      worst_interp = std::max(worst_interp, std::abs(m0.predict(X[i]).mean - y[static_cast<Eigen::Index>(i)]));
    for (const auto& x : points(5)) worst_var = std::max(worst_var, m.predict(x).variance - spec.signal_variance);
  }
  return {worst_grad < tol::lml_gradient_rel && worst_interp < tol::interpolation && worst_var <= tol::prior_slack,
          "max rel LML gradient error " + fmt(worst_grad) + ", interpolation " + fmt(worst_interp) +
              ", max(var - prior) " + fmt(worst_var)};
}

Outcome ac10() {
  std::string detail;
  // Exactness at chi = 2^floor(n/2).
  double worst_kernel = 0;
  for (int n : {4, 6}) {
    const Ansatz a = build_brickwork_ry_cx(n, 6);
    const int block = 6, first = a.num_params() - block;
    std::mt19937_64 rng(static_cast<std::uint64_t>(n));
    std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
    const GateAngles thA = GateAngles::NullaryExpr(first, [&] { return u(rng); });
    const auto split = split_ansatz(a, first, thA);
    const auto comp = compress_prefix(split, 1 << (n / 2));
    for (int t = 0; t < 20; ++t) {
      const GateAngles x = GateAngles::NullaryExpr(block, [&] { return u(rng); });
      const GateAngles y = GateAngles::NullaryExpr(block, [&] { return u(rng); });
      GateAngles fx(a.num_params()), fy(a.num_params());
      fx << thA, x;
      fy << thA, y;
      worst_kernel =
          std::max(worst_kernel, std::abs(approx_state_kernel(comp.state, split.block, x, y) - state_kernel(a, fx, fy)));
    }
  }
  detail += "max |k~ - k| at full chi " + fmt(worst_kernel);

  // Fidelity trend on brickwork(6, 20) prefixes.
  bool monotone = true;
  const Ansatz big = build_brickwork_ry_cx(6, 20);
  const int first = big.num_params() - 10;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
    const GateAngles thA = GateAngles::NullaryExpr(first, [&] { return u(rng); });
    const auto split = split_ansatz(big, first, thA);
    const Statevector exact = simulate(split.prefix, thA.head(split.prefix.num_params()));
    double prev = -1;
    for (int chi = 1; chi <= 8; ++chi) {
      const double f = std::norm(exact.dot(compress_prefix(split, chi).state.to_statevector()));
      monotone &= f >= prev - tol::fidelity_slack;
      prev = f;
    }
  }
  detail += "; fidelity nondecreasing in chi: " + std::string(monotone ? "yes" : "no");

  // Collapse check at chi = 1 with and without the noise hyperparameter.
  auto cfg = base_config(ExperimentKind::mps_regress);
  cfg.repeats = 3;
  cfg.chi = {1};
  cfg.mps_n_train = {25, 50, 100, 200, 400};
  cfg.mps_noise = {false, true};
  std::map<std::pair<bool, int>, std::vector<double>> r2;
  for (const auto& row : run_mps_regression(cfg))
    if (row.chi == 1) r2[{row.noise_hyper, row.n_train}].push_back(row.r2v);
  auto curve = [&](bool noise) {
    std::vector<double> med;
    for (int n : cfg.mps_n_train) med.push_back(median(r2[{noise, n}]));
    return med;
  };
  const auto without = curve(false), with = curve(true);
  const double peak_without = *std::max_element(without.begin(), without.end());
  const double peak_with = *std::max_element(with.begin(), with.end());
  const bool collapse = without.back() < peak_without - tol::collapse_drop;
  const bool stable = with.back() >= peak_with - tol::stable_drop;
  detail += "; chi=1 median R2v at N_t=400: without noise " + fmt(without.back()) + " (peak " + fmt(peak_without) +
            "), with noise " + fmt(with.back()) + " (peak " + fmt(peak_with) + ")";
  return {worst_kernel < tol::mps_exact && monotone && collapse && stable, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string only;
  app.add_option("--only", only, "Comma-separated subset, e.g. AC-3,AC-4");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC-1", ac1}, {"AC-2", ac2}, {"AC-3", ac3}, {"AC-4", ac4}, {"AC-5", ac5},
      {"AC-6", ac6}, {"AC-7", ac7}, {"AC-8", ac8}, {"AC-9", ac9}, {"AC-10", ac10}};
  std::set<std::string> selected;
  std::stringstream ss(only);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) selected.insert(item);
  for (const auto& s : selected)
    if (std::none_of(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == s; })) {
      std::cerr << "unknown criterion " << s << '\n';
      return 2;
    }

  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    if (!selected.empty() && !selected.count(name)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << name << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "  [" << fmt(secs) << " s]"
              << std::endl;
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
