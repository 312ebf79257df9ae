#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "qkbo/errors.hpp"
#include "qkbo/feature_space.hpp"
#include "qkbo/kernels.hpp"

using namespace qkbo;

namespace {

KernelSpec classical(KernelKind k, double l = 1.0, double alpha = 1.0) {
  KernelSpec s;
  s.kind = k;
  s.lengthscale = l;
  s.alpha = alpha;
  return s;
}

KernelSpec quantum(KernelKind k, const Ansatz& a) {
  KernelSpec s;
  s.kind = k;
  s.ansatz = std::make_shared<const Ansatz>(a);
  return s;
}

Ansatz single_ry() {
  Ansatz a(1);
  a.add_ry(0);
  return a;
}

// Textbook formulas written out in terms of the Euclidean distance d.
double reference_classical(KernelKind k, double d, double l, double alpha) {
  switch (k) {
    case KernelKind::rbf: return std::exp(-d * d / (2 * l * l));
    case KernelKind::matern32: return (1 + std::sqrt(3.0) * d / l) * std::exp(-std::sqrt(3.0) * d / l);
    case KernelKind::matern52:
      return (1 + std::sqrt(5.0) * d / l + 5 * d * d / (3 * l * l)) * std::exp(-std::sqrt(5.0) * d / l);
    case KernelKind::rq: return std::pow(1 + d * d / (2 * alpha * l * l), -alpha);
    default: return NAN;
  }
}

GateAngles unit_offset(Eigen::Index p, double d) {
  GateAngles x = GateAngles::Zero(p);
  x[0] = d;
  return x;
}

std::vector<GateAngles> random_points(std::mt19937_64& rng, int m, Eigen::Index p) {
  std::vector<GateAngles> X;
  for (int i = 0; i < m; ++i) X.push_back(oracle::random_angles(rng, p));
  return X;
}

const KernelKind kClassical[] = {KernelKind::rbf, KernelKind::matern32, KernelKind::matern52, KernelKind::rq};

}  // namespace

TEST_CASE("classical kernel examples") {
  const GateAngles z = GateAngles::Zero(3);
  CHECK(classical_kernel(classical(KernelKind::rbf), z, z) == 1.0);
  CHECK(classical_kernel(classical(KernelKind::matern32), z, unit_offset(3, 1.0)) ==
        doctest::Approx((1 + std::sqrt(3.0)) * std::exp(-std::sqrt(3.0))).epsilon(1e-14));
  CHECK(classical_kernel(classical(KernelKind::matern32), z, unit_offset(3, 1.0)) == doctest::Approx(0.48335).epsilon(1e-5));
  const double rq = classical_kernel(classical(KernelKind::rq, 1.0, 1e6), z, unit_offset(3, 1.0));
  const double rbf = classical_kernel(classical(KernelKind::rbf), z, unit_offset(3, 1.0));
  CHECK(std::abs(rq - rbf) < 1e-5);
}

TEST_CASE("classical kernels follow the distance formulas") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.2, 3.0);
  for (KernelKind k : kClassical)
    for (int t = 0; t < 20; ++t) {
      const double l = u(rng), alpha = u(rng);
      const GateAngles x = oracle::random_angles(rng, 5), y = oracle::random_angles(rng, 5);
      const double d = std::sqrt((x - y).array().square().sum());
      const double v = classical_kernel(classical(k, l, alpha), x, y);
      CHECK(std::abs(v - reference_classical(k, d, l, alpha)) < 1e-13);
      CHECK(v > 0.0);
      CHECK(v <= 1.0);
    }
}

TEST_CASE("classical hyperparameter derivatives match finite differences") {
  std::mt19937_64 rng(3);
  for (KernelKind k : kClassical)
    for (double stat : {0.3, 1.7, 6.0}) {
      KernelSpec s = classical(k, 1.3, 0.8);
      const double h = 1e-6;
      KernelSpec sp = s, sm = s;
      sp.lengthscale += h;
      sm.lengthscale -= h;
      const double fd = (base_from_statistic(sp, stat) - base_from_statistic(sm, stat)) / (2 * h);
      CHECK(std::abs(dbase_dlengthscale(s, stat) - fd) < 1e-8);
      if (k == KernelKind::rq) {
        sp = s;
        sm = s;
        sp.alpha += h;
        sm.alpha -= h;
        const double fa = (base_from_statistic(sp, stat) - base_from_statistic(sm, stat)) / (2 * h);
        CHECK(std::abs(dbase_dalpha(s, stat) - fa) < 1e-8);
      }
    }
  CHECK_THROWS_AS(dbase_dalpha(classical(KernelKind::rbf), 1.0), ConfigError);
  CHECK_THROWS_AS(dbase_dlengthscale(quantum(KernelKind::state, single_ry()), 1.0), ConfigError);
}

TEST_CASE("classical kernels reject bad hyperparameters") {
  const GateAngles z = GateAngles::Zero(2);
  CHECK_THROWS_AS(classical_kernel(classical(KernelKind::rbf, 0.0), z, z), ConfigError);
  CHECK_THROWS_AS(classical_kernel(classical(KernelKind::rq, 1.0, -1.0), z, z), ConfigError);
  KernelSpec s = classical(KernelKind::rbf);
  s.signal_variance = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.signal_variance = 1.0;
  s.noise_variance = -1e-3;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK_THROWS_AS(kernel_kind_from_string("periodic"), ConfigError);
  CHECK(kernel_kind_from_string("mps-state") == KernelKind::mps_state);
  for (KernelKind k : {KernelKind::state, KernelKind::unitary, KernelKind::mps_state, KernelKind::matern32,
                       KernelKind::matern52, KernelKind::rbf, KernelKind::rq})
    CHECK(kernel_kind_from_string(to_string(k)) == k);
}

TEST_CASE("quantum kernels on a single RY rotation") {
  const Ansatz a = single_ry();
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const GateAngles x = oracle::random_angles(rng, 1), y = oracle::random_angles(rng, 1);
    const double ref = std::pow(std::cos((x[0] - y[0]) / 2), 2);
    CHECK(std::abs(state_kernel(a, x, y) - ref) < 1e-14);
    CHECK(std::abs(unitary_kernel(a, x, y) - ref) < 1e-14);
    CHECK(std::abs(state_kernel(a, x, x) - 1.0) < 1e-14);
    CHECK(std::abs(unitary_kernel(a, x, x) - 1.0) < 1e-14);
  }
}

TEST_CASE("quantum kernels match the explicit feature map") {
  std::mt19937_64 rng(5);
  const Ansatz b3 = build_brickwork_ry_cx(3, 2);
  const auto S = build_S(b3).gram;
  const Ansatz b2 = build_brickwork_ry_cx(2, 1);
  const auto T = build_T(b2).gram;
  for (int t = 0; t < 10; ++t) {
    const GateAngles x = oracle::random_angles(rng, b3.num_params()), y = oracle::random_angles(rng, b3.num_params());
    CHECK(std::abs(state_kernel(b3, x, y) - fourier_vector(y).dot(S * fourier_vector(x))) < 1e-10);
    const GateAngles u = oracle::random_angles(rng, b2.num_params()), w = oracle::random_angles(rng, b2.num_params());
    CHECK(std::abs(unitary_kernel(b2, u, w) - fourier_vector(w).dot(T * fourier_vector(u))) < 1e-10);
  }
}

TEST_CASE("unitary kernel against the dense oracle") {
  std::mt19937_64 rng(6);
  const Ansatz a = build_brickwork_ry_cx(3, 3);
  for (int t = 0; t < 5; ++t) {
    const GateAngles x = oracle::random_angles(rng, a.num_params()), y = oracle::random_angles(rng, a.num_params());
    const auto u = oracle::unitary(a, x), v = oracle::unitary(a, y);
    const double ref = std::norm((v.adjoint() * u).trace() / 8.0);
    CHECK(std::abs(unitary_kernel(a, x, y) - ref) < 1e-12);
  }
}

TEST_CASE("unitary kernel capacity") {
  const Ansatz a = build_brickwork_ry_cx(11, 1);
  const GateAngles x = GateAngles::Zero(a.num_params());
  CHECK_THROWS_AS(unitary_kernel(a, x, x), CapacityError);
  CHECK_THROWS_AS(quantum(KernelKind::unitary, a).validate(), CapacityError);
}

TEST_CASE("kernel symmetry, bounds and periodicity") {
  std::mt19937_64 rng(7);
  const Ansatz a = build_brickwork_ry_cx(3, 2);
  const Eigen::Index p = a.num_params();
  std::vector<KernelSpec> specs = {quantum(KernelKind::state, a), quantum(KernelKind::unitary, a)};
  for (KernelKind k : kClassical) specs.push_back(classical(k, 1.5, 2.0));
  for (const auto& s : specs)
    for (int t = 0; t < 10; ++t) {
      const GateAngles x = oracle::random_angles(rng, p), y = oracle::random_angles(rng, p);
      const double kxy = base_kernel(s, x, y);
      CHECK(std::abs(kxy - base_kernel(s, y, x)) < 1e-12);
      CHECK(kxy >= 0.0);
      CHECK(kxy <= 1.0 + 1e-12);
      if (is_quantum(s.kind)) {
        GateAngles x2 = x;
        x2[t % p] += 2 * std::numbers::pi;
        CHECK(std::abs(base_kernel(s, x2, y) - kxy) < 1e-10);
      } else {
        CHECK(kxy > 0.0);
      }
    }
}

TEST_CASE("brickwork overlaps are real") {
  std::mt19937_64 rng(8);
  const Ansatz a = build_brickwork_ry_cx(4, 4);
  for (int t = 0; t < 10; ++t) {
    const auto s1 = simulate(a, oracle::random_angles(rng, 16));
    const auto s2 = simulate(a, oracle::random_angles(rng, 16));
    const cplx ov = s2.dot(s1);
    CHECK(std::abs(ov.imag()) < 1e-10);
    CHECK(std::abs(std::norm(ov) - ov.real() * ov.real()) < 1e-10);
  }
}

TEST_CASE("gram examples") {
  KernelSpec s = quantum(KernelKind::state, build_brickwork_ry_cx(4, 4));
  const auto g1 = gram(s, {GateAngles::Zero(16)});
  REQUIRE(g1.rows() == 1);
  CHECK(g1(0, 0) == doctest::Approx(1.0 + 1e-10).epsilon(1e-15));

  KernelSpec r = classical(KernelKind::rbf);
  r.signal_variance = 2.0;
  r.noise_variance = 0.5;
  const GateAngles x = GateAngles::Constant(3, 0.4);
  const auto g2 = gram(r, {x, x});
  CHECK(g2(0, 0) == 2.5 + kGramJitter);
  CHECK(g2(1, 1) == 2.5 + kGramJitter);
  CHECK(g2(0, 1) == 2.0);
  CHECK(g2(1, 0) == 2.0);
  CHECK_THROWS_AS(gram(r, {}), ConfigError);
}

TEST_CASE("state gram on 150 points has rank 136") {
  std::mt19937_64 rng(9);
  KernelSpec s = quantum(KernelKind::state, build_brickwork_ry_cx(4, 4));
  const auto X = random_points(rng, 150, 16);
  Eigen::MatrixXd g = gram(s, X);
  g.diagonal().array() -= kGramJitter;
  CHECK(numerical_rank(g, 1e-8) == 136);
}

TEST_CASE("gram is PSD and symmetric") {
  std::mt19937_64 rng(10);
  const Ansatz a = build_brickwork_ry_cx(3, 2);
  std::vector<KernelSpec> specs = {quantum(KernelKind::state, a), quantum(KernelKind::unitary, a)};
  for (KernelKind k : kClassical) specs.push_back(classical(k, 0.7, 0.5));
  for (auto& s : specs) {
    s.signal_variance = 1.7;
    const auto X = random_points(rng, 200, a.num_params());
    Eigen::MatrixXd g = gram(s, X);
    g.diagonal().array() -= kGramJitter;
    CHECK((g - g.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8);
  }
}

TEST_CASE("cross kernel examples") {
  std::mt19937_64 rng(11);
  const Ansatz a = build_brickwork_ry_cx(3, 2);
  KernelSpec s = quantum(KernelKind::state, a);
  s.noise_variance = 0.3;
  const auto X = random_points(rng, 6, a.num_params());
  CHECK(std::abs(cross_kernel(s, X, X[0])[0] - 1.0) < 1e-14);

  KernelSpec r = classical(KernelKind::rbf);
  GateAngles far = GateAngles::Zero(a.num_params());
  far[0] = 100.0;
  const auto kf = cross_kernel(r, {GateAngles::Zero(a.num_params())}, far);
  CHECK(kf[0] < 1e-300);

  for (auto spec : {s, r, quantum(KernelKind::unitary, a), classical(KernelKind::rq, 0.8, 3.0)}) {
    spec.signal_variance = 1.3;
    const GateAngles xs = oracle::random_angles(rng, a.num_params());
    const auto k = cross_kernel(spec, X, xs);
    for (std::size_t i = 0; i < X.size(); ++i)
      CHECK(std::abs(k[static_cast<Eigen::Index>(i)] - 1.3 * base_kernel(spec, xs, X[i])) < 1e-14);
  }
}

TEST_CASE("kernel data cache agrees with direct evaluation") {
  std::mt19937_64 rng(12);
  const Ansatz a = build_brickwork_ry_cx(3, 2);
  for (auto spec : {quantum(KernelKind::state, a), quantum(KernelKind::unitary, a), classical(KernelKind::matern52, 1.1)}) {
    KernelData data(spec);
    const auto X = random_points(rng, 12, a.num_params());
    data.add_all(X);
    CHECK(data.size() == 12);
    CHECK(data.pair_evaluations() == 12 * 13 / 2);
    const Eigen::MatrixXd g = data.base_gram();
    for (std::size_t i = 0; i < X.size(); ++i)
      for (std::size_t j = 0; j < X.size(); ++j)
        CHECK(std::abs(g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - base_kernel(spec, X[i], X[j])) < 1e-12);
    const GateAngles xs = oracle::random_angles(rng, a.num_params());
    const auto cb = data.cross_base(xs);
    for (std::size_t i = 0; i < X.size(); ++i)
      CHECK(std::abs(cb[static_cast<Eigen::Index>(i)] - base_kernel(spec, xs, X[i])) < 1e-12);
    if (!is_quantum(spec.kind)) {
      data.set_hyperparameters(2.0, 1.0, 1.0, 0.0);
      KernelSpec s2 = spec;
      s2.lengthscale = 2.0;
      CHECK(std::abs(data.base_gram()(0, 1) - base_kernel(s2, X[0], X[1])) < 1e-14);
    }
    CHECK_THROWS_AS(data.add(GateAngles::Zero(2)), ShapeError);
  }
}

TEST_CASE("weighted cross-kernel gradient matches finite differences") {
  std::mt19937_64 rng(13);
  // Shared parameters, a two-qubit rotation and fixed gates in one circuit.
  Ansatz a(3);
  a.add_ry(0);
  a.add_rotation(PauliString("XYI"), -1);
  a.add_cx(1, 2);
  a.add_rotation(PauliString("IZX"), 0);
  a.add_fixed({2}, hadamard_matrix(), "H");
  a.add_ry(2);
  a.add_rotation(PauliString("ZIZ"), 1);
  for (auto spec : {quantum(KernelKind::state, a), quantum(KernelKind::unitary, a)}) {
    KernelData data(spec);
    const auto X = random_points(rng, 7, a.num_params());
    data.add_all(X);
    Eigen::MatrixXd w = Eigen::MatrixXd::Random(6, 2);
    const GateAngles xs = oracle::random_angles(rng, a.num_params());
    const Eigen::MatrixXd g = data.weighted_cross_gradient(xs, w);
    REQUIRE(g.rows() == a.num_params());
    for (Eigen::Index i = 0; i < xs.size(); ++i) {
      GateAngles xp = xs, xm = xs;
      xp[i] += 1e-6;
      xm[i] -= 1e-6;
      const Eigen::VectorXd fd = (w.transpose() * (data.cross_base(xp) - data.cross_base(xm)).head(6)) / 2e-6;
      for (Eigen::Index c = 0; c < 2; ++c) CHECK(std::abs(g(i, c) - fd[c]) < 1e-7);
    }
    CHECK_THROWS_AS(data.weighted_cross_gradient(xs, Eigen::MatrixXd::Ones(8, 1)), ShapeError);
  }
  KernelData cl(classical(KernelKind::rbf));
  CHECK_FALSE(cl.has_weighted_gradient());
  CHECK_THROWS_AS(cl.weighted_cross_gradient(GateAngles::Zero(2), Eigen::MatrixXd::Ones(0, 1)), UnsupportedError);
}
