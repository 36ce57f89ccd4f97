#include "ness/metric.hpp"
#include "ness/quadrature.hpp"
#include "ness/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace ness;

TEST_CASE("metric constants by direct substitution") {
  const MetricParams a = metric_constants(Matrix::Identity(1, 1), 0.0, 0.0, 1.0);
  CHECK(a.theta == 2.0);
  CHECK(a.eta == 0.5);
  CHECK(a.lambda == 0.25);
  CHECK(a.r0 == 3.0);
  CHECK(a.kappa2 == doctest::Approx(0.125).epsilon(1e-15));

  Matrix K = Matrix::Zero(2, 2);
  K(0, 0) = 4.0;
  K(1, 1) = 1.0;
  const MetricParams b = metric_constants(K, 1.0, 0.0, 0.0);
  CHECK(b.theta == 10.0);
  CHECK(b.eta == 0.5);
  CHECK(b.lambda == 0.25);
  CHECK(b.r0 == 0.0);
  CHECK(b.kappa2 == doctest::Approx(1.0 / 32.0).epsilon(1e-15));

  CHECK_THROWS_AS(metric_constants(Matrix::Identity(1, 1), 1.0 / 19.0, 1.0 / 19.0, 1.0), InvalidInput);
  Matrix asym = Matrix::Identity(2, 2);
  asym(0, 1) = 0.1;
  CHECK_THROWS_AS(metric_constants(asym, 0.0, 0.0, 1.0), InvalidInput);
}

TEST_CASE("identity-K table") {
  const MetricParams p = metric_constants(Matrix::Identity(1, 1), 0.0, 0.0, 1.0);
  const MetricTable t = MetricTable::build(p);
  CHECK(t.Phi(3.0) == doctest::Approx(std::sqrt(std::numbers::pi) * std::erf(1.5)).epsilon(1e-10));
  CHECK(t.f(0.0) == 0.0);
  CHECK(t.f_prime(0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(t.g(0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(t.g(p.r0) >= 0.5 - t.quad_tol());
  CHECK(t.C2() == doctest::Approx(p.theta + std::numbers::sqrt2));

  const auto& g = t.g_values();
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] <= g[i - 1] + 1e-15);

  // kappa against its three candidates
  const double eps = t.epsilon();
  const double lr2e = p.lambda * p.R * p.R * eps;
  const double outer = lr2e * p.kappa2 / (lr2e + 2.0 * t.Phi(p.r0));
  const double mixed = 1.0 / (4.0 + 6.0 * eps * p.R);
  CHECK(t.kappa() == doctest::Approx(std::min({t.kappa1(), outer, mixed})).epsilon(1e-10));
  CHECK(eps * p.R <= 4.0 / 9.0 + 1e-15);
  CHECK(t.kappa() <= 1.0 / 4.0);

  // kappa1 and eps from independent quadrature
  const auto phi = [&](double u) { return std::exp(-p.theta * u * u / 8.0); };
  const auto Phi = [&](double u) {
    return std::sqrt(2.0 * std::numbers::pi / p.theta) * std::erf(u * std::sqrt(p.theta / 8.0));
  };
  const double i1 = adaptive_simpson([&](double u) { return Phi(u) / phi(u); }, 0.0, p.r0, 1e-12);
  CHECK(t.kappa1() == doctest::Approx(0.5 / i1).epsilon(1e-8));
  const double i2 = adaptive_simpson(
      [&](double u) { return ((1.0 + t.kappa1() / 2.0) * p.theta * u * u + 4.0) / phi(u); }, 0.0, p.r0, 1e-12);
  CHECK(eps == doctest::Approx(std::min(0.5 / i2, 4.0 / (9.0 * p.R))).epsilon(1e-8));
  CHECK(t.C1() == doctest::Approx(std::numbers::sqrt2 *
                                  std::max(2.0 * p.r0 / Phi(p.r0), 1.0 / (p.lambda * eps * p.R)))
                      .epsilon(1e-10));
}

TEST_CASE("refinement stability") {
  const MetricParams p = metric_constants(Matrix::Identity(1, 1), 0.0, 0.0, 1.0);
  const MetricTable a = MetricTable::build(p, 1e-10);
  const MetricTable b = MetricTable::build(p, 5e-11);
  CHECK(std::abs(a.kappa() / b.kappa() - 1.0) <= 1e-9);
  CHECK(std::abs(a.C1() / b.C1() - 1.0) <= 1e-9);
}

TEST_CASE("finite n thresholds") {
  const MetricParams p = metric_constants(Matrix::Identity(1, 1), 0.0, 0.0, 1.0);
  const MetricTable lim = MetricTable::build(p, 1e-10, 0);
  const MetricTable fin = MetricTable::build(p, 1e-10, 100);
  CHECK(lim.r_end() == doctest::Approx(3.0));
  CHECK(fin.r_end() == doctest::Approx(3.01));
  CHECK(std::abs(fin.kappa() - lim.kappa()) < 0.05 * lim.kappa());
  // f is constant beyond the threshold
  CHECK(fin.f(10.0) == doctest::Approx(fin.f(fin.r_end())));
}

TEST_CASE("g_quadratic") {
  const MetricParams p = metric_constants(Matrix::Identity(2, 2), 0.0, 0.0, 1.0);
  StateVector dx = StateVector::Zero(2), dv = StateVector::Zero(2);
  CHECK(g_quadratic(p, p.K, dx, dv) == 0.0);
  dx(0) = 1.0;
  dv(0) = 1.0;
  CHECK(g_quadratic(p, p.K, dx, dv) == doctest::Approx(1.5));

  Matrix K(2, 2);
  K << 2.0, 0.3, 0.3, 0.7;
  const MetricParams q = metric_constants(K, 0.1, 0.0, 1.0);
  const NoiseStream noise(5);
  for (std::uint64_t i = 0; i < 10000; ++i) {
    StateVector a(2), b(2);
    noise.normals(i, 0, 0, std::span<double>(a.data(), 2));
    noise.normals(i, 1, 0, std::span<double>(b.data(), 2));
    const double n2 = a.squaredNorm() + b.squaredNorm();
    const double G = g_quadratic(q, K, a, b);
    CHECK(G >= q.lambda * n2 - 1e-12);
    CHECK(G <= 0.5 * q.theta * n2 + 1e-12);
  }
}

TEST_CASE("rho_star") {
  const MetricParams p = metric_constants(Matrix::Identity(2, 2), 0.0, 0.0, 1.0);
  const MetricTable t = MetricTable::build(p);
  StateVector z(4);
  z << 0.3, -0.2, 1.0, 0.5;
  CHECK(rho_star(t, p, z, z) == 0.0);

  // small velocity displacement: ratio stays below C2
  for (double h : {1e-2, 1e-4, 1e-6}) {
    StateVector w = z;
    w(2) += h;
    CHECK(rho_star(t, p, z, w) / h <= t.C2());
  }

  // independent evaluation: G plus f by quadrature of phi * g, with g read from the table
  StateVector w(4);
  w << -0.4, 0.6, 0.2, 0.1;
  const StateVector dx = z.head(2) - w.head(2), dv = z.tail(2) - w.tail(2);
  const double G = 0.5 * dx.squaredNorm() + 0.5 * dv.squaredNorm() + p.eta * dx.dot(dv);
  const double r = p.theta * dx.norm() + (dx + dv).norm();
  const double f = adaptive_simpson([&](double u) { return std::exp(-p.theta * u * u / 8.0) * t.g(u); },
                                    0.0, std::min(r, t.r_end()), 1e-12);
  CHECK(rho_star(t, p, z, w) == doctest::Approx(t.epsilon() * G + f).epsilon(1e-6));
  CHECK(metric_radius(p, z, w) == doctest::Approx(r));
}

TEST_CASE("degenerate radius uses the quadratic form") {
  const MetricParams p = metric_constants(Matrix::Identity(1, 1), 0.0, 0.0, 0.0);
  const MetricTable t = MetricTable::build(p);
  CHECK(t.degenerate());
  const NoiseStream noise(8);
  for (std::uint64_t i = 0; i < 2000; ++i) {
    StateVector z(2), w(2);
    noise.normals(i, 0, 0, std::span<double>(z.data(), 2));
    noise.normals(i, 1, 0, std::span<double>(w.data(), 2));
    CHECK((z - w).norm() <= t.C1() * rho_star(t, p, z, w) * (1.0 + 1e-12));
  }
}

TEST_CASE("table serializes") {
  const MetricParams p = metric_constants(Matrix::Identity(1, 1), 0.0, 0.0, 1.0);
  const MetricTable t = MetricTable::build(p, 1e-10, 0, 256);
  const auto j = t.to_json();
  CHECK(j.at("kappa").get<double>() == t.kappa());
  CHECK(j.at("grid").size() == 256);
}
