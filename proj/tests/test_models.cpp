#include "ness/models.hpp"
#include "ness/scenarios.hpp"
#include "ness/simulate.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace ness;

namespace {

StateVector vec(std::initializer_list<double> v) {
  StateVector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

std::vector<StateVector> random_points(int d, std::size_t n, double scale, std::uint64_t seed) {
  const StateSampler s = gaussian_sampler(d, scale);
  const NoiseStream noise(seed);
  std::vector<StateVector> pts;
  for (std::size_t i = 0; i < n; ++i) pts.push_back(s(i, noise));
  return pts;
}

}  // namespace

TEST_CASE("eval_drift on the named examples") {
  const Scenario ou = make_scenario("ou", {{"dim", 2}});
  CHECK(eval_drift(*ou.elliptic, vec({2.0, 0.0})).isApprox(vec({-2.0, 0.0})));

  const Scenario rot = make_scenario("rotating", {{"omega", 1.0}, {"amp", 0.0}});
  const StateVector b = eval_drift(*rot.elliptic, vec({1.0, 0.0}));
  CHECK(b(0) == doctest::Approx(-1.0));
  CHECK(b(1) == doctest::Approx(-1.0));

  KineticModel km;
  km.dim = 2;
  km.grad_U = [](ConstRef x, OutRef out) { out = x; };
  km.K = Matrix::Identity(2, 2);
  const StateVector kd = eval_drift(km, vec({1.0, 0.0, 0.0, 1.0}));
  CHECK(kd.isApprox(vec({0.0, 1.0, -1.0, -1.0})));

  CHECK_THROWS_AS(eval_drift(*ou.elliptic, vec({1.0})), InvalidInput);
  EllipticModel bad = *ou.elliptic;
  bad.drift = [](ConstRef, OutRef out) { out.setConstant(std::nan("")); };
  CHECK_THROWS_AS(eval_drift(bad, vec({1.0, 1.0})), SimulationError);
}

TEST_CASE("split models add up") {
  for (const char* name : {"rotating", "perturbed-ou", "ou"}) {
    const Scenario s = make_scenario(name);
    CHECK(split_residual(*s.elliptic, random_points(s.elliptic->dim, 500, 1.5, 3)) <= 1e-10);
  }
}

TEST_CASE("derived fields: zero perturbation and the rotating example") {
  const Scenario ou = make_scenario("ou");
  const DerivedEllipticFields f = derive_elliptic_fields(*ou.elliptic);
  for (double x : {-2.0, 0.3, 1.7}) {
    CHECK(f.phi(vec({x})) == 0.0);
    CHECK(eval(f.b_tilde, vec({x}))(0) == doctest::Approx(-2.0 * x + x));
  }

  // b1 = -grad V with V = amp exp(-|x|^2/2): phi = Lap V + grad V . x
  const double amp = 0.4;
  const Scenario rot = make_scenario("rotating", {{"amp", amp}, {"omega", 0.7}});
  const DerivedEllipticFields g = derive_elliptic_fields(*rot.elliptic);
  for (const auto& x : random_points(2, 200, 1.5, 5)) {
    const double r2 = x.squaredNorm(), e = amp * std::exp(-0.5 * r2);
    const double lap = e * (r2 - 2.0), grad_dot_x = -e * r2;
    CHECK(g.phi(x) == doctest::Approx(lap + grad_dot_x).epsilon(1e-12));
    const StateVector bt = eval(g.b_tilde, x);
    const StateVector b = eval(rot.elliptic->drift, x);
    CHECK((bt - (-2.0 * x - b)).norm() <= 1e-12);
  }
}

TEST_CASE("derived fields: rotation as the perturbation") {
  // mu0 ~ exp(-|x|^2/2 - V), b1 = f x^perp  =>  phi = -f x^perp . grad V
  const double c = 0.8, omega = 0.6;
  const auto gradV = [c](ConstRef x) { return StateVector(c * x.array().pow(3).matrix()); };
  EllipticModel m;
  m.dim = 2;
  m.drift0 = [gradV](ConstRef x, OutRef out) { out = -x - gradV(x); };
  m.drift1 = [omega](ConstRef x, OutRef out) {
    out(0) = omega * x(1);
    out(1) = -omega * x(0);
  };
  m.drift = [&m](ConstRef x, OutRef out) {
    StateVector a(2), b(2);
    m.drift0(x, a);
    m.drift1(x, b);
    out = a + b;
  };
  m.grad_log_mu0 = [gradV](ConstRef x, OutRef out) { out = -x - gradV(x); };
  const DerivedEllipticFields f = derive_elliptic_fields(m);
  for (const auto& x : random_points(2, 100, 1.0, 9)) {
    const StateVector perp = vec({x(1), -x(0)});
    CHECK(f.phi(x) == doctest::Approx(-omega * perp.dot(gradV(x))).epsilon(1e-6));
  }
}

TEST_CASE("finite-difference divergence matches closed forms for cubic fields") {
  const VectorField b1 = [](ConstRef x, OutRef out) {
    out(0) = x(0) * x(0) * x(1) - 2.0 * x(0);
    out(1) = x(1) * x(1) * x(1) + x(0);
  };
  for (const auto& x : random_points(2, 1000, 2.0, 11)) {
    const double exact = 2.0 * x(0) * x(1) - 2.0 + 3.0 * x(1) * x(1);
    CHECK(std::abs(fd_divergence(b1, x) - exact) <= 1e-6);
  }
}

TEST_CASE("derive_elliptic_fields needs the reference gradient") {
  EllipticModel m = *make_scenario("double-well").elliptic;
  CHECK_THROWS_AS(derive_elliptic_fields(m), InvalidInput);
}

TEST_CASE("competition drift") {
  CompetitionKernel zero;
  zero.p = 1;
  zero.value = [](ConstRef, ConstRef) { return 0.0; };
  zero.grad1 = [](ConstRef, ConstRef, OutRef out) { out.setZero(); };
  zero.grad2 = zero.grad1;
  const std::vector<StateVector> one{vec({0.5, -1.5})};
  CHECK(eval(make_competition_drift(zero, one), vec({1.0, 2.0})).norm() == 0.0);

  CompetitionKernel lin;
  lin.p = 1;
  lin.value = [](ConstRef a, ConstRef b) { return a.dot(b); };
  lin.grad1 = [](ConstRef, ConstRef b, OutRef out) { out = b; };
  lin.grad2 = [](ConstRef a, ConstRef, OutRef out) { out = a; };
  const double a = 0.7, b = -1.3;
  const StateVector d = eval(make_competition_drift(lin, {vec({a, b})}), vec({3.0, 4.0}));
  CHECK(d(0) == doctest::Approx(b));
  CHECK(d(1) == doctest::Approx(-a));

  CompetitionKernel at;
  at.p = 1;
  at.value = [](ConstRef x1, ConstRef x2) { return std::atan(x1(0) - x2(0)); };
  at.grad1 = [](ConstRef x1, ConstRef x2, OutRef out) { out(0) = 1.0 / (1.0 + std::pow(x1(0) - x2(0), 2)); };
  at.grad2 = [](ConstRef x1, ConstRef x2, OutRef out) { out(0) = -1.0 / (1.0 + std::pow(x1(0) - x2(0), 2)); };
  const std::vector<StateVector> two{vec({0.2, 1.0}), vec({-0.4, -2.0})};
  const StateVector x = vec({0.5, 0.3});
  const StateVector got = eval(make_competition_drift(at, two), x);
  double first = 0.0, second = 0.0;
  for (const auto& y : two) {
    first += 1.0 / (1.0 + std::pow(x(0) - y(1), 2));
    second += 1.0 / (1.0 + std::pow(y(0) - x(1), 2));
  }
  CHECK(got(0) == doctest::Approx(first / 2.0));
  CHECK(got(1) == doctest::Approx(second / 2.0));

  CHECK_THROWS_AS(make_competition_drift(at, {}), InvalidInput);
  CHECK(competition_gradient_error(at, random_points(2, 200, 2.0, 4)) <= 1e-6);
  const Scenario comp = make_scenario("competition", {{"p", 2}});
  CHECK(competition_gradient_error(*comp.kernel, random_points(4, 200, 2.0, 5)) <= 1e-6);
}

TEST_CASE("kinetic model invariants") {
  const Scenario s = make_scenario("kinetic-quadratic", {{"dim", 2}});
  const KineticModel& km = *s.kinetic;
  CHECK(km.admissible());
  CHECK(kinetic_decomposition_residual(km, random_points(4, 300, 2.0, 6)) <= 1e-10);

  // admissibility is monotone in L2
  KineticModel m = km;
  bool was_admissible = true;
  for (double L2 = 0.0; L2 < 0.2; L2 += 0.001) {
    m.L1 = m.L2 = L2;
    const bool adm = m.admissible();
    CHECK(!(adm && !was_admissible));
    was_admissible = adm;
  }
  CHECK_FALSE(was_admissible);

  KineticModel asym = km;
  asym.K(0, 1) = 0.3;
  CHECK_THROWS_AS(asym.validate(), InvalidInput);
}

TEST_CASE("normalize_kinetic") {
  const Scenario s = make_scenario("kinetic-quadratic", {{"gamma", 1.0}});
  const NormalizedKineticModel id = normalize_kinetic(*s.kinetic);
  CHECK(id.gamma_scale == 1.0);
  CHECK(id.model.K.isApprox(s.kinetic->K));

  KineticModel bad = *s.kinetic;
  bad.gamma = 0.0;
  CHECK_THROWS_AS(normalize_kinetic(bad), InvalidInput);

  // gamma = 2: simulate both systems with the matched noise and map back
  const Scenario s2 = make_scenario("kinetic-quadratic", {{"gamma", 2.0}});
  const NormalizedKineticModel nm = normalize_kinetic(*s2.kinetic);
  CHECK(nm.model.gamma == 1.0);
  CHECK(nm.model.K(0, 0) == doctest::Approx(0.25));
  const StateVector z0 = vec({0.8, -0.4});
  for (double dt : {1e-3, 1e-4}) {
    SimConfig orig;
    orig.dt = dt;
    orig.T = 1.0;
    orig.seed = 21;
    SimConfig norm = orig;
    norm.dt = nm.to_normalized_time(dt);
    norm.T = nm.to_normalized_time(orig.T);
    const Trajectory a = em_path(*s2.kinetic, z0, orig, 0);
    const Trajectory b = em_path(nm.model, nm.to_normalized(z0), norm, 0);
    REQUIRE(a.states.size() == b.states.size());
    double err = 0.0;
    for (std::size_t k = 0; k < a.states.size(); ++k)
      err = std::max(err, (nm.from_normalized(b.states[k]) - a.states[k]).norm());
    CHECK(err < 1e-3);
    CHECK(err < 1e-10);  // the substitution is exact for the Euler scheme
  }
}

TEST_CASE("one-sided probe") {
  const Scenario ou = make_scenario("ou", {{"dim", 3}});
  const OneSidedReport r = probe_one_sided_condition(*ou.elliptic, uniform_box_sampler(3, 5.0), 2000, 1);
  CHECK(r.max_ratio_far == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(r.min_ratio == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK_FALSE(r.violated());

  // b(x) = -A x with A symmetric positive-definite: ratios in [-lambda_max, -lambda_min]
  Matrix A(2, 2);
  A << 2.0, 0.5, 0.5, 1.0;
  const VectorField lin = [A](ConstRef x, OutRef out) { out = -A * x; };
  const Eigen::SelfAdjointEigenSolver<Matrix> es(A);
  const OneSidedReport rl = probe_one_sided_condition(lin, 2, es.eigenvalues()(0), 0.0, 0.0, uniform_box_sampler(2, 3.0), 20000, 2);
  CHECK(rl.max_ratio_far <= -es.eigenvalues()(0) + 1e-12);
  CHECK(rl.min_ratio >= -es.eigenvalues()(1) - 1e-12);
  CHECK_FALSE(rl.violated());

  // b(x) = -x + sin x: dense grid oracle over [-10, 10]^2
  const VectorField ws = [](ConstRef x, OutRef out) { out(0) = -x(0) + std::sin(x(0)); };
  double grid_far = -1e300, grid_near = -1e300;
  for (int i = 0; i <= 400; ++i)
    for (int j = 0; j <= 400; ++j) {
      const double x = -10.0 + 0.05 * i, y = -10.0 + 0.05 * j;
      if (x == y) continue;
      const double ratio = ((-x + std::sin(x)) - (-y + std::sin(y))) / (x - y);
      double& slot = std::abs(x - y) >= 7.0 ? grid_far : grid_near;
      slot = std::max(slot, ratio);
    }
  CHECK(grid_far <= -0.1);
  CHECK(grid_near <= 2.0);
  const OneSidedReport rs = probe_one_sided_condition(ws, 1, 0.1, 2.0, 7.0, uniform_box_sampler(1, 10.0), 20000, 3);
  CHECK_FALSE(rs.violated());
  CHECK(rs.max_ratio_far <= grid_far + 1e-3);

  // declared rho larger than the true contraction
  const OneSidedReport wrong = probe_one_sided_condition(ws, 1, 0.9, 2.0, 7.0, uniform_box_sampler(1, 10.0), 20000, 3);
  CHECK(wrong.far_violation);
}

TEST_CASE("scenario registry") {
  for (const auto& name : scenario_names()) CHECK_NOTHROW(make_scenario(name));
  CHECK_THROWS_AS(make_scenario("nope"), InvalidInput);
  CHECK_THROWS_AS(make_scenario("ou", {{"rate", 1.0}, {"typo", 2}}), InvalidInput);
  CHECK_THROWS_AS(make_scenario("ou", {{"rate", "fast"}}), InvalidInput);
  const Scenario dw = make_scenario("double-well");
  CHECK_FALSE(probe_one_sided_condition(*dw.elliptic, uniform_box_sampler(1, 6.0), 20000, 4).violated());
  const Scenario pou = make_scenario("perturbed-ou");
  CHECK_FALSE(probe_one_sided_condition(*pou.elliptic, uniform_box_sampler(1, 3.0), 20000, 5).violated());
  const Scenario rot = make_scenario("rotating");
  CHECK_FALSE(probe_one_sided_condition(*rot.elliptic, uniform_box_sampler(2, 4.0), 20000, 6).violated());
}
