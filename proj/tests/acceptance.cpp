// One line per acceptance criterion: PASS/FAIL, key numbers, wall time.
// Usage: acceptance [criterion numbers...]

#include "ness/constants.hpp"
#include "ness/estimators.hpp"
#include "ness/metric.hpp"
#include "ness/parallel.hpp"
#include "ness/scenarios.hpp"
#include "ness/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

using namespace ness;

namespace {

struct Outcome {
  bool ok = true;
  std::ostringstream detail;
  void check(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << " [failed: " << what << "]";
    }
  }
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<void(Outcome&)> run;
};

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

bool within(double est, double se, double truth, double k = 3.0) {
  return std::abs(est - truth) <= k * se;
}

StateVector vec(std::initializer_list<double> v) {
  StateVector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// -- 1 ---------------------------------------------------------------------------
void constants_exactness(Outcome& o) {
  const MetricParams mp = metric_constants(Matrix::Identity(1, 1), 0.0, 0.0, 1.0);
  o.check(std::abs(mp.kappa2 - 0.125) <= 1e-12, "kappa2 = 1/8");

  const DefectiveLsi ab = defective_lsi_constants(0.0, 1.0, 0.0, 1.0, 1);
  const double B_ref = 6.0 * std::log(5.0) + 3.75;
  o.check(std::abs(ab.A - 12.0) <= 1e-12, "A = 12");
  o.check(std::abs(ab.B - B_ref) <= 1e-12, "B = 6 ln 5 + 3.75");

  double worst_c = 0.0;
  for (double sigma : {0.5, 1.0, std::numbers::sqrt2, 3.0}) {
    for (double rho : {0.25, 1.0, 4.0}) {
      const PoincareResult pc = poincare_constant(0.0, rho, 0.0, sigma, 1, 1.0, 0.0);
      worst_c = std::max(worst_c, std::abs(pc.C - 4.0 * sigma / rho));
    }
  }
  o.check(worst_c <= 1e-12, "C = 4 sigma / rho");

  const double c_ls = lsi_constant(ab.A, ab.B, 4.0);
  o.check(std::abs(c_ls - (12.0 + 6.0 * std::log(5.0) + 5.75)) <= 1e-12, "C_LS composition");
  o.detail << "kappa2=" << mp.kappa2 << " A=" << ab.A << " B=" << ab.B << " C_LS=" << c_ls;
}

// -- 2 ---------------------------------------------------------------------------
void metric_construction(Outcome& o) {
  const MetricParams mp = metric_constants(Matrix::Identity(1, 1), 0.0, 0.0, 1.0);
  const double tol = 1e-10;
  const MetricTable tab = MetricTable::build(mp, tol);
  const auto& r = tab.grid();
  const auto& g = tab.g_values();
  const auto& f = tab.f_values();
  const auto& Phi = tab.Phi_values();
  std::size_t bad_g = 0, bad_f = 0, bad_concave = 0, bad_res = 0;
  double max_res = -1e300, max_d2 = -1e300;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (g[i] < 0.5 - 1e-15 || g[i] > 1.0 + 1e-15) ++bad_g;
    if (f[i] < 0.5 * r[i] - tol || f[i] > Phi[i] + tol) ++bad_f;
    if (i > 0 && i + 1 < r.size()) {
      const double d2 = f[i + 1] - 2.0 * f[i] + f[i - 1];
      max_d2 = std::max(max_d2, d2);
      if (d2 > tol) ++bad_concave;
    }
    if (r[i] < tab.r_end()) {
      const double res = tab.differential_residual(i);
      max_res = std::max(max_res, res);
      if (res > 10.0 * tol) ++bad_res;
    }
  }
  // Gaussian integral of exp(-theta r^2 / 8) over [0, r0]
  const double a = mp.theta / 8.0;
  const double Phi_ref = 0.5 * std::sqrt(std::numbers::pi / a) * std::erf(std::sqrt(a) * mp.r0);
  const double phi_err = std::abs(tab.Phi(mp.r0) - Phi_ref);
  o.check(bad_g == 0, "1/2 <= g <= 1");
  o.check(bad_f == 0, "r/2 <= f <= Phi");
  o.check(bad_concave == 0, "f concave");
  o.check(bad_res == 0, "differential residual");
  o.check(phi_err <= 1e-8, "Phi(r0)");
  o.detail << "grid=" << r.size() << " max_d2=" << max_d2 << " max_residual=" << max_res
           << " Phi_err=" << phi_err;
}

// -- 3 ---------------------------------------------------------------------------
void metric_equivalence(Outcome& o) {
  const MetricParams mp = metric_constants(Matrix::Identity(1, 1), 0.0, 0.0, 1.0);
  const MetricTable tab = MetricTable::build(mp);
  const NoiseStream noise(2024);
  std::size_t inside = 0, outside = 0, violations = 0;
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const double scale = 4.0 * noise.uniform(i, 0, NoiseStream::kExtra, 0);
    StateVector z(2), w(2);
    for (int k = 0; k < 2; ++k) {
      z(k) = scale * (2.0 * noise.uniform(i, 1, NoiseStream::kExtra, k) - 1.0);
      w(k) = scale * (2.0 * noise.uniform(i, 2, NoiseStream::kExtra, k) - 1.0);
    }
    const double dx = z(0) - w(0), dq = dx + z(1) - w(1);
    const double r = mp.theta * std::abs(dx) + std::abs(dq);
    (r < mp.r0 ? inside : outside) += 1;
    const double lhs = std::hypot(dx, z(1) - w(1));
    const double rhs = tab.C1() * rho_star(tab, mp, z, w);
    worst = std::max(worst, lhs / rhs);
    if (lhs > rhs) ++violations;
  }
  o.check(inside > 0 && outside > 0, "both branches populated");
  o.check(violations == 0, "zero violations");
  o.detail << "inside=" << inside << " outside=" << outside << " worst_ratio=" << worst;
}

// -- 4 ---------------------------------------------------------------------------
void ou_synchronous(Outcome& o) {
  const Scenario s = make_scenario("ou");
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.T = 2.0;
  cfg.seed = 4;
  cfg.record_stride = 50;
  const StateSampler draw = gaussian_sampler(1, 2.0);
  const PairSampler init = [draw](std::uint64_t i, const NoiseStream& n) {
    return std::make_pair(draw(2 * i, n), draw(2 * i + 1, n));
  };
  const ContractionCurve c = w1_contraction(*s.elliptic, CouplingKind::kSynchronous, init, cfg, 10000);
  bool monotone = true;
  for (std::size_t k = 1; k < c.mean.size(); ++k) monotone = monotone && c.mean[k] <= c.mean[k - 1];
  o.check(std::abs(c.fit.kappa - 1.0) <= 0.02, "kappa within 0.02 of 1");
  o.check(monotone, "mean distance nonincreasing");
  o.detail << "kappa=" << c.fit.kappa << " C=" << c.fit.C << " residual=" << c.fit.residual;
}

// -- 5 ---------------------------------------------------------------------------
void ou_reflection(Outcome& o) {
  const Scenario s = make_scenario("ou");
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.T = 2.0;
  cfg.seed = 5;
  cfg.observe = {0.5, 1.0, 2.0};
  const double r0 = 1.0;
  const CoalescenceCurve c =
      coalescence_probability(*s.elliptic, vec({0.5}), vec({-0.5}), cfg, 100000);
  // difference is OU with noise 2 sqrt(2): time-changed Brownian hitting of 0
  for (std::size_t k = 0; k < c.times.size(); ++k) {
    const double t = c.times[k];
    if (t <= 0.0) continue;
    const double ref = std::erf(r0 / std::sqrt(8.0 * std::expm1(2.0 * t)));
    o.check(within(c.prob[k], c.std_error[k], ref), "P[tau > " + std::to_string(t) + "]");
    o.detail << "t=" << t << ":" << c.prob[k] << "/" << ref << " ";
  }
}

// -- 6 ---------------------------------------------------------------------------
void lyapunov(Outcome& o) {
  const Scenario s = make_scenario("ou");
  ErgodicConfig cfg;
  cfg.dt = 1e-3;
  cfg.n_chains = 200;
  cfg.samples_per_chain = 500;
  cfg.seed = 6;
  const EstimateResult r = lyapunov_expectation(*s.elliptic, 0.125, cfg);
  const double bound_ref = 5.0 * std::exp(0.625);
  o.check(within(r.value, r.std_error, std::numbers::sqrt2), "estimate near sqrt 2");
  o.check(r.bound && std::abs(*r.bound - bound_ref) <= 1e-12, "bound 5 e^{5/8}");
  o.check(r.pass.value_or(false) && r.value <= bound_ref, "below bound");
  o.detail << "estimate=" << r.value << " se=" << r.std_error << " bound=" << bound_ref;
}

// -- 7 ---------------------------------------------------------------------------
// E[min(e^Z, e^3)] for Z ~ N(m, s^2)
double clipped_exp_mean(double m, double s2, double power) {
  const double s = std::sqrt(s2), cap = 3.0;
  // min(e^Z, e^3)^power = e^{power Z} below the cap
  return std::exp(power * m + 0.5 * power * power * s2) * normal_cdf((cap - m - power * s2) / s) +
         std::exp(power * cap) * (1.0 - normal_cdf((cap - m) / s));
}

void harnack(Outcome& o) {
  const Scenario s = make_scenario("ou");
  const EllipticModel& m = *s.elliptic;
  // closed-form grid: lhs = (P_t f(y))^alpha, rhs = P_t f^alpha(x) * factor
  int grid_fail = 0;
  for (double t : {0.5, 1.0, 2.0}) {
    for (double dist : {0.5, 1.0, 2.0}) {
      for (double alpha : {2.0, 4.0}) {
        const double x = 0.0, y = x + dist, s2 = 1.0 - std::exp(-2.0 * t);
        const double lhs = std::pow(clipped_exp_mean(y * std::exp(-t), s2, 1.0), alpha);
        const double rhs = clipped_exp_mean(x * std::exp(-t), s2, alpha) *
                           harnack_factor(m.wang_constant(), m.sigma, alpha, t, dist);
        if (!(lhs <= rhs)) ++grid_fail;
      }
    }
  }
  o.check(grid_fail == 0, "closed-form grid");

  const ScalarField f = [](ConstRef z) { return std::min(std::exp(z(0)), std::exp(3.0)); };
  SimConfig cfg;
  cfg.dt = 1e-4;
  cfg.T = 1.0;
  cfg.seed = 7;
  const double alpha = 2.0;
  const StateVector x = vec({0.0}), y = vec({1.0});
  const HarnackResult h = harnack_check(m, f, alpha, x, y, cfg, 10000, true);
  const double s2 = 1.0 - std::exp(-2.0);
  const double Ptf_y = clipped_exp_mean(std::exp(-1.0), s2, 1.0);
  o.check(h.pass, "MC inequality");
  o.check(within(h.girsanov_Ptf_y.value, h.girsanov_Ptf_y.std_error, Ptf_y), "Girsanov P_T f(y)");
  o.check(h.merge_fraction == 1.0, "merge fraction 100%");
  o.check(within(h.weight_mean.value, h.weight_mean.std_error, 1.0), "E[weight] = 1");
  o.detail << "grid_fail=" << grid_fail << " lhs=" << h.lhs << " rhs=" << h.rhs
           << " girsanov=" << h.girsanov_Ptf_y.value << "+-" << h.girsanov_Ptf_y.std_error
           << " exact=" << Ptf_y << " E[w]=" << h.weight_mean.value << " merged=" << h.merge_fraction;
}

// -- 8 ---------------------------------------------------------------------------
void kinetic_coupling(Outcome& o) {
  const Scenario s = make_scenario("kinetic-quadratic", {{"R", 1.0}});
  const NormalizedKineticModel nm = normalize_kinetic(*s.kinetic);
  const MetricParams mp = metric_constants(nm.model.K, nm.model.L1, nm.model.L2, nm.model.R);
  const int n_smooth = 1000;
  const MetricTable tab = MetricTable::build(mp, 1e-10, n_smooth);
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.T = 10.0;
  cfg.seed = 8;
  cfg.n_smooth = n_smooth;
  for (int k = 1; k <= 20; ++k) cfg.observe.push_back(0.5 * k);
  const StateVector z0 = vec({1.0, 0.0}), w0 = vec({-1.0, 0.5});
  const ContractionCurve c = w1_contraction(nm, tab, mp, fixed_pair(z0, w0), cfg, 10000, 0.10);
  o.check(c.envelope_ok, "below envelope with 10% slack");
  o.detail << "worst_ratio=" << c.worst_envelope_ratio << " kappa=" << tab.kappa()
           << " C1=" << tab.C1() << " E[rho*]=" << c.mean_rho0;

  // marginal law of Z' against independent simulation from the same start
  const std::size_t n = 4000;
  SimConfig mc = cfg;
  mc.observe = {1.0, 10.0};
  SimConfig ind = mc;
  ind.seed = 80;
  std::vector<StateVector> coupled(2 * n), independent(2 * n);
  parallel_for(n, [&](std::size_t i) {
    const PairTrajectory p = kinetic_coupled_pair(nm, tab, mp, z0, w0, mc, i);
    const Trajectory t = em_path(nm.model, w0, ind, i, KineticForm::kLinearized);
    for (int k = 0; k < 2; ++k) {
      coupled[2 * i + k] = p.z2[k + 1];
      independent[2 * i + k] = t.states[k + 1];
    }
  });
  int moment_fail = 0;
  for (int k = 0; k < 2; ++k) {
    for (int comp = 0; comp < 2; ++comp) {
      for (int power = 1; power <= 2; ++power) {
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
          a[i] = std::pow(coupled[2 * i + k](comp), power);
          b[i] = std::pow(independent[2 * i + k](comp), power);
        }
        const EstimateResult ea = mean_estimate(a), eb = mean_estimate(b);
        if (std::abs(ea.value - eb.value) > 3.0 * std::hypot(ea.std_error, eb.std_error)) ++moment_fail;
      }
    }
  }
  o.check(moment_fail == 0, "marginal moments of Z'");
  o.detail << " moment_fail=" << moment_fail;
}

// -- 9 ---------------------------------------------------------------------------
// h = exp(a x^2 + c) solves the backward equation when a, c follow a Riccati system.
double riccati_h(double eps, double T, double x) {
  double a = 0.0, c = 0.0;
  const int n = 200000;
  const double dt = T / n;
  const auto fa = [eps](double a_) { return 4.0 * a_ * a_ - 2.0 * (1.0 - eps) * a_ + eps; };
  for (int i = 0; i < n; ++i) {
    const double k1 = fa(a), k2 = fa(a + 0.5 * dt * k1), k3 = fa(a + 0.5 * dt * k2),
                 k4 = fa(a + dt * k3);
    const double a_next = a + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    const double a_mid = a + 0.5 * dt * k1;
    c += dt / 6.0 * ((2 * a + eps) + 4 * (2 * a_mid + eps) + (2 * a_next + eps));
    a = a_next;
  }
  return std::exp(a * x * x + c);
}

// Crank-Nicolson for h_t = h'' + b h' + phi h on [-L, L], h_0 = 1, with the
// boundary values held at the deterministic-path weight.
double crank_nicolson_h(double eps, double T, double x0) {
  const double Lx = 12.0;
  const int m = 2401;
  const double dx = 2.0 * Lx / (m - 1);
  const int nt = 4000;
  const double dt = T / nt;
  std::vector<double> h(m, 1.0), xs(m);
  for (int i = 0; i < m; ++i) xs[i] = -Lx + dx * i;
  std::vector<double> lo(m), di(m), up(m), rhs(m);
  const auto coeffs = [&](int i, double& cl, double& cd, double& cu) {
    const double b = -(1.0 - eps) * xs[i];
    const double phi = eps * (1.0 + xs[i] * xs[i]);
    cl = 1.0 / (dx * dx) - b / (2.0 * dx);
    cu = 1.0 / (dx * dx) + b / (2.0 * dx);
    cd = -2.0 / (dx * dx) + phi;
  };
  for (int n = 0; n < nt; ++n) {
    for (int i = 1; i < m - 1; ++i) {
      double cl, cd, cu;
      coeffs(i, cl, cd, cu);
      rhs[i] = h[i] + 0.5 * dt * (cl * h[i - 1] + cd * h[i] + cu * h[i + 1]);
      lo[i] = -0.5 * dt * cl;
      di[i] = 1.0 - 0.5 * dt * cd;
      up[i] = -0.5 * dt * cu;
    }
    // boundary: extrapolate ln h linearly in x^2 from the two inner nodes
    const auto edge = [&](int i0, int i1, int i2) {
      const double l1 = std::log(h[i1]), l2 = std::log(h[i2]);
      const double s = (l1 - l2) / (xs[i1] * xs[i1] - xs[i2] * xs[i2]);
      return std::exp(l1 + s * (xs[i0] * xs[i0] - xs[i1] * xs[i1]));
    };
    const double left = edge(0, 1, 2), right = edge(m - 1, m - 2, m - 3);
    // Thomas algorithm with fixed ends
    std::vector<double> cp(m), dp(m);
    cp[0] = 0.0;
    dp[0] = left;
    for (int i = 1; i < m - 1; ++i) {
      const double den = di[i] - lo[i] * cp[i - 1];
      cp[i] = up[i] / den;
      dp[i] = (rhs[i] - lo[i] * dp[i - 1]) / den;
    }
    h[m - 1] = right;
    for (int i = m - 2; i >= 1; --i) h[i] = dp[i] - cp[i] * h[i + 1];
    h[0] = left;
  }
  const double pos = (x0 + Lx) / dx;
  const int i = static_cast<int>(pos);
  const double w = pos - i;
  return (1.0 - w) * h[i] + w * h[i + 1];
}

void feynman_kac(Outcome& o) {
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.seed = 9;
  FeynmanKacSystem flat;
  flat.dim = 1;
  flat.drift = [](ConstRef x, OutRef out) { out = -x; };
  const double c = 0.3, T0 = 1.5;
  flat.phi = [c](ConstRef) { return c; };
  const FeynmanKacResult fc = feynman_kac_h(flat, vec({0.7}), T0, 200, cfg);
  o.check(std::abs(fc.h.value - std::exp(c * T0)) <= 1e-12 * std::exp(c * T0) &&
              fc.h.std_error <= 1e-12,
          "constant phi exact");

  const double eps = 0.1, T = 2.0;
  FeynmanKacSystem sys;
  sys.dim = 1;
  sys.drift = [eps](ConstRef x, OutRef out) { out = -(1.0 - eps) * x; };
  sys.phi = [eps](ConstRef x) { return eps * (1.0 + x(0) * x(0)); };
  for (double x : {0.0, 1.0}) {
    const FeynmanKacResult r = feynman_kac_h(sys, vec({x}), T, 100000, cfg);
    const double cn = crank_nicolson_h(eps, T, x);
    const double ric = riccati_h(eps, T, x);
    const double rel = std::abs(r.h.value / cn - 1.0);
    o.check(rel < 0.02, "within 2% of the grid solution at x=" + std::to_string(x));
    o.check(std::abs(cn / ric - 1.0) < 1e-3, "grid and Riccati agree");
    o.detail << "x=" << x << ": mc=" << r.h.value << " grid=" << cn << " riccati=" << ric
             << " rel=" << rel << " ";
  }
}

// -- 10 --------------------------------------------------------------------------
void lipschitz_scan(Outcome& o) {
  const Scenario s = make_scenario("perturbed-ou");
  const EllipticModel& m = *s.elliptic;
  const DerivedEllipticFields fields = derive_elliptic_fields(m);
  // the control process runs on b~; fit its coupling constants
  EllipticModel tilde = m;
  tilde.name = "perturbed-ou-tilde";
  tilde.drift = fields.b_tilde;
  SimConfig rc;
  rc.dt = 1e-3;
  rc.T = 4.0;
  rc.seed = 10;
  rc.record_stride = 100;
  const ReflectionConstants fit =
      fit_reflection_constants(tilde, vec({1.0}), vec({-1.0}), rc, 10000, FitWindow{0.2, 3.0});

  const FeynmanKacSystem sys = elliptic_fk_system(m);
  std::vector<StateVector> pts;
  for (double x : {-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0}) pts.push_back(vec({x}));
  SimConfig fc;
  fc.dt = 1e-3;
  fc.seed = 11;
  const double T = 2.0;
  const EllipticBoundInputs in{m.M_phi, m.L_phi, fit.C_prime()};
  const LipschitzScanReport rep = u_lipschitz_scan(sys, pts, T, 20000, fc, in);
  o.check(rep.pass, "bounded+Lipschitz scan");

  FeynmanKacSystem zero = sys;
  zero.phi = [](ConstRef) { return 0.0; };
  const LipschitzScanReport rz = u_lipschitz_scan(zero, pts, T, 500, fc, in);
  double max_u = 0.0;
  for (std::size_t i = 0; i < rz.u.size(); ++i)
    max_u = std::max(max_u, std::abs(rz.u[i]) - 3.0 * rz.u_se[i]);
  o.check(max_u <= 0.0, "phi = 0 gives u = 0");
  o.detail << "C=" << fit.C << " kappa=" << fit.kappa << " C'=" << fit.C_prime()
           << " M_phi=" << m.M_phi << " worst_margin=" << rep.worst_margin << " pair=("
           << rep.worst_i << "," << rep.worst_j << ")";
}

// -- 11 --------------------------------------------------------------------------
double nelson_ratio(double c, double t, double alpha, double beta) {
  return std::exp(0.5 * c * c * ((1.0 - std::exp(-2.0 * t)) + beta * std::exp(-2.0 * t) - alpha));
}

void hypercontractivity(Outcome& o) {
  const Scenario s = make_scenario("ou");
  const EllipticModel& m = *s.elliptic;
  const double alpha = 2.0, beta = 3.0;
  const double t0 = hypercontractivity_time(m.rho, m.sigma, alpha, beta);
  ErgodicConfig outer;
  outer.dt = 1e-3;
  outer.n_chains = 20;
  outer.samples_per_chain = 100;
  outer.seed = 12;
  for (double c : {0.5, 1.0}) {
    const ScalarField f = [c](ConstRef x) { return std::exp(c * x(0)); };
    const HyperProbeResult r = hypercontractivity_probe(m, f, alpha, beta, 1.0, outer, 1000, 1e-2);
    const double ref = nelson_ratio(c, 1.0, alpha, beta);
    o.check(within(r.ratio_jackknife, r.std_error, ref), "closed form at t=1, c=" + std::to_string(c));
    o.detail << "c=" << c << " t=1: " << r.ratio_jackknife << "+-" << r.std_error << " vs " << ref
             << "; ";
  }
  ErgodicConfig far = outer;
  far.n_chains = 10;
  const ScalarField f = [](ConstRef x) { return std::exp(x(0)); };
  const HyperProbeResult r = hypercontractivity_probe(m, f, alpha, beta, 2.0 * t0, far, 1000, 5e-2);
  o.check(r.bound.has_value() && r.pass.value_or(false), "below bound at t = 2 t0");
  o.detail << "t0=" << t0 << " ratio(2t0)=" << r.ratio_jackknife << " bound=" << r.bound.value_or(-1);
}

// -- 12 --------------------------------------------------------------------------
void mckean_vlasov(Outcome& o) {
  const Scenario s = make_scenario("competition");
  MckvConfig cfg;
  cfg.seed = 13;
  cfg.lambda = 0.0;
  const NoiseStream noise(131);
  std::vector<StateVector> init(cfg.n_particles);
  for (std::size_t i = 0; i < init.size(); ++i) {
    StateVector x(2);
    noise.normals(i, 0, NoiseStream::kInitial, std::span<double>(x.data(), 2));
    init[i] = x + vec({2.0, -1.0});
  }
  const MckvResult free = mckv_fixed_point(*s.kernel, s.grad_V, init, cfg);
  const double last = free.w2_successive.back();
  o.check(last <= 3.0 * free.fluctuation_scale, "decoupled distance at fluctuation scale");

  cfg.lambda = 0.05;
  const MckvResult coupled = mckv_fixed_point(*s.kernel, s.grad_V, init, cfg);
  o.check(coupled.condition_pass, "growth condition probe");
  o.check(coupled.decreasing, "self-consistency distance decreases");
  o.detail << "w2_last(lambda=0)=" << last << " scale=" << free.fluctuation_scale
           << " w2(lambda=0.05)=" << coupled.w2_successive.front() << "->"
           << coupled.w2_successive.back() << " condition_ratio=" << coupled.condition_ratio;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "constants-exactness", 1.0, constants_exactness},
      {2, "metric-construction", 1.0, metric_construction},
      {3, "metric-equivalence", 1.0, metric_equivalence},
      {4, "ou-synchronous-rate", 30.0, ou_synchronous},
      {5, "ou-reflection-survival", 120.0, ou_reflection},
      {6, "lyapunov-moment", 60.0, lyapunov},
      {7, "harnack", 120.0, harnack},
      {8, "kinetic-coupling-envelope", 300.0, kinetic_coupling},
      {9, "feynman-kac", 120.0, feynman_kac},
      {10, "value-lipschitz-scan", 300.0, lipschitz_scan},
      {11, "hypercontractivity-probe", 180.0, hypercontractivity},
      {12, "mckean-vlasov", 180.0, mckean_vlasov},
  };
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_s) o.check(false, "runtime over " + std::to_string(c.budget_s) + " s");
    if (!o.ok) ++failures;
    std::printf("%s %2d %-28s %7.2fs  %s\n", o.ok ? "PASS" : "FAIL", c.id, c.name, secs,
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
