#include "ness/estimators.hpp"

#include "ness/assignment.hpp"
#include "ness/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <string>

namespace ness {

namespace {

std::span<double> as_span(StateVector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// sample standard error of the mean
double std_error_of(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t tag) {
  return NoiseStream::mix(seed + 0x632be59bd9b4e019ULL * (tag + 1));
}

// One Euler step of dX = b dt + sigma dB in place.
struct EulerStepper {
  const VectorField& drift;
  double h, amp;
  StateVector b, xi;
  EulerStepper(const VectorField& f, int d, double step, double sigma)
      : drift(f), h(step), amp(sigma * std::sqrt(step)), b(d), xi(d) {}
  void operator()(StateVector& x, const NoiseStream& noise, std::uint64_t path, std::uint64_t k) {
    drift(x, b);
    noise.normals(path, k, NoiseStream::kPrimary, as_span(xi));
    x += h * b + amp * xi;
  }
};

void require_finite_state(ConstRef x, const char* who) {
  if (!x.allFinite()) throw SimulationError(std::string(who) + ": state left the finite range");
}

double resolved(double v, double fallback) { return v > 0.0 ? v : fallback; }

}  // namespace

// -- EstimateResult ------------------------------------------------------------

EstimateResult& EstimateResult::check_upper(double b) {
  bound = b;
  pass = value <= b + half_width();
  return *this;
}

nlohmann::json EstimateResult::to_json() const {
  nlohmann::json j{{"value", value},   {"std_error", std_error},     {"n_samples", n_samples},
                   {"seed", seed},     {"half_width", half_width()}};
  if (bound) j["bound"] = *bound;
  if (pass) j["pass"] = *pass;
  return j;
}

EstimateResult mean_estimate(const std::vector<double>& samples, std::uint64_t seed) {
  EstimateResult r;
  r.value = mean_of(samples);
  r.std_error = std_error_of(samples, r.value);
  r.n_samples = samples.size();
  r.seed = seed;
  return r;
}

nlohmann::json RateFit::to_json() const {
  return {{"C", C},         {"kappa", kappa}, {"residual", residual},
          {"t_begin", t_begin}, {"t_end", t_end}, {"n_points", n_points}};
}

RateFit fit_exponential_rate(const std::vector<double>& t, const std::vector<double>& m) {
  require(t.size() == m.size(), "fit_exponential_rate: series lengths differ");
  require(t.size() >= 3, "fit_exponential_rate: need at least 3 points");
  for (double v : m) require(v > 0.0 && std::isfinite(v), "fit_exponential_rate: values must be positive");
  const double n = static_cast<double>(t.size());
  const double tm = mean_of(t);
  double ym = 0.0;
  for (double v : m) ym += std::log(v);
  ym /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    sxx += (t[i] - tm) * (t[i] - tm);
    sxy += (t[i] - tm) * (std::log(m[i]) - ym);
  }
  require(sxx > 0.0, "fit_exponential_rate: times must not all coincide");
  const double slope = sxy / sxx;
  RateFit fit;
  fit.kappa = -slope;
  fit.C = std::exp(ym - slope * tm);
  double rss = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double r = std::log(m[i]) - (std::log(fit.C) - fit.kappa * t[i]);
    rss += r * r;
  }
  fit.residual = std::sqrt(rss / n);
  fit.t_begin = *std::min_element(t.begin(), t.end());
  fit.t_end = *std::max_element(t.begin(), t.end());
  fit.n_points = t.size();
  return fit;
}

PairSampler fixed_pair(const StateVector& x, const StateVector& y) {
  return [x, y](std::uint64_t, const NoiseStream&) { return std::make_pair(x, y); };
}

// -- contraction -------------------------------------------------------------------

namespace {

struct PairEnsemble {
  std::vector<double> times;
  std::vector<std::vector<double>> dist;    // [path][time]
  std::vector<std::vector<char>> merged;    // [path][time]
  std::vector<double> rho0;                 // kinetic only
};

template <class Run>
PairEnsemble run_pairs(std::size_t n_paths, const Run& run) {
  PairEnsemble ens;
  ens.dist.resize(n_paths);
  ens.merged.resize(n_paths);
  ens.rho0.assign(n_paths, 0.0);
  std::vector<std::vector<double>> times(n_paths);
  parallel_for(n_paths, [&](std::size_t i) {
    double rho0 = 0.0;
    const PairTrajectory p = run(i, rho0);
    ens.dist[i] = p.distances();
    ens.merged[i].resize(p.mode.size());
    for (std::size_t k = 0; k < p.mode.size(); ++k)
      ens.merged[i][k] = p.mode[k] == CouplingMode::kMerged;
    ens.rho0[i] = rho0;
    if (i == 0) times[0] = p.times;
  });
  ens.times = times[0];
  return ens;
}

ContractionCurve summarize(const PairEnsemble& ens, const FitWindow& window) {
  ContractionCurve c;
  const std::size_t n = ens.dist.size();
  const std::size_t m = ens.times.size();
  c.times = ens.times;
  c.n_paths = n;
  c.mean.assign(m, 0.0);
  c.std_error.assign(m, 0.0);
  c.coalesced.assign(m, 0.0);
  std::vector<double> col(n);
  for (std::size_t k = 0; k < m; ++k) {
    double merged = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      col[i] = ens.dist[i][k];
      merged += ens.merged[i][k];
    }
    c.mean[k] = mean_of(col);
    c.std_error[k] = std_error_of(col, c.mean[k]);
    c.coalesced[k] = merged / static_cast<double>(n);
  }
  std::vector<double> ft, fm;
  for (std::size_t k = 0; k < m; ++k) {
    if (c.times[k] < window.t_begin || c.times[k] > window.t_end || !(c.mean[k] > 0.0)) continue;
    ft.push_back(c.times[k]);
    fm.push_back(c.mean[k]);
  }
  if (ft.size() < 3)
    throw SimulationError("w1_contraction: fewer than 3 positive means in the fit window");
  c.fit = fit_exponential_rate(ft, fm);
  return c;
}

}  // namespace

nlohmann::json ContractionCurve::to_json() const {
  nlohmann::json j{{"times", times},         {"mean", mean},      {"std_error", std_error},
                   {"coalesced", coalesced}, {"fit", fit.to_json()}, {"n_paths", n_paths}};
  if (!envelope.empty()) {
    j["mean_rho0"] = mean_rho0;
    j["envelope"] = envelope;
    j["worst_envelope_ratio"] = worst_envelope_ratio;
    j["envelope_ok"] = envelope_ok;
  }
  return j;
}

ContractionCurve w1_contraction(const EllipticModel& model, CouplingKind kind,
                                const PairSampler& init, const SimConfig& cfg, std::size_t n_paths,
                                FitWindow window) {
  require(n_paths >= 1, "w1_contraction: need at least one path");
  const NoiseStream init_noise(sub_seed(cfg.seed, 11));
  const auto ens = run_pairs(n_paths, [&](std::size_t i, double&) {
    const auto [x0, y0] = init(i, init_noise);
    return kind == CouplingKind::kSynchronous ? synchronous_pair(model, x0, y0, cfg, i)
                                              : reflection_pair(model, x0, y0, cfg, i);
  });
  return summarize(ens, window);
}

ContractionCurve w1_contraction(const NormalizedKineticModel& model, const MetricTable& table,
                                const MetricParams& params, const PairSampler& init,
                                const SimConfig& cfg, std::size_t n_paths, double slack,
                                FitWindow window) {
  require(n_paths >= 1, "w1_contraction: need at least one path");
  require(slack >= 0.0, "w1_contraction: slack must be nonnegative");
  const NoiseStream init_noise(sub_seed(cfg.seed, 11));
  const auto ens = run_pairs(n_paths, [&](std::size_t i, double& rho0) {
    const auto [z0, w0] = init(i, init_noise);
    rho0 = rho_star(table, params, z0, w0);
    return kinetic_coupled_pair(model, table, params, z0, w0, cfg, i);
  });
  ContractionCurve c = summarize(ens, window);
  c.mean_rho0 = mean_of(ens.rho0);
  c.envelope.resize(c.times.size());
  c.worst_envelope_ratio = 0.0;
  for (std::size_t k = 0; k < c.times.size(); ++k) {
    c.envelope[k] = table.C1() * std::exp(-table.kappa() * c.times[k]) * c.mean_rho0;
    const double ratio = c.mean[k] / c.envelope[k];
    c.worst_envelope_ratio = std::max(c.worst_envelope_ratio, ratio);
  }
  c.envelope_ok = c.worst_envelope_ratio <= 1.0 + slack;
  return c;
}

nlohmann::json CoalescenceCurve::to_json() const {
  return {{"times", times}, {"prob", prob},       {"std_error", std_error},
          {"fit", fit.to_json()}, {"fit_bounds", fit_bounds}, {"n_paths", n_paths}};
}

namespace {

CoalescenceCurve coalescence_from(const ContractionCurve& c, const FitWindow& window) {
  CoalescenceCurve out;
  out.times = c.times;
  out.n_paths = c.n_paths;
  const double n = static_cast<double>(c.n_paths);
  for (double merged : c.coalesced) {
    const double p = 1.0 - merged;
    out.prob.push_back(p);
    out.std_error.push_back(std::sqrt(std::max(0.0, p * (1.0 - p)) / n));
  }
  std::vector<double> ft, fm;
  for (std::size_t k = 0; k < out.times.size(); ++k) {
    const double t = out.times[k];
    if (t <= 0.0 || t < window.t_begin || t > window.t_end || !(out.prob[k] > 0.0)) continue;
    ft.push_back(t);
    fm.push_back(t * out.prob[k]);
  }
  if (ft.size() >= 3) {
    // rate from least squares on ln(t p); prefactor raised to the tightest envelope
    out.fit = fit_exponential_rate(ft, fm);
    double envelope = 0.0;
    for (std::size_t k = 0; k < ft.size(); ++k)
      envelope = std::max(envelope, fm[k] * std::exp(out.fit.kappa * ft[k]));
    out.fit.C = envelope;
    out.fit_bounds = out.fit.kappa > 0.0;
  }
  return out;
}

}  // namespace

CoalescenceCurve coalescence_probability(const EllipticModel& model, const StateVector& x0,
                                         const StateVector& y0, const SimConfig& cfg,
                                         std::size_t n_paths, FitWindow window) {
  require(n_paths >= 1, "coalescence_probability: need at least one path");
  const auto ens = run_pairs(n_paths, [&](std::size_t i, double&) {
    return reflection_pair(model, x0, y0, cfg, i);
  });
  ContractionCurve c;
  c.times = ens.times;
  c.n_paths = n_paths;
  c.coalesced.assign(c.times.size(), 0.0);
  for (std::size_t k = 0; k < c.times.size(); ++k) {
    double merged = 0.0;
    for (std::size_t i = 0; i < n_paths; ++i) merged += ens.merged[i][k];
    c.coalesced[k] = merged / static_cast<double>(n_paths);
  }
  return coalescence_from(c, window);
}

ReflectionConstants fit_reflection_constants(const EllipticModel& model, const StateVector& x0,
                                             const StateVector& y0, const SimConfig& cfg,
                                             std::size_t n_paths, FitWindow window) {
  const double d0 = (x0 - y0).norm();
  require(d0 > 0.0, "fit_reflection_constants: initial points must differ");
  ReflectionConstants rc;
  rc.distance = w1_contraction(model, CouplingKind::kReflection, fixed_pair(x0, y0), cfg, n_paths,
                               window);
  rc.coalescence = coalescence_from(rc.distance, window);
  rc.kappa = rc.distance.fit.kappa;
  if (!(rc.kappa > 0.0)) throw SimulationError("fit_reflection_constants: fitted rate is not positive");
  double C = 0.0;
  for (std::size_t k = 0; k < rc.distance.times.size(); ++k) {
    const double t = rc.distance.times[k];
    if (t < window.t_begin || t > window.t_end) continue;
    const double grow = std::exp(rc.kappa * t) / d0;
    C = std::max(C, rc.distance.mean[k] * grow);
    if (t > 0.0) C = std::max(C, rc.coalescence.prob[k] * t * grow);
  }
  rc.C = C;
  return rc;
}

// -- ergodic sampling -------------------------------------------------------------

std::vector<StateVector> ergodic_samples(const EllipticModel& model, const StateVector& x0,
                                         const ErgodicConfig& cfg, std::uint64_t stream_tag) {
  model.validate();
  require(x0.size() == model.dim, "ergodic_samples: dimension mismatch");
  require(cfg.dt > 0.0 && cfg.n_chains >= 1 && cfg.samples_per_chain >= 1,
          "ergodic_samples: invalid configuration");
  const double burn = resolved(cfg.burn_in, 10.0 / model.rho);
  const double thin = resolved(cfg.thinning, 1.0 / model.rho);
  const auto n_burn = static_cast<std::size_t>(std::ceil(burn / cfg.dt - 1e-9));
  const auto n_thin = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(thin / cfg.dt)));
  const NoiseStream noise = NoiseStream(cfg.seed).derive(stream_tag);
  std::vector<StateVector> out(cfg.n_chains * cfg.samples_per_chain);
  parallel_for(cfg.n_chains, [&](std::size_t c) {
    EulerStepper step(model.drift, model.dim, cfg.dt, model.sigma);
    StateVector x = x0;
    std::uint64_t k = 0;
    for (; k < n_burn; ++k) step(x, noise, c, k);
    for (std::size_t s = 0; s < cfg.samples_per_chain; ++s) {
      for (std::size_t j = 0; j < n_thin; ++j, ++k) step(x, noise, c, k);
      require_finite_state(x, "ergodic_samples");
      out[c * cfg.samples_per_chain + s] = x;
    }
  });
  return out;
}

EstimateResult lyapunov_expectation(const EllipticModel& model, double delta,
                                    const ErgodicConfig& cfg) {
  model.validate();
  require(delta > 0.0 && delta < 0.25 * model.rho,
          "lyapunov_expectation: delta must lie in (0, rho/4)");
  const StateVector zero = StateVector::Zero(model.dim);
  ErgodicConfig c2 = cfg;
  c2.n_chains = 2 * cfg.n_chains;
  const auto samples = ergodic_samples(model, zero, c2, 17);
  std::vector<double> chain_means(cfg.n_chains);
  for (std::size_t c = 0; c < cfg.n_chains; ++c) {
    double s = 0.0;
    for (std::size_t j = 0; j < cfg.samples_per_chain; ++j) {
      const auto& x = samples[(2 * c) * cfg.samples_per_chain + j];
      const auto& y = samples[(2 * c + 1) * cfg.samples_per_chain + j];
      s += std::exp(delta * (x - y).squaredNorm());
    }
    chain_means[c] = s / static_cast<double>(cfg.samples_per_chain);
  }
  EstimateResult r = mean_estimate(chain_means, cfg.seed);
  r.n_samples = cfg.n_chains * cfg.samples_per_chain;
  if (!std::isfinite(r.value)) throw SimulationError("lyapunov_expectation: estimate diverged");
  r.check_upper(lyapunov_bound(model.L, model.rho, model.R, model.dim, delta));
  return r;
}

// -- Harnack ---------------------------------------------------------------------

namespace {

std::vector<double> terminal_values(const EllipticModel& model, const StateVector& x0,
                                    const ScalarField& f, const SimConfig& cfg,
                                    std::size_t n_paths, const NoiseStream& noise) {
  const std::size_t n = cfg.steps();
  const double h = cfg.step();
  std::vector<double> out(n_paths);
  parallel_for(n_paths, [&](std::size_t i) {
    EulerStepper step(model.drift, model.dim, h, model.sigma);
    StateVector x = x0;
    for (std::size_t k = 0; k < n; ++k) step(x, noise, i, k);
    require_finite_state(x, "terminal_values");
    out[i] = f(x);
  });
  return out;
}

}  // namespace

nlohmann::json HarnackResult::to_json() const {
  return {{"lhs", lhs},
          {"lhs_se", lhs_se},
          {"rhs", rhs},
          {"rhs_se", rhs_se},
          {"factor", factor},
          {"pass", pass},
          {"girsanov_Ptf_y", girsanov_Ptf_y.to_json()},
          {"weight_mean", weight_mean.to_json()},
          {"merge_fraction", merge_fraction}};
}

HarnackResult harnack_check(const EllipticModel& model, const ScalarField& f, double alpha,
                            const StateVector& x, const StateVector& y, const SimConfig& cfg,
                            std::size_t n_paths, bool girsanov) {
  model.validate();
  cfg.validate();
  require(alpha > 1.0, "harnack_check: alpha must exceed 1");
  require(x.size() == model.dim && y.size() == model.dim, "harnack_check: dimension mismatch");
  const double t = cfg.T;
  HarnackResult r;
  r.factor = harnack_factor(model.wang_constant(), model.sigma, alpha, t, (x - y).norm());

  const auto fy = terminal_values(model, y, f, cfg, n_paths, NoiseStream(sub_seed(cfg.seed, 1)));
  const ScalarField f_alpha = [&f, alpha](ConstRef z) { return std::pow(f(z), alpha); };
  const auto fx = terminal_values(model, x, f_alpha, cfg, n_paths, NoiseStream(sub_seed(cfg.seed, 2)));
  const EstimateResult my = mean_estimate(fy);
  const EstimateResult mx = mean_estimate(fx);
  r.lhs = std::pow(my.value, alpha);
  r.lhs_se = alpha * std::pow(my.value, alpha - 1.0) * my.std_error;
  r.rhs = r.factor * mx.value;
  r.rhs_se = r.factor * mx.std_error;
  r.pass = r.lhs <= r.rhs + 3.0 * std::hypot(r.lhs_se, r.rhs_se);

  if (girsanov) {
    SimConfig gc = cfg;
    gc.seed = sub_seed(cfg.seed, 3);
    gc.observe = {t};
    std::vector<double> weighted(n_paths), weights(n_paths), merged(n_paths);
    parallel_for(n_paths, [&](std::size_t i) {
      const PairTrajectory p = harnack_pair(model, x, y, t, gc, i);
      const double w = std::exp(p.log_weight);
      weights[i] = w;
      weighted[i] = w * f(p.z2.back());
      merged[i] = p.merged() && *p.tau <= t + 0.5 * gc.step() ? 1.0 : 0.0;
    });
    r.girsanov_Ptf_y = mean_estimate(weighted, gc.seed);
    r.weight_mean = mean_estimate(weights, gc.seed);
    r.merge_fraction = mean_of(merged);
  }
  return r;
}

// -- Feynman-Kac ----------------------------------------------------------------

FeynmanKacSystem elliptic_fk_system(const EllipticModel& model) {
  const DerivedEllipticFields fields = derive_elliptic_fields(model);
  FeynmanKacSystem sys;
  sys.dim = model.dim;
  sys.drift = fields.b_tilde;
  sys.phi = fields.phi;
  sys.sigma = model.sigma;
  return sys;
}

nlohmann::json FeynmanKacResult::to_json() const {
  return {{"h", h.to_json()}, {"max_exponent", max_exponent}, {"min_exponent", min_exponent}};
}

namespace {

constexpr double kMaxExponent = 700.0;

FeynmanKacResult finish_fk(const std::vector<double>& exponents, std::uint64_t seed) {
  FeynmanKacResult r;
  r.max_exponent = *std::max_element(exponents.begin(), exponents.end());
  r.min_exponent = *std::min_element(exponents.begin(), exponents.end());
  if (!(r.max_exponent < kMaxExponent))
    throw SimulationError("feynman_kac_h: weight overflow, max exponent " +
                          std::to_string(r.max_exponent));
  std::vector<double> w(exponents.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(exponents[i]);
  r.h = mean_estimate(w, seed);
  return r;
}

}  // namespace

FeynmanKacResult feynman_kac_h(const FeynmanKacSystem& sys, const StateVector& x, double T,
                               std::size_t n_paths, const SimConfig& cfg) {
  require(static_cast<bool>(sys.drift) && static_cast<bool>(sys.phi), "feynman_kac_h: incomplete system");
  require(x.size() == sys.dim, "feynman_kac_h: dimension mismatch");
  require(T > 0.0 && n_paths >= 1, "feynman_kac_h: need T > 0 and at least one path");
  SimConfig c = cfg;
  c.T = T;
  c.validate();
  const std::size_t n = c.steps();
  const double h = c.step();
  const NoiseStream noise(c.seed);
  std::vector<double> expo(n_paths);
  parallel_for(n_paths, [&](std::size_t i) {
    EulerStepper step(sys.drift, sys.dim, h, sys.sigma);
    StateVector z = x;
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      acc += sys.phi(z);
      step(z, noise, i, k);
    }
    require_finite_state(z, "feynman_kac_h");
    expo[i] = h * acc;
  });
  return finish_fk(expo, c.seed);
}

FeynmanKacResult feynman_kac_h(const KineticFeynmanKacSystem& sys, const StateVector& z0, double T,
                               std::size_t n_paths, const SimConfig& cfg) {
  const KineticModel& m = sys.model;
  m.validate();
  require(static_cast<bool>(sys.phi), "feynman_kac_h: phi is missing");
  const int d = m.dim;
  require(z0.size() == 2 * d, "feynman_kac_h: kinetic state must have dimension 2d");
  require(T > 0.0 && n_paths >= 1, "feynman_kac_h: need T > 0 and at least one path");
  SimConfig c = cfg;
  c.T = T;
  c.validate();
  const std::size_t n = c.steps();
  const double h = c.step();
  const double amp = std::sqrt(2.0 * m.gamma * h);
  const NoiseStream noise(c.seed);
  std::vector<double> expo(n_paths);
  parallel_for(n_paths, [&](std::size_t i) {
    StateVector z = z0, gu(d), G(d), xi(d), v_old(d);
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      auto x = z.head(d);
      auto v = z.tail(d);
      acc += sys.phi(x, v);
      m.grad_U(x, gu);
      if (m.forcing) {
        m.forcing(x, v, G);
      } else {
        G.setZero();
      }
      noise.normals(i, k, NoiseStream::kPrimary, as_span(xi));
      v_old = v;
      x -= h * v_old;
      v += h * (-m.gamma * v_old + gu - G) + amp * xi;
    }
    require_finite_state(z, "feynman_kac_h");
    expo[i] = h * acc;
  });
  return finish_fk(expo, c.seed);
}

nlohmann::json LipschitzScanReport::to_json() const {
  std::vector<std::vector<double>> pts;
  for (const auto& p : points) pts.emplace_back(p.data(), p.data() + p.size());
  return {{"points", pts}, {"u", u},           {"u_se", u_se},       {"worst_margin", worst_margin},
          {"worst_i", worst_i}, {"worst_j", worst_j}, {"pass", pass}};
}

namespace {

template <class Estimate, class Bound>
LipschitzScanReport scan_pairs(const std::vector<StateVector>& points, const Estimate& estimate,
                               const Bound& bound) {
  LipschitzScanReport rep;
  rep.points = points;
  for (const auto& p : points) {
    const FeynmanKacResult fk = estimate(p);
    const double hv = fk.h.value;
    if (!(hv > 0.0) || fk.h.std_error > 0.1 * hv)
      throw SimulationError("u_lipschitz_scan: relative standard error of h_T exceeds 10%");
    rep.u.push_back(std::log(hv));
    rep.u_se.push_back(fk.h.std_error / hv);
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      const double dist = (points[i] - points[j]).norm();
      const double margin = bound(dist) + 3.0 * std::hypot(rep.u_se[i], rep.u_se[j]) -
                            std::abs(rep.u[i] - rep.u[j]);
      if (margin < rep.worst_margin) {
        rep.worst_margin = margin;
        rep.worst_i = i;
        rep.worst_j = j;
      }
    }
  }
  rep.pass = !(rep.worst_margin < 0.0);
  return rep;
}

}  // namespace

LipschitzScanReport u_lipschitz_scan(const FeynmanKacSystem& sys,
                                     const std::vector<StateVector>& points, double T,
                                     std::size_t n_paths, const SimConfig& cfg,
                                     const EllipticBoundInputs& bound) {
  return scan_pairs(
      points, [&](const StateVector& p) { return feynman_kac_h(sys, p, T, n_paths, cfg); },
      [&](double dist) {
        return perturbation_bound_elliptic(bound.M_phi, bound.L_phi, bound.C_prime, dist,
                                           std::nullopt, T)
            .total;
      });
}

LipschitzScanReport u_lipschitz_scan(const KineticFeynmanKacSystem& sys,
                                     const std::vector<StateVector>& points, double T,
                                     std::size_t n_paths, const SimConfig& cfg, double lip_bound) {
  require(lip_bound >= 0.0, "u_lipschitz_scan: Lipschitz bound must be nonnegative");
  return scan_pairs(
      points, [&](const StateVector& p) { return feynman_kac_h(sys, p, T, n_paths, cfg); },
      [&](double dist) { return lip_bound * dist; });
}

MollifiedSplit mollified_split(const std::vector<double>& u, double h, double eps) {
  require(u.size() >= 2, "mollified_split: need at least two grid values");
  require(h > 0.0, "mollified_split: grid spacing must be positive");
  require(eps >= h, "mollified_split: eps must not be smaller than the grid spacing");
  const double sd = std::sqrt(eps);
  const auto half = static_cast<std::ptrdiff_t>(std::ceil(6.0 * sd / h));
  std::vector<double> w(2 * half + 1);
  double wsum = 0.0;
  for (std::ptrdiff_t j = -half; j <= half; ++j) {
    const double s = static_cast<double>(j) * h;
    w[j + half] = std::exp(-s * s / (2.0 * eps));
    wsum += w[j + half];
  }
  for (double& v : w) v /= wsum;

  const auto n = static_cast<std::ptrdiff_t>(u.size());
  const double left_slope = (u[1] - u[0]) / h;
  const double right_slope = (u[n - 1] - u[n - 2]) / h;
  const auto value = [&](std::ptrdiff_t i) {
    if (i < 0) return u[0] + left_slope * static_cast<double>(i) * h;
    if (i >= n) return u[n - 1] + right_slope * static_cast<double>(i - n + 1) * h;
    return u[i];
  };
  MollifiedSplit out;
  out.smooth.resize(u.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::ptrdiff_t j = -half; j <= half; ++j) s += w[j + half] * value(i - j);
    out.smooth[i] = s;
    out.remainder_sup = std::max(out.remainder_sup, std::abs(u[i] - s));
  }
  for (std::ptrdiff_t i = 0; i + 1 < n; ++i)
    out.lipschitz = std::max(out.lipschitz, std::abs(out.smooth[i + 1] - out.smooth[i]) / h);
  return out;
}

// -- functional inequalities ---------------------------------------------------

nlohmann::json HyperProbeResult::to_json() const {
  nlohmann::json j{{"ratio", ratio},
                   {"ratio_jackknife", ratio_jackknife},
                   {"std_error", std_error},
                   {"inner_bias_warning", inner_bias_warning},
                   {"n_outer", n_outer},
                   {"n_inner", n_inner}};
  if (bound) j["bound"] = *bound;
  if (pass) j["pass"] = *pass;
  return j;
}

HyperProbeResult hypercontractivity_probe(const EllipticModel& model, const ScalarField& f,
                                          double alpha, double beta, double t,
                                          const ErgodicConfig& outer, std::size_t n_inner,
                                          double inner_dt) {
  model.validate();
  require(beta > alpha && alpha > 1.0, "hypercontractivity_probe: need beta > alpha > 1");
  require(t > 0.0 && inner_dt > 0.0, "hypercontractivity_probe: t and dt must be positive");
  require(n_inner >= 2 && n_inner % 2 == 0, "hypercontractivity_probe: n_inner must be even");
  const auto ys = ergodic_samples(model, StateVector::Zero(model.dim), outer, 23);
  const std::size_t n_outer = ys.size();

  SimConfig ic;
  ic.dt = std::min(inner_dt, t);
  ic.T = t;
  const std::size_t n = ic.steps();
  const double h = ic.step();
  const NoiseStream noise = NoiseStream(outer.seed).derive(29);

  std::vector<double> a(n_outer), a1(n_outer), a2(n_outer), b(n_outer);
  parallel_for(n_outer, [&](std::size_t i) {
    EulerStepper step(model.drift, model.dim, h, model.sigma);
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t j = 0; j < n_inner; ++j) {
      StateVector x = ys[i];
      const std::uint64_t path = i * n_inner + j;
      for (std::size_t k = 0; k < n; ++k) step(x, noise, path, k);
      require_finite_state(x, "hypercontractivity_probe");
      (j < n_inner / 2 ? s1 : s2) += f(x);
    }
    const double half = static_cast<double>(n_inner / 2);
    const double m = (s1 + s2) / static_cast<double>(n_inner);
    a[i] = std::pow(m, beta);
    a1[i] = std::pow(s1 / half, beta);
    a2[i] = std::pow(s2 / half, beta);
    b[i] = std::pow(f(ys[i]), alpha);
  });

  const auto ratio_of = [&](const std::vector<double>& num) {
    return std::pow(mean_of(num), 1.0 / beta) / std::pow(mean_of(b), 1.0 / alpha);
  };
  HyperProbeResult r;
  r.n_outer = n_outer;
  r.n_inner = n_inner;
  r.inner_bias_warning = n_inner < 1000;
  r.ratio = ratio_of(a);
  r.ratio_jackknife = 2.0 * r.ratio - 0.5 * (ratio_of(a1) + ratio_of(a2));
  // delta method on ln ratio = ln(mean a)/beta - ln(mean b)/alpha
  const double ma = mean_of(a), mb = mean_of(b);
  std::vector<double> lin(n_outer);
  for (std::size_t i = 0; i < n_outer; ++i) lin[i] = a[i] / (beta * ma) - b[i] / (alpha * mb);
  r.std_error = r.ratio * std_error_of(lin, mean_of(lin));

  const double t0 = hypercontractivity_time(model.rho, model.sigma, alpha, beta);
  if (t > t0) {
    r.bound = hypercontractivity_bound(model.L, model.rho, model.R, model.sigma, model.dim,
                                       HyperQuery{alpha, beta, t})
                  .bound;
    r.pass = r.ratio_jackknife <= *r.bound + 3.0 * r.std_error;
  }
  return r;
}

nlohmann::json DefectiveLsiResult::to_json() const {
  return {{"lhs", lhs}, {"lhs_se", lhs_se}, {"rhs", rhs}, {"rhs_se", rhs_se}, {"pass", pass}};
}

DefectiveLsiResult defective_lsi_check(const EllipticModel& model, const ScalarField& f,
                                       const VectorField& grad_f, double A, double B,
                                       const ErgodicConfig& cfg) {
  const auto xs = ergodic_samples(model, StateVector::Zero(model.dim), cfg, 31);
  std::vector<double> fv(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    fv[i] = f(xs[i]);
    require(fv[i] >= 0.0, "defective_lsi_check: f must be nonnegative");
  }
  const double fbar = mean_of(fv);
  require(fbar > 0.0, "defective_lsi_check: f vanishes on the sample");
  const std::size_t per = cfg.samples_per_chain;
  std::vector<double> ent(cfg.n_chains, 0.0), fisher(cfg.n_chains, 0.0);
  StateVector g(model.dim);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double F = fv[i] / fbar;
    const std::size_t c = i / per;
    if (F > 0.0) {
      ent[c] += F * std::log(F);
      grad_f(xs[i], g);
      fisher[c] += (g / fbar).squaredNorm() / F;
    }
  }
  for (std::size_t c = 0; c < cfg.n_chains; ++c) {
    ent[c] /= static_cast<double>(per);
    fisher[c] /= static_cast<double>(per);
  }
  DefectiveLsiResult r;
  const EstimateResult e = mean_estimate(ent), fi = mean_estimate(fisher);
  r.lhs = e.value;
  r.lhs_se = e.std_error;
  r.rhs = A * fi.value + B;
  r.rhs_se = A * fi.std_error;
  r.pass = r.lhs <= r.rhs + 3.0 * std::hypot(r.lhs_se, r.rhs_se);
  return r;
}

// -- McKean-Vlasov -------------------------------------------------------------------

nlohmann::json MckvResult::to_json() const {
  return {{"w2_successive", w2_successive},
          {"w2_std_error", w2_std_error},
          {"fluctuation_scale", fluctuation_scale},
          {"decreasing", decreasing},
          {"condition_ratio", condition_ratio},
          {"condition_pass", condition_pass},
          {"n_particles", particles.size()}};
}

MckvResult mckv_fixed_point(const CompetitionKernel& kernel, const VectorField& grad_V,
                            const std::vector<StateVector>& initial, const MckvConfig& cfg) {
  require(cfg.n_particles >= 64, "mckv_fixed_point: need at least 64 particles");
  require(initial.size() == cfg.n_particles, "mckv_fixed_point: initial size must equal n_particles");
  require(cfg.n_iters >= 1 && cfg.dt > 0.0 && cfg.T_inner > 0.0, "mckv_fixed_point: invalid budget");
  const int d = 2 * kernel.p;
  for (const auto& x : initial) require(x.size() == d, "mckv_fixed_point: particles must have dimension 2p");

  SimConfig sc;
  sc.dt = cfg.dt;
  sc.T = cfg.T_inner;
  const std::size_t n = sc.steps();
  const double h = sc.step();
  const double amp = std::sqrt(2.0 * h);

  MckvResult r;
  r.particles = initial;
  const NoiseStream base(cfg.seed);
  for (int it = 0; it < cfg.n_iters; ++it) {
    VectorField b_mu;
    if (cfg.lambda != 0.0) b_mu = make_competition_drift(kernel, r.particles);
    const NoiseStream noise = base.derive(static_cast<std::uint64_t>(it));
    std::vector<StateVector> next(r.particles.size());
    parallel_for(r.particles.size(), [&](std::size_t i) {
      StateVector x = r.particles[i], gv(d), bm(d), xi(d);
      for (std::size_t k = 0; k < n; ++k) {
        grad_V(x, gv);
        if (b_mu) {
          b_mu(x, bm);
          gv += cfg.lambda * bm;
        }
        noise.normals(i, k, NoiseStream::kPrimary, as_span(xi));
        x += -h * gv + amp * xi;
      }
      require_finite_state(x, "mckv_fixed_point");
      next[i] = std::move(x);
    });
    const W2Estimate w2 = w2_subsampled(r.particles, next, cfg.w2_points, cfg.w2_draws,
                                        base.derive(1000 + static_cast<std::uint64_t>(it)));
    r.w2_successive.push_back(w2.mean);
    r.w2_std_error.push_back(w2.std_error);
    r.fluctuation_scale = std::pow(static_cast<double>(w2.subsample), -0.25);
    r.particles = std::move(next);
  }
  r.decreasing = r.w2_successive.size() < 2 || r.w2_successive.back() < r.w2_successive.front();

  const VectorField b_final = make_competition_drift(kernel, r.particles);
  double mean_abs = 0.0;
  for (const auto& y : r.particles) mean_abs += y.norm();
  mean_abs /= static_cast<double>(r.particles.size());
  StateVector b(d);
  for (const auto& x : r.particles) {
    b_final(x, b);
    r.condition_ratio = std::max(r.condition_ratio, b.norm() * (1.0 + x.norm()) / (1.0 + mean_abs));
  }
  r.condition_pass = r.condition_ratio <= cfg.condition_constant;
  return r;
}

}  // namespace ness
