#include "ness/cli.hpp"

#include "ness/constants.hpp"
#include "ness/estimators.hpp"
#include "ness/metric.hpp"
#include "ness/parallel.hpp"
#include "ness/scenarios.hpp"
#include "ness/simulate.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

namespace ness::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

// Parsing failures before any computation map to exit 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t estimator_seed(std::uint64_t seed, const std::string& name) {
  return NoiseStream::mix(seed ^ fnv1a(name));
}

struct Record {
  std::string name;
  json inputs;
  json result;
  std::optional<bool> pass;
  std::string csv;  // optional series
};

using Task = std::function<Record()>;

StateVector to_state(const std::vector<double>& v) {
  return Eigen::Map<const StateVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_vec(ConstRef v) { return {v.data(), v.data() + v.size()}; }

StateVector axis_point(int d, double s) {
  StateVector x = StateVector::Zero(d);
  x(0) = s;
  return x;
}

StateVector read_point(ParamReader& p, const std::string& key, int dim, const StateVector& fallback) {
  const auto v = p.numbers(key, to_vec(fallback));
  require(static_cast<int>(v.size()) == dim, key + ": expected " + std::to_string(dim) + " coordinates");
  return to_state(v);
}

std::string curve_csv(const ContractionCurve& c) {
  std::ostringstream os;
  os.precision(17);
  os << "t,mean,std_error,coalesced" << (c.envelope.empty() ? "" : ",envelope") << "\n";
  for (std::size_t k = 0; k < c.times.size(); ++k) {
    os << c.times[k] << ',' << c.mean[k] << ',' << c.std_error[k] << ',' << c.coalesced[k];
    if (!c.envelope.empty()) os << ',' << c.envelope[k];
    os << '\n';
  }
  return os.str();
}

// -- elliptic estimators ---------------------------------------------------------

Task one_sided_task(const EllipticModel& m, ParamReader& p, std::uint64_t seed) {
  const auto n_pairs = static_cast<std::size_t>(p.integer("n_pairs", 20000));
  const double half = p.number("half_width", 5.0);
  require(n_pairs >= 1 && half > 0.0, "one_sided: need n_pairs >= 1 and half_width > 0");
  return [=] {
    const OneSidedReport rep = probe_one_sided_condition(m, uniform_box_sampler(m.dim, half), n_pairs, seed);
    Record r{"one_sided", {{"n_pairs", n_pairs}, {"half_width", half}, {"rho", m.rho}, {"L", m.L}, {"R", m.R}}, {}, !rep.violated(), ""};
    r.result = {{"max_ratio_far", rep.n_far ? json(rep.max_ratio_far) : json(nullptr)},
                {"max_ratio_near", rep.n_near ? json(rep.max_ratio_near) : json(nullptr)},
                {"min_ratio", rep.min_ratio},
                {"n_far", rep.n_far},
                {"n_near", rep.n_near},
                {"far_violation", rep.far_violation},
                {"near_violation", rep.near_violation}};
    return r;
  };
}

Task synchronous_task(const EllipticModel& m, ParamReader& p, std::uint64_t seed) {
  SimConfig cfg;
  cfg.dt = p.number("dt", 1e-3);
  cfg.T = p.number("T", 2.0);
  cfg.seed = seed;
  cfg.record_stride = p.integer("record_stride", 50);
  const auto n = static_cast<std::size_t>(p.integer("n_paths", 2000));
  const double scale = p.number("init_scale", 2.0);
  const double slack = p.number("slack", 0.05);
  cfg.validate();
  return [=] {
    const StateSampler draw = gaussian_sampler(m.dim, scale);
    const PairSampler init = [draw](std::uint64_t i, const NoiseStream& ns) {
      return std::make_pair(draw(2 * i, ns), draw(2 * i + 1, ns));
    };
    const ContractionCurve c = w1_contraction(m, CouplingKind::kSynchronous, init, cfg, n);
    Record r{"synchronous", {{"dt", cfg.dt}, {"T", cfg.T}, {"n_paths", n}, {"init_scale", scale}, {"slack", slack}}, c.to_json(), std::nullopt, curve_csv(c)};
    // a global rate is only implied when the contraction holds at every distance
    if (m.R == 0.0) r.pass = c.fit.kappa >= (1.0 - slack) * m.rho;
    return r;
  };
}

Task reflection_task(const EllipticModel& m, ParamReader& p, std::uint64_t seed) {
  SimConfig cfg;
  cfg.dt = p.number("dt", 1e-3);
  cfg.T = p.number("T", 3.0);
  cfg.seed = seed;
  cfg.record_stride = p.integer("record_stride", 50);
  const auto n = static_cast<std::size_t>(p.integer("n_paths", 5000));
  const StateVector x0 = read_point(p, "x0", m.dim, axis_point(m.dim, 0.5));
  const StateVector y0 = read_point(p, "y0", m.dim, axis_point(m.dim, -0.5));
  const FitWindow w{p.number("fit_begin", 0.1), p.number("fit_end", cfg.T)};
  cfg.validate();
  return [=] {
    const ReflectionConstants rc = fit_reflection_constants(m, x0, y0, cfg, n, w);
    Record r{"reflection", {{"dt", cfg.dt}, {"T", cfg.T}, {"n_paths", n}, {"x0", to_vec(x0)}, {"y0", to_vec(y0)}}, {}, rc.kappa > 0.0 && rc.coalescence.fit_bounds, ""};
    r.result = {{"C", rc.C}, {"kappa", rc.kappa}, {"C_prime", rc.C_prime()}, {"distance", rc.distance.to_json()}, {"coalescence", rc.coalescence.to_json()}};
    std::ostringstream os;
    os.precision(17);
    os << "t,mean,std_error,p_not_merged,p_std_error\n";
    for (std::size_t k = 0; k < rc.distance.times.size(); ++k)
      os << rc.distance.times[k] << ',' << rc.distance.mean[k] << ',' << rc.distance.std_error[k] << ','
         << rc.coalescence.prob[k] << ',' << rc.coalescence.std_error[k] << '\n';
    r.csv = os.str();
    return r;
  };
}

ErgodicConfig read_ergodic(ParamReader& p, std::uint64_t seed, std::size_t chains, std::size_t per) {
  ErgodicConfig e;
  e.dt = p.number("dt", 1e-3);
  e.burn_in = p.number("burn_in", -1.0);
  e.thinning = p.number("thinning", -1.0);
  e.n_chains = static_cast<std::size_t>(p.integer("n_chains", static_cast<int>(chains)));
  e.samples_per_chain = static_cast<std::size_t>(p.integer("samples_per_chain", static_cast<int>(per)));
  e.seed = seed;
  require(e.dt > 0.0 && e.n_chains >= 1 && e.samples_per_chain >= 1, "invalid ergodic sampling budget");
  return e;
}

json ergodic_json(const ErgodicConfig& e) {
  return {{"dt", e.dt}, {"burn_in", e.burn_in}, {"thinning", e.thinning}, {"n_chains", e.n_chains}, {"samples_per_chain", e.samples_per_chain}};
}

Task lyapunov_task(const EllipticModel& m, ParamReader& p, std::uint64_t seed) {
  const double delta = p.number("delta", m.rho / 8.0);
  require(delta > 0.0 && delta < m.rho / 4.0, "lyapunov: delta must lie in (0, rho/4)");
  const ErgodicConfig e = read_ergodic(p, seed, 64, 200);
  return [=] {
    const EstimateResult est = lyapunov_expectation(m, delta, e);
    json in = ergodic_json(e);
    in["delta"] = delta;
    return Record{"lyapunov", in, est.to_json(), est.pass, ""};
  };
}

Task harnack_task(const EllipticModel& m, ParamReader& p, std::uint64_t seed) {
  const double alpha = p.number("alpha", 2.0);
  const double clip = p.number("clip", 3.0);
  SimConfig cfg;
  cfg.dt = p.number("dt", 1e-3);
  cfg.T = p.number("T", 1.0);
  cfg.seed = seed;
  const auto n = static_cast<std::size_t>(p.integer("n_paths", 4000));
  const bool girsanov = p.flag("girsanov", true);
  const StateVector x = read_point(p, "x", m.dim, StateVector::Zero(m.dim));
  const StateVector y = read_point(p, "y", m.dim, axis_point(m.dim, 1.0));
  require(alpha > 1.0, "harnack: alpha must exceed 1");
  cfg.validate();
  return [=] {
    const ScalarField f = [clip](ConstRef z) { return std::min(std::exp(z(0)), std::exp(clip)); };
    const HarnackResult h = harnack_check(m, f, alpha, x, y, cfg, n, girsanov);
    json in{{"alpha", alpha}, {"clip", clip}, {"dt", cfg.dt}, {"T", cfg.T}, {"n_paths", n}, {"x", to_vec(x)}, {"y", to_vec(y)}, {"girsanov", girsanov}};
    json res = h.to_json();
    if (!girsanov) {
      res.erase("girsanov_Ptf_y");
      res.erase("weight_mean");
      res.erase("merge_fraction");
    }
    return Record{"harnack", in, res, h.pass, ""};
  };
}

Task hyper_task(const EllipticModel& m, ParamReader& p, std::uint64_t seed) {
  const double alpha = p.number("alpha", 2.0), beta = p.number("beta", 3.0);
  const double c = p.number("c", 1.0);
  require(beta > alpha && alpha > 1.0, "hypercontractivity: need beta > alpha > 1");
  const double t0 = hypercontractivity_time(m.rho, m.sigma, alpha, beta);
  const double t = p.number("t", 2.0 * t0);
  const auto n_inner = static_cast<std::size_t>(p.integer("n_inner", 1000));
  const double inner_dt = p.number("inner_dt", 0.05);
  const ErgodicConfig e = read_ergodic(p, seed, 10, 100);
  return [=] {
    const ScalarField f = [c](ConstRef x) { return std::exp(c * x(0)); };
    const HyperProbeResult r = hypercontractivity_probe(m, f, alpha, beta, t, e, n_inner, inner_dt);
    json in = ergodic_json(e);
    in.update({{"alpha", alpha}, {"beta", beta}, {"c", c}, {"t", t}, {"t0", t0}, {"n_inner", n_inner}, {"inner_dt", inner_dt}});
    return Record{"hypercontractivity", in, r.to_json(), r.pass, ""};
  };
}

Task lsi_task(const EllipticModel& m, ParamReader& p, std::uint64_t seed) {
  const double amp = p.number("amp", 0.5);
  require(amp >= 0.0 && amp < 1.0, "defective_lsi: amp must lie in [0, 1)");
  const ErgodicConfig e = read_ergodic(p, seed, 32, 200);
  return [=] {
    const DefectiveLsi ab = defective_lsi_constants(m.L, m.rho, m.R, m.sigma, m.dim);
    const ScalarField f = [amp](ConstRef x) { return 1.0 + amp * std::sin(x(0)); };
    const VectorField grad = [amp](ConstRef x, OutRef out) {
      out.setZero();
      out(0) = amp * std::cos(x(0));
    };
    const DefectiveLsiResult r = defective_lsi_check(m, f, grad, ab.A, ab.B, e);
    json in = ergodic_json(e);
    in.update({{"amp", amp}, {"A", ab.A}, {"B", ab.B}});
    return Record{"defective_lsi", in, r.to_json(), r.pass, ""};
  };
}

Task fk_task(const EllipticModel& m, ParamReader& p, std::uint64_t seed) {
  require(m.has_split() && static_cast<bool>(m.grad_log_mu0),
          "feynman_kac: scenario has no reference split");
  const double T = p.number("T", 2.0);
  const auto n = static_cast<std::size_t>(p.integer("n_paths", 4000));
  const double dt = p.number("dt", 1e-3);
  const std::vector<double> xs = p.numbers("points", {-2.0, -1.0, 0.0, 1.0, 2.0});
  const std::optional<double> c_prime = p.has("C_prime") ? std::optional(p.number("C_prime", 0.0)) : std::nullopt;
  const auto n_fit = static_cast<std::size_t>(p.integer("n_paths_fit", 2000));
  require(T > 0.0 && n >= 1 && !xs.empty(), "feynman_kac: invalid budget or empty point list");
  return [=] {
    const DerivedEllipticFields fields = derive_elliptic_fields(m);
    double cp = c_prime.value_or(0.0);
    json fit = nullptr;
    if (!c_prime) {
      EllipticModel tilde = m;
      tilde.drift = fields.b_tilde;
      SimConfig rc;
      rc.T = 4.0;
      rc.seed = seed ^ 0x5bd1e995ULL;
      rc.record_stride = 100;
      const ReflectionConstants fc = fit_reflection_constants(tilde, axis_point(m.dim, 1.0), axis_point(m.dim, -1.0), rc, n_fit, FitWindow{0.2, 3.0});
      cp = fc.C_prime();
      fit = {{"C", fc.C}, {"kappa", fc.kappa}, {"C_prime", cp}};
    }
    std::vector<StateVector> pts;
    for (double x : xs) pts.push_back(axis_point(m.dim, x));
    SimConfig cfg;
    cfg.dt = dt;
    cfg.seed = seed;
    const LipschitzScanReport rep = u_lipschitz_scan(elliptic_fk_system(m), pts, T, n, cfg, {m.M_phi, m.L_phi, cp});
    json res = rep.to_json();
    res["C_prime"] = cp;
    res["fit"] = fit;
    std::ostringstream os;
    os.precision(17);
    os << "x0,u,u_std_error\n";
    for (std::size_t i = 0; i < pts.size(); ++i) os << xs[i] << ',' << rep.u[i] << ',' << rep.u_se[i] << '\n';
    return Record{"feynman_kac", {{"T", T}, {"dt", dt}, {"n_paths", n}, {"points", xs}, {"M_phi", m.M_phi}, {"L_phi", m.L_phi}}, res, rep.pass, os.str()};
  };
}

// -- kinetic and particle estimators ---------------------------------------------

Task kinetic_task(const KineticModel& km, ParamReader& p, std::uint64_t seed) {
  SimConfig cfg;
  cfg.dt = p.number("dt", 1e-3);
  cfg.T = p.number("T", 10.0);
  cfg.seed = seed;
  cfg.n_smooth = p.integer("n_smooth", 1000);
  cfg.record_stride = p.integer("record_stride", 500);
  const auto n = static_cast<std::size_t>(p.integer("n_paths", 2000));
  const double slack = p.number("slack", 0.10);
  const int d = km.dim;
  StateVector zd = StateVector::Zero(2 * d), wd = StateVector::Zero(2 * d);
  zd(0) = 1.0;
  wd(0) = -1.0;
  const StateVector z0 = read_point(p, "z0", 2 * d, zd);
  const StateVector w0 = read_point(p, "w0", 2 * d, wd);
  cfg.validate();
  require(km.admissible(), "kinetic_contraction: model is not admissible");
  return [=] {
    const NormalizedKineticModel nm = normalize_kinetic(km);
    const MetricParams mp = metric_constants(nm.model.K, nm.model.L1, nm.model.L2, nm.model.R);
    const MetricTable tab = MetricTable::build(mp, 1e-10, cfg.n_smooth);
    const ContractionCurve c = w1_contraction(nm, tab, mp, fixed_pair(nm.to_normalized(z0), nm.to_normalized(w0)), cfg, n, slack);
    json res = c.to_json();
    res["metric"] = tab.to_json(false);
    return Record{"kinetic_contraction", {{"dt", cfg.dt}, {"T", cfg.T}, {"n_smooth", cfg.n_smooth}, {"n_paths", n}, {"slack", slack}, {"z0", to_vec(z0)}, {"w0", to_vec(w0)}}, res, c.envelope_ok, curve_csv(c)};
  };
}

Task mckv_task(const Scenario& s, ParamReader& p, std::uint64_t seed) {
  MckvConfig cfg;
  cfg.lambda = p.number("lambda", cfg.lambda);
  cfg.n_particles = static_cast<std::size_t>(p.integer("n_particles", static_cast<int>(cfg.n_particles)));
  cfg.n_iters = p.integer("n_iters", cfg.n_iters);
  cfg.dt = p.number("dt", cfg.dt);
  cfg.T_inner = p.number("T_inner", cfg.T_inner);
  cfg.w2_points = static_cast<std::size_t>(p.integer("w2_points", static_cast<int>(cfg.w2_points)));
  cfg.w2_draws = static_cast<std::size_t>(p.integer("w2_draws", static_cast<int>(cfg.w2_draws)));
  cfg.condition_constant = p.number("condition_constant", cfg.condition_constant);
  const double shift = p.number("init_shift", 2.0);
  cfg.seed = seed;
  require(cfg.n_particles >= 64, "mckv: need at least 64 particles");
  const Scenario sc = s;
  return [sc, cfg, shift] {
    const int d = 2 * sc.kernel->p;
    const NoiseStream noise(cfg.seed ^ 0x9e3779b9ULL);
    std::vector<StateVector> init(cfg.n_particles);
    for (std::size_t i = 0; i < init.size(); ++i) {
      StateVector x(d);
      noise.normals(i, 0, NoiseStream::kInitial, std::span<double>(x.data(), d));
      x(0) += shift;
      init[i] = x;
    }
    const MckvResult r = mckv_fixed_point(*sc.kernel, sc.grad_V, init, cfg);
    std::ostringstream os;
    os.precision(17);
    os << "iteration,w2,w2_std_error\n";
    for (std::size_t i = 0; i < r.w2_successive.size(); ++i) os << i + 1 << ',' << r.w2_successive[i] << ',' << r.w2_std_error[i] << '\n';
    return Record{"mckv", {{"lambda", cfg.lambda}, {"n_particles", cfg.n_particles}, {"n_iters", cfg.n_iters}, {"dt", cfg.dt}, {"T_inner", cfg.T_inner}, {"w2_points", cfg.w2_points}, {"w2_draws", cfg.w2_draws}, {"condition_constant", cfg.condition_constant}, {"init_shift", shift}}, r.to_json(), r.condition_pass && r.decreasing, os.str()};
  };
}

// -- plumbing ------------------------------------------------------------------------

std::vector<std::string> default_battery(const Scenario& s) {
  if (s.elliptic) {
    std::vector<std::string> b{"one_sided", "synchronous", "reflection", "lyapunov", "harnack", "hypercontractivity", "defective_lsi"};
    if (s.elliptic->has_split() && s.elliptic->grad_log_mu0) b.push_back("feynman_kac");
    return b;
  }
  if (s.kinetic) return {"kinetic_contraction"};
  return {"mckv"};
}

Task make_task(const Scenario& s, const std::string& name, ParamReader& p, std::uint64_t seed) {
  const auto need_elliptic = [&] {
    if (!s.elliptic) throw InvalidInput("estimator '" + name + "' needs an elliptic scenario");
    return *s.elliptic;
  };
  if (name == "one_sided") return one_sided_task(need_elliptic(), p, seed);
  if (name == "synchronous") return synchronous_task(need_elliptic(), p, seed);
  if (name == "reflection") return reflection_task(need_elliptic(), p, seed);
  if (name == "lyapunov") return lyapunov_task(need_elliptic(), p, seed);
  if (name == "harnack") return harnack_task(need_elliptic(), p, seed);
  if (name == "hypercontractivity") return hyper_task(need_elliptic(), p, seed);
  if (name == "defective_lsi") return lsi_task(need_elliptic(), p, seed);
  if (name == "feynman_kac") return fk_task(need_elliptic(), p, seed);
  if (name == "kinetic_contraction") {
    if (!s.kinetic) throw InvalidInput("estimator 'kinetic_contraction' needs a kinetic scenario");
    return kinetic_task(*s.kinetic, p, seed);
  }
  if (name == "mckv") {
    if (!s.kernel) throw InvalidInput("estimator 'mckv' needs the competition scenario");
    return mckv_task(s, p, seed);
  }
  throw InvalidInput("unknown estimator '" + name + "'");
}

void apply_declared(Scenario& s, const json& declared) {
  ParamReader p(declared, "declared");
  if (s.elliptic) {
    EllipticModel& m = *s.elliptic;
    m.rho = p.number("rho", m.rho);
    m.L = p.number("L", m.L);
    m.R = p.number("R", m.R);
    m.M_phi = p.number("M_phi", m.M_phi);
    m.L_phi = p.number("L_phi", m.L_phi);
    m.C0 = p.number("C0", m.C0);
    if (p.has("harnack_constant")) m.harnack_constant = p.number("harnack_constant", 0.0);
    m.validate();
  } else if (s.kinetic) {
    KineticModel& k = *s.kinetic;
    k.R = p.number("R", k.R);
    k.L1 = p.number("L1", k.L1);
    k.L2 = p.number("L2", k.L2);
    k.L_phi = p.number("L_phi", k.L_phi);
    k.validate();
  }
  p.finish();
}

std::string resolve_out(const RunOptions& opts, ParamReader& top) {
  const std::string from_config = top.text("out", "");
  if (!opts.out_dir.empty()) return opts.out_dir;
  return from_config.empty() ? std::string("out") : from_config;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

json run_header(const char* command, const json& config) {
  return {{"command", command}, {"version", kVersion}, {"config", config}};
}

}  // namespace

// -- commands ------------------------------------------------------------------------

CommandResult cmd_constants(const json& config, const RunOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  json cfg = config;
  ParamReader top(cfg, "config");
  const std::string out = resolve_out(opts, top);
  top.number("seed", 0.0);
  const json ell = top.object("elliptic");
  const json kin = top.object("kinetic");
  const json harn = top.object("harnack");
  const json hyp = top.object("hyper");
  top.finish();
  if (ell.empty() && kin.empty()) throw ConfigError("constants: need an 'elliptic' or 'kinetic' section");

  std::function<json()> elliptic_part, kinetic_part;
  try {
    if (!ell.empty()) {
      ParamReader p(ell, "elliptic");
      const double L = p.number("L", 0.0), rho = p.number("rho", 1.0), R = p.number("R", 0.0);
      const double sigma = p.number("sigma", std::sqrt(2.0));
      const int d = p.integer("d", 1);
      const double alpha_ext = p.number("alpha_ext", 1.0);
      const std::string scen = p.text("scenario", "");
      const json sparams = p.object("params");
      std::optional<double> sup = p.has("sup_inner") ? std::optional(p.number("sup_inner", 0.0)) : std::nullopt;
      p.finish();
      std::optional<Scenario> s;
      if (!scen.empty()) {
        s = make_scenario(scen, sparams);
        require(s->elliptic.has_value(), "constants: scenario is not elliptic");
      }
      // validate eagerly
      (void)defective_lsi_constants(L, rho, R, sigma, d);
      HyperQuery hq{2.0, 3.0, 0.0};
      {
        ParamReader hp(hyp, "hyper");
        hq.alpha = hp.number("alpha", 2.0);
        hq.beta = hp.number("beta", 3.0);
        hq.t = hp.number("t", 0.0);
        hp.finish();
      }
      ParamReader hr(harn, "harnack");
      const double h_alpha = hr.number("alpha", 2.0), h_t = hr.number("t", 1.0), h_dist = hr.number("dist", 1.0);
      const double K_w = hr.number("K", L * R);
      hr.finish();
      elliptic_part = [=] {
        double sup_inner = sup.value_or(0.0);
        json sup_info = sup ? json("declared") : json("zero (no drift given)");
        const double R_star = poincare_constant(L, rho, R, sigma, d, alpha_ext, 0.0).R_star;
        if (s) {
          const SupInner si = sup_inner_drift(*s->elliptic, R_star);
          sup_inner = si.value;
          sup_info = {{"argmax", to_vec(si.argmax)}, {"radius", R_star}, {"scenario", s->name}};
        }
        ConstantsReport rep = elliptic_constants_report(L, rho, R, sigma, d, alpha_ext, sup_inner);
        json j = rep.to_json();
        j["sup_inner_source"] = sup_info;
        j["harnack"] = {{"alpha", h_alpha}, {"t", h_t}, {"dist", h_dist}, {"K", K_w}, {"factor", harnack_factor(K_w, sigma, h_alpha, h_t, h_dist)}};
        if (hq.t > 0.0) {
          const HypercontractivityBound hb = hypercontractivity_bound(L, rho, R, sigma, d, hq);
          j["hyper_query"] = {{"alpha", hq.alpha}, {"beta", hq.beta}, {"t", hq.t}, {"t0", hb.t0}, {"bound", hb.bound}};
        }
        return j;
      };
    } else {
      ParamReader(harn, "harnack").finish();
      ParamReader(hyp, "hyper").finish();
    }
    if (!kin.empty()) {
      ParamReader p(kin, "kinetic");
      const json Kj = p.raw("K").value_or(json::array({json::array({1.0})}));
      const double L1 = p.number("L1", 0.0), L2 = p.number("L2", 0.0), R = p.number("R", 1.0);
      const int n_smooth = p.integer("n_smooth", 0);
      const double L_phi = p.number("L_phi", 0.0);
      const double quad_tol = p.number("quad_tol", 1e-10);
      p.finish();
      require(Kj.is_array() && !Kj.empty(), "kinetic.K: expected a square matrix");
      const auto n = static_cast<Eigen::Index>(Kj.size());
      Matrix K(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        require(Kj[i].is_array() && static_cast<Eigen::Index>(Kj[i].size()) == n, "kinetic.K: expected a square matrix");
        for (Eigen::Index j = 0; j < n; ++j) {
          require(Kj[i][j].is_number(), "kinetic.K: entries must be numbers");
          K(i, j) = Kj[i][j].get<double>();
        }
      }
      const MetricParams mp = metric_constants(K, L1, L2, R);
      kinetic_part = [=] {
        const MetricTable tab = MetricTable::build(mp, quad_tol, n_smooth);
        json j = tab.to_json(false);
        j["lip_bound"] = kinetic_value_lip_bound(tab, L_phi);
        j["L_phi"] = L_phi;
        return j;
      };
    }
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }

  CommandResult res;
  res.report = run_header("constants", cfg);
  if (opts.dry_run) {
    res.report["dry_run"] = true;
    return res;
  }
  if (elliptic_part) res.report["elliptic"] = elliptic_part();
  if (kinetic_part) res.report["kinetic"] = kinetic_part();
  res.report["wall_clock_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (opts.write_files) {
    fs::create_directories(out);
    write_text(fs::path(out) / "constants.json", res.report.dump(2) + "\n");
  }
  return res;
}

CommandResult cmd_verify(const json& config, const RunOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  json cfg = config;
  if (opts.seed) cfg["seed"] = *opts.seed;
  std::vector<std::pair<std::string, Task>> tasks;
  std::string out;
  Scenario scenario;
  try {
    ParamReader top(cfg, "config");
    out = resolve_out(opts, top);
    const std::string name = top.text("scenario", "");
    require(!name.empty(), "config.scenario is required");
    scenario = make_scenario(name, top.object("params"));
    apply_declared(scenario, top.object("declared"));
    const double seed_d = top.number("seed", 0.0);
    require(seed_d >= 0.0 && seed_d == std::floor(seed_d), "config.seed must be a nonnegative integer");
    const auto seed = cfg.contains("seed") ? cfg["seed"].get<std::uint64_t>() : std::uint64_t{0};
    json est = top.object("estimators");
    top.finish();
    std::vector<std::string> names;
    if (est.empty()) {
      names = default_battery(scenario);
      for (const auto& n : names) est[n] = json::object();
    } else {
      for (const auto& [k, v] : est.items()) names.push_back(k);
    }
    for (const auto& n : names) {
      ParamReader p(est[n], "estimators." + n);
      tasks.emplace_back(n, make_task(scenario, n, p, estimator_seed(seed, n)));
      p.finish();
    }
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }

  CommandResult res;
  res.report = run_header("verify", cfg);
  res.report["scenario"] = {{"name", scenario.name}, {"params", scenario.params}};
  if (opts.dry_run) {
    res.report["dry_run"] = true;
    json planned = json::array();
    for (const auto& t : tasks) planned.push_back(t.first);
    res.report["planned"] = planned;
    return res;
  }
  if (opts.write_files) fs::create_directories(out);

  json records = json::array();
  json flags = json::object();
  bool all_pass = true, aborted = false;
  for (const auto& [name, task] : tasks) {
    try {
      Record r = task();
      json rec{{"name", r.name}, {"inputs", r.inputs}, {"result", r.result}};
      rec["pass"] = r.pass ? json(*r.pass) : json(nullptr);
      if (r.pass) {
        flags[r.name] = *r.pass;
        all_pass = all_pass && *r.pass;
      }
      if (!r.csv.empty() && opts.write_files) {
        write_text(fs::path(out) / (r.name + ".csv"), r.csv);
        rec["csv"] = r.name + ".csv";
      }
      records.push_back(rec);
    } catch (const std::exception& e) {
      records.push_back({{"name", name}, {"error", e.what()}});
      aborted = true;
      break;
    }
  }
  res.report["estimators"] = records;
  res.report["summary"] = {{"flags", flags}, {"all_pass", all_pass && !aborted}, {"aborted", aborted}};
  res.report["wall_clock_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  res.exit_code = aborted ? kRuntimeAbort : (all_pass ? kPass : kViolation);
  if (opts.write_files) write_text(fs::path(out) / "report.json", res.report.dump(2) + "\n");
  return res;
}

namespace {

void set_dotted(json& root, const std::string& dotted, const json& value) {
  json* node = &root;
  std::size_t begin = 0;
  for (;;) {
    const std::size_t dot = dotted.find('.', begin);
    const std::string key = dotted.substr(begin, dot == std::string::npos ? std::string::npos : dot - begin);
    if (key.empty()) throw InvalidInput("sweep: malformed key '" + dotted + "'");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key)) (*node)[key] = json::object();
    node = &(*node)[key];
    if (!node->is_object()) throw InvalidInput("sweep: '" + dotted + "' does not address an object");
    begin = dot + 1;
  }
}

void flatten(const json& j, const std::string& prefix, std::map<std::string, std::string>& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
  } else if (j.is_number() || j.is_boolean()) {
    out[prefix] = j.dump();
  }
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

}  // namespace

CommandResult cmd_sweep(const json& config, const RunOptions& opts) {
  json cfg = config;
  if (opts.seed) cfg["seed"] = *opts.seed;
  std::string out, command;
  json base;
  std::vector<std::pair<std::string, std::vector<json>>> axes;
  try {
    ParamReader top(cfg, "config");
    out = resolve_out(opts, top);
    command = top.text("command", "verify");
    require(command == "verify" || command == "constants", "sweep.command must be 'verify' or 'constants'");
    base = top.object("base");
    const json grid = top.object("grid");
    const bool has_seed = cfg.contains("seed");
    top.number("seed", 0.0);
    top.finish();
    if (has_seed) base["seed"] = cfg["seed"];
    if (grid.empty()) throw InvalidInput("sweep: empty grid");
    for (const auto& [k, v] : grid.items()) {
      require(v.is_array() && !v.empty(), "sweep.grid." + k + ": expected a nonempty array");
      axes.emplace_back(k, std::vector<json>(v.begin(), v.end()));
    }
    // validate every point before running any
    RunOptions dry = opts;
    dry.dry_run = true;
    dry.write_files = false;
    std::size_t total = 1;
    for (const auto& a : axes) total *= a.second.size();
    for (std::size_t idx = 0; idx < total; ++idx) {
      json point = base;
      std::size_t rem = idx;
      for (auto it = axes.rbegin(); it != axes.rend(); ++it) {
        set_dotted(point, it->first, it->second[rem % it->second.size()]);
        rem /= it->second.size();
      }
      point.erase("out");
      (void)(command == "verify" ? cmd_verify(point, dry) : cmd_constants(point, dry));
    }
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }

  CommandResult res;
  res.report = run_header("sweep", cfg);
  std::size_t total = 1;
  for (const auto& a : axes) total *= a.second.size();
  res.report["n_points"] = total;
  if (opts.dry_run) {
    res.report["dry_run"] = true;
    return res;
  }
  if (opts.write_files) fs::create_directories(fs::path(out) / "points");

  std::vector<std::map<std::string, std::string>> rows;
  std::vector<std::string> columns;
  const auto add_col = [&](const std::string& c) {
    if (std::find(columns.begin(), columns.end(), c) == columns.end()) columns.push_back(c);
  };
  for (const auto& a : axes) add_col(a.first);
  add_col("status");
  add_col("exit_code");
  json children = json::array();
  bool any_fail = false;
  for (std::size_t idx = 0; idx < total; ++idx) {
    json point = base;
    std::map<std::string, std::string> row;
    std::size_t rem = idx;
    for (auto it = axes.rbegin(); it != axes.rend(); ++it) {
      const json& v = it->second[rem % it->second.size()];
      set_dotted(point, it->first, v);
      row[it->first] = v.is_string() ? v.get<std::string>() : v.dump();
      rem /= it->second.size();
    }
    RunOptions child = opts;
    child.out_dir = (fs::path(out) / "points" / std::to_string(idx)).string();
    child.write_files = opts.write_files;
    point.erase("out");
    json summary;
    try {
      CommandResult r = command == "verify" ? cmd_verify(point, child) : cmd_constants(point, child);
      row["exit_code"] = std::to_string(r.exit_code);
      row["status"] = r.exit_code == kPass ? "ok" : "fail";
      any_fail = any_fail || r.exit_code != kPass;
      std::map<std::string, std::string> flat;
      if (command == "constants") {
        if (r.report.contains("elliptic")) flatten(r.report["elliptic"], "elliptic", flat);
        if (r.report.contains("kinetic")) flatten(r.report["kinetic"], "kinetic", flat);
      } else {
        for (const auto& rec : r.report["estimators"]) {
          if (rec.contains("result")) flatten(rec["result"], rec["name"].get<std::string>(), flat);
          if (rec.contains("pass") && !rec["pass"].is_null()) flat[rec["name"].get<std::string>() + ".pass"] = rec["pass"].dump();
        }
      }
      for (const auto& [k, v] : flat) {
        row[k] = v;
        add_col(k);
      }
      summary = {{"index", idx}, {"exit_code", r.exit_code}, {"dir", child.out_dir}};
    } catch (const std::exception& e) {
      any_fail = true;
      row["status"] = "error";
      row["exit_code"] = std::to_string(kRuntimeAbort);
      add_col("error");
      row["error"] = e.what();
      summary = {{"index", idx}, {"error", e.what()}};
    }
    rows.push_back(row);
    children.push_back(summary);
  }
  res.report["points"] = children;
  res.exit_code = any_fail ? kViolation : kPass;
  if (opts.write_files) {
    std::ostringstream os;
    for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << csv_cell(columns[i]);
    os << '\n';
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < columns.size(); ++i) {
        const auto it = row.find(columns[i]);
        os << (i ? "," : "") << (it == row.end() ? "" : csv_cell(it->second));
      }
      os << '\n';
    }
    write_text(fs::path(out) / "sweep.csv", os.str());
    write_text(fs::path(out) / "sweep.json", res.report.dump(2) + "\n");
  }
  return res;
}

CommandResult cmd_dump_trajectories(const json& config, const RunOptions& opts) {
  json cfg = config;
  if (opts.seed) cfg["seed"] = *opts.seed;
  std::string out, coupling;
  Scenario s;
  SimConfig sim;
  StateVector x0, y0;
  std::size_t n_paths = 0;
  std::optional<MetricParams> mp;
  try {
    ParamReader top(cfg, "config");
    out = resolve_out(opts, top);
    s = make_scenario(top.text("scenario", "ou"), top.object("params"));
    apply_declared(s, top.object("declared"));
    coupling = top.text("coupling", "reflection");
    n_paths = static_cast<std::size_t>(top.integer("n_paths", 10));
    top.number("seed", 0.0);
    const std::uint64_t seed = cfg.contains("seed") ? cfg["seed"].get<std::uint64_t>() : 0;
    ParamReader sp(top.object("sim"), "sim");
    sim.dt = sp.number("dt", 1e-3);
    sim.T = sp.number("T", 1.0);
    sim.merge_tol = sp.number("merge_tol", sim.merge_tol);
    sim.n_smooth = sp.integer("n_smooth", sim.n_smooth);
    sim.record_stride = sp.integer("record_stride", 10);
    sim.bridge_merge = sp.flag("bridge_merge", true);
    sp.finish();
    sim.seed = seed;
    sim.validate();
    const int d = s.elliptic ? s.elliptic->dim : (s.kinetic ? 2 * s.kinetic->dim : 0);
    require(d > 0, "dump-trajectories: scenario has no SDE");
    x0 = read_point(top, "x0", d, axis_point(d, 1.0));
    y0 = read_point(top, "y0", d, axis_point(d, -1.0));
    top.finish();
    require(n_paths >= 1, "dump-trajectories: n_paths must be positive");
    const bool elliptic_coupling = coupling == "synchronous" || coupling == "reflection" || coupling == "harnack";
    if (s.elliptic) {
      require(elliptic_coupling || coupling == "single", "dump-trajectories: unknown coupling '" + coupling + "'");
    } else {
      require(coupling == "kinetic" || coupling == "single", "dump-trajectories: kinetic scenarios support 'kinetic' or 'single'");
      if (coupling == "kinetic") {
        require(s.kinetic->admissible() && s.kinetic->gamma == 1.0, "dump-trajectories: kinetic coupling needs an admissible model with gamma = 1");
        mp = metric_constants(s.kinetic->K, s.kinetic->L1, s.kinetic->L2, s.kinetic->R);
      }
    }
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }

  CommandResult res;
  res.report = run_header("dump-trajectories", cfg);
  if (opts.dry_run) {
    res.report["dry_run"] = true;
    return res;
  }
  std::ostringstream os;
  try {
    if (coupling == "single") {
      std::vector<Trajectory> paths(n_paths);
      parallel_for(n_paths, [&](std::size_t i) {
        paths[i] = s.elliptic ? em_path(*s.elliptic, x0, sim, i) : em_path(*s.kinetic, x0, sim, i);
      });
      os.precision(17);
      os << "path_id,step,t";
      for (Eigen::Index k = 0; k < x0.size(); ++k) os << ",z" << k;
      os << '\n';
      for (std::size_t i = 0; i < n_paths; ++i)
        for (std::size_t k = 0; k < paths[i].times.size(); ++k) {
          os << i << ',' << paths[i].steps[k] << ',' << paths[i].times[k];
          for (Eigen::Index c = 0; c < x0.size(); ++c) os << ',' << paths[i].states[k](c);
          os << '\n';
        }
    } else {
      std::vector<PairTrajectory> pairs(n_paths);
      std::optional<MetricTable> tab;
      if (mp) tab = MetricTable::build(*mp, 1e-10, sim.n_smooth);
      const NormalizedKineticModel nm = s.kinetic ? normalize_kinetic(*s.kinetic) : NormalizedKineticModel{};
      parallel_for(n_paths, [&](std::size_t i) {
        if (coupling == "synchronous") pairs[i] = synchronous_pair(*s.elliptic, x0, y0, sim, i);
        else if (coupling == "reflection") pairs[i] = reflection_pair(*s.elliptic, x0, y0, sim, i);
        else if (coupling == "harnack") pairs[i] = harnack_pair(*s.elliptic, x0, y0, sim.T, sim, i);
        else pairs[i] = kinetic_coupled_pair(nm, *tab, *mp, x0, y0, sim, i);
      });
      write_pair_csv(os, pairs);
    }
  } catch (const std::exception& e) {
    res.report["error"] = e.what();
    res.exit_code = kRuntimeAbort;
    return res;
  }
  if (opts.write_files) {
    fs::create_directories(out);
    write_text(fs::path(out) / "trajectories.csv", os.str());
    write_text(fs::path(out) / "trajectories.json", res.report.dump(2) + "\n");
  }
  res.report["rows"] = n_paths;
  return res;
}

int run(int argc, char** argv) {
  CLI::App app{"Coupling and functional-inequality experiments for non-equilibrium diffusions"};
  app.require_subcommand(1);
  std::string config_path;
  RunOptions opts;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--out", opts.out_dir, "output directory");
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--threads", threads, "worker threads");
    sub->add_flag("--dry-run", opts.dry_run, "validate the config and stop");
  };
  CLI::App* c_const = app.add_subcommand("constants", "closed-form constants report");
  CLI::App* c_verify = app.add_subcommand("verify", "run the estimator battery for a scenario");
  CLI::App* c_sweep = app.add_subcommand("sweep", "parameter grid over a base config");
  CLI::App* c_dump = app.add_subcommand("dump-trajectories", "write coupled paths as CSV");
  for (auto* s : {c_const, c_verify, c_sweep, c_dump}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kConfigError;
  }
  for (auto* s : {c_const, c_verify, c_sweep, c_dump})
    if (s->count("--seed")) opts.seed = seed;
  if (threads > 0) worker_count() = threads;

  json config;
  try {
    std::ifstream is(config_path);
    if (!is) throw ConfigError("cannot open config '" + config_path + "'");
    config = json::parse(is);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  try {
    CommandResult r;
    if (c_const->parsed()) r = cmd_constants(config, opts);
    else if (c_verify->parsed()) r = cmd_verify(config, opts);
    else if (c_sweep->parsed()) r = cmd_sweep(config, opts);
    else r = cmd_dump_trajectories(config, opts);
    if (r.report.contains("summary")) std::cout << r.report["summary"].dump(2) << "\n";
    else if (opts.dry_run) std::cout << "config ok\n";
    if (r.report.contains("error")) std::cerr << "aborted: " << r.report["error"].get<std::string>() << "\n";
    if (r.exit_code == kRuntimeAbort && r.report.contains("estimators")) {
      for (const auto& rec : r.report["estimators"])
        if (rec.contains("error")) std::cerr << "aborted in " << rec["name"].get<std::string>() << ": " << rec["error"].get<std::string>() << "\n";
    }
    return r.exit_code;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "aborted: " << e.what() << "\n";
    return kRuntimeAbort;
  }
}

}  // namespace ness::cli
