#include "ness/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ness {

ParamReader::ParamReader(nlohmann::json obj, std::string where)
    : obj_(std::move(obj)), where_(std::move(where)) {
  require(obj_.is_object() || obj_.is_null(), where_ + ": expected an object");
}

const nlohmann::json* ParamReader::get(const std::string& key) {
  seen_.push_back(key);
  if (!obj_.is_object()) return nullptr;
  const auto it = obj_.find(key);
  return it == obj_.end() ? nullptr : &*it;
}

double ParamReader::number(const std::string& key, double fallback) {
  const auto* v = get(key);
  if (!v) return fallback;
  require(v->is_number(), where_ + "." + key + ": expected a number");
  return v->get<double>();
}

int ParamReader::integer(const std::string& key, int fallback) {
  const auto* v = get(key);
  if (!v) return fallback;
  require(v->is_number_integer(), where_ + "." + key + ": expected an integer");
  return v->get<int>();
}

bool ParamReader::flag(const std::string& key, bool fallback) {
  const auto* v = get(key);
  if (!v) return fallback;
  require(v->is_boolean(), where_ + "." + key + ": expected true or false");
  return v->get<bool>();
}

std::string ParamReader::text(const std::string& key, const std::string& fallback) {
  const auto* v = get(key);
  if (!v) return fallback;
  require(v->is_string(), where_ + "." + key + ": expected a string");
  return v->get<std::string>();
}

std::vector<double> ParamReader::numbers(const std::string& key, const std::vector<double>& fallback) {
  const auto* v = get(key);
  if (!v) return fallback;
  require(v->is_array(), where_ + "." + key + ": expected an array of numbers");
  std::vector<double> out;
  for (const auto& e : *v) {
    require(e.is_number(), where_ + "." + key + ": expected an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::optional<nlohmann::json> ParamReader::raw(const std::string& key) {
  const auto* v = get(key);
  if (!v) return std::nullopt;
  return std::optional<nlohmann::json>(std::in_place, *v);
}

nlohmann::json ParamReader::object(const std::string& key) {
  const auto* v = get(key);
  if (!v) return nlohmann::json::object();
  require(v->is_object(), where_ + "." + key + ": expected an object");
  return *v;
}

void ParamReader::finish() const {
  if (!obj_.is_object()) return;
  for (const auto& [key, value] : obj_.items()) {
    if (std::find(seen_.begin(), seen_.end(), key) == seen_.end())
      throw InvalidInput(where_ + ": unknown key '" + key + "'");
  }
}

namespace {

Scenario make_ou(ParamReader& p) {
  const int d = p.integer("dim", 1);
  const double a = p.number("rate", 1.0);
  require(d >= 1 && a > 0.0, "ou: need dim >= 1 and rate > 0");
  EllipticModel m;
  m.name = "ou";
  m.dim = d;
  m.drift = [a](ConstRef x, OutRef out) { out = -a * x; };
  m.drift0 = m.drift;
  m.drift1 = [](ConstRef, OutRef out) { out.setZero(); };
  m.div_drift1 = [](ConstRef) { return 0.0; };
  m.grad_log_mu0 = [a](ConstRef x, OutRef out) { out = -a * x; };
  m.rho = a;
  m.C0 = 1.0 / a;
  Scenario s;
  s.elliptic = m;
  s.params = {{"dim", d}, {"rate", a}};
  return s;
}

// Rotation plus a Gaussian bump potential V = amp exp(-|x|^2/2), split with
// the rotating part in b0 so that mu0 is standard Gaussian.
Scenario make_rotating(ParamReader& p) {
  const double omega = p.number("omega", 1.0);
  const double amp = p.number("amp", 0.5);
  require(amp >= 0.0 && amp < 1.0, "rotating: amp must lie in [0, 1)");
  EllipticModel m;
  m.name = "rotating";
  m.dim = 2;
  m.drift0 = [omega](ConstRef x, OutRef out) {
    out(0) = omega * x(1) - x(0);
    out(1) = -omega * x(0) - x(1);
  };
  m.drift1 = [amp](ConstRef x, OutRef out) { out = amp * std::exp(-0.5 * x.squaredNorm()) * x; };
  m.drift = [omega, amp](ConstRef x, OutRef out) {
    const double w = amp * std::exp(-0.5 * x.squaredNorm());
    out(0) = omega * x(1) - x(0) + w * x(0);
    out(1) = -omega * x(0) - x(1) + w * x(1);
  };
  m.div_drift1 = [amp](ConstRef x) {
    const double r2 = x.squaredNorm();
    return amp * std::exp(-0.5 * r2) * (2.0 - r2);
  };
  m.grad_log_mu0 = [](ConstRef x, OutRef out) { out = -x; };
  m.phi_bounded = [amp](ConstRef x) { return -2.0 * amp * std::exp(-0.5 * x.squaredNorm()); };
  m.rho = 1.0 - amp;
  m.M_phi = 2.0 * amp;
  m.C0 = 1.0;
  Scenario s;
  s.elliptic = m;
  s.params = {{"omega", omega}, {"amp", amp}};
  return s;
}

Scenario make_double_well(ParamReader& p) {
  const double rho = p.number("rho", 1.0);
  require(rho > 0.0, "double-well: rho must be positive");
  EllipticModel m;
  m.name = "double-well";
  m.dim = 1;
  m.drift = [](ConstRef x, OutRef out) { out(0) = x(0) - x(0) * x(0) * x(0); };
  // (b(x)-b(y))/(x-y) = 1 - (x^2+xy+y^2) <= 1 - |x-y|^2/4
  m.rho = rho;
  m.L = 1.0;
  m.R = 2.0 * std::sqrt(1.0 + rho);
  Scenario s;
  s.elliptic = m;
  s.params = {{"rho", rho}};
  return s;
}

Scenario make_perturbed_ou(ParamReader& p) {
  const double a = p.number("amp", 0.5);
  const double slope = 8.0 / (3.0 * std::sqrt(3.0));  // sup of |d/dx (1-x^2)^2| on [-1, 1]
  require(a >= 0.0 && a * slope < 1.0, "perturbed-ou: amp too large for global contraction");
  const auto bump = [a](double x) {
    const double u = 1.0 - x * x;
    return std::abs(x) < 1.0 ? a * u * u : 0.0;
  };
  const auto phi = [a](double x) {
    if (std::abs(x) >= 1.0) return 0.0;
    const double u = 1.0 - x * x;
    return 4.0 * a * x * u - a * x * u * u;
  };
  EllipticModel m;
  m.name = "perturbed-ou";
  m.dim = 1;
  m.drift0 = [](ConstRef x, OutRef out) { out = -x; };
  m.drift1 = [bump](ConstRef x, OutRef out) { out(0) = bump(x(0)); };
  m.drift = [bump](ConstRef x, OutRef out) { out(0) = -x(0) + bump(x(0)); };
  m.div_drift1 = [a](ConstRef x) {
    return std::abs(x(0)) < 1.0 ? -4.0 * a * x(0) * (1.0 - x(0) * x(0)) : 0.0;
  };
  m.grad_log_mu0 = [](ConstRef x, OutRef out) { out = -x; };
  m.phi_bounded = [phi](ConstRef x) { return phi(x(0)); };
  double sup = 0.0;
  for (int i = 0; i <= 20000; ++i) sup = std::max(sup, std::abs(phi(-1.0 + 1e-4 * i)));
  m.M_phi = sup;
  m.rho = 1.0 - a * slope;
  m.C0 = 1.0;
  Scenario s;
  s.elliptic = m;
  s.params = {{"amp", a}};
  return s;
}

Scenario make_kinetic_quadratic(ParamReader& p) {
  const int d = p.integer("dim", 1);
  const double k = p.number("k", 1.0);
  const double gamma = p.number("gamma", 1.0);
  const double R = p.number("R", 1.0);
  require(d >= 1 && k > 0.0 && gamma > 0.0 && R >= 0.0, "kinetic-quadratic: invalid parameters");
  KineticModel m;
  m.name = "kinetic-quadratic";
  m.dim = d;
  m.gamma = gamma;
  m.grad_U = [k](ConstRef x, OutRef out) { out = k * x; };
  m.K = k * Matrix::Identity(d, d);
  m.R = R;
  m.C0 = 1.0 / k;
  Scenario s;
  s.kinetic = m;
  s.params = {{"dim", d}, {"k", k}, {"gamma", gamma}, {"R", R}};
  return s;
}

// K(x1, x2) = amp sum_i atan(x1_i) atan(x2_i) with V = |x|^2 / 2 on R^{2p}.
Scenario make_competition(ParamReader& p) {
  const int dim = p.integer("p", 1);
  const double amp = p.number("amp", 1.0);
  require(dim >= 1, "competition: p must be positive");
  CompetitionKernel k;
  k.p = dim;
  k.value = [amp](ConstRef x1, ConstRef x2) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < x1.size(); ++i) s += std::atan(x1(i)) * std::atan(x2(i));
    return amp * s;
  };
  k.grad1 = [amp](ConstRef x1, ConstRef x2, OutRef out) {
    for (Eigen::Index i = 0; i < x1.size(); ++i)
      out(i) = amp * std::atan(x2(i)) / (1.0 + x1(i) * x1(i));
  };
  k.grad2 = [amp](ConstRef x1, ConstRef x2, OutRef out) {
    for (Eigen::Index i = 0; i < x1.size(); ++i)
      out(i) = amp * std::atan(x1(i)) / (1.0 + x2(i) * x2(i));
  };
  k.grad_bound = std::abs(amp) * std::numbers::pi / 2.0 * std::sqrt(2.0 * dim);
  k.hess_bound = std::abs(amp) * 2.0;
  Scenario s;
  s.kernel = k;
  s.grad_V = [](ConstRef x, OutRef out) { out = x; };
  s.params = {{"p", dim}, {"amp", amp}};
  return s;
}

}  // namespace

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{"ou",           "rotating",          "double-well",
                                              "perturbed-ou", "kinetic-quadratic", "competition"};
  return names;
}

Scenario make_scenario(const std::string& name, const nlohmann::json& params) {
  ParamReader p(params, "params");
  Scenario s;
  if (name == "ou") s = make_ou(p);
  else if (name == "rotating") s = make_rotating(p);
  else if (name == "double-well") s = make_double_well(p);
  else if (name == "perturbed-ou") s = make_perturbed_ou(p);
  else if (name == "kinetic-quadratic") s = make_kinetic_quadratic(p);
  else if (name == "competition") s = make_competition(p);
  else throw InvalidInput("unknown scenario '" + name + "'");
  p.finish();
  s.name = name;
  if (s.elliptic) s.elliptic->validate();
  if (s.kinetic) s.kinetic->validate();
  return s;
}

}  // namespace ness
