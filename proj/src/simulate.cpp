#include "ness/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <span>
#include <string>

namespace ness {

void SimConfig::validate() const {
  require(dt > 0.0 && std::isfinite(dt), "SimConfig: dt must be positive");
  require(T > 0.0 && std::isfinite(T), "SimConfig: T must be positive");
  require(dt <= T * (1.0 + 1e-12), "SimConfig: dt must not exceed T");
  require(merge_tol > 0.0, "SimConfig: merge_tol must be positive");
  require(n_smooth >= 0, "SimConfig: n_smooth must be nonnegative");
  require(record_stride >= 1, "SimConfig: record_stride must be at least 1");
  for (double t : observe)
    require(t >= 0.0 && t <= T * (1.0 + 1e-12), "SimConfig: observation time outside [0, T]");
}

std::size_t SimConfig::steps() const {
  const double n = std::ceil(T / dt - 1e-9);
  return static_cast<std::size_t>(std::max(1.0, n));
}

std::vector<double> PairTrajectory::distances() const {
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = (z[i] - z2[i]).norm();
  return out;
}

namespace {

// Sorted step indices at which states are stored.
std::vector<std::size_t> record_plan(const SimConfig& cfg) {
  const std::size_t n = cfg.steps();
  const double h = cfg.step();
  std::vector<std::size_t> plan{0};
  if (!cfg.observe.empty()) {
    for (double t : cfg.observe)
      plan.push_back(std::min(n, static_cast<std::size_t>(std::llround(t / h))));
  } else {
    const auto stride = static_cast<std::size_t>(cfg.record_stride);
    for (std::size_t k = stride; k <= n; k += stride) plan.push_back(k);
    plan.push_back(n);
  }
  std::sort(plan.begin(), plan.end());
  plan.erase(std::unique(plan.begin(), plan.end()), plan.end());
  return plan;
}

class Recorder {
 public:
  explicit Recorder(const SimConfig& cfg) : plan_(record_plan(cfg)), h_(cfg.step()) {}
  bool due(std::size_t k) const { return next_ < plan_.size() && plan_[next_] == k; }
  double time(std::size_t k) const { return h_ * static_cast<double>(k); }
  void advance() { ++next_; }
  std::size_t size() const { return plan_.size(); }

 private:
  std::vector<std::size_t> plan_;
  double h_;
  std::size_t next_ = 0;
};

void check_finite(ConstRef x, std::uint64_t path, std::size_t step, double t) {
  if (!x.allFinite())
    throw SimulationError("state left the finite range (path " + std::to_string(path) +
                          ", step " + std::to_string(step) + ", t = " + std::to_string(t) + ")");
}

std::span<double> as_span(StateVector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

void record_pair(PairTrajectory& p, Recorder& rec, std::size_t k, const StateVector& z,
                 const StateVector& z2, double rc, double sc, CouplingMode mode) {
  if (!rec.due(k)) return;
  p.steps.push_back(k);
  p.times.push_back(rec.time(k));
  p.z.push_back(z);
  p.z2.push_back(z2);
  p.rc.push_back(rc);
  p.sc.push_back(sc);
  p.mode.push_back(mode);
  rec.advance();
}

void reserve_pair(PairTrajectory& p, std::size_t n) {
  p.steps.reserve(n);
  p.times.reserve(n);
  p.z.reserve(n);
  p.z2.reserve(n);
  p.rc.reserve(n);
  p.sc.reserve(n);
  p.mode.reserve(n);
}

void check_pair_inputs(const EllipticModel& model, const StateVector& x0, const StateVector& y0,
                       const SimConfig& cfg) {
  model.validate();
  cfg.validate();
  require(x0.size() == model.dim && y0.size() == model.dim,
          "coupling: initial states must match the model dimension");
}

}  // namespace

Trajectory em_path(const EllipticModel& model, const StateVector& x0, const SimConfig& cfg,
                   std::uint64_t path) {
  model.validate();
  cfg.validate();
  require(x0.size() == model.dim, "em_path: initial state must match the model dimension");
  const NoiseStream noise(cfg.seed);
  const std::size_t n = cfg.steps();
  const double h = cfg.step();
  const double amp = model.sigma * std::sqrt(h);

  Recorder rec(cfg);
  Trajectory out;
  out.steps.reserve(rec.size());
  StateVector x = x0, b(model.dim), xi(model.dim);
  const auto store = [&](std::size_t k) {
    if (!rec.due(k)) return;
    out.steps.push_back(k);
    out.times.push_back(rec.time(k));
    out.states.push_back(x);
    rec.advance();
  };
  store(0);
  for (std::size_t k = 0; k < n; ++k) {
    model.drift(x, b);
    noise.normals(path, k, NoiseStream::kPrimary, as_span(xi));
    x += h * b + amp * xi;
    check_finite(x, path, k + 1, h * (k + 1));
    store(k + 1);
  }
  return out;
}

Trajectory em_path(const KineticModel& model, const StateVector& z0, const SimConfig& cfg,
                   std::uint64_t path, KineticForm form) {
  model.validate();
  cfg.validate();
  const int d = model.dim;
  require(z0.size() == 2 * d, "em_path: kinetic state must have dimension 2d");
  const NoiseStream noise(cfg.seed);
  const std::size_t n = cfg.steps();
  const double h = cfg.step();
  const double amp = std::sqrt(2.0 * model.gamma * h);

  Recorder rec(cfg);
  Trajectory out;
  StateVector z = z0, force(d), extra(d), xi(d), v_old(d);
  const auto store = [&](std::size_t k) {
    if (!rec.due(k)) return;
    out.steps.push_back(k);
    out.times.push_back(rec.time(k));
    out.states.push_back(z);
    rec.advance();
  };
  store(0);
  for (std::size_t k = 0; k < n; ++k) {
    auto x = z.head(d);
    auto v = z.tail(d);
    if (form == KineticForm::kLinearized) {
      model.linear_force(x, v, force);
    } else {
      model.grad_U(x, force);
      force = -force;
      if (model.forcing) {
        model.forcing(x, v, extra);
        force += extra;
      }
    }
    noise.normals(path, k, NoiseStream::kPrimary, as_span(xi));
    v_old = v;
    x += h * v_old;
    v += h * (force - model.gamma * v_old) + amp * xi;
    check_finite(z, path, k + 1, h * (k + 1));
    store(k + 1);
  }
  return out;
}

PairTrajectory synchronous_pair(const EllipticModel& model, const StateVector& x0,
                                const StateVector& y0, const SimConfig& cfg, std::uint64_t path) {
  check_pair_inputs(model, x0, y0, cfg);
  const NoiseStream noise(cfg.seed);
  const std::size_t n = cfg.steps();
  const double h = cfg.step();
  const double amp = model.sigma * std::sqrt(h);
  const double tol = cfg.merge_tol * (1.0 + (x0 - y0).norm());

  Recorder rec(cfg);
  PairTrajectory p;
  reserve_pair(p, rec.size());
  StateVector x = x0, y = y0, bx(model.dim), by(model.dim), xi(model.dim);
  if ((x - y).norm() < tol) {
    y = x;
    p.tau = 0.0;
  }
  const auto mode = [&] { return p.merged() ? CouplingMode::kMerged : CouplingMode::kSynchronous; };
  record_pair(p, rec, 0, x, y, 0.0, 1.0, mode());
  for (std::size_t k = 0; k < n; ++k) {
    noise.normals(path, k, NoiseStream::kPrimary, as_span(xi));
    model.drift(x, bx);
    if (p.merged()) {
      x += h * bx + amp * xi;
      y = x;
    } else {
      model.drift(y, by);
      x += h * bx + amp * xi;
      y += h * by + amp * xi;
      if ((x - y).norm() < tol) {
        y = x;
        p.tau = h * static_cast<double>(k + 1);
      }
    }
    check_finite(x, path, k + 1, h * (k + 1));
    check_finite(y, path, k + 1, h * (k + 1));
    record_pair(p, rec, k + 1, x, y, 0.0, 1.0, mode());
  }
  return p;
}

PairTrajectory reflection_pair(const EllipticModel& model, const StateVector& x0,
                               const StateVector& y0, const SimConfig& cfg, std::uint64_t path) {
  check_pair_inputs(model, x0, y0, cfg);
  const NoiseStream noise(cfg.seed);
  const std::size_t n = cfg.steps();
  const double h = cfg.step();
  const double sigma = model.sigma;
  const double amp = sigma * std::sqrt(h);
  const double tol = cfg.merge_tol * (1.0 + (x0 - y0).norm());
  const int d = model.dim;

  Recorder rec(cfg);
  PairTrajectory p;
  reserve_pair(p, rec.size());
  StateVector x = x0, y = y0, bx(d), by(d), xi(d), e(d), delta(d);
  if ((x - y).norm() < tol) {
    y = x;
    p.tau = 0.0;
  }
  const auto rc = [&] { return p.merged() ? 0.0 : 1.0; };
  const auto mode = [&] { return p.merged() ? CouplingMode::kMerged : CouplingMode::kReflection; };
  record_pair(p, rec, 0, x, y, rc(), 1.0 - rc(), mode());
  for (std::size_t k = 0; k < n; ++k) {
    noise.normals(path, k, NoiseStream::kPrimary, as_span(xi));
    model.drift(x, bx);
    if (p.merged()) {
      x += h * bx + amp * xi;
      y = x;
    } else {
      model.drift(y, by);
      delta = x - y;
      const double dist = delta.norm();
      e = delta / dist;
      const double proj = e.dot(xi);
      x += h * bx + amp * xi;
      y += h * by + amp * (xi - 2.0 * proj * e);
      delta = x - y;
      const double r_new = e.dot(delta);
      bool merge = delta.norm() < tol || r_new <= 0.0;
      if (!merge && cfg.bridge_merge) {
        // the radial coordinate moves with variance (2 sigma)^2 h over the step
        const double p_cross = std::exp(-2.0 * dist * r_new / (4.0 * sigma * sigma * h));
        merge = noise.uniform(path, k, NoiseStream::kBridge) < p_cross;
      }
      if (merge) {
        y = x;
        p.tau = h * static_cast<double>(k + 1);
      }
    }
    check_finite(x, path, k + 1, h * (k + 1));
    check_finite(y, path, k + 1, h * (k + 1));
    record_pair(p, rec, k + 1, x, y, rc(), 1.0 - rc(), mode());
  }
  return p;
}

PairTrajectory harnack_pair(const EllipticModel& model, const StateVector& x0,
                            const StateVector& y0, double T_h, const SimConfig& cfg,
                            std::uint64_t path) {
  check_pair_inputs(model, x0, y0, cfg);
  require(T_h > 0.0, "harnack_pair: T must be positive");
  const NoiseStream noise(cfg.seed);
  const std::size_t n = cfg.steps();
  const double h = cfg.step();
  const double sigma = model.sigma;
  const double sq = std::sqrt(h);
  const double tol = cfg.merge_tol * (1.0 + (x0 - y0).norm());
  const double xi_c = model.wang_constant() + (x0 - y0).norm() / T_h;
  const int d = model.dim;

  Recorder rec(cfg);
  PairTrajectory p;
  reserve_pair(p, rec.size());
  StateVector x = x0, y = y0, bx(d), by(d), xi(d), shift(d), delta(d);
  if ((x - y).norm() < tol) {
    y = x;
    p.tau = 0.0;
  }
  const auto mode = [&] { return p.merged() ? CouplingMode::kMerged : CouplingMode::kSynchronous; };
  record_pair(p, rec, 0, x, y, 0.0, 1.0, mode());
  for (std::size_t k = 0; k < n; ++k) {
    noise.normals(path, k, NoiseStream::kPrimary, as_span(xi));
    model.drift(x, bx);
    if (p.merged()) {
      x += h * bx + sigma * sq * xi;
      y = x;
    } else {
      model.drift(y, by);
      delta = x - y;
      shift = delta + h * (bx - by);
      bool merge = shift.norm() <= xi_c * h;
      if (!merge) shift = (xi_c * h / delta.norm()) * delta;
      // Euler transition density ratio for Y under the shifted increment
      p.log_weight += -shift.dot(xi) / (sigma * sq) - shift.squaredNorm() / (2.0 * sigma * sigma * h);
      x += h * bx + sigma * sq * xi;
      y += h * by + sigma * sq * xi + shift;
      merge = merge || (x - y).norm() < tol;
      if (merge) {
        y = x;
        p.tau = h * static_cast<double>(k + 1);
      }
    }
    check_finite(x, path, k + 1, h * (k + 1));
    check_finite(y, path, k + 1, h * (k + 1));
    record_pair(p, rec, k + 1, x, y, 0.0, 1.0, mode());
  }
  return p;
}

MixWeights mix_weights(double r, double dq_norm, double r0, int n_smooth) {
  require(n_smooth >= 1, "mix_weights: n_smooth must be a positive integer");
  const double n = static_cast<double>(n_smooth);
  const double half_pi = 0.5 * std::numbers::pi;
  double c = 1.0;
  if (r >= r0 + 1.0 / n) {
    c = 0.0;
  } else if (r > r0) {
    c = std::cos(half_pi * (r - r0) * n);
  }
  double m = 1.0;
  if (dq_norm <= 1.0 / n) {
    m = 0.0;
  } else if (dq_norm < 2.0 / n) {
    m = std::sin(half_pi * (dq_norm * n - 1.0));
  }
  MixWeights w;
  w.rc = c * m;
  w.sc = std::sqrt((1.0 - w.rc) * (1.0 + w.rc));
  return w;
}

PairTrajectory kinetic_coupled_pair(const NormalizedKineticModel& model, const MetricTable& table,
                                    const MetricParams& params, const StateVector& z0,
                                    const StateVector& z0_prime, const SimConfig& cfg,
                                    std::uint64_t path) {
  const KineticModel& km = model.model;
  km.validate();
  cfg.validate();
  const int d = km.dim;
  require(std::abs(km.gamma - 1.0) < 1e-12, "kinetic_coupled_pair: model must be normalized");
  require(km.admissible(), "kinetic_coupled_pair: model is not admissible");
  require(params.dim() == d, "kinetic_coupled_pair: metric dimension mismatch");
  require(cfg.n_smooth >= 1, "kinetic_coupled_pair: n_smooth must be finite and positive");
  require(z0.size() == 2 * d && z0_prime.size() == 2 * d,
          "kinetic_coupled_pair: states must have dimension 2d");
  (void)table;

  const NoiseStream noise(cfg.seed);
  const std::size_t n = cfg.steps();
  const double h = cfg.step();
  const double amp = std::sqrt(2.0 * h);
  const double tol = cfg.merge_tol * (1.0 + (z0 - z0_prime).norm());

  Recorder rec(cfg);
  PairTrajectory p;
  reserve_pair(p, rec.size());
  StateVector z = z0, w = z0_prime;
  StateVector f(d), f2(d), xi(d), xi2(d), e(d), brc(d), bsc(d), dx(d), dq(d), v_old(d);
  if ((z - w).norm() < tol) {
    w = z;
    p.tau = 0.0;
  }

  MixWeights mix;
  const auto weights = [&] {
    if (p.merged()) return MixWeights{};
    dx = z.head(d) - w.head(d);
    dq = dx + (z.tail(d) - w.tail(d));
    const double dqn = dq.norm();
    return mix_weights(params.theta * dx.norm() + dqn, dqn, params.r0, cfg.n_smooth);
  };
  const auto mode_of = [&](const MixWeights& m) {
    if (p.merged()) return CouplingMode::kMerged;
    if (m.rc == 0.0) return CouplingMode::kSynchronous;
    if (m.rc == 1.0) return CouplingMode::kReflection;
    return CouplingMode::kMixed;
  };
  const auto step_one = [&](StateVector& s, const StateVector& force, const StateVector& noise_v) {
    auto x = s.head(d);
    auto v = s.tail(d);
    v_old = v;
    x += h * v_old;
    v += h * (force - v_old) + amp * noise_v;
  };

  mix = weights();
  record_pair(p, rec, 0, z, w, mix.rc, mix.sc, mode_of(mix));
  for (std::size_t k = 0; k < n; ++k) {
    noise.normals(path, k, NoiseStream::kPrimary, as_span(xi));
    km.linear_force(z.head(d), z.tail(d), f);
    if (p.merged()) {
      step_one(z, f, xi);
      w = z;
    } else {
      noise.normals(path, k, NoiseStream::kAuxiliary, as_span(xi2));
      km.linear_force(w.head(d), w.tail(d), f2);
      const double dqn = dq.norm();
      if (dqn > 0.0) {
        e = dq / dqn;
      } else {
        e.setZero();
        e[0] = 1.0;
      }
      brc = mix.rc * xi + mix.sc * xi2;
      bsc = mix.sc * xi - mix.rc * xi2;
      // B' = rc (I - 2 e e^T) B^rc + sc B^sc
      bsc = mix.rc * (brc - 2.0 * e.dot(brc) * e) + mix.sc * bsc;
      step_one(z, f, xi);
      step_one(w, f2, bsc);
      if ((z - w).norm() < tol) {
        w = z;
        p.tau = h * static_cast<double>(k + 1);
      }
    }
    check_finite(z, path, k + 1, h * (k + 1));
    check_finite(w, path, k + 1, h * (k + 1));
    mix = weights();
    record_pair(p, rec, k + 1, z, w, mix.rc, mix.sc, mode_of(mix));
  }
  return p;
}

void write_pair_csv(std::ostream& os, const std::vector<PairTrajectory>& pairs,
                    std::uint64_t first_path_id) {
  if (pairs.empty() || pairs.front().z.empty()) {
    os << "path_id,step,t,rc,merged\n";
    return;
  }
  const auto dim = pairs.front().z.front().size();
  os << "path_id,step,t";
  for (Eigen::Index i = 0; i < dim; ++i) os << ",z" << i;
  for (Eigen::Index i = 0; i < dim; ++i) os << ",zp" << i;
  os << ",rc,merged\n";
  os.precision(17);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto& tr = pairs[p];
    for (std::size_t i = 0; i < tr.z.size(); ++i) {
      os << first_path_id + p << ',' << tr.steps[i] << ',' << tr.times[i];
      for (Eigen::Index j = 0; j < dim; ++j) os << ',' << tr.z[i][j];
      for (Eigen::Index j = 0; j < dim; ++j) os << ',' << tr.z2[i][j];
      os << ',' << tr.rc[i] << ',' << (tr.mode[i] == CouplingMode::kMerged ? 1 : 0) << '\n';
    }
  }
}

}  // namespace ness
