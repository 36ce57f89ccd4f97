#include "ness/metric.hpp"

#include "ness/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ness {

MetricParams metric_constants(const Matrix& K, double L1, double L2, double R) {
  require(K.rows() == K.cols() && K.rows() >= 1, "metric_constants: K must be square");
  require((K - K.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + K.cwiseAbs().maxCoeff()),
          "metric_constants: K must be symmetric");
  require(L1 >= 0.0 && L2 >= 0.0 && R >= 0.0, "metric_constants: L1, L2, R must be nonnegative");
  require(L2 <= L1, "metric_constants: L2 must not exceed L1");

  Eigen::SelfAdjointEigenSolver<Matrix> eig(K, Eigen::EigenvaluesOnly);
  MetricParams p;
  p.K = K;
  p.k = eig.eigenvalues().minCoeff();
  p.k_norm = eig.eigenvalues().cwiseAbs().maxCoeff();
  require(p.k > 0.0, "metric_constants: K must be positive-definite");
  const double m = std::min(1.0, p.k);
  require(L2 < m / 19.0, "metric_constants: L2 must be strictly below min(1, k)/19");

  p.L1 = L1;
  p.L2 = L2;
  p.R = R;
  p.theta = 2.0 * std::max(p.k_norm + L1, 1.0);
  p.eta = 0.5 * m;
  p.lambda = 0.25 * m;
  p.r0 = (p.theta + 1.0) * R;
  p.kappa2 = ((m - 19.0 * L2) * p.k) /
             (8.0 * std::max(1.0 - L2, p.k - L2) * std::max(1.0, p.k_norm));
  return p;
}

MetricTable MetricTable::build(const MetricParams& params, double quad_tol, int n_smooth,
                               int grid_points) {
  require(quad_tol > 0.0, "build_metric: quad_tol must be positive");
  require(n_smooth >= 0, "build_metric: n_smooth must be nonnegative (0 selects the limit)");
  require(grid_points >= 8, "build_metric: grid needs at least 8 points");
  require(params.R >= 0.0 && std::isfinite(params.R), "build_metric: R must be finite");

  MetricTable t;
  t.params_ = params;
  t.quad_tol_ = quad_tol;
  t.n_smooth_ = n_smooth;
  t.C2_ = params.theta + std::numbers::sqrt2;

  if (params.R == 0.0) {
    // Synchronous coupling contracts G at rate kappa2 everywhere; sqrt(G) then
    // decays at kappa2/2 and dominates sqrt(lambda) |z - z'|.
    t.degenerate_ = true;
    t.kappa_ = 0.5 * params.kappa2;
    t.kappa_outer_ = t.kappa_;
    t.kappa_mixed_ = t.kappa_;
    t.C1_ = 1.0 / std::sqrt(params.lambda);
    t.C2_ = std::sqrt(0.5 * params.theta);
    return t;
  }

  const double theta = params.theta;
  const auto phi = [theta](double u) { return std::exp(-theta * u * u / 8.0); };
  t.r_end_ = params.r0 + (n_smooth > 0 ? 1.0 / n_smooth : 0.0);
  const std::size_t n = static_cast<std::size_t>(grid_points);
  const double h = t.r_end_ / static_cast<double>(n - 1);
  const double cell_tol = quad_tol / static_cast<double>(n);
  t.step_ = h;

  t.grid_.resize(n);
  for (std::size_t i = 0; i < n; ++i) t.grid_[i] = h * static_cast<double>(i);
  t.grid_.back() = t.r_end_;

  // Phi at the nodes, then inside a cell by integrating from its left node.
  t.Phi_.assign(n, 0.0);
  for (std::size_t i = 1; i < n; ++i)
    t.Phi_[i] = t.Phi_[i - 1] + adaptive_simpson(phi, t.grid_[i - 1], t.grid_[i], cell_tol);
  const auto cell_of = [&](double u) {
    return std::min(n - 2, static_cast<std::size_t>(std::max(0.0, u / h)));
  };
  const auto Phi_at = [&](double u) {
    const std::size_t i = cell_of(u);
    return t.Phi_[i] + adaptive_simpson(phi, t.grid_[i], u, cell_tol);
  };

  const auto ratio = [&](double u) { return Phi_at(u) / phi(u); };
  const auto quad_part = [&](double u) { return theta * u * u / phi(u); };
  const auto const_part = [&](double u) { return 4.0 / phi(u); };

  std::vector<double> J1(n, 0.0), A(n, 0.0), B(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    const double a = t.grid_[i - 1], b = t.grid_[i];
    J1[i] = J1[i - 1] + adaptive_simpson(ratio, a, b, cell_tol);
    A[i] = A[i - 1] + adaptive_simpson(quad_part, a, b, cell_tol);
    B[i] = B[i - 1] + adaptive_simpson(const_part, a, b, cell_tol);
  }

  const double k1 = 0.5 / J1.back();
  const double I2 = (1.0 + 0.5 * k1) * A.back() + B.back();
  const double eps = std::min(0.5 / I2, 4.0 / (9.0 * params.R));
  t.kappa1_ = k1;
  t.epsilon_ = eps;

  t.g_.assign(n, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    t.g_[i] = 1.0 - 0.5 * k1 * J1[i] - 0.5 * eps * ((1.0 + 0.5 * k1) * A[i] + B[i]);
  const auto g_at = [&](double u) {
    const std::size_t i = cell_of(u);
    const double a = t.grid_[i];
    if (u == a) return t.g_[i];
    const double j1 = adaptive_simpson(ratio, a, u, cell_tol);
    const double aa = adaptive_simpson(quad_part, a, u, cell_tol);
    const double bb = adaptive_simpson(const_part, a, u, cell_tol);
    return t.g_[i] - 0.5 * k1 * j1 - 0.5 * eps * ((1.0 + 0.5 * k1) * aa + bb);
  };
  const auto f_integrand = [&](double u) { return phi(u) * g_at(u); };

  t.f_.assign(n, 0.0);
  t.fprime_.assign(n, 0.0);
  t.fprime_[0] = t.g_[0];
  for (std::size_t i = 1; i < n; ++i) {
    t.f_[i] = t.f_[i - 1] + adaptive_simpson(f_integrand, t.grid_[i - 1], t.grid_[i], cell_tol);
    t.fprime_[i] = phi(t.grid_[i]) * t.g_[i];
  }

  const double Phi_r0 = t.Phi(params.r0);
  const double Phi_end = t.Phi_.back();
  const double lr2e = params.lambda * params.R * params.R * eps;
  t.kappa_outer_ = lr2e * params.kappa2 / (lr2e + 2.0 * Phi_end);
  t.kappa_mixed_ = 1.0 / (4.0 + 6.0 * eps * params.R);
  t.kappa_ = std::min({k1, t.kappa_outer_, t.kappa_mixed_});
  t.C1_ = std::numbers::sqrt2 *
          std::max(2.0 * params.r0 / Phi_r0, 1.0 / (params.lambda * eps * params.R));
  return t;
}

double MetricTable::phi(double r) const {
  return std::exp(-params_.theta * r * r / 8.0);
}

double MetricTable::hermite(const std::vector<double>& y, const std::vector<double>& dy,
                            double r) const {
  const std::size_t n = grid_.size();
  const std::size_t i =
      std::min(n - 2, static_cast<std::size_t>(std::max(0.0, r / step_)));
  const double h = grid_[i + 1] - grid_[i];
  const double s = (r - grid_[i]) / h;
  const double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * y[i] + (s3 - 2 * s2 + s) * h * dy[i] +
         (-2 * s3 + 3 * s2) * y[i + 1] + (s3 - s2) * h * dy[i + 1];
}

double MetricTable::Phi(double r) const {
  require(r >= 0.0, "Phi: r must be nonnegative");
  const auto phi_fn = [this](double u) { return phi(u); };
  if (degenerate_ || grid_.empty()) return adaptive_simpson(phi_fn, 0.0, r, quad_tol_);
  if (r >= r_end_) return Phi_.back() + adaptive_simpson(phi_fn, r_end_, r, quad_tol_);
  const std::size_t i =
      std::min(grid_.size() - 2, static_cast<std::size_t>(std::max(0.0, r / step_)));
  return Phi_[i] + adaptive_simpson(phi_fn, grid_[i], r, quad_tol_ / grid_.size());
}

double MetricTable::g(double r) const {
  if (degenerate_ || grid_.empty()) return 1.0;
  if (r >= r_end_) return g_.back();
  const std::size_t i =
      std::min(grid_.size() - 2, static_cast<std::size_t>(std::max(0.0, r / step_)));
  const double s = (r - grid_[i]) / (grid_[i + 1] - grid_[i]);
  return (1.0 - s) * g_[i] + s * g_[i + 1];
}

double MetricTable::f(double r) const {
  if (degenerate_ || grid_.empty()) return 0.0;
  if (r >= r_end_) return f_.back();
  return hermite(f_, fprime_, r);
}

double MetricTable::f_prime(double r) const {
  if (degenerate_ || grid_.empty() || r >= r_end_) return 0.0;
  return phi(r) * g(r);
}

double MetricTable::differential_residual(std::size_t i) const {
  require(!degenerate_ && i < grid_.size(), "differential_residual: index out of range");
  const std::size_t n = grid_.size();
  const double h = step_;
  const double r = grid_[i];
  double d1, d2;
  if (i == 0) {
    d1 = (-3 * f_[0] + 4 * f_[1] - f_[2]) / (2 * h);
    d2 = (2 * f_[0] - 5 * f_[1] + 4 * f_[2] - f_[3]) / (h * h);
  } else if (i + 1 == n) {
    d1 = (3 * f_[i] - 4 * f_[i - 1] + f_[i - 2]) / (2 * h);
    d2 = (2 * f_[i] - 5 * f_[i - 1] + 4 * f_[i - 2] - f_[i - 3]) / (h * h);
  } else {
    d1 = (f_[i + 1] - f_[i - 1]) / (2 * h);
    d2 = (f_[i + 1] - 2 * f_[i] + f_[i - 1]) / (h * h);
  }
  const double th = params_.theta;
  return 4.0 * d2 + th * d1 * r + kappa1_ * f_[i] +
         epsilon_ * ((1.0 + 0.5 * kappa1_) * th * r * r + 4.0);
}

nlohmann::json MetricTable::to_json(bool include_tables) const {
  nlohmann::json j;
  j["theta"] = params_.theta;
  j["eta"] = params_.eta;
  j["lambda"] = params_.lambda;
  j["r0"] = params_.r0;
  j["kappa2"] = params_.kappa2;
  j["k"] = params_.k;
  j["k_norm"] = params_.k_norm;
  j["L1"] = params_.L1;
  j["L2"] = params_.L2;
  j["R"] = params_.R;
  j["degenerate"] = degenerate_;
  j["n_smooth"] = n_smooth_;
  j["quad_tol"] = quad_tol_;
  j["r_end"] = r_end_;
  j["kappa1"] = kappa1_;
  j["epsilon"] = epsilon_;
  j["kappa"] = kappa_;
  j["kappa_outer"] = kappa_outer_;
  j["kappa_mixed"] = kappa_mixed_;
  j["C1"] = C1_;
  j["C2"] = C2_;
  if (include_tables && !degenerate_) {
    j["grid"] = grid_;
    j["Phi"] = Phi_;
    j["g"] = g_;
    j["f"] = f_;
  }
  return j;
}

double g_quadratic(const MetricParams& params, const Matrix& K, ConstRef dx, ConstRef dv) {
  require(dx.size() == K.rows() && dv.size() == K.rows(), "g_quadratic: dimension mismatch");
  return 0.5 * dx.dot(K * dx) + 0.5 * dv.squaredNorm() + params.eta * dx.dot(dv);
}

double metric_radius(const MetricParams& params, ConstRef z, ConstRef z2) {
  const auto d = params.dim();
  const StateVector dx = z.head(d) - z2.head(d);
  const StateVector dq = dx + (z.tail(d) - z2.tail(d));
  return params.theta * dx.norm() + dq.norm();
}

double rho_star(const MetricTable& table, const MetricParams& params, ConstRef z, ConstRef z2) {
  const auto d = params.dim();
  require(z.size() == 2 * d && z2.size() == 2 * d, "rho_star: states must have dimension 2d");
  const StateVector dx = z.head(d) - z2.head(d);
  const StateVector dv = z.tail(d) - z2.tail(d);
  const double G = g_quadratic(params, params.K, dx, dv);
  if (table.degenerate()) return std::sqrt(std::max(0.0, G));
  const double r = params.theta * dx.norm() + (dx + dv).norm();
  return table.epsilon() * G + table.f(r);
}

}  // namespace ness
