#pragma once

#include "ness/core.hpp"

#include <nlohmann/json.hpp>

#include <limits>
#include <vector>

namespace ness {

/// Closed-form constants of the kinetic coupling metric.
struct MetricParams {
  Matrix K;
  double k = 0.0;       // smallest eigenvalue of K
  double k_norm = 0.0;  // operator norm |K|
  double L1 = 0.0;
  double L2 = 0.0;
  double R = 0.0;

  double theta = 0.0;   // 2 max(|K| + L1, 1)
  double eta = 0.0;     // min(1, k) / 2
  double lambda = 0.0;  // min(1, k) / 4
  double r0 = 0.0;      // (theta + 1) R
  double kappa2 = 0.0;  // contraction rate of G outside the ball

  int dim() const { return static_cast<int>(K.rows()); }
};

/// Computes MetricParams; throws InvalidInput unless K is symmetric
/// positive-definite, L2 <= L1 and L2 < min(1, k) / 19.
MetricParams metric_constants(const Matrix& K, double L1, double L2, double R);

/// Tabulated profile functions of the metric plus its scalar constants.
///
/// `n_smooth == 0` selects the limit objects (threshold r0); a finite n uses
/// the threshold r0 + 1/n.
class MetricTable {
 public:
  static constexpr int kDefaultGridPoints = 4096;

  /// Only a finite positive R is supported by the quadrature construction.
  /// R == 0 gives the synchronous-coupling metric sqrt(G).
  static MetricTable build(const MetricParams& params, double quad_tol = 1e-10,
                           int n_smooth = 0, int grid_points = kDefaultGridPoints);

  // profile functions
  double phi(double r) const;      // exp(-theta r^2 / 8)
  double Phi(double r) const;      // integral of phi on [0, r]
  double g(double r) const;
  double f(double r) const;
  double f_prime(double r) const;  // phi(r) g(r) on [0, r_end), 0 beyond

  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& Phi_values() const { return Phi_; }
  const std::vector<double>& g_values() const { return g_; }
  const std::vector<double>& f_values() const { return f_; }

  double r_end() const { return r_end_; }  // r0 + 1/n, or r0 for the limit
  double kappa1() const { return kappa1_; }
  double epsilon() const { return epsilon_; }
  double kappa() const { return kappa_; }
  /// The three candidates whose minimum is kappa.
  double kappa_inner() const { return kappa1_; }
  double kappa_outer() const { return kappa_outer_; }
  double kappa_mixed() const { return kappa_mixed_; }
  double C1() const { return C1_; }
  double C2() const { return C2_; }
  double quad_tol() const { return quad_tol_; }
  int n_smooth() const { return n_smooth_; }
  bool degenerate() const { return degenerate_; }
  const MetricParams& params() const { return params_; }

  /// Residual 4f'' + theta r f' + kappa1 f + eps((1 + kappa1/2) theta r^2 + 4) at grid
  /// node i, from second differences of the table.
  double differential_residual(std::size_t i) const;

  nlohmann::json to_json(bool include_tables = true) const;

 private:
  MetricParams params_;
  double quad_tol_ = 0.0;
  int n_smooth_ = 0;
  bool degenerate_ = false;
  double r_end_ = 0.0;
  double kappa1_ = 0.0;
  double epsilon_ = 0.0;
  double kappa_ = 0.0;
  double kappa_outer_ = 0.0;
  double kappa_mixed_ = 0.0;
  double C1_ = 0.0;
  double C2_ = 0.0;
  double step_ = 0.0;
  std::vector<double> grid_, Phi_, g_, f_, fprime_;

  double hermite(const std::vector<double>& y, const std::vector<double>& dy, double r) const;
};

/// 1/2 dx^T K dx + 1/2 |dv|^2 + eta dx . dv.
double g_quadratic(const MetricParams& params, const Matrix& K, ConstRef dx, ConstRef dv);

/// epsilon G(z, z') + f(theta |dx| + |dq|) with dq = dx + dv, for z = (x, v).
double rho_star(const MetricTable& table, const MetricParams& params, ConstRef z, ConstRef z2);

/// theta |dx| + |dx + dv|.
double metric_radius(const MetricParams& params, ConstRef z, ConstRef z2);

}  // namespace ness
