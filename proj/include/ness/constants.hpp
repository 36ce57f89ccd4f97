#pragma once

#include "ness/core.hpp"
#include "ness/metric.hpp"
#include "ness/models.hpp"

#include <nlohmann/json.hpp>

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace ness {

/// Dimension-free Harnack factor exp(alpha / (2 sigma^2 (alpha - 1)) (K^2 t + dist^2 / t)).
double harnack_factor(double K_w, double sigma, double alpha, double t, double dist);

struct HyperQuery {
  double alpha = 2.0;
  double beta = 3.0;
  double t = 0.0;
};

struct HypercontractivityBound {
  double t0 = 0.0;
  double bound = 0.0;
};

/// Time threshold 2 beta / (sigma^2 rho (alpha - 1)).
double hypercontractivity_time(double rho, double sigma, double alpha, double beta);

/// Bound on ||P_t||_{alpha -> beta} under the contraction-at-infinity assumption; t > t0.
HypercontractivityBound hypercontractivity_bound(double L, double rho, double R, double sigma,
                                                 int d, const HyperQuery& q);

/// norm_val^(gamma alpha - 1): bound on ||P_t||_{1 -> alpha} from
/// ||P_t||_{alpha -> (gamma alpha - 1)/(gamma - 1)} = norm_val.
double interpolate_norm(double alpha, double gamma_h, double norm_val);

/// Target exponent (gamma alpha - 1)/(gamma - 1) of the interpolation.
double interpolation_target(double alpha, double gamma_h);

struct LyapunovQuery {
  double delta = 0.125;
};

/// Bound on the double exponential moment of mu x mu, for delta in (0, rho/4).
double lyapunov_bound(double L, double rho, double R, int d, double delta);
inline double lyapunov_bound(double L, double rho, double R, int d, const LyapunovQuery& q) {
  return lyapunov_bound(L, rho, R, d, q.delta);
}

struct DefectiveLsi {
  double A = 0.0;
  double B = 0.0;
};

/// A and B of the defective LSI; A uses its L -> 0 limit 12/rho below 1e-12.
DefectiveLsi defective_lsi_constants(double L, double rho, double R, double sigma, int d);

struct PoincareResult {
  double R_star = 0.0;
  double sigma0 = 0.0;
  double C = 0.0;
  bool below_threshold = false;  // sigma < sigma0: the Poincare statement does not apply
};

PoincareResult poincare_constant(double L, double rho, double R, double sigma, int d,
                                 double alpha_ext, double sup_inner);

struct SupInner {
  double value = 0.0;
  StateVector argmax;
};

/// max of -x . b(x) over the ball |x| <= radius, by grid search (d <= 3)
/// refined with random sampling.
SupInner sup_inner_drift(const EllipticModel& model, double radius, int resolution = 201);

double lsi_constant(double A, double B, double C);

struct PerturbationBound {
  double t = 0.0;
  double bounded_part = 0.0;    // 2 M t
  double lipschitz_part = 0.0;  // C' (2M/t + L)
  double total = 0.0;           // bounded_part + lipschitz_part * dist
};

/// Oscillation bound for u_T. Without `t`, the total is minimized over
/// t in (0, t_max]: t* = min(sqrt(C' dist), t_max).
PerturbationBound perturbation_bound_elliptic(double M_phi, double L_phi, double C_prime,
                                              double dist, std::optional<double> t = std::nullopt,
                                              double t_max = std::numeric_limits<double>::infinity());

/// Lipschitz bound C1 C2 L_phi / kappa for the kinetic value function.
double kinetic_value_lip_bound(const MetricTable& table, double L_phi);

/// Everything the elliptic constants calculator reports.
struct ConstantsReport {
  double L = 0.0, rho = 0.0, R = 0.0, sigma = 0.0, alpha_ext = 1.0;
  int d = 1;
  double A = 0.0, B = 0.0, C = 0.0;
  double sigma0 = 0.0, R_star = 0.0, sup_inner = 0.0;
  double t0 = 0.0;       // for the default exponents alpha = 2, beta = 3
  double hyper_bound = 0.0;  // at t = 2 t0
  double C_LS = 0.0;
  bool below_sigma0 = false;
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
};

ConstantsReport elliptic_constants_report(double L, double rho, double R, double sigma, int d,
                                          double alpha_ext, double sup_inner);

}  // namespace ness
