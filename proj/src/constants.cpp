#include "ness/constants.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ness {

double harnack_factor(double K_w, double sigma, double alpha, double t, double dist) {
  require(alpha > 1.0, "harnack_factor: alpha must exceed 1");
  require(t > 0.0, "harnack_factor: t must be positive");
  require(sigma > 0.0 && K_w >= 0.0 && dist >= 0.0, "harnack_factor: invalid inputs");
  const double c = alpha / (2.0 * sigma * sigma * (alpha - 1.0));
  return std::exp(c * (K_w * K_w * t + dist * dist / t));
}

double hypercontractivity_time(double rho, double sigma, double alpha, double beta) {
  require(beta > alpha && alpha > 1.0, "hypercontractivity: need beta > alpha > 1");
  require(rho > 0.0 && sigma > 0.0, "hypercontractivity: rho and sigma must be positive");
  return 2.0 * beta / (sigma * sigma * rho * (alpha - 1.0));
}

HypercontractivityBound hypercontractivity_bound(double L, double rho, double R, double sigma,
                                                 int d, const HyperQuery& q) {
  require(d >= 1 && L >= 0.0 && R >= 0.0, "hypercontractivity_bound: invalid model constants");
  HypercontractivityBound out;
  out.t0 = hypercontractivity_time(rho, sigma, q.alpha, q.beta);
  require(q.t > out.t0, "hypercontractivity_bound: t must exceed t0");
  const double dd = static_cast<double>(d);
  const double lin = q.beta * L * R * q.t / (2.0 * sigma * sigma * (q.alpha - 1.0));
  const double tail = 0.125 * std::max((1.0 + 4.0 * dd) / (q.t / out.t0 - 1.0), 2.0 * rho * R * R);
  out.bound = (1.0 + 4.0 * dd + 2.0 * (L + rho) * R * R) * std::exp(lin + tail);
  return out;
}

double interpolate_norm(double alpha, double gamma_h, double norm_val) {
  require(alpha > 1.0 && gamma_h > 1.0, "interpolate_norm: alpha and gamma must exceed 1");
  return std::pow(norm_val, gamma_h * alpha - 1.0);
}

double interpolation_target(double alpha, double gamma_h) {
  require(alpha > 1.0 && gamma_h > 1.0, "interpolation_target: alpha and gamma must exceed 1");
  return (gamma_h * alpha - 1.0) / (gamma_h - 1.0);
}

double lyapunov_bound(double L, double rho, double R, int d, double delta) {
  require(rho > 0.0, "lyapunov_bound: rho must be positive");
  require(delta > 0.0 && delta < 0.25 * rho, "lyapunov_bound: delta must lie in (0, rho/4)");
  const double dd = static_cast<double>(d);
  const double pre = 1.0 + 4.0 * dd + (2.0 * L + 8.0 * delta) * R * R;
  return pre * std::exp(delta * std::max((1.0 + 4.0 * dd) / (2.0 * (rho - 4.0 * delta)), R * R));
}

DefectiveLsi defective_lsi_constants(double L, double rho, double R, double sigma, int d) {
  require(rho > 0.0 && sigma > 0.0 && L >= 0.0 && R >= 0.0 && d >= 1,
          "defective_lsi_constants: invalid inputs");
  const double s2 = sigma * sigma;
  const double dd = static_cast<double>(d);
  DefectiveLsi out;
  const double x = 24.0 * L / (s2 * rho);
  // sigma^2/(2L) (e^x - 1) = (12/rho) expm1(x)/x
  out.A = L < 1e-12 ? 12.0 / rho : s2 / (2.0 * L) * std::expm1(x);
  out.B = 6.0 * std::log(1.0 + 4.0 * dd + 2.0 * (L + rho) * R * R) + 108.0 * L * R / (s2 * s2 * rho) +
          0.75 * std::max(1.0 + 4.0 * dd, 2.0 * rho * R * R);
  return out;
}

PoincareResult poincare_constant(double L, double rho, double R, double sigma, int d,
                                 double alpha_ext, double sup_inner) {
  require(rho > 0.0 && sigma > 0.0 && d >= 1 && R >= 0.0 && L >= 0.0,
          "poincare_constant: invalid inputs");
  const double dd = static_cast<double>(d);
  PoincareResult out;
  out.R_star = R * std::pow(2.0 + 2.0 * L / rho, 1.0 / dd);
  const double r2 = out.R_star * out.R_star;
  out.sigma0 = (2.0 * L + rho) * ((2.0 * L + 0.5 * rho) * r2 + 2.0 * sup_inner) / (rho * dd);
  out.C = 4.0 * sigma / rho * (1.0 + alpha_ext * (2.0 * L + rho) * r2 / (4.0 * dd * sigma));
  out.below_threshold = sigma < out.sigma0;
  return out;
}

SupInner sup_inner_drift(const EllipticModel& model, double radius, int resolution) {
  require(radius >= 0.0, "sup_inner_drift: radius must be nonnegative");
  require(resolution >= 3, "sup_inner_drift: resolution must be at least 3");
  const int d = model.dim;
  SupInner best;
  best.argmax = StateVector::Zero(d);
  StateVector b(d);
  const auto score = [&](const StateVector& x) {
    model.drift(x, b);
    return -x.dot(b);
  };
  best.value = score(best.argmax);
  if (radius == 0.0) return best;

  const auto consider = [&](const StateVector& x) {
    if (x.norm() > radius) return;
    const double s = score(x);
    if (s > best.value) {
      best.value = s;
      best.argmax = x;
    }
  };

  if (d <= 3) {
    // Tensor grid; coarser per axis as d grows.
    const int per_axis = d == 1 ? resolution : d == 2 ? std::max(3, resolution / 2)
                                                      : std::max(3, resolution / 6);
    std::vector<int> idx(d, 0);
    StateVector x(d);
    for (;;) {
      for (int k = 0; k < d; ++k)
        x[k] = -radius + 2.0 * radius * idx[k] / static_cast<double>(per_axis - 1);
      consider(x);
      int k = 0;
      while (k < d && ++idx[k] == per_axis) idx[k++] = 0;
      if (k == d) break;
    }
    // The sphere itself, where radial maxima live.
    if (d == 2) {
      for (int i = 0; i < 8 * resolution; ++i) {
        const double a = 2.0 * M_PI * i / (8.0 * resolution);
        x << radius * std::cos(a), radius * std::sin(a);
        consider(x);
      }
    } else if (d == 1) {
      x[0] = radius;
      consider(x);
      x[0] = -radius;
      consider(x);
    }
  }

  // Random points in the ball and on its boundary.
  const NoiseStream noise(0x5eedULL + static_cast<std::uint64_t>(d));
  const int n_random = 20000;
  StateVector x(d);
  for (int i = 0; i < n_random; ++i) {
    noise.normals(i, 0, NoiseStream::kExtra, std::span<double>(x.data(), d));
    const double u = noise.uniform(i, 0, NoiseStream::kExtra);
    const double scale = (i % 2 == 0) ? 1.0 : std::pow(u, 1.0 / d);
    x *= radius * scale / x.norm();
    consider(x);
  }

  // Local refinement around the best point by shrinking random perturbations.
  double step = radius / 20.0;
  for (int round = 0; round < 40; ++round, step *= 0.8) {
    for (int j = 0; j < 32; ++j) {
      noise.normals(n_random + round * 32 + j, 1, NoiseStream::kExtra,
                    std::span<double>(x.data(), d));
      StateVector y = best.argmax + step * x;
      if (y.norm() > radius) y *= radius / y.norm();
      consider(y);
    }
  }
  return best;
}

double lsi_constant(double A, double B, double C) {
  require(A >= 0.0 && B >= 0.0 && C >= 0.0, "lsi_constant: inputs must be nonnegative");
  return A + C * (B + 2.0) / 4.0;
}

PerturbationBound perturbation_bound_elliptic(double M_phi, double L_phi, double C_prime,
                                              double dist, std::optional<double> t,
                                              double t_max) {
  require(C_prime > 0.0, "perturbation_bound: C' must be positive");
  require(M_phi >= 0.0 && L_phi >= 0.0 && dist >= 0.0, "perturbation_bound: invalid inputs");
  PerturbationBound out;
  if (t) {
    require(*t > 0.0, "perturbation_bound: t must be positive");
    out.t = *t;
  } else if (M_phi == 0.0) {
    out.t = t_max;
  } else {
    out.t = std::min(std::sqrt(C_prime * dist), t_max);
  }
  if (out.t == 0.0) {
    // dist == 0: the bound collapses to 0 as t -> 0
    out.lipschitz_part = C_prime * L_phi;
    out.total = 0.0;
    return out;
  }
  out.bounded_part = 2.0 * M_phi * out.t;
  out.lipschitz_part =
      std::isinf(out.t) ? C_prime * L_phi : C_prime * (2.0 * M_phi / out.t + L_phi);
  out.total = (M_phi == 0.0 ? 0.0 : out.bounded_part) + out.lipschitz_part * dist;
  return out;
}

double kinetic_value_lip_bound(const MetricTable& table, double L_phi) {
  require(L_phi >= 0.0, "kinetic_value_lip_bound: L_phi must be nonnegative");
  return table.C1() * table.C2() * L_phi / table.kappa();
}

nlohmann::json ConstantsReport::to_json() const {
  nlohmann::json j;
  j["inputs"] = {{"L", L}, {"rho", rho}, {"R", R}, {"sigma", sigma}, {"d", d},
                 {"alpha_ext", alpha_ext}, {"sup_inner", sup_inner}};
  j["A"] = A;
  j["B"] = B;
  j["C"] = C;
  j["sigma0"] = sigma0;
  j["R_star"] = R_star;
  j["t0"] = t0;
  j["hyper_bound_at_2t0"] = hyper_bound;
  j["C_LS"] = C_LS;
  j["below_sigma0"] = below_sigma0;
  j["notes"] = notes;
  return j;
}

ConstantsReport elliptic_constants_report(double L, double rho, double R, double sigma, int d,
                                          double alpha_ext, double sup_inner) {
  ConstantsReport r;
  r.L = L;
  r.rho = rho;
  r.R = R;
  r.sigma = sigma;
  r.d = d;
  r.alpha_ext = alpha_ext;
  r.sup_inner = sup_inner;
  const DefectiveLsi ab = defective_lsi_constants(L, rho, R, sigma, d);
  r.A = ab.A;
  r.B = ab.B;
  const PoincareResult pc = poincare_constant(L, rho, R, sigma, d, alpha_ext, sup_inner);
  r.C = pc.C;
  r.sigma0 = pc.sigma0;
  r.R_star = pc.R_star;
  r.below_sigma0 = pc.below_threshold;
  HyperQuery q{2.0, 3.0, 0.0};
  r.t0 = hypercontractivity_time(rho, sigma, q.alpha, q.beta);
  q.t = 2.0 * r.t0;
  r.hyper_bound = hypercontractivity_bound(L, rho, R, sigma, d, q).bound;
  r.C_LS = lsi_constant(r.A, r.B, r.C);
  r.notes.push_back("alpha_ext is an external constant of the Poincare estimate; default 1");
  if (r.below_sigma0)
    r.notes.push_back("sigma < sigma0: the Poincare constant C is reported but not guaranteed");
  return r;
}

}  // namespace ness
