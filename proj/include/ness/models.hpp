#pragma once

#include "ness/core.hpp"
#include "ness/rng.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace ness {

/// Elliptic SDE dX = b(X) dt + sigma dB together with the structural constants
/// the contraction and perturbation results are stated in.
///
/// The one-sided condition reads
///   (b(x) - b(y)) . (x - y) <= -rho |x - y|^2   if |x - y| >= R,
///                             <=  L  |x - y|^2   otherwise.
/// All constants are declared by the user; see probe_one_sided_condition for
/// the sampled check.
struct EllipticModel {
  std::string name;
  int dim = 1;
  VectorField drift;

  // Optional split b = b0 + b1 and reference measure data.
  VectorField drift0;
  VectorField drift1;
  VectorField grad_log_mu0;
  ScalarField div_drift1;   // closed-form divergence of b1, if known
  ScalarField phi_bounded;  // bounded part of phi; the remainder is the Lipschitz part

  double sigma = 1.4142135623730951;
  double rho = 1.0;
  double L = 0.0;
  double R = 0.0;
  std::optional<double> harnack_constant;  // K in (x-y).(b(x)-b(y)) <= K|x-y|; defaults to L*R

  double M_phi = 0.0;
  double L_phi = 0.0;
  double C0 = 0.0;

  /// Throws InvalidInput when sigma, rho, the dimension or the drift are unusable.
  void validate() const;

  double wang_constant() const { return harnack_constant.value_or(L * R); }
  bool has_split() const { return static_cast<bool>(drift0) && static_cast<bool>(drift1); }
};

/// Kinetic Langevin model
///   dX = V dt,
///   dV = (-grad U(X) + G(X, V) - gamma V) dt + sqrt(2 gamma) dB,
/// with the linear decomposition -grad U(x) + G(x, -v) = -K x + g(x, v).
struct KineticModel {
  std::string name;
  int dim = 1;
  double gamma = 1.0;
  VectorField grad_U;
  PhaseField forcing;   // G(x, v); empty means zero
  Matrix K;
  PhaseField residual;  // g(x, v); empty means zero
  double R = 0.0;
  double L1 = 0.0;
  double L2 = 0.0;
  double L_phi = 0.0;
  double C0 = 0.0;

  void validate() const;

  /// Smallest eigenvalue of K.
  double k_min() const;
  /// Operator norm of K.
  double k_norm() const;
  /// 19 max(1, gamma) L2 <= min(1, k).
  bool admissible() const;

  /// -K x + g(x, v), the force entering the coupled system.
  void linear_force(ConstRef x, ConstRef v, OutRef out) const;
};

/// A kinetic model rewritten with unit friction. The normalized state is
/// (gamma x, v) and normalized time is gamma t; K becomes K / gamma^2.
struct NormalizedKineticModel {
  KineticModel model;  // gamma == 1
  double gamma_scale = 1.0;

  StateVector to_normalized(const StateVector& z) const;
  StateVector from_normalized(const StateVector& z) const;
  double to_normalized_time(double t) const { return gamma_scale * t; }
  double from_normalized_time(double s) const { return s / gamma_scale; }
};

struct DerivedEllipticFields {
  VectorField b_tilde;      // 2 grad ln mu0 - b
  ScalarField phi;          // -div b1 + b1 . grad ln mu0
  ScalarField phi_bounded;  // phi_1
  ScalarField phi_lipschitz;  // phi_2 = phi - phi_1
};

struct CompetitionKernel {
  int p = 1;
  std::function<double(ConstRef x1, ConstRef x2)> value;
  std::function<void(ConstRef x1, ConstRef x2, OutRef out)> grad1;  // grad wrt first block
  std::function<void(ConstRef x1, ConstRef x2, OutRef out)> grad2;  // grad wrt second block
  double grad_bound = 0.0;
  double hess_bound = 0.0;
};

// -- evaluation ------------------------------------------------------------

StateVector eval_drift(const EllipticModel& model, const StateVector& state);

/// Full kinetic drift (v, -grad U + G - gamma v) for z = (x, v).
StateVector eval_drift(const KineticModel& model, const StateVector& state);

DerivedEllipticFields derive_elliptic_fields(const EllipticModel& model, double fd_step = 1e-5);

/// Central-difference divergence of `field` at x.
double fd_divergence(const VectorField& field, const StateVector& x, double h = 1e-5);

/// Drift b_mu of the competition model for the empirical measure of `particles`.
VectorField make_competition_drift(const CompetitionKernel& kernel,
                                   const std::vector<StateVector>& particles);

/// Largest deviation between supplied and central-difference kernel gradients.
double competition_gradient_error(const CompetitionKernel& kernel,
                                  const std::vector<StateVector>& points, double h = 1e-5);

NormalizedKineticModel normalize_kinetic(const KineticModel& model);

// -- sampled structural checks ----------------------------------------------

/// Draws the index-th sample point from a noise stream.
using StateSampler = std::function<StateVector(std::uint64_t index, const NoiseStream& noise)>;

StateSampler uniform_box_sampler(int dim, double half_width);
StateSampler gaussian_sampler(int dim, double scale);

struct OneSidedReport {
  std::size_t n_pairs = 0;
  std::size_t n_far = 0;   // pairs with |x - y| >= R
  std::size_t n_near = 0;
  double max_ratio_far = -std::numeric_limits<double>::infinity();
  double max_ratio_near = -std::numeric_limits<double>::infinity();
  double min_ratio = std::numeric_limits<double>::infinity();
  StateVector worst_far_x, worst_far_y;
  bool far_violation = false;   // max_ratio_far > -rho
  bool near_violation = false;  // max_ratio_near > L
  bool violated() const { return far_violation || near_violation; }
};

/// Samples pairs and evaluates (b(x) - b(y)).(x - y) / |x - y|^2 against the
/// declared (rho, L, R).
OneSidedReport probe_one_sided_condition(const VectorField& drift, int dim, double rho, double L,
                                         double R, const StateSampler& sampler,
                                         std::size_t n_pairs, std::uint64_t seed);

OneSidedReport probe_one_sided_condition(const EllipticModel& model, const StateSampler& sampler,
                                         std::size_t n_pairs, std::uint64_t seed);

/// Largest |b(x) - b0(x) - b1(x)| over the points.
double split_residual(const EllipticModel& model, const std::vector<StateVector>& points);

/// Largest |(-grad U(x) + G(x, -v)) - (-K x + g(x, v))| over the points z = (x, v).
double kinetic_decomposition_residual(const KineticModel& model,
                                      const std::vector<StateVector>& points);

}  // namespace ness
