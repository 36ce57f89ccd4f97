#pragma once

#include "ness/constants.hpp"
#include "ness/core.hpp"
#include "ness/metric.hpp"
#include "ness/models.hpp"
#include "ness/simulate.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ness {

/// Monte Carlo output. `pass` is only set when a bound is attached.
struct EstimateResult {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  double z = 3.0;  // half-width multiplier
  std::optional<double> bound;
  std::optional<bool> pass;

  double half_width() const { return z * std_error; }
  /// Attaches an upper bound: pass iff value <= bound + half_width.
  EstimateResult& check_upper(double b);
  nlohmann::json to_json() const;
};

/// Mean and standard error with a fixed summation order.
EstimateResult mean_estimate(const std::vector<double>& samples, std::uint64_t seed = 0);

struct RateFit {
  double C = 0.0;      // fitted prefactor
  double kappa = 0.0;  // fitted rate
  double residual = 0.0;  // RMS of the log-linear residuals
  double t_begin = 0.0, t_end = 0.0;
  std::size_t n_points = 0;
  nlohmann::json to_json() const;
};

/// Least squares ln m = ln C - kappa t. Needs >= 3 points, all m > 0.
RateFit fit_exponential_rate(const std::vector<double>& t, const std::vector<double>& m);

// -- couplings of ensembles ---------------------------------------------------

enum class CouplingKind { kSynchronous, kReflection };

/// Initial pair for path i.
using PairSampler =
    std::function<std::pair<StateVector, StateVector>(std::uint64_t i, const NoiseStream& noise)>;

PairSampler fixed_pair(const StateVector& x, const StateVector& y);

struct ContractionCurve {
  std::vector<double> times;
  std::vector<double> mean;       // E|Z_t - Z'_t|
  std::vector<double> std_error;
  std::vector<double> coalesced;  // fraction merged by t
  RateFit fit;
  // kinetic only
  double mean_rho0 = 0.0;  // E rho_*(Z_0, Z'_0)
  std::vector<double> envelope;
  double worst_envelope_ratio = 0.0;  // max mean / envelope
  bool envelope_ok = true;
  std::size_t n_paths = 0;
  nlohmann::json to_json() const;
};

struct FitWindow {
  double t_begin = 0.0;
  double t_end = std::numeric_limits<double>::infinity();
};

/// Mean coupling distance on the recorded grid of `cfg` and an exponential fit
/// over the window (points with zero mean are skipped).
ContractionCurve w1_contraction(const EllipticModel& model, CouplingKind kind,
                                const PairSampler& init, const SimConfig& cfg, std::size_t n_paths,
                                FitWindow window = {});

/// Kinetic version; also checks mean <= (1 + slack) C1 e^{-kappa t} E rho_*(Z0, Z0').
ContractionCurve w1_contraction(const NormalizedKineticModel& model, const MetricTable& table,
                                const MetricParams& params, const PairSampler& init,
                                const SimConfig& cfg, std::size_t n_paths, double slack = 0.10,
                                FitWindow window = {});

struct CoalescenceCurve {
  std::vector<double> times;
  std::vector<double> prob;  // P[X_t != Y_t]
  std::vector<double> std_error;
  RateFit fit;  // rate fitted to t * prob; C is the smallest prefactor bounding the window
  bool fit_bounds = false;  // a decaying envelope C e^{-kappa t}/t exists (kappa > 0)
  std::size_t n_paths = 0;
  nlohmann::json to_json() const;
};

CoalescenceCurve coalescence_probability(const EllipticModel& model, const StateVector& x0,
                                         const StateVector& y0, const SimConfig& cfg,
                                         std::size_t n_paths, FitWindow window = {});

/// Empirical stand-ins for the constants of E|X_t - Y_t| <= C e^{-kappa t}|x - y| and
/// P[X_t != Y_t] <= C e^{-kappa t}|x - y| / t under the reflection coupling:
/// kappa from a log-linear fit of the mean distance, C the smallest prefactor
/// dominating both curves on the grid.
struct ReflectionConstants {
  double C = 0.0;
  double kappa = 0.0;
  double C_prime() const { return C / kappa; }
  ContractionCurve distance;
  CoalescenceCurve coalescence;
};

ReflectionConstants fit_reflection_constants(const EllipticModel& model, const StateVector& x0,
                                             const StateVector& y0, const SimConfig& cfg,
                                             std::size_t n_paths, FitWindow window = {});

// -- ergodic sampling ---------------------------------------------------------

struct ErgodicConfig {
  double dt = 1e-3;
  double burn_in = -1.0;  // default 10 / rho
  double thinning = -1.0; // default 1 / rho
  std::size_t n_chains = 64;
  std::size_t samples_per_chain = 100;
  std::uint64_t seed = 0;
};

/// Samples from independent chains started at x0 after burn-in, with thinning.
/// Returns chain-major samples.
std::vector<StateVector> ergodic_samples(const EllipticModel& model, const StateVector& x0,
                                         const ErgodicConfig& cfg, std::uint64_t stream_tag = 0);

/// E_{mu x mu} exp(delta |x - y|^2) from pairs of independent chains; the
/// standard error is taken across chain means.
EstimateResult lyapunov_expectation(const EllipticModel& model, double delta,
                                    const ErgodicConfig& cfg);

// -- Harnack -----------------------------------------------------------------

struct HarnackResult {
  double lhs = 0.0, lhs_se = 0.0;  // (P_t f(y))^alpha
  double rhs = 0.0, rhs_se = 0.0;  // factor * P_t f^alpha (x)
  double factor = 1.0;
  bool pass = false;
  // Girsanov route through harnack_pair
  EstimateResult girsanov_Ptf_y;  // E[R f(X_T)]
  EstimateResult weight_mean;     // E[R]
  double merge_fraction = 0.0;
  nlohmann::json to_json() const;
};

HarnackResult harnack_check(const EllipticModel& model, const ScalarField& f, double alpha,
                            const StateVector& x, const StateVector& y, const SimConfig& cfg,
                            std::size_t n_paths, bool girsanov = true);

// -- Feynman-Kac ---------------------------------------------------------------

/// dX = drift dt + sigma dB with potential phi; h_T(x) = E exp(int_0^T phi(X_s) ds).
struct FeynmanKacSystem {
  int dim = 1;
  VectorField drift;
  ScalarField phi;
  double sigma = 1.4142135623730951;
};

/// The system with drift b_tilde and potential phi of a split elliptic model.
FeynmanKacSystem elliptic_fk_system(const EllipticModel& model);

/// Kinetic system: dX = -V dt, dV = (-gamma V + grad U - G) dt + sqrt(2 gamma) dB,
/// potential phi(x, v).
struct KineticFeynmanKacSystem {
  KineticModel model;
  PhaseScalar phi;
};

struct FeynmanKacResult {
  EstimateResult h;
  double max_exponent = 0.0;
  double min_exponent = 0.0;
  nlohmann::json to_json() const;
};

/// Left Riemann sum of phi along the Euler path; throws SimulationError when a
/// weight overflows.
FeynmanKacResult feynman_kac_h(const FeynmanKacSystem& sys, const StateVector& x, double T,
                               std::size_t n_paths, const SimConfig& cfg);
FeynmanKacResult feynman_kac_h(const KineticFeynmanKacSystem& sys, const StateVector& z, double T,
                               std::size_t n_paths, const SimConfig& cfg);

struct LipschitzScanReport {
  std::vector<StateVector> points;
  std::vector<double> u, u_se;
  double worst_margin = std::numeric_limits<double>::infinity();  // bound + 3se - |du|
  std::size_t worst_i = 0, worst_j = 0;
  bool pass = true;
  nlohmann::json to_json() const;
};

struct EllipticBoundInputs {
  double M_phi = 0.0;
  double L_phi = 0.0;
  double C_prime = 1.0;
};

/// u_T = ln h_T on the points; every pair is checked against the bounded +
/// Lipschitz bound with delta-method errors.
LipschitzScanReport u_lipschitz_scan(const FeynmanKacSystem& sys,
                                     const std::vector<StateVector>& points, double T,
                                     std::size_t n_paths, const SimConfig& cfg,
                                     const EllipticBoundInputs& bound);

/// Kinetic version against lip_bound |z - z'|.
LipschitzScanReport u_lipschitz_scan(const KineticFeynmanKacSystem& sys,
                                     const std::vector<StateVector>& points, double T,
                                     std::size_t n_paths, const SimConfig& cfg, double lip_bound);

struct MollifiedSplit {
  std::vector<double> smooth;  // u * g^eps on the grid
  double lipschitz = 0.0;      // of the smooth part
  double remainder_sup = 0.0;  // sup |u - u * g^eps|
};

/// Gaussian convolution with variance eps on a uniform 1-d grid of spacing h;
/// the ends are extended linearly.
MollifiedSplit mollified_split(const std::vector<double>& u, double h, double eps);

// -- functional inequalities --------------------------------------------------

struct HyperProbeResult {
  double ratio = 0.0;            // plug-in ||P_t f||_beta / ||f||_alpha
  double ratio_jackknife = 0.0;  // inner-sample bias corrected
  double std_error = 0.0;
  std::optional<double> bound;   // closed-form bound when t > t0
  std::optional<bool> pass;
  bool inner_bias_warning = false;
  std::size_t n_outer = 0, n_inner = 0;
  nlohmann::json to_json() const;
};

/// Outer samples y from the ergodic chains, inner Euler paths for P_t f(y).
HyperProbeResult hypercontractivity_probe(const EllipticModel& model, const ScalarField& f,
                                          double alpha, double beta, double t,
                                          const ErgodicConfig& outer, std::size_t n_inner,
                                          double inner_dt);

struct DefectiveLsiResult {
  double lhs = 0.0, lhs_se = 0.0;  // int F ln F
  double rhs = 0.0, rhs_se = 0.0;  // A int |grad F|^2 / F + B
  bool pass = false;
  nlohmann::json to_json() const;
};

/// F = f / mean(f) over the ergodic sample.
DefectiveLsiResult defective_lsi_check(const EllipticModel& model, const ScalarField& f,
                                       const VectorField& grad_f, double A, double B,
                                       const ErgodicConfig& cfg);

// -- McKean-Vlasov ---------------------------------------------------------------

struct MckvConfig {
  double lambda = 0.05;
  std::size_t n_particles = 512;
  int n_iters = 6;
  double dt = 1e-2;
  double T_inner = 5.0;      // time each frozen-measure system is run
  int w2_points = 256;
  int w2_draws = 8;
  double condition_constant = 3.0;  // declared C' of the decay condition
  std::uint64_t seed = 0;
};

struct MckvResult {
  std::vector<StateVector> particles;
  std::vector<double> w2_successive;  // W2(mu_k, mu_{k+1})
  std::vector<double> w2_std_error;
  double fluctuation_scale = 0.0;     // subsample^{-1/4}
  bool decreasing = false;
  double condition_ratio = 0.0;       // max |b(x)|(1 + |x|)/(1 + mean|y|)
  bool condition_pass = false;
  nlohmann::json to_json() const;
};

/// Picard iteration on the empirical measure with drift -grad V - lambda b_mu.
MckvResult mckv_fixed_point(const CompetitionKernel& kernel, const VectorField& grad_V,
                            const std::vector<StateVector>& initial, const MckvConfig& cfg);

}  // namespace ness
