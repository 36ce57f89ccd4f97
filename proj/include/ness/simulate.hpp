#pragma once

#include "ness/core.hpp"
#include "ness/metric.hpp"
#include "ness/models.hpp"
#include "ness/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace ness {

struct SimConfig {
  double dt = 1e-3;
  double T = 1.0;
  std::uint64_t seed = 0;
  double merge_tol = 1e-8;  // scaled by (1 + |x0 - y0|)
  int n_smooth = 1000;      // kinetic coupling smoothing index; 0 means the limit
  int record_stride = 1;    // record every k-th step (the last step is always kept)
  bool bridge_merge = true; // Brownian-bridge crossing test in the reflection coupling
  std::vector<double> observe;  // if nonempty, record only at these times (plus t = 0)

  void validate() const;
  /// ceil(T / dt); the step actually used is T / steps().
  std::size_t steps() const;
  double step() const { return T / static_cast<double>(steps()); }
};

enum class CouplingMode : std::uint8_t { kSynchronous, kReflection, kMixed, kMerged };

struct Trajectory {
  std::vector<std::size_t> steps;
  std::vector<double> times;
  std::vector<StateVector> states;
};

struct PairTrajectory {
  std::vector<std::size_t> steps;
  std::vector<double> times;
  std::vector<StateVector> z, z2;
  std::vector<double> rc, sc;
  std::vector<CouplingMode> mode;
  std::optional<double> tau;  // merge time
  double log_weight = 0.0;    // Girsanov log-density, Harnack coupling only

  bool merged() const { return tau.has_value(); }
  /// |z - z2| at each recorded time.
  std::vector<double> distances() const;
};

/// Euler-Maruyama path x_{i+1} = x_i + b(x_i) h + sigma sqrt(h) xi_i.
Trajectory em_path(const EllipticModel& model, const StateVector& x0, const SimConfig& cfg,
                   std::uint64_t path = 0);

/// Which drift a kinetic path follows.
enum class KineticForm {
  kOriginal,    // -grad U(x) + G(x, v) - gamma v
  kLinearized,  // -K x + g(x, v) - gamma v, the system the coupling is built for
};

/// Kinetic Euler-Maruyama path for z = (x, v) with noise sqrt(2 gamma h) xi on v.
Trajectory em_path(const KineticModel& model, const StateVector& z0, const SimConfig& cfg,
                   std::uint64_t path = 0, KineticForm form = KineticForm::kOriginal);

/// Both copies driven by the same increments.
PairTrajectory synchronous_pair(const EllipticModel& model, const StateVector& x0,
                                const StateVector& y0, const SimConfig& cfg,
                                std::uint64_t path = 0);

/// Reflection coupling: Y uses (I - 2 e e^T) dB with e = (X - Y)/|X - Y|.
/// The pair merges when |X - Y| drops below the merge tolerance, when the
/// radial coordinate crosses zero within a step, or (with bridge_merge) when a
/// Brownian-bridge crossing test fires; afterwards Y = X.
PairTrajectory reflection_pair(const EllipticModel& model, const StateVector& x0,
                               const StateVector& y0, const SimConfig& cfg,
                               std::uint64_t path = 0);

/// Coupling with an extra drift xi e_t on Y, xi = K_w + |x0 - y0| / T_h, and
/// the same noise. On the merging step the shift is shortened so that Y lands
/// exactly on X. log_weight is the exact log-likelihood ratio of the Euler
/// chain of Y, so E[exp(log_weight) f(Y_T)] = E[f(Euler chain from y0)].
PairTrajectory harnack_pair(const EllipticModel& model, const StateVector& x0,
                            const StateVector& y0, double T_h, const SimConfig& cfg,
                            std::uint64_t path = 0);

/// Smoothing weights rc, sc of the kinetic coupling at radius r and |dq|.
struct MixWeights {
  double rc = 0.0;
  double sc = 1.0;
};
MixWeights mix_weights(double r, double dq_norm, double r0, int n_smooth);

/// Reflection-synchronous coupling of the unit-friction kinetic system
///   dX = V dt, dV = (-V - K X + g(X, V)) dt + sqrt(2) dB.
PairTrajectory kinetic_coupled_pair(const NormalizedKineticModel& model, const MetricTable& table,
                                    const MetricParams& params, const StateVector& z0,
                                    const StateVector& z0_prime, const SimConfig& cfg,
                                    std::uint64_t path = 0);

/// Columns: path_id, step, t, z..., z'..., rc, merged.
void write_pair_csv(std::ostream& os, const std::vector<PairTrajectory>& pairs,
                    std::uint64_t first_path_id = 0);

}  // namespace ness
