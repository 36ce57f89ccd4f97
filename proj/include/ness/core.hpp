#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

namespace ness {

using StateVector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using ConstRef = Eigen::Ref<const Eigen::VectorXd>;
using OutRef = Eigen::Ref<Eigen::VectorXd>;

/// Vector field evaluated in place: out = F(x). `out` is pre-sized.
using VectorField = std::function<void(ConstRef x, OutRef out)>;
using ScalarField = std::function<double(ConstRef x)>;

/// Kinetic fields take position and velocity blocks separately.
using PhaseField = std::function<void(ConstRef x, ConstRef v, OutRef out)>;
using PhaseScalar = std::function<double(ConstRef x, ConstRef v)>;

/// Raised for malformed inputs and violated preconditions.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a simulation leaves the finite range or an estimator cannot
/// produce a usable value.
class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidInput(what);
}

inline StateVector eval(const VectorField& f, const StateVector& x) {
  StateVector out(x.size());
  f(x, out);
  return out;
}

inline bool all_finite(ConstRef x) { return x.allFinite(); }

}  // namespace ness
