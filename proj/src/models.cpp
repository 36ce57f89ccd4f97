#include "ness/models.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ness {

void EllipticModel::validate() const {
  require(dim >= 1, "elliptic model: dimension must be positive");
  require(static_cast<bool>(drift), "elliptic model: drift is missing");
  require(sigma > 0.0 && std::isfinite(sigma), "elliptic model: sigma must be positive");
  require(rho > 0.0 && std::isfinite(rho), "elliptic model: rho must be positive");
  require(R >= 0.0 && std::isfinite(R), "elliptic model: R must be nonnegative");
  require(std::isfinite(L), "elliptic model: L must be finite");
  require(M_phi >= 0.0 && L_phi >= 0.0, "elliptic model: M_phi and L_phi must be nonnegative");
  require(static_cast<bool>(drift0) == static_cast<bool>(drift1),
          "elliptic model: drift split needs both b0 and b1");
}

void KineticModel::validate() const {
  require(dim >= 1, "kinetic model: dimension must be positive");
  require(gamma > 0.0 && std::isfinite(gamma), "kinetic model: gamma must be positive");
  require(K.rows() == dim && K.cols() == dim, "kinetic model: K must be dim x dim");
  require((K - K.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + K.cwiseAbs().maxCoeff()),
          "kinetic model: K must be symmetric");
  require(k_min() > 0.0, "kinetic model: K must be positive-definite");
  require(R >= 0.0 && L1 >= 0.0 && L2 >= 0.0, "kinetic model: R, L1, L2 must be nonnegative");
  require(L2 <= L1, "kinetic model: L2 must not exceed L1");
}

double KineticModel::k_min() const {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(K, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

double KineticModel::k_norm() const {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(K, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

bool KineticModel::admissible() const {
  return 19.0 * std::max(1.0, gamma) * L2 <= std::min(1.0, k_min());
}

void KineticModel::linear_force(ConstRef x, ConstRef v, OutRef out) const {
  out.noalias() = -K * x;
  if (residual) {
    StateVector g(dim);
    residual(x, v, g);
    out += g;
  }
}

StateVector eval_drift(const EllipticModel& model, const StateVector& state) {
  if (state.size() != model.dim)
    throw InvalidInput("eval_drift: state has dimension " + std::to_string(state.size()) +
                       ", model expects " + std::to_string(model.dim));
  StateVector out(model.dim);
  model.drift(state, out);
  if (!out.allFinite()) throw SimulationError("eval_drift: non-finite drift value");
  return out;
}

StateVector eval_drift(const KineticModel& model, const StateVector& state) {
  const int d = model.dim;
  if (state.size() != 2 * d)
    throw InvalidInput("eval_drift: kinetic state has dimension " + std::to_string(state.size()) +
                       ", model expects " + std::to_string(2 * d));
  const auto x = state.head(d);
  const auto v = state.tail(d);
  StateVector out(2 * d);
  out.head(d) = v;
  StateVector force(d);
  model.grad_U(x, force);
  force = -force;
  if (model.forcing) {
    StateVector G(d);
    model.forcing(x, v, G);
    force += G;
  }
  out.tail(d) = force - model.gamma * v;
  if (!out.allFinite()) throw SimulationError("eval_drift: non-finite drift value");
  return out;
}

double fd_divergence(const VectorField& field, const StateVector& x, double h) {
  const auto d = x.size();
  StateVector xp = x;
  StateVector fp(d), fm(d);
  double div = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    xp(i) = x(i) + h;
    field(xp, fp);
    xp(i) = x(i) - h;
    field(xp, fm);
    xp(i) = x(i);
    div += (fp(i) - fm(i)) / (2.0 * h);
  }
  return div;
}

DerivedEllipticFields derive_elliptic_fields(const EllipticModel& model, double fd_step) {
  if (!model.grad_log_mu0)
    throw InvalidInput("derive_elliptic_fields: grad ln mu0 is required");
  if (!model.has_split())
    throw InvalidInput("derive_elliptic_fields: the split b = b0 + b1 is required");
  require(fd_step > 0.0, "derive_elliptic_fields: finite-difference step must be positive");

  const int d = model.dim;
  DerivedEllipticFields out;
  out.b_tilde = [drift = model.drift, glog = model.grad_log_mu0, d](ConstRef x, OutRef o) {
    StateVector g(d);
    glog(x, g);
    drift(x, o);
    o = 2.0 * g - o;
  };

  ScalarField divergence;
  if (model.div_drift1) {
    divergence = model.div_drift1;
  } else {
    divergence = [b1 = model.drift1, fd_step](ConstRef x) {
      return fd_divergence(b1, StateVector(x), fd_step);
    };
  }
  out.phi = [b1 = model.drift1, glog = model.grad_log_mu0, divergence, d](ConstRef x) {
    StateVector b(d), g(d);
    b1(x, b);
    glog(x, g);
    return -divergence(x) + b.dot(g);
  };
  if (model.phi_bounded) {
    out.phi_bounded = model.phi_bounded;
  } else {
    out.phi_bounded = [](ConstRef) { return 0.0; };
  }
  out.phi_lipschitz = [phi = out.phi, bounded = out.phi_bounded](ConstRef x) {
    return phi(x) - bounded(x);
  };
  return out;
}

VectorField make_competition_drift(const CompetitionKernel& kernel,
                                   const std::vector<StateVector>& particles) {
  if (particles.empty()) throw InvalidInput("make_competition_drift: empty particle set");
  const int p = kernel.p;
  Matrix first(p, static_cast<Eigen::Index>(particles.size()));
  Matrix second(p, static_cast<Eigen::Index>(particles.size()));
  for (std::size_t j = 0; j < particles.size(); ++j) {
    if (particles[j].size() != 2 * p)
      throw InvalidInput("make_competition_drift: particle dimension must be 2p");
    first.col(static_cast<Eigen::Index>(j)) = particles[j].head(p);
    second.col(static_cast<Eigen::Index>(j)) = particles[j].tail(p);
  }
  return [kernel, first = std::move(first), second = std::move(second), p](ConstRef x, OutRef out) {
    const auto n = first.cols();
    StateVector acc1 = StateVector::Zero(p);
    StateVector acc2 = StateVector::Zero(p);
    StateVector tmp(p);
    const StateVector x1 = x.head(p);
    const StateVector x2 = x.tail(p);
    for (Eigen::Index j = 0; j < n; ++j) {
      kernel.grad1(x1, second.col(j), tmp);
      acc1 += tmp;
      kernel.grad2(first.col(j), x2, tmp);
      acc2 += tmp;
    }
    out.head(p) = acc1 / static_cast<double>(n);
    out.tail(p) = -acc2 / static_cast<double>(n);
  };
}

double competition_gradient_error(const CompetitionKernel& kernel,
                                  const std::vector<StateVector>& points, double h) {
  const int p = kernel.p;
  double worst = 0.0;
  StateVector g(p);
  for (const auto& z : points) {
    StateVector x1 = z.head(p);
    StateVector x2 = z.tail(p);
    kernel.grad1(x1, x2, g);
    for (int i = 0; i < p; ++i) {
      StateVector a = x1, b = x1;
      a(i) += h;
      b(i) -= h;
      const double fd = (kernel.value(a, x2) - kernel.value(b, x2)) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - g(i)));
    }
    kernel.grad2(x1, x2, g);
    for (int i = 0; i < p; ++i) {
      StateVector a = x2, b = x2;
      a(i) += h;
      b(i) -= h;
      const double fd = (kernel.value(x1, a) - kernel.value(x1, b)) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - g(i)));
    }
  }
  return worst;
}

StateVector NormalizedKineticModel::to_normalized(const StateVector& z) const {
  const auto d = z.size() / 2;
  StateVector out = z;
  out.head(d) *= gamma_scale;
  return out;
}

StateVector NormalizedKineticModel::from_normalized(const StateVector& z) const {
  const auto d = z.size() / 2;
  StateVector out = z;
  out.head(d) /= gamma_scale;
  return out;
}

NormalizedKineticModel normalize_kinetic(const KineticModel& model) {
  if (!(model.gamma > 0.0)) throw InvalidInput("normalize_kinetic: gamma must be positive");
  const double gamma = model.gamma;
  NormalizedKineticModel out;
  out.gamma_scale = gamma;
  if (gamma == 1.0) {
    out.model = model;
    return out;
  }
  // s = gamma t, x~ = gamma x, v~ = v:
  //   dv~ = (1/gamma)(-grad U(x~/gamma) + G(x~/gamma, v~)) ds - v~ ds + sqrt(2) dB~.
  KineticModel m = model;
  m.gamma = 1.0;
  const int d = model.dim;
  m.grad_U = [f = model.grad_U, gamma, d](ConstRef x, OutRef o) {
    const StateVector xs = x / gamma;
    f(xs, o);
    o /= gamma;
  };
  if (model.forcing) {
    m.forcing = [f = model.forcing, gamma](ConstRef x, ConstRef v, OutRef o) {
      const StateVector xs = x / gamma;
      f(xs, v, o);
      o /= gamma;
    };
  }
  if (model.residual) {
    m.residual = [f = model.residual, gamma](ConstRef x, ConstRef v, OutRef o) {
      const StateVector xs = x / gamma;
      f(xs, v, o);
      o /= gamma;
    };
  }
  m.K = model.K / (gamma * gamma);
  // g~(x~, v~) = g(x~/gamma, v~)/gamma has Lipschitz constant L max(1, 1/gamma)/gamma and the
  // far-field region must be enlarged so that it lies inside the original one.
  const double lip_scale = std::max(1.0, 1.0 / gamma) / gamma;
  m.L1 = model.L1 * lip_scale;
  m.L2 = model.L2 * lip_scale;
  m.R = model.R * std::max(1.0, gamma);
  (void)d;
  out.model = std::move(m);
  return out;
}

StateSampler uniform_box_sampler(int dim, double half_width) {
  return [dim, half_width](std::uint64_t index, const NoiseStream& noise) {
    StateVector x(dim);
    for (int i = 0; i < dim; ++i)
      x(i) = half_width * (2.0 * noise.uniform(index, 0, NoiseStream::kInitial, i) - 1.0);
    return x;
  };
}

StateSampler gaussian_sampler(int dim, double scale) {
  return [dim, scale](std::uint64_t index, const NoiseStream& noise) {
    StateVector x(dim);
    noise.normals(index, 0, NoiseStream::kInitial, std::span<double>(x.data(), dim));
    return StateVector(scale * x);
  };
}

OneSidedReport probe_one_sided_condition(const VectorField& drift, int dim, double rho, double L,
                                         double R, const StateSampler& sampler,
                                         std::size_t n_pairs, std::uint64_t seed) {
  OneSidedReport rep;
  rep.n_pairs = n_pairs;
  const NoiseStream noise(seed);
  StateVector bx(dim), by(dim);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const StateVector x = sampler(2 * i, noise);
    const StateVector y = sampler(2 * i + 1, noise);
    const StateVector dxy = x - y;
    const double n2 = dxy.squaredNorm();
    if (n2 == 0.0) continue;
    drift(x, bx);
    drift(y, by);
    const double ratio = (bx - by).dot(dxy) / n2;
    rep.min_ratio = std::min(rep.min_ratio, ratio);
    if (std::sqrt(n2) >= R) {
      ++rep.n_far;
      if (ratio > rep.max_ratio_far) {
        rep.max_ratio_far = ratio;
        rep.worst_far_x = x;
        rep.worst_far_y = y;
      }
    } else {
      ++rep.n_near;
      rep.max_ratio_near = std::max(rep.max_ratio_near, ratio);
    }
  }
  rep.far_violation = rep.n_far > 0 && rep.max_ratio_far > -rho;
  rep.near_violation = rep.n_near > 0 && rep.max_ratio_near > L;
  return rep;
}

OneSidedReport probe_one_sided_condition(const EllipticModel& model, const StateSampler& sampler,
                                         std::size_t n_pairs, std::uint64_t seed) {
  return probe_one_sided_condition(model.drift, model.dim, model.rho, model.L, model.R, sampler,
                                   n_pairs, seed);
}

double split_residual(const EllipticModel& model, const std::vector<StateVector>& points) {
  if (!model.has_split()) return 0.0;
  double worst = 0.0;
  StateVector b(model.dim), b0(model.dim), b1(model.dim);
  for (const auto& x : points) {
    model.drift(x, b);
    model.drift0(x, b0);
    model.drift1(x, b1);
    worst = std::max(worst, (b - b0 - b1).cwiseAbs().maxCoeff());
  }
  return worst;
}

double kinetic_decomposition_residual(const KineticModel& model,
                                      const std::vector<StateVector>& points) {
  const int d = model.dim;
  double worst = 0.0;
  StateVector lhs(d), rhs(d), G(d);
  for (const auto& z : points) {
    const StateVector x = z.head(d);
    const StateVector v = z.tail(d);
    model.grad_U(x, lhs);
    lhs = -lhs;
    if (model.forcing) {
      const StateVector mv = -v;
      model.forcing(x, mv, G);
      lhs += G;
    }
    model.linear_force(x, v, rhs);
    worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace ness
