#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "uot/common.hpp"
#include "uot/entropy.hpp"
#include "uot/measures.hpp"
#include "uot/point.hpp"
#include "uot/potentials.hpp"

namespace uot {

/// A semi-dual instance: measures mu, nu supported in B_R and an entropy.
/// The cost is fixed to c(x, y) = q(x - y).
struct SemiDualProblem {
  DiscreteMeasure mu;
  DiscreteMeasure nu;
  Entropy entropy;
  double R;

  SemiDualProblem(DiscreteMeasure mu_, DiscreteMeasure nu_, Entropy entropy_, double R_)
      : mu(std::move(mu_)), nu(std::move(nu_)), entropy(entropy_), R(R_) {
    if (mu.dim() != nu.dim()) throw Error("SemiDualProblem: dimension mismatch");
    if (!(R > 0.0)) throw Error("SemiDualProblem: R must be positive");
    const double tol = R * (1.0 + 1e-12) + 1e-12;
    if (mu.support_radius() > tol || nu.support_radius() > tol)
      throw Error("SemiDualProblem: support must lie in B_R");
  }
};

/// J(z) = <phi*(z - q), mu> + <phi*(z* - q), nu>.
inline double semidual_value(const SemiDualProblem& p, const Potential& z) {
  std::vector<double> terms(p.mu.size() + p.nu.size());
  for (std::size_t i = 0; i < p.mu.size(); ++i) {
    const Vec& x = p.mu.point(i);
    try {
      terms[i] = p.mu.weight(i) * p.entropy.eval_conj(z.eval(x) - quad(x));
    } catch (const Error& e) {
      throw Error(std::string(e.what()) + " (mu atom " + std::to_string(i) + ")");
    }
  }
  for (std::size_t j = 0; j < p.nu.size(); ++j) {
    const Vec& y = p.nu.point(j);
    try {
      terms[p.mu.size() + j] = p.nu.weight(j) * p.entropy.eval_conj(z.conjugate_eval(y) - quad(y));
    } catch (const Error& e) {
      throw Error(std::string(e.what()) + " (nu atom " + std::to_string(j) + ")");
    }
  }
  return pairwise_sum(terms);
}

/// Gradient of theta -> J(z_theta) over a class. The conjugate term uses the
/// envelope identity d z*(y)/dtheta = -d z(x)/dtheta at x = grad z*(y).
inline std::vector<double> semidual_grad(const SemiDualProblem& p, const PotentialClass& cls,
                                         std::span<const double> theta) {
  const Potential z = cls.make(std::vector<double>(theta.begin(), theta.end()));
  std::vector<double> g(cls.param_count(), 0.0);
  for (std::size_t i = 0; i < p.mu.size(); ++i) {
    const Vec& x = p.mu.point(i);
    const double w = p.mu.weight(i) * p.entropy.conj_grad(z.eval(x) - quad(x));
    z.accumulate_param_grad(x, w, g);
  }
  for (std::size_t j = 0; j < p.nu.size(); ++j) {
    const Vec& y = p.nu.point(j);
    const double w = p.nu.weight(j) * p.entropy.conj_grad(z.conjugate_eval(y) - quad(y));
    z.accumulate_conj_param_grad(y, w, g);
  }
  return g;
}

/// Tilted pair (mu~, nu~) = ((phi*)'(z0 - q) mu, (phi*)'(z0* - q) nu).
inline std::pair<DiscreteMeasure, DiscreteMeasure> tilt(const SemiDualProblem& p,
                                                        const Potential& z0) {
  DiscreteMeasure mu_tilde = reweight_by(
      p.mu, [&](const Vec& x) { return p.entropy.conj_grad(z0.eval(x) - quad(x)); });
  DiscreteMeasure nu_tilde = reweight_by(
      p.nu, [&](const Vec& y) { return p.entropy.conj_grad(z0.conjugate_eval(y) - quad(y)); });
  return {std::move(mu_tilde), std::move(nu_tilde)};
}

/// Squared pseudo-distance with an explicit tilted weighting:
///   (1/2 lambda) E_{nu~}[ ||grad(z* - z0*)||^2 ]
///   + Cp ( E_nu[(z* - z0*)^2] + E_mu[(z - z0)^2] ).
/// Expectations are unnormalized integrals against the stored weights.
inline double h_circ_squared_with(const DiscreteMeasure& nu_tilde, const SemiDualProblem& p,
                                  const Potential& z, const Potential& z0, double lambda,
                                  double Cp) {
  if (!(lambda > 0.0)) throw Error("h_circ_distance: lambda must be positive");
  if (Cp < 0.0) throw Error("h_circ_distance: Cp must be nonnegative");
  const double grad_term =
      integrate(nu_tilde, [&](const Vec& y) {
        return (z.conjugate_grad(y) - z0.conjugate_grad(y)).squared_norm();
      }) /
      (2.0 * lambda);
  double l2 = 0.0;
  if (Cp > 0.0) {
    const double conj_part = integrate(p.nu, [&](const Vec& y) {
      const double d = z.conjugate_eval(y) - z0.conjugate_eval(y);
      return d * d;
    });
    const double prim_part = integrate(p.mu, [&](const Vec& x) {
      const double d = z.eval(x) - z0.eval(x);
      return d * d;
    });
    l2 = Cp * (conj_part + prim_part);
  }
  return grad_term + l2;
}

/// d_{H deg}(z, z0): the tilted weighting nu~ comes from z0.
inline double h_circ_distance(const SemiDualProblem& p, const Potential& z, const Potential& z0,
                              double lambda, double Cp) {
  const DiscreteMeasure nu_tilde = tilt(p, z0).second;
  return std::sqrt(h_circ_squared_with(nu_tilde, p, z, z0, lambda, Cp));
}

/// One evaluation of the semi-dual stability inequality
///   J(z) - J(z0) >= grad_term + l2_conj_term + l2_term.
/// The L2 constants are half the infimum of the conjugate's interval
/// convexity modulus over the supports, which is what the quadratic remainder
/// of a twice-differentiable convex function actually guarantees.
struct StabilityReport {
  double lhs = 0.0;
  double grad_term = 0.0;
  double l2_conj_term = 0.0;
  double l2_term = 0.0;
  double C_z = 0.0;
  double C_z_star = 0.0;
  bool satisfied = false;
};

/// z0 must be the problem's optimal potential (by construction, e.g. from
/// make_consistent_instance); z a member of the same lambda-class.
inline StabilityReport stability_report(const SemiDualProblem& p, const Potential& z,
                                        const Potential& z0) {
  if (z.lambda() != z0.lambda()) throw Error("stability_report: mismatched lambda");
  const double lambda = z.lambda();
  StabilityReport rep;
  rep.lhs = semidual_value(p, z) - semidual_value(p, z0);

  const DiscreteMeasure nu_tilde = tilt(p, z0).second;
  rep.grad_term = integrate(nu_tilde, [&](const Vec& y) {
                    return (z0.conjugate_grad(y) - z.conjugate_grad(y)).squared_norm();
                  }) /
                  (2.0 * lambda);

  double cz = kInf;
  for (std::size_t i = 0; i < p.mu.size(); ++i) {
    const Vec& x = p.mu.point(i);
    cz = std::min(cz, p.entropy.convexity_modulus(z.eval(x) - quad(x), z0.eval(x) - quad(x)));
  }
  double czs = kInf;
  for (std::size_t j = 0; j < p.nu.size(); ++j) {
    const Vec& y = p.nu.point(j);
    czs = std::min(czs, p.entropy.convexity_modulus(z.conjugate_eval(y) - quad(y),
                                                    z0.conjugate_eval(y) - quad(y)));
  }
  rep.C_z = 0.5 * cz;
  rep.C_z_star = 0.5 * czs;

  rep.l2_term = rep.C_z * integrate(p.mu, [&](const Vec& x) {
    const double d = z0.eval(x) - z.eval(x);
    return d * d;
  });
  rep.l2_conj_term = rep.C_z_star * integrate(p.nu, [&](const Vec& y) {
    const double d = z0.conjugate_eval(y) - z.conjugate_eval(y);
    return d * d;
  });

  const double rhs = rep.grad_term + rep.l2_conj_term + rep.l2_term;
  rep.satisfied = rep.lhs + 1e-8 * std::max(1.0, std::abs(rep.lhs)) >= rhs;
  return rep;
}

/// Class-wide lower bound for the pseudo-distance constant C': half the
/// conjugate's convexity modulus over the a-priori value ranges of z - q on
/// B_R and z* - q on B_R. Zero for the balanced entropy.
inline double class_cprime(const PotentialClass& cls, const Entropy& e, double R) {
  const double q_hi = 0.5 * R * R;
  const double m = cls.M_at(R);
  const double mp = cls.bound_Mprime(R);
  const double c1 = e.convexity_modulus(cls.lower_bound() - q_hi, m);
  const double c2 = e.convexity_modulus(-mp - q_hi, mp);
  return 0.5 * std::min(c1, c2);
}

/// Builds nu so that z0 is exactly optimal for (mu, nu): push the tilted
/// mu~ through grad z0 and divide out the nu-side tilt. The conjugate values
/// at image points use the Fenchel equality z0*(grad z0(x)) = x.grad z0(x) - z0(x).
inline DiscreteMeasure make_consistent_instance(const DiscreteMeasure& mu, const Potential& z0,
                                                const Entropy& e) {
  std::vector<Vec> images;
  images.reserve(mu.size());
  std::vector<double> weights(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const Vec& x = mu.point(i);
    const double mu_factor = e.conj_grad(z0.eval(x) - quad(x));
    const Vec y = z0.grad(x);
    if (!y.finite()) throw Error("make_consistent_instance: non-finite image point");
    const double conj_at_image = dot(x, y) - z0.eval(x);
    const double nu_factor = e.conj_grad(conj_at_image - quad(y));
    if (!(nu_factor > 0.0) || !std::isfinite(nu_factor))
      throw Error("instance not constructible");
    images.push_back(y);
    weights[i] = mu.weight(i) * mu_factor / nu_factor;
  }
  return DiscreteMeasure(std::move(images), std::move(weights));
}

}  // namespace uot
