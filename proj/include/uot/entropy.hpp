#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "uot/common.hpp"

namespace uot {

enum class EntropyKind { balanced, kl, chi2 };

inline std::string to_string(EntropyKind k) {
  switch (k) {
    case EntropyKind::balanced: return "balanced";
    case EntropyKind::kl: return "kl";
    case EntropyKind::chi2: return "chi2";
  }
  return "?";
}

/// Entropy function F (convex, lower semicontinuous, F(1) = 0) together with
/// its Legendre conjugate phi*, the conjugate's derivative and curvature, and
/// the recession constant. A scale tau > 0 replaces F by tau*F.
///
/// Catalog:
///   balanced : F = indicator of {1}      phi*(s) = s
///   kl       : F(x) = x log x - x + 1    phi*(s) = tau (e^{s/tau} - 1)
///   chi2     : F(x) = (x - 1)^2          phi*(s) = tau (max(0, 1+s/2tau)^2 - 1)
class Entropy {
public:
  explicit Entropy(EntropyKind kind, double tau = 1.0) : kind_(kind), tau_(tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw Error("Entropy: tau must be positive and finite");
  }

  EntropyKind kind() const { return kind_; }
  double tau() const { return tau_; }
  bool is_balanced() const { return kind_ == EntropyKind::balanced; }

  /// tau * F(x) for x >= 0; may return +inf.
  double eval_F(double x) const {
    if (!(x >= 0.0)) throw Error("Entropy::eval_F: argument must be nonnegative");
    switch (kind_) {
      case EntropyKind::balanced:
        return x == 1.0 ? 0.0 : kInf;
      case EntropyKind::kl: {
        const double xlogx = x == 0.0 ? 0.0 : x * std::log(x);
        return tau_ * (xlogx - x + 1.0);
      }
      case EntropyKind::chi2:
        return tau_ * (x - 1.0) * (x - 1.0);
    }
    return kInf;
  }

  /// phi*(s) = sup_{x>=0} s x - tau F(x).
  double eval_conj(double s) const {
    switch (kind_) {
      case EntropyKind::balanced:
        return s;
      case EntropyKind::kl: {
        const double e = std::exp(s / tau_);
        if (!std::isfinite(e))
          throw Error("conjugate overflow at s=" + std::to_string(s));
        return tau_ * (e - 1.0);
      }
      case EntropyKind::chi2: {
        const double t = 1.0 + s / (2.0 * tau_);
        if (t <= 0.0) return -tau_;
        return tau_ * (t * t - 1.0);
      }
    }
    return kInf;
  }

  /// (phi*)'(s). The catalog conjugates are differentiable on all of R.
  double conj_grad(double s) const {
    switch (kind_) {
      case EntropyKind::balanced:
        return 1.0;
      case EntropyKind::kl: {
        const double e = std::exp(s / tau_);
        if (!std::isfinite(e))
          throw Error("conjugate overflow at s=" + std::to_string(s));
        return e;
      }
      case EntropyKind::chi2:
        return std::max(0.0, 1.0 + s / (2.0 * tau_));
    }
    return 0.0;
  }

  /// inf of (phi*)'' over [min(a,b), max(a,b)]; the interval strong-convexity
  /// modulus m_{ab} of the conjugate.
  double convexity_modulus(double a, double b) const {
    if (!std::isfinite(a) || !std::isfinite(b))
      throw Error("Entropy::convexity_modulus: endpoints must be finite");
    const double lo = std::min(a, b);
    switch (kind_) {
      case EntropyKind::balanced:
        return 0.0;
      case EntropyKind::kl:
        return std::exp(lo / tau_) / tau_;
      case EntropyKind::chi2:
        return (1.0 + lo / (2.0 * tau_) > 0.0) ? 1.0 / (2.0 * tau_) : 0.0;
    }
    return 0.0;
  }

  /// Recession constant F'_inf = lim_{r->inf} F(r)/r. The whole catalog has
  /// superlinear growth, so this is +inf for every kind.
  double recession() const { return kInf; }

private:
  EntropyKind kind_;
  double tau_;
};

}  // namespace uot
