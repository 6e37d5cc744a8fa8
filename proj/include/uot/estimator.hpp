#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "uot/common.hpp"
#include "uot/entropy.hpp"
#include "uot/measures.hpp"
#include "uot/potentials.hpp"
#include "uot/random.hpp"
#include "uot/semidual.hpp"

namespace uot {

struct FitConfig {
  long max_iters = 5000;
  double grad_tol = 1e-8;
  double step_init = 1.0;
  double step_shrink = 0.5;
  double armijo = 1e-4;
  int restarts = 3;
  Seed seed{0};

  void validate() const {
    if (max_iters < 1 || restarts < 1) throw Error("FitConfig: max_iters and restarts must be >= 1");
    if (!(grad_tol > 0.0) || !(step_init > 0.0) || !(armijo > 0.0))
      throw Error("FitConfig: tolerances must be positive");
    if (!(step_shrink > 0.0) || !(step_shrink < 1.0))
      throw Error("FitConfig: step_shrink must be in (0,1)");
  }
};

struct FitResult {
  Potential z;
  double objective = 0.0;
  double grad_norm = 0.0;
  long iterations = 0;
  int winner_restart = 0;
  bool capped = false;
  std::vector<double> objective_trace;  // accepted objectives of the winner
};

/// -J_hat(z_hat), the plug-in estimate of the transport value.
inline double uot_estimate(const FitResult& fr) { return -fr.objective; }

namespace detail {

/// Index of the constant-offset coordinate removed under the balanced
/// entropy (adding c to z shifts z* by -c, leaving J unchanged).
inline std::optional<std::size_t> pinned_offset_coord(const PotentialClass& cls) {
  switch (cls.kind()) {
    case PotentialKind::quad_shift:
    case PotentialKind::max_quad:
      return static_cast<std::size_t>(cls.dim());  // b of the first piece
    case PotentialKind::grid:
      return std::nullopt;  // handled by gauge subtraction instead
  }
  return std::nullopt;
}

}  // namespace detail

/// Minimizes the empirical semi-dual over the class by projected gradient
/// descent with a backtracking line search, best of `restarts` seeded
/// initializations. Deterministic given cfg.seed.
inline FitResult fit(const DiscreteMeasure& mu_hat, const DiscreteMeasure& nu_hat,
                     const PotentialClass& cls, const Entropy& e, const FitConfig& cfg = {}) {
  cfg.validate();
  const SemiDualProblem problem(mu_hat, nu_hat, e, cls.R());
  const std::size_t np = cls.param_count();
  const bool balanced = e.is_balanced();
  const auto pin = balanced ? detail::pinned_offset_coord(cls) : std::nullopt;

  auto apply_gauge = [&](std::vector<double>& theta) {
    if (!balanced) return;
    if (pin) {
      theta[*pin] = 0.0;
    } else if (cls.kind() == PotentialKind::grid) {
      const double v0 = theta[0];
      for (double& t : theta) t -= v0;
    }
  };

  auto objective = [&](const std::vector<double>& theta) {
    return semidual_value(problem, cls.make(theta));
  };

  std::optional<FitResult> best;
  bool any_ok = false;
  double best_failed_gnorm = kInf;

  for (int r = 0; r < cfg.restarts; ++r) {
    std::vector<double> theta;
    if (r == 0) {
      theta = cls.project(std::vector<double>(np, 0.0));
    } else {
      Rng rng(cfg.seed.replica(static_cast<std::uint64_t>(r)));
      theta = cls.random_theta(rng);
    }
    apply_gauge(theta);

    double obj = objective(theta);
    std::vector<double> trace{obj};
    double prev_step = cfg.step_init;
    double gnorm = kInf;
    long it = 0;
    bool capped = true;

    for (; it < cfg.max_iters; ++it) {
      std::vector<double> g = semidual_grad(problem, cls, theta);
      if (pin) g[*pin] = 0.0;

      // projected-gradient mapping norm; equals ||g|| at interior points
      {
        std::vector<double> probe(np);
        for (std::size_t k = 0; k < np; ++k) probe[k] = theta[k] - g[k];
        probe = cls.project(std::move(probe));
        apply_gauge(probe);
        double s = 0.0;
        for (std::size_t k = 0; k < np; ++k) {
          const double d = theta[k] - probe[k];
          s += d * d;
        }
        gnorm = std::sqrt(s);
      }
      if (gnorm <= cfg.grad_tol) {
        capped = false;
        break;
      }

      double step = std::min(cfg.step_init, 2.0 * prev_step);
      bool accepted = false;
      std::vector<double> trial(np);
      while (step > 1e-18) {
        for (std::size_t k = 0; k < np; ++k) trial[k] = theta[k] - step * g[k];
        trial = cls.project(std::move(trial));
        apply_gauge(trial);
        double decrease = 0.0;
        for (std::size_t k = 0; k < np; ++k) decrease += g[k] * (theta[k] - trial[k]);
        const double trial_obj = objective(trial);
        if (std::isfinite(trial_obj) && trial_obj <= obj - cfg.armijo * decrease) {
          theta.swap(trial);
          obj = trial_obj;
          trace.push_back(obj);
          prev_step = step;
          accepted = true;
          break;
        }
        step *= cfg.step_shrink;
      }
      if (!accepted) {
        // no representable descent step; the gradient mapping norm decides
        capped = gnorm > cfg.grad_tol;
        break;
      }
    }

    const bool ok = !capped || gnorm <= 1e3 * cfg.grad_tol;
    if (!ok) {
      best_failed_gnorm = std::min(best_failed_gnorm, gnorm);
      continue;
    }
    any_ok = true;
    if (!best || obj < best->objective) {
      best = FitResult{cls.make(theta), obj, gnorm, it, r, capped, std::move(trace)};
    }
  }

  if (!any_ok)
    throw Error("optimization failed: all " + std::to_string(cfg.restarts) +
                " restarts hit the iteration cap with gradient norm " +
                std::to_string(best_failed_gnorm) + " > 1e3 * grad_tol");
  return std::move(*best);
}

}  // namespace uot
