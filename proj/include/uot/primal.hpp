#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "uot/common.hpp"
#include "uot/entropy.hpp"
#include "uot/measures.hpp"
#include "uot/point.hpp"
#include "uot/semidual.hpp"

namespace uot {

/// Nonnegative coupling on supp(mu) x supp(nu), row-major.
struct Coupling {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

  std::vector<double> row_marginal() const {
    std::vector<double> m(rows);
    for (std::size_t i = 0; i < rows; ++i)
      m[i] = pairwise_sum(std::span<const double>(values.data() + i * cols, cols));
    return m;
  }

  std::vector<double> col_marginal() const {
    std::vector<double> m(cols);
    std::vector<double> buf(rows);
    for (std::size_t j = 0; j < cols; ++j) {
      for (std::size_t i = 0; i < rows; ++i) buf[i] = values[i * cols + j];
      m[j] = pairwise_sum(buf);
    }
    return m;
  }
};

struct PrimalOptions {
  long max_iters = 200000;
  double armijo = 1e-4;
  double obj_rel_tol = 1e-10;
  int obj_window = 50;
  double kkt_tol = 1e-8;
  double clamp = 1e-300;
};

struct PrimalSolution {
  Coupling coupling;
  double objective = 0.0;
  long iterations = 0;
  bool converged = false;
  double kkt_residual = kInf;
  std::vector<double> objective_trace;  // accepted objectives, nonincreasing
};

namespace detail {

/// d/dx of tau*F(x) for the smooth catalog entries.
inline double entropy_F_grad(const Entropy& e, double x) {
  switch (e.kind()) {
    case EntropyKind::kl:
      return e.tau() * std::log(x);
    case EntropyKind::chi2:
      return 2.0 * e.tau() * (x - 1.0);
    case EntropyKind::balanced:
      break;
  }
  throw Error("entropy_F_grad: balanced entropy is not differentiable");
}

inline std::vector<double> cost_matrix(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  std::vector<double> c(mu.size() * nu.size());
  for (std::size_t i = 0; i < mu.size(); ++i)
    for (std::size_t j = 0; j < nu.size(); ++j)
      c[i * nu.size() + j] = quad_cost(mu.point(i), nu.point(j));
  return c;
}

}  // namespace detail

/// D_F(gamma0, mu) + D_F(gamma1, nu) + <c, gamma> for a coupling supported on
/// the atom product. All sums are ordered pairwise sums.
inline double primal_objective(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                               const Entropy& e, const Coupling& gamma) {
  const std::vector<double> g0 = gamma.row_marginal();
  const std::vector<double> g1 = gamma.col_marginal();
  std::vector<double> terms;
  terms.reserve(mu.size() + nu.size() + 1);
  for (std::size_t i = 0; i < mu.size(); ++i)
    terms.push_back(mu.weight(i) * e.eval_F(g0[i] / mu.weight(i)));
  for (std::size_t j = 0; j < nu.size(); ++j)
    terms.push_back(nu.weight(j) * e.eval_F(g1[j] / nu.weight(j)));
  std::vector<double> cost_terms(gamma.values.size());
  const std::vector<double> c = detail::cost_matrix(mu, nu);
  for (std::size_t k = 0; k < gamma.values.size(); ++k) cost_terms[k] = c[k] * gamma.values[k];
  terms.push_back(pairwise_sum(cost_terms));
  return pairwise_sum(terms);
}

namespace detail {

inline PrimalSolution solve_primal_smooth(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                          const Entropy& e, const PrimalOptions& opts,
                                          const std::vector<double>* warm_start) {
  const std::size_t n = mu.size();
  const std::size_t m = nu.size();
  for (std::size_t i = 0; i < n; ++i)
    if (!(mu.weight(i) > 0.0)) throw Error("solve_primal: mu weights must be strictly positive");
  for (std::size_t j = 0; j < m; ++j)
    if (!(nu.weight(j) > 0.0)) throw Error("solve_primal: nu weights must be strictly positive");

  const std::vector<double> c = cost_matrix(mu, nu);

  Coupling gamma{n, m, {}};
  if (warm_start && warm_start->size() == n * m) {
    gamma.values = *warm_start;
  } else {
    gamma.values.resize(n * m);
    const double scale = 1.0 / std::max(1.0, mu.total_mass() * nu.total_mass());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j)
        gamma.values[i * m + j] = mu.weight(i) * nu.weight(j) * scale;
  }

  auto objective = [&](const Coupling& gm) { return primal_objective(mu, nu, e, gm); };

  auto gradient = [&](const Coupling& gm, std::vector<double>& grad) {
    const std::vector<double> g0 = gm.row_marginal();
    const std::vector<double> g1 = gm.col_marginal();
    std::vector<double> fr(n), fc(m);
    for (std::size_t i = 0; i < n; ++i) fr[i] = entropy_F_grad(e, g0[i] / mu.weight(i));
    for (std::size_t j = 0; j < m; ++j) fc[j] = entropy_F_grad(e, g1[j] / nu.weight(j));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) grad[i * m + j] = fr[i] + fc[j] + c[i * m + j];
  };

  PrimalSolution sol;
  std::vector<double> grad(n * m), trial(n * m);
  std::vector<double> obj_history;
  obj_history.reserve(256);
  double obj = objective(gamma);
  obj_history.push_back(obj);
  double prev_step = 0.5;
  const double active_eps = opts.clamp * 16.0;

  long it = 0;
  for (; it < opts.max_iters; ++it) {
    gradient(gamma, grad);

    double kkt = 0.0;
    for (std::size_t k = 0; k < n * m; ++k) {
      const double g = grad[k];
      const double viol = gamma.values[k] > active_eps ? std::abs(g) : std::max(-g, 0.0);
      kkt = std::max(kkt, viol);
    }
    sol.kkt_residual = kkt;
    if (kkt < opts.kkt_tol) {
      sol.converged = true;
      break;
    }

    // Backtracking with halving; the trial step starts at 1.0 and later
    // iterations retry from twice the last accepted step.
    double step = std::min(1.0, 2.0 * prev_step);
    bool accepted = false;
    while (step > 1e-18) {
      double decrease = 0.0;
      for (std::size_t k = 0; k < n * m; ++k) {
        trial[k] = std::max(gamma.values[k] - step * grad[k], opts.clamp);
        decrease += grad[k] * (gamma.values[k] - trial[k]);
      }
      const Coupling trial_c{n, m, trial};
      const double trial_obj = objective(trial_c);
      if (std::isfinite(trial_obj) && trial_obj <= obj - opts.armijo * decrease) {
        gamma.values.swap(trial);
        obj = trial_obj;
        prev_step = step;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no descent step representable

    obj_history.push_back(obj);
    const int w = opts.obj_window;
    if (static_cast<int>(obj_history.size()) > w) {
      const double before = obj_history[obj_history.size() - 1 - static_cast<std::size_t>(w)];
      if ((before - obj) / std::max(1.0, std::abs(obj)) < opts.obj_rel_tol) {
        sol.converged = true;
        ++it;
        break;
      }
    }
  }

  sol.coupling = std::move(gamma);
  sol.objective = obj;
  sol.iterations = it;
  sol.objective_trace = std::move(obj_history);
  return sol;
}

}  // namespace detail

/// Discrete primal UOT over couplings on the product of supports (sound for
/// the catalog entropies, whose recession constants are infinite). Smooth
/// entropies run projected gradient with backtracking; the balanced entropy
/// runs KL continuation tau in {1e2, 1e3, 1e4} with Richardson extrapolation
/// of the objective in 1/tau.
inline PrimalSolution solve_primal(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                   const Entropy& e, const PrimalOptions& opts = {}) {
  if (mu.dim() != nu.dim()) throw Error("solve_primal: dimension mismatch");
  if (e.kind() != EntropyKind::balanced)
    return detail::solve_primal_smooth(mu, nu, e, opts, nullptr);

  if (std::abs(mu.total_mass() - nu.total_mass()) >
      1e-9 * std::max(1.0, std::max(mu.total_mass(), nu.total_mass())))
    throw Error("solve_primal: balanced entropy requires equal masses");

  const double taus[3] = {1e2, 1e3, 1e4};
  double values[3] = {0.0, 0.0, 0.0};
  PrimalSolution last;
  std::vector<double> warm;
  bool all_converged = true;
  for (int k = 0; k < 3; ++k) {
    const Entropy kl(EntropyKind::kl, taus[k]);
    last = detail::solve_primal_smooth(mu, nu, kl, opts, warm.empty() ? nullptr : &warm);
    values[k] = last.objective;
    warm = last.coupling.values;
    all_converged = all_converged && last.converged;
  }
  // Lagrange extrapolation at u = 0 of the objective as a function of u = 1/tau.
  const double u[3] = {1.0 / taus[0], 1.0 / taus[1], 1.0 / taus[2]};
  double extrap = 0.0;
  for (int k = 0; k < 3; ++k) {
    double w = 1.0;
    for (int j = 0; j < 3; ++j)
      if (j != k) w *= (0.0 - u[j]) / (u[k] - u[j]);
    extrap += w * values[k];
  }
  last.objective = extrap;
  last.converged = all_converged;
  return last;
}

/// Exact balanced oracle in 1-D: quadratic cost makes the monotone coupling
/// optimal, so a two-pointer sweep over sorted atoms gives the value.
inline double monotone_matching_cost_1d(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  if (mu.dim() != 1 || nu.dim() != 1) throw Error("monotone_matching_cost_1d: 1-D only");
  if (std::abs(mu.total_mass() - nu.total_mass()) >
      1e-9 * std::max(1.0, std::max(mu.total_mass(), nu.total_mass())))
    throw Error("monotone_matching_cost_1d: masses must match");

  auto sorted_atoms = [](const DiscreteMeasure& m) {
    std::vector<std::pair<double, double>> a(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) a[i] = {m.point(i)[0], m.weight(i)};
    std::sort(a.begin(), a.end());
    return a;
  };
  auto a = sorted_atoms(mu);
  auto b = sorted_atoms(nu);

  std::vector<double> terms;
  std::size_t i = 0, j = 0;
  double ra = a[0].second, rb = b[0].second;
  while (i < a.size() && j < b.size()) {
    const double move = std::min(ra, rb);
    const double d = a[i].first - b[j].first;
    terms.push_back(move * 0.5 * d * d);
    ra -= move;
    rb -= move;
    if (ra <= 0.0 && ++i < a.size()) ra = a[i].second;
    if (rb <= 0.0 && ++j < b.size()) rb = b[j].second;
  }
  return pairwise_sum(terms);
}

/// Max violation of z0(x) + z1(y) <= c(x, y) over all grid pairs, with
/// z0 = q - z and z1 = q - z*. Nonpositive (up to rounding) for any potential
/// by the Fenchel-Young inequality.
struct FeasibilityReport {
  double max_violation = -kInf;
};

/// Kernel over an explicit dual pair tabulated on the grid.
inline FeasibilityReport dual_feasibility_pair(std::span<const double> z0_at_grid,
                                               std::span<const double> z1_at_grid,
                                               std::span<const Vec> grid) {
  if (z0_at_grid.size() != grid.size() || z1_at_grid.size() != grid.size())
    throw Error("dual_feasibility_pair: size mismatch");
  FeasibilityReport rep;
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (std::size_t j = 0; j < grid.size(); ++j) {
      const double v = z0_at_grid[i] + z1_at_grid[j] - quad_cost(grid[i], grid[j]);
      rep.max_violation = std::max(rep.max_violation, v);
    }
  return rep;
}

inline FeasibilityReport dual_feasibility(const Potential& z, std::span<const Vec> grid) {
  std::vector<double> zx(grid.size()), zy(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    zx[i] = quad(grid[i]) - z.eval(grid[i]);
    zy[i] = quad(grid[i]) - z.conjugate_eval(grid[i]);
  }
  return dual_feasibility_pair(zx, zy, grid);
}

/// primal objective - (-J(z)); nonnegative by weak duality, zero at joint
/// optimality.
inline double duality_gap(const SemiDualProblem& p, const Potential& z, const PrimalSolution& ps) {
  if (!ps.converged) throw Error("duality_gap: primal solution did not converge");
  return ps.objective + semidual_value(p, z);
}

}  // namespace uot
