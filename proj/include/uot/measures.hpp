#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "uot/common.hpp"
#include "uot/point.hpp"
#include "uot/random.hpp"

namespace uot {

/// Weighted point cloud in R^d, d <= 3. Carries mu, nu, their empirical
/// counterparts and the tilted measures alike; weights are stored
/// unnormalized so positive non-probability measures are first-class.
/// Immutable after construction.
class DiscreteMeasure {
public:
  DiscreteMeasure(std::vector<Vec> points, std::vector<double> weights)
      : points_(std::move(points)), weights_(std::move(weights)) {
    if (points_.empty()) throw Error("DiscreteMeasure: empty support");
    if (points_.size() != weights_.size())
      throw Error("DiscreteMeasure: points/weights length mismatch");
    dim_ = points_.front().dim();
    for (const Vec& p : points_) {
      if (p.dim() != dim_) throw Error("DiscreteMeasure: inconsistent point dimensions");
      if (!p.finite()) throw Error("DiscreteMeasure: non-finite point coordinate");
    }
    for (double w : weights_) {
      if (!(w >= 0.0) || !std::isfinite(w))
        throw Error("DiscreteMeasure: weights must be finite and nonnegative");
    }
    total_mass_ = pairwise_sum(weights_);
    if (!std::isfinite(total_mass_)) throw Error("DiscreteMeasure: total mass not finite");
  }

  int dim() const { return dim_; }
  std::size_t size() const { return points_.size(); }
  const Vec& point(std::size_t i) const { return points_[i]; }
  double weight(std::size_t i) const { return weights_[i]; }
  const std::vector<Vec>& points() const { return points_; }
  const std::vector<double>& weights() const { return weights_; }

  double total_mass() const { return total_mass_; }
  bool is_probability() const { return std::abs(total_mass_ - 1.0) <= 1e-12; }

  /// Largest support radius, max_i ||x_i||.
  double support_radius() const {
    double r = 0.0;
    for (const Vec& p : points_) r = std::max(r, p.norm());
    return r;
  }

private:
  std::vector<Vec> points_;
  std::vector<double> weights_;
  int dim_ = 0;
  double total_mass_ = 0.0;
};

/// Image measure under a point map: same weights, mapped points.
template <class Map>
DiscreteMeasure pushforward(const DiscreteMeasure& m, Map&& map) {
  std::vector<Vec> pts;
  pts.reserve(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    Vec y = map(m.point(i));
    if (!y.finite())
      throw Error("pushforward: map produced non-finite coordinate at point " + std::to_string(i));
    pts.push_back(y);
  }
  return DiscreteMeasure(std::move(pts), m.weights());
}

/// Pointwise multiplication of weights by nonnegative factors.
inline DiscreteMeasure reweight(const DiscreteMeasure& m, std::span<const double> factors) {
  if (factors.size() != m.size()) throw Error("reweight: factor length mismatch");
  std::vector<double> w(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!(factors[i] >= 0.0) || !std::isfinite(factors[i]))
      throw Error("reweight: factors must be finite and nonnegative");
    w[i] = m.weight(i) * factors[i];
  }
  return DiscreteMeasure(m.points(), std::move(w));
}

template <class Fn>
DiscreteMeasure reweight_by(const DiscreteMeasure& m, Fn&& factor_at) {
  std::vector<double> f(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) f[i] = factor_at(m.point(i));
  return reweight(m, f);
}

/// <f, m> = sum_i w_i f(x_i), accumulated in pairwise order.
template <class Fn>
double integrate(const DiscreteMeasure& m, Fn&& f) {
  std::vector<double> terms(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double v = f(m.point(i));
    if (std::isnan(v)) throw Error("integrate: integrand is NaN at point " + std::to_string(i));
    terms[i] = m.weight(i) * v;
  }
  return pairwise_sum(terms);
}

// ---------------------------------------------------------------------------
// Densities and sampling
// ---------------------------------------------------------------------------

enum class DensityKind { uniform_ball, truncated_gaussian, grid_density };

/// Density on R^d with support inside the centered ball B_R.
struct DensitySpec {
  DensityKind kind = DensityKind::uniform_ball;
  int dim = 1;
  double radius = 1.0;

  // truncated_gaussian
  Vec mean;
  Vec var_diag;

  // grid_density: nonnegative values on a regular tensor grid over the cube
  // [box_lo, box_hi]^dim, interpolated multilinearly.
  double box_lo = -1.0;
  double box_hi = 1.0;
  std::vector<int> shape;
  std::vector<double> values;

  void validate() const {
    if (dim < 1 || dim > 3) throw Error("DensitySpec: dim must be in [1,3]");
    if (!(radius > 0.0)) throw Error("DensitySpec: radius must be positive");
    if (kind == DensityKind::truncated_gaussian) {
      if (mean.dim() != dim || var_diag.dim() != dim)
        throw Error("DensitySpec: mean/var dimension mismatch");
      for (int i = 0; i < dim; ++i)
        if (!(var_diag[i] > 0.0)) throw Error("DensitySpec: variances must be positive");
    }
    if (kind == DensityKind::grid_density) {
      if (static_cast<int>(shape.size()) != dim)
        throw Error("DensitySpec: grid shape rank mismatch");
      std::size_t n = 1;
      for (int s : shape) {
        if (s < 2) throw Error("DensitySpec: grid axes need at least 2 nodes");
        n *= static_cast<std::size_t>(s);
      }
      if (values.size() != n) throw Error("DensitySpec: grid value count mismatch");
      for (double v : values)
        if (!(v >= 0.0) || !std::isfinite(v))
          throw Error("DensitySpec: grid values must be finite and nonnegative");
      if (!(box_hi > box_lo)) throw Error("DensitySpec: empty grid box");
      // Box must sit inside B_R: the farthest corner decides.
      const double corner = std::max(std::abs(box_lo), std::abs(box_hi));
      if (corner * std::sqrt(static_cast<double>(dim)) > radius + 1e-12)
        throw Error("DensitySpec: grid box exceeds the support ball");
      if (trapezoid_integral() <= 0.0)
        throw Error("DensitySpec: grid density integrates to zero");
    }
  }

  /// Tensor trapezoidal integral of the grid values.
  double trapezoid_integral() const {
    std::vector<double> cur(values.begin(), values.end());
    std::vector<int> sh = shape;
    for (int axis = dim - 1; axis >= 0; --axis) {
      const int nAxis = sh[static_cast<std::size_t>(axis)];
      const double h = (box_hi - box_lo) / (nAxis - 1);
      std::size_t outer = 1;
      for (int a = 0; a < axis; ++a) outer *= static_cast<std::size_t>(sh[static_cast<std::size_t>(a)]);
      std::vector<double> next(outer);
      for (std::size_t o = 0; o < outer; ++o) {
        double s = 0.0;
        for (int i = 0; i < nAxis; ++i) {
          const double w = (i == 0 || i == nAxis - 1) ? 0.5 : 1.0;
          s += w * cur[o * static_cast<std::size_t>(nAxis) + static_cast<std::size_t>(i)];
        }
        next[o] = s * h;
      }
      cur = std::move(next);
      sh[static_cast<std::size_t>(axis)] = 1;
    }
    return cur[0];
  }

  /// Multilinear interpolation of the grid values at x (inside the box).
  double grid_value_at(const Vec& x) const {
    const double span = box_hi - box_lo;
    int i0[Vec::kMaxDim];
    double frac[Vec::kMaxDim];
    for (int a = 0; a < dim; ++a) {
      const int nAxis = shape[static_cast<std::size_t>(a)];
      double t = (x[a] - box_lo) / span * (nAxis - 1);
      t = std::clamp(t, 0.0, static_cast<double>(nAxis - 1));
      i0[a] = std::min(static_cast<int>(t), nAxis - 2);
      frac[a] = t - i0[a];
    }
    double acc = 0.0;
    for (int corner = 0; corner < (1 << dim); ++corner) {
      double w = 1.0;
      std::size_t flat = 0;
      for (int a = 0; a < dim; ++a) {
        const int bit = (corner >> a) & 1;
        w *= bit ? frac[a] : 1.0 - frac[a];
        flat = flat * static_cast<std::size_t>(shape[static_cast<std::size_t>(a)]) +
               static_cast<std::size_t>(i0[a] + bit);
      }
      acc += w * values[flat];
    }
    return acc;
  }
};

namespace detail {
inline constexpr long kProposalCap = 1000000;
}

/// n i.i.d. draws from the normalized density, each with weight 1/n.
/// Deterministic in the seed, independent of execution order.
inline DiscreteMeasure sample(const DensitySpec& spec, std::size_t n, Seed seed) {
  if (n < 1) throw Error("sample: need n >= 1");
  spec.validate();
  Rng rng(seed);
  std::vector<Vec> pts;
  pts.reserve(n);

  auto propose_one = [&](Rng& r) -> Vec {
    Vec x(spec.dim);
    switch (spec.kind) {
      case DensityKind::uniform_ball:
        for (int a = 0; a < spec.dim; ++a) x[a] = r.uniform(-spec.radius, spec.radius);
        return x;
      case DensityKind::truncated_gaussian:
        for (int a = 0; a < spec.dim; ++a)
          x[a] = spec.mean[a] + std::sqrt(spec.var_diag[a]) * r.normal();
        return x;
      case DensityKind::grid_density:
        for (int a = 0; a < spec.dim; ++a) x[a] = r.uniform(spec.box_lo, spec.box_hi);
        return x;
    }
    return x;
  };

  double vmax = 1.0;
  if (spec.kind == DensityKind::grid_density)
    vmax = *std::max_element(spec.values.begin(), spec.values.end());

  for (std::size_t i = 0; i < n; ++i) {
    bool accepted = false;
    for (long attempt = 0; attempt < detail::kProposalCap; ++attempt) {
      Vec x = propose_one(rng);
      switch (spec.kind) {
        case DensityKind::uniform_ball:
        case DensityKind::truncated_gaussian:
          accepted = x.norm() <= spec.radius;
          break;
        case DensityKind::grid_density:
          accepted = rng.uniform01() * vmax < spec.grid_value_at(x);
          break;
      }
      if (accepted) {
        pts.push_back(x);
        break;
      }
    }
    if (!accepted) throw Error("degenerate density");
  }
  return DiscreteMeasure(std::move(pts), std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

/// n i.i.d. atom draws from m (categorical in the weights), each carrying
/// weight mass(m)/n, so <f, sample> is unbiased for <f, m>.
inline DiscreteMeasure sample_atoms(const DiscreteMeasure& m, std::size_t n, Seed seed) {
  if (n < 1) throw Error("sample_atoms: need n >= 1");
  if (!(m.total_mass() > 0.0)) throw Error("sample_atoms: zero-mass measure");
  std::vector<double> cum(m.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    acc += m.weight(i);
    cum[i] = acc;
  }
  Rng rng(seed);
  std::vector<Vec> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform01() * acc;
    const auto it = std::upper_bound(cum.begin(), cum.end(), u);
    const std::size_t j = std::min(static_cast<std::size_t>(it - cum.begin()), m.size() - 1);
    pts.push_back(m.point(j));
  }
  return DiscreteMeasure(std::move(pts),
                         std::vector<double>(n, m.total_mass() / static_cast<double>(n)));
}

// ---------------------------------------------------------------------------
// CSV serialization: header "x1[,x2[,x3]],w", one row per point,
// 17-significant-digit floats.
// ---------------------------------------------------------------------------

inline std::string fmt17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline void write_csv(const DiscreteMeasure& m, std::ostream& os) {
  for (int a = 0; a < m.dim(); ++a) os << "x" << (a + 1) << ",";
  os << "w\n";
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (int a = 0; a < m.dim(); ++a) os << fmt17(m.point(i)[a]) << ",";
    os << fmt17(m.weight(i)) << "\n";
  }
}

inline void write_csv(const DiscreteMeasure& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("write_csv: cannot open " + path);
  write_csv(m, os);
}

inline DiscreteMeasure read_measure_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error("read_measure_csv: empty input");
  int dim = 0;
  {
    std::stringstream header(line);
    std::string col;
    std::vector<std::string> cols;
    while (std::getline(header, col, ',')) cols.push_back(col);
    if (cols.empty() || cols.back() != "w")
      throw Error("read_measure_csv: expected trailing 'w' column");
    dim = static_cast<int>(cols.size()) - 1;
  }
  std::vector<Vec> pts;
  std::vector<double> ws;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    Vec p(dim);
    for (int a = 0; a < dim; ++a) {
      if (!std::getline(row, cell, ',')) throw Error("read_measure_csv: short row");
      p[a] = std::stod(cell);
    }
    if (!std::getline(row, cell, ',')) throw Error("read_measure_csv: missing weight");
    pts.push_back(p);
    ws.push_back(std::stod(cell));
  }
  return DiscreteMeasure(std::move(pts), std::move(ws));
}

inline DiscreteMeasure read_measure_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("read_measure_csv: cannot open " + path);
  return read_measure_csv(is);
}

}  // namespace uot
