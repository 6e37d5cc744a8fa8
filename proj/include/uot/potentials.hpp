#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "uot/common.hpp"
#include "uot/legendre.hpp"
#include "uot/point.hpp"
#include "uot/random.hpp"

namespace uot {

enum class PotentialKind { quad_shift, max_quad, grid };

inline std::string to_string(PotentialKind k) {
  switch (k) {
    case PotentialKind::quad_shift: return "quad_shift";
    case PotentialKind::max_quad: return "max_quad";
    case PotentialKind::grid: return "grid";
  }
  return "?";
}

/// Regular tensor grid over the cube [lo, hi]^d.
struct GridSpec {
  double lo = -1.0;
  double hi = 1.0;
  std::vector<int> shape;

  std::size_t node_count() const {
    std::size_t n = 1;
    for (int s : shape) n *= static_cast<std::size_t>(s);
    return n;
  }
  double step(int axis) const { return (hi - lo) / (shape[static_cast<std::size_t>(axis)] - 1); }
  double coord(int axis, int i) const { return lo + step(axis) * i; }
};

/// Counts exact ties between max_quad pieces seen while selecting active
/// pieces for (sub)gradients. Diagnostics only.
inline std::atomic<long>& max_quad_tie_counter() {
  static std::atomic<long> counter{0};
  return counter;
}

class Potential;

/// A class C of lambda-strongly convex potentials, uniformly lower bounded by
/// l and sup-bounded by M(r) = M0 + M1 r + M2 r^2 on every ball B_r. The
/// class also fixes the certified radius R on which member conjugates are
/// evaluable; argmaxes for ||y|| <= R live in B_{G(R)}.
class PotentialClass {
public:
  PotentialClass(PotentialKind kind, int dim, double lambda, double l,
                 std::array<double, 3> M, double R, int pieces = 8, GridSpec grid = {})
      : kind_(kind), dim_(dim), lambda_(lambda), l_(l), M_(M), R_(R), pieces_(pieces),
        grid_(std::move(grid)) {
    if (dim_ < 1 || dim_ > 3) throw Error("PotentialClass: dim must be in [1,3]");
    if (!(lambda_ > 0.0)) throw Error("PotentialClass: lambda must be positive");
    if (!(R_ > 0.0)) throw Error("PotentialClass: R must be positive");
    if (kind_ == PotentialKind::max_quad && pieces_ < 1)
      throw Error("PotentialClass: max_quad needs at least one piece");
    if (kind_ != PotentialKind::grid) {
      if (M_[1] < 0.0 || M_[2] < 0.5 * lambda_)
        throw Error("PotentialClass: need M1 >= 0 and M2 >= lambda/2");
      if (l_ + M_[1] * M_[1] / (2.0 * lambda_) > M_[0] + 1e-12)
        throw Error("inconsistent class bounds");
    } else {
      if (static_cast<int>(grid_.shape.size()) != dim_)
        throw Error("PotentialClass: grid shape rank mismatch");
      for (int s : grid_.shape)
        if (s < 3) throw Error("PotentialClass: grid axes need at least 3 nodes");
      if (!(grid_.hi > grid_.lo)) throw Error("PotentialClass: empty grid box");
    }
    // Bound constants are fixed once here; projections reuse them.
    a_max_ = M_[1];
    b_max_ = M_[0];
  }

  PotentialKind kind() const { return kind_; }
  int dim() const { return dim_; }
  double lambda() const { return lambda_; }
  double lower_bound() const { return l_; }
  double R() const { return R_; }
  int pieces() const { return pieces_; }
  const GridSpec& grid() const { return grid_; }
  double a_max() const { return a_max_; }
  double b_max() const { return b_max_; }

  /// M(r), the sup bound of class members over B_r.
  double M_at(double r) const { return M_[0] + M_[1] * r + M_[2] * r * r; }
  const std::array<double, 3>& M_coeffs() const { return M_; }

  /// G(r) = r/lambda + sqrt(2 (M(0) - l) / lambda); conjugate gradients of
  /// members stay inside B_{G(r)} for arguments in B_r.
  double bound_G(double r) const {
    if (r < 0.0) throw Error("bound_G: radius must be nonnegative");
    if (M_[0] < l_) throw Error("inconsistent class bounds");
    return r / lambda_ + std::sqrt(2.0 * (M_[0] - l_) / lambda_);
  }

  /// M'(r) = r G(r) + M(G(r)), the sup bound of member conjugates over B_r.
  double bound_Mprime(double r) const {
    const double g = bound_G(r);
    return r * g + M_at(g);
  }

  std::size_t param_count() const {
    switch (kind_) {
      case PotentialKind::quad_shift: return static_cast<std::size_t>(dim_) + 1;
      case PotentialKind::max_quad:
        return static_cast<std::size_t>(pieces_) * (static_cast<std::size_t>(dim_) + 1);
      case PotentialKind::grid: return grid_.node_count();
    }
    return 0;
  }

  Potential make(std::vector<double> theta) const;

  std::vector<double> project(std::vector<double> theta) const;

  /// Random member parameters, already projected into the class.
  std::vector<double> random_theta(Rng& rng) const {
    std::vector<double> theta(param_count());
    switch (kind_) {
      case PotentialKind::quad_shift: {
        for (int a = 0; a < dim_; ++a) theta[static_cast<std::size_t>(a)] = rng.uniform(-a_max_, a_max_);
        theta[static_cast<std::size_t>(dim_)] = rng.uniform(l_, b_max_);
        break;
      }
      case PotentialKind::max_quad: {
        const std::size_t stride = static_cast<std::size_t>(dim_) + 1;
        for (int k = 0; k < pieces_; ++k) {
          for (int a = 0; a < dim_; ++a)
            theta[static_cast<std::size_t>(k) * stride + static_cast<std::size_t>(a)] =
                rng.uniform(-a_max_, a_max_);
          theta[static_cast<std::size_t>(k) * stride + static_cast<std::size_t>(dim_)] =
              rng.uniform(l_, b_max_);
        }
        break;
      }
      case PotentialKind::grid: {
        // Random strongly convex start: quadratic plus a random affine tilt.
        std::vector<double> a(static_cast<std::size_t>(dim_));
        for (auto& ai : a) ai = rng.uniform(-1.0, 1.0);
        const double b = rng.uniform(-1.0, 1.0);
        const std::size_t total = grid_.node_count();
        for (std::size_t flat = 0; flat < total; ++flat) {
          double v = b;
          std::size_t rem = flat;
          for (int ax = dim_ - 1; ax >= 0; --ax) {
            const int nAxis = grid_.shape[static_cast<std::size_t>(ax)];
            const int i = static_cast<int>(rem % static_cast<std::size_t>(nAxis));
            rem /= static_cast<std::size_t>(nAxis);
            const double xa = grid_.coord(ax, i);
            v += 0.5 * lambda_ * xa * xa + a[static_cast<std::size_t>(ax)] * xa;
          }
          theta[flat] = v;
        }
        break;
      }
    }
    return project(std::move(theta));
  }

private:
  PotentialKind kind_;
  int dim_;
  double lambda_;
  double l_;
  std::array<double, 3> M_;
  double R_;
  int pieces_;
  GridSpec grid_;
  double a_max_ = 0.0;
  double b_max_ = 0.0;
};

namespace detail {

/// Tabulated values feeding discrete conjugate transforms.
struct ConjSource {
  int dim = 0;
  std::vector<std::vector<double>> axes;  // node coordinates per axis
  std::vector<double> values;             // flattened, axis-0 major
};

struct LazyConj {
  std::once_flag once;
  ConjSource source;
};

inline constexpr int kConjNodesPerAxis = 1024;

}  // namespace detail

/// A member of a PotentialClass: z(x) plus parameters theta.
///
///   quad_shift : z(x) = lambda/2 ||x||^2 + a.x + b,        theta = (a, b)
///   max_quad   : z(x) = lambda/2 ||x||^2 + max_k a_k.x+b_k theta = (a_k, b_k)_k
///   grid       : node values over the class box, multilinear interpolation
///
/// Conjugates and their gradients are analytic for quad_shift; the other
/// kinds go through discrete Legendre transforms on a tabulation of z (its
/// own nodes for grid, a B_{G(R)} grid for max_quad) and are certified for
/// ||y|| <= R only. The tabulation is built lazily once and then shared
/// read-only across threads.
class Potential {
public:
  const PotentialClass& cls() const { return cls_; }
  PotentialKind kind() const { return cls_.kind(); }
  int dim() const { return cls_.dim(); }
  double lambda() const { return cls_.lambda(); }
  const std::vector<double>& theta() const { return theta_; }
  std::size_t param_count() const { return theta_.size(); }

  double eval(const Vec& x) const {
    switch (cls_.kind()) {
      case PotentialKind::quad_shift:
        return 0.5 * lambda() * x.squared_norm() + dot_a(0, x) + theta_[static_cast<std::size_t>(dim())];
      case PotentialKind::max_quad: {
        int active = 0;
        const double m = max_piece(x, active);
        return 0.5 * lambda() * x.squared_norm() + m;
      }
      case PotentialKind::grid:
        return grid_interp(x, nullptr);
    }
    return 0.0;
  }

  /// Gradient of z; for max_quad at an exact tie this is the subgradient of
  /// the lowest-index active piece.
  Vec grad(const Vec& x) const {
    Vec g(dim());
    switch (cls_.kind()) {
      case PotentialKind::quad_shift:
        for (int a = 0; a < dim(); ++a) g[a] = lambda() * x[a] + theta_[static_cast<std::size_t>(a)];
        return g;
      case PotentialKind::max_quad: {
        int active = 0;
        max_piece(x, active);
        const std::size_t off = piece_offset(active);
        for (int a = 0; a < dim(); ++a)
          g[a] = lambda() * x[a] + theta_[off + static_cast<std::size_t>(a)];
        return g;
      }
      case PotentialKind::grid: {
        grid_interp(x, &g);
        return g;
      }
    }
    return g;
  }

  /// z*(y) = sup_x x.y - z(x). Analytic for quad_shift; otherwise the exact
  /// discrete sup over the tabulation nodes, certified for ||y|| <= R.
  double conjugate_eval(const Vec& y) const {
    if (cls_.kind() == PotentialKind::quad_shift) {
      double s = 0.0;
      for (int a = 0; a < dim(); ++a) {
        const double d = y[a] - theta_[static_cast<std::size_t>(a)];
        s += d * d;
      }
      return s / (2.0 * lambda()) - theta_[static_cast<std::size_t>(dim())];
    }
    check_conjugate_range(y);
    std::size_t arg = 0;
    return discrete_conjugate(y, arg);
  }

  /// argmax_x x.y - z(x); exact ties resolved to the lowest lexicographic
  /// tabulation index for the non-analytic kinds.
  Vec conjugate_grad(const Vec& y) const {
    if (cls_.kind() == PotentialKind::quad_shift) {
      Vec g(dim());
      for (int a = 0; a < dim(); ++a)
        g[a] = (y[a] - theta_[static_cast<std::size_t>(a)]) / lambda();
      return g;
    }
    check_conjugate_range(y);
    std::size_t arg = 0;
    discrete_conjugate(y, arg);
    return source_node(arg);
  }

  /// Tabulates z* on a tensor grid (one sorted coordinate vector per axis)
  /// via factored linear-time Legendre transforms. Exact per node; used for
  /// dense sweeps where per-point sups would be wasteful.
  std::vector<double> conjugate_table(const std::vector<std::vector<double>>& y_axes) const {
    if (static_cast<int>(y_axes.size()) != dim())
      throw Error("conjugate_table: axis rank mismatch");
    if (cls_.kind() == PotentialKind::quad_shift) {
      std::vector<double> out;
      out.reserve(tensor_size(y_axes));
      tensor_foreach(y_axes, [&](const Vec& y) { out.push_back(conjugate_eval(y)); });
      return out;
    }
    const detail::ConjSource& src = conj_source();
    if (dim() == 1) return llt_1d(src.axes[0], src.values, y_axes[0]);
    // dim == 2: transform along axis 1 for every x0 row, then along axis 0
    // for every y1 column with the inner result negated.
    const std::size_t n0 = src.axes[0].size();
    const std::size_t n1 = src.axes[1].size();
    const std::size_t m0 = y_axes[0].size();
    const std::size_t m1 = y_axes[1].size();
    std::vector<double> inner(n0 * m1);
    for (std::size_t i0 = 0; i0 < n0; ++i0) {
      std::span<const double> row(src.values.data() + i0 * n1, n1);
      std::vector<double> t = llt_1d(src.axes[1], row, y_axes[1]);
      for (std::size_t j1 = 0; j1 < m1; ++j1) inner[i0 * m1 + j1] = t[j1];
    }
    std::vector<double> out(m0 * m1);
    std::vector<double> col(n0);
    for (std::size_t j1 = 0; j1 < m1; ++j1) {
      for (std::size_t i0 = 0; i0 < n0; ++i0) col[i0] = -inner[i0 * m1 + j1];
      std::vector<double> t = llt_1d(src.axes[0], col, y_axes[0]);
      for (std::size_t j0 = 0; j0 < m0; ++j0) out[j0 * m1 + j1] = t[j0];
    }
    return out;
  }

  /// out += w * dz(x)/dtheta.
  void accumulate_param_grad(const Vec& x, double w, std::span<double> out) const {
    switch (cls_.kind()) {
      case PotentialKind::quad_shift:
        for (int a = 0; a < dim(); ++a) out[static_cast<std::size_t>(a)] += w * x[a];
        out[static_cast<std::size_t>(dim())] += w;
        return;
      case PotentialKind::max_quad: {
        int active = 0;
        max_piece(x, active);
        const std::size_t off = piece_offset(active);
        for (int a = 0; a < dim(); ++a) out[off + static_cast<std::size_t>(a)] += w * x[a];
        out[off + static_cast<std::size_t>(dim())] += w;
        return;
      }
      case PotentialKind::grid: {
        accumulate_grid_weights(x, w, out);
        return;
      }
    }
  }

  /// out += w * dz*(y)/dtheta = -w * dz/dtheta at the conjugate argmax.
  void accumulate_conj_param_grad(const Vec& y, double w, std::span<double> out) const {
    accumulate_param_grad(conjugate_grad(y), -w, out);
  }

private:
  friend class PotentialClass;

  Potential(PotentialClass cls, std::vector<double> theta)
      : cls_(std::move(cls)), theta_(std::move(theta)) {
    if (theta_.size() != cls_.param_count()) throw Error("Potential: parameter count mismatch");
    for (double t : theta_)
      if (!std::isfinite(t)) throw Error("Potential: non-finite parameter");
    if (cls_.kind() != PotentialKind::quad_shift)
      lazy_ = std::make_shared<detail::LazyConj>();
  }

  double dot_a(std::size_t offset, const Vec& x) const {
    double s = 0.0;
    for (int a = 0; a < dim(); ++a) s += theta_[offset + static_cast<std::size_t>(a)] * x[a];
    return s;
  }

  std::size_t piece_offset(int k) const {
    return static_cast<std::size_t>(k) * (static_cast<std::size_t>(dim()) + 1);
  }

  double max_piece(const Vec& x, int& active) const {
    double best = -kInf;
    active = 0;
    bool tie = false;
    for (int k = 0; k < cls_.pieces(); ++k) {
      const std::size_t off = piece_offset(k);
      const double v = dot_a(off, x) + theta_[off + static_cast<std::size_t>(dim())];
      if (v > best) {
        best = v;
        active = k;
        tie = false;
      } else if (v == best && k > active) {
        tie = true;
      }
    }
    if (tie) max_quad_tie_counter().fetch_add(1, std::memory_order_relaxed);
    return best;
  }

  /// Multilinear interpolation over the class box; optionally fills the
  /// interpolation gradient.
  double grid_interp(const Vec& x, Vec* grad_out) const {
    const GridSpec& g = cls_.grid();
    int i0[Vec::kMaxDim];
    double frac[Vec::kMaxDim];
    double step[Vec::kMaxDim];
    for (int a = 0; a < dim(); ++a) {
      const int nAxis = g.shape[static_cast<std::size_t>(a)];
      step[a] = g.step(a);
      const double t = (x[a] - g.lo) / step[a];
      if (t < -1e-9 || t > nAxis - 1 + 1e-9)
        throw Error("grid potential evaluated outside its box");
      const double tc = std::clamp(t, 0.0, static_cast<double>(nAxis - 1));
      i0[a] = std::min(static_cast<int>(tc), nAxis - 2);
      frac[a] = tc - i0[a];
    }
    double value = 0.0;
    if (grad_out) *grad_out = Vec(dim());
    for (int corner = 0; corner < (1 << dim()); ++corner) {
      double w = 1.0;
      std::size_t flat = 0;
      for (int a = 0; a < dim(); ++a) {
        const int bit = (corner >> a) & 1;
        w *= bit ? frac[a] : 1.0 - frac[a];
        flat = flat * static_cast<std::size_t>(g.shape[static_cast<std::size_t>(a)]) +
               static_cast<std::size_t>(i0[a] + bit);
      }
      value += w * theta_[flat];
      if (grad_out) {
        for (int a = 0; a < dim(); ++a) {
          double dw = 1.0;
          for (int b = 0; b < dim(); ++b) {
            const int bit = (corner >> b) & 1;
            if (b == a)
              dw *= (bit ? 1.0 : -1.0) / step[b];
            else
              dw *= bit ? frac[b] : 1.0 - frac[b];
          }
          (*grad_out)[a] += dw * theta_[flat];
        }
      }
    }
    return value;
  }

  void accumulate_grid_weights(const Vec& x, double w, std::span<double> out) const {
    const GridSpec& g = cls_.grid();
    int i0[Vec::kMaxDim];
    double frac[Vec::kMaxDim];
    for (int a = 0; a < dim(); ++a) {
      const int nAxis = g.shape[static_cast<std::size_t>(a)];
      const double t = (x[a] - g.lo) / g.step(a);
      if (t < -1e-9 || t > nAxis - 1 + 1e-9)
        throw Error("grid potential evaluated outside its box");
      const double tc = std::clamp(t, 0.0, static_cast<double>(nAxis - 1));
      i0[a] = std::min(static_cast<int>(tc), nAxis - 2);
      frac[a] = tc - i0[a];
    }
    for (int corner = 0; corner < (1 << dim()); ++corner) {
      double ww = w;
      std::size_t flat = 0;
      for (int a = 0; a < dim(); ++a) {
        const int bit = (corner >> a) & 1;
        ww *= bit ? frac[a] : 1.0 - frac[a];
        flat = flat * static_cast<std::size_t>(g.shape[static_cast<std::size_t>(a)]) +
               static_cast<std::size_t>(i0[a] + bit);
      }
      out[flat] += ww;
    }
  }

  void check_conjugate_range(const Vec& y) const {
    if (y.norm() > cls_.R() * (1.0 + 1e-12) + 1e-12) throw Error("conjugate range exceeded");
  }

  const detail::ConjSource& conj_source() const {
    std::call_once(lazy_->once, [this] {
      detail::ConjSource& src = lazy_->source;
      src.dim = dim();
      if (dim() > 2) throw Error("discrete conjugates support d <= 2");
      if (cls_.kind() == PotentialKind::grid) {
        const GridSpec& g = cls_.grid();
        src.axes.resize(static_cast<std::size_t>(dim()));
        for (int a = 0; a < dim(); ++a) {
          auto& ax = src.axes[static_cast<std::size_t>(a)];
          ax.resize(static_cast<std::size_t>(g.shape[static_cast<std::size_t>(a)]));
          for (std::size_t i = 0; i < ax.size(); ++i) ax[i] = g.coord(a, static_cast<int>(i));
        }
        src.values = theta_;
      } else {
        const double G = cls_.bound_G(cls_.R());
        const int n = detail::kConjNodesPerAxis;
        src.axes.assign(static_cast<std::size_t>(dim()), std::vector<double>(static_cast<std::size_t>(n)));
        for (auto& ax : src.axes)
          for (int i = 0; i < n; ++i) ax[static_cast<std::size_t>(i)] = -G + 2.0 * G * i / (n - 1);
        src.values.resize(dim() == 1 ? static_cast<std::size_t>(n)
                                     : static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
        if (dim() == 1) {
          Vec x(1);
          for (int i = 0; i < n; ++i) {
            x[0] = src.axes[0][static_cast<std::size_t>(i)];
            src.values[static_cast<std::size_t>(i)] = eval(x);
          }
        } else {
          Vec x(2);
          for (int i = 0; i < n; ++i) {
            x[0] = src.axes[0][static_cast<std::size_t>(i)];
            for (int j = 0; j < n; ++j) {
              x[1] = src.axes[1][static_cast<std::size_t>(j)];
              src.values[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                         static_cast<std::size_t>(j)] = eval(x);
            }
          }
        }
      }
    });
    return lazy_->source;
  }

  /// Exact sup over tabulation nodes, scanned in lexicographic order with a
  /// strict comparison so ties keep the lowest index.
  double discrete_conjugate(const Vec& y, std::size_t& argmax) const {
    const detail::ConjSource& src = conj_source();
    double best = -kInf;
    argmax = 0;
    if (dim() == 1) {
      for (std::size_t i = 0; i < src.axes[0].size(); ++i) {
        const double v = y[0] * src.axes[0][i] - src.values[i];
        if (v > best) {
          best = v;
          argmax = i;
        }
      }
    } else {
      const std::size_t n1 = src.axes[1].size();
      for (std::size_t i = 0; i < src.axes[0].size(); ++i) {
        const double part = y[0] * src.axes[0][i];
        for (std::size_t j = 0; j < n1; ++j) {
          const double v = part + y[1] * src.axes[1][j] - src.values[i * n1 + j];
          if (v > best) {
            best = v;
            argmax = i * n1 + j;
          }
        }
      }
    }
    return best;
  }

  Vec source_node(std::size_t flat) const {
    const detail::ConjSource& src = conj_source();
    Vec x(dim());
    if (dim() == 1) {
      x[0] = src.axes[0][flat];
    } else {
      const std::size_t n1 = src.axes[1].size();
      x[0] = src.axes[0][flat / n1];
      x[1] = src.axes[1][flat % n1];
    }
    return x;
  }

  template <class Fn>
  void tensor_foreach(const std::vector<std::vector<double>>& axes, Fn&& fn) const {
    if (dim() == 1) {
      Vec y(1);
      for (double v : axes[0]) {
        y[0] = v;
        fn(y);
      }
    } else if (dim() == 2) {
      Vec y(2);
      for (double v0 : axes[0]) {
        y[0] = v0;
        for (double v1 : axes[1]) {
          y[1] = v1;
          fn(y);
        }
      }
    } else {
      Vec y(3);
      for (double v0 : axes[0]) {
        y[0] = v0;
        for (double v1 : axes[1]) {
          y[1] = v1;
          for (double v2 : axes[2]) {
            y[2] = v2;
            fn(y);
          }
        }
      }
    }
  }

  static std::size_t tensor_size(const std::vector<std::vector<double>>& axes) {
    std::size_t n = 1;
    for (const auto& ax : axes) n *= ax.size();
    return n;
  }

  PotentialClass cls_;
  std::vector<double> theta_;
  std::shared_ptr<detail::LazyConj> lazy_;
};

inline Potential PotentialClass::make(std::vector<double> theta) const {
  return Potential(*this, std::move(theta));
}

namespace detail {

/// Greatest-convex-minorant repair of one line of values on a uniform grid:
/// lower convex hull of (t_i, v_i) evaluated back at the nodes. Values only
/// ever decrease.
inline void convexify_line(std::span<double> v) {
  const std::size_t n = v.size();
  if (n < 3) return;
  std::vector<std::size_t> hull;
  hull.reserve(n);
  auto above_chord = [&](std::size_t a, std::size_t b, std::size_t c) {
    return static_cast<double>(b - a) * (v[c] - v[a]) -
               (v[b] - v[a]) * static_cast<double>(c - a) <
           0.0;
  };
  for (std::size_t i = 0; i < n; ++i) {
    while (hull.size() >= 2 && above_chord(hull[hull.size() - 2], hull.back(), i))
      hull.pop_back();
    hull.push_back(i);
  }
  for (std::size_t h = 0; h + 1 < hull.size(); ++h) {
    const std::size_t a = hull[h];
    const std::size_t b = hull[h + 1];
    const double va = v[a];
    const double vb = v[b];
    for (std::size_t i = a + 1; i < b; ++i)
      v[i] = va + (vb - va) * static_cast<double>(i - a) / static_cast<double>(b - a);
  }
}

}  // namespace detail

/// Axiswise discrete convexity check for grid parameters: second differences
/// of v - lambda*q must be >= -tol along every axis line.
inline bool grid_axis_convex(const PotentialClass& cls, std::span<const double> values,
                             double tol = 1e-9) {
  const GridSpec& g = cls.grid();
  const int d = cls.dim();
  for (int axis = 0; axis < d; ++axis) {
    const int nAxis = g.shape[static_cast<std::size_t>(axis)];
    const double h = g.step(axis);
    const double quad_dd = cls.lambda() * h * h;
    std::size_t stride = 1;
    for (int a = axis + 1; a < d; ++a) stride *= static_cast<std::size_t>(g.shape[static_cast<std::size_t>(a)]);
    std::size_t lines = g.node_count() / static_cast<std::size_t>(nAxis);
    std::size_t outer_stride = stride * static_cast<std::size_t>(nAxis);
    for (std::size_t line = 0; line < lines; ++line) {
      const std::size_t block = line / stride;
      const std::size_t within = line % stride;
      const std::size_t base = block * outer_stride + within;
      for (int i = 1; i + 1 < nAxis; ++i) {
        const double dd = values[base + static_cast<std::size_t>(i + 1) * stride] -
                          2.0 * values[base + static_cast<std::size_t>(i) * stride] +
                          values[base + static_cast<std::size_t>(i - 1) * stride];
        if (dd < quad_dd - tol) return false;
      }
    }
  }
  return true;
}

inline std::vector<double> PotentialClass::project(std::vector<double> theta) const {
  if (theta.size() != param_count()) throw Error("project: parameter count mismatch");
  for (double& t : theta)
    if (!std::isfinite(t)) throw Error("project: non-finite parameter");

  auto clamp_affine = [&](std::size_t off) {
    double na = 0.0;
    for (int a = 0; a < dim_; ++a) {
      const double v = theta[off + static_cast<std::size_t>(a)];
      na += v * v;
    }
    na = std::sqrt(na);
    if (na > a_max_) {
      const double s = a_max_ / na;
      for (int a = 0; a < dim_; ++a) theta[off + static_cast<std::size_t>(a)] *= s;
      na = a_max_;
    }
    const double b_lo = l_ + na * na / (2.0 * lambda_);
    double& b = theta[off + static_cast<std::size_t>(dim_)];
    b = std::clamp(b, b_lo, b_max_);
  };

  switch (kind_) {
    case PotentialKind::quad_shift:
      clamp_affine(0);
      return theta;
    case PotentialKind::max_quad: {
      const std::size_t stride = static_cast<std::size_t>(dim_) + 1;
      for (int k = 0; k < pieces_; ++k) clamp_affine(static_cast<std::size_t>(k) * stride);
      return theta;
    }
    case PotentialKind::grid:
      break;
  }

  // Grid repair: peel off the quadratic, alternate axiswise hull passes until
  // convex, clamp node values into [l, M(||x||)], and finish with one more
  // convexification so the convexity invariant is what survives.
  const GridSpec& g = grid_;
  const std::size_t total = g.node_count();
  std::vector<double> node_q(total), node_r(total);
  for (std::size_t flat = 0; flat < total; ++flat) {
    double sq = 0.0;
    std::size_t rem = flat;
    for (int ax = dim_ - 1; ax >= 0; --ax) {
      const int nAxis = g.shape[static_cast<std::size_t>(ax)];
      const int i = static_cast<int>(rem % static_cast<std::size_t>(nAxis));
      rem /= static_cast<std::size_t>(nAxis);
      const double xa = g.coord(ax, i);
      sq += xa * xa;
    }
    node_q[flat] = 0.5 * lambda_ * sq;
    node_r[flat] = std::sqrt(sq);
  }

  auto convexify_all = [&](std::vector<double>& v) {
    for (int sweep = 0; sweep < 64; ++sweep) {
      for (int axis = 0; axis < dim_; ++axis) {
        const int nAxis = g.shape[static_cast<std::size_t>(axis)];
        std::size_t stride = 1;
        for (int a = axis + 1; a < dim_; ++a)
          stride *= static_cast<std::size_t>(g.shape[static_cast<std::size_t>(a)]);
        const std::size_t lines = total / static_cast<std::size_t>(nAxis);
        const std::size_t outer_stride = stride * static_cast<std::size_t>(nAxis);
        std::vector<double> line(static_cast<std::size_t>(nAxis));
        for (std::size_t ln = 0; ln < lines; ++ln) {
          const std::size_t base = (ln / stride) * outer_stride + (ln % stride);
          for (int i = 0; i < nAxis; ++i)
            line[static_cast<std::size_t>(i)] = v[base + static_cast<std::size_t>(i) * stride];
          detail::convexify_line(line);
          for (int i = 0; i < nAxis; ++i)
            v[base + static_cast<std::size_t>(i) * stride] = line[static_cast<std::size_t>(i)];
        }
      }
      // stop once every axis line is convex
      bool ok = true;
      for (int axis = 0; axis < dim_ && ok; ++axis) {
        const int nAxis = g.shape[static_cast<std::size_t>(axis)];
        std::size_t stride = 1;
        for (int a = axis + 1; a < dim_; ++a)
          stride *= static_cast<std::size_t>(g.shape[static_cast<std::size_t>(a)]);
        const std::size_t lines = total / static_cast<std::size_t>(nAxis);
        const std::size_t outer_stride = stride * static_cast<std::size_t>(nAxis);
        for (std::size_t ln = 0; ln < lines && ok; ++ln) {
          const std::size_t base = (ln / stride) * outer_stride + (ln % stride);
          for (int i = 1; i + 1 < nAxis; ++i) {
            const double dd = v[base + static_cast<std::size_t>(i + 1) * stride] -
                              2.0 * v[base + static_cast<std::size_t>(i) * stride] +
                              v[base + static_cast<std::size_t>(i - 1) * stride];
            if (dd < -1e-12) {
              ok = false;
              break;
            }
          }
        }
      }
      if (ok) return;
    }
  };

  std::vector<double> gvals(total);
  for (int outer = 0; outer < 32; ++outer) {
    for (std::size_t i = 0; i < total; ++i) gvals[i] = theta[i] - node_q[i];
    convexify_all(gvals);
    bool clamped = false;
    for (std::size_t i = 0; i < total; ++i) {
      double v = gvals[i] + node_q[i];
      const double hi = M_at(node_r[i]);
      const double c = std::clamp(v, l_, hi);
      if (c != v) clamped = true;
      theta[i] = c;
    }
    if (!clamped) return theta;
  }
  for (std::size_t i = 0; i < total; ++i) gvals[i] = theta[i] - node_q[i];
  convexify_all(gvals);
  for (std::size_t i = 0; i < total; ++i) theta[i] = gvals[i] + node_q[i];
  return theta;
}

/// Spot check of the Fenchel Lipschitz bound: the sup of |z1* - z2*| over a
/// dense grid of B_R against the sup of |z1 - z2| over a dense grid of
/// B_{G(R)}. `ok` allows for the grid gap via a measured slope of the
/// differences.
struct ConjLipschitzReport {
  double lhs = 0.0;
  double rhs = 0.0;
  bool ok = false;
};

inline ConjLipschitzReport check_conj_lipschitz(const Potential& z1, const Potential& z2,
                                                double R, int nodes_per_axis = 0) {
  if (z1.dim() != z2.dim() || z1.lambda() != z2.lambda())
    throw Error("check_conj_lipschitz: potentials must share class bounds");
  const int d = z1.dim();
  if (nodes_per_axis <= 0) nodes_per_axis = d == 1 ? 513 : (d == 2 ? 65 : 25);
  const double G = z1.cls().bound_G(R);

  auto axis_grid = [&](double r) {
    std::vector<double> ax(static_cast<std::size_t>(nodes_per_axis));
    for (int i = 0; i < nodes_per_axis; ++i)
      ax[static_cast<std::size_t>(i)] = -r + 2.0 * r * i / (nodes_per_axis - 1);
    return ax;
  };

  ConjLipschitzReport rep;
  double conj_slope = 0.0, prim_slope = 0.0;

  {
    const std::vector<std::vector<double>> axes(static_cast<std::size_t>(d), axis_grid(R));
    const std::vector<double> t1 = z1.conjugate_table(axes);
    const std::vector<double> t2 = z2.conjugate_table(axes);
    const double h = 2.0 * R / (nodes_per_axis - 1);
    // scan nodes inside the ball; track the largest adjacent jump along the
    // fastest axis for the tolerance
    const std::size_t total = t1.size();
    for (std::size_t flat = 0; flat < total; ++flat) {
      std::size_t rem = flat;
      double sq = 0.0;
      for (int a = d - 1; a >= 0; --a) {
        const int i = static_cast<int>(rem % static_cast<std::size_t>(nodes_per_axis));
        rem /= static_cast<std::size_t>(nodes_per_axis);
        const double c = axes[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)];
        sq += c * c;
      }
      const double diff = std::abs(t1[flat] - t2[flat]);
      if (sq <= R * R * (1.0 + 1e-12) && diff > rep.lhs) rep.lhs = diff;
      if (flat % static_cast<std::size_t>(nodes_per_axis) != 0) {
        const double jump =
            std::abs((t1[flat] - t2[flat]) - (t1[flat - 1] - t2[flat - 1])) / h;
        conj_slope = std::max(conj_slope, jump);
      }
    }
  }

  {
    const std::vector<std::vector<double>> axes(static_cast<std::size_t>(d), axis_grid(G));
    const double h = 2.0 * G / (nodes_per_axis - 1);
    std::size_t total = 1;
    for (const auto& ax : axes) total *= ax.size();
    double prev = 0.0;
    for (std::size_t flat = 0; flat < total; ++flat) {
      std::size_t rem = flat;
      Vec x(d);
      double sq = 0.0;
      for (int a = d - 1; a >= 0; --a) {
        const int i = static_cast<int>(rem % static_cast<std::size_t>(nodes_per_axis));
        rem /= static_cast<std::size_t>(nodes_per_axis);
        x[a] = axes[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)];
        sq += x[a] * x[a];
      }
      const double diff = z1.eval(x) - z2.eval(x);
      if (sq <= G * G * (1.0 + 1e-12)) rep.rhs = std::max(rep.rhs, std::abs(diff));
      if (flat % static_cast<std::size_t>(nodes_per_axis) != 0)
        prim_slope = std::max(prim_slope, std::abs(diff - prev) / h);
      prev = diff;
    }
  }

  const double hc = 2.0 * R / (nodes_per_axis - 1);
  const double hp = 2.0 * G / (nodes_per_axis - 1);
  const double tol = 1e-9 + 4.0 * std::sqrt(static_cast<double>(d)) * (hc * conj_slope + hp * prim_slope);
  rep.ok = rep.lhs <= rep.rhs + tol;
  return rep;
}

/// Free-function spellings of the class bound operations.
inline double bound_G(const PotentialClass& cls, double r) { return cls.bound_G(r); }
inline double bound_Mprime(const PotentialClass& cls, double r) { return cls.bound_Mprime(r); }
inline std::vector<double> project_to_class(const PotentialClass& cls, std::vector<double> theta) {
  return cls.project(std::move(theta));
}

}  // namespace uot
