#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "uot/common.hpp"

namespace uot {

/// Discrete Legendre transform on a line:
///
///   out[j] = max_i ( y[j] * x[i] - z[i] )
///
/// computed in O(n + m). The maximizer of a linear functional over the point
/// set {(x_i, z_i)} lies on its lower convex hull, and as y increases the
/// maximizing hull vertex moves monotonically to the right; one hull build
/// plus one two-pointer sweep covers every slope. For convex z the hull keeps
/// all points and the result equals the brute-force transform exactly; for
/// non-convex z it equals the transform of the convex hull (which coincides
/// with the pointwise maximum anyway).
///
/// Both grids must be sorted strictly increasing.
inline std::vector<double> llt_1d(std::span<const double> x, std::span<const double> z,
                                  std::span<const double> y) {
  const std::size_t n = x.size();
  if (n == 0 || z.size() != n) throw Error("llt_1d: x/z size mismatch");
  for (std::size_t i = 0; i + 1 < n; ++i)
    if (!(x[i] < x[i + 1])) throw Error("llt_1d: x grid must be strictly increasing");
  for (std::size_t j = 0; j + 1 < y.size(); ++j)
    if (!(y[j] < y[j + 1])) throw Error("llt_1d: y grid must be strictly increasing");
  for (std::size_t i = 0; i < n; ++i)
    if (!is_finite(z[i])) throw Error("llt_1d: values must be finite");

  // Lower convex hull, collinear points kept so convex inputs pass through
  // untouched. hull holds indices into x/z.
  std::vector<std::size_t> hull;
  hull.reserve(n);
  auto above_chord = [&](std::size_t a, std::size_t b, std::size_t c) {
    // true when b lies strictly above the chord a-c
    return (x[b] - x[a]) * (z[c] - z[a]) - (z[b] - z[a]) * (x[c] - x[a]) < 0.0;
  };
  for (std::size_t i = 0; i < n; ++i) {
    while (hull.size() >= 2 && above_chord(hull[hull.size() - 2], hull.back(), i))
      hull.pop_back();
    hull.push_back(i);
  }

  std::vector<double> out(y.size());
  std::size_t k = 0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    auto val = [&](std::size_t h) { return y[j] * x[hull[h]] - z[hull[h]]; };
    while (k + 1 < hull.size() && val(k + 1) >= val(k)) ++k;
    out[j] = val(k);
  }
  return out;
}

inline std::vector<double> llt_1d(const std::vector<double>& x, const std::vector<double>& z,
                                  const std::vector<double>& y) {
  return llt_1d(std::span<const double>(x), std::span<const double>(z),
                std::span<const double>(y));
}

}  // namespace uot
