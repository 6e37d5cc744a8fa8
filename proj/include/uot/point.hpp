#pragma once

#include <array>
#include <cmath>
#include <initializer_list>
#include <span>
#include <sstream>

#include "uot/common.hpp"

namespace uot {

/// Point in R^d with d <= 3. Dimension is a runtime value; storage is fixed.
class Vec {
public:
  static constexpr int kMaxDim = 3;

  Vec() : dim_(0) {}

  explicit Vec(int dim) : dim_(dim) {
    if (dim < 1 || dim > kMaxDim) throw Error("Vec: dimension must be in [1,3]");
    c_.fill(0.0);
  }

  Vec(std::initializer_list<double> xs) : dim_(static_cast<int>(xs.size())) {
    if (dim_ < 1 || dim_ > kMaxDim) throw Error("Vec: dimension must be in [1,3]");
    int i = 0;
    for (double x : xs) c_[i++] = x;
    for (; i < kMaxDim; ++i) c_[i] = 0.0;
  }

  explicit Vec(std::span<const double> xs) : dim_(static_cast<int>(xs.size())) {
    if (dim_ < 1 || dim_ > kMaxDim) throw Error("Vec: dimension must be in [1,3]");
    int i = 0;
    for (double x : xs) c_[i++] = x;
    for (; i < kMaxDim; ++i) c_[i] = 0.0;
  }

  int dim() const { return dim_; }
  double operator[](int i) const { return c_[static_cast<std::size_t>(i)]; }
  double& operator[](int i) { return c_[static_cast<std::size_t>(i)]; }

  std::span<const double> coords() const { return {c_.data(), static_cast<std::size_t>(dim_)}; }

  bool finite() const {
    for (int i = 0; i < dim_; ++i)
      if (!std::isfinite(c_[static_cast<std::size_t>(i)])) return false;
    return true;
  }

  friend Vec operator+(const Vec& a, const Vec& b) {
    Vec r(a.dim_);
    for (int i = 0; i < a.dim_; ++i) r[i] = a[i] + b[i];
    return r;
  }
  friend Vec operator-(const Vec& a, const Vec& b) {
    Vec r(a.dim_);
    for (int i = 0; i < a.dim_; ++i) r[i] = a[i] - b[i];
    return r;
  }
  friend Vec operator*(double s, const Vec& a) {
    Vec r(a.dim_);
    for (int i = 0; i < a.dim_; ++i) r[i] = s * a[i];
    return r;
  }

  friend double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (int i = 0; i < a.dim_; ++i) s += a[i] * b[i];
    return s;
  }

  double squared_norm() const { return dot(*this, *this); }
  double norm() const { return std::sqrt(squared_norm()); }

  std::string str() const {
    std::ostringstream os;
    os << "(";
    for (int i = 0; i < dim_; ++i) os << (i ? "," : "") << c_[static_cast<std::size_t>(i)];
    os << ")";
    return os.str();
  }

private:
  std::array<double, kMaxDim> c_{};
  int dim_;
};

/// q(x) = ||x||^2 / 2, the quadratic cost kernel.
inline double quad(const Vec& x) { return 0.5 * x.squared_norm(); }

/// c(x, y) = q(x - y).
inline double quad_cost(const Vec& x, const Vec& y) { return quad(x - y); }

}  // namespace uot
