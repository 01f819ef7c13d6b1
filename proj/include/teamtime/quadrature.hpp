#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>

namespace teamtime::quad {

// Nodes and weights of the 64-point Gauss-Legendre rule on [-1, 1], computed
// once by Newton iteration on P_64.
struct GaussLegendre64 {
  static constexpr std::size_t kNodes = 64;
  std::array<double, kNodes> x{};
  std::array<double, kNodes> w{};

  GaussLegendre64() {
    constexpr int n = static_cast<int>(kNodes);
    for (int i = 0; i < n / 2; ++i) {
      double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = 0.0;
        for (int j = 1; j <= n; ++j) {
          const double p2 = p1;
          p1 = p0;
          p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
        }
        dp = n * (z * p0 - p1) / (z * z - 1.0);
        const double dz = p0 / dp;
        z -= dz;
        if (std::abs(dz) < 1e-16) break;
      }
      x[i] = -z;
      x[n - 1 - i] = z;
      w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
  }

  static const GaussLegendre64& instance() {
    static const GaussLegendre64 rule;
    return rule;
  }

  template <class F>
  double apply(F&& f, double a, double b) const {
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double s = 0.0;
    for (std::size_t i = 0; i < kNodes; ++i) s += w[i] * f(mid + half * x[i]);
    return s * half;
  }
};

namespace detail {

template <class F>
double adaptive(F& f, double a, double b, double whole, double tol, int depth) {
  const auto& rule = GaussLegendre64::instance();
  const double m = 0.5 * (a + b);
  const double left = rule.apply(f, a, m);
  const double right = rule.apply(f, m, b);
  const double both = left + right;
  if (depth <= 0 || std::abs(both - whole) <= tol * std::max(std::abs(both), 1e-300)) return both;
  return adaptive(f, a, m, left, tol, depth - 1) + adaptive(f, m, b, right, tol, depth - 1);
}

}  // namespace detail

// Adaptive 64-node Gauss-Legendre: a panel is accepted when its two halves
// agree with the whole to relative tolerance `tol`.
template <class F>
double integrate(F f, double a, double b, double tol = 1e-13, int max_depth = 40) {
  if (a == b) return 0.0;
  const double whole = GaussLegendre64::instance().apply(f, a, b);
  return detail::adaptive(f, a, b, whole, tol, max_depth);
}

}  // namespace teamtime::quad
