#pragma once

// Maximum-likelihood estimation for the four duration families.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include <json.hpp>

#include "dataset.hpp"
#include "distributions.hpp"
#include "errors.hpp"
#include "special_functions.hpp"

namespace teamtime {

struct FitResult {
  DurationModel model;
  double log_likelihood;
  int k = 2;
  bool converged = true;
  int iterations = 0;
  // Relative stationarity residual of the shape equation (0 for closed forms).
  double residual = 0.0;
};

inline constexpr int kMaxFitIterations = 200;
inline constexpr double kFitTolerance = 1e-10;
inline constexpr double kShapeLo = 1e-3;
inline constexpr double kShapeHi = 1e3;

namespace detail {

inline void check_fittable(Family f, const Dataset& data) {
  if (data.n() < 2) throw DomainError("fitting needs at least two samples");
  for (double x : data.samples) {
    if (!std::isfinite(x)) throw DomainError("dataset contains a non-finite sample");
    if (f != Family::Normal && !(x > 0.0))
      throw DomainError(std::string(family_name(f)) + " fit requires strictly positive samples, got " +
                        format_number(x));
  }
}

struct Moments {
  double mean;
  double var;  // n denominator
};

inline Moments moments(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return {m, ss / n};
}

inline Moments log_moments(std::span<const double> xs) {
  std::vector<double> logs(xs.size());
  std::transform(xs.begin(), xs.end(), logs.begin(), [](double x) { return std::log(x); });
  return moments(logs);
}

// Coefficient of variation of a Weibull with the given shape.
inline double weibull_cv2(double shape) {
  const double g1 = special::log_gamma(1.0 + 1.0 / shape);
  const double g2 = special::log_gamma(1.0 + 2.0 / shape);
  return std::exp(g2 - 2.0 * g1) - 1.0;
}

}  // namespace detail

// Method-of-moments starting point for the MLE.
inline DurationModel moment_init(Family f, const Dataset& data) {
  detail::check_fittable(f, data);
  const auto mom = detail::moments(data.samples);
  if (!(mom.var > 0.0)) throw DegenerateDataError("all samples are equal; no proper fit exists");
  switch (f) {
    case Family::Normal: return DurationModel::normal(mom.mean, std::sqrt(mom.var));
    case Family::LogNormal: {
      const auto lm = detail::log_moments(data.samples);
      if (!(lm.var > 0.0)) throw DegenerateDataError("all samples are equal; no proper fit exists");
      return DurationModel::lognormal(lm.mean, std::sqrt(lm.var));
    }
    case Family::Gamma:
      return DurationModel::gamma(mom.mean * mom.mean / mom.var, mom.mean / mom.var);
    case Family::Weibull: {
      // cv^2 is decreasing in shape; coarse bisection on ln(shape).
      const double target = mom.var / (mom.mean * mom.mean);
      double lo = std::log(0.05), hi = std::log(50.0);
      double shape = 1.0;
      if (mom.mean > 0.0 && detail::weibull_cv2(std::exp(lo)) > target &&
          detail::weibull_cv2(std::exp(hi)) < target) {
        for (int i = 0; i < 30; ++i) {
          const double mid = 0.5 * (lo + hi);
          (detail::weibull_cv2(std::exp(mid)) > target ? lo : hi) = mid;
        }
        shape = std::exp(0.5 * (lo + hi));
      }
      return DurationModel::weibull(shape,
                                    mom.mean / std::exp(special::log_gamma(1.0 + 1.0 / shape)));
    }
  }
  throw DomainError("invalid family");
}

namespace detail {

struct ShapeSolution {
  double shape;
  int iterations;
  double residual;
  bool converged;
};

// Root of an increasing function g on [kShapeLo, kShapeHi]. `eval` returns
// (g, g', relative residual). Newton steps that leave the current bracket
// fall back to bisection.
template <class Eval>
ShapeSolution solve_shape(Eval eval, double start) {
  double lo = kShapeLo, hi = kShapeHi;
  const auto at_lo = eval(lo);
  const auto at_hi = eval(hi);
  if (std::get<0>(at_lo) > 0.0) return {lo, 0, std::get<2>(at_lo), false};
  if (std::get<0>(at_hi) < 0.0) return {hi, 0, std::get<2>(at_hi), false};

  double x = std::clamp(start, lo, hi);
  for (int it = 1; it <= kMaxFitIterations; ++it) {
    const auto [g, dg, rel] = eval(x);
    if (rel < kFitTolerance) return {x, it, rel, true};
    if (g < 0.0) lo = x;
    else hi = x;
    double next = (dg > 0.0) ? x - g / dg : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == x) return {x, it, rel, rel < kFitTolerance};
    x = next;
  }
  const auto [g, dg, rel] = eval(x);
  return {x, kMaxFitIterations, rel, rel < kFitTolerance};
}

inline FitResult finish(const DurationModel& model, const Dataset& data, bool converged,
                        int iterations, double residual) {
  return FitResult{model, log_likelihood(model, data), 2, converged, iterations, residual};
}

inline FitResult fit_weibull(const Dataset& data) {
  // Work with y = x / max(x) so y^shape never overflows; the profile shape
  // equation is invariant under rescaling.
  const double xmax = *std::max_element(data.samples.begin(), data.samples.end());
  const double n = static_cast<double>(data.n());
  std::vector<double> ly(data.n());
  std::transform(data.samples.begin(), data.samples.end(), ly.begin(),
                 [xmax](double x) { return std::log(x / xmax); });
  const double mean_ly = std::accumulate(ly.begin(), ly.end(), 0.0) / n;

  auto eval = [&](double k) {
    double b = 0.0, a = 0.0, c = 0.0;
    for (double l : ly) {
      const double w = std::exp(k * l);
      b += w;
      a += w * l;
      c += w * l * l;
    }
    const double g = a / b - 1.0 / k - mean_ly;
    const double dg = c / b - (a / b) * (a / b) + 1.0 / (k * k);
    return std::make_tuple(g, dg, std::abs(g) * k);
  };
  const auto init = moment_init(Family::Weibull, data).as<WeibullParams>();
  const auto sol = solve_shape(eval, init.shape);

  double b = 0.0;
  for (double l : ly) b += std::exp(sol.shape * l);
  const double scale = xmax * std::pow(b / n, 1.0 / sol.shape);
  return finish(DurationModel::weibull(sol.shape, scale), data, sol.converged, sol.iterations,
                sol.residual);
}

inline FitResult fit_gamma(const Dataset& data) {
  const auto mom = moments(data.samples);
  const auto lm = log_moments(data.samples);
  // s > 0 by Jensen for non-degenerate data.
  const double s = std::log(mom.mean) - lm.mean;
  if (!(s > 0.0)) throw DegenerateDataError("all samples are equal; no proper fit exists");

  // ln k - psi(k) - s is decreasing in k; negate to hand solve_shape an increasing function.
  auto eval = [&](double k) {
    const double h = std::log(k) - special::digamma(k) - s;
    const double dh = 1.0 / k - special::trigamma(k);
    return std::make_tuple(-h, -dh, std::abs(h) / s);
  };
  const auto init = moment_init(Family::Gamma, data).as<GammaParams>();
  const auto sol = solve_shape(eval, init.shape);
  return finish(DurationModel::gamma(sol.shape, sol.shape / mom.mean), data, sol.converged,
                sol.iterations, sol.residual);
}

}  // namespace detail

// Maximum-likelihood fit. Normal and LogNormal are closed form (n
// denominator); Weibull and Gamma solve their profile shape equations.
// Non-convergence is reported through FitResult::converged, not thrown.
inline FitResult fit_mle(Family f, const Dataset& data) {
  detail::check_fittable(f, data);
  switch (f) {
    case Family::Normal:
    case Family::LogNormal: {
      const auto model = moment_init(f, data);
      return detail::finish(model, data, true, 0, 0.0);
    }
    case Family::Weibull: {
      if (!(detail::moments(data.samples).var > 0.0))
        throw DegenerateDataError("all samples are equal; no proper fit exists");
      return detail::fit_weibull(data);
    }
    case Family::Gamma: return detail::fit_gamma(data);
  }
  throw DomainError("invalid family");
}

// Gradient of the log-likelihood in the canonical parameter pair.
inline std::pair<double, double> score(const DurationModel& m, const Dataset& data) {
  const double n = static_cast<double>(data.n());
  double d1 = 0.0, d2 = 0.0;
  switch (m.family()) {
    case Family::Normal:
    case Family::LogNormal: {
      const auto [mu, sigma] = m.pair();
      const bool logs = m.family() == Family::LogNormal;
      for (double x : data.samples) {
        const double v = logs ? std::log(x) : x;
        d1 += (v - mu);
        d2 += (v - mu) * (v - mu);
      }
      return {d1 / (sigma * sigma), -n / sigma + d2 / (sigma * sigma * sigma)};
    }
    case Family::Weibull: {
      const auto& p = m.as<WeibullParams>();
      double sum_l = 0.0, sum_r = 0.0, sum_rl = 0.0;
      for (double x : data.samples) {
        const double l = std::log(x / p.scale);
        const double r = std::pow(x / p.scale, p.shape);
        sum_l += l;
        sum_r += r;
        sum_rl += r * l;
      }
      return {n / p.shape + sum_l - sum_rl, (p.shape / p.scale) * (sum_r - n)};
    }
    case Family::Gamma: {
      const auto& p = m.as<GammaParams>();
      double sum_lx = 0.0, sum_x = 0.0;
      for (double x : data.samples) {
        sum_lx += std::log(x);
        sum_x += x;
      }
      return {n * std::log(p.rate) - n * special::digamma(p.shape) + sum_lx,
              n * p.shape / p.rate - sum_x};
    }
  }
  return {0.0, 0.0};
}

inline nlohmann::ordered_json to_json(const FitResult& fit) {
  nlohmann::ordered_json j = to_json(fit.model);
  j["log_likelihood"] = fit.log_likelihood;
  j["k"] = fit.k;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  return j;
}

}  // namespace teamtime
