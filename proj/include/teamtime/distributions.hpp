#pragma once

// The four candidate duration families and their evaluation/sampling.
//
// Parameterizations:
//   Normal     mean mu (s), standard deviation sigma (s)
//   Weibull    shape (dimensionless), scale (s)
//   Gamma      shape (dimensionless), rate (1/s)
//   LogNormal  mu, sigma of ln(duration)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dataset.hpp"
#include "errors.hpp"
#include "random.hpp"
#include "special_functions.hpp"

namespace teamtime {

enum class Family { Normal, Weibull, Gamma, LogNormal };

inline constexpr Family kAllFamilies[] = {Family::Normal, Family::Weibull, Family::Gamma,
                                          Family::LogNormal};

inline std::string_view family_name(Family f) {
  switch (f) {
    case Family::Normal: return "normal";
    case Family::Weibull: return "weibull";
    case Family::Gamma: return "gamma";
    case Family::LogNormal: return "lognormal";
  }
  return "?";
}

inline Family parse_family(std::string_view name) {
  for (Family f : kAllFamilies)
    if (family_name(f) == name) return f;
  throw DomainError("unknown distribution family '" + std::string(name) +
                    "' (expected normal, weibull, gamma or lognormal)");
}

struct NormalParams {
  double mu;
  double sigma;
};
struct WeibullParams {
  double shape;
  double scale;
};
struct GammaParams {
  double shape;
  double rate;
};
struct LogNormalParams {
  double mu;
  double sigma;
};

// Alternative index matches the Family enumerator.
using FamilyParams = std::variant<NormalParams, WeibullParams, GammaParams, LogNormalParams>;

// Immutable, validated family tag plus parameters.
class DurationModel {
 public:
  explicit DurationModel(FamilyParams params) : params_(params) { validate(); }

  static DurationModel normal(double mu, double sigma) { return DurationModel(NormalParams{mu, sigma}); }
  static DurationModel weibull(double shape, double scale) {
    return DurationModel(WeibullParams{shape, scale});
  }
  static DurationModel gamma(double shape, double rate) { return DurationModel(GammaParams{shape, rate}); }
  static DurationModel lognormal(double mu, double sigma) {
    return DurationModel(LogNormalParams{mu, sigma});
  }

  // Builds a model from the family's two parameters in canonical order.
  static DurationModel from_pair(Family f, double first, double second) {
    switch (f) {
      case Family::Normal: return normal(first, second);
      case Family::Weibull: return weibull(first, second);
      case Family::Gamma: return gamma(first, second);
      case Family::LogNormal: return lognormal(first, second);
    }
    throw DomainError("invalid family");
  }

  Family family() const { return static_cast<Family>(params_.index()); }
  const FamilyParams& params() const { return params_; }

  template <class P>
  const P& as() const {
    return std::get<P>(params_);
  }

  // The two parameters in canonical order (mu/sigma, shape/scale, shape/rate).
  std::pair<double, double> pair() const {
    return std::visit([](const auto& p) -> std::pair<double, double> {
      using P = std::decay_t<decltype(p)>;
      if constexpr (std::is_same_v<P, WeibullParams>) return {p.shape, p.scale};
      else if constexpr (std::is_same_v<P, GammaParams>) return {p.shape, p.rate};
      else return {p.mu, p.sigma};
    }, params_);
  }

  bool operator==(const DurationModel& other) const {
    return family() == other.family() && pair() == other.pair();
  }

 private:
  void validate() const {
    const auto [a, b] = pair();
    if (!std::isfinite(a) || !std::isfinite(b))
      throw DomainError(std::string(family_name(family())) + " parameters must be finite");
    const bool first_positive = family() == Family::Weibull || family() == Family::Gamma;
    if ((first_positive && !(a > 0.0)) || !(b > 0.0))
      throw DomainError(std::string(family_name(family())) + " parameters violate positivity");
  }

  FamilyParams params_;
};

// Names of the two parameters, as used by the text and JSON forms.
inline std::pair<std::string_view, std::string_view> param_names(Family f) {
  switch (f) {
    case Family::Weibull: return {"shape", "scale"};
    case Family::Gamma: return {"shape", "rate"};
    default: return {"mu", "sigma"};
  }
}

// ---------------------------------------------------------------------------
// Evaluation

inline double log_pdf(const DurationModel& m, double x) {
  constexpr double ninf = -std::numeric_limits<double>::infinity();
  constexpr double half_log_2pi = 0.91893853320467274178;
  switch (m.family()) {
    case Family::Normal: {
      const auto& p = m.as<NormalParams>();
      const double z = (x - p.mu) / p.sigma;
      return -0.5 * z * z - std::log(p.sigma) - half_log_2pi;
    }
    case Family::Weibull: {
      if (!(x > 0.0)) return ninf;
      const auto& p = m.as<WeibullParams>();
      const double r = x / p.scale;
      return std::log(p.shape / p.scale) + (p.shape - 1.0) * std::log(r) - std::pow(r, p.shape);
    }
    case Family::Gamma: {
      if (!(x > 0.0)) return ninf;
      const auto& p = m.as<GammaParams>();
      return p.shape * std::log(p.rate) - special::log_gamma(p.shape) +
             (p.shape - 1.0) * std::log(x) - p.rate * x;
    }
    case Family::LogNormal: {
      if (!(x > 0.0)) return ninf;
      const auto& p = m.as<LogNormalParams>();
      const double lx = std::log(x);
      const double z = (lx - p.mu) / p.sigma;
      return -lx - std::log(p.sigma) - half_log_2pi - 0.5 * z * z;
    }
  }
  return ninf;
}

inline double pdf(const DurationModel& m, double x) {
  if (m.family() != Family::Normal && !(x > 0.0)) return 0.0;
  return std::exp(log_pdf(m, x));
}

inline double cdf(const DurationModel& m, double x) {
  switch (m.family()) {
    case Family::Normal: {
      const auto& p = m.as<NormalParams>();
      return special::normal_cdf((x - p.mu) / p.sigma);
    }
    case Family::Weibull: {
      if (!(x > 0.0)) return 0.0;
      const auto& p = m.as<WeibullParams>();
      return -std::expm1(-std::pow(x / p.scale, p.shape));
    }
    case Family::Gamma: {
      if (!(x > 0.0)) return 0.0;
      const auto& p = m.as<GammaParams>();
      return special::gamma_p(p.shape, p.rate * x);
    }
    case Family::LogNormal: {
      if (!(x > 0.0)) return 0.0;
      const auto& p = m.as<LogNormalParams>();
      return special::normal_cdf((std::log(x) - p.mu) / p.sigma);
    }
  }
  return 0.0;
}

// 1 - cdf, computed without cancellation in the right tail.
inline double survival(const DurationModel& m, double x) {
  switch (m.family()) {
    case Family::Normal: {
      const auto& p = m.as<NormalParams>();
      return special::normal_sf((x - p.mu) / p.sigma);
    }
    case Family::Weibull: {
      if (!(x > 0.0)) return 1.0;
      const auto& p = m.as<WeibullParams>();
      return std::exp(-std::pow(x / p.scale, p.shape));
    }
    case Family::Gamma: {
      if (!(x > 0.0)) return 1.0;
      const auto& p = m.as<GammaParams>();
      return special::gamma_q(p.shape, p.rate * x);
    }
    case Family::LogNormal: {
      if (!(x > 0.0)) return 1.0;
      const auto& p = m.as<LogNormalParams>();
      return special::normal_sf((std::log(x) - p.mu) / p.sigma);
    }
  }
  return 1.0;
}

inline double mean(const DurationModel& m) {
  switch (m.family()) {
    case Family::Normal: return m.as<NormalParams>().mu;
    case Family::Weibull: {
      const auto& p = m.as<WeibullParams>();
      return p.scale * std::exp(special::log_gamma(1.0 + 1.0 / p.shape));
    }
    case Family::Gamma: {
      const auto& p = m.as<GammaParams>();
      return p.shape / p.rate;
    }
    case Family::LogNormal: {
      const auto& p = m.as<LogNormalParams>();
      return std::exp(p.mu + 0.5 * p.sigma * p.sigma);
    }
  }
  return 0.0;
}

namespace detail {

// Solves cdf(x) = p for the Gamma family. Safeguarded Newton inside an
// expanding bracket; the residual is taken on whichever tail is smaller.
inline double gamma_quantile(const GammaParams& g, double p) {
  const DurationModel m(g);
  const bool upper = p > 0.5;
  const double target = upper ? 1.0 - p : p;
  auto residual = [&](double x) {
    return upper ? target - survival(m, x) : cdf(m, x) - target;  // increasing in x
  };

  // Wilson-Hilferty starting point.
  const double z = special::normal_quantile(p);
  const double c = 1.0 / (9.0 * g.shape);
  double x = g.shape * std::pow(std::max(1.0 - c + z * std::sqrt(c), 1e-3), 3.0) / g.rate;
  if (!(x > 0.0) || !std::isfinite(x)) x = g.shape / g.rate;

  double lo = x, hi = x;
  while (residual(lo) > 0.0 && lo > 1e-300) lo *= 0.5;
  while (residual(hi) < 0.0 && hi < 1e300) hi *= 2.0;

  for (int it = 0; it < 200; ++it) {
    const double r = residual(x);
    if (r == 0.0) return x;
    if (r < 0.0) lo = x;
    else hi = x;
    const double dens = pdf(m, x);
    double next = dens > 0.0 ? x - r / dens : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 4.0 * special::kEps * x) return next;
    x = next;
    if ((hi - lo) <= 2.0 * special::kEps * hi) break;
  }
  return x;
}

}  // namespace detail

inline double quantile(const DurationModel& m, double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile probability must lie in (0, 1)");
  switch (m.family()) {
    case Family::Normal: {
      const auto& q = m.as<NormalParams>();
      return q.mu + q.sigma * special::normal_quantile(p);
    }
    case Family::Weibull: {
      const auto& q = m.as<WeibullParams>();
      return q.scale * std::pow(-std::log1p(-p), 1.0 / q.shape);
    }
    case Family::Gamma: return detail::gamma_quantile(m.as<GammaParams>(), p);
    case Family::LogNormal: {
      const auto& q = m.as<LogNormalParams>();
      return std::exp(q.mu + q.sigma * special::normal_quantile(p));
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Sampling

namespace detail {

// Marsaglia-Tsang for shape >= 1; shape < 1 boosted via G(a+1) * U^(1/a).
inline double standard_gamma(double shape, Rng& rng) {
  if (shape < 1.0) {
    const double g = standard_gamma(shape + 1.0, rng);
    return g * std::pow(rng.uniform(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double z, v;
    do {
      z = rng.normal();
      v = 1.0 + c * z;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * z * z * z * z) return d * v;
    if (std::log(u) < 0.5 * z * z + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace detail

inline double draw(const DurationModel& m, Rng& rng) {
  switch (m.family()) {
    case Family::Normal: {
      const auto& p = m.as<NormalParams>();
      return p.mu + p.sigma * rng.normal();
    }
    case Family::Weibull: {
      const auto& p = m.as<WeibullParams>();
      return p.scale * std::pow(-std::log(rng.uniform()), 1.0 / p.shape);
    }
    case Family::Gamma: {
      const auto& p = m.as<GammaParams>();
      return detail::standard_gamma(p.shape, rng) / p.rate;
    }
    case Family::LogNormal: {
      const auto& p = m.as<LogNormalParams>();
      return std::exp(p.mu + p.sigma * rng.normal());
    }
  }
  return 0.0;
}

// n independent draws; deterministic in (model, seed, n).
inline Dataset sample(const DurationModel& m, std::uint64_t seed, std::size_t n) {
  if (n < 1) throw DomainError("sample size must be at least 1");
  Rng rng(seed);
  Dataset out{std::string(family_name(m.family())) + "-sample", {}};
  out.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.samples.push_back(draw(m, rng));
  return out;
}

inline double log_likelihood(const DurationModel& m, std::span<const double> data) {
  if (data.empty()) throw DomainError("log-likelihood of an empty dataset");
  double sum = 0.0;
  for (double x : data) {
    const double lp = log_pdf(m, x);
    if (lp == -std::numeric_limits<double>::infinity()) return lp;
    sum += lp;
  }
  return sum;
}

inline double log_likelihood(const DurationModel& m, const Dataset& data) {
  return log_likelihood(m, data.view());
}

// ---------------------------------------------------------------------------
// Serialization: `family=lognormal mu=3.85 sigma=0.62` and
// {"family":"lognormal","mu":3.85,"sigma":0.62}.

inline std::string to_record(const DurationModel& m) {
  const auto [n1, n2] = param_names(m.family());
  const auto [a, b] = m.pair();
  std::string out = "family=";
  out += family_name(m.family());
  out += ' ';
  out += n1;
  out += '=' + format_number(a) + ' ';
  out += n2;
  out += '=' + format_number(b);
  return out;
}

inline DurationModel from_record(std::string_view text) {
  std::map<std::string, std::string, std::less<>> kv;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0) throw DomainError("malformed model field '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  const auto fam_it = kv.find("family");
  if (fam_it == kv.end()) throw DomainError("model record lacks 'family='");
  const Family f = parse_family(fam_it->second);
  const auto [n1, n2] = param_names(f);
  double vals[2];
  const std::string_view names[2] = {n1, n2};
  for (int i = 0; i < 2; ++i) {
    const auto it = kv.find(names[i]);
    if (it == kv.end() || !parse_number(it->second, vals[i]))
      throw DomainError("model record lacks numeric '" + std::string(names[i]) + "'");
  }
  if (kv.size() != 3) throw DomainError("model record has unexpected fields");
  return DurationModel::from_pair(f, vals[0], vals[1]);
}

inline nlohmann::ordered_json to_json(const DurationModel& m) {
  const auto [n1, n2] = param_names(m.family());
  const auto [a, b] = m.pair();
  nlohmann::ordered_json j;
  j["family"] = family_name(m.family());
  j[std::string(n1)] = a;
  j[std::string(n2)] = b;
  return j;
}

template <class Json>
DurationModel model_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("family") || !j["family"].is_string())
    throw DomainError("model JSON must be an object with a string 'family'");
  const Family f = parse_family(j["family"].template get<std::string>());
  const auto [n1, n2] = param_names(f);
  const std::string k1(n1), k2(n2);
  if (!j.contains(k1) || !j[k1].is_number() || !j.contains(k2) || !j[k2].is_number())
    throw DomainError("model JSON for " + std::string(family_name(f)) + " needs numeric '" + k1 +
                      "' and '" + k2 + "'");
  return DurationModel::from_pair(f, j[k1].template get<double>(), j[k2].template get<double>());
}

}  // namespace teamtime
