#pragma once

// Goodness-of-fit statistics (Anderson-Darling A^2, AIC, BIC) and ranked
// comparison of the candidate families on one dataset.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dataset.hpp"
#include "distributions.hpp"
#include "errors.hpp"
#include "fitting.hpp"

namespace teamtime {

inline constexpr double kAdLowClamp = 1e-300;
inline constexpr double kAdHighClamp = 1.0 - 1e-16;

// A^2 of probability-integral-transformed values against Uniform(0, 1).
// `u` need not be sorted. No small-sample correction.
inline double anderson_darling_uniform(std::span<const double> u) {
  if (u.empty()) throw DomainError("Anderson-Darling statistic of an empty dataset");
  std::vector<double> s(u.begin(), u.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lo = std::clamp(s[i], kAdLowClamp, kAdHighClamp);
    const double hi = std::clamp(s[n - 1 - i], kAdLowClamp, kAdHighClamp);
    acc += (2.0 * static_cast<double>(i) + 1.0) * (std::log(lo) + std::log1p(-hi));
  }
  return -static_cast<double>(n) - acc / static_cast<double>(n);
}

inline double anderson_darling(const DurationModel& m, const Dataset& data) {
  if (data.empty()) throw DomainError("Anderson-Darling statistic of an empty dataset");
  std::vector<double> u(data.n());
  std::transform(data.samples.begin(), data.samples.end(), u.begin(),
                 [&m](double x) { return cdf(m, x); });
  return anderson_darling_uniform(u);
}

struct InformationCriteria {
  double aic;
  double bic;
};

inline InformationCriteria information_criteria(double log_likelihood, int k, std::size_t n) {
  if (n < 1) throw DomainError("information criteria need n >= 1");
  const double penalty = -2.0 * log_likelihood;
  return {2.0 * k + penalty, k * std::log(static_cast<double>(n)) + penalty};
}

inline InformationCriteria information_criteria(const FitResult& fit, std::size_t n) {
  return information_criteria(fit.log_likelihood, fit.k, n);
}

struct FitReport {
  FitResult fit;
  double ad;
  double aic;
  double bic;
  std::size_t n;
};

enum class Criterion { AD, AIC, BIC };
inline constexpr Criterion kCriteria[] = {Criterion::AD, Criterion::AIC, Criterion::BIC};

inline std::string_view criterion_name(Criterion c) {
  switch (c) {
    case Criterion::AD: return "ad";
    case Criterion::AIC: return "aic";
    case Criterion::BIC: return "bic";
  }
  return "?";
}

inline double criterion_value(const FitReport& r, Criterion c) {
  switch (c) {
    case Criterion::AD: return r.ad;
    case Criterion::AIC: return r.aic;
    case Criterion::BIC: return r.bic;
  }
  return 0.0;
}

struct OmittedFamily {
  Family family;
  std::string reason;
};

struct ComparisonTable {
  std::string label;
  std::size_t n = 0;
  std::vector<FitReport> reports;  // family order Normal, Weibull, Gamma, LogNormal
  std::array<std::vector<Family>, 3> ranking;
  std::array<bool, 3> tied{};  // adjacent equal values somewhere in the ranking
  std::vector<OmittedFamily> omitted;

  const FitReport* report(Family f) const {
    for (const auto& r : reports)
      if (r.fit.model.family() == f) return &r;
    return nullptr;
  }
  const std::vector<Family>& ranked(Criterion c) const {
    return ranking[static_cast<int>(c)];
  }
  std::optional<Family> selected(Criterion c) const {
    const auto& r = ranked(c);
    if (r.empty()) return std::nullopt;
    return r.front();
  }
};

inline FitReport make_report(FitResult fit, const Dataset& data) {
  const auto ic = information_criteria(fit, data.n());
  const double ad = anderson_darling(fit.model, data);
  return FitReport{std::move(fit), ad, ic.aic, ic.bic, data.n()};
}

// Fits every requested family, scores it, and ranks ascending per criterion.
// Families whose support or degeneracy check fails are omitted with a reason.
inline ComparisonTable compare_models(const Dataset& data,
                                      std::span<const Family> families = kAllFamilies) {
  ComparisonTable table;
  table.label = data.label;
  table.n = data.n();
  for (Family f : kAllFamilies) {
    if (std::find(families.begin(), families.end(), f) == families.end()) continue;
    try {
      table.reports.push_back(make_report(fit_mle(f, data), data));
    } catch (const DomainError& e) {
      table.omitted.push_back({f, e.what()});
    } catch (const DegenerateDataError& e) {
      table.omitted.push_back({f, e.what()});
    }
  }
  for (Criterion c : kCriteria) {
    const int ci = static_cast<int>(c);
    std::vector<const FitReport*> order;
    for (const auto& r : table.reports) order.push_back(&r);
    // reports are already in family order, so a stable sort breaks ties by it
    std::stable_sort(order.begin(), order.end(), [c](const FitReport* a, const FitReport* b) {
      return criterion_value(*a, c) < criterion_value(*b, c);
    });
    for (std::size_t i = 0; i < order.size(); ++i) {
      table.ranking[ci].push_back(order[i]->fit.model.family());
      if (i > 0 && criterion_value(*order[i], c) == criterion_value(*order[i - 1], c))
        table.tied[ci] = true;
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Export

inline void write_csv(std::ostream& out, const ComparisonTable& t) {
  out << "family,ad,aic,bic,log_likelihood,k,converged,param1_name,param1,param2_name,param2\n";
  for (const auto& r : t.reports) {
    const auto f = r.fit.model.family();
    const auto [n1, n2] = param_names(f);
    const auto [a, b] = r.fit.model.pair();
    out << family_name(f) << ',' << format_number(r.ad) << ',' << format_number(r.aic) << ','
        << format_number(r.bic) << ',' << format_number(r.fit.log_likelihood) << ',' << r.fit.k << ','
        << (r.fit.converged ? "true" : "false") << ',' << n1 << ',' << format_number(a) << ','
        << n2 << ',' << format_number(b) << '\n';
  }
}

inline nlohmann::ordered_json to_json(const ComparisonTable& t) {
  nlohmann::ordered_json j;
  j["dataset"] = t.label;
  j["n"] = t.n;
  nlohmann::ordered_json fams = nlohmann::ordered_json::object();
  for (const auto& r : t.reports) {
    nlohmann::ordered_json e;
    e["params"] = to_json(r.fit.model);
    e["log_likelihood"] = r.fit.log_likelihood;
    e["k"] = r.fit.k;
    e["converged"] = r.fit.converged;
    e["ad"] = r.ad;
    e["aic"] = r.aic;
    e["bic"] = r.bic;
    fams[std::string(family_name(r.fit.model.family()))] = e;
  }
  j["families"] = fams;
  nlohmann::ordered_json ranking, selected, ties;
  for (Criterion c : kCriteria) {
    const std::string key(criterion_name(c));
    ranking[key] = nlohmann::ordered_json::array();
    for (Family f : t.ranked(c)) ranking[key].push_back(family_name(f));
    const auto sel = t.selected(c);
    selected[key] = sel ? nlohmann::ordered_json(family_name(*sel)) : nlohmann::ordered_json();
    ties[key] = t.tied[static_cast<int>(c)];
  }
  j["ranking"] = ranking;
  j["selected"] = selected;
  j["ties"] = ties;
  j["omitted"] = nlohmann::ordered_json::array();
  for (const auto& o : t.omitted)
    j["omitted"].push_back({{"family", family_name(o.family)}, {"reason", o.reason}});
  return j;
}

}  // namespace teamtime
