#pragma once

// Plot data for the three fit diagnostics: CDF overlay, density against
// histogram, and Q-Q. Output is tabular; rendering is left to the caller.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dataset.hpp"
#include "distributions.hpp"
#include "errors.hpp"

namespace teamtime {

enum class PlotKind { CdfOverlay, DensityHistogram, DensityCurve, QQ };

inline constexpr std::size_t kModelGridPoints = 256;

struct PlotSeries {
  PlotKind kind;
  std::string model;  // text record of the model
  std::vector<std::pair<std::string, std::vector<double>>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().second.size(); }

  const std::vector<double>& column(std::string_view name) const {
    for (const auto& [n, v] : columns)
      if (n == name) return v;
    throw std::out_of_range("no plot column '" + std::string(name) + "'");
  }
};

struct DensityPlot {
  PlotSeries histogram;  // one row per bin
  PlotSeries curve;      // model pdf on the 256-point grid
  bool sturges_fallback = false;
};

namespace detail {

inline std::vector<double> sorted_copy(const Dataset& data) {
  std::vector<double> s = data.samples;
  std::sort(s.begin(), s.end());
  return s;
}

// Linear-interpolation sample quantile (type 7) of sorted data.
inline double sample_quantile(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

// Left end of the model grid: 0 for positive families, the 0.1% quantile
// for the Normal.
inline double grid_start(const DurationModel& m) {
  return m.family() == Family::Normal ? std::min(0.0, quantile(m, 0.001)) : 0.0;
}

}  // namespace detail

// Point i = (quantile(model, (i - 0.5) / n), x_(i)), sorted.
inline PlotSeries qq_points(const DurationModel& m, const Dataset& data) {
  if (data.empty()) throw DomainError("Q-Q plot of an empty dataset");
  const auto sorted = detail::sorted_copy(data);
  const double n = static_cast<double>(sorted.size());
  std::vector<double> theo(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i)
    theo[i] = quantile(m, (static_cast<double>(i) + 0.5) / n);
  return PlotSeries{PlotKind::QQ, to_record(m),
                    {{"theoretical_q", std::move(theo)}, {"empirical_q", sorted}}};
}

inline constexpr std::size_t kMaxHistogramBins = 10000;

// Density-normalized histogram with Freedman-Diaconis bins (Sturges when the
// IQR is zero), plus the model pdf on [start, quantile(0.999)].
inline DensityPlot density_histogram(const DurationModel& m, const Dataset& data) {
  if (data.n() < 2) throw DomainError("histogram needs at least two samples");
  const auto sorted = detail::sorted_copy(data);
  const double n = static_cast<double>(sorted.size());
  const double lo = sorted.front(), hi = sorted.back();
  const double iqr = detail::sample_quantile(sorted, 0.75) - detail::sample_quantile(sorted, 0.25);

  DensityPlot out;
  std::size_t bins;
  double left, width;
  if (iqr > 0.0) {
    const double fd = 2.0 * iqr / std::cbrt(n);
    bins = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil((hi - lo) / fd)), 1,
                                   kMaxHistogramBins);
    left = lo;
    width = (hi - lo) / static_cast<double>(bins);
  } else {
    out.sturges_fallback = true;
    bins = static_cast<std::size_t>(std::ceil(std::log2(n))) + 1;
    if (hi > lo) {
      left = lo;
      width = (hi - lo) / static_cast<double>(bins);
    } else {
      // Zero range: narrow bins with the common value centred in the first.
      width = std::max(std::abs(lo), 1.0) * 1e-3;
      left = lo - 0.5 * width;
    }
  }

  std::vector<double> counts(bins, 0.0);
  for (double x : sorted) {
    auto b = static_cast<std::size_t>(std::floor((x - left) / width));
    counts[std::min(b, bins - 1)] += 1.0;
  }
  std::vector<double> l(bins), r(bins), c(bins), dens(bins), model(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    l[b] = left + width * static_cast<double>(b);
    r[b] = left + width * static_cast<double>(b + 1);
    c[b] = 0.5 * (l[b] + r[b]);
    dens[b] = counts[b] / (n * width);
    model[b] = pdf(m, c[b]);
  }
  out.histogram = PlotSeries{PlotKind::DensityHistogram,
                             to_record(m),
                             {{"bin_left", std::move(l)},
                              {"bin_right", std::move(r)},
                              {"bin_center", std::move(c)},
                              {"density", std::move(dens)},
                              {"model_pdf", std::move(model)}}};

  auto grid = detail::linspace(detail::grid_start(m), quantile(m, 0.999), kModelGridPoints);
  std::vector<double> curve(grid.size());
  std::transform(grid.begin(), grid.end(), curve.begin(), [&m](double x) { return pdf(m, x); });
  out.curve = PlotSeries{PlotKind::DensityCurve, to_record(m),
                         {{"x", std::move(grid)}, {"model_pdf", std::move(curve)}}};
  return out;
}

// Empirical cdf (i/n at x_(i)) and model cdf on one 256-point grid spanning
// both the data and the model's central 99.8%.
inline PlotSeries cdf_overlay(const DurationModel& m, const Dataset& data) {
  if (data.empty()) throw DomainError("CDF overlay of an empty dataset");
  const auto sorted = detail::sorted_copy(data);
  const double a = std::min(detail::grid_start(m), sorted.front());
  const double b = std::max(quantile(m, 0.999), sorted.back());
  auto grid = detail::linspace(a, b, kModelGridPoints);
  grid.back() = b;
  std::vector<double> ecdf(grid.size()), mcdf(grid.size());
  const double n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto count = std::upper_bound(sorted.begin(), sorted.end(), grid[i]) - sorted.begin();
    ecdf[i] = static_cast<double>(count) / n;
    mcdf[i] = cdf(m, grid[i]);
  }
  return PlotSeries{PlotKind::CdfOverlay, to_record(m),
                    {{"x", std::move(grid)}, {"empirical_cdf", std::move(ecdf)},
                     {"model_cdf", std::move(mcdf)}}};
}

inline void write_csv(std::ostream& out, const PlotSeries& s) {
  for (std::size_t c = 0; c < s.columns.size(); ++c) out << (c ? "," : "") << s.columns[c].first;
  out << '\n';
  for (std::size_t r = 0; r < s.rows(); ++r) {
    for (std::size_t c = 0; c < s.columns.size(); ++c)
      out << (c ? "," : "") << format_number(s.columns[c].second[r]);
    out << '\n';
  }
}

// Whitespace-separated columns under a '#' header line naming the model,
// readable by gnuplot's `plot 'file' using 1:2`.
inline void write_gnuplot(std::ostream& out, const PlotSeries& s) {
  out << "# model: " << s.model << '\n' << '#';
  for (const auto& [name, _] : s.columns) out << ' ' << name;
  out << '\n';
  for (std::size_t r = 0; r < s.rows(); ++r) {
    for (std::size_t c = 0; c < s.columns.size(); ++c)
      out << (c ? " " : "") << format_number(s.columns[c].second[r]);
    out << '\n';
  }
}

}  // namespace teamtime
