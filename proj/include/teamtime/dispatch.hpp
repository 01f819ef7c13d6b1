#pragma once

// Robot dispatch against a human readiness-time distribution H. Arriving at
// time t costs c_robot per second the robot waits on the human and c_human
// per second the human waits on the robot:
//
//   cost(t) = c_robot * E[(H - t)+] + c_human * E[(t - H)+]
//
// which is convex in t and minimized at the c_robot / (c_human + c_robot)
// quantile of H.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <json.hpp>

#include "distributions.hpp"
#include "errors.hpp"
#include "packing_sim.hpp"
#include "quadrature.hpp"
#include "special_functions.hpp"

namespace teamtime {

struct CostSpec {
  double c_human;  // per second the human waits on the robot
  double c_robot;  // per second the robot waits on the human

  void validate() const {
    if (!(c_human >= 0.0) || !(c_robot >= 0.0) || !std::isfinite(c_human) || !std::isfinite(c_robot))
      throw ConfigError("waiting costs must be finite and non-negative");
    if (!(c_human + c_robot > 0.0)) throw ConfigError("waiting costs cannot both be zero");
  }

  double robot_share() const { return c_robot / (c_human + c_robot); }
};

struct PartialExpectations {
  double above;  // E[(H - t)+]
  double below;  // E[(t - H)+]
};

namespace detail {

// Upper integration limit beyond which the survival integral is negligible.
inline double tail_cutoff(const DurationModel& m, double t) {
  const double scale = std::max(mean(m), 1e-12);
  double u = std::max({t, scale, quantile(m, 0.5)});
  while (survival(m, u) * u > 1e-17 * scale && u < 1e300) u *= 2.0;
  return u;
}

inline PartialExpectations closed_form(const DurationModel& m, double t) {
  if (m.family() == Family::Normal) {
    const auto& p = m.as<NormalParams>();
    const double z = (t - p.mu) / p.sigma;
    const double phi = special::normal_pdf(z);
    return {p.sigma * phi + (p.mu - t) * special::normal_sf(z),
            (t - p.mu) * special::normal_cdf(z) + p.sigma * phi};
  }
  const auto& p = m.as<LogNormalParams>();
  const double mean_h = std::exp(p.mu + 0.5 * p.sigma * p.sigma);
  if (!(t > 0.0)) return {mean_h - t, 0.0};
  const double d2 = (p.mu - std::log(t)) / p.sigma;
  const double d1 = d2 + p.sigma;
  return {mean_h * special::normal_cdf(d1) - t * special::normal_cdf(d2),
          t * special::normal_cdf(-d2) - mean_h * special::normal_cdf(-d1)};
}

// E[(H - t)+] = int_t^inf S(x) dx and E[(t - H)+] = int_0^t F(x) dx.
inline PartialExpectations by_quadrature(const DurationModel& m, double t) {
  const double upper = tail_cutoff(m, t);
  // Split at a few quantiles so each panel sees one regime of the integrand.
  std::vector<double> cuts{t};
  for (double p : {0.5, 0.9, 0.99, 0.999999})
    if (const double q = quantile(m, p); q > t && q < upper) cuts.push_back(q);
  cuts.push_back(upper);
  double above = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
    above += quad::integrate([&m](double x) { return survival(m, x); }, cuts[i], cuts[i + 1]);
  const double below = t > 0.0 ? quad::integrate([&m](double x) { return cdf(m, x); }, 0.0, t) : 0.0;
  return {above, below};
}

}  // namespace detail

// Partial expectations of H around t: closed form for Normal and LogNormal,
// adaptive 64-node Gauss-Legendre quadrature for Weibull and Gamma.
inline PartialExpectations partial_expectations(const DurationModel& m, double t) {
  if (m.family() == Family::Normal || m.family() == Family::LogNormal)
    return detail::closed_form(m, t);
  return detail::by_quadrature(m, t);
}

inline double expected_cost(const DurationModel& m, double t, const CostSpec& costs) {
  costs.validate();
  if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("dispatch time must be finite and >= 0");
  const auto pe = partial_expectations(m, t);
  return costs.c_robot * pe.above + costs.c_human * pe.below;
}

// Minimizer of expected_cost over t >= 0: the robot-share quantile, clamped
// at zero (a Normal model can put that quantile below zero).
inline double optimal_dispatch(const DurationModel& m, const CostSpec& costs) {
  costs.validate();
  if (costs.c_human == 0.0)
    throw UnboundedOptimumError("human waiting is free: the robot should wait indefinitely");
  if (costs.c_robot == 0.0) return 0.0;
  return std::max(0.0, quantile(m, costs.robot_share()));
}

struct OrderDispatch {
  double target_s;     // robot arrival, seconds from order start
  double departure_s;  // target minus travel, floored at 0
  bool departure_floored;
  double expected_cost;
  double p_on_time;  // P(H <= target): the human is ready when the robot arrives
};

struct DispatchPlan {
  std::vector<OrderDispatch> orders;
};

inline DispatchPlan schedule_session(const std::vector<DurationModel>& models, const CostSpec& costs,
                                     const std::vector<double>& robot_travel) {
  if (models.empty()) throw ConfigError("schedule needs one duration model per order");
  if (robot_travel.size() != models.size() && robot_travel.size() != 1)
    throw ConfigError("robot travel must be one value, or one per order");
  DispatchPlan plan;
  for (std::size_t k = 0; k < models.size(); ++k) {
    const double travel = robot_travel.size() == 1 ? robot_travel[0] : robot_travel[k];
    if (!(travel >= 0.0) || !std::isfinite(travel))
      throw ConfigError("robot travel must be finite and non-negative");
    const double target = optimal_dispatch(models[k], costs);
    const double raw = target - travel;
    plan.orders.push_back({target, std::max(0.0, raw), raw < 0.0,
                           expected_cost(models[k], target, costs), cdf(models[k], target)});
  }
  return plan;
}

inline nlohmann::ordered_json to_json(const DispatchPlan& plan) {
  nlohmann::ordered_json j;
  j["orders"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < plan.orders.size(); ++k) {
    const auto& o = plan.orders[k];
    j["orders"].push_back({{"order", k + 1},
                           {"target_s", o.target_s},
                           {"departure_s", o.departure_s},
                           {"departure_floored", o.departure_floored},
                           {"expected_cost", o.expected_cost},
                           {"p_on_time", o.p_on_time}});
  }
  return j;
}

inline DispatchPlan plan_from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object() || !j.contains("orders") || !j["orders"].is_array())
    throw ConfigError("dispatch plan needs an 'orders' array");
  DispatchPlan plan;
  for (const auto& o : j["orders"])
    plan.orders.push_back({o.at("target_s").get<double>(), o.at("departure_s").get<double>(),
                           o.value("departure_floored", false), o.value("expected_cost", 0.0),
                           o.value("p_on_time", 0.0)});
  return plan;
}

// Moves the first robot delivery of each order to the plan's departure time.
inline std::vector<OrderSpec> apply_plan(std::vector<OrderSpec> orders, const DispatchPlan& plan) {
  if (plan.orders.size() != orders.size())
    throw ConfigError("dispatch plan and order list differ in length");
  for (std::size_t k = 0; k < orders.size(); ++k) {
    auto it = std::find_if(orders[k].items.begin(), orders[k].items.end(),
                           [](const OrderItem& i) { return i.source == ItemSource::Robot; });
    if (it == orders[k].items.end()) continue;
    it->delivery->departure_s = plan.orders[k].departure_s;
  }
  return orders;
}

// Realized waiting cost of one session's robot hand-overs.
inline double realized_cost(const SessionTrace& trace, const CostSpec& costs) {
  double total = 0.0;
  for (const auto& d : trace.deliveries) {
    const double gap = ms_to_seconds(d.human_ready_ms - d.arrival_ms);
    total += gap > 0.0 ? costs.c_robot * gap : -costs.c_human * gap;
  }
  return total;
}

}  // namespace teamtime
