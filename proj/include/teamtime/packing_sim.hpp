#pragma once

// Discrete-event simulation of the collaborative packaging task: a human packs
// each order's items strictly in sequence while a pre-scheduled robot delivers
// some of them to a meeting point and waits there until picked up.
//
// The clock runs in integer milliseconds. Drawn durations are rounded to the
// millisecond (negative draws clamp to zero) so simulated timings are exactly
// representable in the telemetry schema.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dataset.hpp"
#include "distributions.hpp"
#include "errors.hpp"
#include "events.hpp"
#include "random.hpp"

namespace teamtime {

// A duration source for the simulator: a fittable family, or a fixed value
// (testing stub, never fitted).
class SimDuration {
 public:
  SimDuration(DurationModel m) : dist_(m) {}  // NOLINT(google-explicit-constructor)

  static SimDuration constant(double seconds) {
    if (!std::isfinite(seconds) || seconds < 0.0)
      throw ConfigError("constant duration must be finite and non-negative");
    return SimDuration(seconds);
  }

  double draw(Rng& rng) const {
    if (const auto* c = std::get_if<double>(&dist_)) return *c;
    return teamtime::draw(std::get<DurationModel>(dist_), rng);
  }

  bool is_constant() const { return std::holds_alternative<double>(dist_); }
  const DurationModel* model() const { return std::get_if<DurationModel>(&dist_); }

  nlohmann::ordered_json to_json() const {
    if (const auto* c = std::get_if<double>(&dist_))
      return nlohmann::ordered_json{{"family", "constant"}, {"value", *c}};
    return teamtime::to_json(std::get<DurationModel>(dist_));
  }

  static SimDuration from_json(const nlohmann::ordered_json& j) {
    if (j.is_object() && j.value("family", "") == "constant") {
      if (!j.contains("value") || !j["value"].is_number())
        throw ConfigError("constant duration needs a numeric 'value'");
      return constant(j["value"].get<double>());
    }
    try {
      return SimDuration(model_from_json(j));
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
  }

 private:
  explicit SimDuration(double c) : dist_(c) {}
  std::variant<double, DurationModel> dist_;
};

enum class ItemSource { Bin, Robot };

struct RobotDelivery {
  double departure_s;  // offset from order start
  double travel_s;
};

struct OrderItem {
  std::string id;
  ItemSource source = ItemSource::Bin;
  std::optional<RobotDelivery> delivery;  // present iff source == Robot
};

struct OrderSpec {
  std::vector<OrderItem> items;

  void validate() const {
    if (items.empty()) throw ConfigError("order has no items");
    for (const auto& it : items) {
      if (it.source == ItemSource::Robot) {
        if (!it.delivery) throw ConfigError("robot item '" + it.id + "' has no scheduled delivery");
        if (!(it.delivery->departure_s >= 0.0) || !(it.delivery->travel_s >= 0.0) ||
            !std::isfinite(it.delivery->departure_s) || !std::isfinite(it.delivery->travel_s))
          throw ConfigError("robot item '" + it.id + "' needs finite non-negative departure/travel");
      } else if (it.delivery) {
        throw ConfigError("bin item '" + it.id + "' cannot have a robot delivery");
      }
    }
  }
};

struct HumanModel {
  SimDuration step;
  SimDuration pickup;
  double error_probability = 0.0;
  SimDuration error_penalty;
  std::vector<double> learning;  // per-order step multipliers; empty means all 1

  double multiplier(std::size_t order) const { return learning.empty() ? 1.0 : learning[order]; }

  void validate(std::size_t orders) const {
    if (!(error_probability >= 0.0 && error_probability <= 1.0))
      throw ConfigError("error_probability must lie in [0, 1]");
    if (!learning.empty() && learning.size() != orders)
      throw ConfigError("learning multipliers must list one value per order");
    for (double l : learning)
      if (!(l > 0.0) || !std::isfinite(l)) throw ConfigError("learning multipliers must be > 0");
  }
};

// One robot hand-over, all times in ms from session start.
struct Delivery {
  std::size_t order;
  std::string item;
  std::int64_t arrival_ms;
  std::int64_t human_ready_ms;  // when the human could first take the item
  std::int64_t pickup_ms;
};

struct SessionTrace {
  std::uint64_t seed = 0;
  std::vector<Event> events;
  std::vector<std::int64_t> order_start_ms;
  std::vector<std::int64_t> order_sent_ms;
  std::int64_t end_ms = 0;
  std::vector<Delivery> deliveries;

  std::size_t orders() const { return order_start_ms.size(); }
  double order_duration(std::size_t k) const {
    return ms_to_seconds(order_sent_ms[k] - order_start_ms[k]);
  }
  double overall_duration() const { return ms_to_seconds(end_ms - order_start_ms.front()); }
};

namespace detail {

inline std::int64_t to_ms(double seconds) {
  return std::llround(std::max(0.0, seconds) * 1000.0);
}

}  // namespace detail

// Runs one session. Orders execute back to back; the robot leaves for a
// delivery at max(order start + departure offset, previous pickup) and waits
// at the meeting point until the human picks the item up.
inline SessionTrace run_session(const std::vector<OrderSpec>& orders, const HumanModel& human,
                                std::uint64_t seed) {
  if (orders.empty()) throw ConfigError("a session needs at least one order");
  for (const auto& o : orders) o.validate();
  human.validate(orders.size());

  Rng rng(seed);
  SessionTrace trace;
  trace.seed = seed;
  auto emit = [&trace](std::int64_t t, EventKind kind, nlohmann::ordered_json payload) {
    trace.events.push_back(Event{t, kind, std::move(payload)});
  };

  std::int64_t now = 0;
  std::int64_t robot_free = 0;
  for (std::size_t k = 0; k < orders.size(); ++k) {
    const int order_no = static_cast<int>(k) + 1;
    const std::int64_t start = now;
    trace.order_start_ms.push_back(start);
    emit(start, EventKind::OrderStart, {{"order", order_no}});

    const double lambda = human.multiplier(k);
    std::int64_t h = start;
    for (const auto& item : orders[k].items) {
      const nlohmann::ordered_json tag{{"order", order_no}, {"item", item.id}};
      if (item.source == ItemSource::Robot) {
        const std::int64_t depart =
            std::max(start + detail::to_ms(item.delivery->departure_s), robot_free);
        const std::int64_t arrive = depart + detail::to_ms(item.delivery->travel_s);
        emit(arrive, EventKind::RobotArrived, tag);
        const std::int64_t ready = h;
        const std::int64_t pickup = std::max(h, arrive) + detail::to_ms(human.pickup.draw(rng));
        emit(pickup, EventKind::RobotPickedUp, tag);
        trace.deliveries.push_back({k, item.id, arrive, ready, pickup});
        robot_free = pickup;
        h = pickup;
      }
      // The Bernoulli draw is always consumed so the random stream does not
      // depend on timing.
      const bool rejected = rng.bernoulli(human.error_probability);
      if (rejected) {
        h += detail::to_ms(human.error_penalty.draw(rng));
        emit(h, EventKind::PackRejected, tag);
      }
      h += detail::to_ms(lambda * human.step.draw(rng));
      emit(h, EventKind::ItemPacked, tag);
    }
    trace.order_sent_ms.push_back(h);
    emit(h, EventKind::OrderSent, {{"order", order_no}});
    now = h;
  }
  trace.end_ms = now;
  emit(now, EventKind::SessionEnd, nlohmann::ordered_json::object());
  std::stable_sort(trace.events.begin(), trace.events.end(),
                   [](const Event& a, const Event& b) { return a.t_ms < b.t_ms; });
  return trace;
}

inline std::string sim_session_id(std::uint64_t seed, std::size_t index) {
  return "sim-" + std::to_string(seed) + "-" + std::to_string(index);
}

struct BatchResult {
  std::vector<Dataset> orders;  // one per order, label orderK_s
  Dataset overall{"overall_s", {}};
  std::vector<SessionTrace> traces;  // empty unless requested
};

// n_sessions independent sessions; session i uses derive_seed(seed, i).
inline BatchResult run_batch(const std::vector<OrderSpec>& orders, const HumanModel& human,
                             std::size_t n_sessions, std::uint64_t seed, bool keep_traces = false) {
  if (n_sessions < 1) throw ConfigError("n_sessions must be at least 1");
  BatchResult out;
  for (std::size_t k = 0; k < orders.size(); ++k)
    out.orders.push_back(Dataset{"order" + std::to_string(k + 1) + "_s", {}});
  for (std::size_t i = 0; i < n_sessions; ++i) {
    auto trace = run_session(orders, human, derive_seed(seed, i));
    for (std::size_t k = 0; k < trace.orders(); ++k)
      out.orders[k].samples.push_back(trace.order_duration(k));
    out.overall.samples.push_back(trace.overall_duration());
    if (keep_traces) out.traces.push_back(std::move(trace));
  }
  return out;
}

struct EmpiricalSummary {
  double mean;
  double sd;  // n denominator
  double min;
  double max;
};

inline EmpiricalSummary empirical_summary(const Dataset& data) {
  if (data.n() < 2) throw DomainError("summary needs at least two samples");
  const double n = static_cast<double>(data.n());
  double sum = 0.0;
  for (double x : data.samples) sum += x;
  const double m = sum / n;
  double ss = 0.0;
  for (double x : data.samples) ss += (x - m) * (x - m);
  const auto [lo, hi] = std::minmax_element(data.samples.begin(), data.samples.end());
  return {m, std::sqrt(ss / n), *lo, *hi};
}

// ---------------------------------------------------------------------------
// Configuration and output formats

struct SimulationConfig {
  std::vector<OrderSpec> orders;
  HumanModel human;
  std::size_t n_sessions = 1;
  std::uint64_t seed = 0;
  std::vector<std::string> survey_items;  // ids answered by simulated sessions
};

inline std::vector<OrderSpec> orders_from_json(const nlohmann::ordered_json& arr) {
  if (!arr.is_array() || arr.empty()) throw ConfigError("'orders' must be a nonempty array");
  std::vector<OrderSpec> orders;
  for (const auto& o : arr) {
    if (!o.is_object() || !o.contains("items") || !o["items"].is_array())
      throw ConfigError("each order needs an 'items' array");
    OrderSpec spec;
    for (const auto& it : o["items"]) {
      if (!it.is_object()) throw ConfigError("order item must be an object");
      OrderItem item;
      item.id = it.value("id", "");
      if (item.id.empty()) throw ConfigError("order item needs an 'id'");
      const std::string src = it.value("source", "bin");
      if (src == "robot") {
        item.source = ItemSource::Robot;
        if (!it.contains("departure_s") || !it.contains("travel_s") ||
            !it["departure_s"].is_number() || !it["travel_s"].is_number())
          throw ConfigError("robot item '" + item.id + "' needs numeric departure_s and travel_s");
        item.delivery = RobotDelivery{it["departure_s"].get<double>(), it["travel_s"].get<double>()};
      } else if (src == "bin") {
        if (it.contains("departure_s") || it.contains("travel_s"))
          throw ConfigError("bin item '" + item.id + "' cannot have a robot delivery");
      } else {
        throw ConfigError("item source must be 'bin' or 'robot', got '" + src + "'");
      }
      spec.items.push_back(std::move(item));
    }
    spec.validate();
    orders.push_back(std::move(spec));
  }
  return orders;
}

inline nlohmann::ordered_json orders_to_json(const std::vector<OrderSpec>& orders) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& o : orders) {
    auto items = nlohmann::ordered_json::array();
    for (const auto& it : o.items) {
      nlohmann::ordered_json j{{"id", it.id}, {"source", it.source == ItemSource::Robot ? "robot" : "bin"}};
      if (it.delivery) {
        j["departure_s"] = it.delivery->departure_s;
        j["travel_s"] = it.delivery->travel_s;
      }
      items.push_back(std::move(j));
    }
    arr.push_back({{"items", std::move(items)}});
  }
  return arr;
}

inline SimulationConfig config_from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object()) throw ConfigError("simulation config must be a JSON object");
  SimulationConfig cfg{orders_from_json(j.value("orders", nlohmann::ordered_json())),
                       HumanModel{SimDuration::constant(0), SimDuration::constant(0), 0.0,
                                  SimDuration::constant(0), {}},
                       1, 0, {}};
  if (!j.contains("human") || !j["human"].is_object())
    throw ConfigError("simulation config needs a 'human' object");
  const auto& h = j["human"];
  for (const char* key : {"step", "pickup"})
    if (!h.contains(key)) throw ConfigError(std::string("human model needs '") + key + "'");
  cfg.human.step = SimDuration::from_json(h["step"]);
  cfg.human.pickup = SimDuration::from_json(h["pickup"]);
  cfg.human.error_probability = h.value("error_probability", 0.0);
  if (h.contains("error_penalty")) cfg.human.error_penalty = SimDuration::from_json(h["error_penalty"]);
  else if (cfg.human.error_probability > 0.0)
    throw ConfigError("error_probability > 0 needs an 'error_penalty' model");
  if (h.contains("learning")) cfg.human.learning = h["learning"].get<std::vector<double>>();
  cfg.human.validate(cfg.orders.size());

  const auto n = j.value("n_sessions", std::int64_t{1});
  if (n < 1) throw ConfigError("n_sessions must be at least 1");
  cfg.n_sessions = static_cast<std::size_t>(n);
  cfg.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("survey_items")) cfg.survey_items = j["survey_items"].get<std::vector<std::string>>();
  return cfg;
}

inline nlohmann::ordered_json to_json(const Event& e) {
  return nlohmann::ordered_json{{"t_ms", e.t_ms}, {"kind", event_kind_name(e.kind)}, {"payload", e.payload}};
}

// One JSON object per line: {"session_id", "t_ms", "kind", "payload"}.
inline void write_trace_jsonl(std::ostream& out, const SessionTrace& trace,
                              const std::string& session_id) {
  for (const auto& e : trace.events) {
    nlohmann::ordered_json j{{"session_id", session_id}};
    j.update(to_json(e));
    out << j.dump() << '\n';
  }
}

// Telemetry POST body for a simulated session. Simulated players answer
// every configured survey item with the neutral score 3.
inline nlohmann::ordered_json session_payload(const SessionTrace& trace, const std::string& session_id,
                                              const std::string& worker_id,
                                              const std::vector<std::string>& survey_items,
                                              const std::string& client_version = "packing-sim/1") {
  nlohmann::ordered_json j;
  j["session_id"] = session_id;
  j["worker_id"] = worker_id;
  j["client_version"] = client_version;
  j["events"] = nlohmann::ordered_json::array();
  for (const auto& e : trace.events) j["events"].push_back(to_json(e));
  if (!survey_items.empty()) {
    auto items = nlohmann::ordered_json::array();
    for (const auto& id : survey_items) items.push_back({{"id", id}, {"score", 3}});
    j["survey"] = {{"items", std::move(items)}};
  }
  return j;
}

}  // namespace teamtime
