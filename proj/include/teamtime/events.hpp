#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace teamtime {

// Session event kinds shared by the simulator, the telemetry schema and the
// browser game. DragStart/DragDrop are emitted only by the game client.
enum class EventKind {
  OrderStart,
  ItemPacked,
  PackRejected,
  RobotArrived,
  RobotPickedUp,
  OrderSent,
  SessionEnd,
  DragStart,
  DragDrop,
};

inline constexpr EventKind kAllEventKinds[] = {
    EventKind::OrderStart, EventKind::ItemPacked,  EventKind::PackRejected,
    EventKind::RobotArrived, EventKind::RobotPickedUp, EventKind::OrderSent,
    EventKind::SessionEnd, EventKind::DragStart,   EventKind::DragDrop};

inline std::string_view event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::OrderStart: return "OrderStart";
    case EventKind::ItemPacked: return "ItemPacked";
    case EventKind::PackRejected: return "PackRejected";
    case EventKind::RobotArrived: return "RobotArrived";
    case EventKind::RobotPickedUp: return "RobotPickedUp";
    case EventKind::OrderSent: return "OrderSent";
    case EventKind::SessionEnd: return "SessionEnd";
    case EventKind::DragStart: return "DragStart";
    case EventKind::DragDrop: return "DragDrop";
  }
  return "?";
}

inline std::optional<EventKind> parse_event_kind(std::string_view name) {
  for (EventKind k : kAllEventKinds)
    if (event_kind_name(k) == name) return k;
  return std::nullopt;
}

// Times are integer milliseconds since session start, the resolution of the
// game's internal timers.
struct Event {
  std::int64_t t_ms;
  EventKind kind;
  nlohmann::ordered_json payload = nlohmann::ordered_json::object();
};

inline double ms_to_seconds(std::int64_t ms) { return static_cast<double>(ms) / 1000.0; }

}  // namespace teamtime
