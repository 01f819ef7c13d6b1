#pragma once

// Session telemetry: payload schema, a durable append-only store, the
// exclusion rules applied before analysis, and the duration export.
//
// Store layout: `segment-NNNNNN.log` files in a data directory. Each record is
// one line `<crc32 hex> <byte length> <json>\n`; a frame whose length or
// checksum does not match marks a torn tail, which is truncated on open.

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <system_error>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dataset.hpp"
#include "errors.hpp"
#include "events.hpp"

namespace teamtime {

struct SurveyItem {
  std::string id;
  int score;  // Likert 1..5
};

struct Survey {
  std::vector<SurveyItem> items;
  std::optional<std::string> free_text;
};

struct SessionRecord {
  std::string session_id;
  std::string worker_id;
  std::int64_t received_at_ms = 0;
  std::string client_version;
  std::vector<Event> events;
  std::optional<Survey> survey;
  bool complete = false;
};

using SessionRecordPtr = std::shared_ptr<const SessionRecord>;

// Three orders sent and the session ended.
inline bool is_complete(const std::vector<Event>& events) {
  const auto sent = std::count_if(events.begin(), events.end(),
                                  [](const Event& e) { return e.kind == EventKind::OrderSent; });
  const auto ends = std::count_if(events.begin(), events.end(),
                                  [](const Event& e) { return e.kind == EventKind::SessionEnd; });
  return sent == 3 && ends == 1;
}

class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(std::vector<std::string> errors)
      : std::runtime_error(join(errors)), errors_(std::move(errors)) {}
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  static std::string join(const std::vector<std::string>& e) {
    std::string s = "schema violation";
    for (const auto& m : e) s += "; " + m;
    return s;
  }
  std::vector<std::string> errors_;
};

namespace detail {

inline bool is_nonempty_string(const nlohmann::ordered_json& j, const char* key) {
  return j.contains(key) && j[key].is_string() && !j[key].get_ref<const std::string&>().empty();
}

}  // namespace detail

// Validates a POST /v1/sessions body and builds the record (received_at is
// left for the caller). Collects every violation before throwing.
inline SessionRecord parse_session_payload(const nlohmann::ordered_json& body) {
  std::vector<std::string> errs;
  if (!body.is_object()) throw SchemaError({"body: must be a JSON object"});
  SessionRecord rec;
  for (const char* key : {"session_id", "worker_id"}) {
    if (!detail::is_nonempty_string(body, key)) errs.push_back(std::string(key) + ": required nonempty string");
  }
  if (errs.empty()) {
    rec.session_id = body["session_id"].get<std::string>();
    rec.worker_id = body["worker_id"].get<std::string>();
  }
  if (!body.contains("client_version") || !body["client_version"].is_string())
    errs.push_back("client_version: required string");
  else
    rec.client_version = body["client_version"].get<std::string>();

  if (!body.contains("events") || !body["events"].is_array()) {
    errs.push_back("events: required array");
  } else {
    const auto& evs = body["events"];
    std::int64_t prev = 0;
    for (std::size_t i = 0; i < evs.size(); ++i) {
      const std::string where = "events[" + std::to_string(i) + "]";
      const auto& e = evs[i];
      if (!e.is_object()) {
        errs.push_back(where + ": must be an object");
        continue;
      }
      const bool int_time = e.contains("t_ms") && (e["t_ms"].is_number_integer());
      if (!int_time || e["t_ms"].get<std::int64_t>() < 0) {
        errs.push_back(where + ".t_ms: required non-negative integer");
        continue;
      }
      const auto t = e["t_ms"].get<std::int64_t>();
      if (i > 0 && t < prev)
        errs.push_back(where + ".t_ms: decreases (" + std::to_string(t) + " < " + std::to_string(prev) + ")");
      prev = std::max(prev, t);
      std::optional<EventKind> kind;
      if (e.contains("kind") && e["kind"].is_string()) kind = parse_event_kind(e["kind"].get<std::string>());
      if (!kind) {
        errs.push_back(where + ".kind: unknown or missing event kind");
        continue;
      }
      nlohmann::ordered_json payload = nlohmann::ordered_json::object();
      if (e.contains("payload")) {
        if (!e["payload"].is_object()) {
          errs.push_back(where + ".payload: must be an object");
          continue;
        }
        payload = e["payload"];
      }
      rec.events.push_back(Event{t, *kind, std::move(payload)});
    }
  }

  if (body.contains("survey") && !body["survey"].is_null()) {
    const auto& s = body["survey"];
    if (!s.is_object() || !s.contains("items") || !s["items"].is_array()) {
      errs.push_back("survey.items: required array when survey is present");
    } else {
      Survey survey;
      for (std::size_t i = 0; i < s["items"].size(); ++i) {
        const auto& it = s["items"][i];
        const std::string where = "survey.items[" + std::to_string(i) + "]";
        if (!it.is_object() || !detail::is_nonempty_string(it, "id")) {
          errs.push_back(where + ".id: required nonempty string");
          continue;
        }
        if (!it.contains("score") || !it["score"].is_number_integer() || it["score"].get<int>() < 1 ||
            it["score"].get<int>() > 5) {
          errs.push_back(where + ".score: required integer 1..5");
          continue;
        }
        survey.items.push_back({it["id"].get<std::string>(), it["score"].get<int>()});
      }
      if (s.contains("free_text")) {
        if (!s["free_text"].is_string()) errs.push_back("survey.free_text: must be a string");
        else survey.free_text = s["free_text"].get<std::string>();
      }
      rec.survey = std::move(survey);
    }
  }
  if (!errs.empty()) throw SchemaError(std::move(errs));
  rec.complete = is_complete(rec.events);
  return rec;
}

inline nlohmann::ordered_json to_json(const SessionRecord& r) {
  nlohmann::ordered_json j;
  j["session_id"] = r.session_id;
  j["worker_id"] = r.worker_id;
  j["received_at_ms"] = r.received_at_ms;
  j["client_version"] = r.client_version;
  j["complete"] = r.complete;
  j["events"] = nlohmann::ordered_json::array();
  for (const auto& e : r.events)
    j["events"].push_back({{"t_ms", e.t_ms}, {"kind", event_kind_name(e.kind)}, {"payload", e.payload}});
  if (r.survey) {
    nlohmann::ordered_json s;
    s["items"] = nlohmann::ordered_json::array();
    for (const auto& it : r.survey->items) s["items"].push_back({{"id", it.id}, {"score", it.score}});
    if (r.survey->free_text) s["free_text"] = *r.survey->free_text;
    j["survey"] = std::move(s);
  } else {
    j["survey"] = nullptr;
  }
  return j;
}

inline SessionRecord record_from_json(const nlohmann::ordered_json& j) {
  auto rec = parse_session_payload(j);
  rec.received_at_ms = j.value("received_at_ms", std::int64_t{0});
  return rec;
}

// ---------------------------------------------------------------------------
// Append-only store

namespace detail {

class FileDescriptor {
 public:
  FileDescriptor() = default;
  explicit FileDescriptor(int fd) : fd_(fd) {}
  FileDescriptor(FileDescriptor&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  FileDescriptor& operator=(FileDescriptor&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  FileDescriptor(const FileDescriptor&) = delete;
  FileDescriptor& operator=(const FileDescriptor&) = delete;
  ~FileDescriptor() { reset(); }

  int get() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline std::uint32_t crc32_of(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

inline std::string frame(std::string_view json) {
  char head[32];
  std::snprintf(head, sizeof head, "%08x %zu ", crc32_of(json), json.size());
  std::string out(head);
  out.append(json);
  out.push_back('\n');
  return out;
}

// Parses frames from `bytes`; returns the offset just past the last valid one.
inline std::size_t scan_frames(std::string_view bytes, std::vector<std::string>& payloads) {
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto sp1 = bytes.find(' ', pos);
    if (sp1 == std::string_view::npos || sp1 - pos != 8) break;
    const auto sp2 = bytes.find(' ', sp1 + 1);
    if (sp2 == std::string_view::npos || sp2 - sp1 > 21) break;
    std::uint32_t crc = 0;
    std::size_t len = 0;
    const auto crc_txt = bytes.substr(pos, 8);
    const auto len_txt = bytes.substr(sp1 + 1, sp2 - sp1 - 1);
    if (std::from_chars(crc_txt.data(), crc_txt.data() + 8, crc, 16).ptr != crc_txt.data() + 8) break;
    if (std::from_chars(len_txt.data(), len_txt.data() + len_txt.size(), len).ptr !=
        len_txt.data() + len_txt.size())
      break;
    const std::size_t body = sp2 + 1;
    if (body + len + 1 > bytes.size() || bytes[body + len] != '\n') break;
    const auto json = bytes.substr(body, len);
    if (crc32_of(json) != crc) break;
    payloads.emplace_back(json);
    pos = body + len + 1;
  }
  return pos;
}

inline void write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const auto n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::system_error(errno, std::generic_category(), "segment write");
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

}  // namespace detail

class SessionStore {
 public:
  struct Options {
    std::size_t segment_max_bytes = std::size_t{8} << 20;
    bool sync = true;  // fdatasync before acknowledging
  };

  enum class AppendStatus { Stored, Duplicate };

  explicit SessionStore(std::filesystem::path dir) : SessionStore(std::move(dir), Options{}) {}

  SessionStore(std::filesystem::path dir, Options opts) : dir_(std::move(dir)), opts_(opts) {
    std::filesystem::create_directories(dir_);
    recover();
  }

  const std::filesystem::path& directory() const { return dir_; }

  // Durably appends `rec` unless its session_id is already stored.
  AppendStatus append(SessionRecord rec) {
    std::unique_lock lock(mutex_);
    if (ids_.count(rec.session_id)) return AppendStatus::Duplicate;
    const std::string bytes = detail::frame(to_json(rec).dump());
    if (active_size_ > 0 && active_size_ + bytes.size() > opts_.segment_max_bytes) open_segment(next_index_++);
    try {
      detail::write_all(active_.get(), bytes);
      if (opts_.sync && ::fdatasync(active_.get()) != 0)
        throw std::system_error(errno, std::generic_category(), "segment sync");
    } catch (...) {
      // Drop whatever part of the frame reached the file.
      [[maybe_unused]] const int rc = ::ftruncate(active_.get(), static_cast<off_t>(active_size_));
      throw;
    }
    active_size_ += bytes.size();
    ids_.insert(rec.session_id);
    records_.push_back(std::make_shared<const SessionRecord>(std::move(rec)));
    return AppendStatus::Stored;
  }

  std::vector<SessionRecordPtr> snapshot() const {
    std::shared_lock lock(mutex_);
    return records_;
  }

  bool contains(const std::string& session_id) const {
    std::shared_lock lock(mutex_);
    return ids_.count(session_id) > 0;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return records_.size();
  }

  // Bytes of torn or corrupt tail discarded while opening.
  std::size_t discarded_bytes() const { return discarded_; }

  static std::string segment_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "segment-%06zu.log", index);
    return buf;
  }

 private:
  void recover() {
    std::vector<std::pair<std::size_t, std::filesystem::path>> segs;
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
      const auto name = entry.path().filename().string();
      std::size_t idx = 0;
      if (name.size() == 18 && name.rfind("segment-", 0) == 0 && name.substr(14) == ".log" &&
          std::from_chars(name.data() + 8, name.data() + 14, idx).ptr == name.data() + 14)
        segs.emplace_back(idx, entry.path());
    }
    std::sort(segs.begin(), segs.end());
    for (const auto& [idx, path] : segs) {
      std::ifstream in(path, std::ios::binary);
      const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      std::vector<std::string> payloads;
      const std::size_t good = detail::scan_frames(bytes, payloads);
      if (good < bytes.size()) {
        discarded_ += bytes.size() - good;
        std::filesystem::resize_file(path, good);
      }
      for (const auto& p : payloads) {
        auto rec = record_from_json(nlohmann::ordered_json::parse(p));
        if (ids_.insert(rec.session_id).second)
          records_.push_back(std::make_shared<const SessionRecord>(std::move(rec)));
      }
      next_index_ = idx + 1;
    }
    open_segment(segs.empty() ? next_index_++ : segs.back().first);
  }

  void open_segment(std::size_t index) {
    const auto path = dir_ / segment_name(index);
    detail::FileDescriptor fd(::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644));
    if (!fd) throw std::system_error(errno, std::generic_category(), "open " + path.string());
    struct stat st {};
    ::fstat(fd.get(), &st);
    active_ = std::move(fd);
    active_size_ = static_cast<std::size_t>(st.st_size);
    if (index >= next_index_) next_index_ = index + 1;
  }

  std::filesystem::path dir_;
  Options opts_;
  mutable std::shared_mutex mutex_;
  detail::FileDescriptor active_;
  std::size_t active_size_ = 0;
  std::size_t next_index_ = 1;
  std::size_t discarded_ = 0;
  std::unordered_set<std::string> ids_;
  std::vector<SessionRecordPtr> records_;
};

// ---------------------------------------------------------------------------
// Ingest

struct IngestResult {
  enum class Status { Stored, Duplicate, Rejected };
  Status status;
  std::string session_id;
  std::vector<std::string> errors;
  bool complete = false;
};

inline std::int64_t wall_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

inline IngestResult ingest_session(SessionStore& store, const nlohmann::ordered_json& body,
                                   std::int64_t received_at_ms) {
  SessionRecord rec;
  try {
    rec = parse_session_payload(body);
  } catch (const SchemaError& e) {
    std::string id = body.is_object() ? body.value("session_id", "") : "";
    return {IngestResult::Status::Rejected, id, e.errors()};
  }
  rec.received_at_ms = received_at_ms;
  const auto id = rec.session_id;
  const bool complete = rec.complete;
  const auto st = store.append(std::move(rec));
  return {st == SessionStore::AppendStatus::Stored ? IngestResult::Status::Stored
                                                   : IngestResult::Status::Duplicate,
          id, {}, complete};
}

inline IngestResult ingest_session_body(SessionStore& store, std::string_view body,
                                        std::int64_t received_at_ms) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    return {IngestResult::Status::Rejected, "", {std::string("body: invalid JSON: ") + e.what()}};
  }
  return ingest_session(store, j, received_at_ms);
}

// ---------------------------------------------------------------------------
// Exclusions and export

struct ExclusionPolicy {
  bool require_complete = true;
  bool drop_duplicate_workers = true;
  bool require_survey = true;

  static ExclusionPolicy full() { return {true, true, true}; }
  static ExclusionPolicy none() { return {false, false, false}; }

  // "full" | "none" | comma list of complete, unique-worker, survey.
  static ExclusionPolicy parse(std::string_view text) {
    if (text == "full" || text == "all") return full();
    if (text == "none" || text.empty()) return none();
    ExclusionPolicy p = none();
    std::string item;
    std::istringstream in{std::string(text)};
    while (std::getline(in, item, ',')) {
      if (item == "complete") p.require_complete = true;
      else if (item == "unique-worker") p.drop_duplicate_workers = true;
      else if (item == "survey") p.require_survey = true;
      else
        throw ConfigError("unknown exclusion rule '" + item +
                          "' (expected full, none, or a list of complete, unique-worker, survey)");
    }
    return p;
  }

  std::string to_string() const {
    std::string s;
    if (require_complete) s += "complete";
    if (drop_duplicate_workers) s += std::string(s.empty() ? "" : ",") + "unique-worker";
    if (require_survey) s += std::string(s.empty() ? "" : ",") + "survey";
    return s.empty() ? "none" : s;
  }
};

inline bool has_survey(const SessionRecord& r) { return r.survey && !r.survey->items.empty(); }

// Session ids that survive `policy`, in store order. A worker seen more than
// once keeps only their earliest-received session (store order breaks ties);
// the other rules then apply to what remains.
inline std::vector<std::string> apply_exclusions(const std::vector<SessionRecordPtr>& records,
                                                 const ExclusionPolicy& policy) {
  std::map<std::string, std::size_t> first_by_worker;
  if (policy.drop_duplicate_workers) {
    for (std::size_t i = 0; i < records.size(); ++i) {
      auto [it, inserted] = first_by_worker.emplace(records[i]->worker_id, i);
      if (!inserted && records[i]->received_at_ms < records[it->second]->received_at_ms) it->second = i;
    }
  }
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = *records[i];
    if (policy.drop_duplicate_workers && first_by_worker[r.worker_id] != i) continue;
    if (policy.require_complete && !r.complete) continue;
    if (policy.require_survey && !has_survey(r)) continue;
    kept.push_back(r.session_id);
  }
  return kept;
}

inline constexpr std::size_t kExportedOrders = 3;

struct SessionDurations {
  std::vector<double> orders;  // order k = k-th OrderSent - k-th OrderStart
  std::optional<double> overall;
};

inline SessionDurations durations_of(const std::vector<Event>& events) {
  SessionDurations d;
  constexpr std::int64_t kNone = -1;  // schema guarantees t_ms >= 0
  std::int64_t first_start = kNone, pending = kNone;
  for (const auto& e : events) {
    if (e.kind == EventKind::OrderStart) {
      if (first_start == kNone) first_start = e.t_ms;
      pending = e.t_ms;
    } else if (e.kind == EventKind::OrderSent && pending != kNone) {
      d.orders.push_back(ms_to_seconds(e.t_ms - pending));
      pending = kNone;
    } else if (e.kind == EventKind::SessionEnd && first_start != kNone && !d.overall) {
      d.overall = ms_to_seconds(e.t_ms - first_start);
    }
  }
  return d;
}

inline void write_durations_header(std::ostream& out) {
  out << "session_id,order1_s,order2_s,order3_s,overall_s\n";
}

inline void write_durations_row(std::ostream& out, const std::string& session_id,
                                const SessionDurations& d) {
  out << session_id;
  for (std::size_t k = 0; k < kExportedOrders; ++k) {
    out << ',';
    if (k < d.orders.size()) out << format_number(d.orders[k]);
  }
  out << ',';
  if (d.overall) out << format_number(*d.overall);
  out << '\n';
}

// Duration CSV for the sessions retained by `policy`, in store order.
inline void export_durations(std::ostream& out, const std::vector<SessionRecordPtr>& records,
                             const ExclusionPolicy& policy) {
  const auto kept = apply_exclusions(records, policy);
  const std::unordered_set<std::string> keep(kept.begin(), kept.end());
  write_durations_header(out);
  for (const auto& r : records)
    if (keep.count(r->session_id)) write_durations_row(out, r->session_id, durations_of(r->events));
}

inline std::string export_durations(const std::vector<SessionRecordPtr>& records,
                                    const ExclusionPolicy& policy) {
  std::ostringstream out;
  export_durations(out, records, policy);
  return out.str();
}

}  // namespace teamtime
