#include <gtest/gtest.h>

#include <atomic>
#include <numeric>
#include <set>
#include <fstream>
#include <random>
#include <thread>

#include <teamtime/packing_sim.hpp>
#include <teamtime/telemetry.hpp>
#include <teamtime/telemetry_server.hpp>

using namespace teamtime;
using nlohmann::ordered_json;

namespace {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("teamtime-test-" + std::to_string(rd()) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

SessionStore::Options fast() { return {std::size_t{8} << 20, false}; }

// A three-order session; order k takes durations_ms[k].
ordered_json payload(const std::string& id, const std::string& worker, std::vector<std::int64_t> durations_ms = {12500, 8000, 9000},
                     bool survey = true) {
  ordered_json j{{"session_id", id}, {"worker_id", worker}, {"client_version", "test/1"}};
  auto events = ordered_json::array();
  std::int64_t t = 0;
  for (std::size_t k = 0; k < durations_ms.size(); ++k) {
    events.push_back({{"t_ms", t}, {"kind", "OrderStart"}, {"payload", {{"order", k + 1}}}});
    t += durations_ms[k];
    events.push_back({{"t_ms", t}, {"kind", "OrderSent"}, {"payload", {{"order", k + 1}}}});
  }
  events.push_back({{"t_ms", t}, {"kind", "SessionEnd"}, {"payload", ordered_json::object()}});
  j["events"] = std::move(events);
  if (survey) j["survey"] = {{"items", {{{"id", "fluency"}, {"score", 4}}}}, {"free_text", "ok"}};
  return j;
}

std::vector<std::string> errors_of(const ordered_json& body) {
  try {
    parse_session_payload(body);
  } catch (const SchemaError& e) {
    return e.errors();
  }
  return {};
}

}  // namespace

TEST(SessionSchema, AcceptsCompletePayload) {
  const auto rec = parse_session_payload(payload("s1", "w1"));
  EXPECT_TRUE(rec.complete);
  EXPECT_EQ(rec.events.size(), 7u);
  ASSERT_TRUE(rec.survey);
  EXPECT_EQ(rec.survey->items[0].score, 4);
  EXPECT_EQ(*rec.survey->free_text, "ok");
  EXPECT_FALSE(parse_session_payload(payload("s2", "w1", {100, 200})).complete);
}

TEST(SessionSchema, RejectsWithFieldMessages) {
  auto p = payload("s", "w");
  p["events"][3]["t_ms"] = 10;
  auto errs = errors_of(p);
  ASSERT_EQ(errs.size(), 1u);
  EXPECT_EQ(errs[0].rfind("events[3].t_ms: decreases", 0), 0u) << errs[0];

  p = payload("s", "w");
  p.erase("worker_id");
  p["events"][0]["kind"] = "Teleport";
  p["events"][1]["t_ms"] = 1.5;
  p["survey"]["items"][0]["score"] = 6;
  errs = errors_of(p);
  ASSERT_EQ(errs.size(), 4u);
  EXPECT_EQ(errs[0], "worker_id: required nonempty string");
  EXPECT_EQ(errs[1], "events[0].kind: unknown or missing event kind");
  EXPECT_EQ(errs[2], "events[1].t_ms: required non-negative integer");
  EXPECT_EQ(errs[3], "survey.items[0].score: required integer 1..5");

  EXPECT_EQ(errors_of(ordered_json::array()).at(0), "body: must be a JSON object");
  p = payload("s", "w");
  p["events"][0]["payload"] = "x";
  EXPECT_EQ(errors_of(p).at(0), "events[0].payload: must be an object");
  p = payload("s", "w");
  p["events"][0]["t_ms"] = -1;
  EXPECT_EQ(errors_of(p).at(0), "events[0].t_ms: required non-negative integer");
}

TEST(SessionStore, IngestIsIdempotent) {
  TempDir dir;
  SessionStore store(dir.path(), fast());
  const auto first = ingest_session(store, payload("s1", "w1"), 5);
  EXPECT_EQ(first.status, IngestResult::Status::Stored);
  EXPECT_TRUE(first.complete);
  const auto size = std::filesystem::file_size(dir.path() / SessionStore::segment_name(1));
  auto changed = payload("s1", "w2", {1, 2, 3});
  EXPECT_EQ(ingest_session(store, changed, 6).status, IngestResult::Status::Duplicate);
  EXPECT_EQ(store.size(), 1u);
  EXPECT_EQ(std::filesystem::file_size(dir.path() / SessionStore::segment_name(1)), size);
  EXPECT_EQ(store.snapshot()[0]->worker_id, "w1");

  auto bad = payload("s2", "w1");
  bad["events"][2]["t_ms"] = 0;
  const auto rejected = ingest_session(store, bad, 7);
  EXPECT_EQ(rejected.status, IngestResult::Status::Rejected);
  EXPECT_EQ(rejected.session_id, "s2");
  EXPECT_EQ(store.size(), 1u);
  EXPECT_EQ(ingest_session_body(store, "{not json", 8).status, IngestResult::Status::Rejected);
}

TEST(SessionStore, ReopenRestoresRecords) {
  TempDir dir;
  {
    SessionStore store(dir.path(), fast());
    for (int i = 0; i < 20; ++i) ingest_session(store, payload("s" + std::to_string(i), "w" + std::to_string(i)), i);
  }
  SessionStore store(dir.path(), fast());
  ASSERT_EQ(store.size(), 20u);
  EXPECT_EQ(store.discarded_bytes(), 0u);
  const auto recs = store.snapshot();
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(recs[i]->session_id, "s" + std::to_string(i));
    EXPECT_EQ(recs[i]->received_at_ms, i);
  }
  EXPECT_EQ(to_json(*recs[3]), to_json(record_from_json(to_json(*recs[3]))));
}

TEST(SessionStore, TornTailIsDiscardedOnRestart) {
  TempDir dir;
  {
    SessionStore store(dir.path(), fast());
    ingest_session(store, payload("s1", "w1"), 1);
    ingest_session(store, payload("s2", "w2"), 2);
  }
  const auto seg = dir.path() / SessionStore::segment_name(1);
  const auto good_size = std::filesystem::file_size(seg);
  SessionRecord rec = parse_session_payload(payload("s3", "w3"));
  const std::string full = detail::frame(to_json(rec).dump());
  // Crash at every possible byte of the third append.
  for (std::size_t cut : {std::size_t{1}, std::size_t{8}, std::size_t{12}, full.size() / 2, full.size() - 1}) {
    {
      std::ofstream out(seg, std::ios::binary | std::ios::app);
      out.write(full.data(), static_cast<std::streamsize>(cut));
    }
    SessionStore store(dir.path(), fast());
    EXPECT_EQ(store.size(), 2u);
    EXPECT_EQ(store.discarded_bytes(), cut);
    EXPECT_EQ(std::filesystem::file_size(seg), good_size);
  }
  // A complete frame with a bad checksum is also dropped.
  {
    std::string corrupt = full;
    corrupt[0] = corrupt[0] == '0' ? '1' : '0';
    std::ofstream out(seg, std::ios::binary | std::ios::app);
    out << corrupt;
  }
  SessionStore store(dir.path(), fast());
  EXPECT_EQ(store.size(), 2u);
  EXPECT_EQ(ingest_session(store, payload("s3", "w3"), 3).status, IngestResult::Status::Stored);
  SessionStore again(dir.path(), fast());
  EXPECT_EQ(again.size(), 3u);
  EXPECT_EQ(again.discarded_bytes(), 0u);
}

TEST(SessionStore, RollsOverSegments) {
  TempDir dir;
  {
    SessionStore store(dir.path(), {2048, false});
    for (int i = 0; i < 30; ++i) ingest_session(store, payload("s" + std::to_string(i), "w"), i);
  }
  std::size_t segments = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) {
    ++segments;
    EXPECT_LE(std::filesystem::file_size(e.path()), 2048u);
  }
  EXPECT_GT(segments, 5u);
  SessionStore store(dir.path(), {2048, false});
  EXPECT_EQ(store.size(), 30u);
  EXPECT_EQ(ingest_session(store, payload("s0", "w"), 99).status, IngestResult::Status::Duplicate);
}

TEST(SessionStore, ConcurrentIngestSerializesWrites) {
  TempDir dir;
  SessionStore store(dir.path(), fast());
  std::vector<std::thread> threads;
  std::atomic<int> stored{0};
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&, t] {
      for (int i = 0; i < 50; ++i) {
        // Every id is offered by two threads.
        const std::string id = "s" + std::to_string((t / 2) * 50 + i);
        if (ingest_session(store, payload(id, "w" + id), i).status == IngestResult::Status::Stored) ++stored;
      }
    });
  for (auto& th : threads) th.join();
  EXPECT_EQ(stored.load(), 200);
  SessionStore reopened(dir.path(), fast());
  EXPECT_EQ(reopened.size(), 200u);
  EXPECT_EQ(reopened.discarded_bytes(), 0u);
}

TEST(Exclusions, EachRuleExercised) {
  TempDir dir;
  SessionStore store(dir.path(), fast());
  ingest_session(store, payload("good", "w1"), 10);
  ingest_session(store, payload("partial", "w2", {100, 200}), 11);
  ingest_session(store, payload("again", "w1"), 12);
  ingest_session(store, payload("silent", "w3", {1, 2, 3}, false), 13);
  const auto recs = store.snapshot();
  EXPECT_EQ(apply_exclusions(recs, ExclusionPolicy::full()), std::vector<std::string>{"good"});
  EXPECT_EQ(apply_exclusions(recs, ExclusionPolicy::none()),
            (std::vector<std::string>{"good", "partial", "again", "silent"}));
  EXPECT_EQ(apply_exclusions(recs, ExclusionPolicy::parse("unique-worker")),
            (std::vector<std::string>{"good", "partial", "silent"}));
  EXPECT_EQ(apply_exclusions(recs, ExclusionPolicy::parse("complete")),
            (std::vector<std::string>{"good", "again", "silent"}));
  EXPECT_EQ(apply_exclusions(recs, ExclusionPolicy::parse("survey,complete")),
            (std::vector<std::string>{"good", "again"}));
}

TEST(Exclusions, EarliestReceivedWinsRegardlessOfStoreOrder) {
  TempDir dir;
  SessionStore store(dir.path(), fast());
  ingest_session(store, payload("late", "w1"), 50);
  ingest_session(store, payload("early", "w1"), 20);
  EXPECT_EQ(apply_exclusions(store.snapshot(), ExclusionPolicy::full()), std::vector<std::string>{"early"});
}

TEST(Exclusions, CountsIncompleteSessions) {
  TempDir dir;
  SessionStore store(dir.path(), fast());
  std::mt19937 pick(3);
  std::vector<int> idx(100);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), pick);
  const std::set<int> incomplete(idx.begin(), idx.begin() + 7);
  for (int i = 0; i < 100; ++i) {
    std::vector<std::int64_t> d{1000, 2000, 3000};
    if (incomplete.count(i)) d.resize(static_cast<std::size_t>(i % 3));
    ingest_session(store, payload("s" + std::to_string(i), "w" + std::to_string(i), d), i);
  }
  EXPECT_EQ(apply_exclusions(store.snapshot(), ExclusionPolicy::full()).size(), 93u);
}

TEST(Exclusions, PolicySyntax) {
  EXPECT_EQ(ExclusionPolicy::parse("full").to_string(), "complete,unique-worker,survey");
  EXPECT_EQ(ExclusionPolicy::parse("none").to_string(), "none");
  EXPECT_EQ(ExclusionPolicy::parse("survey,unique-worker").to_string(), "unique-worker,survey");
  EXPECT_THROW(ExclusionPolicy::parse("complete,fast"), ConfigError);
}

TEST(Export, SubtractsEventTimes) {
  TempDir dir;
  SessionStore store(dir.path(), fast());
  ingest_session(store, payload("s1", "w1"), 1);
  ingest_session(store, payload("s2", "w2", {100, 200}), 2);
  EXPECT_EQ(export_durations(store.snapshot(), ExclusionPolicy::full()),
            "session_id,order1_s,order2_s,order3_s,overall_s\ns1,12.5,8,9,29.5\n");
  EXPECT_EQ(export_durations(store.snapshot(), ExclusionPolicy::none()),
            "session_id,order1_s,order2_s,order3_s,overall_s\ns1,12.5,8,9,29.5\ns2,0.1,0.2,,0.3\n");
  EXPECT_EQ(export_durations({}, ExclusionPolicy::full()), "session_id,order1_s,order2_s,order3_s,overall_s\n");
}

TEST(Export, SimulatedBatchRoundTripsExactly) {
  const std::vector<OrderSpec> orders{
      OrderSpec{{OrderItem{"a", ItemSource::Bin, std::nullopt}, OrderItem{"r", ItemSource::Robot, RobotDelivery{3, 9}}}},
      OrderSpec{{OrderItem{"b", ItemSource::Bin, std::nullopt}}},
      OrderSpec{{OrderItem{"c", ItemSource::Robot, RobotDelivery{12, 9}}}}};
  const HumanModel human{DurationModel::lognormal(1.1, 0.7), DurationModel::gamma(2, 1.5), 0.1,
                         DurationModel::weibull(1.5, 3), {1.7, 1, 1}};
  const auto batch = run_batch(orders, human, 200, 77, true);
  TempDir dir;
  SessionStore store(dir.path(), fast());
  for (std::size_t i = 0; i < batch.traces.size(); ++i)
    ingest_session(store, session_payload(batch.traces[i], sim_session_id(77, i), "w" + std::to_string(i), {"q1"}),
                   static_cast<std::int64_t>(i));
  const auto recs = SessionStore(dir.path(), fast()).snapshot();
  ASSERT_EQ(recs.size(), 200u);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto d = durations_of(recs[i]->events);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(d.orders[k], batch.orders[k].samples[i]);
    EXPECT_EQ(*d.overall, batch.overall.samples[i]);
  }
  // Parsing the CSV back gives the same doubles.
  std::istringstream csv(export_durations(recs, ExclusionPolicy::full()));
  const auto col = read_csv_column(csv, "order1_s", "order1_s");
  EXPECT_EQ(col.samples, batch.orders[0].samples);
}

class HttpService : public ::testing::Test {
 protected:
  void SetUp() override {
    store_ = std::make_unique<SessionStore>(dir_.path(), fast());
    server_ = std::make_unique<TelemetryServer>(*store_, 64 * 1024, [this] { return ++clock_; });
    port_ = server_->bind_any();
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
  }
  void TearDown() override {
    server_->stop();
    thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

  TempDir dir_;
  std::unique_ptr<SessionStore> store_;
  std::unique_ptr<TelemetryServer> server_;
  std::atomic<std::int64_t> clock_{0};
  int port_ = 0;
  std::thread thread_;
};

TEST_F(HttpService, PostStatusCodes) {
  auto c = client();
  auto r = c.Post("/v1/sessions", payload("s1", "w1").dump(), "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 201);
  EXPECT_EQ(ordered_json::parse(r->body)["complete"], true);
  r = c.Post("/v1/sessions", payload("s1", "w1").dump(), "application/json");
  EXPECT_EQ(r->status, 409);
  auto bad = payload("s2", "w2");
  bad["events"][1]["t_ms"] = 0;
  bad["events"][2]["t_ms"] = 0;
  bad["events"][4]["t_ms"] = 0;
  r = c.Post("/v1/sessions", bad.dump(), "application/json");
  EXPECT_EQ(r->status, 422);
  EXPECT_FALSE(ordered_json::parse(r->body)["errors"].empty());
  r = c.Post("/v1/sessions", "[1,2", "application/json");
  EXPECT_EQ(r->status, 422);
  r = c.Post("/v1/sessions", std::string(100 * 1024, ' '), "application/json");
  EXPECT_EQ(r->status, 413);
  EXPECT_EQ(store_->size(), 1u);
  EXPECT_EQ(store_->snapshot()[0]->received_at_ms, 1);
}

TEST_F(HttpService, ListAndExport) {
  auto c = client();
  c.Post("/v1/sessions", payload("s1", "w1").dump(), "application/json");
  c.Post("/v1/sessions", payload("s2", "w1").dump(), "application/json");
  c.Post("/v1/sessions", payload("s3", "w3", {5, 5}).dump(), "application/json");
  auto r = c.Get("/v1/sessions");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(ordered_json::parse(r->body)["session_ids"].size(), 3u);
  r = c.Get("/v1/sessions?policy=full");
  EXPECT_EQ(ordered_json::parse(r->body)["session_ids"], ordered_json::array({"s1"}));
  r = c.Get("/v1/sessions?policy=unique-worker");
  EXPECT_EQ(ordered_json::parse(r->body)["session_ids"], ordered_json::array({"s1", "s3"}));
  r = c.Get("/v1/sessions?policy=bogus");
  EXPECT_EQ(r->status, 400);
  r = c.Get("/v1/export.csv");
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->body, export_durations(store_->snapshot(), ExclusionPolicy::full()));
  r = c.Get("/v1/export.csv?policy=none");
  EXPECT_EQ(r->body, export_durations(store_->snapshot(), ExclusionPolicy::none()));
}

TEST_F(HttpService, ConcurrentClients) {
  std::vector<std::thread> threads;
  std::atomic<int> created{0}, conflicts{0};
  for (int t = 0; t < 6; ++t)
    threads.emplace_back([&, t] {
      auto c = client();
      for (int i = 0; i < 20; ++i) {
        const std::string id = "s" + std::to_string((t % 3) * 20 + i);
        auto r = c.Post("/v1/sessions", payload(id, "w" + id).dump(), "application/json");
        if (r && r->status == 201) ++created;
        if (r && r->status == 409) ++conflicts;
      }
    });
  for (auto& th : threads) th.join();
  EXPECT_EQ(created.load(), 60);
  EXPECT_EQ(conflicts.load(), 60);
  EXPECT_EQ(store_->size(), 60u);
}

TEST(ServiceConfig, ReadsEnvironment) {
  ::setenv("TEAMTIME_PORT", "9123", 1);
  ::setenv("TEAMTIME_DATA_DIR", "/tmp/tt", 1);
  ::setenv("TEAMTIME_MAX_BODY_BYTES", "1000", 1);
  const auto c = ServiceConfig::from_env();
  EXPECT_EQ(c.port, 9123);
  EXPECT_EQ(c.data_dir, "/tmp/tt");
  EXPECT_EQ(c.max_body_bytes, 1000u);
  ::unsetenv("TEAMTIME_PORT");
  ::unsetenv("TEAMTIME_DATA_DIR");
  ::unsetenv("TEAMTIME_MAX_BODY_BYTES");
}
