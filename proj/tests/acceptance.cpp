// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failures. Tolerances, seeds and runtime budgets are fixed here.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include <json.hpp>

#include <teamtime/dispatch.hpp>
#include <teamtime/fitting.hpp>
#include <teamtime/model_selection.hpp>
#include <teamtime/packing_sim.hpp>
#include <teamtime/telemetry.hpp>
#include <teamtime/telemetry_server.hpp>

using namespace teamtime;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

nlohmann::json fixture(const std::string& name) {
  std::ifstream in(std::string(TEAMTIME_FIXTURES) + "/" + name);
  return nlohmann::json::parse(in);
}

// Order-1 parameters of the four reference fits.
const std::array<DurationModel, 4> kOrderOne{
    DurationModel::normal(60.04, 59.57), DurationModel::weibull(1.30, 65.97),
    DurationModel::gamma(2.18, 0.04), DurationModel::lognormal(3.85, 0.62)};

// ---------------------------------------------------------------------------

Outcome information_criteria_check() {
  const auto ic = information_criteria(-478.95, 2, 100);
  const bool ok = std::abs(ic.aic - 961.9) <= 0.05 && std::abs(ic.bic - 967.1) <= 0.05;
  return {ok, fmt("AIC %.4f (want 961.9), BIC %.4f (want 967.1), tol 0.05", ic.aic, ic.bic)};
}

// Per-observation Fisher information by Monte Carlo: the mean outer product
// of central-difference scores of ln f over draws from the true model.
std::array<double, 2> asymptotic_se(const DurationModel& m, std::size_t n) {
  constexpr std::size_t kDraws = 200000;
  const auto [a, b] = m.pair();
  const double ha = 1e-5 * std::abs(a), hb = 1e-5 * std::abs(b);
  const Family f = m.family();
  const auto xs = sample(m, 0x5EED, kDraws);
  double i11 = 0, i12 = 0, i22 = 0;
  for (double x : xs.samples) {
    const double s1 = (log_pdf(DurationModel::from_pair(f, a + ha, b), x) -
                       log_pdf(DurationModel::from_pair(f, a - ha, b), x)) / (2 * ha);
    const double s2 = (log_pdf(DurationModel::from_pair(f, a, b + hb), x) -
                       log_pdf(DurationModel::from_pair(f, a, b - hb), x)) / (2 * hb);
    i11 += s1 * s1;
    i12 += s1 * s2;
    i22 += s2 * s2;
  }
  i11 /= kDraws, i12 /= kDraws, i22 /= kDraws;
  const double det = i11 * i22 - i12 * i12;
  const double nn = static_cast<double>(n);
  return {std::sqrt(i22 / det / nn), std::sqrt(i11 / det / nn)};
}

Outcome fit_recovery() {
  constexpr std::size_t kN = 100;
  constexpr int kSeeds = 200;
  constexpr double kRequired = 0.90;
  bool ok = true;
  std::string detail;
  for (std::size_t fi = 0; fi < kOrderOne.size(); ++fi) {
    const auto& truth = kOrderOne[fi];
    const auto se = asymptotic_se(truth, kN);
    const auto [a, b] = truth.pair();
    int hits = 0;
    for (int s = 0; s < kSeeds; ++s) {
      const auto fit = fit_mle(truth.family(), sample(truth, derive_seed(derive_seed(1301, fi), s), kN));
      const auto [fa, fb] = fit.model.pair();
      hits += std::abs(fa - a) <= 3 * se[0] && std::abs(fb - b) <= 3 * se[1];
    }
    const double rate = static_cast<double>(hits) / kSeeds;
    ok = ok && rate >= kRequired;
    detail += fmt("%s %d/%d; ", std::string(family_name(truth.family())).c_str(), hits, kSeeds);
  }
  return {ok, detail + "need >= 90% per family"};
}

Outcome selection_robustness() {
  const auto oracle = fixture("selection_oracle.json")["lognormal_vs"]["threshold_200"];
  constexpr int kTrials = 200;
  const auto truth = DurationModel::lognormal(3.85, 0.62);
  std::array<int, 3> wins{};  // vs normal, weibull, gamma
  for (int s = 0; s < kTrials; ++s) {
    const auto table = compare_models(sample(truth, derive_seed(3850, s), 100));
    const double ln = table.report(Family::LogNormal)->aic;
    wins[0] += ln < table.report(Family::Normal)->aic;
    wins[1] += ln < table.report(Family::Weibull)->aic;
    wins[2] += ln < table.report(Family::Gamma)->aic;
  }
  const std::array<double, 3> need{oracle["normal"].get<double>(), oracle["weibull"].get<double>(),
                                   oracle["gamma"].get<double>()};
  bool ok = true;
  for (int i = 0; i < 3; ++i) ok = ok && wins[i] >= need[i] * kTrials;
  return {ok, fmt("lognormal beats normal %d, weibull %d, gamma %d of %d (need %.4f, %.4f, %.4f)", wins[0],
                  wins[1], wins[2], kTrials, need[0], need[1], need[2])};
}

Outcome dispatch_optimality() {
  constexpr int kTriples = 100;
  constexpr int kGrid = 1000;
  Rng rng(575);
  int agree = 0;
  double worst = 0;
  for (int i = 0; i < kTriples; ++i) {
    const Family f = kAllFamilies[static_cast<std::size_t>(rng.uniform() * 4)];
    DurationModel m = DurationModel::normal(0, 1);
    switch (f) {
      case Family::Normal: m = DurationModel::normal(10 + 60 * rng.uniform(), 2 + 40 * rng.uniform()); break;
      case Family::Weibull: m = DurationModel::weibull(0.7 + 3 * rng.uniform(), 10 + 80 * rng.uniform()); break;
      case Family::Gamma: m = DurationModel::gamma(0.7 + 12 * rng.uniform(), 0.02 + 0.4 * rng.uniform()); break;
      case Family::LogNormal: m = DurationModel::lognormal(2.5 + 2 * rng.uniform(), 0.1 + 0.8 * rng.uniform()); break;
    }
    const double r = 0.02 + 0.96 * rng.uniform();
    const CostSpec costs{1 - r, r};
    const double step = 1e-3 * quantile(m, 0.999);
    double best_t = 0, best = expected_cost(m, 0, costs);
    for (int j = 1; j <= kGrid; ++j) {
      const double c = expected_cost(m, j * step, costs);
      if (c < best) best = c, best_t = j * step;
    }
    const double gap = std::abs(best_t - optimal_dispatch(m, costs)) / step;
    worst = std::max(worst, gap);
    agree += gap <= 1.0;
  }
  return {agree == kTriples, fmt("%d/%d within one grid step (worst %.3f steps)", agree, kTriples, worst)};
}

Outcome simulator_structure() {
  constexpr std::size_t kSessions = 10000;
  // (a) the default illustrative session.
  std::ifstream in(std::string(TEAMTIME_CONFIGS) + "/default_sim.json");
  const auto cfg = config_from_json(nlohmann::ordered_json::parse(in));
  std::size_t violations = 0, deliveries = 0;
  for (std::size_t i = 0; i < kSessions; ++i) {
    const auto t = run_session(cfg.orders, cfg.human, derive_seed(cfg.seed, i));
    for (const auto& d : t.deliveries) {
      ++deliveries;
      violations += t.order_sent_ms[d.order] < d.arrival_ms;
    }
  }
  // (b) three identical orders, learning multipliers 2, 1, 1.
  auto human = cfg.human;
  human.learning = {2.0, 1.0, 1.0};
  const std::vector<OrderSpec> same(3, cfg.orders[0]);
  const auto b = run_batch(same, human, kSessions, 576);
  const double v1 = std::pow(empirical_summary(b.orders[0]).sd, 2);
  const double v2 = std::pow(empirical_summary(b.orders[1]).sd, 2);
  return {violations == 0 && v1 > v2,
          fmt("%zu of %zu hand-overs finish before arrival; order variances %.2f > %.2f", violations, deliveries,
              v1, v2)};
}

Outcome pipeline_round_trip() {
  std::ifstream in(std::string(TEAMTIME_CONFIGS) + "/lognormal_pipeline.json");
  const auto cfg = config_from_json(nlohmann::ordered_json::parse(in));
  const auto batch = run_batch(cfg.orders, cfg.human, cfg.n_sessions, cfg.seed, true);

  std::ostringstream sim_csv;
  write_durations_header(sim_csv);
  for (std::size_t i = 0; i < batch.traces.size(); ++i) {
    SessionDurations d;
    for (const auto& o : batch.orders) d.orders.push_back(o.samples[i]);
    d.overall = batch.overall.samples[i];
    write_durations_row(sim_csv, sim_session_id(cfg.seed, i), d);
  }

  std::random_device rd;
  const auto dir = std::filesystem::temp_directory_path() / ("teamtime-acceptance-" + std::to_string(rd()));
  std::string exported;
  std::size_t created = 0;
  {
    SessionStore store(dir);
    TelemetryServer server(store, std::size_t{4} << 20);
    const int port = server.bind_any();
    std::thread th([&server] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client client("127.0.0.1", port);
    for (std::size_t i = 0; i < batch.traces.size(); ++i) {
      const auto body = session_payload(batch.traces[i], sim_session_id(cfg.seed, i),
                                        "worker-" + std::to_string(i), cfg.survey_items);
      if (auto r = client.Post("/v1/sessions", body.dump(), "application/json"); r && r->status == 201) ++created;
    }
    if (auto r = client.Get("/v1/export.csv?policy=full"); r && r->status == 200) exported = r->body;
    server.stop();
    th.join();
  }
  std::filesystem::remove_all(dir);

  const bool identical = exported == sim_csv.str();
  std::istringstream csv(exported);
  const auto order1 = read_csv_column(csv, "order1_s", "order1_s");
  bool same_doubles = order1.samples == batch.orders[0].samples;
  const auto table = compare_models(order1);
  const auto aic = table.selected(Criterion::AIC);
  const bool selected = aic && *aic == Family::LogNormal;
  return {created == cfg.n_sessions && identical && same_doubles && selected,
          fmt("%zu/%zu ingested (201), export %s simulator output, AIC selects %s", created, cfg.n_sessions,
              identical && same_doubles ? "bit-identical to" : "DIFFERS from",
              aic ? std::string(family_name(*aic)).c_str() : "none")};
}

// A^2 of uniforms, accumulated in long double.
double ad_reference(std::vector<double> u) {
  std::sort(u.begin(), u.end());
  const std::size_t n = u.size();
  long double acc = 0.0L;
  for (std::size_t i = 1; i <= n; ++i) {
    const long double lo = std::clamp(u[i - 1], 1e-300, 1.0 - 1e-16);
    const long double hi = std::clamp(u[n - i], 1e-300, 1.0 - 1e-16);
    acc += (2.0L * i - 1.0L) * (std::log(lo) + std::log1p(-hi));
  }
  return static_cast<double>(-static_cast<long double>(n) - acc / n);
}

Outcome ad_calibration() {
  const double q95 = fixture("selection_oracle.json")["ad_null"]["q95"].get<double>();
  Rng rng(578);
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    const Family f = kAllFamilies[i % 4];
    const auto m = DurationModel::from_pair(f, 0.5 + 5 * rng.uniform(), 0.2 + 2 * rng.uniform());
    const auto d = sample(DurationModel::lognormal(0.5, 1.0), derive_seed(578, i), 20 + 20 * i);
    std::vector<double> u;
    for (double x : d.samples) u.push_back(cdf(m, x));
    const double want = ad_reference(u);
    worst = std::max(worst, std::abs(anderson_darling(m, d) - want) / std::max(1.0, std::abs(want)));
  }
  int below = 0;
  for (int i = 0; i < 100; ++i) {
    const auto& m = kOrderOne[static_cast<std::size_t>(i % 4)];
    below += anderson_darling(m, sample(m, derive_seed(5000, i), 5000)) < q95;
  }
  return {worst <= 1e-9 && below >= 95,
          fmt("PIT max rel diff %.2e (tol 1e-9); self-drawn A^2 < %.4f in %d/100 (need 95)", worst, q95, below)};
}

}  // namespace

int main() {
  struct Check {
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Check> criteria{
      {"information-criteria", 1, information_criteria_check},
      {"fit-recovery", 60, fit_recovery},
      {"selection-robustness", 120, selection_robustness},
      {"dispatch-optimality", 60, dispatch_optimality},
      {"simulator-structure", 60, simulator_structure},
      {"pipeline-round-trip", 120, pipeline_round_trip},
      {"ad-calibration", 120, ad_calibration},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o{false, ""};
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && secs <= c.budget_s;
    failures += !pass;
    std::printf("%s %-22s %s [%.2fs, budget %.0fs]\n", pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs,
                c.budget_s);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures;
}
