#pragma once

// Command-line front end: fit, compare, plot, simulate, schedule, serve, export.
// Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dataset.hpp"
#include "dispatch.hpp"
#include "distributions.hpp"
#include "fitting.hpp"
#include "model_selection.hpp"
#include "packing_sim.hpp"
#include "reporting.hpp"
#include "telemetry.hpp"
#include "telemetry_server.hpp"
#include "version.hpp"

namespace teamtime::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open input file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write output file: " + path.string());
  return out;
}

inline nlohmann::ordered_json versioned(nlohmann::ordered_json body) {
  nlohmann::ordered_json j{{"schema_version", kSchemaVersion}};
  j.update(body);
  return j;
}

inline DurationModel model_from_text(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    const auto j = nlohmann::ordered_json::parse(text);
    if (j.contains("fits") && j["fits"].is_array() && j["fits"].size() == 1) return model_from_json(j["fits"][0]);
    return model_from_json(j);
  }
  return from_record(text);
}

// A model argument is a file (JSON object, `fit` output with one fit, or a
// text record) or the same forms given inline.
inline DurationModel load_model(const std::string& spec) {
  std::error_code ec;
  if (std::filesystem::is_regular_file(spec, ec)) return model_from_text(read_file(spec));
  return model_from_text(spec);
}

inline Dataset load_dataset(const std::string& path, const std::string& column) {
  auto data = read_csv_column(path, column);
  if (data.empty()) throw std::runtime_error("column '" + column + "' in " + path + " has no values");
  return data;
}

inline std::filesystem::path with_extension(std::filesystem::path p, const char* ext) {
  p.replace_extension(ext);
  return p;
}

}  // namespace detail

struct Options {
  std::string input, column, family = "all", out, kind, model, config, data_dir, policy = "full";
  std::vector<std::string> models;
  std::vector<double> travel{0.0};
  double cost_human = 1.0, cost_robot = 1.0;
  std::optional<std::uint64_t> seed;
  int port = 0;
  std::size_t max_body = 0;
};

inline int cmd_fit(const Options& o, std::ostream& out) {
  const auto data = detail::load_dataset(o.input, o.column);
  std::vector<Family> families;
  if (o.family == "all") families.assign(std::begin(kAllFamilies), std::end(kAllFamilies));
  else families.push_back(parse_family(o.family));
  auto fits = nlohmann::ordered_json::array();
  for (Family f : families) fits.push_back(to_json(fit_mle(f, data)));
  const auto j = detail::versioned({{"dataset", data.label}, {"n", data.n()}, {"fits", fits}});
  detail::open_out(o.out) << j.dump(2) << '\n';
  for (const auto& f : fits) out << f.dump() << '\n';
  return kExitOk;
}

inline int cmd_compare(const Options& o, std::ostream& out) {
  const auto data = detail::load_dataset(o.input, o.column);
  const auto table = compare_models(data);
  const auto json_path = detail::with_extension(o.out, ".json");
  const auto csv_path = detail::with_extension(o.out, ".csv");
  detail::open_out(json_path) << detail::versioned(to_json(table)).dump(2) << '\n';
  auto csv = detail::open_out(csv_path);
  write_csv(csv, table);
  for (Criterion c : kCriteria) {
    const auto sel = table.selected(c);
    out << criterion_name(c) << ": " << (sel ? family_name(*sel) : "none") << '\n';
  }
  out << "wrote " << json_path.string() << " and " << csv_path.string() << '\n';
  return kExitOk;
}

inline int cmd_plot(const Options& o, std::ostream& out) {
  const auto model = detail::load_model(o.model);
  const auto column = o.column.empty() ? first_data_column(o.input) : o.column;
  const auto data = detail::load_dataset(o.input, column);
  const bool gnuplot = std::filesystem::path(o.out).extension() == ".dat";
  auto write = [gnuplot](const std::filesystem::path& p, const PlotSeries& s) {
    auto f = detail::open_out(p);
    if (gnuplot) write_gnuplot(f, s);
    else write_csv(f, s);
  };
  if (o.kind == "qq") {
    write(o.out, qq_points(model, data));
  } else if (o.kind == "cdf") {
    write(o.out, cdf_overlay(model, data));
  } else {
    const auto d = density_histogram(model, data);
    write(o.out, d.histogram);
    auto curve = std::filesystem::path(o.out);
    curve.replace_filename(curve.stem().string() + "_curve" + curve.extension().string());
    write(curve, d.curve);
    out << "wrote " << curve.string() << '\n';
  }
  out << "wrote " << o.out << " (model " << to_record(model) << ")\n";
  return kExitOk;
}

inline int cmd_simulate(const Options& o, std::ostream& out) {
  auto cfg = config_from_json(nlohmann::ordered_json::parse(detail::read_file(o.config)));
  if (o.seed) cfg.seed = *o.seed;
  const std::filesystem::path dir(o.out);
  std::filesystem::create_directories(dir);

  SessionStore store(dir);
  auto traces = detail::open_out(dir / "traces.jsonl");
  auto durations = detail::open_out(dir / "durations.csv");
  write_durations_header(durations);
  std::size_t stored = 0;
  for (std::size_t i = 0; i < cfg.n_sessions; ++i) {
    const auto trace = run_session(cfg.orders, cfg.human, derive_seed(cfg.seed, i));
    const auto id = sim_session_id(cfg.seed, i);
    write_trace_jsonl(traces, trace, id);
    write_durations_row(durations, id, durations_of(trace.events));
    const auto payload = session_payload(trace, id, "sim-worker-" + std::to_string(i), cfg.survey_items);
    // Synthetic receive clock keeps the store contents reproducible.
    const auto res = ingest_session(store, payload, static_cast<std::int64_t>(i));
    if (res.status == IngestResult::Status::Rejected)
      throw std::runtime_error("simulated session failed validation: " + res.errors.front());
    stored += res.status == IngestResult::Status::Stored;
  }
  out << "simulated " << cfg.n_sessions << " sessions (" << stored << " newly stored) into "
      << dir.string() << '\n';
  return kExitOk;
}

inline int cmd_schedule(const Options& o, std::ostream& out) {
  std::vector<DurationModel> models;
  for (const auto& m : o.models) models.push_back(detail::load_model(m));
  const auto plan = schedule_session(models, CostSpec{o.cost_human, o.cost_robot}, o.travel);
  auto j = detail::versioned(to_json(plan));
  j["cost_human"] = o.cost_human;
  j["cost_robot"] = o.cost_robot;
  detail::open_out(o.out) << j.dump(2) << '\n';
  for (std::size_t k = 0; k < plan.orders.size(); ++k)
    out << "order " << k + 1 << ": target " << format_number(plan.orders[k].target_s) << " s, depart "
        << format_number(plan.orders[k].departure_s) << " s" << (plan.orders[k].departure_floored ? " (floored)" : "")
        << '\n';
  return kExitOk;
}

inline int cmd_export(const Options& o, std::ostream& out) {
  if (!std::filesystem::is_directory(o.data_dir))
    throw std::runtime_error("data directory does not exist: " + o.data_dir);
  const auto policy = ExclusionPolicy::parse(o.policy);
  SessionStore store(o.data_dir);
  const auto records = store.snapshot();
  auto f = detail::open_out(o.out);
  export_durations(f, records, policy);
  out << "exported " << apply_exclusions(records, policy).size() << " of " << records.size()
      << " sessions (policy " << policy.to_string() << ") to " << o.out << '\n';
  return kExitOk;
}

inline int cmd_serve(const Options& o, std::ostream& out) {
  auto cfg = ServiceConfig::from_env();
  if (o.port) cfg.port = o.port;
  if (!o.data_dir.empty()) cfg.data_dir = o.data_dir;
  if (o.max_body) cfg.max_body_bytes = o.max_body;
  SessionStore store(cfg.data_dir);
  TelemetryServer server(store, cfg.max_body_bytes);
  out << "serving telemetry on " << cfg.host << ':' << cfg.port << " (data " << cfg.data_dir.string() << ", "
      << store.size() << " sessions)" << std::endl;
  if (!server.listen(cfg.host, cfg.port)) throw std::runtime_error("cannot listen on port " + std::to_string(cfg.port));
  return kExitOk;
}

// Entry point shared by the executable and the tests.
inline int run_command(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"teamtime: duration-model fitting, selection, simulation and dispatch"};
  app.set_version_flag("--version", std::string("teamtime ") + kToolVersion + " (output schema " +
                                        std::to_string(kSchemaVersion) + ")");
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  Options o;

  auto* fit = app.add_subcommand("fit", "Maximum-likelihood fit of one or all families");
  fit->add_option("--input", o.input, "CSV file")->required();
  fit->add_option("--column", o.column, "duration column")->required();
  fit->add_option("--family", o.family, "normal|weibull|gamma|lognormal|all")
      ->check(CLI::IsMember({"normal", "weibull", "gamma", "lognormal", "all"}));
  fit->add_option("--out", o.out, "JSON output")->required();

  auto* compare = app.add_subcommand("compare", "Fit all families and rank by AD, AIC and BIC");
  compare->add_option("--input", o.input)->required();
  compare->add_option("--column", o.column)->required();
  compare->add_option("--out", o.out, "output stem; writes .json and .csv")->required();

  auto* plot = app.add_subcommand("plot", "Emit diagnostic plot data");
  plot->add_option("--kind", o.kind)->required()->check(CLI::IsMember({"qq", "cdf", "density"}));
  plot->add_option("--model", o.model, "model file or inline record")->required();
  plot->add_option("--input", o.input)->required();
  plot->add_option("--column", o.column, "duration column (default: first data column)");
  plot->add_option("--out", o.out, "CSV output (.dat for gnuplot layout)")->required();

  auto* simulate = app.add_subcommand("simulate", "Simulate packing sessions");
  simulate->add_option("--config", o.config, "simulation config JSON")->required();
  simulate->add_option("--out", o.out, "output data directory")->required();
  simulate->add_option("--seed", o.seed, "overrides the config seed");

  auto* schedule = app.add_subcommand("schedule", "Plan robot dispatch times");
  schedule->add_option("--models", o.models, "one model per order")->required();
  schedule->add_option("--cost-human", o.cost_human, "cost per second the human waits")->required();
  schedule->add_option("--cost-robot", o.cost_robot, "cost per second the robot waits")->required();
  schedule->add_option("--travel", o.travel, "robot travel seconds (one, or one per order)");
  schedule->add_option("--out", o.out, "DispatchPlan JSON")->required();

  auto* serve = app.add_subcommand("serve", "Run the telemetry service");
  serve->add_option("--port", o.port);
  serve->add_option("--data-dir", o.data_dir);
  serve->add_option("--max-body", o.max_body, "maximum request body in bytes");

  auto* exp = app.add_subcommand("export", "Export per-session durations");
  exp->add_option("--data-dir", o.data_dir)->required();
  exp->add_option("--policy", o.policy, "full|none|complete,unique-worker,survey");
  exp->add_option("--out", o.out)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  auto* sub = app.get_subcommands().front();
  err << "teamtime " << sub->get_name() << ":";
  for (const auto* opt : sub->get_options()) {
    if (opt->get_name() == "--help" || opt->get_name().empty()) continue;
    err << ' ' << opt->get_name() << '=' << (opt->count() ? opt->as<std::string>() : opt->get_default_str());
  }
  err << '\n';

  try {
    if (sub == fit) return cmd_fit(o, out);
    if (sub == compare) return cmd_compare(o, out);
    if (sub == plot) return cmd_plot(o, out);
    if (sub == simulate) return cmd_simulate(o, out);
    if (sub == schedule) return cmd_schedule(o, out);
    if (sub == serve) return cmd_serve(o, out);
    if (sub == exp) return cmd_export(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

inline int run_command(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run_command(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace teamtime::cli
