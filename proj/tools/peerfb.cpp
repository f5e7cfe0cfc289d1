#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "peerfb/http_api.hpp"
#include "peerfb/simharness.hpp"

using namespace peerfb;

namespace {

ApiServer* g_server = nullptr;

PlatformConfig load_platform_config(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw Error(Errc::not_found, fmt::format("cannot read config {}", path));
  return platform_config_from_json(nlohmann::json::parse(in));
}

int simulate(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out,
             std::optional<int> sessions, bool null) {
  sim::SimConfig cfg = config.empty() ? sim::SimConfig{} : sim::load_sim_config(config);
  if (seed) cfg.rng_seed = *seed;
  if (sessions) cfg.sessions = *sessions;
  if (null) cfg = sim::null_model(cfg);
  const auto result = sim::run_experiment(cfg, out);
  std::cout << result.report.to_text();
  std::cerr << fmt::format("wrote {}, {}, {}, {}, {}, {}\n", result.files.observations.string(),
                           result.files.report_text.string(), result.files.report_csv.string(),
                           result.files.rulebook.string(), result.files.events.string(),
                           result.files.platform.string());
  return 0;
}

int serve(const std::string& config, const std::string& events, const std::string& host, int port) {
  const char* token = std::getenv("PEERFB_ADMIN_TOKEN");
  if (token == nullptr || std::string(token).empty()) {
    std::cerr << "PEERFB_ADMIN_TOKEN must be set\n";
    return 2;
  }
  std::shared_ptr<EventStore> store;
  if (events.empty()) {
    store = std::make_shared<MemoryEventStore>();
  } else {
    store = std::make_shared<FileEventStore>(events);
  }
  Platform platform(load_platform_config(config), store);
  ApiServer server(platform, ApiOptions{token});
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  std::cerr << fmt::format("listening on {}:{}\n", host, port);
  if (!server.listen(host, port)) {
    std::cerr << "failed to bind\n";
    return 1;
  }
  return 0;
}

int validate_scorer(const std::string& corpus, const std::string& config) {
  std::ifstream in(corpus);
  if (!in) throw Error(Errc::not_found, fmt::format("cannot read corpus {}", corpus));
  const auto rows = read_annotation_corpus(in);
  const PlatformConfig cfg = load_platform_config(config);
  auto provider = make_provider(cfg.provider);
  const auto report = validate_against_annotations(*provider, Rubric::standard(), rows);
  fmt::print("provider: {}\nrows: {}\nunscored: {}\n", provider->name(), rows.size(), report.unscored);
  fmt::print("{:<14}{:>6}{:>9}{:>10}{:>8}\n", "criterion", "n", "exact", "adjacent", "mae");
  for (const auto& c : report.criteria) {
    fmt::print("{:<14}{:>6}{:>9.3f}{:>10.3f}{:>8.3f}\n", c.criterion, c.n, c.exact, c.adjacent,
               c.mean_absolute_error);
  }
  return 0;
}

int report(const std::string& observations, bool csv) {
  const auto r = build_report(ingest_observations(std::filesystem::path(observations)));
  std::cout << (csv ? r.to_csv() : r.to_text());
  return 0;
}

int replay(const std::string& config, const std::string& events) {
  const auto log = FileEventStore(events).load();
  const auto platform = replay_platform(load_platform_config(config), log);
  fmt::print("replayed {} events, {} ledger entries\n", log.size(), platform->ledger().size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gamified peer feedback platform: simulator, server and tools"};
  app.require_subcommand(1);

  std::string config, out, events, host = "127.0.0.1", corpus, observations;
  std::optional<std::uint64_t> seed;
  std::optional<int> sessions;
  bool null = false, csv = false;
  int port = 8080;

  auto* sim_cmd = app.add_subcommand("simulate", "Run a simulated cohort and write the report");
  sim_cmd->add_option("--config", config, "Simulation config (JSON); defaults if omitted");
  sim_cmd->add_option("--seed", seed, "RNG seed, overrides the config");
  sim_cmd->add_option("--out", out, "Output directory")->required();
  sim_cmd->add_option("--sessions", sessions, "Number of sessions (1 or 2)");
  sim_cmd->add_flag("--null-model", null, "Zero incentive sensitivity for every agent");

  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
  serve_cmd->add_option("--config", config, "Platform config (JSON)");
  serve_cmd->add_option("--events", events, "Event log file (JSON lines); replayed on start");
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("--port", port, "Port");

  auto* val_cmd = app.add_subcommand("validate-scorer", "Compare the scorer with human annotations");
  val_cmd->add_option("--corpus", corpus, "Annotated corpus (CSV)")->required();
  val_cmd->add_option("--config", config, "Platform config selecting the provider");

  auto* rep_cmd = app.add_subcommand("report", "Build the report from an observation file");
  rep_cmd->add_option("--observations", observations, "Observation CSV")->required();
  rep_cmd->add_flag("--csv", csv, "CSV instead of text");

  auto* replay_cmd = app.add_subcommand("replay", "Check that an event log replays cleanly");
  replay_cmd->add_option("--events", events, "Event log file")->required();
  replay_cmd->add_option("--config", config, "Platform config (JSON)");

  auto* defaults_cmd = app.add_subcommand("default-config", "Print the default simulation config");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim_cmd) return simulate(config, seed, out, sessions, null);
    if (*serve_cmd) return serve(config, events, host, port);
    if (*val_cmd) return validate_scorer(corpus, config);
    if (*rep_cmd) return report(observations, csv);
    if (*replay_cmd) return replay(config, events);
    if (*defaults_cmd) {
      std::cout << sim::to_json(sim::SimConfig{}).dump(2) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
