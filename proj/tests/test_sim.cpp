#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "peerfb/simharness.hpp"

using namespace peerfb;
using namespace peerfb::sim;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("peerfb_sim_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("generated feedback scores exactly at the target") {
  Rng rng(99);
  int checked = 0;
  for (int c = 1; c <= 3; ++c) {
    for (int r = 0; r <= 3; ++r) {
      for (int s = 0; s <= r; ++s) {
        for (int rep = 0; rep < 50; ++rep) {
          const std::string text = generate_feedback({c, r, s}, rng);
          const QualityScore q = heuristic_mock_score(text);
          INFO(text);
          REQUIRE(q.clarity() == c);
          REQUIRE(q.relevance() == r);
          REQUIRE(q.specificity() == s);
          ++checked;
        }
      }
    }
  }
  CHECK(checked == 3 * 10 * 50);
  CHECK_THROWS_AS(generate_feedback({0, 1, 1}, rng), Error);
  CHECK_THROWS_AS(generate_feedback({2, 1, 2}, rng), Error);
}

TEST_CASE("config json round trip and validation") {
  SimConfig cfg;
  cfg.rng_seed = 42;
  cfg.profiles.mean.incentive_sensitivity = 0.4;
  cfg.platform.allocation.optional_cap_per_session = 3;
  const auto back = sim_config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));

  auto j = to_json(cfg);
  j["profiles"]["mean"]["consult_propensity"] = 1.5;
  CHECK_THROWS_AS(sim_config_from_json(j), Error);
  j = to_json(cfg);
  j["sessions"] = 3;
  CHECK_THROWS_AS(sim_config_from_json(j), Error);
  CHECK(null_model(cfg).profiles.mean.incentive_sensitivity == 0.0);
}

TEST_CASE("default-sized cohort gives everyone three mandatory reviews per session") {
  SimConfig cfg;
  cfg.rng_seed = 3;
  const auto r = simulate_cohort(cfg);
  std::map<std::pair<std::string, std::string>, int> mandatory;  // (session, reviewer)
  int allocations = 0;
  for (const auto& e : r.events) {
    if (e.type == "allocate") {
      ++allocations;
      CHECK(e.data["assignments"] == 102);
    }
  }
  CHECK(allocations == 2);
  for (const auto& subject : r.dataset.subjects()) {
    for (int k = 1; k <= 2; ++k) {
      const auto given = r.dataset.value(subject, k, "reviews_given");
      REQUIRE(given);
      CHECK(*given >= 3.0);
    }
  }
  CHECK(r.dataset.subjects().size() == 34);
}

TEST_CASE("simulation is deterministic and replayable") {
  SimConfig cfg;
  cfg.rng_seed = 11;
  const auto a = simulate_cohort(cfg);
  const auto b = simulate_cohort(cfg);
  CHECK(serialize_events(a.events) == serialize_events(b.events));
  CHECK(a.ledger == b.ledger);
  cfg.rng_seed = 12;
  CHECK(serialize_events(simulate_cohort(cfg).events) != serialize_events(a.events));

  cfg.rng_seed = 11;
  const PlatformConfig pc = effective_platform_config(cfg);
  const auto replayed = replay_platform(pc, a.events);
  CHECK(replayed->ledger().serialize() == a.ledger);
  CHECK(replayed->export_observations(Platform::kAdmin, a.course) == a.dataset);
}

TEST_CASE("ledger review credits match the point schedule") {
  SimConfig cfg;
  cfg.rng_seed = 5;
  const auto r = simulate_cohort(cfg);
  // Rebuild the events in a fresh platform to read per-assignment outcomes.
  const PlatformConfig pc = effective_platform_config(cfg);
  const auto p = replay_platform(pc, r.events);
  long expected_base = 0;
  for (const auto& s : p->students(r.course)) {
    for (const auto& a : p->my_assignments(s.id)) {
      if (a.status == ReviewStatus::submitted) {
        expected_base += pc.rules.points.review_points(a.obligation, *a.timeliness);
      }
    }
  }
  long ledger_base = 0;
  for (const auto& e : p->ledger().snapshot()) {
    if (e.event == LedgerEvent::review_points) ledger_base += e.base_xp;
  }
  CHECK(ledger_base == expected_base);
  const auto cached = p->ledger().cached_balances();
  const auto entries = p->ledger().snapshot();
  CHECK(Ledger::replay_balances(entries) == cached);
}

TEST_CASE("run_experiment writes every artifact") {
  SimConfig cfg;
  cfg.rng_seed = 7;
  const auto dir = scratch("full");
  const auto r = run_experiment(cfg, dir);
  for (const auto& f : {r.files.observations, r.files.report_text, r.files.report_csv, r.files.rulebook,
                        r.files.events, r.files.config, r.files.platform}) {
    CHECK(fs::exists(f));
    CHECK(fs::file_size(f) > 0);
  }
  CHECK(r.report.rows.size() == 12);
  CHECK(ingest_observations(r.files.observations) == r.sim.dataset);
  CHECK(sim_config_from_json(nlohmann::json::parse(slurp(r.files.config))).rng_seed == 7);
  const auto pc = platform_config_from_json(nlohmann::json::parse(slurp(r.files.platform)));
  const auto replayed = replay_platform(pc, FileEventStore(r.files.events).load());
  CHECK(replayed->ledger().serialize() == r.sim.ledger);

  const auto dir2 = scratch("full2");
  run_experiment(cfg, dir2);
  CHECK(slurp(dir / "report.txt") == slurp(dir2 / "report.txt"));
  CHECK(slurp(dir / "events.jsonl") == slurp(dir2 / "events.jsonl"));
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("single session run degrades the report") {
  SimConfig cfg;
  cfg.sessions = 1;
  const auto dir = scratch("one");
  const auto r = run_experiment(cfg, dir);
  CHECK(r.report.rows.size() == 7);
  CHECK(r.report.anovas.empty());
  fs::remove_all(dir);
}

TEST_CASE("unwritable output path is an error") {
  const auto blocker = scratch("blocker");
  { std::ofstream(blocker) << "x"; }
  CHECK_THROWS_AS(run_experiment(SimConfig{}, blocker / "out"), Error);
  fs::remove_all(blocker);
}

TEST_CASE("infeasible allocation propagates") {
  SimConfig cfg;
  cfg.n_students = 6;
  cfg.presenters_per_session = 6;
  cfg.platform.allocation.reviews_per_deliverable = 6;  // more than the five non-owners
  CHECK_THROWS_WITH_AS(simulate_cohort(cfg), doctest::Contains("infeasible"), Error);
}

TEST_CASE("incentives raise optional reviewing on average") {
  double treated = 0, control = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    SimConfig cfg;
    cfg.rng_seed = seed;
    const auto r = simulate_cohort(cfg);
    for (const auto& o : r.dataset.rows()) {
      if (o.measure != "reviews_given") continue;
      (o.condition == Condition::treatment ? treated : control) += o.value;
    }
  }
  CHECK(treated > control);
}
