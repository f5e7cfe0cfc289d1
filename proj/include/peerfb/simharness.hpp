#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "peerfb/analytics.hpp"
#include "peerfb/rng.hpp"
#include "peerfb/service.hpp"

namespace peerfb::sim {

struct QualityMeans {
  double clarity = 2.3;
  double relevance = 1.4;
  double specificity = 0.9;
};

// Behaviour of one synthetic student. The numbers are made up; they exist to
// exercise the platform and the statistics, not to model real students.
struct AgentProfile {
  double base_optional_propensity = 0.35;  // chance of taking each optional slot
  double incentive_sensitivity = 0.25;     // added when gamification is visible
  double consult_propensity = 0.3;
  QualityMeans quality_base;
  double quality_sd = 0.8;
  double consult_quality_uplift = 0.7;  // added to relevance and specificity means
  double session2_fatigue = 0.8;        // multiplies the optional propensity in session 2
  double on_time_rate = 0.9;

  void validate() const;
};

// Per-agent profiles are drawn around `mean`: probabilities get normal
// jitter with sd `spread`, quality means get sd `quality_spread`.
struct ProfileDistribution {
  AgentProfile mean;
  double spread = 0.1;
  double quality_spread = 0.4;

  AgentProfile draw(Rng& rng) const;
};

struct SimConfig {
  int n_students = 34;
  int presenters_per_session = 17;
  int sessions = 2;
  double treatment_share = 0.5;
  std::string first_day_d = "2024-03-04";
  int days_between_sessions = 14;
  ProfileDistribution profiles;
  PlatformConfig platform;  // allocation, rulebook, provider
  std::uint64_t rng_seed = 1;

  void validate() const;
};

nlohmann::json to_json(const AgentProfile& p);
AgentProfile agent_profile_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SimConfig& c);
SimConfig sim_config_from_json(const nlohmann::json& j);
SimConfig load_sim_config(const std::filesystem::path& file);

// Builds feedback text that the offline scorer rates exactly at `target`.
// Requires clarity 1..3, relevance and specificity 0..3, specificity <=
// relevance.
std::string generate_feedback(QualityComponents target, Rng& rng);

struct SimResult {
  ExperimentDataset dataset;
  std::vector<EventRecord> events;
  std::string ledger;  // canonical ledger serialization
  std::map<std::string, AgentProfile> agents;
  CourseId course;
};

// Runs the cohort through the real Platform with day ticks.
SimResult simulate_cohort(const SimConfig& cfg);
// The platform config a simulation actually runs with (seeds derived from rng_seed).
PlatformConfig effective_platform_config(const SimConfig& cfg);

struct ExperimentFiles {
  std::filesystem::path observations;
  std::filesystem::path report_text;
  std::filesystem::path report_csv;
  std::filesystem::path rulebook;
  std::filesystem::path events;
  std::filesystem::path config;
  // Platform config with the derived seeds; replays events.jsonl.
  std::filesystem::path platform;
};

struct ExperimentResult {
  SimResult sim;
  Report report;
  ExperimentFiles files;
};

// simulate_cohort, then export, re-ingest from disk and report.
ExperimentResult run_experiment(const SimConfig& cfg, const std::filesystem::path& out_dir);

// Sets incentive_sensitivity to zero.
SimConfig null_model(SimConfig cfg);

}  // namespace peerfb::sim
