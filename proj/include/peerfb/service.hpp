#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "peerfb/allocation.hpp"
#include "peerfb/analytics.hpp"
#include "peerfb/core.hpp"
#include "peerfb/feedback_quality.hpp"
#include "peerfb/gamification.hpp"
#include "peerfb/rng.hpp"

namespace peerfb {

struct ConditionPolicy {
  bool gamification_visible = true;
  bool gamification_tracked = true;
  bool wheel_enabled = true;
  bool store_enabled = true;
  bool leaderboard_visible = true;
  bool assistant_enabled = true;

  static ConditionPolicy for_condition(Condition c);
};

// JSON keys that carry gamification state. A control student's responses
// never contain any of them.
const std::vector<std::string>& gamification_keys();

// Filters a student-facing document for the viewer. Control students lose
// every gamification key at any depth; treatment students and instructors
// get the document unchanged.
nlohmann::json apply_condition_view(const Participant& viewer, nlohmann::json doc);

struct ProviderSettings {
  std::string backend = "mock";  // "mock" or "remote"
  RemoteProviderConfig remote;
  std::optional<std::filesystem::path> prompts_dir;
};

struct PlatformConfig {
  Rulebook rules;
  AllocationConfig allocation;
  std::chrono::seconds poke_cooldown{std::chrono::hours{24}};
  std::uint64_t wheel_seed = 0;
  ProviderSettings provider;
};

nlohmann::json to_json(const PlatformConfig& c);
// Missing keys keep their defaults. Validates the rulebook.
PlatformConfig platform_config_from_json(const nlohmann::json& j);

std::unique_ptr<Provider> make_provider(const ProviderSettings& s);

// One state change, attributed to the participant who caused it.
struct EventRecord {
  std::uint64_t seq = 0;
  Timestamp at;
  std::string actor;
  std::string type;
  nlohmann::json data;
};

nlohmann::json to_json(const EventRecord& e);
EventRecord event_from_json(const nlohmann::json& j);

class EventStore {
 public:
  virtual ~EventStore() = default;
  virtual void append(const EventRecord& e) = 0;
  virtual std::vector<EventRecord> load() const = 0;
};

class MemoryEventStore : public EventStore {
 public:
  void append(const EventRecord& e) override;
  std::vector<EventRecord> load() const override;

 private:
  mutable std::mutex mu_;
  std::vector<EventRecord> events_;
};

// Line-delimited JSON file, flushed after every record.
class FileEventStore : public EventStore {
 public:
  explicit FileEventStore(std::filesystem::path path);
  void append(const EventRecord& e) override;
  std::vector<EventRecord> load() const override;

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::ofstream out_;
};

std::string serialize_events(const std::vector<EventRecord>& events);

struct Poke {
  std::string id;
  ParticipantId from;
  ParticipantId target;
  AssignmentId assignment;
  Timestamp sent_at;
};

enum class ThreadRole { reviewer, reviewee };
std::string_view to_string(ThreadRole r);

struct ClarificationMessage {
  ThreadRole author;
  std::string text;
  Timestamp at;
};

struct ClarificationThread {
  std::string id;
  AssignmentId review;
  std::vector<ClarificationMessage> messages;
};

struct Notification {
  ParticipantId to;
  std::string kind;  // poke, clarification, badge
  std::string text;
  Timestamp at;
};

struct SubmitResult {
  ReviewAssignment assignment;
  Review review;
  ScoringOutcome scoring;
  GamificationEngine::Award award;
  std::vector<Badge> new_badges;
};

struct AssistResult {
  AssistantExchange exchange;
  std::vector<LedgerEntry> bonuses;
};

struct SessionInfo {
  std::string id;
  CourseId course;
  EvaluationSession session;
  QuestionnaireId questionnaire;
};

// In-process platform: every service operation, with role checks, anonymity
// and condition gating, recorded to an event store. The HTTP layer and the
// simulator both drive it through this interface.
class Platform {
 public:
  // Built-in instructor that bootstraps courses.
  static inline const ParticipantId kAdmin{"admin"};

  // Events already in the store are replayed before the platform accepts
  // new requests. A null provider means one built from cfg.provider.
  explicit Platform(PlatformConfig cfg, std::shared_ptr<EventStore> store = nullptr,
                    std::unique_ptr<Provider> provider = nullptr);
  ~Platform();

  const PlatformConfig& config() const noexcept { return cfg_; }
  const GamificationEngine& engine() const noexcept { return engine_; }
  const Ledger& ledger() const noexcept { return engine_.ledger(); }
  std::vector<EventRecord> events() const;

  // Instructor operations.
  CourseId create_course(const ParticipantId& actor, const std::string& name, Timestamp now);
  void add_participant(const ParticipantId& actor, const CourseId& course, Participant p,
                       Timestamp now);
  std::map<ParticipantId, Condition> randomize_conditions(const ParticipantId& actor,
                                                          const CourseId& course,
                                                          std::uint64_t seed, Timestamp now);
  QuestionnaireId create_questionnaire(const ParticipantId& actor, Questionnaire q, Timestamp now);
  std::string create_session(const ParticipantId& actor, const CourseId& course, int index,
                             Date day_d, const QuestionnaireId& questionnaire, Timestamp now);
  DeliverableId add_deliverable(const ParticipantId& actor, const std::string& session,
                                const ParticipantId& owner, const std::string& artifact_uri,
                                DeliverableKind kind, Timestamp now);
  AllocationPlan allocate(const ParticipantId& actor, const std::string& session, Timestamp now);
  ExperimentDataset export_observations(const ParticipantId& actor, const CourseId& course) const;

  // Student operations.
  std::vector<ReviewAssignment> my_assignments(const ParticipantId& student) const;
  std::optional<ReviewAssignment> request_optional(const ParticipantId& student,
                                                   const std::string& session, Timestamp now);
  SubmitResult submit_review(const ParticipantId& student, const AssignmentId& assignment,
                             std::map<std::string, AnswerValue> answers, Timestamp now);
  AssistResult assist(const ParticipantId& student, const AssignmentId& assignment,
                      const std::string& draft, Timestamp now);
  Spin spin_wheel(const ParticipantId& student, Timestamp now);
  Purchase redeem(const ParticipantId& student, const std::string& reward_id, Timestamp now);
  // Pokes the reviewer of a pending assignment on one of from's deliverables.
  Poke poke(const ParticipantId& from, const AssignmentId& assignment, Timestamp now);
  Poke poke_participant(const ParticipantId& from, const ParticipantId& target, Timestamp now);
  ClarificationThread post_clarification(const ParticipantId& author,
                                         const AssignmentId& review, const std::string& text,
                                         Timestamp now);

  // Views. Student-facing documents pass through apply_condition_view.
  nlohmann::json assignments_view(const ParticipantId& student) const;
  nlohmann::json gamification_view(const ParticipantId& viewer,
                                   const ParticipantId& student) const;
  nlohmann::json leaderboard_view(const ParticipantId& viewer) const;
  nlohmann::json received_feedback_view(const ParticipantId& student, Timestamp now) const;
  nlohmann::json clarifications_view(const ParticipantId& participant,
                                     const AssignmentId& review) const;
  nlohmann::json notifications_view(const ParticipantId& participant) const;
  nlohmann::json submit_view(const ParticipantId& student, const SubmitResult& r) const;
  nlohmann::json assist_view(const ParticipantId& student, const AssistResult& r) const;
  nlohmann::json rulebook_view(const ParticipantId& viewer) const;

  const Participant& participant(const ParticipantId& id) const;
  std::optional<SessionInfo> session_info(const std::string& session) const;
  std::vector<std::string> sessions_of(const CourseId& course) const;
  std::optional<Review> review(const AssignmentId& assignment) const;
  std::vector<Participant> students(const CourseId& course) const;
  const Questionnaire& questionnaire(const QuestionnaireId& id) const;

  // Re-executes a recorded event, feeding recorded provider output back in.
  // Throws when the outcome differs from the recording.
  void apply(const EventRecord& e);

 private:
  struct Impl;
  PlatformConfig cfg_;
  GamificationEngine engine_;
  std::unique_ptr<Impl> impl_;
};

// Rebuilds a platform from a recorded event log and checks that every
// operation reproduces its recorded outcome.
std::unique_ptr<Platform> replay_platform(const PlatformConfig& cfg,
                                          const std::vector<EventRecord>& events);

}  // namespace peerfb
