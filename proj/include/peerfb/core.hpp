#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace peerfb {

// Error categories map onto HTTP status codes in the service layer.
enum class Errc {
  invalid_argument,
  not_found,
  conflict,
  forbidden,
  precondition_failed,
  unavailable,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

template <class Tag>
struct Id {
  std::string value;

  Id() = default;
  explicit Id(std::string v) : value(std::move(v)) {}

  bool empty() const noexcept { return value.empty(); }
  auto operator<=>(const Id&) const = default;
};

struct ParticipantTag {};
struct CourseTag {};
struct DeliverableTag {};
struct AssignmentTag {};
struct QuestionnaireTag {};

using ParticipantId = Id<ParticipantTag>;
using CourseId = Id<CourseTag>;
using DeliverableId = Id<DeliverableTag>;
using AssignmentId = Id<AssignmentTag>;
using QuestionnaireId = Id<QuestionnaireTag>;

// All times are course-local wall time. A Date is a calendar day, a Timestamp
// a second within it.
using Date = std::chrono::sys_days;
using Timestamp = std::chrono::sys_seconds;

Date parse_date(std::string_view iso);  // "YYYY-MM-DD"
std::string format_date(Date d);
Timestamp start_of_day(Date d);
Timestamp end_of_day(Date d);  // 23:59:59
Date day_of(Timestamp t);
std::string format_timestamp(Timestamp t);     // "YYYY-MM-DDTHH:MM:SS"
Timestamp parse_timestamp(std::string_view iso);  // also accepts a bare date

enum class Role { student, instructor };
enum class Condition { treatment, control };

std::string_view to_string(Role r);
std::string_view to_string(Condition c);
Condition parse_condition(std::string_view s);

struct Participant {
  ParticipantId id;
  Role role = Role::student;
  std::string display_alias;
  std::optional<Condition> condition;  // students only
};

class EvaluationSession {
 public:
  EvaluationSession(int index, Date day_d);

  int index() const noexcept { return index_; }
  Date day_d() const noexcept { return day_d_; }
  Date review_open() const noexcept { return day_d_ + std::chrono::days{1}; }
  Date review_close() const noexcept { return day_d_ + std::chrono::days{4}; }
  Date results_visible_from() const noexcept { return day_d_ + std::chrono::days{5}; }

 private:
  int index_;
  Date day_d_;
};

enum class DeliverableKind { presentation, document, source_code };

std::string_view to_string(DeliverableKind k);
DeliverableKind parse_deliverable_kind(std::string_view s);

struct Deliverable {
  DeliverableId id;
  ParticipantId owner;
  int session = 1;
  std::string artifact_uri;
  DeliverableKind kind = DeliverableKind::presentation;
};

enum class QuestionKind { open_ended, multiple_choice, likert, rating };

std::string_view to_string(QuestionKind k);
QuestionKind parse_question_kind(std::string_view s);

struct Question {
  std::string id;
  QuestionKind kind = QuestionKind::open_ended;
  std::string prompt;
  std::vector<std::string> options;
  int scale_points = 0;
};

struct Questionnaire {
  QuestionnaireId id;
  std::string title;
  std::vector<Question> questions;
};

struct Violation {
  std::string subject;  // question id, assignment id, ...
  std::string reason;

  bool operator==(const Violation&) const = default;
};

using Violations = std::vector<Violation>;

// Empty result means the questionnaire is valid.
Violations validate_questionnaire(const Questionnaire& q);

enum class Obligation { mandatory, optional };
enum class ReviewStatus { pending, submitted };
enum class Timeliness { on_time, late };

std::string_view to_string(Obligation o);
std::string_view to_string(ReviewStatus s);
std::string_view to_string(Timeliness t);

struct ReviewAssignment {
  AssignmentId id;
  ParticipantId reviewer;
  DeliverableId deliverable;
  Obligation obligation = Obligation::mandatory;
  ReviewStatus status = ReviewStatus::pending;
  std::optional<Timestamp> submitted_at;
  std::optional<Timeliness> timeliness;
};

// Throws Errc::invalid_argument when the reviewer owns the deliverable.
ReviewAssignment make_assignment(AssignmentId id, const ParticipantId& reviewer,
                                 const Deliverable& deliverable,
                                 Obligation obligation);

// Submission on or before 23:59:59 of D+4 is on time; earlier than the start
// of D+1 is rejected.
Timeliness classify_timeliness(const EvaluationSession& session,
                               Timestamp submitted_at);

struct QualityComponents {
  int clarity = 0;
  int relevance = 0;
  int specificity = 0;
};

class QualityScore {
 public:
  static constexpr int kMaxComponent = 3;
  static constexpr int kMaxTotal = 9;

  int clarity() const noexcept { return clarity_; }
  int relevance() const noexcept { return relevance_; }
  int specificity() const noexcept { return specificity_; }
  int total() const noexcept { return clarity_ + relevance_ + specificity_; }

  bool operator==(const QualityScore&) const = default;

 private:
  friend QualityScore total_quality(QualityComponents c);
  QualityScore(int c, int r, int s) : clarity_(c), relevance_(r), specificity_(s) {}

  int clarity_;
  int relevance_;
  int specificity_;
};

QualityScore total_quality(QualityComponents c);

using AnswerValue = std::variant<std::string, int>;  // text or option/scale index

struct Review {
  AssignmentId assignment;
  std::map<std::string, AnswerValue> answers;
  std::string open_feedback;
  std::optional<QualityScore> quality;
};

// Checks answers against the questionnaire and builds open_feedback from the
// open-ended answers in question order, joined by newlines.
Review make_review(const AssignmentId& assignment, const Questionnaire& q,
                   std::map<std::string, AnswerValue> answers);

}  // namespace peerfb
