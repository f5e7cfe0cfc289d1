#include "peerfb/core.hpp"

#include <charconv>
#include <set>

#include <fmt/format.h>

namespace peerfb {

namespace {

int parse_int_field(std::string_view s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error(Errc::invalid_argument, fmt::format("bad date field '{}'", s));
  }
  return v;
}

}  // namespace

Date parse_date(std::string_view iso) {
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') {
    throw Error(Errc::invalid_argument, fmt::format("bad date '{}'", iso));
  }
  std::chrono::year_month_day ymd{
      std::chrono::year{parse_int_field(iso.substr(0, 4))},
      std::chrono::month{static_cast<unsigned>(parse_int_field(iso.substr(5, 2)))},
      std::chrono::day{static_cast<unsigned>(parse_int_field(iso.substr(8, 2)))}};
  if (!ymd.ok()) {
    throw Error(Errc::invalid_argument, fmt::format("bad date '{}'", iso));
  }
  return Date{ymd};
}

std::string format_date(Date d) {
  std::chrono::year_month_day ymd{d};
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()),
                     static_cast<unsigned>(ymd.day()));
}

Timestamp start_of_day(Date d) { return Timestamp{d}; }

Timestamp end_of_day(Date d) {
  return Timestamp{d} + std::chrono::hours{23} + std::chrono::minutes{59} +
         std::chrono::seconds{59};
}

Date day_of(Timestamp t) { return std::chrono::floor<std::chrono::days>(t); }

std::string format_timestamp(Timestamp t) {
  const Date d = day_of(t);
  const std::chrono::hh_mm_ss hms{t - Timestamp{d}};
  return fmt::format("{}T{:02d}:{:02d}:{:02d}", format_date(d), hms.hours().count(),
                     hms.minutes().count(), hms.seconds().count());
}

Timestamp parse_timestamp(std::string_view iso) {
  if (iso.size() == 10) return start_of_day(parse_date(iso));
  if (iso.size() != 19 || iso[10] != 'T' || iso[13] != ':' || iso[16] != ':') {
    throw Error(Errc::invalid_argument, fmt::format("bad timestamp '{}'", iso));
  }
  const int h = parse_int_field(iso.substr(11, 2));
  const int m = parse_int_field(iso.substr(14, 2));
  const int sec = parse_int_field(iso.substr(17, 2));
  if (h > 23 || m > 59 || sec > 59 || h < 0 || m < 0 || sec < 0) {
    throw Error(Errc::invalid_argument, fmt::format("bad timestamp '{}'", iso));
  }
  return start_of_day(parse_date(iso.substr(0, 10))) + std::chrono::hours{h} +
         std::chrono::minutes{m} + std::chrono::seconds{sec};
}

std::string_view to_string(Role r) {
  return r == Role::student ? "student" : "instructor";
}

std::string_view to_string(Condition c) {
  return c == Condition::treatment ? "treatment" : "control";
}

Condition parse_condition(std::string_view s) {
  if (s == "treatment") return Condition::treatment;
  if (s == "control") return Condition::control;
  throw Error(Errc::invalid_argument, fmt::format("unknown condition '{}'", s));
}

EvaluationSession::EvaluationSession(int index, Date day_d)
    : index_(index), day_d_(day_d) {
  if (index < 1) {
    throw Error(Errc::invalid_argument, "session index must be >= 1");
  }
}

std::string_view to_string(DeliverableKind k) {
  switch (k) {
    case DeliverableKind::presentation: return "presentation";
    case DeliverableKind::document: return "document";
    case DeliverableKind::source_code: return "source_code";
  }
  return "";
}

DeliverableKind parse_deliverable_kind(std::string_view s) {
  if (s == "presentation") return DeliverableKind::presentation;
  if (s == "document") return DeliverableKind::document;
  if (s == "source_code") return DeliverableKind::source_code;
  throw Error(Errc::invalid_argument, fmt::format("unknown deliverable kind '{}'", s));
}

std::string_view to_string(QuestionKind k) {
  switch (k) {
    case QuestionKind::open_ended: return "open_ended";
    case QuestionKind::multiple_choice: return "multiple_choice";
    case QuestionKind::likert: return "likert";
    case QuestionKind::rating: return "rating";
  }
  return "";
}

QuestionKind parse_question_kind(std::string_view s) {
  if (s == "open_ended") return QuestionKind::open_ended;
  if (s == "multiple_choice") return QuestionKind::multiple_choice;
  if (s == "likert") return QuestionKind::likert;
  if (s == "rating") return QuestionKind::rating;
  throw Error(Errc::invalid_argument, fmt::format("unknown question kind '{}'", s));
}

Violations validate_questionnaire(const Questionnaire& q) {
  Violations out;
  if (q.questions.empty()) {
    out.push_back({q.id.value, "at least one question required"});
  }
  std::set<std::string> seen;
  for (const auto& question : q.questions) {
    if (question.id.empty()) {
      out.push_back({question.id, "question id required"});
    } else if (!seen.insert(question.id).second) {
      out.push_back({question.id, "duplicate question id"});
    }
    const bool is_choice = question.kind == QuestionKind::multiple_choice;
    const bool is_scale = question.kind == QuestionKind::likert ||
                          question.kind == QuestionKind::rating;
    if (is_choice && question.options.empty()) {
      out.push_back({question.id, "options required"});
    }
    if (!is_choice && !question.options.empty()) {
      out.push_back({question.id, "options only allowed on multiple_choice"});
    }
    if (is_scale && question.scale_points < 2) {
      out.push_back({question.id, "scale_points ≥ 2"});
    }
    if (!is_scale && question.scale_points != 0) {
      out.push_back({question.id, "scale_points only allowed on likert/rating"});
    }
  }
  return out;
}

std::string_view to_string(Obligation o) {
  return o == Obligation::mandatory ? "mandatory" : "optional";
}

std::string_view to_string(ReviewStatus s) {
  return s == ReviewStatus::pending ? "pending" : "submitted";
}

std::string_view to_string(Timeliness t) {
  return t == Timeliness::on_time ? "on_time" : "late";
}

ReviewAssignment make_assignment(AssignmentId id, const ParticipantId& reviewer,
                                 const Deliverable& deliverable,
                                 Obligation obligation) {
  if (reviewer == deliverable.owner) {
    throw Error(Errc::invalid_argument, "self-review");
  }
  ReviewAssignment a;
  a.id = std::move(id);
  a.reviewer = reviewer;
  a.deliverable = deliverable.id;
  a.obligation = obligation;
  return a;
}

Timeliness classify_timeliness(const EvaluationSession& session,
                               Timestamp submitted_at) {
  if (submitted_at < start_of_day(session.review_open())) {
    throw Error(Errc::precondition_failed, "review window not open");
  }
  return submitted_at <= end_of_day(session.review_close()) ? Timeliness::on_time
                                                             : Timeliness::late;
}

QualityScore total_quality(QualityComponents c) {
  auto in_range = [](int v) { return v >= 0 && v <= QualityScore::kMaxComponent; };
  if (!in_range(c.clarity) || !in_range(c.relevance) || !in_range(c.specificity)) {
    throw Error(Errc::invalid_argument, "rubric score out of range");
  }
  return QualityScore(c.clarity, c.relevance, c.specificity);
}

Review make_review(const AssignmentId& assignment, const Questionnaire& q,
                   std::map<std::string, AnswerValue> answers) {
  Review review;
  review.assignment = assignment;
  std::string feedback;
  for (const auto& question : q.questions) {
    auto it = answers.find(question.id);
    if (it == answers.end()) {
      throw Error(Errc::invalid_argument,
                  fmt::format("question '{}' not answered", question.id));
    }
    const AnswerValue& value = it->second;
    if (question.kind == QuestionKind::open_ended) {
      const auto* text = std::get_if<std::string>(&value);
      if (text == nullptr) {
        throw Error(Errc::invalid_argument,
                    fmt::format("question '{}' expects text", question.id));
      }
      if (!text->empty()) {
        if (!feedback.empty()) feedback += '\n';
        feedback += *text;
      }
      continue;
    }
    const auto* choice = std::get_if<int>(&value);
    if (choice == nullptr) {
      throw Error(Errc::invalid_argument,
                  fmt::format("question '{}' expects a number", question.id));
    }
    const bool ok = question.kind == QuestionKind::multiple_choice
                        ? *choice >= 0 && *choice < static_cast<int>(question.options.size())
                        : *choice >= 1 && *choice <= question.scale_points;
    if (!ok) {
      throw Error(Errc::invalid_argument,
                  fmt::format("answer to '{}' out of range", question.id));
    }
  }
  for (const auto& [qid, _] : answers) {
    bool known = false;
    for (const auto& question : q.questions) known = known || question.id == qid;
    if (!known) {
      throw Error(Errc::invalid_argument, fmt::format("unknown question '{}'", qid));
    }
  }
  review.answers = std::move(answers);
  review.open_feedback = std::move(feedback);
  return review;
}

}  // namespace peerfb
