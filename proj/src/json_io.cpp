#include "peerfb/json_io.hpp"

#include <fmt/format.h>

namespace peerfb {

using nlohmann::json;

json to_json(const Participant& p) {
  json j = {{"id", p.id.value}, {"role", to_string(p.role)}, {"display_alias", p.display_alias}};
  if (p.condition) j["condition"] = to_string(*p.condition);
  return j;
}

Participant participant_from_json(const json& j) {
  Participant p;
  p.id = ParticipantId(j.at("id").get<std::string>());
  if (p.id.empty()) throw Error(Errc::invalid_argument, "participant id must be non-empty");
  const std::string role = j.value("role", "student");
  if (role == "student") {
    p.role = Role::student;
  } else if (role == "instructor") {
    p.role = Role::instructor;
  } else {
    throw Error(Errc::invalid_argument, fmt::format("unknown role '{}'", role));
  }
  p.display_alias = j.value("display_alias", "");
  if (j.contains("condition") && !j["condition"].is_null()) {
    p.condition = parse_condition(j["condition"].get<std::string>());
  }
  return p;
}

json to_json(const Question& q) {
  json j = {{"id", q.id}, {"kind", to_string(q.kind)}, {"prompt", q.prompt}};
  if (!q.options.empty()) j["options"] = q.options;
  if (q.scale_points != 0) j["scale_points"] = q.scale_points;
  return j;
}

json to_json(const Questionnaire& q) {
  json qs = json::array();
  for (const auto& question : q.questions) qs.push_back(to_json(question));
  return {{"id", q.id.value}, {"title", q.title}, {"questions", qs}};
}

Questionnaire questionnaire_from_json(const json& j) {
  Questionnaire q;
  q.id = QuestionnaireId(j.value("id", ""));
  q.title = j.value("title", "");
  for (const auto& item : j.at("questions")) {
    Question question;
    question.id = item.at("id").get<std::string>();
    question.kind = parse_question_kind(item.at("kind").get<std::string>());
    question.prompt = item.value("prompt", "");
    question.options = item.value("options", std::vector<std::string>{});
    question.scale_points = item.value("scale_points", 0);
    q.questions.push_back(std::move(question));
  }
  return q;
}

json to_json(const Violations& v) {
  json out = json::array();
  for (const auto& x : v) out.push_back({{"subject", x.subject}, {"reason", x.reason}});
  return out;
}

json to_json(const ReviewAssignment& a) {
  json j = {{"id", a.id.value},
            {"deliverable", a.deliverable.value},
            {"obligation", to_string(a.obligation)},
            {"status", to_string(a.status)}};
  if (a.submitted_at) j["submitted_at"] = format_timestamp(*a.submitted_at);
  if (a.timeliness) j["timeliness"] = to_string(*a.timeliness);
  return j;
}

json to_json(const QualityScore& q) {
  return {{"clarity", q.clarity()},
          {"relevance", q.relevance()},
          {"specificity", q.specificity()},
          {"total", q.total()}};
}

json answers_to_json(const std::map<std::string, AnswerValue>& answers) {
  json j = json::object();
  for (const auto& [k, v] : answers) {
    if (const auto* s = std::get_if<std::string>(&v)) {
      j[k] = *s;
    } else {
      j[k] = std::get<int>(v);
    }
  }
  return j;
}

std::map<std::string, AnswerValue> answers_from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::invalid_argument, "answers must be an object");
  std::map<std::string, AnswerValue> out;
  for (const auto& [k, v] : j.items()) {
    if (v.is_string()) {
      out[k] = v.get<std::string>();
    } else if (v.is_number_integer()) {
      out[k] = v.get<int>();
    } else {
      throw Error(Errc::invalid_argument, fmt::format("answer '{}' must be text or an integer", k));
    }
  }
  return out;
}

json to_json(const Badge& b) {
  return {{"kind", to_string(b.kind)},
          {"name", display_name(b.kind)},
          {"tier", to_string(b.tier)},
          {"earned_at", format_timestamp(b.earned_at)}};
}

json to_json(const Spin& s) {
  json j = {{"id", s.id},
            {"prize_xp", s.prize_xp},
            {"rng_draw", s.rng_draw},
            {"spun_at", format_timestamp(s.spun_at)}};
  if (s.consumed_by) j["consumed_by"] = s.consumed_by->value;
  return j;
}

json to_json(const Purchase& p) {
  return {{"id", p.id}, {"reward_id", p.reward_id}, {"cost_xp", p.cost_xp},
          {"at", format_timestamp(p.at)}};
}

json to_json(const Reward& r) {
  json j = {{"id", r.id}, {"label", r.label}, {"cost_xp", r.cost_xp},
            {"per_student_limit", r.per_student_limit}};
  j["stock"] = r.stock ? json(*r.stock) : json(nullptr);
  return j;
}

}  // namespace peerfb
