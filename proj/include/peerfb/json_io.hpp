#pragma once

#include <nlohmann/json.hpp>

#include "peerfb/core.hpp"
#include "peerfb/gamification.hpp"

namespace peerfb {

nlohmann::json to_json(const Participant& p);
Participant participant_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Question& q);
nlohmann::json to_json(const Questionnaire& q);
Questionnaire questionnaire_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Violations& v);

nlohmann::json to_json(const ReviewAssignment& a);
nlohmann::json to_json(const QualityScore& q);

nlohmann::json answers_to_json(const std::map<std::string, AnswerValue>& answers);
std::map<std::string, AnswerValue> answers_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Badge& b);
nlohmann::json to_json(const Spin& s);
nlohmann::json to_json(const Purchase& p);
nlohmann::json to_json(const Reward& r);

}  // namespace peerfb
