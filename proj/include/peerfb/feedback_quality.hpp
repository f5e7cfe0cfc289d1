#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "peerfb/core.hpp"
#include "peerfb/gamification.hpp"

namespace peerfb {

struct Criterion {
  std::string key;          // label used in the score block, e.g. "clarity"
  std::string name;         // "Feedback Clarity Score"
  std::string description;  // what the criterion asks for
  // Descriptor per level, indexed by score 0..3.
  std::array<std::string, 4> levels;
};

std::string_view level_label(int score);  // 3 -> "Exemplary", ...

// Exactly three criteria, mapped in order onto clarity, relevance and
// specificity of QualityScore.
struct Rubric {
  std::vector<Criterion> criteria;

  static Rubric standard();
  void validate() const;
};

nlohmann::json to_json(const Rubric& r);
Rubric rubric_from_json(const nlohmann::json& j);

enum class ProviderMode { assist, score };

struct ProviderRequest {
  ProviderMode mode = ProviderMode::score;
  std::string system;
  std::string user;
};

struct ProviderResponse {
  std::map<std::string, int> per_criterion_scores;
  std::vector<std::string> strengths;
  std::vector<std::string> suggestions;
  std::string raw;
};

// Editable prompt text. Placeholders: {{rubric}}, {{draft}}, {{context}},
// {{criteria_count}}, {{score_block}}.
struct PromptTemplates {
  std::string system;
  std::string assist;
  std::string score;

  static PromptTemplates builtin();
  // Reads system.txt, assist.txt and score.txt from dir; missing files keep
  // the built-in text.
  static PromptTemplates load(const std::filesystem::path& dir);
};

struct AssistContext {
  DeliverableKind kind = DeliverableKind::presentation;
  std::string question_prompt;
};

// Aspects a reviewer should address for a deliverable kind.
std::string_view relevant_aspects(DeliverableKind kind);

ProviderRequest build_assist_prompt(const Rubric& rubric, std::string_view draft_text,
                                    const AssistContext& context,
                                    const PromptTemplates& templates = PromptTemplates::builtin());

ProviderRequest build_score_prompt(const Rubric& rubric, std::string_view feedback_text,
                                   const PromptTemplates& templates = PromptTemplates::builtin());

// The draft/feedback text embedded in a request, or nullopt.
std::optional<std::string> extract_feedback(const ProviderRequest& request);

// Reads the fenced ```scores block. Errors: "malformed provider output",
// "incomplete scoring", "rubric score out of range".
QualityScore parse_score_response(std::string_view raw, const Rubric& rubric);
ProviderResponse parse_assist_response(std::string_view raw);

class ProviderError : public Error {
 public:
  explicit ProviderError(const std::string& message) : Error(Errc::unavailable, message) {}
};

class Provider {
 public:
  virtual ~Provider() = default;
  // Blocking call; throws ProviderError on transport failure or timeout.
  virtual std::string complete(const ProviderRequest& request) = 0;
  virtual std::string name() const = 0;
};

// Deterministic offline scorer.
//
// The text is split into statements at . ! ? ; and newlines. A statement is
// *relevant* when it contains an evaluative word (good, unclear, could, ...)
// and an aspect of the work (slides, delivery, example, code, ...); it is
// *specific* when it is relevant and also carries a detail marker (a digit,
// quotation marks, "for example", "such as", "on slide", ...). Relevance and
// specificity band the number of distinct such statements as
// 0 -> 0, 1 -> 1, 2-3 -> 2, 4+ -> 3. Clarity starts at 3 and loses a point for
// an average statement longer than 25 words, another past 40, one per vague
// filler (stuff, things, kind of, ...) up to two, and one for shouting (!!!,
// ALL CAPS); it is capped at 2 for texts under five words and floored at 1
// whenever the text has any word at all.
QualityScore heuristic_mock_score(std::string_view feedback_text);

struct HeuristicAnalysis {
  std::vector<std::string> relevant_statements;
  std::vector<std::string> specific_statements;
  int words = 0;
  int vague_markers = 0;
  double mean_statement_words = 0.0;
};

HeuristicAnalysis analyze_feedback(std::string_view feedback_text);

// Provider double backed by heuristic_mock_score. Answers score requests with
// a well-formed block and assist requests with strengths and suggestions.
class MockProvider : public Provider {
 public:
  std::string complete(const ProviderRequest& request) override;
  std::string name() const override { return "mock"; }
};

struct RemoteProviderConfig {
  std::string endpoint = "https://api.openai.com";  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  std::string api_key_env = "PEERFB_PROVIDER_API_KEY";
  std::chrono::seconds timeout{30};
};

// OpenAI-style chat completion client.
class RemoteProvider : public Provider {
 public:
  explicit RemoteProvider(RemoteProviderConfig cfg);
  std::string complete(const ProviderRequest& request) override;
  std::string name() const override { return "remote:" + cfg_.model; }

 private:
  RemoteProviderConfig cfg_;
};

enum class Trigger { none, prompt_consult };

std::string_view to_string(Trigger t);

// Popup when the total falls below half the maximum: 0..4 of 9.
bool below_half(int total);

struct ScoringOutcome {
  std::optional<QualityScore> score;
  Trigger trigger = Trigger::none;
  bool flagged_for_instructor = false;
  int attempts = 0;
  std::vector<std::string> raw_outputs;
};

// Scores the review's open feedback with one retry on provider or parse
// failure. Empty feedback is not scored. Sets review.quality on success.
ScoringOutcome on_submit_evaluate(Provider& provider, const Rubric& rubric, Review& review,
                                  const PromptTemplates& templates = PromptTemplates::builtin());

struct AssistantExchange {
  std::string id;
  AssignmentId review;
  ProviderMode mode = ProviderMode::assist;
  std::string draft_text;
  ProviderResponse response;
  Timestamp occurred_at;
  bool counted_for_first_use_bonus = false;
  bool counted_for_low_score_bonus = false;
};

// Ledger causes for the two consult bonuses. The ledger's one-entry-per-cause
// rule is what limits each bonus to its scope.
std::string first_consult_cause(const ParticipantId& student, int session_index);
std::string low_score_consult_cause(const AssignmentId& review);

// The low-score bonus applies when the review's latest automatic total is
// below the schedule threshold; without a score it is not eligible.
bool low_score_bonus_eligible(const PointSchedule& schedule, std::optional<int> latest_total);

struct AnnotatedFeedback {
  std::string text;
  QualityComponents human;
  int line = 0;
};

// Delimited rows: feedback_text,clarity,relevance,specificity (header row
// required).
std::vector<AnnotatedFeedback> read_annotation_corpus(std::istream& in);

struct CriterionAgreement {
  std::string criterion;
  int n = 0;
  double exact = 0.0;     // share with identical scores
  double adjacent = 0.0;  // share within one point
  double mean_absolute_error = 0.0;
};

struct AnnotationReport {
  std::vector<CriterionAgreement> criteria;
  int unscored = 0;
};

AnnotationReport validate_against_annotations(Provider& provider, const Rubric& rubric,
                                              const std::vector<AnnotatedFeedback>& rows);

}  // namespace peerfb
