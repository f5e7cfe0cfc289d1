#include "peerfb/feedback_quality.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "peerfb/csv.hpp"

namespace peerfb {

namespace detail {
extern const std::string_view kSystemPrompt;
extern const std::string_view kAssistPrompt;
extern const std::string_view kScorePrompt;
}  // namespace detail

namespace {

constexpr std::string_view kFeedbackOpen = "<<<FEEDBACK\n";
constexpr std::string_view kFeedbackClose = "\nFEEDBACK>>>";
constexpr std::string_view kScoreFence = "```scores";

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Single pass so that substituted text is never re-scanned for placeholders.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    const auto open = tmpl.find("{{", i);
    if (open == std::string_view::npos) break;
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) break;
    out.append(tmpl.substr(i, open - i));
    const std::string key(tmpl.substr(open + 2, close - open - 2));
    if (auto it = vars.find(key); it != vars.end()) {
      out += it->second;
    } else {
      out.append(tmpl.substr(open, close + 2 - open));
    }
    i = close + 2;
  }
  out.append(tmpl.substr(i));
  return out;
}

std::string render_rubric(const Rubric& rubric) {
  std::string out;
  for (const auto& c : rubric.criteria) {
    out += fmt::format("{} ({}): {}\n", c.name, c.key, c.description);
    for (int level = 3; level >= 0; --level) {
      out += fmt::format("  {} - {}: {}\n", level, level_label(level),
                         c.levels[static_cast<std::size_t>(level)]);
    }
  }
  if (!out.empty()) out.pop_back();
  return out;
}

std::string score_block(const Rubric& rubric) {
  std::string out(kScoreFence);
  out += '\n';
  for (const auto& c : rubric.criteria) out += fmt::format("{}: <0-3>\n", c.key);
  out += "```";
  return out;
}

[[noreturn]] void malformed() { throw Error(Errc::invalid_argument, "malformed provider output"); }

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Word lists for the heuristic scorer.
const std::set<std::string, std::less<>> kEvaluative = {
    "good", "great", "nice", "excellent", "clear", "clearly", "well", "strong", "liked",
    "like", "effective", "engaging", "helpful", "interesting", "solid", "impressive", "enjoyed",
    "weak", "unclear", "confusing", "missing", "lacked", "lacks", "lacking", "improve",
    "improved", "could", "should", "better", "too", "hard", "difficult", "poor", "rushed",
    "slow", "fast", "loud", "quiet", "needed", "needs", "appreciated", "struggled",
    "concise", "precise", "detailed", "vague", "messy", "organized", "structured"};

const std::set<std::string, std::less<>> kAspects = {
    "slide", "slides", "example", "examples", "explanation", "explanations", "explained",
    "delivery", "audience", "content", "structure", "pace", "pacing", "timing", "code",
    "demo", "demonstration", "voice", "diagram", "diagrams", "introduction", "intro",
    "conclusion", "topic", "presentation", "engagement", "visuals", "font", "questions",
    "summary", "overview", "definition", "definitions", "section", "transitions", "speaking",
    "design", "tests", "testing", "documentation", "readability", "naming", "architecture",
    "motivation", "outline", "terminology", "illustration", "comparison", "recap", "answers"};

const std::vector<std::string_view> kDetailPhrases = {
    "for example", "for instance", "e.g", "such as", "specifically", "in particular",
    "on slide", "when you", "where you", "the part about", "\""};

const std::vector<std::string_view> kVaguePhrases = {
    "stuff", "things", "thing", "somehow", "kinda", "kind of", "sort of", "whatever",
    "etc", "idk", "maybe", "??"};

std::vector<std::string> words_of(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalpha(c) || ch == '\'') {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

int count_phrase(const std::string& haystack_lower, std::string_view phrase) {
  // Alphabetic phrases must sit on word boundaries.
  const bool alpha = std::isalpha(static_cast<unsigned char>(phrase.front())) != 0;
  int n = 0;
  std::size_t pos = 0;
  while ((pos = haystack_lower.find(phrase, pos)) != std::string::npos) {
    const std::size_t end = pos + phrase.size();
    const bool left_ok = !alpha || pos == 0 ||
                         !std::isalpha(static_cast<unsigned char>(haystack_lower[pos - 1]));
    const bool right_ok = !alpha || end >= haystack_lower.size() ||
                          !std::isalpha(static_cast<unsigned char>(haystack_lower[end])) ||
                          phrase == "e.g";
    if (left_ok && right_ok) ++n;
    pos = end;
  }
  return n;
}

bool has_detail(const std::string& statement) {
  const std::string l = lower(statement);
  if (std::any_of(l.begin(), l.end(), [](unsigned char c) { return std::isdigit(c); })) return true;
  return std::any_of(kDetailPhrases.begin(), kDetailPhrases.end(),
                     [&](std::string_view p) { return count_phrase(l, p) > 0; });
}

int band(std::size_t n) {
  if (n == 0) return 0;
  if (n == 1) return 1;
  if (n <= 3) return 2;
  return 3;
}

}  // namespace

std::string_view level_label(int score) {
  switch (score) {
    case 3: return "Exemplary";
    case 2: return "Proficient";
    case 1: return "Developing";
    case 0: return "Unsatisfactory";
  }
  throw Error(Errc::invalid_argument, "rubric score out of range");
}

Rubric Rubric::standard() {
  return Rubric{{
      {"clarity",
       "Feedback Clarity Score",
       "The feedback should be easy to understand, express ideas clearly, and avoid ambiguity or verbosity.",
       {"The feedback lacks clarity, containing significant ambiguity or confusion that hinders understanding.",
        "The feedback communicates its points but could benefit from additional simplification or organization to enhance clarity.",
        "The feedback is clear overall, but may contain minor ambiguities or could be slightly more concise.",
        "The feedback is exceptionally clear, with precise language and well-structured ideas that are easy to understand."}},
      {"relevance",
       "Feedback Relevance Score",
       "The feedback should bear significance to the context (e.g., individual presentation, content knowledge, audience engagement, delivery, clarity).",
       {"No relevant strengths or weaknesses were identified.",
        "1 relevant strength or weakness was identified.",
        "2-3 relevant strengths and/or weaknesses were identified.",
        "4-5 relevant strengths and/or weaknesses were identified."}},
      {"specificity",
       "Feedback Specificity Score",
       "The feedback should help the recipient understand exactly what aspects of their work are being addressed.",
       {"No specific example or detail was provided for strengths or weaknesses.",
        "At least 1 strength or weakness had specific details or examples.",
        "At least 2 strengths and/or weaknesses had specific details or examples.",
        "Specific examples or details were given for 3-5 strengths and/or weaknesses identified."}},
  }};
}

void Rubric::validate() const {
  if (criteria.size() != 3) {
    throw Error(Errc::invalid_argument, "rubric needs exactly three criteria");
  }
  std::set<std::string> keys;
  for (const auto& c : criteria) {
    if (c.key.empty() || !keys.insert(lower(c.key)).second) {
      throw Error(Errc::invalid_argument, "rubric criterion keys must be unique and non-empty");
    }
    for (const auto& d : c.levels) {
      if (d.empty()) throw Error(Errc::invalid_argument, "rubric descriptor text must be non-empty");
    }
  }
}

nlohmann::json to_json(const Rubric& r) {
  nlohmann::json criteria = nlohmann::json::array();
  for (const auto& c : r.criteria) {
    nlohmann::json levels;
    for (int l = 0; l <= 3; ++l) levels[std::to_string(l)] = c.levels[static_cast<std::size_t>(l)];
    criteria.push_back({{"key", c.key}, {"name", c.name}, {"description", c.description}, {"levels", levels}});
  }
  return {{"criteria", criteria}};
}

Rubric rubric_from_json(const nlohmann::json& j) {
  Rubric r;
  for (const auto& c : j.at("criteria")) {
    Criterion crit;
    crit.key = c.at("key").get<std::string>();
    crit.name = c.value("name", crit.key);
    crit.description = c.value("description", "");
    for (int l = 0; l <= 3; ++l) {
      crit.levels[static_cast<std::size_t>(l)] = c.at("levels").at(std::to_string(l)).get<std::string>();
    }
    r.criteria.push_back(std::move(crit));
  }
  r.validate();
  return r;
}

PromptTemplates PromptTemplates::builtin() {
  return {std::string(detail::kSystemPrompt), std::string(detail::kAssistPrompt),
          std::string(detail::kScorePrompt)};
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
  PromptTemplates t = builtin();
  if (std::filesystem::exists(dir / "system.txt")) t.system = read_file(dir / "system.txt");
  if (std::filesystem::exists(dir / "assist.txt")) t.assist = read_file(dir / "assist.txt");
  if (std::filesystem::exists(dir / "score.txt")) t.score = read_file(dir / "score.txt");
  return t;
}

std::string_view relevant_aspects(DeliverableKind kind) {
  switch (kind) {
    case DeliverableKind::presentation:
      return "individual presentation, content knowledge, audience engagement, delivery, clarity";
    case DeliverableKind::document:
      return "structure, completeness, accuracy of content, readability, use of examples";
    case DeliverableKind::source_code:
      return "correctness, readability, naming, design and architecture, testing";
  }
  return "";
}

ProviderRequest build_assist_prompt(const Rubric& rubric, std::string_view draft_text,
                                    const AssistContext& context,
                                    const PromptTemplates& templates) {
  if (trim(draft_text).empty()) throw Error(Errc::invalid_argument, "nothing to assist");
  rubric.validate();
  std::string kind(to_string(context.kind));
  std::replace(kind.begin(), kind.end(), '_', ' ');
  std::string ctx = fmt::format("Deliverable under review: {}. Relevant aspects: {}.", kind,
                                relevant_aspects(context.kind));
  if (!context.question_prompt.empty()) {
    ctx += fmt::format("\nQuestion being answered: {}", context.question_prompt);
  }
  return {ProviderMode::assist, templates.system,
          render(templates.assist, {{"rubric", render_rubric(rubric)},
                                    {"context", ctx},
                                    {"draft", std::string(draft_text)},
                                    {"criteria_count", std::to_string(rubric.criteria.size())},
                                    {"score_block", score_block(rubric)}})};
}

ProviderRequest build_score_prompt(const Rubric& rubric, std::string_view feedback_text,
                                   const PromptTemplates& templates) {
  if (trim(feedback_text).empty()) throw Error(Errc::invalid_argument, "nothing to score");
  rubric.validate();
  return {ProviderMode::score, templates.system,
          render(templates.score, {{"rubric", render_rubric(rubric)},
                                   {"context", ""},
                                   {"draft", std::string(feedback_text)},
                                   {"criteria_count", std::to_string(rubric.criteria.size())},
                                   {"score_block", score_block(rubric)}})};
}

std::optional<std::string> extract_feedback(const ProviderRequest& request) {
  const auto open = request.user.find(kFeedbackOpen);
  const auto close = request.user.rfind(kFeedbackClose);
  if (open == std::string::npos || close == std::string::npos || close < open + kFeedbackOpen.size()) {
    return std::nullopt;
  }
  const auto begin = open + kFeedbackOpen.size();
  return request.user.substr(begin, close - begin);
}

QualityScore parse_score_response(std::string_view raw, const Rubric& rubric) {
  const auto fence = raw.find(kScoreFence);
  if (fence == std::string_view::npos) malformed();
  const auto body_start = raw.find('\n', fence);
  if (body_start == std::string_view::npos) malformed();
  const auto body_end = raw.find("```", body_start);
  if (body_end == std::string_view::npos) malformed();
  const std::string_view body = raw.substr(body_start + 1, body_end - body_start - 1);

  std::map<std::string, int> scores;
  std::istringstream lines{std::string(body)};
  std::string line;
  while (std::getline(lines, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) malformed();
    const std::string key = lower(trim(std::string_view(line).substr(0, colon)));
    const std::string value = trim(std::string_view(line).substr(colon + 1));
    int v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (value.empty() || ec != std::errc{} || ptr != value.data() + value.size()) malformed();
    scores[key] = v;
  }

  std::array<int, 3> ordered{};
  for (std::size_t i = 0; i < rubric.criteria.size() && i < 3; ++i) {
    auto it = scores.find(lower(rubric.criteria[i].key));
    if (it == scores.end()) throw Error(Errc::invalid_argument, "incomplete scoring");
    ordered[i] = it->second;
  }
  return total_quality({ordered[0], ordered[1], ordered[2]});
}

ProviderResponse parse_assist_response(std::string_view raw) {
  ProviderResponse r;
  r.raw = std::string(raw);
  std::vector<std::string>* target = nullptr;
  std::istringstream lines{std::string(raw)};
  std::string line;
  while (std::getline(lines, line)) {
    const std::string t = trim(line);
    const std::string l = lower(t);
    if (l.rfind("strengths", 0) == 0) {
      target = &r.strengths;
    } else if (l.rfind("suggestions", 0) == 0) {
      target = &r.suggestions;
    } else if (target != nullptr && (t.rfind("- ", 0) == 0 || t.rfind("* ", 0) == 0)) {
      target->push_back(trim(std::string_view(t).substr(2)));
    }
  }
  if (r.strengths.empty() && r.suggestions.empty() && !trim(raw).empty()) {
    r.suggestions.push_back(trim(raw));
  }
  return r;
}

HeuristicAnalysis analyze_feedback(std::string_view feedback_text) {
  HeuristicAnalysis a;
  std::vector<std::string> statements;
  std::string cur;
  for (char c : feedback_text) {
    if (c == '.' || c == '!' || c == '?' || c == ';' || c == '\n') {
      if (!trim(cur).empty()) statements.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty()) statements.push_back(trim(cur));

  std::set<std::string> seen_relevant;
  std::set<std::string> seen_specific;
  int statements_with_words = 0;
  for (const auto& s : statements) {
    const auto ws = words_of(s);
    if (ws.empty()) continue;
    ++statements_with_words;
    a.words += static_cast<int>(ws.size());
    const bool evaluative = std::any_of(ws.begin(), ws.end(), [](const std::string& w) {
      return kEvaluative.contains(w);
    });
    const bool aspect = std::any_of(ws.begin(), ws.end(), [](const std::string& w) {
      return kAspects.contains(w);
    });
    if (!(evaluative && aspect)) continue;
    std::string norm;
    for (const auto& w : ws) norm += w + ' ';
    if (seen_relevant.insert(norm).second) a.relevant_statements.push_back(s);
    if (has_detail(s) && seen_specific.insert(norm).second) a.specific_statements.push_back(s);
  }
  const std::string l = lower(feedback_text);
  for (auto p : kVaguePhrases) a.vague_markers += count_phrase(l, p);
  a.mean_statement_words =
      statements_with_words == 0 ? 0.0 : static_cast<double>(a.words) / statements_with_words;
  return a;
}

QualityScore heuristic_mock_score(std::string_view feedback_text) {
  const HeuristicAnalysis a = analyze_feedback(feedback_text);
  if (a.words == 0) return total_quality({0, 0, 0});

  int clarity = 3;
  if (a.mean_statement_words > 25.0) --clarity;
  if (a.mean_statement_words > 40.0) --clarity;
  clarity -= std::min(a.vague_markers, 2);
  const bool shouting = feedback_text.find("!!!") != std::string_view::npos || [&] {
    int upper = 0, letters = 0;
    for (char ch : feedback_text) {
      const auto c = static_cast<unsigned char>(ch);
      if (std::isalpha(c)) {
        ++letters;
        if (std::isupper(c)) ++upper;
      }
    }
    return letters >= 12 && upper * 10 > letters * 7;
  }();
  if (shouting) --clarity;
  if (a.words < 5) clarity = std::min(clarity, 2);
  clarity = std::clamp(clarity, 1, 3);

  return total_quality({clarity, band(a.relevant_statements.size()),
                        band(a.specific_statements.size())});
}

std::string MockProvider::complete(const ProviderRequest& request) {
  const std::string text = extract_feedback(request).value_or("");
  const QualityScore q = heuristic_mock_score(text);
  if (request.mode == ProviderMode::score) {
    return fmt::format(
        "```scores\nclarity: {}\nrelevance: {}\nspecificity: {}\n```\n"
        "Clarity reflects statement length and vague wording. Relevance counts distinct "
        "evaluative points about the work. Specificity counts points backed by a concrete "
        "detail.\n",
        q.clarity(), q.relevance(), q.specificity());
  }
  const HeuristicAnalysis a = analyze_feedback(text);
  std::string out = "Strengths:\n";
  if (a.relevant_statements.empty()) {
    out += "- You took the time to write something for your peer.\n";
  }
  for (const auto& s : a.relevant_statements) out += fmt::format("- You point out: \"{}\"\n", s);
  out += "Suggestions:\n";
  if (q.relevance() < 3) {
    out += "- Name more distinct strengths or weaknesses of the work; aim for four or five.\n";
  }
  if (q.specificity() < 3) {
    out += "- Back each point with a concrete detail, such as a slide number or a moment in the demo.\n";
  }
  if (q.clarity() < 3) {
    out += "- Use shorter sentences and replace vague words with precise ones.\n";
  }
  if (q.total() == QualityScore::kMaxTotal) {
    out += "- Your feedback already meets every rubric criterion; keep this standard.\n";
  }
  return out;
}

std::string_view to_string(Trigger t) {
  return t == Trigger::prompt_consult ? "prompt_consult" : "none";
}

bool below_half(int total) { return 2 * total < QualityScore::kMaxTotal; }

ScoringOutcome on_submit_evaluate(Provider& provider, const Rubric& rubric, Review& review,
                                  const PromptTemplates& templates) {
  ScoringOutcome out;
  if (trim(review.open_feedback).empty()) return out;
  const ProviderRequest request = build_score_prompt(rubric, review.open_feedback, templates);
  for (int attempt = 1; attempt <= 2; ++attempt) {
    out.attempts = attempt;
    try {
      std::string raw = provider.complete(request);
      out.raw_outputs.push_back(raw);
      const QualityScore q = parse_score_response(raw, rubric);
      review.quality = q;
      out.score = q;
      out.trigger = below_half(q.total()) ? Trigger::prompt_consult : Trigger::none;
      return out;
    } catch (const Error&) {
      // retried once below, then the review stays unscored
    }
  }
  out.flagged_for_instructor = true;
  return out;
}

std::string first_consult_cause(const ParticipantId& student, int session_index) {
  return fmt::format("first-consult:{}:s{}", student.value, session_index);
}

std::string low_score_consult_cause(const AssignmentId& review) {
  return fmt::format("low-score-consult:{}", review.value);
}

bool low_score_bonus_eligible(const PointSchedule& schedule, std::optional<int> latest_total) {
  return latest_total && *latest_total < schedule.low_score_consult_threshold;
}

std::vector<AnnotatedFeedback> read_annotation_corpus(std::istream& in) {
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header || header->fields.size() != 4 || header->fields[0] != "feedback_text") {
    throw Error(Errc::invalid_argument,
                "annotation corpus needs header feedback_text,clarity,relevance,specificity");
  }
  std::vector<AnnotatedFeedback> rows;
  while (auto rec = reader.next()) {
    if (rec->fields.size() != 4) {
      throw Error(Errc::invalid_argument, fmt::format("line {}: expected 4 fields", rec->line));
    }
    auto num = [&](const std::string& s) {
      int v = 0;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || v < 0 || v > 3) {
        throw Error(Errc::invalid_argument, fmt::format("line {}: bad score '{}'", rec->line, s));
      }
      return v;
    };
    rows.push_back({rec->fields[0],
                    {num(rec->fields[1]), num(rec->fields[2]), num(rec->fields[3])},
                    rec->line});
  }
  return rows;
}

AnnotationReport validate_against_annotations(Provider& provider, const Rubric& rubric,
                                              const std::vector<AnnotatedFeedback>& rows) {
  AnnotationReport report;
  std::array<CriterionAgreement, 3> acc;
  for (std::size_t i = 0; i < 3; ++i) acc[i].criterion = rubric.criteria[i].key;
  for (const auto& row : rows) {
    Review review;
    review.open_feedback = row.text;
    const auto outcome = on_submit_evaluate(provider, rubric, review);
    if (!outcome.score) {
      ++report.unscored;
      continue;
    }
    const std::array<int, 3> machine{outcome.score->clarity(), outcome.score->relevance(),
                                     outcome.score->specificity()};
    const std::array<int, 3> human{row.human.clarity, row.human.relevance, row.human.specificity};
    for (std::size_t i = 0; i < 3; ++i) {
      const int diff = std::abs(machine[i] - human[i]);
      ++acc[i].n;
      acc[i].exact += diff == 0 ? 1.0 : 0.0;
      acc[i].adjacent += diff <= 1 ? 1.0 : 0.0;
      acc[i].mean_absolute_error += diff;
    }
  }
  for (auto& a : acc) {
    if (a.n > 0) {
      a.exact /= a.n;
      a.adjacent /= a.n;
      a.mean_absolute_error /= a.n;
    }
    report.criteria.push_back(a);
  }
  return report;
}

}  // namespace peerfb
