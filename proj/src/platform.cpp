#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "peerfb/json_io.hpp"
#include "peerfb/service.hpp"

namespace peerfb {

using nlohmann::json;

ConditionPolicy ConditionPolicy::for_condition(Condition c) {
  ConditionPolicy p;
  if (c == Condition::control) {
    p.gamification_visible = false;
    p.wheel_enabled = false;
    p.store_enabled = false;
    p.leaderboard_visible = false;
  }
  return p;
}

const std::vector<std::string>& gamification_keys() {
  static const std::vector<std::string> keys = {
      "xp",       "balance",     "earned",        "multiplier", "badges",
      "new_badges", "leaderboard", "rank",        "wheel",      "spins",
      "pending_spin", "store",     "purchases",   "rewards",    "optional_left",
      "countdown", "award",        "bonuses",     "net_xp",     "base_xp",
      "wheel_bonus", "rulebook",   "counted_for_first_use_bonus",
      "counted_for_low_score_bonus"};
  return keys;
}

namespace {

void strip_keys(json& doc, const std::set<std::string>& keys) {
  if (doc.is_object()) {
    for (auto it = doc.begin(); it != doc.end();) {
      if (keys.contains(it.key())) {
        it = doc.erase(it);
      } else {
        strip_keys(*it, keys);
        ++it;
      }
    }
  } else if (doc.is_array()) {
    for (auto& item : doc) strip_keys(item, keys);
  }
}

// Students outside an experiment see the gamified platform.
ConditionPolicy policy_of(const Participant& p) {
  return ConditionPolicy::for_condition(p.condition.value_or(Condition::treatment));
}

}  // namespace

json apply_condition_view(const Participant& viewer, json doc) {
  if (viewer.role == Role::instructor) return doc;
  if (policy_of(viewer).gamification_visible) return doc;
  static const std::set<std::string> keys(gamification_keys().begin(), gamification_keys().end());
  strip_keys(doc, keys);
  return doc;
}

std::string_view to_string(ThreadRole r) { return r == ThreadRole::reviewer ? "reviewer" : "reviewee"; }

std::unique_ptr<Provider> make_provider(const ProviderSettings& s) {
  if (s.backend == "mock") return std::make_unique<MockProvider>();
  if (s.backend == "remote") return std::make_unique<RemoteProvider>(s.remote);
  throw Error(Errc::invalid_argument, fmt::format("unknown provider backend '{}'", s.backend));
}

json to_json(const PlatformConfig& c) {
  json alloc = {{"reviews_per_deliverable", c.allocation.reviews_per_deliverable},
                {"optional_cap_per_session", c.allocation.optional_cap_per_session},
                {"rng_seed", c.allocation.rng_seed}};
  alloc["max_reviews_per_student_total"] = c.allocation.max_reviews_per_student_total
                                               ? json(*c.allocation.max_reviews_per_student_total)
                                               : json(nullptr);
  json provider = {{"backend", c.provider.backend},
                   {"endpoint", c.provider.remote.endpoint},
                   {"path", c.provider.remote.path},
                   {"model", c.provider.remote.model},
                   {"api_key_env", c.provider.remote.api_key_env},
                   {"timeout_seconds", c.provider.remote.timeout.count()}};
  if (c.provider.prompts_dir) provider["prompts_dir"] = c.provider.prompts_dir->string();
  return {{"rulebook", to_json(c.rules)},
          {"allocation", alloc},
          {"poke_cooldown_hours", c.poke_cooldown.count() / 3600.0},
          {"wheel_seed", c.wheel_seed},
          {"provider", provider}};
}

PlatformConfig platform_config_from_json(const json& j) {
  PlatformConfig c;
  if (j.contains("rulebook")) c.rules = rulebook_from_json(j["rulebook"]);
  if (j.contains("allocation")) {
    const auto& a = j["allocation"];
    c.allocation.reviews_per_deliverable =
        a.value("reviews_per_deliverable", c.allocation.reviews_per_deliverable);
    c.allocation.optional_cap_per_session =
        a.value("optional_cap_per_session", c.allocation.optional_cap_per_session);
    c.allocation.rng_seed = a.value("rng_seed", c.allocation.rng_seed);
    if (a.contains("max_reviews_per_student_total") && !a["max_reviews_per_student_total"].is_null()) {
      c.allocation.max_reviews_per_student_total = a["max_reviews_per_student_total"].get<int>();
    }
  }
  if (j.contains("poke_cooldown_hours")) {
    c.poke_cooldown = std::chrono::seconds(
        static_cast<std::int64_t>(j["poke_cooldown_hours"].get<double>() * 3600.0));
  }
  c.wheel_seed = j.value("wheel_seed", c.wheel_seed);
  if (j.contains("provider")) {
    const auto& p = j["provider"];
    c.provider.backend = p.value("backend", c.provider.backend);
    c.provider.remote.endpoint = p.value("endpoint", c.provider.remote.endpoint);
    c.provider.remote.path = p.value("path", c.provider.remote.path);
    c.provider.remote.model = p.value("model", c.provider.remote.model);
    c.provider.remote.api_key_env = p.value("api_key_env", c.provider.remote.api_key_env);
    c.provider.remote.timeout =
        std::chrono::seconds(p.value("timeout_seconds", c.provider.remote.timeout.count()));
    if (p.contains("prompts_dir")) c.provider.prompts_dir = p["prompts_dir"].get<std::string>();
  }
  c.rules.validate();
  return c;
}

namespace {

struct ProviderCall {
  std::optional<std::string> raw;
  std::string error;
};

// Records what the wrapped provider returned so the exchange can be replayed.
class RecordingProvider : public Provider {
 public:
  explicit RecordingProvider(Provider& inner) : inner_(inner) {}
  std::string complete(const ProviderRequest& request) override {
    try {
      std::string raw = inner_.complete(request);
      log.push_back({raw, ""});
      return raw;
    } catch (const Error& e) {
      log.push_back({std::nullopt, e.what()});
      throw;
    }
  }
  std::string name() const override { return inner_.name(); }

  json log_json() const {
    json out = json::array();
    for (const auto& c : log) {
      out.push_back(c.raw ? json{{"raw", *c.raw}} : json{{"error", c.error}});
    }
    return out;
  }

  std::vector<ProviderCall> log;

 private:
  Provider& inner_;
};

// Plays back a recorded provider log.
class ScriptProvider : public Provider {
 public:
  explicit ScriptProvider(const json& log) {
    for (const auto& c : log) {
      calls_.push_back(c.contains("raw") ? ProviderCall{c["raw"].get<std::string>(), ""}
                                         : ProviderCall{std::nullopt, c.value("error", "")});
    }
  }
  std::string complete(const ProviderRequest&) override {
    if (next_ >= calls_.size()) throw ProviderError("replay log exhausted");
    const auto& c = calls_[next_++];
    if (!c.raw) throw ProviderError(c.error);
    return *c.raw;
  }
  std::string name() const override { return "replay"; }

 private:
  std::vector<ProviderCall> calls_;
  std::size_t next_ = 0;
};

struct Course {
  CourseId id;
  std::string name;
  std::vector<ParticipantId> members;
  std::vector<std::string> sessions;
};

struct SessionState {
  SessionInfo info;
  std::vector<Deliverable> deliverables;
  std::unique_ptr<SessionAllocation> alloc;
};

struct OverrideGuard {
  OverrideGuard(Provider*& slot, Provider* p) : slot(slot) { slot = p; }
  ~OverrideGuard() { slot = nullptr; }
  Provider*& slot;
};

[[noreturn]] void forbidden(const std::string& what) { throw Error(Errc::forbidden, what); }

}  // namespace

struct Platform::Impl {
  std::mutex mu;
  std::shared_ptr<EventStore> store;
  std::unique_ptr<Provider> provider;
  Provider* override_provider = nullptr;
  PromptTemplates templates;
  Rubric rubric = Rubric::standard();
  Rng wheel_rng{0};
  bool replaying = false;
  std::uint64_t seq = 0;

  std::map<CourseId, Course> courses;
  std::map<ParticipantId, Participant> participants;
  std::map<ParticipantId, CourseId> course_of;
  std::map<QuestionnaireId, Questionnaire> questionnaires;
  std::map<std::string, SessionState> sessions;
  std::map<DeliverableId, std::string> session_of_deliverable;
  std::map<AssignmentId, std::string> session_of_assignment;
  std::map<AssignmentId, Review> reviews;
  std::vector<Poke> pokes;
  std::map<AssignmentId, ClarificationThread> threads;
  std::vector<Notification> notifications;
  std::vector<AssistantExchange> exchanges;
  int course_serial = 0;
  int questionnaire_serial = 0;
  int deliverable_serial = 0;
  int thread_serial = 0;

  void record(const ParticipantId& actor, std::string type, json data, Timestamp at) {
    ++seq;
    if (replaying) return;
    store->append({seq, at, actor.value, std::move(type), std::move(data)});
  }

  Provider& active_provider() { return override_provider ? *override_provider : *provider; }

  bool is_instructor(const ParticipantId& id) const {
    if (id == Platform::kAdmin) return true;
    auto it = participants.find(id);
    return it != participants.end() && it->second.role == Role::instructor;
  }

  void require_instructor(const ParticipantId& id) const {
    if (!is_instructor(id)) forbidden("instructor role required");
  }

  const Participant& student(const ParticipantId& id) const {
    auto it = participants.find(id);
    if (it == participants.end() || it->second.role != Role::student) {
      throw Error(Errc::not_found, "no such participant");
    }
    return it->second;
  }

  Course& course(const CourseId& id) {
    auto it = courses.find(id);
    if (it == courses.end()) throw Error(Errc::not_found, fmt::format("no such course '{}'", id.value));
    return it->second;
  }

  SessionState& session(const std::string& id) {
    auto it = sessions.find(id);
    if (it == sessions.end()) throw Error(Errc::not_found, fmt::format("no such session '{}'", id));
    return it->second;
  }

  SessionState& session_for(const AssignmentId& a) {
    auto it = session_of_assignment.find(a);
    if (it == session_of_assignment.end()) throw Error(Errc::not_found, "no such assignment");
    return sessions.at(it->second);
  }

  const ReviewAssignment& assignment(const AssignmentId& a) {
    return *session_for(a).alloc->find(a);
  }

  const Deliverable& deliverable_of(const ReviewAssignment& a) {
    return *sessions.at(session_of_deliverable.at(a.deliverable)).alloc->find_deliverable(a.deliverable);
  }

  int reviews_outside(const ParticipantId& student_id, const std::string& session_id) const {
    int n = 0;
    for (const auto& [id, s] : sessions) {
      if (id == session_id || !s.alloc || !s.alloc->allocated()) continue;
      n += s.alloc->issued_count(student_id, Obligation::mandatory) +
           s.alloc->issued_count(student_id, Obligation::optional);
    }
    return n;
  }

  // Latest allocated session of the student's course, by index.
  const SessionState* current_session(const ParticipantId& student_id) const {
    auto c = course_of.find(student_id);
    if (c == course_of.end()) return nullptr;
    const SessionState* best = nullptr;
    for (const auto& sid : courses.at(c->second).sessions) {
      const auto& s = sessions.at(sid);
      if (!s.alloc || !s.alloc->allocated() || !s.alloc->has_reviewer(student_id)) continue;
      if (!best || s.info.session.index() > best->info.session.index()) best = &s;
    }
    return best;
  }

  void notify(const ParticipantId& to, std::string kind, std::string text, Timestamp at) {
    notifications.push_back({to, std::move(kind), std::move(text), at});
  }

  void collect_badge_notifications(GamificationEngine& engine, Timestamp at) {
    for (const auto& n : engine.drain_notifications()) {
      notify(n.student, "badge",
             fmt::format("You earned the {} {} badge", to_string(n.badge.tier),
                         display_name(n.badge.kind)),
             at);
    }
  }

  json countdown_json(const ParticipantId& student_id) const {
    json out = json::array();
    auto c = course_of.find(student_id);
    if (c == course_of.end()) return out;
    for (const auto& sid : courses.at(c->second).sessions) {
      const auto& s = sessions.at(sid);
      if (!s.alloc || !s.alloc->allocated() || !s.alloc->has_reviewer(student_id)) continue;
      const Countdown cd = countdown(*s.alloc, student_id);
      out.push_back({{"session", sid},
                     {"mandatory_left", cd.mandatory_left},
                     {"optional_left", cd.optional_left}});
    }
    return out;
  }
};

namespace {

void replay_into(Platform& platform, const std::vector<EventRecord>& events) {
  for (const auto& e : events) {
    try {
      platform.apply(e);
    } catch (const Error& ex) {
      throw std::runtime_error(fmt::format("replay diverged at event {} ({}): {}", e.seq, e.type, ex.what()));
    }
  }
}

}  // namespace

Platform::Platform(PlatformConfig cfg, std::shared_ptr<EventStore> store,
                   std::unique_ptr<Provider> provider)
    : cfg_(std::move(cfg)), engine_(cfg_.rules), impl_(std::make_unique<Impl>()) {
  impl_->store = store ? std::move(store) : std::make_shared<MemoryEventStore>();
  impl_->provider = provider ? std::move(provider) : make_provider(cfg_.provider);
  impl_->templates = cfg_.provider.prompts_dir ? PromptTemplates::load(*cfg_.provider.prompts_dir)
                                               : PromptTemplates::builtin();
  impl_->wheel_rng = Rng(mix_seed(cfg_.wheel_seed, 0x77ee1));
  const auto existing = impl_->store->load();
  if (!existing.empty()) {
    impl_->replaying = true;
    struct Reset {
      Impl* impl;
      ~Reset() { impl->replaying = false; }
    } reset{impl_.get()};
    replay_into(*this, existing);
  }
}

Platform::~Platform() = default;

std::vector<EventRecord> Platform::events() const { return impl_->store->load(); }

CourseId Platform::create_course(const ParticipantId& actor, const std::string& name, Timestamp now) {
  std::lock_guard lock(impl_->mu);
  impl_->require_instructor(actor);
  CourseId id(fmt::format("c{}", ++impl_->course_serial));
  impl_->courses[id] = Course{id, name, {}, {}};
  impl_->record(actor, "create_course", {{"name", name}, {"result", id.value}}, now);
  return id;
}

void Platform::add_participant(const ParticipantId& actor, const CourseId& course_id,
                               Participant p, Timestamp now) {
  std::lock_guard lock(impl_->mu);
  impl_->require_instructor(actor);
  auto& course = impl_->course(course_id);
  if (p.id.empty() || p.id == kAdmin) throw Error(Errc::invalid_argument, "invalid participant id");
  if (impl_->participants.contains(p.id)) {
    throw Error(Errc::conflict, fmt::format("participant '{}' already exists", p.id.value));
  }
  if (p.role == Role::student) {
    if (p.display_alias.empty()) throw Error(Errc::invalid_argument, "display_alias required");
    if (p.display_alias == p.id.value) {
      throw Error(Errc::invalid_argument, "display_alias must differ from the participant id");
    }
    for (const auto& [id, other] : impl_->participants) {
      if (other.display_alias == p.display_alias && impl_->course_of[id] == course_id) {
        throw Error(Errc::conflict, "display_alias already taken");
      }
    }
  } else {
    p.condition.reset();
  }
  impl_->participants[p.id] = p;
  impl_->course_of[p.id] = course_id;
  course.members.push_back(p.id);
  impl_->record(actor, "add_participant", {{"course", course_id.value}, {"participant", to_json(p)}}, now);
}

std::map<ParticipantId, Condition> Platform::randomize_conditions(const ParticipantId& actor,
                                                                  const CourseId& course_id,
                                                                  std::uint64_t seed, Timestamp now) {
  std::lock_guard lock(impl_->mu);
  impl_->require_instructor(actor);
  auto& course = impl_->course(course_id);
  std::vector<ParticipantId> students;
  for (const auto& id : course.members) {
    if (impl_->participants[id].role == Role::student) students.push_back(id);
  }
  Rng rng(mix_seed(seed, 0xc0de));
  rng.shuffle(std::span<ParticipantId>(students));
  std::map<ParticipantId, Condition> out;
  json result = json::object();
  for (std::size_t i = 0; i < students.size(); ++i) {
    const Condition c = i < (students.size() + 1) / 2 ? Condition::treatment : Condition::control;
    impl_->participants[students[i]].condition = c;
    out[students[i]] = c;
    result[students[i].value] = to_string(c);
  }
  impl_->record(actor, "randomize", {{"course", course_id.value}, {"seed", seed}, {"result", result}},
                now);
  return out;
}

QuestionnaireId Platform::create_questionnaire(const ParticipantId& actor, Questionnaire q,
                                               Timestamp now) {
  std::lock_guard lock(impl_->mu);
  impl_->require_instructor(actor);
  if (const auto v = validate_questionnaire(q); !v.empty()) {
    std::string msg = "invalid questionnaire:";
    for (const auto& x : v) msg += fmt::format(" {}: {};", x.subject, x.reason);
    msg.pop_back();
    throw Error(Errc::invalid_argument, msg);
  }
  q.id = QuestionnaireId(fmt::format("q{}", ++impl_->questionnaire_serial));
  impl_->questionnaires[q.id] = q;
  impl_->record(actor, "create_questionnaire", {{"questionnaire", to_json(q)}, {"result", q.id.value}},
                now);
  return q.id;
}

std::string Platform::create_session(const ParticipantId& actor, const CourseId& course_id, int index,
                                     Date day_d, const QuestionnaireId& questionnaire, Timestamp now) {
  std::lock_guard lock(impl_->mu);
  impl_->require_instructor(actor);
  auto& course = impl_->course(course_id);
  if (!impl_->questionnaires.contains(questionnaire)) {
    throw Error(Errc::not_found, fmt::format("no such questionnaire '{}'", questionnaire.value));
  }
  const std::string id = fmt::format("{}-s{}", course_id.value, index);
  if (impl_->sessions.contains(id)) throw Error(Errc::conflict, "session index already used");
  SessionState s{SessionInfo{id, course_id, EvaluationSession(index, day_d), questionnaire}, {}, nullptr};
  impl_->sessions.emplace(id, std::move(s));
  course.sessions.push_back(id);
  impl_->record(actor, "create_session",
                {{"course", course_id.value},
                 {"index", index},
                 {"day_d", format_date(day_d)},
                 {"questionnaire", questionnaire.value},
                 {"result", id}},
                now);
  return id;
}

DeliverableId Platform::add_deliverable(const ParticipantId& actor, const std::string& session_id,
                                        const ParticipantId& owner, const std::string& artifact_uri,
                                        DeliverableKind kind, Timestamp now) {
  std::lock_guard lock(impl_->mu);
  impl_->require_instructor(actor);
  auto& s = impl_->session(session_id);
  if (s.alloc) throw Error(Errc::conflict, "session already allocated");
  impl_->student(owner);
  if (impl_->course_of.at(owner) != s.info.course) {
    throw Error(Errc::invalid_argument, "owner is not in this course");
  }
  for (const auto& d : s.deliverables) {
    if (d.owner == owner) throw Error(Errc::conflict, "owner already has a deliverable in this session");
  }
  DeliverableId id(fmt::format("d{}", ++impl_->deliverable_serial));
  s.deliverables.push_back({id, owner, s.info.session.index(), artifact_uri, kind});
  impl_->session_of_deliverable[id] = session_id;
  impl_->record(actor, "add_deliverable",
                {{"session", session_id},
                 {"owner", owner.value},
                 {"artifact_uri", artifact_uri},
                 {"kind", to_string(kind)},
                 {"result", id.value}},
                now);
  return id;
}

AllocationPlan Platform::allocate(const ParticipantId& actor, const std::string& session_id,
                                  Timestamp now) {
  std::lock_guard lock(impl_->mu);
  impl_->require_instructor(actor);
  auto& s = impl_->session(session_id);
  if (s.alloc) throw Error(Errc::conflict, "session already allocated");
  std::vector<Participant> reviewers;
  for (const auto& id : impl_->courses.at(s.info.course).members) {
    const auto& p = impl_->participants.at(id);
    if (p.role == Role::student) reviewers.push_back(p);
  }
  AllocationConfig ac = cfg_.allocation;
  ac.rng_seed = mix_seed(cfg_.allocation.rng_seed, static_cast<std::uint64_t>(s.info.session.index()));
  auto alloc = std::make_unique<SessionAllocation>(s.info.session, reviewers, s.deliverables, ac,
                                                   session_id + "-a");
  AllocationPlan plan = alloc->allocate_mandatory();
  s.alloc = std::move(alloc);
  for (const auto& a : plan.assignments) impl_->session_of_assignment[a.id] = session_id;
  impl_->record(actor, "allocate",
                {{"session", session_id}, {"assignments", plan.assignments.size()}}, now);
  return plan;
}

std::vector<ReviewAssignment> Platform::my_assignments(const ParticipantId& student) const {
  std::lock_guard lock(impl_->mu);
  impl_->student(student);
  std::vector<ReviewAssignment> out;
  for (const auto& sid : impl_->courses.at(impl_->course_of.at(student)).sessions) {
    const auto& s = impl_->sessions.at(sid);
    if (!s.alloc) continue;
    for (const auto& a : s.alloc->assignments()) {
      if (a.reviewer == student) out.push_back(a);
    }
  }
  return out;
}

std::optional<ReviewAssignment> Platform::request_optional(const ParticipantId& student,
                                                           const std::string& session_id,
                                                           Timestamp now) {
  std::lock_guard lock(impl_->mu);
  impl_->student(student);
  auto& s = impl_->session(session_id);
  if (!s.alloc) throw Error(Errc::precondition_failed, "session not allocated");
  if (now > end_of_day(s.info.session.review_close())) return std::nullopt;
  auto a = s.alloc->next_optional(student, impl_->reviews_outside(student, session_id));
  if (!a) return std::nullopt;
  impl_->session_of_assignment[a->id] = session_id;
  impl_->record(student, "request_optional", {{"session", session_id}, {"result", a->id.value}}, now);
  return a;
}

SubmitResult Platform::submit_review(const ParticipantId& student, const AssignmentId& assignment_id,
                                     std::map<std::string, AnswerValue> answers, Timestamp now) {
  std::unique_lock lock(impl_->mu);
  impl_->student(student);
  auto& s = impl_->session_for(assignment_id);
  const ReviewAssignment& pending = *s.alloc->find(assignment_id);
  if (pending.reviewer != student) forbidden("not your assignment");
  if (pending.status == ReviewStatus::submitted) throw Error(Errc::conflict, "already submitted");
  classify_timeliness(s.info.session, now);
  const json answers_json = answers_to_json(answers);
  Review review = make_review(assignment_id, impl_->questionnaires.at(s.info.questionnaire),
                              std::move(answers));
  RecordingProvider recorder(impl_->active_provider());
  const Rubric rubric = impl_->rubric;
  const PromptTemplates templates = impl_->templates;
  lock.unlock();

  ScoringOutcome scoring = on_submit_evaluate(recorder, rubric, review, templates);

  lock.lock();
  SubmitResult result;
  result.assignment = s.alloc->mark_submitted(assignment_id, now);
  result.award = engine_.award_review_points(result.assignment, now);
  if (scoring.score) {
    result.new_badges = engine_.record_review_quality(student, scoring.score->total(), now);
    impl_->collect_badge_notifications(engine_, now);
  }
  result.review = review;
  result.scoring = std::move(scoring);
  impl_->reviews[assignment_id] = std::move(review);
  impl_->record(student, "submit_review",
                {{"assignment", assignment_id.value},
                 {"answers", answers_json},
                 {"provider_log", recorder.log_json()},
                 {"quality", result.scoring.score ? to_json(*result.scoring.score) : json(nullptr)}},
                now);
  return result;
}

AssistResult Platform::assist(const ParticipantId& student, const AssignmentId& assignment_id,
                              const std::string& draft, Timestamp now) {
  std::unique_lock lock(impl_->mu);
  impl_->student(student);
  auto& s = impl_->session_for(assignment_id);
  const ReviewAssignment& a = *s.alloc->find(assignment_id);
  if (a.reviewer != student) forbidden("not your assignment");
  AssistContext ctx;
  ctx.kind = impl_->deliverable_of(a).kind;
  for (const auto& q : impl_->questionnaires.at(s.info.questionnaire).questions) {
    if (q.kind == QuestionKind::open_ended) {
      ctx.question_prompt = q.prompt;
      break;
    }
  }
  const ProviderRequest request = build_assist_prompt(impl_->rubric, draft, ctx, impl_->templates);
  RecordingProvider recorder(impl_->active_provider());
  const int session_index = s.info.session.index();
  lock.unlock();

  const std::string raw = recorder.complete(request);

  lock.lock();
  AssistResult result;
  auto& ex = result.exchange;
  ex.id = fmt::format("x{}", impl_->exchanges.size() + 1);
  ex.review = assignment_id;
  ex.mode = ProviderMode::assist;
  ex.draft_text = draft;
  ex.response = parse_assist_response(raw);
  ex.occurred_at = now;
  if (auto b = engine_.award_consult_bonus(student, ConsultBonusKind::first_use,
                                           first_consult_cause(student, session_index), now)) {
    ex.counted_for_first_use_bonus = true;
    result.bonuses.push_back(*b);
  }
  std::optional<int> latest;
  if (auto it = impl_->reviews.find(assignment_id); it != impl_->reviews.end() && it->second.quality) {
    latest = it->second.quality->total();
  }
  if (low_score_bonus_eligible(cfg_.rules.points, latest)) {
    if (auto b = engine_.award_consult_bonus(student, ConsultBonusKind::low_score,
                                             low_score_consult_cause(assignment_id), now)) {
      ex.counted_for_low_score_bonus = true;
      result.bonuses.push_back(*b);
    }
  }
  impl_->exchanges.push_back(ex);
  impl_->record(student, "assist",
                {{"assignment", assignment_id.value}, {"draft", draft},
                 {"provider_log", recorder.log_json()}, {"result", ex.id}},
                now);
  return result;
}

Spin Platform::spin_wheel(const ParticipantId& student, Timestamp now) {
  std::lock_guard lock(impl_->mu);
  const auto& p = impl_->student(student);
  if (!policy_of(p).wheel_enabled) forbidden("wheel not available");
  const auto* current = impl_->current_session(student);
  const bool complete =
      current != nullptr && current->alloc->pending_count(student, Obligation::mandatory) == 0;
  if (!complete) throw Error(Errc::precondition_failed, "wheel locked");
  if (engine_.pending_spin(student)) throw Error(Errc::conflict, "spin pending");
  const double draw = impl_->wheel_rng.uniform01();
  Spin spin = engine_.spin_wheel(student, complete, draw, now);
  impl_->record(student, "spin",
                {{"result", spin.id}, {"draw", draw}, {"prize_xp", spin.prize_xp}}, now);
  return spin;
}

Purchase Platform::redeem(const ParticipantId& student, const std::string& reward_id, Timestamp now) {
  std::lock_guard lock(impl_->mu);
  const auto& p = impl_->student(student);
  if (!policy_of(p).store_enabled) forbidden("store not available");
  auto [purchase, debit] = engine_.redeem_reward(student, reward_id, now);
  impl_->record(student, "redeem", {{"reward", reward_id}, {"result", purchase.id}}, now);
  return purchase;
}

Poke Platform::poke(const ParticipantId& from, const AssignmentId& assignment_id, Timestamp now) {
  std::lock_guard lock(impl_->mu);
  impl_->student(from);
  auto it = impl_->session_of_assignment.find(assignment_id);
  if (it == impl_->session_of_assignment.end()) {
    throw Error(Errc::precondition_failed, "nothing to poke about");
  }
  const auto& a = impl_->assignment(assignment_id);
  const auto& d = impl_->deliverable_of(a);
  if (d.owner != from || a.status != ReviewStatus::pending) {
    throw Error(Errc::precondition_failed, "nothing to poke about");
  }
  for (const auto& p : impl_->pokes) {
    if (p.from == from && p.target == a.reviewer && now - p.sent_at < cfg_.poke_cooldown) {
      throw Error(Errc::conflict, "poke cooldown");
    }
  }
  Poke poke{fmt::format("p{}", impl_->pokes.size() + 1), from, a.reviewer, a.id, now};
  impl_->pokes.push_back(poke);
  impl_->notify(a.reviewer, "poke",
                fmt::format("The author of {} nudged you to complete review {}", d.id.value,
                            a.id.value),
                now);
  impl_->record(from, "poke", {{"assignment", assignment_id.value}, {"result", poke.id}}, now);
  return poke;
}

Poke Platform::poke_participant(const ParticipantId& from, const ParticipantId& target, Timestamp now) {
  std::optional<AssignmentId> found;
  {
    std::lock_guard lock(impl_->mu);
    impl_->student(from);
    for (const auto& [id, s] : impl_->sessions) {
      if (!s.alloc) continue;
      for (const auto& a : s.alloc->assignments()) {
        if (a.reviewer != target || a.status != ReviewStatus::pending) continue;
        if (s.alloc->find_deliverable(a.deliverable)->owner == from) {
          found = a.id;
          break;
        }
      }
      if (found) break;
    }
  }
  if (!found) throw Error(Errc::precondition_failed, "nothing to poke about");
  return poke(from, *found, now);
}

ClarificationThread Platform::post_clarification(const ParticipantId& author,
                                                 const AssignmentId& review_id,
                                                 const std::string& text, Timestamp now) {
  std::lock_guard lock(impl_->mu);
  if (!impl_->reviews.contains(review_id)) throw Error(Errc::not_found, "no such review");
  const auto& s = impl_->session_for(review_id);
  const auto& a = impl_->assignment(review_id);
  const auto& d = impl_->deliverable_of(a);
  ThreadRole role;
  ParticipantId counterpart;
  if (author == a.reviewer) {
    role = ThreadRole::reviewer;
    counterpart = d.owner;
  } else if (author == d.owner) {
    role = ThreadRole::reviewee;
    counterpart = a.reviewer;
  } else {
    forbidden("not a participant of this review");
  }
  if (now < start_of_day(s.info.session.results_visible_from())) {
    throw Error(Errc::precondition_failed, "results not yet visible");
  }
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Error(Errc::invalid_argument, "empty message");
  }
  auto& thread = impl_->threads[review_id];
  if (thread.id.empty()) {
    thread.id = fmt::format("t{}", ++impl_->thread_serial);
    thread.review = review_id;
  }
  thread.messages.push_back({role, text, now});
  impl_->notify(counterpart, "clarification",
                fmt::format("New message from the {} on review {}", to_string(role), review_id.value),
                now);
  impl_->record(author, "clarification", {{"review", review_id.value}, {"text", text}}, now);
  return thread;
}

json Platform::assignments_view(const ParticipantId& student) const {
  std::lock_guard lock(impl_->mu);
  const auto& p = impl_->student(student);
  json list = json::array();
  for (const auto& sid : impl_->courses.at(impl_->course_of.at(student)).sessions) {
    const auto& s = impl_->sessions.at(sid);
    if (!s.alloc) continue;
    for (const auto& a : s.alloc->assignments()) {
      if (a.reviewer != student) continue;
      json j = to_json(a);
      const auto* d = s.alloc->find_deliverable(a.deliverable);
      j["session"] = sid;
      j["artifact_uri"] = d->artifact_uri;
      j["kind"] = to_string(d->kind);
      j["questionnaire"] = s.info.questionnaire.value;
      j["review_close"] = format_date(s.info.session.review_close());
      list.push_back(std::move(j));
    }
  }
  return apply_condition_view(p, {{"assignments", list}, {"countdown", impl_->countdown_json(student)}});
}

json Platform::gamification_view(const ParticipantId& viewer, const ParticipantId& student_id) const {
  std::lock_guard lock(impl_->mu);
  const bool instructor = impl_->is_instructor(viewer);
  if (!instructor && viewer != student_id) forbidden("not your data");
  const auto& p = impl_->student(student_id);
  const auto& ledger = engine_.ledger();
  json badges = json::array();
  for (const auto& b : engine_.badges(student_id)) badges.push_back(to_json(b));
  json spins = json::array();
  for (const auto& s : engine_.spins()) {
    if (s.student == student_id) spins.push_back(to_json(s));
  }
  const auto pending = engine_.pending_spin(student_id);
  const auto* current = impl_->current_session(student_id);
  const bool wheel_open = policy_of(p).wheel_enabled && current != nullptr &&
                          current->alloc->pending_count(student_id, Obligation::mandatory) == 0;
  json rewards = json::array();
  for (const auto& r : cfg_.rules.rewards) {
    json j = to_json(r);
    const auto left = engine_.stock_left(r.id);
    j["stock_left"] = left ? json(*left) : json(nullptr);
    rewards.push_back(std::move(j));
  }
  json purchases = json::array();
  for (const auto& pu : engine_.purchases(student_id)) purchases.push_back(to_json(pu));

  std::optional<int> rank;
  {
    std::vector<Participant> peers;
    for (const auto& id : impl_->courses.at(impl_->course_of.at(student_id)).members) {
      const auto& q = impl_->participants.at(id);
      if (q.role == Role::student && policy_of(q).leaderboard_visible == policy_of(p).leaderboard_visible) {
        peers.push_back(q);
      }
    }
    for (const auto& row : engine_.leaderboard(peers)) {
      if (row.student == student_id) rank = row.rank;
    }
  }

  json doc = {{"student", student_id.value},
              {"display_alias", p.display_alias},
              {"xp", {{"balance", ledger.balance(student_id)}, {"earned", ledger.earned(student_id)}}},
              {"multiplier", engine_.active_multiplier(student_id).str()},
              {"badges", badges},
              {"wheel", {{"available", wheel_open && !pending},
                         {"spins", spins},
                         {"pending_spin", pending ? to_json(*pending) : json(nullptr)}}},
              {"store", {{"rewards", rewards}, {"purchases", purchases}}},
              {"countdown", impl_->countdown_json(student_id)},
              {"rank", rank ? json(*rank) : json(nullptr)}};
  if (instructor) {
    doc["condition"] = p.condition ? json(to_string(*p.condition)) : json(nullptr);
    doc["shadow"] = !policy_of(p).gamification_visible;
    return doc;
  }
  return apply_condition_view(p, std::move(doc));
}

json Platform::leaderboard_view(const ParticipantId& viewer) const {
  std::lock_guard lock(impl_->mu);
  if (impl_->is_instructor(viewer)) {
    json out = json::array();
    for (const auto& [cid, course] : impl_->courses) {
      std::vector<Participant> all;
      for (const auto& id : course.members) {
        const auto& q = impl_->participants.at(id);
        if (q.role == Role::student) all.push_back(q);
      }
      for (const auto& row : engine_.leaderboard(all)) {
        const auto& q = impl_->participants.at(row.student);
        out.push_back({{"course", cid.value},
                       {"student", row.student.value},
                       {"display_alias", row.display_alias},
                       {"earned", row.earned},
                       {"rank", row.rank},
                       {"condition", q.condition ? json(to_string(*q.condition)) : json(nullptr)}});
      }
    }
    return {{"leaderboard", out}};
  }
  const auto& p = impl_->student(viewer);
  if (!policy_of(p).leaderboard_visible) forbidden("leaderboard not available");
  std::vector<Participant> visible;
  for (const auto& id : impl_->courses.at(impl_->course_of.at(viewer)).members) {
    const auto& q = impl_->participants.at(id);
    if (q.role == Role::student && policy_of(q).leaderboard_visible) visible.push_back(q);
  }
  json rows = json::array();
  for (const auto& row : engine_.leaderboard(visible)) {
    rows.push_back({{"display_alias", row.display_alias},
                    {"earned", row.earned},
                    {"rank", row.rank},
                    {"you", row.student == viewer}});
  }
  return apply_condition_view(p, {{"leaderboard", rows}});
}

json Platform::received_feedback_view(const ParticipantId& student, Timestamp now) const {
  std::lock_guard lock(impl_->mu);
  const auto& p = impl_->student(student);
  json out = json::array();
  for (const auto& sid : impl_->courses.at(impl_->course_of.at(student)).sessions) {
    const auto& s = impl_->sessions.at(sid);
    for (const auto& d : s.deliverables) {
      if (d.owner != student) continue;
      const bool visible = now >= start_of_day(s.info.session.results_visible_from());
      json entry = {{"deliverable", d.id.value},
                    {"session", sid},
                    {"results_visible_from", format_date(s.info.session.results_visible_from())},
                    {"results_visible", visible}};
      json pending = json::array();
      json reviews = json::array();
      std::map<std::string, std::pair<double, int>> sums;
      if (s.alloc) {
        for (const auto& a : s.alloc->assignments()) {
          if (a.deliverable != d.id) continue;
          if (a.status == ReviewStatus::pending) {
            pending.push_back(a.id.value);
            continue;
          }
          if (!visible) continue;
          const auto& r = impl_->reviews.at(a.id);
          reviews.push_back({{"review", a.id.value},
                             {"answers", answers_to_json(r.answers)},
                             {"open_feedback", r.open_feedback}});
          for (const auto& [qid, v] : r.answers) {
            if (const auto* n = std::get_if<int>(&v)) {
              sums[qid].first += *n;
              sums[qid].second += 1;
            }
          }
        }
      }
      json summary = json::object();
      for (const auto& [qid, sc] : sums) {
        summary[qid] = {{"mean", sc.first / sc.second}, {"n", sc.second}};
      }
      entry["pending_reviews"] = pending;
      if (visible) {
        entry["reviews"] = reviews;
        entry["summary"] = summary;
      }
      out.push_back(std::move(entry));
    }
  }
  return apply_condition_view(p, {{"deliverables", out}});
}

json Platform::clarifications_view(const ParticipantId& participant, const AssignmentId& review_id) const {
  std::lock_guard lock(impl_->mu);
  if (!impl_->reviews.contains(review_id)) throw Error(Errc::not_found, "no such review");
  const auto& a = impl_->assignment(review_id);
  const auto& d = impl_->deliverable_of(a);
  const bool instructor = impl_->is_instructor(participant);
  if (!instructor && participant != a.reviewer && participant != d.owner) {
    forbidden("not a participant of this review");
  }
  json messages = json::array();
  if (auto it = impl_->threads.find(review_id); it != impl_->threads.end()) {
    for (const auto& m : it->second.messages) {
      messages.push_back({{"author", to_string(m.author)}, {"text", m.text}, {"at", format_timestamp(m.at)}});
    }
  }
  json doc = {{"review", review_id.value}, {"messages", messages}};
  if (instructor) return doc;
  return apply_condition_view(impl_->participants.at(participant), std::move(doc));
}

json Platform::notifications_view(const ParticipantId& participant) const {
  std::lock_guard lock(impl_->mu);
  const auto& p = impl_->student(participant);
  const bool show_game = policy_of(p).gamification_visible;
  json out = json::array();
  for (const auto& n : impl_->notifications) {
    if (n.to != participant) continue;
    if (n.kind == "badge" && !show_game) continue;
    out.push_back({{"kind", n.kind}, {"text", n.text}, {"at", format_timestamp(n.at)}});
  }
  return apply_condition_view(p, {{"notifications", out}});
}

json Platform::submit_view(const ParticipantId& student, const SubmitResult& r) const {
  json badges = json::array();
  for (const auto& b : r.new_badges) badges.push_back(to_json(b));
  json award = {{"net_xp", r.award.review.net_xp},
                {"base_xp", r.award.review.base_xp},
                {"multiplier", r.award.review.multiplier_applied.str()}};
  if (r.award.wheel_bonus) award["wheel_bonus"] = r.award.wheel_bonus->net_xp;
  json doc = {{"assignment", to_json(r.assignment)},
              {"review", {{"answers", answers_to_json(r.review.answers)},
                          {"open_feedback", r.review.open_feedback}}},
              {"scored", r.scoring.score.has_value()},
              {"quality", r.scoring.score ? to_json(*r.scoring.score) : json(nullptr)},
              {"trigger", to_string(r.scoring.trigger)},
              {"flagged_for_instructor", r.scoring.flagged_for_instructor},
              {"award", award},
              {"new_badges", badges}};
  std::lock_guard lock(impl_->mu);
  return apply_condition_view(impl_->student(student), std::move(doc));
}

json Platform::assist_view(const ParticipantId& student, const AssistResult& r) const {
  json bonuses = json::array();
  for (const auto& b : r.bonuses) bonuses.push_back({{"cause", b.cause}, {"net_xp", b.net_xp}});
  json doc = {{"exchange", r.exchange.id},
              {"review", r.exchange.review.value},
              {"strengths", r.exchange.response.strengths},
              {"suggestions", r.exchange.response.suggestions},
              {"bonuses", bonuses}};
  std::lock_guard lock(impl_->mu);
  return apply_condition_view(impl_->student(student), std::move(doc));
}

json Platform::rulebook_view(const ParticipantId& viewer) const {
  std::lock_guard lock(impl_->mu);
  if (impl_->is_instructor(viewer)) return {{"rulebook", to_json(cfg_.rules)}};
  return apply_condition_view(impl_->student(viewer), {{"rulebook", to_json(cfg_.rules)}});
}

const Participant& Platform::participant(const ParticipantId& id) const {
  std::lock_guard lock(impl_->mu);
  auto it = impl_->participants.find(id);
  if (it == impl_->participants.end()) throw Error(Errc::not_found, "no such participant");
  return it->second;
}

std::optional<SessionInfo> Platform::session_info(const std::string& session_id) const {
  std::lock_guard lock(impl_->mu);
  auto it = impl_->sessions.find(session_id);
  if (it == impl_->sessions.end()) return std::nullopt;
  return it->second.info;
}

std::vector<std::string> Platform::sessions_of(const CourseId& course) const {
  std::lock_guard lock(impl_->mu);
  return impl_->course(course).sessions;
}

std::optional<Review> Platform::review(const AssignmentId& assignment) const {
  std::lock_guard lock(impl_->mu);
  auto it = impl_->reviews.find(assignment);
  if (it == impl_->reviews.end()) return std::nullopt;
  return it->second;
}

std::vector<Participant> Platform::students(const CourseId& course) const {
  std::lock_guard lock(impl_->mu);
  std::vector<Participant> out;
  for (const auto& id : impl_->course(course).members) {
    const auto& p = impl_->participants.at(id);
    if (p.role == Role::student) out.push_back(p);
  }
  return out;
}

const Questionnaire& Platform::questionnaire(const QuestionnaireId& id) const {
  std::lock_guard lock(impl_->mu);
  auto it = impl_->questionnaires.find(id);
  if (it == impl_->questionnaires.end()) throw Error(Errc::not_found, "no such questionnaire");
  return it->second;
}

ExperimentDataset Platform::export_observations(const ParticipantId& actor, const CourseId& course_id) const {
  std::lock_guard lock(impl_->mu);
  impl_->require_instructor(actor);
  const auto& course = impl_->course(course_id);
  ExperimentDataset ds;
  for (const auto& id : course.members) {
    const auto& p = impl_->participants.at(id);
    if (p.role != Role::student || !p.condition) continue;
    for (const auto& sid : course.sessions) {
      const auto& s = impl_->sessions.at(sid);
      const int k = s.info.session.index();
      if (!s.alloc || k > 2 || !s.alloc->has_reviewer(id)) continue;
      const int given = s.alloc->submitted_count(id, Obligation::mandatory) +
                        s.alloc->submitted_count(id, Obligation::optional);
      ds.add({id.value, *p.condition, k, std::string(measures::reviews_given),
              static_cast<double>(given)});
      std::array<double, 4> sum{};
      int scored = 0;
      for (const auto& a : s.alloc->assignments()) {
        if (a.reviewer != id || a.status != ReviewStatus::submitted) continue;
        const auto& q = impl_->reviews.at(a.id).quality;
        if (!q) continue;
        sum[0] += q->total();
        sum[1] += q->clarity();
        sum[2] += q->relevance();
        sum[3] += q->specificity();
        ++scored;
      }
      if (scored == 0) continue;
      const std::array<std::string_view, 4> names = {measures::quality_total, measures::clarity,
                                                     measures::relevance, measures::specificity};
      for (std::size_t i = 0; i < 4; ++i) {
        ds.add({id.value, *p.condition, k, std::string(names[i]), sum[i] / scored});
      }
    }
  }
  return ds;
}

// Re-executes one recorded event and checks that it reproduces its outcome.
void Platform::apply(const EventRecord& e) {
  const ParticipantId actor(e.actor);
  const auto& d = e.data;
  auto expect = [&](const std::string& got) {
    if (d.contains("result") && d["result"].get<std::string>() != got) {
      throw std::runtime_error(fmt::format("replay diverged at event {} ({}): expected {}, got {}",
                                           e.seq, e.type, d["result"].get<std::string>(), got));
    }
  };
  if (e.type == "create_course") {
    expect(create_course(actor, d.at("name").get<std::string>(), e.at).value);
  } else if (e.type == "add_participant") {
    add_participant(actor, CourseId(d.at("course").get<std::string>()), participant_from_json(d.at("participant")),
                             e.at);
  } else if (e.type == "randomize") {
    const auto got = randomize_conditions(actor, CourseId(d.at("course").get<std::string>()),
                                                   d.at("seed").get<std::uint64_t>(), e.at);
    for (const auto& [id, c] : got) {
      if (d.at("result").at(id.value) != to_string(c)) {
        throw std::runtime_error(fmt::format("replay diverged at event {} (randomize)", e.seq));
      }
    }
  } else if (e.type == "create_questionnaire") {
    expect(create_questionnaire(actor, questionnaire_from_json(d.at("questionnaire")), e.at)
               .value);
  } else if (e.type == "create_session") {
    expect(create_session(actor, CourseId(d.at("course").get<std::string>()), d.at("index").get<int>(),
                                   parse_date(d.at("day_d").get<std::string>()),
                                   QuestionnaireId(d.at("questionnaire").get<std::string>()), e.at));
  } else if (e.type == "add_deliverable") {
    expect(add_deliverable(actor, d.at("session").get<std::string>(), ParticipantId(d.at("owner").get<std::string>()),
                                d.at("artifact_uri").get<std::string>(),
                                parse_deliverable_kind(d.at("kind").get<std::string>()), e.at)
               .value);
  } else if (e.type == "allocate") {
    allocate(actor, d.at("session").get<std::string>(), e.at);
  } else if (e.type == "request_optional") {
    const auto a = request_optional(actor, d.at("session").get<std::string>(), e.at);
    expect(a ? a->id.value : "");
  } else if (e.type == "submit_review") {
    ScriptProvider script(d.at("provider_log"));
    OverrideGuard guard(impl_->override_provider, &script);
    const auto r = submit_review(actor, AssignmentId(d.at("assignment").get<std::string>()),
                                 answers_from_json(d.at("answers")), e.at);
    const json quality = r.scoring.score ? to_json(*r.scoring.score) : json(nullptr);
    if (d.contains("quality") && d["quality"] != quality) {
      throw std::runtime_error(fmt::format("replay diverged at event {} (submit_review)", e.seq));
    }
  } else if (e.type == "assist") {
    ScriptProvider script(d.at("provider_log"));
    OverrideGuard guard(impl_->override_provider, &script);
    expect(assist(actor, AssignmentId(d.at("assignment").get<std::string>()), d.at("draft").get<std::string>(), e.at).exchange.id);
  } else if (e.type == "spin") {
    expect(spin_wheel(actor, e.at).id);
  } else if (e.type == "redeem") {
    expect(redeem(actor, d.at("reward").get<std::string>(), e.at).id);
  } else if (e.type == "poke") {
    expect(poke(actor, AssignmentId(d.at("assignment").get<std::string>()), e.at).id);
  } else if (e.type == "clarification") {
    post_clarification(actor, AssignmentId(d.at("review").get<std::string>()), d.at("text").get<std::string>(), e.at);
  } else {
    throw std::runtime_error(fmt::format("unknown event type '{}'", e.type));
  }
}

std::unique_ptr<Platform> replay_platform(const PlatformConfig& cfg, const std::vector<EventRecord>& events) {
  auto platform = std::make_unique<Platform>(cfg, std::make_shared<MemoryEventStore>(),
                                             std::make_unique<MockProvider>());
  replay_into(*platform, events);
  return platform;
}

}  // namespace peerfb
