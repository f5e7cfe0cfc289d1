#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include <fmt/format.h>

#include "peerfb/service.hpp"

using namespace peerfb;
using namespace std::chrono;
using nlohmann::json;

namespace {

const Date kDayD = parse_date("2024-03-04");
const Timestamp kSetup = start_of_day(kDayD);
const Timestamp kReviewDay = start_of_day(kDayD + days{2}) + hours{10};
const Timestamp kResultsDay = start_of_day(kDayD + days{5}) + hours{9};

const std::string kGoodText =
    "The slides are clear and well structured. For example, slide 3 explains the design "
    "with a good diagram. The delivery could be slower in the demo section.";

PlatformConfig small_config() {
  PlatformConfig cfg;
  cfg.allocation.reviews_per_deliverable = 2;
  cfg.allocation.optional_cap_per_session = 2;
  cfg.allocation.rng_seed = 11;
  cfg.wheel_seed = 5;
  cfg.rules.rewards.push_back({"sticker", "Sticker", 10, 5, 1});
  return cfg;
}

struct Cohort {
  std::unique_ptr<Platform> platform;
  CourseId course;
  std::string session;
  std::vector<ParticipantId> students;
  ParticipantId teacher{"teacher"};
  std::map<ParticipantId, Condition> conditions;

  explicit Cohort(PlatformConfig cfg = small_config(), std::shared_ptr<EventStore> store = nullptr,
                  int n = 6) {
    platform = std::make_unique<Platform>(cfg, std::move(store), std::make_unique<MockProvider>());
    auto& p = *platform;
    course = p.create_course(Platform::kAdmin, "Software Engineering", kSetup);
    p.add_participant(Platform::kAdmin, course, {teacher, Role::instructor, "", std::nullopt}, kSetup);
    for (int i = 1; i <= n; ++i) {
      ParticipantId id(fmt::format("s{}", i));
      p.add_participant(teacher, course, {id, Role::student, fmt::format("Falcon{}", i), std::nullopt},
                        kSetup);
      students.push_back(id);
    }
    conditions = p.randomize_conditions(teacher, course, 7, kSetup);
    Questionnaire q;
    q.title = "Presentation review";
    q.questions = {{"overall", QuestionKind::rating, "Overall rating", {}, 5},
                   {"comments", QuestionKind::open_ended, "What worked and what could improve?", {}, 0}};
    const auto qid = p.create_questionnaire(teacher, q, kSetup);
    session = p.create_session(teacher, course, 1, kDayD, qid, kSetup);
    for (const auto& s : students) {
      p.add_deliverable(teacher, session, s, "slides://" + s.value, DeliverableKind::presentation, kSetup);
    }
    p.allocate(teacher, session, kSetup);
  }

  ParticipantId first(Condition c) const {
    for (const auto& s : students) {
      if (conditions.at(s) == c) return s;
    }
    throw std::logic_error("no student in condition");
  }

  std::map<std::string, AnswerValue> answers(const std::string& text = kGoodText) const {
    return {{"overall", 4}, {"comments", text}};
  }

  void submit_all(const ParticipantId& s, Timestamp at, const std::string& text = kGoodText) {
    for (const auto& a : platform->my_assignments(s)) {
      if (a.status == ReviewStatus::pending) platform->submit_review(s, a.id, answers(text), at);
    }
  }
};

bool has_any_key(const json& doc, const std::vector<std::string>& keys) {
  if (doc.is_object()) {
    for (const auto& [k, v] : doc.items()) {
      if (std::find(keys.begin(), keys.end(), k) != keys.end()) return true;
      if (has_any_key(v, keys)) return true;
    }
  } else if (doc.is_array()) {
    for (const auto& v : doc) {
      if (has_any_key(v, keys)) return true;
    }
  }
  return false;
}

template <class F>
Errc error_code(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::invalid_argument;
}

}  // namespace

TEST_CASE("randomization splits the cohort evenly") {
  Cohort c;
  int treatment = 0;
  for (const auto& [id, cond] : c.conditions) treatment += cond == Condition::treatment;
  CHECK(treatment == 3);
  CHECK(c.conditions.size() == 6);
}

TEST_CASE("instructor operations are role checked") {
  Cohort c;
  const auto s = c.students[0];
  CHECK(error_code([&] { c.platform->create_course(s, "x", kSetup); }) == Errc::forbidden);
  CHECK(error_code([&] { c.platform->allocate(s, c.session, kSetup); }) == Errc::forbidden);
  CHECK(error_code([&] { c.platform->export_observations(s, c.course); }) == Errc::forbidden);
  CHECK(error_code([&] { c.platform->allocate(c.teacher, c.session, kSetup); }) == Errc::conflict);
}

TEST_CASE("alias rules") {
  Cohort c;
  CHECK(error_code([&] {
          c.platform->add_participant(c.teacher, c.course,
                                      {ParticipantId("s9"), Role::student, "s9", std::nullopt}, kSetup);
        }) == Errc::invalid_argument);
  CHECK(error_code([&] {
          c.platform->add_participant(c.teacher, c.course,
                                      {ParticipantId("s9"), Role::student, "Falcon1", std::nullopt},
                                      kSetup);
        }) == Errc::conflict);
}

TEST_CASE("control students see no gamification but are tracked identically") {
  Cohort c;
  const auto t = c.first(Condition::treatment);
  const auto k = c.first(Condition::control);
  c.submit_all(t, kReviewDay);
  c.submit_all(k, kReviewDay);

  CHECK(c.platform->ledger().earned(t) == c.platform->ledger().earned(k));
  CHECK(c.platform->ledger().earned(k) > 0);
  CHECK(c.platform->engine().badges(t).size() == c.platform->engine().badges(k).size());

  const auto& keys = gamification_keys();
  const std::vector<json> control_docs = {
      c.platform->assignments_view(k), c.platform->gamification_view(k, k),
      c.platform->received_feedback_view(k, kResultsDay), c.platform->notifications_view(k),
      c.platform->rulebook_view(k)};
  for (const auto& doc : control_docs) CHECK_FALSE(has_any_key(doc, keys));

  CHECK(c.platform->gamification_view(t, t).contains("xp"));
  CHECK(c.platform->assignments_view(t).contains("countdown"));
  CHECK(c.platform->gamification_view(c.teacher, k).at("shadow") == true);

  CHECK(error_code([&] { c.platform->spin_wheel(k, kReviewDay); }) == Errc::forbidden);
  CHECK(error_code([&] { c.platform->redeem(k, "deadline-extension", kReviewDay); }) ==
        Errc::forbidden);
  CHECK(error_code([&] { c.platform->leaderboard_view(k); }) == Errc::forbidden);
  CHECK(error_code([&] { c.platform->gamification_view(t, k); }) == Errc::forbidden);
}

TEST_CASE("submit view strips the award for control students") {
  Cohort c;
  const auto k = c.first(Condition::control);
  const auto t = c.first(Condition::treatment);
  const auto ka = c.platform->my_assignments(k).front();
  const auto ta = c.platform->my_assignments(t).front();
  const auto kr = c.platform->submit_review(k, ka.id, c.answers(), kReviewDay);
  const auto tr = c.platform->submit_review(t, ta.id, c.answers(), kReviewDay);
  CHECK(kr.award.review.net_xp == tr.award.review.net_xp);
  const json kv = c.platform->submit_view(k, kr);
  const json tv = c.platform->submit_view(t, tr);
  CHECK_FALSE(has_any_key(kv, gamification_keys()));
  CHECK(tv.contains("award"));
  CHECK(kv.at("scored") == true);
  CHECK(kv.at("quality") == tv.at("quality"));
}

TEST_CASE("treatment leaderboard shows aliases of treatment students only") {
  Cohort c;
  const auto t = c.first(Condition::treatment);
  c.submit_all(t, kReviewDay);
  const json board = c.platform->leaderboard_view(t);
  const std::string dump = board.dump();
  for (const auto& s : c.students) CHECK(dump.find("\"" + s.value + "\"") == std::string::npos);
  CHECK(board.at("leaderboard").size() == 3);
  CHECK(board.at("leaderboard")[0].at("rank") == 1);
  const json admin = c.platform->leaderboard_view(c.teacher);
  CHECK(admin.at("leaderboard").size() == 6);
}

TEST_CASE("wheel requires finished mandatory reviews") {
  Cohort c;
  const auto t = c.first(Condition::treatment);
  CHECK(error_code([&] { c.platform->spin_wheel(t, kReviewDay); }) == Errc::precondition_failed);
  c.submit_all(t, kReviewDay);
  const Spin spin = c.platform->spin_wheel(t, kReviewDay);
  CHECK(spin.prize_xp >= 0);
  CHECK(spin.prize_xp <= 15);
  CHECK(error_code([&] { c.platform->spin_wheel(t, kReviewDay); }) == Errc::conflict);
  const auto opt = c.platform->request_optional(t, c.session, kReviewDay);
  REQUIRE(opt);
  const auto r = c.platform->submit_review(t, opt->id, c.answers(), kReviewDay);
  if (spin.prize_xp > 0) {
    REQUIRE(r.award.wheel_bonus);
    CHECK(r.award.wheel_bonus->base_xp == spin.prize_xp);
  }
  CHECK_FALSE(c.platform->engine().pending_spin(t));
}

TEST_CASE("received feedback is anonymous") {
  Cohort c;
  for (const auto& s : c.students) c.submit_all(s, kReviewDay);
  for (const auto& owner : c.students) {
    const json before = c.platform->received_feedback_view(owner, kReviewDay);
    CHECK(before.at("deliverables")[0].at("results_visible") == false);
    CHECK_FALSE(before.at("deliverables")[0].contains("reviews"));
    const json view = c.platform->received_feedback_view(owner, kResultsDay);
    const std::string dump = view.dump();
    for (const auto& other : c.students) {
      if (other == owner) continue;
      CHECK(dump.find("\"" + other.value + "\"") == std::string::npos);
      CHECK(dump.find(c.platform->participant(other).display_alias) == std::string::npos);
    }
    CHECK(dump.find("clarity") == std::string::npos);
    CHECK(view.at("deliverables")[0].at("reviews").size() == 2);
    CHECK(view.at("deliverables")[0].at("summary").at("overall").at("mean") == 4.0);
  }
}

TEST_CASE("poking a pending reviewer") {
  Cohort c;
  const auto owner = c.students[0];
  const json fb = c.platform->received_feedback_view(owner, kReviewDay);
  const auto pending = fb.at("deliverables")[0].at("pending_reviews");
  REQUIRE(pending.size() == 2);
  const AssignmentId target(pending[0].get<std::string>());
  const Poke p = c.platform->poke(owner, target, kReviewDay);
  const json notes = c.platform->notifications_view(p.target);
  REQUIRE(notes.at("notifications").size() == 1);
  const std::string text = notes.at("notifications")[0].at("text");
  CHECK(text.find(owner.value + " ") == std::string::npos);
  CHECK(text.find("Falcon") == std::string::npos);

  CHECK(error_code([&] { c.platform->poke(owner, target, kReviewDay + hours{1}); }) == Errc::conflict);
  CHECK_NOTHROW(c.platform->poke(owner, target, kReviewDay + hours{25}));
  CHECK(error_code([&] { c.platform->poke(c.students[1], target, kReviewDay); }) ==
        Errc::precondition_failed);

  c.platform->submit_review(p.target, target, c.answers(), kReviewDay + hours{26});
  CHECK(error_code([&] { c.platform->poke(owner, target, kReviewDay + hours{60}); }) ==
        Errc::precondition_failed);
}

TEST_CASE("clarification threads") {
  Cohort c;
  const auto reviewer = c.students[2];
  const auto a = c.platform->my_assignments(reviewer).front();
  c.platform->submit_review(reviewer, a.id, c.answers(), kReviewDay);
  const auto d_owner = [&] {
    for (const auto& s : c.students) {
      const json fb = c.platform->received_feedback_view(s, kResultsDay);
      for (const auto& r : fb.at("deliverables")[0].at("reviews")) {
        if (r.at("review") == a.id.value) return s;
      }
    }
    throw std::logic_error("owner not found");
  }();

  CHECK(error_code([&] { c.platform->post_clarification(d_owner, a.id, "What did you mean?", kReviewDay); }) ==
        Errc::precondition_failed);
  c.platform->post_clarification(d_owner, a.id, "Which slide did you mean?", kResultsDay);
  const auto thread = c.platform->post_clarification(reviewer, a.id, "Slide 3.", kResultsDay + hours{1});
  CHECK(thread.messages.size() == 2);
  CHECK(thread.messages[0].author == ThreadRole::reviewee);

  ParticipantId outsider;
  for (const auto& s : c.students) {
    if (s != reviewer && s != d_owner) outsider = s;
  }
  CHECK(error_code([&] { c.platform->post_clarification(outsider, a.id, "hi", kResultsDay); }) ==
        Errc::forbidden);
  CHECK(error_code([&] { c.platform->clarifications_view(outsider, a.id); }) == Errc::forbidden);

  const std::string dump = c.platform->clarifications_view(d_owner, a.id).dump();
  CHECK(dump.find(reviewer.value + "\"") == std::string::npos);
  CHECK(c.platform->notifications_view(reviewer).at("notifications").size() == 1);
}

TEST_CASE("assist awards each consult bonus once per scope") {
  Cohort c;
  const auto t = c.first(Condition::treatment);
  const auto as = c.platform->my_assignments(t);
  REQUIRE(as.size() == 2);
  const auto first = c.platform->assist(t, as[0].id, "good job", kReviewDay);
  CHECK(first.exchange.counted_for_first_use_bonus);
  CHECK(first.bonuses.size() == 1);
  CHECK_FALSE(first.exchange.response.suggestions.empty());
  const auto second = c.platform->assist(t, as[1].id, "good job", kReviewDay);
  CHECK(second.bonuses.empty());

  const auto low = c.platform->submit_review(t, as[0].id, c.answers("good job"), kReviewDay);
  REQUIRE(low.scoring.score);
  CHECK(low.scoring.trigger == Trigger::prompt_consult);
  const auto after = c.platform->assist(t, as[0].id, "good job", kReviewDay);
  CHECK(after.exchange.counted_for_low_score_bonus);
  CHECK(c.platform->assist(t, as[0].id, "good job", kReviewDay).bonuses.empty());
  CHECK_FALSE(has_any_key(c.platform->assist_view(c.first(Condition::control), after), gamification_keys()));
}

TEST_CASE("submissions outside the window and by others are rejected") {
  Cohort c;
  const auto s = c.students[0];
  const auto a = c.platform->my_assignments(s).front();
  CHECK(error_code([&] { c.platform->submit_review(c.students[1], a.id, c.answers(), kReviewDay); }) ==
        Errc::forbidden);
  CHECK(error_code([&] { c.platform->submit_review(s, a.id, c.answers(), kSetup); }) ==
        Errc::precondition_failed);
  CHECK(error_code([&] { c.platform->submit_review(s, a.id, {{"overall", 4}}, kReviewDay); }) ==
        Errc::invalid_argument);
  c.platform->submit_review(s, a.id, c.answers(), kReviewDay);
  CHECK(error_code([&] { c.platform->submit_review(s, a.id, c.answers(), kReviewDay); }) == Errc::conflict);
  const auto late = c.platform->my_assignments(s)[1];
  const auto r = c.platform->submit_review(s, late.id, c.answers(), start_of_day(kDayD + days{6}));
  CHECK(r.assignment.timeliness == Timeliness::late);
}

TEST_CASE("export reports per-session measures") {
  Cohort c;
  for (const auto& s : c.students) c.submit_all(s, kReviewDay);
  const auto extra = c.platform->request_optional(c.students[0], c.session, kReviewDay);
  REQUIRE(extra);
  c.platform->submit_review(c.students[0], extra->id, c.answers(""), kReviewDay);
  const auto ds = c.platform->export_observations(c.teacher, c.course);
  CHECK(ds.value("s1", 1, "reviews_given") == 3.0);
  CHECK(ds.value("s2", 1, "reviews_given") == 2.0);
  const auto s1_quality = ds.value("s1", 1, "quality_total");
  REQUIRE(s1_quality);
  CHECK(*s1_quality == *ds.value("s2", 1, "quality_total"));
  CHECK(ds.subjects().size() == 6);
}

TEST_CASE("event log replays to the same state") {
  auto store = std::make_shared<MemoryEventStore>();
  Cohort c(small_config(), store);
  for (const auto& s : c.students) c.submit_all(s, kReviewDay);
  const auto t = c.first(Condition::treatment);
  c.platform->spin_wheel(t, kReviewDay);
  c.platform->assist(t, c.platform->my_assignments(t)[0].id, "good job", kReviewDay);
  c.platform->redeem(t, "sticker", kReviewDay);

  const auto events = c.platform->events();
  const auto replayed = replay_platform(c.platform->config(), events);
  CHECK(replayed->ledger().serialize() == c.platform->ledger().serialize());
  CHECK(serialize_events(replayed->events()) == serialize_events(events));
  CHECK(replayed->export_observations(c.teacher, c.course) ==
        c.platform->export_observations(c.teacher, c.course));

  auto tampered = events;
  for (auto& e : tampered) {
    if (e.type == "spin") e.data["result"] = "spin-999";
  }
  CHECK_THROWS_WITH_AS(replay_platform(c.platform->config(), tampered),
                       doctest::Contains("replay diverged"), std::runtime_error);
}

TEST_CASE("file event store survives a restart") {
  const auto dir = std::filesystem::temp_directory_path() / "peerfb_events_test";
  std::filesystem::remove_all(dir);
  const auto path = dir / "events.jsonl";
  std::string ledger;
  {
    Cohort c(small_config(), std::make_shared<FileEventStore>(path));
    for (const auto& s : c.students) c.submit_all(s, kReviewDay);
    ledger = c.platform->ledger().serialize();
  }
  Platform restarted(small_config(), std::make_shared<FileEventStore>(path),
                     std::make_unique<MockProvider>());
  CHECK(restarted.ledger().serialize() == ledger);
  CHECK(restarted.students(CourseId("c1")).size() == 6);
  std::filesystem::remove_all(dir);
}

TEST_CASE("platform config round trip") {
  PlatformConfig cfg = small_config();
  cfg.allocation.max_reviews_per_student_total = 9;
  cfg.poke_cooldown = hours{12};
  cfg.provider.backend = "remote";
  cfg.provider.remote.model = "m";
  const auto back = platform_config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
  CHECK(back.poke_cooldown == hours{12});
  CHECK(error_code([] {
          ProviderSettings s;
          s.backend = "nope";
          make_provider(s);
        }) == Errc::invalid_argument);
}
