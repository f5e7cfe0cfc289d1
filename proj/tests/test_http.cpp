#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "peerfb/http_api.hpp"

using namespace peerfb;
using namespace std::chrono;
using nlohmann::json;

namespace {

const Date kDayD = parse_date("2024-03-04");

struct Clock {
  Timestamp now = start_of_day(kDayD);
};

struct Rest {
  Clock clock;
  std::string admin = "root-token";
  Platform platform;
  ApiServer api;
  std::map<std::string, std::string> tokens;  // participant -> token
  std::string course;
  std::string session;

  Rest()
      : platform(config(), nullptr, std::make_unique<MockProvider>()),
        api(platform, ApiOptions{admin, [this] { return clock.now; }}) {}

  static PlatformConfig config() {
    PlatformConfig cfg;
    cfg.allocation.reviews_per_deliverable = 2;
    cfg.allocation.rng_seed = 3;
    return cfg;
  }

  ApiResponse call(const std::string& method, const std::string& path, const std::string& token,
                   const json& body = nullptr, std::map<std::string, std::string> query = {}) {
    return api.handle({method, path, body.is_null() ? "" : body.dump(), token, std::move(query)});
  }

  json ok(const std::string& method, const std::string& path, const std::string& token,
          const json& body = nullptr) {
    const auto r = call(method, path, token, body);
    INFO(method << " " << path << " -> " << r.status << " " << r.body);
    REQUIRE(r.status < 300);
    return json::parse(r.body);
  }

  void setup(int n = 6) {
    course = ok("POST", "/courses", admin, {{"name", "SE"}})["id"];
    tokens["teacher"] = ok("POST", fmt::format("/courses/{}/participants", course), admin,
                           {{"id", "teacher"}, {"role", "instructor"}})["token"];
    for (int i = 1; i <= n; ++i) {
      const std::string id = fmt::format("u{}", i);
      tokens[id] = ok("POST", fmt::format("/courses/{}/participants", course), tokens["teacher"],
                      {{"id", id}, {"display_alias", fmt::format("Otter{}", i)}})["token"];
    }
    ok("POST", fmt::format("/courses/{}/randomize", course), tokens["teacher"], {{"seed", 2}});
    const json q = {{"title", "Review"},
                    {"questions",
                     {{{"id", "grade"}, {"kind", "likert"}, {"prompt", "Agree?"}, {"scale_points", 5}},
                      {{"id", "pick"}, {"kind", "multiple_choice"}, {"prompt", "Best part"},
                       {"options", {"slides", "demo"}}},
                      {{"id", "score"}, {"kind", "rating"}, {"prompt", "Rate"}, {"scale_points", 10}},
                      {{"id", "text"}, {"kind", "open_ended"}, {"prompt", "Comments"}}}}};
    const json created = ok("POST", "/questionnaires", tokens["teacher"], q);
    session = ok("POST", fmt::format("/courses/{}/sessions", course), tokens["teacher"],
                 {{"index", 1}, {"day_d", "2024-03-04"}, {"questionnaire", created["id"]}})["id"];
    for (int i = 1; i <= n; ++i) {
      ok("POST", fmt::format("/sessions/{}/deliverables", session), tokens["teacher"],
         {{"owner", fmt::format("u{}", i)}, {"artifact_uri", fmt::format("file://deck{}.pdf", i)}});
    }
    ok("POST", fmt::format("/sessions/{}/allocate", session), tokens["teacher"]);
  }

  std::vector<std::string> students() const {
    std::vector<std::string> out;
    for (const auto& [id, t] : tokens) {
      if (id != "teacher") out.push_back(id);
    }
    return out;
  }

  json answers(const std::string& text) const {
    return {{"answers", {{"grade", 4}, {"pick", 1}, {"score", 7}, {"text", text}}}};
  }
};

void collect_strings(const json& j, std::vector<std::string>& out) {
  if (j.is_string()) {
    out.push_back(j.get<std::string>());
  } else if (j.is_structured()) {
    for (const auto& [k, v] : j.items()) {
      out.push_back(k);
      collect_strings(v, out);
    }
  }
}

bool has_any_key(const json& doc, const std::vector<std::string>& keys) {
  if (doc.is_object()) {
    for (const auto& [k, v] : doc.items()) {
      if (std::find(keys.begin(), keys.end(), k) != keys.end() || has_any_key(v, keys)) return true;
    }
  } else if (doc.is_array()) {
    for (const auto& v : doc) {
      if (has_any_key(v, keys)) return true;
    }
  }
  return false;
}

const std::string kText =
    "The slides were clear and well organized. For example, the chart on slide 4 explained the "
    "results. The delivery could be slower.";

}  // namespace

TEST_CASE("status mapping") {
  CHECK(http_status(Errc::invalid_argument) == 400);
  CHECK(http_status(Errc::not_found) == 404);
  CHECK(http_status(Errc::conflict) == 409);
  CHECK(http_status(Errc::forbidden) == 403);
  CHECK(http_status(Errc::precondition_failed) == 412);
  CHECK(http_status(Errc::unavailable) == 503);
}

TEST_CASE("authentication and routing") {
  Rest r;
  CHECK(r.call("POST", "/courses", "", {{"name", "x"}}).status == 401);
  CHECK(r.call("POST", "/courses", "nope", {{"name", "x"}}).status == 401);
  CHECK(r.call("GET", "/nowhere", r.admin).status == 404);
  CHECK(r.call("GET", "/courses", r.admin).status == 405);
  CHECK(r.call("POST", "/courses", r.admin, "not an object").status == 400);
  CHECK(r.call("GET", "/health", "").status == 200);
  r.setup();
  CHECK(r.call("POST", "/courses", r.tokens["u1"], {{"name", "x"}}).status == 403);
}

TEST_CASE("review round trip over the api") {
  Rest r;
  r.setup();
  r.clock.now = start_of_day(kDayD + days{2});
  const auto me = r.ok("GET", "/me/assignments", r.tokens["u1"]);
  REQUIRE(me["assignments"].size() == 2);
  const std::string aid = me["assignments"][0]["id"];
  const auto q = r.ok("GET", "/questionnaires/" + me["assignments"][0]["questionnaire"].get<std::string>(),
                      r.tokens["u1"]);
  CHECK(q["questions"].size() == 4);
  CHECK(q["questions"][1]["options"].size() == 2);

  const auto bad = r.call("POST", fmt::format("/assignments/{}/review", aid), r.tokens["u1"],
                          {{"answers", {{"grade", 9}}}});
  CHECK(bad.status == 400);
  const auto assist = r.ok("POST", fmt::format("/reviews/{}/assist", aid), r.tokens["u1"], {{"draft", "ok"}});
  CHECK(assist.contains("suggestions"));
  const auto sub = r.ok("POST", fmt::format("/assignments/{}/review", aid), r.tokens["u1"], r.answers(kText));
  CHECK(sub["assignment"]["status"] == "submitted");
  CHECK(sub["trigger"] == "none");
  CHECK(r.call("POST", fmt::format("/assignments/{}/review", aid), r.tokens["u1"], r.answers(kText)).status ==
        409);
  CHECK(r.call("POST", fmt::format("/assignments/{}/review", aid), r.tokens["u2"], r.answers(kText)).status ==
        403);

  const auto low = r.ok("POST", fmt::format("/assignments/{}/review", me["assignments"][1]["id"].get<std::string>()),
                        r.tokens["u1"], r.answers("nice"));
  CHECK(low["trigger"] == "prompt_consult");

  const auto csv = r.call("GET", "/admin/experiment/export", r.tokens["teacher"], nullptr, {{"course", r.course}});
  CHECK(csv.status == 200);
  CHECK(csv.content_type == "text/csv");
  CHECK(csv.body.rfind("subject,condition,session,measure,value", 0) == 0);
  CHECK(r.call("GET", "/admin/experiment/export", r.tokens["u1"], nullptr, {{"course", r.course}}).status == 403);
  const auto events = r.call("GET", "/admin/events", r.admin);
  CHECK(events.status == 200);
  CHECK(std::count(events.body.begin(), events.body.end(), '\n') == static_cast<long>(r.platform.events().size()));
}

TEST_CASE("student responses never expose other students or, for control, gamification") {
  Rest r;
  r.setup();
  const auto students = r.students();
  r.clock.now = start_of_day(kDayD + days{2});
  for (std::size_t i = 0; i < students.size(); ++i) {
    const auto& s = students[i];
    const auto me = r.ok("GET", "/me/assignments", r.tokens[s]);
    for (const auto& a : me["assignments"]) {
      if (i % 3 == 2) continue;  // leave some pending so pokes are possible
      r.ok("POST", fmt::format("/assignments/{}/review", a["id"].get<std::string>()), r.tokens[s],
           r.answers(i % 2 ? kText : "fine"));
    }
  }
  std::vector<json> responses_by_student;
  std::map<std::string, std::vector<json>> seen;
  r.clock.now = start_of_day(kDayD + days{5}) + hours{1};
  for (const auto& s : students) {
    const auto fb = r.ok("GET", "/me/feedback", r.tokens[s]);
    seen[s].push_back(fb);
    for (const auto& pending : fb["deliverables"][0]["pending_reviews"]) {
      const auto res = r.call("POST", "/pokes", r.tokens[s], {{"assignment", pending}});
      CHECK(res.status == 201);
      seen[s].push_back(json::parse(res.body));
    }
    for (const auto& rev : fb["deliverables"][0]["reviews"]) {
      const auto path = fmt::format("/reviews/{}/clarifications", rev["review"].get<std::string>());
      const auto res = r.call("POST", path, r.tokens[s], {{"text", "Could you expand on that?"}});
      CHECK(res.status == 201);
      seen[s].push_back(json::parse(res.body));
    }
  }
  for (const auto& s : students) {
    for (const auto* path : {"/me", "/me/assignments", "/me/gamification", "/me/feedback",
                             "/me/notifications", "/leaderboard", "/rulebook"}) {
      const auto res = r.call("GET", path, r.tokens[s]);
      if (res.status == 200) seen[s].push_back(json::parse(res.body));
    }
    const auto spin = r.call("POST", "/me/wheel/spin", r.tokens[s]);
    if (spin.status == 200) seen[s].push_back(json::parse(spin.body));
  }

  int scanned = 0;
  for (const auto& [s, docs] : seen) {
    const auto& p = r.platform.participant(ParticipantId(s));
    for (const auto& doc : docs) {
      std::vector<std::string> strings;
      collect_strings(doc, strings);
      for (const auto& other : students) {
        if (other == s) continue;
        const auto& alias = r.platform.participant(ParticipantId(other)).display_alias;
        for (const auto& str : strings) {
          CHECK_MESSAGE(str != other, s << " saw " << other << " in " << doc.dump());
          // Aliases only appear on the treatment leaderboard, which has no reviews.
          if (!doc.contains("leaderboard")) CHECK(str.find(alias) == std::string::npos);
        }
      }
      if (p.condition == Condition::control) {
        CHECK_MESSAGE(!has_any_key(doc, gamification_keys()), doc.dump());
      }
      ++scanned;
    }
  }
  CHECK(scanned > 40);
}

TEST_CASE("served over http") {
  Rest r;
  r.setup(4);
  const int port = r.api.bind_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread t([&] { r.api.serve(); });
  httplib::Client client("127.0.0.1", port);
  httplib::Headers auth = {{"Authorization", "Bearer " + r.tokens["u1"]}};
  auto res = client.Get("/me/assignments", auth);
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["assignments"].size() == 2);
  auto unauth = client.Get("/me/assignments");
  REQUIRE(unauth);
  CHECK(unauth->status == 401);
  auto export_res = client.Get(fmt::format("/admin/experiment/export?course={}", r.course),
                               httplib::Headers{{"Authorization", "Bearer " + r.admin}});
  REQUIRE(export_res);
  CHECK(export_res->status == 200);
  r.api.stop();
  t.join();
}
