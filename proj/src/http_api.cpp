#include "peerfb/http_api.hpp"

#include <regex>
#include <sstream>

#include <fmt/format.h>
#include <httplib.h>
#include <openssl/rand.h>

#include "peerfb/json_io.hpp"

namespace peerfb {

using nlohmann::json;

int http_status(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return 400;
    case Errc::not_found: return 404;
    case Errc::conflict: return 409;
    case Errc::forbidden: return 403;
    case Errc::precondition_failed: return 412;
    case Errc::unavailable: return 503;
  }
  return 500;
}

namespace {

struct Call {
  const ApiRequest& req;
  ParticipantId me;
  std::smatch match;
  Timestamp now;

  json body() const {
    if (req.body.empty()) return json::object();
    json j = json::parse(req.body);
    if (!j.is_object()) throw Error(Errc::invalid_argument, "request body must be an object");
    return j;
  }
  std::string arg(int i) const { return match[i].str(); }
};

using Handler = std::function<ApiResponse(Call&)>;

struct Route {
  std::string method;
  std::regex pattern;
  Handler handler;
  bool needs_auth = true;
};

ApiResponse ok(const json& j, int status = 200) { return {status, "application/json", j.dump()}; }

ApiResponse fail(int status, std::string_view message) {
  return {status, "application/json", json{{"error", message}}.dump()};
}

std::string random_token() {
  unsigned char bytes[24];
  if (RAND_bytes(bytes, sizeof bytes) != 1) throw Error(Errc::unavailable, "no randomness for tokens");
  std::string out;
  for (unsigned char b : bytes) out += fmt::format("{:02x}", b);
  return out;
}

template <class T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(Errc::invalid_argument, fmt::format("missing field '{}'", key));
  return j.at(key).get<T>();
}

}  // namespace

struct ApiServer::Impl {
  Platform& platform;
  ApiOptions options;
  std::mutex token_mu;
  std::map<std::string, ParticipantId> tokens;
  std::vector<Route> routes;
  httplib::Server server;

  Impl(Platform& p, ApiOptions o) : platform(p), options(std::move(o)) {}

  std::optional<ParticipantId> who(const std::string& token) {
    if (token.empty()) return std::nullopt;
    if (!options.admin_token.empty() && token == options.admin_token) return Platform::kAdmin;
    std::lock_guard lock(token_mu);
    auto it = tokens.find(token);
    if (it == tokens.end()) return std::nullopt;
    return it->second;
  }

  std::string issue(const ParticipantId& id) {
    platform.participant(id);
    std::string token = random_token();
    std::lock_guard lock(token_mu);
    tokens[token] = id;
    return token;
  }

  void add(std::string method, const std::string& pattern, Handler h, bool auth = true) {
    routes.push_back({std::move(method), std::regex(pattern), std::move(h), auth});
  }

  void register_routes();

  ApiResponse dispatch(const ApiRequest& req) {
    bool path_known = false;
    for (const auto& r : routes) {
      std::smatch m;
      if (!std::regex_match(req.path, m, r.pattern)) continue;
      path_known = true;
      if (r.method != req.method) continue;
      Call call{req, ParticipantId{}, m, options.clock()};
      if (r.needs_auth) {
        auto id = who(req.bearer_token);
        if (!id) return fail(401, "authentication required");
        call.me = *id;
      }
      try {
        return r.handler(call);
      } catch (const Error& e) {
        return fail(http_status(e.code()), e.what());
      } catch (const json::exception& e) {
        return fail(400, fmt::format("bad request body: {}", e.what()));
      } catch (const std::exception& e) {
        return fail(500, e.what());
      }
    }
    return path_known ? fail(405, "method not allowed") : fail(404, "no such endpoint");
  }
};

void ApiServer::Impl::register_routes() {
  Platform& p = platform;

  add("POST", "/courses", [&p](Call& c) {
    const auto id = p.create_course(c.me, required<std::string>(c.body(), "name"), c.now);
    return ok({{"id", id.value}}, 201);
  });
  add("POST", "/courses/([^/]+)/participants", [this, &p](Call& c) {
    Participant part = participant_from_json(c.body());
    p.add_participant(c.me, CourseId(c.arg(1)), part, c.now);
    return ok({{"participant", to_json(p.participant(part.id))}, {"token", issue(part.id)}}, 201);
  });
  add("POST", "/admin/tokens", [this, &p](Call& c) {
    const ParticipantId id(required<std::string>(c.body(), "participant"));
    if (c.me != Platform::kAdmin && p.participant(c.me).role != Role::instructor) {
      throw Error(Errc::forbidden, "instructor role required");
    }
    return ok({{"participant", id.value}, {"token", issue(id)}}, 201);
  });
  add("POST", "/courses/([^/]+)/randomize", [&p](Call& c) {
    const auto seed = c.body().value("seed", std::uint64_t{0});
    json out = json::object();
    for (const auto& [id, cond] : p.randomize_conditions(c.me, CourseId(c.arg(1)), seed, c.now)) {
      out[id.value] = to_string(cond);
    }
    return ok({{"conditions", out}});
  });
  add("POST", "/questionnaires", [&p](Call& c) {
    const auto id = p.create_questionnaire(c.me, questionnaire_from_json(c.body()), c.now);
    return ok({{"id", id.value}, {"questionnaire", to_json(p.questionnaire(id))}}, 201);
  });
  add("GET", "/questionnaires/([^/]+)", [&p](Call& c) {
    return ok(to_json(p.questionnaire(QuestionnaireId(c.arg(1)))));
  });
  add("POST", "/courses/([^/]+)/sessions", [&p](Call& c) {
    const json b = c.body();
    const auto id = p.create_session(c.me, CourseId(c.arg(1)), required<int>(b, "index"),
                                     parse_date(required<std::string>(b, "day_d")),
                                     QuestionnaireId(required<std::string>(b, "questionnaire")), c.now);
    return ok({{"id", id}}, 201);
  });
  add("POST", "/sessions/([^/]+)/deliverables", [&p](Call& c) {
    const json b = c.body();
    const auto id = p.add_deliverable(c.me, c.arg(1), ParticipantId(required<std::string>(b, "owner")),
                                      b.value("artifact_uri", ""),
                                      parse_deliverable_kind(b.value("kind", "presentation")), c.now);
    return ok({{"id", id.value}}, 201);
  });
  add("POST", "/sessions/([^/]+)/allocate", [&p](Call& c) {
    const auto plan = p.allocate(c.me, c.arg(1), c.now);
    json list = json::array();
    for (const auto& a : plan.assignments) {
      json j = to_json(a);
      j["reviewer"] = a.reviewer.value;
      list.push_back(std::move(j));
    }
    return ok({{"session", c.arg(1)}, {"assignments", list}});
  });
  add("POST", "/sessions/([^/]+)/optional", [&p](Call& c) {
    const auto a = p.request_optional(c.me, c.arg(1), c.now);
    return ok({{"assignment", a ? to_json(*a) : json(nullptr)}});
  });
  add("GET", "/me", [&p](Call& c) {
    if (c.me == Platform::kAdmin) return ok({{"id", c.me.value}, {"role", "instructor"}});
    const auto& who = p.participant(c.me);
    json doc = {{"id", who.id.value}, {"role", to_string(who.role)}, {"display_alias", who.display_alias}};
    if (who.role == Role::student) {
      const auto policy = ConditionPolicy::for_condition(who.condition.value_or(Condition::treatment));
      doc["features"] = {{"assistant", policy.assistant_enabled},
                         {"wheel", policy.wheel_enabled},
                         {"store", policy.store_enabled},
                         {"leaderboard", policy.leaderboard_visible}};
      return ok(apply_condition_view(who, std::move(doc)));
    }
    return ok(doc);
  });
  add("GET", "/me/assignments", [&p](Call& c) { return ok(p.assignments_view(c.me)); });
  add("POST", "/assignments/([^/]+)/review", [&p](Call& c) {
    const json b = c.body();
    const auto r = p.submit_review(c.me, AssignmentId(c.arg(1)), answers_from_json(b.at("answers")), c.now);
    return ok(p.submit_view(c.me, r));
  });
  add("POST", "/reviews/([^/]+)/assist", [&p](Call& c) {
    const auto r = p.assist(c.me, AssignmentId(c.arg(1)), c.body().value("draft", ""), c.now);
    return ok(p.assist_view(c.me, r));
  });
  add("GET", "/me/gamification", [&p](Call& c) { return ok(p.gamification_view(c.me, c.me)); });
  add("GET", "/students/([^/]+)/gamification", [&p](Call& c) {
    return ok(p.gamification_view(c.me, ParticipantId(c.arg(1))));
  });
  add("POST", "/me/wheel/spin", [&p](Call& c) {
    const Spin s = p.spin_wheel(c.me, c.now);
    return ok({{"spin", to_json(s)}});
  });
  add("POST", "/me/store/redeem", [&p](Call& c) {
    const Purchase pu = p.redeem(c.me, required<std::string>(c.body(), "reward"), c.now);
    return ok({{"purchase", to_json(pu)}, {"balance", p.ledger().balance(c.me)}});
  });
  add("GET", "/leaderboard", [&p](Call& c) { return ok(p.leaderboard_view(c.me)); });
  add("POST", "/pokes", [&p](Call& c) {
    const json b = c.body();
    const Poke k = b.contains("assignment")
                       ? p.poke(c.me, AssignmentId(b["assignment"].get<std::string>()), c.now)
                       : p.poke_participant(c.me, ParticipantId(required<std::string>(b, "target")), c.now);
    return ok({{"id", k.id}, {"assignment", k.assignment.value}, {"sent_at", format_timestamp(k.sent_at)}},
              201);
  });
  add("POST", "/reviews/([^/]+)/clarifications", [&p](Call& c) {
    const AssignmentId review(c.arg(1));
    p.post_clarification(c.me, review, required<std::string>(c.body(), "text"), c.now);
    return ok(p.clarifications_view(c.me, review), 201);
  });
  add("GET", "/reviews/([^/]+)/clarifications", [&p](Call& c) {
    return ok(p.clarifications_view(c.me, AssignmentId(c.arg(1))));
  });
  add("GET", "/me/feedback", [&p](Call& c) { return ok(p.received_feedback_view(c.me, c.now)); });
  add("GET", "/me/notifications", [&p](Call& c) { return ok(p.notifications_view(c.me)); });
  add("GET", "/rulebook", [&p](Call& c) { return ok(p.rulebook_view(c.me)); });
  add("GET", "/admin/experiment/export", [&p](Call& c) {
    auto it = c.req.query.find("course");
    if (it == c.req.query.end()) throw Error(Errc::invalid_argument, "missing query parameter 'course'");
    std::ostringstream out;
    export_observations(p.export_observations(c.me, CourseId(it->second)), out);
    return ApiResponse{200, "text/csv", out.str()};
  });
  add("GET", "/admin/events", [&p](Call& c) {
    if (c.me != Platform::kAdmin && p.participant(c.me).role != Role::instructor) {
      throw Error(Errc::forbidden, "instructor role required");
    }
    return ApiResponse{200, "application/x-ndjson", serialize_events(p.events())};
  });
  add("GET", "/health", [](Call&) { return ok({{"status", "ok"}}); }, false);
}

ApiServer::ApiServer(Platform& platform, ApiOptions options)
    : impl_(std::make_unique<Impl>(platform, std::move(options))) {
  impl_->register_routes();
  auto bridge = [this](const httplib::Request& hreq, httplib::Response& hres) {
    ApiRequest req;
    req.method = hreq.method;
    req.path = hreq.path;
    req.body = hreq.body;
    const std::string auth = hreq.get_header_value("Authorization");
    if (auth.rfind("Bearer ", 0) == 0) req.bearer_token = auth.substr(7);
    for (const auto& [k, v] : hreq.params) req.query.emplace(k, v);
    const ApiResponse res = handle(req);
    hres.status = res.status;
    hres.set_content(res.body, res.content_type);
  };
  impl_->server.Get(".*", bridge);
  impl_->server.Post(".*", bridge);
}

ApiServer::~ApiServer() { stop(); }

ApiResponse ApiServer::handle(const ApiRequest& request) { return impl_->dispatch(request); }

std::string ApiServer::issue_token(const ParticipantId& participant) {
  if (participant == Platform::kAdmin) {
    std::string token = random_token();
    std::lock_guard lock(impl_->token_mu);
    impl_->tokens[token] = participant;
    return token;
  }
  return impl_->issue(participant);
}

int ApiServer::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool ApiServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

void ApiServer::serve() { impl_->server.listen_after_bind(); }

void ApiServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

}  // namespace peerfb
