#include "peerfb/simharness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "peerfb/json_io.hpp"

namespace peerfb::sim {

using nlohmann::json;

namespace {

void require(bool ok, std::string_view what) {
  if (!ok) throw Error(Errc::invalid_argument, std::string(what));
}

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

double clamp01(double p) { return std::clamp(p, 0.0, 1.0); }

int draw_level(Rng& rng, double mean, double sd, int lo, int hi) {
  return std::clamp(static_cast<int>(std::lround(rng.normal(mean, sd))), lo, hi);
}

// Relevant statements without any detail marker.
const std::vector<std::string> kPlain = {
    "The slides were clear and easy to read",
    "The pace of the delivery felt a bit rushed",
    "The introduction could be shorter",
    "The conclusion was strong and tied the topic together",
    "The diagrams were helpful",
    "The demo needs more preparation",
    "Your voice was clear throughout the talk",
    "The structure of the content was well organized",
    "The transitions between sections could be smoother",
    "The examples were interesting and engaging",
};

// Relevant statements carrying a detail marker. {} takes a number.
const std::vector<std::string> kSpecific = {
    "For example, the diagram on slide {} explained the architecture well",
    "The part about testing could include a concrete case such as a failing input",
    "On slide {} the font is too small to read from the back",
    "When you explained the design, the comparison with the old version was very helpful",
    "In particular, the recap at the end was concise",
    "The demo would be better with a smaller input, for instance a list of {} items",
    "The timing table on slide {} was confusing because the units were missing",
    "Where you described the outline, the terminology could be defined first",
};

const std::vector<std::string> kFiller = {
    "Thanks for sharing your work with us",
    "I watched the whole session from the back row",
    "Overall it was a useful hour for me",
    "I learned a few new ideas from this one",
};

const std::vector<std::string> kVague = {
    "Some parts felt kind of long",
    "The ending was sort of abrupt",
};

std::vector<std::string> pick(const std::vector<std::string>& pool, int n, Rng& rng) {
  std::vector<std::string> copy = pool;
  rng.shuffle(std::span<std::string>(copy));
  copy.resize(static_cast<std::size_t>(n));
  return copy;
}

int count_for_band(int band) {
  static constexpr int kCounts[] = {0, 1, 2, 4};
  return kCounts[band];
}

}  // namespace

void AgentProfile::validate() const {
  require(is_probability(base_optional_propensity), "base_optional_propensity must be in [0,1]");
  require(incentive_sensitivity >= 0.0, "incentive_sensitivity must be >= 0");
  require(is_probability(consult_propensity), "consult_propensity must be in [0,1]");
  require(is_probability(on_time_rate), "on_time_rate must be in [0,1]");
  require(session2_fatigue >= 0.0, "session2_fatigue must be >= 0");
  require(quality_sd >= 0.0, "quality_sd must be >= 0");
}

AgentProfile ProfileDistribution::draw(Rng& rng) const {
  AgentProfile a = mean;
  auto jitter = [&](double v, double sd) { return sd > 0.0 ? rng.normal(v, sd) : v; };
  a.base_optional_propensity = clamp01(jitter(mean.base_optional_propensity, spread));
  a.incentive_sensitivity =
      mean.incentive_sensitivity == 0.0 ? 0.0 : std::max(0.0, jitter(mean.incentive_sensitivity, spread));
  a.consult_propensity = clamp01(jitter(mean.consult_propensity, spread));
  a.quality_base.clarity = std::clamp(jitter(mean.quality_base.clarity, quality_spread), 0.0, 3.0);
  a.quality_base.relevance = std::clamp(jitter(mean.quality_base.relevance, quality_spread), 0.0, 3.0);
  a.quality_base.specificity = std::clamp(jitter(mean.quality_base.specificity, quality_spread), 0.0, 3.0);
  return a;
}

void SimConfig::validate() const {
  require(n_students >= 4, "n_students must be at least 4");
  require(presenters_per_session >= 1 && presenters_per_session <= n_students,
          "presenters_per_session must be in 1..n_students");
  require(sessions == 1 || sessions == 2, "sessions must be 1 or 2");
  require(treatment_share > 0.0 && treatment_share < 1.0, "treatment_share must be in (0,1)");
  require(days_between_sessions >= 7, "days_between_sessions must be at least 7");
  require(profiles.spread >= 0.0 && profiles.quality_spread >= 0.0, "profile spreads must be >= 0");
  profiles.mean.validate();
  platform.rules.validate();
  parse_date(first_day_d);
}

json to_json(const AgentProfile& p) {
  return {{"base_optional_propensity", p.base_optional_propensity},
          {"incentive_sensitivity", p.incentive_sensitivity},
          {"consult_propensity", p.consult_propensity},
          {"quality_base",
           {{"clarity", p.quality_base.clarity},
            {"relevance", p.quality_base.relevance},
            {"specificity", p.quality_base.specificity}}},
          {"quality_sd", p.quality_sd},
          {"consult_quality_uplift", p.consult_quality_uplift},
          {"session2_fatigue", p.session2_fatigue},
          {"on_time_rate", p.on_time_rate}};
}

AgentProfile agent_profile_from_json(const json& j) {
  AgentProfile p;
  p.base_optional_propensity = j.value("base_optional_propensity", p.base_optional_propensity);
  p.incentive_sensitivity = j.value("incentive_sensitivity", p.incentive_sensitivity);
  p.consult_propensity = j.value("consult_propensity", p.consult_propensity);
  if (j.contains("quality_base")) {
    const auto& q = j["quality_base"];
    p.quality_base.clarity = q.value("clarity", p.quality_base.clarity);
    p.quality_base.relevance = q.value("relevance", p.quality_base.relevance);
    p.quality_base.specificity = q.value("specificity", p.quality_base.specificity);
  }
  p.quality_sd = j.value("quality_sd", p.quality_sd);
  p.consult_quality_uplift = j.value("consult_quality_uplift", p.consult_quality_uplift);
  p.session2_fatigue = j.value("session2_fatigue", p.session2_fatigue);
  p.on_time_rate = j.value("on_time_rate", p.on_time_rate);
  p.validate();
  return p;
}

json to_json(const SimConfig& c) {
  return {{"n_students", c.n_students},
          {"presenters_per_session", c.presenters_per_session},
          {"sessions", c.sessions},
          {"treatment_share", c.treatment_share},
          {"first_day_d", c.first_day_d},
          {"days_between_sessions", c.days_between_sessions},
          {"profiles",
           {{"mean", to_json(c.profiles.mean)},
            {"spread", c.profiles.spread},
            {"quality_spread", c.profiles.quality_spread}}},
          {"platform", to_json(c.platform)},
          {"rng_seed", c.rng_seed}};
}

SimConfig sim_config_from_json(const json& j) {
  SimConfig c;
  c.n_students = j.value("n_students", c.n_students);
  c.presenters_per_session = j.value("presenters_per_session", c.presenters_per_session);
  c.sessions = j.value("sessions", c.sessions);
  c.treatment_share = j.value("treatment_share", c.treatment_share);
  c.first_day_d = j.value("first_day_d", c.first_day_d);
  c.days_between_sessions = j.value("days_between_sessions", c.days_between_sessions);
  if (j.contains("profiles")) {
    const auto& p = j["profiles"];
    if (p.contains("mean")) c.profiles.mean = agent_profile_from_json(p["mean"]);
    c.profiles.spread = p.value("spread", c.profiles.spread);
    c.profiles.quality_spread = p.value("quality_spread", c.profiles.quality_spread);
  }
  if (j.contains("platform")) c.platform = platform_config_from_json(j["platform"]);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  c.validate();
  return c;
}

SimConfig load_sim_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::not_found, fmt::format("cannot read config {}", file.string()));
  try {
    return sim_config_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_argument, fmt::format("{}: {}", file.string(), e.what()));
  }
}

SimConfig null_model(SimConfig cfg) {
  cfg.profiles.mean.incentive_sensitivity = 0.0;
  return cfg;
}

std::string generate_feedback(QualityComponents target, Rng& rng) {
  require(target.clarity >= 1 && target.clarity <= 3, "clarity target must be 1..3");
  require(target.relevance >= 0 && target.relevance <= 3, "relevance target must be 0..3");
  require(target.specificity >= 0 && target.specificity <= target.relevance,
          "specificity target must be 0..relevance");
  const int n_relevant = count_for_band(target.relevance);
  const int n_specific = count_for_band(target.specificity);

  std::vector<std::string> statements;
  for (auto s : pick(kSpecific, n_specific, rng)) {
    if (const auto pos = s.find("{}"); pos != std::string::npos) {
      s.replace(pos, 2, std::to_string(2 + rng.below(18)));
    }
    statements.push_back(std::move(s));
  }
  for (auto& s : pick(kPlain, n_relevant - n_specific, rng)) statements.push_back(std::move(s));
  for (auto& s : pick(kFiller, 1 + static_cast<int>(rng.below(2)), rng)) statements.push_back(std::move(s));
  for (auto& s : pick(kVague, 3 - target.clarity, rng)) statements.push_back(std::move(s));
  rng.shuffle(std::span<std::string>(statements));

  std::string out;
  for (const auto& s : statements) {
    if (!out.empty()) out += ' ';
    out += s;
    out += '.';
  }
  return out;
}

namespace {

struct Agent {
  ParticipantId id;
  Condition condition;
  AgentProfile profile;
};

struct Planned {
  AssignmentId id;
  int day;
};

class Simulation {
 public:
  explicit Simulation(const SimConfig& cfg)
      : cfg_(cfg),
        rng_(mix_seed(cfg.rng_seed, 0x51)),
        platform_(platform_config(cfg), std::make_shared<MemoryEventStore>(),
                  make_provider(cfg.platform.provider)) {}

  SimResult run() {
    setup();
    for (int k = 1; k <= cfg_.sessions; ++k) run_session(k);
    redeem_rewards();
    SimResult r;
    r.dataset = platform_.export_observations(instructor_, course_);
    r.events = platform_.events();
    r.ledger = platform_.ledger().serialize();
    for (const auto& a : agents_) r.agents[a.id.value] = a.profile;
    r.course = course_;
    return r;
  }

 private:
  static PlatformConfig platform_config(const SimConfig& cfg) { return effective_platform_config(cfg); }

  Timestamp tick(Date day) {
    ++actions_;
    return start_of_day(day) + std::chrono::hours{8} + std::chrono::seconds{actions_ * 7 % 36000};
  }

  void setup() {
    const Timestamp t0 = start_of_day(parse_date(cfg_.first_day_d)) - std::chrono::days{7};
    course_ = platform_.create_course(Platform::kAdmin, "Simulated course", t0);
    platform_.add_participant(Platform::kAdmin, course_, {instructor_, Role::instructor, "", std::nullopt}, t0);

    std::vector<int> order(static_cast<std::size_t>(cfg_.n_students));
    for (int i = 0; i < cfg_.n_students; ++i) order[static_cast<std::size_t>(i)] = i;
    rng_.shuffle(std::span<int>(order));
    const int n_treat = std::clamp(static_cast<int>(std::lround(cfg_.n_students * cfg_.treatment_share)), 1,
                                   cfg_.n_students - 1);
    std::vector<Condition> cond(static_cast<std::size_t>(cfg_.n_students), Condition::control);
    for (int i = 0; i < n_treat; ++i) cond[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = Condition::treatment;

    for (int i = 0; i < cfg_.n_students; ++i) {
      Agent a{ParticipantId(fmt::format("student{:02}", i + 1)), cond[static_cast<std::size_t>(i)],
              cfg_.profiles.draw(rng_)};
      platform_.add_participant(instructor_, course_,
                                {a.id, Role::student, fmt::format("Peer {:02}", i + 1), a.condition}, t0);
      agents_.push_back(std::move(a));
    }

    Questionnaire q;
    q.title = "Presentation feedback";
    q.questions = {
        {"overall", QuestionKind::rating, "Overall, how would you rate the presentation?", {}, 5},
        {"best", QuestionKind::multiple_choice, "Which part worked best?", {"content", "slides", "delivery"}, 0},
        {"feedback", QuestionKind::open_ended, "What worked well and what could be improved?", {}, 0}};
    questionnaire_ = platform_.create_questionnaire(instructor_, q, t0);

    presenter_order_.resize(agents_.size());
    for (std::size_t i = 0; i < agents_.size(); ++i) presenter_order_[i] = i;
    rng_.shuffle(std::span<std::size_t>(presenter_order_));
  }

  void run_session(int k) {
    const Date d = parse_date(cfg_.first_day_d) + std::chrono::days{(k - 1) * cfg_.days_between_sessions};
    const Timestamp setup_at = start_of_day(d) + std::chrono::hours{7};
    const std::string session = platform_.create_session(instructor_, course_, k, d, questionnaire_, setup_at);
    for (int i = 0; i < cfg_.presenters_per_session; ++i) {
      const std::size_t idx =
          presenter_order_[static_cast<std::size_t>((k - 1) * cfg_.presenters_per_session + i) % agents_.size()];
      platform_.add_deliverable(instructor_, session, agents_[idx].id,
                                fmt::format("slides://{}/{}", session, agents_[idx].id.value),
                                DeliverableKind::presentation, setup_at);
    }
    platform_.allocate(instructor_, session, setup_at);

    std::map<ParticipantId, std::vector<Planned>> plan;
    std::map<ParticipantId, int> done_day;
    for (const auto& a : agents_) {
      int last = 1;
      for (const auto& as : platform_.my_assignments(a.id)) {
        if (as.status != ReviewStatus::pending || session_of(as.id) != session) continue;
        const bool on_time = rng_.bernoulli(a.profile.on_time_rate);
        const int day = on_time ? 1 + static_cast<int>(rng_.below(4)) : 5 + static_cast<int>(rng_.below(2));
        plan[a.id].push_back({as.id, day});
        last = std::max(last, day);
      }
      done_day[a.id] = last;
    }

    for (int offset = 1; offset <= 6; ++offset) {
      const Date day = d + std::chrono::days{offset};
      for (const auto& a : agents_) {
        for (const auto& p : plan[a.id]) {
          if (p.day == offset) review(a, p.id, day);
        }
        if (offset == done_day[a.id] && offset <= 4) optional_reviews(a, session, k, day);
        if (offset == 3) maybe_poke(a, day);
        if (offset == 5) maybe_clarify(a, session, day);
      }
    }
  }

  static std::string session_of(const AssignmentId& id) {
    const auto pos = id.value.rfind("-a");
    return id.value.substr(0, pos);
  }

  void review(const Agent& a, const AssignmentId& id, Date day) {
    const bool consult = rng_.bernoulli(a.profile.consult_propensity);
    const auto& q = a.profile.quality_base;
    const double uplift = consult ? a.profile.consult_quality_uplift : 0.0;
    if (consult) {
      const QualityComponents draft = draw(a, q.clarity, q.relevance, q.specificity);
      platform_.assist(a.id, id, generate_feedback(draft, rng_), tick(day));
    }
    const QualityComponents final_levels = draw(a, q.clarity, q.relevance + uplift, q.specificity + uplift);
    std::map<std::string, AnswerValue> answers = {
        {"overall", draw_level(rng_, 3.8, 0.8, 1, 5)},
        {"best", static_cast<int>(rng_.below(3))},
        {"feedback", generate_feedback(final_levels, rng_)}};
    const auto result = platform_.submit_review(a.id, id, std::move(answers), tick(day));
    if (result.scoring.trigger == Trigger::prompt_consult && rng_.bernoulli(a.profile.consult_propensity)) {
      platform_.assist(a.id, id, result.review.open_feedback, tick(day));
    }
  }

  QualityComponents draw(const Agent& a, double c, double r, double s) {
    QualityComponents out;
    out.clarity = draw_level(rng_, c, a.profile.quality_sd, 1, 3);
    out.relevance = draw_level(rng_, r, a.profile.quality_sd, 0, 3);
    out.specificity = draw_level(rng_, s, a.profile.quality_sd, 0, out.relevance);
    return out;
  }

  void optional_reviews(const Agent& a, const std::string& session, int k, Date day) {
    const bool gamified = a.condition == Condition::treatment;
    if (gamified) {
      try {
        platform_.spin_wheel(a.id, tick(day));
      } catch (const Error&) {
        // Locked or already pending; the agent just moves on.
      }
    }
    double p = a.profile.base_optional_propensity + (gamified ? a.profile.incentive_sensitivity : 0.0);
    if (k == 2) p *= a.profile.session2_fatigue;
    p = clamp01(p);
    for (int slot = 0; slot < cfg_.platform.allocation.optional_cap_per_session; ++slot) {
      if (!rng_.bernoulli(p)) break;
      const auto extra = platform_.request_optional(a.id, session, tick(day));
      if (!extra) break;
      review(a, extra->id, day);
    }
  }

  void maybe_poke(const Agent& a, Date day) {
    const Timestamp now = tick(day);
    const json fb = platform_.received_feedback_view(a.id, now);
    for (const auto& d : fb["deliverables"]) {
      if (d["pending_reviews"].empty() || !rng_.bernoulli(0.3)) continue;
      try {
        platform_.poke(a.id, AssignmentId(d["pending_reviews"][0].get<std::string>()), now);
      } catch (const Error&) {
        // Cooldown; nothing to do.
      }
    }
  }

  void maybe_clarify(const Agent& a, const std::string& session, Date day) {
    const Timestamp now = tick(day);
    const json fb = platform_.received_feedback_view(a.id, now);
    for (const auto& d : fb["deliverables"]) {
      if (d["session"] != session || !d.contains("reviews") || d["reviews"].empty()) continue;
      if (!rng_.bernoulli(0.15)) continue;
      const auto& reviews = d["reviews"];
      const std::string review = reviews[rng_.below(reviews.size())]["review"];
      platform_.post_clarification(a.id, AssignmentId(review), "Could you say which part you meant?", now);
    }
  }

  void redeem_rewards() {
    const Date end = parse_date(cfg_.first_day_d) +
                     std::chrono::days{(cfg_.sessions - 1) * cfg_.days_between_sessions + 7};
    std::vector<Reward> rewards = cfg_.platform.rules.rewards;
    std::sort(rewards.begin(), rewards.end(),
              [](const Reward& x, const Reward& y) { return x.cost_xp > y.cost_xp; });
    for (const auto& a : agents_) {
      if (a.condition != Condition::treatment) continue;
      for (const auto& r : rewards) {
        if (platform_.ledger().balance(a.id) < r.cost_xp) continue;
        try {
          platform_.redeem(a.id, r.id, tick(end));
        } catch (const Error&) {
          // Sold out or already owned.
        }
      }
    }
  }

  const SimConfig& cfg_;
  Rng rng_;
  Platform platform_;
  ParticipantId instructor_{"instructor"};
  CourseId course_;
  QuestionnaireId questionnaire_;
  std::vector<Agent> agents_;
  std::vector<std::size_t> presenter_order_;
  std::int64_t actions_ = 0;
};

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
  out.close();
  if (!out) throw Error(Errc::unavailable, fmt::format("cannot write {}", path.string()));
}

}  // namespace

SimResult simulate_cohort(const SimConfig& cfg) {
  cfg.validate();
  return Simulation(cfg).run();
}

PlatformConfig effective_platform_config(const SimConfig& cfg) {
  PlatformConfig pc = cfg.platform;
  pc.wheel_seed = mix_seed(cfg.rng_seed, 0x77);
  pc.allocation.rng_seed = mix_seed(cfg.rng_seed, 0xa1);
  return pc;
}

ExperimentResult run_experiment(const SimConfig& cfg, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw Error(Errc::unavailable, fmt::format("cannot create output directory {}", out_dir.string()));
  }
  ExperimentResult r;
  r.files = {out_dir / "observations.csv", out_dir / "report.txt", out_dir / "report.csv",
             out_dir / "rulebook.json",    out_dir / "events.jsonl", out_dir / "config.json",
             out_dir / "platform.json"};
  write_file(r.files.config, to_json(cfg).dump(2) + "\n");
  write_file(r.files.platform, to_json(effective_platform_config(cfg)).dump(2) + "\n");
  r.sim = simulate_cohort(cfg);

  std::ostringstream obs;
  export_observations(r.sim.dataset, obs);
  write_file(r.files.observations, obs.str());
  const ExperimentDataset ingested = ingest_observations(r.files.observations);
  r.report = build_report(ingested);
  write_file(r.files.report_text, r.report.to_text());
  write_file(r.files.report_csv, r.report.to_csv());
  write_file(r.files.rulebook, to_json(cfg.platform.rules).dump(2) + "\n");
  write_file(r.files.events, serialize_events(r.sim.events));
  return r;
}

}  // namespace peerfb::sim
