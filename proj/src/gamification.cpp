#include "peerfb/gamification.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>

#include <fmt/format.h>

namespace peerfb {

namespace {

std::int64_t parse_i64(std::string_view s, std::string_view what) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error(Errc::invalid_argument, fmt::format("bad {} '{}'", what, s));
  }
  return v;
}

void require(bool ok, std::string_view message) {
  if (!ok) throw Error(Errc::invalid_argument, std::string(message));
}

}  // namespace

Ratio Ratio::parse(std::string_view text) {
  Ratio r;
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    r.num = parse_i64(text.substr(0, slash), "ratio");
    r.den = parse_i64(text.substr(slash + 1), "ratio");
  } else if (auto dot = text.find('.'); dot != std::string_view::npos) {
    const auto frac = text.substr(dot + 1);
    require(frac.size() <= 15, "ratio has too many decimals");
    r.den = 1;
    for (std::size_t i = 0; i < frac.size(); ++i) r.den *= 10;
    const auto whole = text.substr(0, dot);
    r.num = (whole.empty() ? 0 : parse_i64(whole, "ratio")) * r.den +
            (frac.empty() ? 0 : parse_i64(frac, "ratio"));
  } else {
    r.num = parse_i64(text, "ratio");
  }
  require(r.den > 0 && r.num >= 0, "ratio must be non-negative");
  return r.reduced();
}

Ratio Ratio::from_json(const nlohmann::json& j) {
  if (j.is_string()) return parse(j.get<std::string>());
  if (j.is_number()) return parse(j.dump());
  throw Error(Errc::invalid_argument, "ratio must be a string or number");
}

Ratio Ratio::reduced() const {
  const auto g = std::gcd(num, den);
  return g == 0 ? *this : Ratio{num / g, den / g};
}

std::string Ratio::str() const {
  const Ratio r = reduced();
  return r.den == 1 ? fmt::format("{}", r.num) : fmt::format("{}/{}", r.num, r.den);
}

Xp floor_mul(Xp base, Ratio m) {
  const Xp p = base * m.num;
  Xp q = p / m.den;
  if ((p % m.den != 0) && ((p < 0) != (m.den < 0))) --q;
  return q;
}

Xp PointSchedule::review_points(Obligation o, Timeliness t) const {
  if (o == Obligation::mandatory) {
    return t == Timeliness::on_time ? mandatory_on_time : mandatory_late;
  }
  return t == Timeliness::on_time ? optional_on_time : optional_late;
}

void PointSchedule::validate() const {
  for (Xp v : {mandatory_on_time, optional_on_time, mandatory_late, optional_late,
               first_consult_per_review_session, low_score_consult}) {
    require(v >= 0, "XP values must be non-negative");
  }
  require(mandatory_late <= mandatory_on_time && optional_late <= optional_on_time,
          "late XP must not exceed on-time XP");
  require(low_score_consult_threshold >= 0 && low_score_consult_threshold <= QualityScore::kMaxTotal + 1,
          "low_score_consult_threshold out of range");
}

std::string_view to_string(LedgerEvent e) {
  switch (e) {
    case LedgerEvent::review_points: return "review_points";
    case LedgerEvent::consult_bonus: return "consult_bonus";
    case LedgerEvent::wheel_bonus: return "wheel_bonus";
    case LedgerEvent::purchase_debit: return "purchase_debit";
  }
  return "";
}

LedgerEvent parse_ledger_event(std::string_view s) {
  for (auto e : {LedgerEvent::review_points, LedgerEvent::consult_bonus,
                 LedgerEvent::wheel_bonus, LedgerEvent::purchase_debit}) {
    if (to_string(e) == s) return e;
  }
  throw Error(Errc::invalid_argument, fmt::format("unknown ledger event '{}'", s));
}

nlohmann::json to_json(const LedgerEntry& e) {
  return {{"id", e.id},
          {"student", e.student.value},
          {"event", to_string(e.event)},
          {"base_xp", e.base_xp},
          {"multiplier", e.multiplier_applied.str()},
          {"net_xp", e.net_xp},
          {"at", e.occurred_at.time_since_epoch().count()},
          {"cause", e.cause}};
}

LedgerEntry ledger_entry_from_json(const nlohmann::json& j) {
  LedgerEntry e;
  e.id = j.at("id").get<std::string>();
  e.student = ParticipantId(j.at("student").get<std::string>());
  e.event = parse_ledger_event(j.at("event").get<std::string>());
  e.base_xp = j.at("base_xp").get<Xp>();
  e.multiplier_applied = Ratio::from_json(j.at("multiplier"));
  e.net_xp = j.at("net_xp").get<Xp>();
  e.occurred_at = Timestamp{std::chrono::seconds{j.at("at").get<std::int64_t>()}};
  e.cause = j.at("cause").get<std::string>();
  return e;
}

const LedgerEntry& Ledger::append(const ParticipantId& student, LedgerEvent event, Xp base,
                                  Ratio multiplier, Timestamp at, std::string cause) {
  require(base >= 0, "base XP must be non-negative");
  require(multiplier >= Ratio{1, 1}, "multiplier must be >= 1");
  std::unique_lock lock(mu_);
  if (causes_.contains({event, cause})) {
    throw Error(Errc::conflict, event == LedgerEvent::review_points
                                    ? "duplicate award"
                                    : fmt::format("duplicate {} for {}", to_string(event), cause));
  }
  const bool debit = event == LedgerEvent::purchase_debit;
  const Xp net = debit ? -base : floor_mul(base, multiplier);
  Xp& balance = balances_[student];
  if (balance + net < 0) throw Error(Errc::precondition_failed, "insufficient XP");

  LedgerEntry e;
  e.id = fmt::format("L{}", entries_.size() + 1);
  e.student = student;
  e.event = event;
  e.base_xp = base;
  e.multiplier_applied = debit ? Ratio{} : multiplier.reduced();
  e.net_xp = net;
  e.occurred_at = at;
  e.cause = std::move(cause);
  causes_.insert({event, e.cause});
  balance += net;
  entries_.push_back(std::move(e));
  return entries_.back();
}

bool Ledger::has_cause(LedgerEvent event, const std::string& cause) const {
  std::shared_lock lock(mu_);
  return causes_.contains({event, cause});
}

Xp Ledger::balance(const ParticipantId& student) const {
  std::shared_lock lock(mu_);
  auto it = balances_.find(student);
  return it == balances_.end() ? 0 : it->second;
}

Xp Ledger::earned(const ParticipantId& student, std::optional<Timestamp> as_of) const {
  std::shared_lock lock(mu_);
  Xp sum = 0;
  for (const auto& e : entries_) {
    if (e.student != student || e.net_xp <= 0) continue;
    if (as_of && e.occurred_at > *as_of) continue;
    sum += e.net_xp;
  }
  return sum;
}

std::size_t Ledger::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

std::vector<LedgerEntry> Ledger::snapshot() const {
  std::shared_lock lock(mu_);
  return entries_;
}

std::vector<LedgerEntry> Ledger::entries_for(const ParticipantId& student) const {
  std::shared_lock lock(mu_);
  std::vector<LedgerEntry> out;
  std::copy_if(entries_.begin(), entries_.end(), std::back_inserter(out),
               [&](const LedgerEntry& e) { return e.student == student; });
  return out;
}

std::map<ParticipantId, Xp> Ledger::cached_balances() const {
  std::shared_lock lock(mu_);
  return balances_;
}

std::map<ParticipantId, Xp> Ledger::replay_balances(std::span<const LedgerEntry> entries) {
  std::map<ParticipantId, Xp> out;
  for (const auto& e : entries) out[e.student] += e.net_xp;
  return out;
}

std::string Ledger::serialize() const {
  std::shared_lock lock(mu_);
  std::string out;
  for (const auto& e : entries_) {
    out += to_json(e).dump();
    out += '\n';
  }
  return out;
}

std::string_view to_string(BadgeKind k) {
  switch (k) {
    case BadgeKind::curious_commentor: return "curious_commentor";
    case BadgeKind::comment_captain: return "comment_captain";
    case BadgeKind::comment_crusader: return "comment_crusader";
  }
  return "";
}

std::string_view display_name(BadgeKind k) {
  switch (k) {
    case BadgeKind::curious_commentor: return "Curious Commentor";
    case BadgeKind::comment_captain: return "Comment Captain";
    case BadgeKind::comment_crusader: return "Comment Crusader";
  }
  return "";
}

std::string_view to_string(BadgeTier t) {
  switch (t) {
    case BadgeTier::bronze: return "bronze";
    case BadgeTier::silver: return "silver";
    case BadgeTier::gold: return "gold";
  }
  return "";
}

void BadgeRules::validate() const {
  for (int t : thresholds) require(t >= 0 && t < QualityScore::kMaxTotal, "badge threshold out of range");
  require(tier_counts[0] >= 1 && tier_counts[0] < tier_counts[1] && tier_counts[1] < tier_counts[2],
          "badge tier counts must be increasing");
  require(silver_multiplier >= Ratio{1, 1} && gold_multiplier >= Ratio{1, 1},
          "multipliers must be >= 1");
}

std::vector<Badge> evaluate_badges(const BadgeRules& rules, std::span<const int> totals,
                                   std::span<const Badge> held, Timestamp now) {
  std::vector<Badge> out;
  constexpr std::array kinds{BadgeKind::curious_commentor, BadgeKind::comment_captain,
                             BadgeKind::comment_crusader};
  constexpr std::array tiers{BadgeTier::bronze, BadgeTier::silver, BadgeTier::gold};
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    const int threshold = rules.thresholds[k];
    const auto qualifying = std::count_if(totals.begin(), totals.end(),
                                          [&](int t) { return t > threshold; });
    for (std::size_t t = 0; t < tiers.size(); ++t) {
      if (qualifying < rules.tier_counts[t]) break;
      const bool has = std::any_of(held.begin(), held.end(), [&](const Badge& b) {
        return b.kind == kinds[k] && b.tier == tiers[t];
      });
      if (!has) out.push_back({kinds[k], tiers[t], now});
    }
  }
  return out;
}

Ratio active_multiplier(const BadgeRules& rules, std::span<const Badge> held) {
  Ratio best{1, 1};
  for (const auto& b : held) {
    if (b.tier == BadgeTier::silver) best = std::max(best, rules.silver_multiplier);
    if (b.tier == BadgeTier::gold) best = std::max(best, rules.gold_multiplier);
  }
  return best.reduced();
}

WheelConfig WheelConfig::defaults() {
  return WheelConfig{{{0, Ratio{3, 10}}, {5, Ratio{2, 5}}, {10, Ratio{1, 5}}, {15, Ratio{1, 10}}}};
}

void WheelConfig::validate() const {
  require(!sections.empty(), "wheel needs at least one section");
  Ratio sum{0, 1};
  for (const auto& s : sections) {
    require(s.prize_xp >= 0 && s.prize_xp <= 15, "wheel prize must be within 0-15 XP");
    require(s.probability.num > 0, "wheel probabilities must be positive");
    sum = Ratio{sum.num * s.probability.den + s.probability.num * sum.den,
                sum.den * s.probability.den}
              .reduced();
  }
  require(sum == Ratio{1, 1}, "wheel probabilities must sum to exactly 1");
}

int WheelConfig::prize_for(double draw) const {
  require(draw >= 0.0 && draw < 1.0, "draw must be in [0, 1)");
  // Compare draw * den < cumulative num exactly enough by accumulating the
  // running rational and converting once per boundary.
  std::int64_t num = 0;
  std::int64_t den = 1;
  for (const auto& s : sections) {
    num = num * s.probability.den + s.probability.num * den;
    den *= s.probability.den;
    const auto g = std::gcd(num, den);
    num /= g;
    den /= g;
    if (draw < static_cast<double>(num) / static_cast<double>(den)) return s.prize_xp;
  }
  return sections.back().prize_xp;
}

std::vector<Reward> Rulebook::default_rewards() {
  return {
      {"bonus-4", "Bonus course points: 4 points", 300, std::nullopt, 1},
      {"bonus-2", "Bonus course points: 2 points", 250, std::nullopt, 1},
      {"exam-waiver", "Final exam question waiver (regrade of a selected question)", 200,
       std::nullopt, 1},
  };
}

void Rulebook::validate() const {
  points.validate();
  badges.validate();
  wheel.validate();
  std::set<std::string> ids;
  for (const auto& r : rewards) {
    require(!r.id.empty() && ids.insert(r.id).second, "reward ids must be unique and non-empty");
    require(r.cost_xp > 0, "reward cost must be positive");
    require(!r.stock || *r.stock >= 0, "reward stock must be non-negative");
    require(r.per_student_limit >= 1, "per-student limit must be >= 1");
  }
}

nlohmann::json to_json(const Rulebook& r) {
  nlohmann::json j;
  j["points"] = {
      {"mandatory_on_time", r.points.mandatory_on_time},
      {"optional_on_time", r.points.optional_on_time},
      {"mandatory_late", r.points.mandatory_late},
      {"optional_late", r.points.optional_late},
      {"first_consult_per_review_session", r.points.first_consult_per_review_session},
      {"low_score_consult", r.points.low_score_consult},
      {"low_score_consult_threshold", r.points.low_score_consult_threshold},
  };
  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : {BadgeKind::curious_commentor, BadgeKind::comment_captain,
                 BadgeKind::comment_crusader}) {
    kinds.push_back({{"kind", to_string(k)},
                     {"name", display_name(k)},
                     {"quality_total_greater_than", r.badges.thresholds[static_cast<int>(k)]}});
  }
  j["badges"] = {
      {"kinds", kinds},
      {"tiers",
       {{{"tier", "bronze"}, {"qualifying_reviews", r.badges.tier_counts[0]}, {"multiplier", "1"}},
        {{"tier", "silver"},
         {"qualifying_reviews", r.badges.tier_counts[1]},
         {"multiplier", r.badges.silver_multiplier.str()}},
        {{"tier", "gold"},
         {"qualifying_reviews", r.badges.tier_counts[2]},
         {"multiplier", r.badges.gold_multiplier.str()}}}},
      {"multiplier_combination", "max"},
  };
  nlohmann::json sections = nlohmann::json::array();
  for (const auto& s : r.wheel.sections) {
    sections.push_back({{"prize_xp", s.prize_xp}, {"probability", s.probability.str()}});
  }
  j["wheel"] = {{"sections", sections}};
  nlohmann::json rewards = nlohmann::json::array();
  for (const auto& rw : r.rewards) {
    nlohmann::json e = {{"id", rw.id},
                        {"label", rw.label},
                        {"cost_xp", rw.cost_xp},
                        {"per_student_limit", rw.per_student_limit}};
    e["stock"] = rw.stock ? nlohmann::json(*rw.stock) : nlohmann::json(nullptr);
    rewards.push_back(std::move(e));
  }
  j["rewards"] = rewards;
  return j;
}

Rulebook rulebook_from_json(const nlohmann::json& j) {
  Rulebook r;
  if (j.contains("points")) {
    const auto& p = j["points"];
    auto get = [&](const char* key, auto& field) {
      if (p.contains(key)) field = p[key].get<std::decay_t<decltype(field)>>();
    };
    get("mandatory_on_time", r.points.mandatory_on_time);
    get("optional_on_time", r.points.optional_on_time);
    get("mandatory_late", r.points.mandatory_late);
    get("optional_late", r.points.optional_late);
    get("first_consult_per_review_session", r.points.first_consult_per_review_session);
    get("low_score_consult", r.points.low_score_consult);
    get("low_score_consult_threshold", r.points.low_score_consult_threshold);
  }
  if (j.contains("badges")) {
    const auto& b = j["badges"];
    if (b.contains("kinds")) {
      for (const auto& k : b["kinds"]) {
        const auto kind = k.at("kind").get<std::string>();
        for (auto candidate : {BadgeKind::curious_commentor, BadgeKind::comment_captain,
                               BadgeKind::comment_crusader}) {
          if (to_string(candidate) == kind) {
            r.badges.thresholds[static_cast<int>(candidate)] =
                k.at("quality_total_greater_than").get<int>();
          }
        }
      }
    }
    if (b.contains("tiers")) {
      for (const auto& t : b["tiers"]) {
        const auto tier = t.at("tier").get<std::string>();
        const int idx = tier == "bronze" ? 0 : tier == "silver" ? 1 : tier == "gold" ? 2 : -1;
        require(idx >= 0, "unknown badge tier");
        r.badges.tier_counts[idx] = t.at("qualifying_reviews").get<int>();
        if (idx == 1 && t.contains("multiplier")) r.badges.silver_multiplier = Ratio::from_json(t["multiplier"]);
        if (idx == 2 && t.contains("multiplier")) r.badges.gold_multiplier = Ratio::from_json(t["multiplier"]);
      }
    }
  }
  if (j.contains("wheel")) {
    r.wheel.sections.clear();
    for (const auto& s : j["wheel"].at("sections")) {
      r.wheel.sections.push_back({s.at("prize_xp").get<int>(), Ratio::from_json(s.at("probability"))});
    }
  }
  if (j.contains("rewards")) {
    r.rewards.clear();
    for (const auto& e : j["rewards"]) {
      Reward rw;
      rw.id = e.at("id").get<std::string>();
      rw.label = e.value("label", rw.id);
      rw.cost_xp = e.at("cost_xp").get<Xp>();
      if (e.contains("stock") && !e["stock"].is_null()) rw.stock = e["stock"].get<int>();
      rw.per_student_limit = e.value("per_student_limit", 1);
      r.rewards.push_back(std::move(rw));
    }
  }
  r.validate();
  return r;
}

Countdown countdown(const SessionAllocation& session, const ParticipantId& student) {
  Countdown c;
  c.mandatory_left = session.pending_count(student, Obligation::mandatory);
  c.optional_left = std::max(0, session.config().optional_cap_per_session -
                                    session.submitted_count(student, Obligation::optional));
  return c;
}

GamificationEngine::GamificationEngine(Rulebook rules) : rules_(std::move(rules)) {
  rules_.validate();
  for (const auto& r : rules_.rewards) {
    if (r.stock) stock_[r.id] = *r.stock;
  }
}

GamificationEngine::Award GamificationEngine::award_review_points(
    const ReviewAssignment& assignment, Timestamp now) {
  if (assignment.status != ReviewStatus::submitted || !assignment.timeliness) {
    throw Error(Errc::precondition_failed, "assignment not submitted");
  }
  std::lock_guard lock(mu_);
  const ParticipantId& student = assignment.reviewer;
  const Xp base = rules_.points.review_points(assignment.obligation, *assignment.timeliness);
  const Ratio mult = peerfb::active_multiplier(rules_.badges, badges_[student]);
  Award award{ledger_.append(student, LedgerEvent::review_points, base, mult, now,
                             assignment.id.value),
              std::nullopt};
  if (assignment.obligation == Obligation::optional) {
    for (auto& spin : spins_) {
      if (spin.student != student || spin.consumed_by) continue;
      spin.consumed_by = assignment.id;
      award.wheel_bonus = ledger_.append(student, LedgerEvent::wheel_bonus, spin.prize_xp,
                                         Ratio{}, now, spin.id);
      break;
    }
  }
  return award;
}

std::vector<Badge> GamificationEngine::record_review_quality(const ParticipantId& student,
                                                             int total, Timestamp now) {
  require(total >= 0 && total <= QualityScore::kMaxTotal, "quality total out of range");
  std::lock_guard lock(mu_);
  auto& history = quality_[student];
  history.push_back(total);
  auto& held = badges_[student];
  auto fresh = evaluate_badges(rules_.badges, history, held, now);
  for (const auto& b : fresh) {
    held.push_back(b);
    notifications_.push_back({student, b});
  }
  return fresh;
}

std::optional<LedgerEntry> GamificationEngine::award_consult_bonus(const ParticipantId& student,
                                                                   ConsultBonusKind kind,
                                                                   const std::string& cause,
                                                                   Timestamp now) {
  std::lock_guard lock(mu_);
  if (ledger_.has_cause(LedgerEvent::consult_bonus, cause)) return std::nullopt;
  const Xp base = kind == ConsultBonusKind::first_use
                      ? rules_.points.first_consult_per_review_session
                      : rules_.points.low_score_consult;
  return ledger_.append(student, LedgerEvent::consult_bonus, base, Ratio{}, now, cause);
}

Ratio GamificationEngine::active_multiplier(const ParticipantId& student) const {
  std::lock_guard lock(mu_);
  auto it = badges_.find(student);
  if (it == badges_.end()) return Ratio{};
  return peerfb::active_multiplier(rules_.badges, it->second);
}

std::vector<Badge> GamificationEngine::badges(const ParticipantId& student) const {
  std::lock_guard lock(mu_);
  auto it = badges_.find(student);
  return it == badges_.end() ? std::vector<Badge>{} : it->second;
}

std::vector<int> GamificationEngine::quality_history(const ParticipantId& student) const {
  std::lock_guard lock(mu_);
  auto it = quality_.find(student);
  return it == quality_.end() ? std::vector<int>{} : it->second;
}

Spin GamificationEngine::spin_wheel(const ParticipantId& student, bool mandatory_complete,
                                    double draw, Timestamp now) {
  std::lock_guard lock(mu_);
  if (!mandatory_complete) throw Error(Errc::precondition_failed, "wheel locked");
  for (const auto& s : spins_) {
    if (s.student == student && !s.consumed_by) {
      throw Error(Errc::conflict, "spin pending");
    }
  }
  Spin spin;
  spin.id = fmt::format("spin{}", spins_.size() + 1);
  spin.student = student;
  spin.rng_draw = draw;
  spin.prize_xp = rules_.wheel.prize_for(draw);
  spin.spun_at = now;
  spins_.push_back(spin);
  return spin;
}

std::optional<Spin> GamificationEngine::pending_spin(const ParticipantId& student) const {
  std::lock_guard lock(mu_);
  for (const auto& s : spins_) {
    if (s.student == student && !s.consumed_by) return s;
  }
  return std::nullopt;
}

std::vector<Spin> GamificationEngine::spins() const {
  std::lock_guard lock(mu_);
  return spins_;
}

const Reward& GamificationEngine::find_reward(const std::string& id) const {
  for (const auto& r : rules_.rewards) {
    if (r.id == id) return r;
  }
  throw Error(Errc::not_found, fmt::format("no such reward '{}'", id));
}

std::pair<Purchase, LedgerEntry> GamificationEngine::redeem_reward(const ParticipantId& student,
                                                                   const std::string& reward_id,
                                                                   Timestamp now) {
  std::lock_guard lock(mu_);
  const Reward& reward = find_reward(reward_id);
  const auto owned = std::count_if(purchases_.begin(), purchases_.end(), [&](const Purchase& p) {
    return p.student == student && p.reward_id == reward_id;
  });
  if (owned >= reward.per_student_limit) throw Error(Errc::conflict, "already redeemed");
  if (reward.stock && stock_[reward.id] <= 0) throw Error(Errc::conflict, "out of stock");
  if (ledger_.balance(student) < reward.cost_xp) {
    throw Error(Errc::precondition_failed, "insufficient XP");
  }
  Purchase p{fmt::format("purchase{}", purchases_.size() + 1), student, reward.id,
             reward.cost_xp, now};
  LedgerEntry debit =
      ledger_.append(student, LedgerEvent::purchase_debit, reward.cost_xp, Ratio{}, now, p.id);
  if (reward.stock) --stock_[reward.id];
  purchases_.push_back(p);
  return {p, debit};
}

std::vector<Purchase> GamificationEngine::purchases(const ParticipantId& student) const {
  std::lock_guard lock(mu_);
  std::vector<Purchase> out;
  std::copy_if(purchases_.begin(), purchases_.end(), std::back_inserter(out),
               [&](const Purchase& p) { return p.student == student; });
  return out;
}

std::optional<int> GamificationEngine::stock_left(const std::string& reward_id) const {
  std::lock_guard lock(mu_);
  auto it = stock_.find(reward_id);
  if (it == stock_.end()) return std::nullopt;
  return it->second;
}

std::vector<LeaderboardRow> GamificationEngine::leaderboard(std::span<const Participant> students,
                                                            std::optional<Timestamp> as_of) const {
  std::vector<LeaderboardRow> rows;
  for (const auto& s : students) {
    rows.push_back({s.id, s.display_alias, ledger_.earned(s.id, as_of), 0});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.earned != b.earned) return a.earned > b.earned;
    return a.display_alias < b.display_alias;
  });
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].rank = (i > 0 && rows[i].earned == rows[i - 1].earned) ? rows[i - 1].rank
                                                                   : static_cast<int>(i) + 1;
  }
  return rows;
}

std::vector<BadgeNotification> GamificationEngine::drain_notifications() {
  std::lock_guard lock(mu_);
  return std::exchange(notifications_, {});
}

}  // namespace peerfb
