#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "peerfb/allocation.hpp"
#include "peerfb/core.hpp"

namespace peerfb {

using Xp = std::int64_t;

// Exact non-negative rational. Parses "5/4", "1.25" or "2".
struct Ratio {
  std::int64_t num = 1;
  std::int64_t den = 1;

  static Ratio parse(std::string_view text);
  static Ratio from_json(const nlohmann::json& j);

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  Ratio reduced() const;
  std::string str() const;

  friend bool operator==(const Ratio& a, const Ratio& b) {
    return a.num * b.den == b.num * a.den;
  }
  friend std::strong_ordering operator<=>(const Ratio& a, const Ratio& b) {
    return a.num * b.den <=> b.num * a.den;
  }
};

// floor(base * m), exact for base >= 0.
Xp floor_mul(Xp base, Ratio m);

struct PointSchedule {
  Xp mandatory_on_time = 20;
  Xp optional_on_time = 15;
  Xp mandatory_late = 10;
  Xp optional_late = 7;
  Xp first_consult_per_review_session = 5;
  Xp low_score_consult = 5;
  int low_score_consult_threshold = 6;  // consult bonus when total < this

  Xp review_points(Obligation o, Timeliness t) const;
  void validate() const;
};

enum class LedgerEvent { review_points, consult_bonus, wheel_bonus, purchase_debit };

std::string_view to_string(LedgerEvent e);
LedgerEvent parse_ledger_event(std::string_view s);

struct LedgerEntry {
  std::string id;
  ParticipantId student;
  LedgerEvent event = LedgerEvent::review_points;
  Xp base_xp = 0;
  Ratio multiplier_applied;
  Xp net_xp = 0;  // negative for debits
  Timestamp occurred_at;
  std::string cause;
};

nlohmann::json to_json(const LedgerEntry& e);
LedgerEntry ledger_entry_from_json(const nlohmann::json& j);

// Append-only XP log with cached per-student balances. Credits carry
// net = floor(base * multiplier); purchase_debit carries net = -base. At most
// one entry per (event, cause) pair.
class Ledger {
 public:
  const LedgerEntry& append(const ParticipantId& student, LedgerEvent event, Xp base,
                            Ratio multiplier, Timestamp at, std::string cause);

  bool has_cause(LedgerEvent event, const std::string& cause) const;
  Xp balance(const ParticipantId& student) const;
  // Lifetime credits only; purchases do not lower it.
  Xp earned(const ParticipantId& student, std::optional<Timestamp> as_of = std::nullopt) const;
  std::size_t size() const;
  std::vector<LedgerEntry> snapshot() const;
  std::vector<LedgerEntry> entries_for(const ParticipantId& student) const;
  std::map<ParticipantId, Xp> cached_balances() const;

  static std::map<ParticipantId, Xp> replay_balances(std::span<const LedgerEntry> entries);

  // Canonical line-per-entry JSON rendering, used to compare ledgers byte-wise.
  std::string serialize() const;

 private:
  mutable std::shared_mutex mu_;
  std::vector<LedgerEntry> entries_;
  std::map<ParticipantId, Xp> balances_;
  std::set<std::pair<LedgerEvent, std::string>> causes_;
};

enum class BadgeKind { curious_commentor, comment_captain, comment_crusader };
enum class BadgeTier { bronze, silver, gold };

std::string_view to_string(BadgeKind k);
std::string_view to_string(BadgeTier t);
std::string_view display_name(BadgeKind k);

struct Badge {
  BadgeKind kind;
  BadgeTier tier;
  Timestamp earned_at;

  bool operator==(const Badge&) const = default;
};

struct BadgeRules {
  // Strictly-greater-than quality totals, indexed by BadgeKind.
  std::array<int, 3> thresholds{6, 7, 8};
  // Qualifying reviews needed for bronze, silver, gold.
  std::array<int, 3> tier_counts{1, 3, 6};
  Ratio silver_multiplier{5, 4};
  Ratio gold_multiplier{3, 2};

  void validate() const;
};

// Badges earned by `totals` that are not in `held`, bronze before silver
// before gold within a kind.
std::vector<Badge> evaluate_badges(const BadgeRules& rules, std::span<const int> totals,
                                   std::span<const Badge> held, Timestamp now);

// Largest multiplier among held silver/gold badges; 1 when none.
Ratio active_multiplier(const BadgeRules& rules, std::span<const Badge> held);

struct WheelSection {
  int prize_xp = 0;
  Ratio probability;
};

struct WheelConfig {
  std::vector<WheelSection> sections;

  static WheelConfig defaults();
  void validate() const;
  // Section containing draw under cumulative probabilities [c_{i-1}, c_i).
  int prize_for(double draw) const;
};

struct Spin {
  std::string id;
  ParticipantId student;
  double rng_draw = 0.0;
  int prize_xp = 0;
  Timestamp spun_at;
  std::optional<AssignmentId> consumed_by;
};

struct Reward {
  std::string id;
  std::string label;
  Xp cost_xp = 0;
  std::optional<int> stock;  // empty = unlimited
  int per_student_limit = 1;
};

struct Purchase {
  std::string id;
  ParticipantId student;
  std::string reward_id;
  Xp cost_xp = 0;
  Timestamp at;
};

struct Rulebook {
  PointSchedule points;
  BadgeRules badges;
  WheelConfig wheel = WheelConfig::defaults();
  std::vector<Reward> rewards = default_rewards();

  static std::vector<Reward> default_rewards();
  void validate() const;
};

nlohmann::json to_json(const Rulebook& r);
Rulebook rulebook_from_json(const nlohmann::json& j);

struct LeaderboardRow {
  ParticipantId student;
  std::string display_alias;
  Xp earned = 0;
  int rank = 0;
};

struct Countdown {
  int mandatory_left = 0;
  int optional_left = 0;
};

Countdown countdown(const SessionAllocation& session, const ParticipantId& student);

enum class ConsultBonusKind { first_use, low_score };

struct BadgeNotification {
  ParticipantId student;
  Badge badge;
};

// The XP economy for one course. Mutations are serialized; the same event
// sequence yields the same ledger regardless of the student's condition.
class GamificationEngine {
 public:
  explicit GamificationEngine(Rulebook rules);

  const Rulebook& rules() const noexcept { return rules_; }
  const Ledger& ledger() const noexcept { return ledger_; }

  struct Award {
    LedgerEntry review;
    std::optional<LedgerEntry> wheel_bonus;
  };

  // Errc::conflict "duplicate award" if this assignment was already paid.
  Award award_review_points(const ReviewAssignment& assignment, Timestamp now);

  // Records an automatic quality total and returns newly earned badges.
  std::vector<Badge> record_review_quality(const ParticipantId& student, int total,
                                           Timestamp now);

  // nullopt if a bonus for this cause was already granted.
  std::optional<LedgerEntry> award_consult_bonus(const ParticipantId& student,
                                                 ConsultBonusKind kind,
                                                 const std::string& cause, Timestamp now);

  Ratio active_multiplier(const ParticipantId& student) const;
  std::vector<Badge> badges(const ParticipantId& student) const;
  std::vector<int> quality_history(const ParticipantId& student) const;

  Spin spin_wheel(const ParticipantId& student, bool mandatory_complete, double draw,
                  Timestamp now);
  std::optional<Spin> pending_spin(const ParticipantId& student) const;
  std::vector<Spin> spins() const;

  std::pair<Purchase, LedgerEntry> redeem_reward(const ParticipantId& student,
                                                 const std::string& reward_id, Timestamp now);
  std::vector<Purchase> purchases(const ParticipantId& student) const;
  std::optional<int> stock_left(const std::string& reward_id) const;

  std::vector<LeaderboardRow> leaderboard(std::span<const Participant> students,
                                          std::optional<Timestamp> as_of = std::nullopt) const;

  std::vector<BadgeNotification> drain_notifications();

 private:
  const Reward& find_reward(const std::string& id) const;

  Rulebook rules_;
  Ledger ledger_;
  mutable std::mutex mu_;
  std::map<ParticipantId, std::vector<Badge>> badges_;
  std::map<ParticipantId, std::vector<int>> quality_;
  std::vector<Spin> spins_;
  std::vector<Purchase> purchases_;
  std::map<std::string, int> stock_;
  std::vector<BadgeNotification> notifications_;
};

}  // namespace peerfb
