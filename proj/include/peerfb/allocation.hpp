#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "peerfb/core.hpp"
#include "peerfb/rng.hpp"

namespace peerfb {

struct AllocationConfig {
  int reviews_per_deliverable = 6;
  int optional_cap_per_session = 6;
  std::optional<int> max_reviews_per_student_total;  // empty = unlimited
  std::uint64_t rng_seed = 0;
};

struct AllocationPlan {
  std::vector<ReviewAssignment> assignments;
  std::map<ParticipantId, int> per_reviewer_load;
};

// Balanced mandatory allocation: every deliverable gets exactly
// cfg.reviews_per_deliverable distinct reviewers, nobody reviews their own
// deliverable, and reviewer loads differ by at most one. Assignment ids are
// "<id_prefix><n>" numbered from 1 in plan order.
//
// Seeded-shuffle round robin over deliverables, each slot going to the least
// loaded eligible reviewer; slots the greedy pass cannot fill are placed by an
// augmenting-path search that reshuffles earlier picks. Loads are capped at
// floor(T/R) in a first pass and ceil(T/R) in a second, which is what keeps
// the spread within one.
AllocationPlan plan_mandatory(std::span<const Participant> reviewers,
                              std::span<const Deliverable> deliverables,
                              const AllocationConfig& cfg,
                              std::string_view id_prefix = "a");

// Re-derives every plan invariant from the raw assignments.
Violations verify_allocation(const AllocationPlan& plan, const AllocationConfig& cfg,
                             std::span<const Participant> reviewers,
                             std::span<const Deliverable> deliverables);

// Mutable per-session allocation state: the mandatory plan plus optional
// reviews handed out one at a time. Not thread-safe; callers serialize per
// session.
class SessionAllocation {
 public:
  SessionAllocation(EvaluationSession session, std::vector<Participant> reviewers,
                    std::vector<Deliverable> deliverables, AllocationConfig cfg,
                    std::string id_prefix = "a");

  const EvaluationSession& session() const noexcept { return session_; }
  const AllocationConfig& config() const noexcept { return cfg_; }
  const std::vector<ReviewAssignment>& assignments() const noexcept { return assignments_; }
  const std::vector<Deliverable>& deliverables() const noexcept { return deliverables_; }
  const std::vector<Participant>& reviewers() const noexcept { return reviewers_; }

  bool has_reviewer(const ParticipantId& id) const;
  const Deliverable* find_deliverable(const DeliverableId& id) const;
  const ReviewAssignment* find(const AssignmentId& id) const;

  // Runs plan_mandatory once; throws Errc::conflict if already allocated.
  const AllocationPlan& allocate_mandatory();
  bool allocated() const noexcept { return plan_.has_value(); }

  // Next optional assignment for the reviewer, or nullopt when mandatory work
  // is pending, an optional review is already outstanding, the session cap
  // (or the lifetime cap given reviews from other sessions) is reached, or
  // nothing is left to review.
  std::optional<ReviewAssignment> next_optional(const ParticipantId& reviewer,
                                                int reviews_in_other_sessions = 0);

  ReviewAssignment& mark_submitted(const AssignmentId& id, Timestamp at);

  int pending_count(const ParticipantId& reviewer, Obligation o) const;
  int submitted_count(const ParticipantId& reviewer, Obligation o) const;
  int issued_count(const ParticipantId& reviewer, Obligation o) const;
  int received_count(const DeliverableId& d) const;

 private:
  EvaluationSession session_;
  std::vector<Participant> reviewers_;
  std::vector<Deliverable> deliverables_;
  AllocationConfig cfg_;
  std::string id_prefix_;
  std::optional<AllocationPlan> plan_;
  std::vector<ReviewAssignment> assignments_;
  std::vector<std::size_t> optional_order_;  // seeded tie-break rank per deliverable
  int next_serial_ = 1;
};

}  // namespace peerfb
