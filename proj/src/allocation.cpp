#include "peerfb/allocation.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <set>

#include <fmt/format.h>

namespace peerfb {

namespace {

// Bipartite slot filler over deliverables x reviewers.
class SlotFiller {
 public:
  SlotFiller(std::vector<std::vector<bool>> eligible, std::vector<std::size_t> reviewer_order)
      : eligible_(std::move(eligible)),
        order_(std::move(reviewer_order)),
        assigned_(eligible_.size(),
                  std::vector<bool>(eligible_.empty() ? 0 : eligible_[0].size(), false)),
        load_(order_.size(), 0) {}

  bool assigned(std::size_t d, std::size_t r) const { return assigned_[d][r]; }
  int load(std::size_t r) const { return load_[r]; }

  // Fills one slot of deliverable d with reviewer load <= cap - 1 beforehand.
  bool fill(std::size_t d, int cap) {
    if (greedy(d, cap)) return true;
    return augment(d, cap);
  }

 private:
  bool greedy(std::size_t d, int cap) {
    std::optional<std::size_t> best;
    for (std::size_t r : order_) {
      if (!eligible_[d][r] || assigned_[d][r] || load_[r] >= cap) continue;
      if (!best || load_[r] < load_[*best]) best = r;
    }
    if (!best) return false;
    set(d, *best, true);
    return true;
  }

  // BFS for an alternating path d0 -> r1 -> d1 -> r2 ... ending at a reviewer
  // under cap; applying it moves each r_i from d_i to d_{i-1}.
  bool augment(std::size_t d0, int cap) {
    const std::size_t nd = assigned_.size();
    const std::size_t nr = load_.size();
    std::vector<std::optional<std::size_t>> parent_of_r(nr);
    std::vector<std::optional<std::size_t>> parent_of_d(nd);
    std::vector<bool> seen_d(nd, false);
    std::deque<std::size_t> queue{d0};
    seen_d[d0] = true;
    while (!queue.empty()) {
      const std::size_t d = queue.front();
      queue.pop_front();
      for (std::size_t r : order_) {
        if (!eligible_[d][r] || assigned_[d][r] || parent_of_r[r]) continue;
        parent_of_r[r] = d;
        if (load_[r] < cap) {
          apply(d0, r, parent_of_r, parent_of_d);
          return true;
        }
        for (std::size_t next = 0; next < nd; ++next) {
          if (assigned_[next][r] && !seen_d[next]) {
            seen_d[next] = true;
            parent_of_d[next] = r;
            queue.push_back(next);
          }
        }
      }
    }
    return false;
  }

  void apply(std::size_t d0, std::size_t r,
             const std::vector<std::optional<std::size_t>>& parent_of_r,
             const std::vector<std::optional<std::size_t>>& parent_of_d) {
    while (true) {
      const std::size_t d = *parent_of_r[r];
      set(d, r, true);
      if (d == d0) return;
      r = *parent_of_d[d];
      set(d, r, false);
    }
  }

  void set(std::size_t d, std::size_t r, bool on) {
    assigned_[d][r] = on;
    load_[r] += on ? 1 : -1;
  }

  std::vector<std::vector<bool>> eligible_;
  std::vector<std::size_t> order_;
  std::vector<std::vector<bool>> assigned_;
  std::vector<int> load_;
};

[[noreturn]] void infeasible() { throw Error(Errc::invalid_argument, "infeasible allocation"); }

}  // namespace

AllocationPlan plan_mandatory(std::span<const Participant> reviewers,
                              std::span<const Deliverable> deliverables,
                              const AllocationConfig& cfg, std::string_view id_prefix) {
  if (reviewers.empty()) infeasible();
  if (cfg.reviews_per_deliverable < 1 || cfg.optional_cap_per_session < 0) {
    throw Error(Errc::invalid_argument, "allocation counts must be positive");
  }
  const std::size_t nr = reviewers.size();
  const std::size_t nd = deliverables.size();
  const int k = cfg.reviews_per_deliverable;

  {
    std::set<ParticipantId> ids;
    for (const auto& r : reviewers) {
      if (!ids.insert(r.id).second) {
        throw Error(Errc::invalid_argument,
                    fmt::format("duplicate reviewer '{}'", r.id.value));
      }
    }
  }

  std::vector<std::vector<bool>> eligible(nd, std::vector<bool>(nr, false));
  for (std::size_t d = 0; d < nd; ++d) {
    int count = 0;
    for (std::size_t r = 0; r < nr; ++r) {
      eligible[d][r] = reviewers[r].id != deliverables[d].owner;
      count += eligible[d][r] ? 1 : 0;
    }
    if (count < k) infeasible();
  }

  Rng rng(cfg.rng_seed);
  std::vector<std::size_t> deliverable_order(nd);
  std::iota(deliverable_order.begin(), deliverable_order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(deliverable_order));
  std::vector<std::size_t> reviewer_order(nr);
  std::iota(reviewer_order.begin(), reviewer_order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(reviewer_order));

  const long total = static_cast<long>(nd) * k;
  const int floor_load = static_cast<int>(total / static_cast<long>(nr));
  const int ceil_load = floor_load + (total % static_cast<long>(nr) != 0 ? 1 : 0);

  SlotFiller filler(std::move(eligible), reviewer_order);
  std::vector<int> open(nd, k);
  long placed = 0;
  for (int cap : {floor_load, ceil_load}) {
    bool progress = true;
    while (progress) {
      progress = false;
      for (int round = 0; round < k; ++round) {
        for (std::size_t d : deliverable_order) {
          if (open[d] == 0 || open[d] < k - round) continue;
          if (filler.fill(d, cap)) {
            --open[d];
            ++placed;
            progress = true;
          }
        }
      }
    }
    if (cap == floor_load && placed != static_cast<long>(nr) * floor_load) infeasible();
  }
  if (placed != total) infeasible();

  AllocationPlan plan;
  for (const auto& r : reviewers) plan.per_reviewer_load[r.id] = 0;
  int serial = 1;
  for (std::size_t d : deliverable_order) {
    for (std::size_t r : reviewer_order) {
      if (!filler.assigned(d, r)) continue;
      plan.assignments.push_back(make_assignment(
          AssignmentId(fmt::format("{}{}", id_prefix, serial++)), reviewers[r].id,
          deliverables[d], Obligation::mandatory));
      ++plan.per_reviewer_load[reviewers[r].id];
    }
  }
  return plan;
}

Violations verify_allocation(const AllocationPlan& plan, const AllocationConfig& cfg,
                             std::span<const Participant> reviewers,
                             std::span<const Deliverable> deliverables) {
  Violations out;
  std::map<DeliverableId, const Deliverable*> by_id;
  for (const auto& d : deliverables) by_id[d.id] = &d;
  std::map<ParticipantId, int> load;
  for (const auto& r : reviewers) load[r.id] = 0;
  std::map<DeliverableId, int> coverage;
  std::set<std::pair<ParticipantId, DeliverableId>> pairs;
  std::set<AssignmentId> ids;

  for (const auto& a : plan.assignments) {
    if (!ids.insert(a.id).second) out.push_back({a.id.value, "duplicate assignment id"});
    if (a.obligation != Obligation::mandatory) out.push_back({a.id.value, "obligation"});
    auto d = by_id.find(a.deliverable);
    if (d == by_id.end()) {
      out.push_back({a.id.value, "unknown deliverable"});
      continue;
    }
    auto l = load.find(a.reviewer);
    if (l == load.end()) {
      out.push_back({a.id.value, "unknown reviewer"});
      continue;
    }
    if (a.reviewer == d->second->owner) out.push_back({a.id.value, "self-review"});
    if (!pairs.insert({a.reviewer, a.deliverable}).second) {
      out.push_back({a.id.value, "duplicate pair"});
    }
    ++l->second;
    ++coverage[a.deliverable];
  }
  for (const auto& d : deliverables) {
    if (coverage[d.id] != cfg.reviews_per_deliverable) out.push_back({d.id.value, "coverage"});
  }
  if (!load.empty()) {
    auto [lo, hi] = std::minmax_element(load.begin(), load.end(), [](const auto& a, const auto& b) {
      return a.second < b.second;
    });
    if (hi->second - lo->second > 1) out.push_back({hi->first.value, "balance"});
  }
  for (const auto& [id, n] : load) {
    auto it = plan.per_reviewer_load.find(id);
    const int reported = it == plan.per_reviewer_load.end() ? 0 : it->second;
    if (reported != n) out.push_back({id.value, "load mismatch"});
  }
  return out;
}

SessionAllocation::SessionAllocation(EvaluationSession session,
                                     std::vector<Participant> reviewers,
                                     std::vector<Deliverable> deliverables,
                                     AllocationConfig cfg, std::string id_prefix)
    : session_(session),
      reviewers_(std::move(reviewers)),
      deliverables_(std::move(deliverables)),
      cfg_(cfg),
      id_prefix_(std::move(id_prefix)) {
  std::vector<std::size_t> order(deliverables_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(cfg_.rng_seed, 0x0b710a1));
  rng.shuffle(std::span<std::size_t>(order));
  optional_order_.assign(order.size(), 0);
  for (std::size_t rank = 0; rank < order.size(); ++rank) optional_order_[order[rank]] = rank;
}

bool SessionAllocation::has_reviewer(const ParticipantId& id) const {
  return std::any_of(reviewers_.begin(), reviewers_.end(),
                     [&](const Participant& p) { return p.id == id; });
}

const Deliverable* SessionAllocation::find_deliverable(const DeliverableId& id) const {
  for (const auto& d : deliverables_) {
    if (d.id == id) return &d;
  }
  return nullptr;
}

const ReviewAssignment* SessionAllocation::find(const AssignmentId& id) const {
  for (const auto& a : assignments_) {
    if (a.id == id) return &a;
  }
  return nullptr;
}

const AllocationPlan& SessionAllocation::allocate_mandatory() {
  if (plan_) throw Error(Errc::conflict, "session already allocated");
  plan_ = plan_mandatory(reviewers_, deliverables_, cfg_, id_prefix_);
  assignments_ = plan_->assignments;
  next_serial_ = static_cast<int>(assignments_.size()) + 1;
  return *plan_;
}

std::optional<ReviewAssignment> SessionAllocation::next_optional(const ParticipantId& reviewer,
                                                                 int reviews_in_other_sessions) {
  if (!has_reviewer(reviewer)) throw Error(Errc::not_found, "no such participant");
  if (pending_count(reviewer, Obligation::mandatory) > 0) return std::nullopt;
  if (pending_count(reviewer, Obligation::optional) > 0) return std::nullopt;
  if (issued_count(reviewer, Obligation::optional) >= cfg_.optional_cap_per_session) {
    return std::nullopt;
  }
  if (cfg_.max_reviews_per_student_total) {
    const int given = reviews_in_other_sessions + issued_count(reviewer, Obligation::mandatory) +
                      issued_count(reviewer, Obligation::optional);
    if (given >= *cfg_.max_reviews_per_student_total) return std::nullopt;
  }

  std::set<DeliverableId> already;
  for (const auto& a : assignments_) {
    if (a.reviewer == reviewer) already.insert(a.deliverable);
  }
  std::optional<std::size_t> best;
  int best_count = 0;
  for (std::size_t i = 0; i < deliverables_.size(); ++i) {
    const auto& d = deliverables_[i];
    if (d.owner == reviewer || already.contains(d.id)) continue;
    const int count = received_count(d.id);
    if (!best || count < best_count ||
        (count == best_count && optional_order_[i] < optional_order_[*best])) {
      best = i;
      best_count = count;
    }
  }
  if (!best) return std::nullopt;
  assignments_.push_back(make_assignment(
      AssignmentId(fmt::format("{}{}", id_prefix_, next_serial_++)), reviewer,
      deliverables_[*best], Obligation::optional));
  return assignments_.back();
}

ReviewAssignment& SessionAllocation::mark_submitted(const AssignmentId& id, Timestamp at) {
  for (auto& a : assignments_) {
    if (a.id != id) continue;
    if (a.status == ReviewStatus::submitted) throw Error(Errc::conflict, "already submitted");
    a.timeliness = classify_timeliness(session_, at);
    a.status = ReviewStatus::submitted;
    a.submitted_at = at;
    return a;
  }
  throw Error(Errc::not_found, "no such assignment");
}

int SessionAllocation::pending_count(const ParticipantId& reviewer, Obligation o) const {
  return static_cast<int>(std::count_if(assignments_.begin(), assignments_.end(), [&](const auto& a) {
    return a.reviewer == reviewer && a.obligation == o && a.status == ReviewStatus::pending;
  }));
}

int SessionAllocation::submitted_count(const ParticipantId& reviewer, Obligation o) const {
  return static_cast<int>(std::count_if(assignments_.begin(), assignments_.end(), [&](const auto& a) {
    return a.reviewer == reviewer && a.obligation == o && a.status == ReviewStatus::submitted;
  }));
}

int SessionAllocation::issued_count(const ParticipantId& reviewer, Obligation o) const {
  return static_cast<int>(std::count_if(assignments_.begin(), assignments_.end(), [&](const auto& a) {
    return a.reviewer == reviewer && a.obligation == o;
  }));
}

int SessionAllocation::received_count(const DeliverableId& d) const {
  return static_cast<int>(std::count_if(assignments_.begin(), assignments_.end(),
                                        [&](const auto& a) { return a.deliverable == d; }));
}

}  // namespace peerfb
