// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "oracle.hpp"
#include "peerfb/allocation.hpp"
#include "peerfb/analytics.hpp"
#include "peerfb/feedback_quality.hpp"
#include "peerfb/gamification.hpp"
#include "peerfb/service.hpp"
#include "peerfb/simharness.hpp"

using namespace peerfb;
using namespace std::chrono;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failed sub-checks for one criterion.
struct Checker {
  std::vector<std::string> failures;
  void operator()(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  Outcome done(std::string detail) const {
    if (failures.empty()) return {true, std::move(detail)};
    std::string msg = failures.front();
    if (failures.size() > 1) msg += fmt::format(" (+{} more)", failures.size() - 1);
    return {false, msg};
  }
};

int g_failed = 0;

void criterion(const std::string& name, const std::function<Outcome()>& body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, fmt::format("threw: {}", e.what())};
  }
  if (!o.pass) ++g_failed;
  std::cout << fmt::format("{} {}: {}", o.pass ? "PASS" : "FAIL", name, o.detail) << std::endl;
}

std::vector<Participant> students(int n) {
  std::vector<Participant> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({ParticipantId(fmt::format("p{}", i)), Role::student, fmt::format("a{}", i), std::nullopt});
  }
  return out;
}

std::vector<Deliverable> deliverables(const std::vector<Participant>& owners, int n) {
  std::vector<Deliverable> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({DeliverableId(fmt::format("d{}", i)), owners[static_cast<std::size_t>(i) % owners.size()].id, 1,
                   "uri", DeliverableKind::presentation});
  }
  return out;
}

// Independent plan check over index grids.
std::string grid_check(const AllocationPlan& plan, const std::vector<Participant>& rs,
                       const std::vector<Deliverable>& ds, int k) {
  std::map<ParticipantId, std::size_t> ri;
  std::map<DeliverableId, std::size_t> di;
  for (std::size_t i = 0; i < rs.size(); ++i) ri[rs[i].id] = i;
  for (std::size_t i = 0; i < ds.size(); ++i) di[ds[i].id] = i;
  std::vector<std::vector<int>> grid(ds.size(), std::vector<int>(rs.size(), 0));
  for (const auto& a : plan.assignments) {
    if (!ri.contains(a.reviewer) || !di.contains(a.deliverable)) return "unknown id";
    ++grid[di[a.deliverable]][ri[a.reviewer]];
  }
  std::vector<int> load(rs.size(), 0);
  for (std::size_t d = 0; d < ds.size(); ++d) {
    int cover = 0;
    for (std::size_t r = 0; r < rs.size(); ++r) {
      if (grid[d][r] > 1) return "duplicate pair";
      if (grid[d][r] && rs[r].id == ds[d].owner) return "self review";
      cover += grid[d][r];
      load[r] += grid[d][r];
    }
    if (cover != k) return fmt::format("deliverable {} covered {} times", d, cover);
  }
  const auto [lo, hi] = std::minmax_element(load.begin(), load.end());
  if (*hi - *lo > 1) return "load spread above one";
  return "";
}

Outcome allocation_fixture() {
  Checker check;
  const auto rs = students(34);
  const auto ds = deliverables(rs, 17);
  AllocationConfig cfg;
  cfg.reviews_per_deliverable = 6;
  cfg.rng_seed = 2024;
  const auto t0 = steady_clock::now();
  const auto plan = plan_mandatory(rs, ds, cfg);
  const double secs = duration<double>(steady_clock::now() - t0).count();
  std::map<ParticipantId, int> load;
  int self = 0;
  for (const auto& a : plan.assignments) {
    ++load[a.reviewer];
    for (const auto& d : ds) self += d.id == a.deliverable && d.owner == a.reviewer;
  }
  check(plan.assignments.size() == 102, "expected 102 assignments");
  check(load.size() == 34, "not every reviewer has work");
  for (const auto& [id, n] : load) check(n == 3, fmt::format("{} has {} reviews", id.value, n));
  check(self == 0, "self review present");
  check(verify_allocation(plan, cfg, rs, ds).empty(), "verify_allocation reported violations");
  check(grid_check(plan, rs, ds, 6).empty(), "independent grid check failed");
  check(secs < 1.0, fmt::format("took {:.3f} s", secs));
  return check.done(fmt::format("102 assignments, 3 per reviewer, 0 self-reviews, {:.4f} s (< 1 s)", secs));
}

Outcome allocation_properties() {
  Checker check;
  Rng rng(500);
  int instances = 0;
  while (instances < 500) {
    const int nr = 2 + static_cast<int>(rng.below(199));
    const int nd = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(nr)));
    const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min(nr - 1, 8))));
    const auto rs = students(nr);
    const auto ds = deliverables(rs, nd);
    AllocationConfig cfg;
    cfg.reviews_per_deliverable = k;
    cfg.rng_seed = rng.next();
    const auto plan = plan_mandatory(rs, ds, cfg);
    const auto v = verify_allocation(plan, cfg, rs, ds);
    check(v.empty(), fmt::format("instance {} ({}x{}, k={}): {}", instances, nr, nd, k,
                                 v.empty() ? "" : v.front().reason));
    const auto g = grid_check(plan, rs, ds, k);
    check(g.empty(), fmt::format("instance {}: {}", instances, g));
    const auto again = plan_mandatory(rs, ds, cfg);
    bool same = again.assignments.size() == plan.assignments.size();
    for (std::size_t i = 0; same && i < plan.assignments.size(); ++i) {
      same = plan.assignments[i].reviewer == again.assignments[i].reviewer &&
             plan.assignments[i].deliverable == again.assignments[i].deliverable;
    }
    check(same, fmt::format("instance {} not deterministic", instances));
    ++instances;
  }
  return check.done("500 random instances (<= 200 reviewers) verified; re-runs identical under fixed seed");
}

Outcome stats_oracle() {
  Checker check;
  constexpr double tol = 1e-9;
  auto close = [](double a, double b) { return std::fabs(a - b) <= tol * std::max(1.0, std::fabs(b)); };

  // Textbook split-plot fixture.
  ExperimentDataset book;
  const double control[4][2] = {{3, 5}, {4, 6}, {2, 4}, {5, 6}};
  const double treatment[4][2] = {{6, 7}, {7, 9}, {5, 8}, {8, 8}};
  for (int i = 0; i < 4; ++i) {
    for (int s = 0; s < 2; ++s) {
      book.add({fmt::format("c{}", i), Condition::control, s + 1, "m", control[i][s]});
      book.add({fmt::format("t{}", i), Condition::treatment, s + 1, "m", treatment[i][s]});
    }
  }
  const auto r = mixed_anova_2x2(book, "m");
  check(oracle::compare(r, oracle::anova(book, "m"), tol).empty(), "textbook fixture differs from oracle");
  check(close(r.condition.f, 16.705263157894738), "textbook condition F");
  check(close(r.time.f, 22.043478260869563), "textbook session F");
  check(close(r.interaction.f, 0.13043478260869565), "textbook interaction F");

  // t-test against first-principles pooled variance and Boost's t distribution.
  Rng rng(77);
  auto ttest_oracle_ok = [&](const std::vector<double>& x, const std::vector<double>& y) {
    auto mean = [](const std::vector<double>& v) {
      double s = 0;
      for (double e : v) s += e;
      return s / static_cast<double>(v.size());
    };
    const double mx = mean(x), my = mean(y);
    double ssx = 0, ssy = 0;
    for (double e : x) ssx += (e - mx) * (e - mx);
    for (double e : y) ssy += (e - my) * (e - my);
    const double df = static_cast<double>(x.size() + y.size() - 2);
    const double sp2 = (ssx + ssy) / df;
    const double t = (mx - my) / std::sqrt(sp2 * (1.0 / x.size() + 1.0 / y.size()));
    const boost::math::students_t dist(df);
    const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
    const auto got = stats::ttest_ind(x, y);
    return close(got.t, t) && std::fabs(got.p - p) <= tol && got.df == df;
  };
  check(ttest_oracle_ok({3, 4, 2, 5}, {6, 7, 5, 8}), "t-test on fixture");
  int t_cases = 1;
  for (int k = 0; k < 100; ++k) {
    std::vector<double> x, y;
    const int nx = 2 + static_cast<int>(rng.below(15)), ny = 2 + static_cast<int>(rng.below(15));
    for (int i = 0; i < nx; ++i) x.push_back(rng.normal(5, 2));
    for (int i = 0; i < ny; ++i) y.push_back(rng.normal(5.5, 2));
    check(ttest_oracle_ok(x, y), fmt::format("t-test case {}", k));
    ++t_cases;
  }

  int anova_cases = 0;
  for (int k = 0; k < 100; ++k) {
    const auto ds = oracle::random_dataset(rng);
    const auto res = mixed_anova_2x2(ds, "m");
    const auto diff = oracle::compare(res, oracle::anova(ds, "m"), tol);
    check(diff.empty(), fmt::format("anova case {}: {}", k, diff));
    const double parts = res.condition.ss + res.condition.ss_error + res.time.ss + res.interaction.ss +
                         res.time.ss_error;
    check(std::fabs(parts - res.ss_total) <= tol * std::max(1.0, res.ss_total),
          fmt::format("SS conservation case {}", k));
    ++anova_cases;
  }
  return check.done(fmt::format("textbook + {} ANOVA and {} t-test cases within {:g}; SS conserved", anova_cases,
                                t_cases, tol));
}

Outcome report_shape() {
  Checker check;
  sim::SimConfig cfg;
  cfg.rng_seed = 21;
  const auto ds = sim::simulate_cohort(cfg).dataset;
  const auto report = build_report(ds);
  const std::vector<std::string> labels = {
      "Amount of feedback given across both sessions",
      "Amount of feedback given (Session 1)",
      "Amount of feedback given (Session 2)",
      "Overall quality of feedback given across both sessions (max 9)",
      "Session 1: Total quality of feedback",
      "Session 1: Average Clarity",
      "Session 1: Average Relevance",
      "Session 1: Average Specificity",
      "Session 2: Total quality of feedback",
      "Session 2: Average Clarity",
      "Session 2: Average Relevance",
      "Session 2: Average Specificity"};
  check(report.rows.size() == 12, fmt::format("{} rows", report.rows.size()));
  for (std::size_t i = 0; i < std::min(labels.size(), report.rows.size()); ++i) {
    check(report.rows[i].label == labels[i], fmt::format("row {} is '{}'", i + 1, report.rows[i].label));
  }
  for (const auto& row : report.rows) {
    check(row.test.has_value(), row.label + " has no test");
    if (row.test) check(row.significant == (row.test->p < kAlpha), row.label + " flag mismatch");
  }

  // A planted effect must be flagged, a null one must not.
  ExperimentDataset planted;
  Rng rng(4);
  for (int i = 0; i < 12; ++i) {
    for (int k = 1; k <= 2; ++k) {
      planted.add({fmt::format("c{}", i), Condition::control, k, "reviews_given", rng.normal(3, 0.5)});
      planted.add({fmt::format("t{}", i), Condition::treatment, k, "reviews_given", rng.normal(6, 0.5)});
    }
  }
  const auto pr = build_report(planted);
  check(!pr.rows.empty() && pr.rows[0].significant, "planted effect not flagged");
  ExperimentDataset twin;
  for (int i = 0; i < 12; ++i) {
    for (int k = 1; k <= 2; ++k) {
      const double v = rng.normal(4, 1);
      twin.add({fmt::format("c{}", i), Condition::control, k, "reviews_given", v});
      twin.add({fmt::format("t{}", i), Condition::treatment, k, "reviews_given", v});
    }
  }
  for (const auto& row : build_report(twin).rows) check(!row.significant, "identical groups flagged");
  return check.done("12 rows in order; flags equal p < 0.05 on every row; planted effect flagged, twins not");
}

ReviewAssignment paid(const std::string& id, const std::string& who, Obligation o, Timeliness t) {
  ReviewAssignment a;
  a.id = AssignmentId(id);
  a.reviewer = ParticipantId(who);
  a.deliverable = DeliverableId("d");
  a.obligation = o;
  a.status = ReviewStatus::submitted;
  a.timeliness = t;
  a.submitted_at = start_of_day(parse_date("2024-03-05"));
  return a;
}

Outcome economy() {
  Checker check;
  const Timestamp t0 = start_of_day(parse_date("2024-03-05"));
  const auto rewards = Rulebook::default_rewards();
  int interleavings = 0;
  for (std::uint64_t seed = 1; seed <= 10000; ++seed) {
    GamificationEngine engine(Rulebook{});
    Rng rng(seed);
    for (int step = 0; step < 24; ++step) {
      const std::string who = fmt::format("s{}", rng.below(3));
      try {
        switch (rng.below(5)) {
          case 0:
            engine.award_review_points(paid(fmt::format("a{}", step), who,
                                            rng.bernoulli(0.5) ? Obligation::mandatory : Obligation::optional,
                                            rng.bernoulli(0.8) ? Timeliness::on_time : Timeliness::late),
                                       t0 + seconds{step});
            break;
          case 1:
            engine.record_review_quality(ParticipantId(who), static_cast<int>(rng.below(10)), t0);
            break;
          case 2:
            engine.spin_wheel(ParticipantId(who), rng.bernoulli(0.8), rng.uniform01(), t0);
            break;
          case 3:
            engine.redeem_reward(ParticipantId(who), rewards[rng.below(rewards.size())].id, t0);
            break;
          default:
            engine.award_consult_bonus(ParticipantId(who), ConsultBonusKind::first_use,
                                       fmt::format("first:{}:{}", who, rng.below(2)), t0);
        }
      } catch (const Error&) {
      }
    }
    const auto snap = engine.ledger().snapshot();
    check(Ledger::replay_balances(snap) == engine.ledger().cached_balances(),
          fmt::format("replay mismatch at seed {}", seed));
    ++interleavings;
  }

  const BadgeRules rules;
  for (int t : {6, 7, 8}) {
    for (const auto& b : evaluate_badges(rules, std::vector<int>(10, t), {}, t0)) {
      check(rules.thresholds[static_cast<int>(b.kind)] < t, fmt::format("total {} counted at its own threshold", t));
    }
  }
  auto holds = [](const std::vector<Badge>& bs, BadgeKind k, BadgeTier tier) {
    return std::any_of(bs.begin(), bs.end(), [&](const Badge& b) { return b.kind == k && b.tier == tier; });
  };
  for (int n = 0; n <= 7; ++n) {
    const auto got = evaluate_badges(rules, std::vector<int>(static_cast<std::size_t>(n), 9), {}, t0);
    check(holds(got, BadgeKind::comment_crusader, BadgeTier::bronze) == (n >= 1), "bronze tier count");
    check(holds(got, BadgeKind::comment_crusader, BadgeTier::silver) == (n >= 3), "silver tier count");
    check(holds(got, BadgeKind::comment_crusader, BadgeTier::gold) == (n >= 6), "gold tier count");
  }

  GamificationEngine e(Rulebook{});
  const auto first = e.award_review_points(paid("x1", "s", Obligation::optional, Timeliness::on_time), t0);
  for (int i = 0; i < 3; ++i) e.record_review_quality(ParticipantId("s"), 7, t0);
  const auto second = e.award_review_points(paid("x2", "s", Obligation::optional, Timeliness::on_time), t0);
  check(first.review.net_xp == 15 && second.review.net_xp == 18, "multiplier applied out of order");
  check(e.ledger().snapshot().front().net_xp == 15, "earlier credit changed");

  check(rewards.size() == 3 && rewards[0].cost_xp == 300 && rewards[1].cost_xp == 250 && rewards[2].cost_xp == 200,
        "store costs are not 300/250/200");
  GamificationEngine rich(Rulebook{});
  const ParticipantId s("rich");
  for (int i = 0; i < 60; ++i) {
    rich.award_review_points(paid(fmt::format("r{}", i), "rich", Obligation::mandatory, Timeliness::on_time), t0);
  }
  for (const auto& rw : rewards) {
    const Xp before = rich.ledger().balance(s);
    rich.redeem_reward(s, rw.id, t0);
    check(before - rich.ledger().balance(s) == rw.cost_xp, rw.id + " debit wrong");
    bool second_refused = false;
    try {
      rich.redeem_reward(s, rw.id, t0);
    } catch (const Error& err) {
      second_refused = std::string(err.what()) == "already redeemed";
    }
    check(second_refused, rw.id + " redeemed twice");
  }
  return check.done(fmt::format("{} interleavings replay to cached balances; strict thresholds; tiers 1/3/6; "
                                "multiplier only forward; one-of-each at 300/250/200 XP",
                                interleavings));
}

Outcome wheel() {
  Checker check;
  const auto w = WheelConfig::defaults();
  Rng rng(100000);
  std::map<int, int> counts;
  constexpr int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[w.prize_for(rng.uniform01())];
  double chi2 = 0;
  for (const auto& s : w.sections) {
    const double expected = n * s.probability.value();
    chi2 += (counts[s.prize_xp] - expected) * (counts[s.prize_xp] - expected) / expected;
  }
  const boost::math::chi_squared dist(static_cast<double>(w.sections.size() - 1));
  const double critical = boost::math::quantile(boost::math::complement(dist, 0.01));
  check(chi2 < critical, fmt::format("chi2 {:.3f} >= {:.3f}", chi2, critical));

  GamificationEngine e(Rulebook{});
  const Timestamp t0 = start_of_day(parse_date("2024-03-05"));
  auto message = [&](const std::function<void()>& f) -> std::string {
    try {
      f();
    } catch (const Error& err) {
      return err.what();
    }
    return "";
  };
  check(message([&] { e.spin_wheel(ParticipantId("a"), false, 0.5, t0); }) == "wheel locked",
        "spin allowed with mandatory pending");
  e.spin_wheel(ParticipantId("a"), true, 0.5, t0);
  check(message([&] { e.spin_wheel(ParticipantId("a"), true, 0.5, t0); }) == "spin pending",
        "second unconsumed spin allowed");
  return check.done(fmt::format("chi2 = {:.3f} < {:.3f} (df {}, alpha 0.01) over 1e5 spins; locked and pending "
                                "spins refused",
                                chi2, critical, w.sections.size() - 1));
}

Outcome triggers() {
  Checker check;
  for (int total = 0; total <= 9; ++total) {
    check(below_half(total) == (total <= 4), fmt::format("trigger wrong at {}", total));
  }
  int sequences = 0;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    Rng rng(seed);
    GamificationEngine engine(Rulebook{});
    const Timestamp t0 = start_of_day(parse_date("2024-03-05"));
    std::map<std::string, std::optional<int>> latest;
    for (int step = 0; step < 200; ++step) {
      const ParticipantId st(fmt::format("s{}", rng.below(4)));
      const int session = 1 + static_cast<int>(rng.below(2));
      const AssignmentId review(fmt::format("{}-{}-{}", st.value, session, rng.below(3)));
      if (rng.bernoulli(0.3)) {
        latest[review.value] = static_cast<int>(rng.below(10));
        continue;
      }
      engine.award_consult_bonus(st, ConsultBonusKind::first_use, first_consult_cause(st, session), t0);
      if (low_score_bonus_eligible(engine.rules().points, latest[review.value])) {
        engine.award_consult_bonus(st, ConsultBonusKind::low_score, low_score_consult_cause(review), t0);
      }
    }
    std::map<std::string, int> per_cause;
    for (const auto& e : engine.ledger().snapshot()) {
      if (e.event == LedgerEvent::consult_bonus) ++per_cause[e.cause];
    }
    for (const auto& [cause, n] : per_cause) check(n == 1, fmt::format("{} paid {} times", cause, n));
    ++sequences;
  }
  return check.done(fmt::format("popup exactly for totals 0-4 of 0-9; {} random consult sequences pay each "
                                "scope at most once",
                                sequences));
}

bool has_any_key(const nlohmann::json& doc, const std::vector<std::string>& keys) {
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

// Runs one fixed script; `flip` swaps every student's condition.
std::pair<std::string, int> gated_run(bool flip) {
  PlatformConfig cfg;
  cfg.allocation.reviews_per_deliverable = 3;
  cfg.allocation.rng_seed = 9;
  Platform p(cfg, nullptr, std::make_unique<MockProvider>());
  const Date d = parse_date("2024-03-04");
  const Timestamp t0 = start_of_day(d);
  const auto course = p.create_course(Platform::kAdmin, "gating", t0);
  std::vector<ParticipantId> ids;
  for (int i = 0; i < 8; ++i) {
    const ParticipantId id(fmt::format("s{}", i));
    const bool treat = (i % 2 == 0) != flip;
    p.add_participant(Platform::kAdmin, course,
                      {id, Role::student, fmt::format("Alias {}", i), treat ? Condition::treatment : Condition::control},
                      t0);
    ids.push_back(id);
  }
  Questionnaire q;
  q.questions = {{"f", QuestionKind::open_ended, "Feedback", {}, 0}};
  const auto qid = p.create_questionnaire(Platform::kAdmin, q, t0);
  const auto session = p.create_session(Platform::kAdmin, course, 1, d, qid, t0);
  for (const auto& id : ids) p.add_deliverable(Platform::kAdmin, session, id, "u", DeliverableKind::document, t0);
  p.allocate(Platform::kAdmin, session, t0);
  Rng rng(31);
  const std::vector<std::string> texts = {
      "good job",
      "The structure of the content was well organized. For example, the diagram on slide 3 explained the design "
      "well. The introduction could be shorter. The examples were helpful.",
      "The slides were clear. The pace could be slower."};
  const Timestamp day2 = start_of_day(d + days{2});
  for (int round = 0; round < 2; ++round) {
    for (const auto& id : ids) {
      for (const auto& a : p.my_assignments(id)) {
        if (a.status != ReviewStatus::pending) continue;
        const auto& text = texts[rng.below(texts.size())];
        if (rng.bernoulli(0.5)) p.assist(id, a.id, text, day2);
        p.submit_review(id, a.id, {{"f", text}}, day2 + minutes{round});
      }
      if (auto extra = p.request_optional(id, session, day2)) {
        p.submit_review(id, extra->id, {{"f", texts[1]}}, day2 + hours{1});
      }
    }
  }
  int leaks = 0;
  const auto& keys = gamification_keys();
  const Timestamp later = start_of_day(d + days{6});
  for (const auto& id : ids) {
    if (p.participant(id).condition != Condition::control) continue;
    for (const auto& doc : {p.assignments_view(id), p.gamification_view(id, id), p.received_feedback_view(id, later),
                            p.notifications_view(id), p.rulebook_view(id)}) {
      leaks += has_any_key(doc, keys);
    }
  }
  return {p.ledger().serialize(), leaks};
}

Outcome condition_gating() {
  Checker check;
  const auto [ledger_a, leaks_a] = gated_run(false);
  const auto [ledger_b, leaks_b] = gated_run(true);
  check(ledger_a == ledger_b, "ledgers differ between condition assignments");
  check(!ledger_a.empty(), "empty ledger");
  check(leaks_a == 0 && leaks_b == 0, fmt::format("{} control views carry gamification fields", leaks_a + leaks_b));
  return check.done(fmt::format("ledgers byte-identical across swapped conditions ({} bytes); 0 gamification "
                                "fields in control views",
                                ledger_a.size()));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome end_to_end() {
  Checker check;
  const auto base = fs::temp_directory_path() / "peerfb_acceptance";
  fs::remove_all(base);
  sim::SimConfig cfg;
  cfg.rng_seed = 7;
  const auto t0 = steady_clock::now();
  const auto first = sim::run_experiment(cfg, base / "a");
  const double secs = duration<double>(steady_clock::now() - t0).count();
  sim::run_experiment(cfg, base / "b");
  check(secs < 60.0, fmt::format("took {:.1f} s", secs));
  check(ingest_observations(first.files.observations) == first.sim.dataset, "observation file not lossless");
  check(slurp(base / "a" / "report.txt") == slurp(base / "b" / "report.txt"), "report.txt differs");
  check(slurp(base / "a" / "report.csv") == slurp(base / "b" / "report.csv"), "report.csv differs");
  check(first.report.rows.size() == 12, "report is not 12 rows");

  int non_significant = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    sim::SimConfig null_cfg = sim::null_model(sim::SimConfig{});
    null_cfg.rng_seed = seed;
    const auto r = build_report(sim::simulate_cohort(null_cfg).dataset);
    bool significant = false;
    for (const auto& a : r.anovas) {
      if (a.measure == measures::reviews_given) significant = a.result.condition.p < kAlpha;
    }
    non_significant += !significant;
  }
  check(non_significant >= 45, fmt::format("only {}/50 null seeds non-significant", non_significant));
  fs::remove_all(base);
  return check.done(fmt::format("run in {:.2f} s (< 60 s); lossless ingest; identical report bytes for seed 7; "
                                "null model non-significant in {}/50 seeds (>= 45)",
                                secs, non_significant));
}

}  // namespace

int main() {
  criterion("allocation-fixture", allocation_fixture);
  criterion("allocation-properties", allocation_properties);
  criterion("statistics-oracle", stats_oracle);
  criterion("report-shape", report_shape);
  criterion("gamification-economy", economy);
  criterion("wheel", wheel);
  criterion("feedback-quality-triggers", triggers);
  criterion("condition-gating", condition_gating);
  criterion("end-to-end", end_to_end);
  std::cout << fmt::format("{} criteria failed", g_failed) << std::endl;
  return g_failed;
}
