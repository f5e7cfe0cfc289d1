#include "peerfb/analytics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "peerfb/csv.hpp"

namespace peerfb {

namespace {

int cond_index(Condition c) { return c == Condition::treatment ? 1 : 0; }

std::string format_p(double p) { return fmt::format("{:.4f}", p); }

}  // namespace

void ExperimentDataset::add(Observation obs) {
  if (obs.subject.empty()) throw Error(Errc::invalid_argument, "empty subject id");
  if (obs.measure.empty()) throw Error(Errc::invalid_argument, "empty measure name");
  if (obs.session != 1 && obs.session != 2) {
    throw Error(Errc::invalid_argument, fmt::format("session must be 1 or 2, got {}", obs.session));
  }
  if (!std::isfinite(obs.value)) throw Error(Errc::invalid_argument, "value must be finite");
  auto key = std::make_tuple(obs.subject, obs.session, obs.measure);
  if (index_.contains(key)) {
    throw Error(Errc::conflict, fmt::format("duplicate observation for ({}, {}, {})", obs.subject,
                                            obs.session, obs.measure));
  }
  if (auto it = condition_.find(obs.subject); it == condition_.end()) {
    condition_.emplace(obs.subject, obs.condition);
    subject_order_.push_back(obs.subject);
  } else if (it->second != obs.condition) {
    throw Error(Errc::conflict, fmt::format("conflicting condition for subject {}", obs.subject));
  }
  index_.emplace(std::move(key), obs.value);
  rows_.push_back(std::move(obs));
}

std::set<std::string> ExperimentDataset::measures() const {
  std::set<std::string> out;
  for (const auto& r : rows_) out.insert(r.measure);
  return out;
}

std::set<int> ExperimentDataset::sessions() const {
  std::set<int> out;
  for (const auto& r : rows_) out.insert(r.session);
  return out;
}

std::set<int> ExperimentDataset::sessions_of(std::string_view measure) const {
  std::set<int> out;
  for (const auto& r : rows_) {
    if (r.measure == measure) out.insert(r.session);
  }
  return out;
}

bool ExperimentDataset::has_measure(std::string_view measure) const {
  return std::any_of(rows_.begin(), rows_.end(),
                     [&](const Observation& r) { return r.measure == measure; });
}

std::optional<Condition> ExperimentDataset::condition_of(const std::string& subject) const {
  if (auto it = condition_.find(subject); it != condition_.end()) return it->second;
  return std::nullopt;
}

std::optional<double> ExperimentDataset::value(const std::string& subject, int session,
                                               std::string_view measure) const {
  auto it = index_.find(std::make_tuple(subject, session, std::string(measure)));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

ExperimentDataset ingest_observations(std::istream& in) {
  csv::Reader reader(in);
  const auto header = reader.next();
  const std::vector<std::string> expected = {"subject", "condition", "session", "measure", "value"};
  if (!header || header->fields != expected) {
    throw Error(Errc::invalid_argument,
                "line 1: header must be subject,condition,session,measure,value");
  }
  ExperimentDataset ds;
  while (auto rec = reader.next()) {
    auto fail = [&](const std::string& what) {
      throw Error(Errc::invalid_argument, fmt::format("line {}: {}", rec->line, what));
    };
    if (rec->fields.size() != 5) fail(fmt::format("expected 5 fields, got {}", rec->fields.size()));
    const auto& f = rec->fields;
    Observation obs;
    obs.subject = f[0];
    try {
      obs.condition = parse_condition(f[1]);
    } catch (const Error&) {
      fail(fmt::format("unknown condition '{}'", f[1]));
    }
    {
      auto [ptr, ec] = std::from_chars(f[2].data(), f[2].data() + f[2].size(), obs.session);
      if (f[2].empty() || ec != std::errc{} || ptr != f[2].data() + f[2].size()) {
        fail(fmt::format("bad session '{}'", f[2]));
      }
    }
    obs.measure = f[3];
    {
      auto [ptr, ec] = std::from_chars(f[4].data(), f[4].data() + f[4].size(), obs.value);
      if (f[4].empty() || ec != std::errc{} || ptr != f[4].data() + f[4].size()) {
        fail(fmt::format("bad value '{}'", f[4]));
      }
    }
    try {
      ds.add(std::move(obs));
    } catch (const Error& e) {
      throw Error(e.code(), fmt::format("line {}: {}", rec->line, e.what()));
    }
  }
  return ds;
}

ExperimentDataset ingest_observations(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(Errc::not_found, fmt::format("cannot open {}", file.string()));
  return ingest_observations(in);
}

void export_observations(const ExperimentDataset& ds, std::ostream& out) {
  out << "subject,condition,session,measure,value\n";
  for (const auto& r : ds.rows()) {
    out << csv::join({r.subject, std::string(to_string(r.condition)), std::to_string(r.session),
                      r.measure, fmt::format("{}", r.value)})
        << '\n';
  }
}

std::map<std::pair<Condition, int>, CellStats> descriptives(const ExperimentDataset& ds,
                                                            std::string_view measure) {
  if (!ds.has_measure(measure)) {
    throw Error(Errc::not_found, fmt::format("unknown measure '{}'", measure));
  }
  std::map<std::pair<Condition, int>, std::vector<double>> groups;
  for (const auto& r : ds.rows()) {
    if (r.measure == measure) groups[{r.condition, r.session}].push_back(r.value);
  }
  std::map<std::pair<Condition, int>, CellStats> out;
  for (const auto& [key, xs] : groups) {
    out[key] = {static_cast<int>(xs.size()), stats::mean(xs), stats::sample_sd(xs)};
  }
  return out;
}

AnovaResult mixed_anova_2x2(const ExperimentDataset& ds, std::string_view measure) {
  if (!ds.has_measure(measure)) {
    throw Error(Errc::not_found, fmt::format("unknown measure '{}'", measure));
  }
  struct Subject {
    int group;
    double y1;
    double y2;
  };
  std::vector<Subject> subjects;
  AnovaResult r;
  for (const auto& s : ds.subjects()) {
    const auto v1 = ds.value(s, 1, measure);
    const auto v2 = ds.value(s, 2, measure);
    if (!v1 && !v2) continue;
    if (!v1 || !v2) {
      ++r.excluded_subjects;
      continue;
    }
    subjects.push_back({cond_index(*ds.condition_of(s)), *v1, *v2});
  }
  std::array<int, 2> n{};
  for (const auto& s : subjects) ++n[static_cast<std::size_t>(s.group)];
  if (n[0] < 2 || n[1] < 2) {
    throw Error(Errc::invalid_argument, "mixed ANOVA needs at least 2 complete subjects per condition");
  }
  r.n_control = n[0];
  r.n_treatment = n[1];
  const double N = static_cast<double>(subjects.size());

  std::array<std::array<double, 2>, 2> cell_sum{};
  double grand_sum = 0.0;
  for (const auto& s : subjects) {
    auto& c = cell_sum[static_cast<std::size_t>(s.group)];
    c[0] += s.y1;
    c[1] += s.y2;
    grand_sum += s.y1 + s.y2;
  }
  const double G = grand_sum / (2.0 * N);
  for (std::size_t g = 0; g < 2; ++g) {
    for (std::size_t t = 0; t < 2; ++t) r.cell_means[g][t] = cell_sum[g][t] / n[g];
    r.condition_means[g] = (r.cell_means[g][0] + r.cell_means[g][1]) / 2.0;
  }
  for (std::size_t t = 0; t < 2; ++t) {
    r.session_means[t] = (cell_sum[0][t] + cell_sum[1][t]) / N;
  }
  std::array<double, 2> diff_mean{};
  for (std::size_t g = 0; g < 2; ++g) diff_mean[g] = r.cell_means[g][1] - r.cell_means[g][0];
  const double diff_weighted = r.session_means[1] - r.session_means[0];

  double ss_total = 0.0;
  double ss_subjects_within_groups = 0.0;
  double ss_time_by_subjects = 0.0;
  for (const auto& s : subjects) {
    const auto g = static_cast<std::size_t>(s.group);
    ss_total += (s.y1 - G) * (s.y1 - G) + (s.y2 - G) * (s.y2 - G);
    const double subject_mean = (s.y1 + s.y2) / 2.0;
    ss_subjects_within_groups += 2.0 * std::pow(subject_mean - r.condition_means[g], 2);
    ss_time_by_subjects += 0.5 * std::pow((s.y2 - s.y1) - diff_mean[g], 2);
  }
  double ss_condition = 0.0;
  double ss_interaction = 0.0;
  for (std::size_t g = 0; g < 2; ++g) {
    ss_condition += 2.0 * n[g] * std::pow(r.condition_means[g] - G, 2);
    ss_interaction += 0.5 * n[g] * std::pow(diff_mean[g] - diff_weighted, 2);
  }
  const double ss_time = N * diff_weighted * diff_weighted / 2.0;

  const double parts =
      ss_condition + ss_subjects_within_groups + ss_time + ss_interaction + ss_time_by_subjects;
  if (std::fabs(ss_total - parts) > 1e-9 * std::max(1.0, ss_total)) {
    throw std::logic_error("mixed ANOVA sums of squares do not add up");
  }
  r.ss_total = ss_total;

  const int df_error = static_cast<int>(N) - 2;
  auto effect = [&](double ss, double ss_error) {
    if (!(ss_error > 0.0)) throw Error(Errc::invalid_argument, "zero error variance");
    EffectStats e;
    e.ss = ss;
    e.ss_error = ss_error;
    e.df_effect = 1;
    e.df_error = df_error;
    e.f = ss / (ss_error / df_error);
    e.p = stats::f_upper_p(e.f, 1.0, df_error);
    e.partial_eta_sq = ss / (ss + ss_error);
    return e;
  };
  r.condition = effect(ss_condition, ss_subjects_within_groups);
  r.time = effect(ss_time, ss_time_by_subjects);
  r.interaction = effect(ss_interaction, ss_time_by_subjects);
  return r;
}

namespace {

struct RowSpec {
  std::string label;
  std::string measure;
  int session;  // 0 = across sessions
};

ReportRow compute_row(const ExperimentDataset& ds, const RowSpec& spec,
                      const std::set<int>& sessions) {
  std::array<std::vector<double>, 2> groups;
  const bool is_quantity = spec.measure == measures::reviews_given;
  for (const auto& s : ds.subjects()) {
    std::optional<double> v;
    if (spec.session != 0) {
      v = ds.value(s, spec.session, spec.measure);
    } else if (is_quantity) {
      // Sum over every session; a subject missing one is left out.
      double sum = 0.0;
      bool complete = true;
      for (int k : sessions) {
        const auto x = ds.value(s, k, spec.measure);
        if (!x) complete = false;
        else sum += *x;
      }
      if (complete) v = sum;
    } else {
      // Mean over the sessions the subject has a score for.
      double sum = 0.0;
      int count = 0;
      for (int k : sessions) {
        if (const auto x = ds.value(s, k, spec.measure)) {
          sum += *x;
          ++count;
        }
      }
      if (count > 0) v = sum / count;
    }
    if (v) groups[static_cast<std::size_t>(cond_index(*ds.condition_of(s)))].push_back(*v);
  }
  ReportRow row;
  row.label = spec.label;
  row.measure = spec.measure;
  row.session = spec.session;
  row.control_mean = groups[0].empty() ? std::nan("") : stats::mean(groups[0]);
  row.treatment_mean = groups[1].empty() ? std::nan("") : stats::mean(groups[1]);
  try {
    row.test = stats::ttest_ind(groups[0], groups[1]);
    row.significant = row.test->p < kAlpha;
  } catch (const Error&) {
    row.test.reset();
  }
  return row;
}

std::string fmt_num(double v) { return std::isnan(v) ? "n/a" : fmt::format("{:.3f}", v); }

}  // namespace

Report build_report(const ExperimentDataset& ds) {
  Report report;
  const std::set<int> sessions = ds.sessions();
  std::vector<RowSpec> specs = {
      {"Amount of feedback given across both sessions", std::string(measures::reviews_given), 0},
      {"Amount of feedback given (Session 1)", std::string(measures::reviews_given), 1},
      {"Amount of feedback given (Session 2)", std::string(measures::reviews_given), 2},
      {"Overall quality of feedback given across both sessions (max 9)",
       std::string(measures::quality_total), 0},
  };
  for (int k = 1; k <= 2; ++k) {
    specs.push_back({fmt::format("Session {}: Total quality of feedback", k),
                     std::string(measures::quality_total), k});
    specs.push_back({fmt::format("Session {}: Average Clarity", k), std::string(measures::clarity), k});
    specs.push_back(
        {fmt::format("Session {}: Average Relevance", k), std::string(measures::relevance), k});
    specs.push_back(
        {fmt::format("Session {}: Average Specificity", k), std::string(measures::specificity), k});
  }

  for (const auto& spec : specs) {
    if (spec.session != 0 && !sessions.contains(spec.session)) continue;
    if (!ds.has_measure(spec.measure)) {
      report.warnings.push_back(
          fmt::format("measure '{}' missing; row '{}' omitted", spec.measure, spec.label));
      continue;
    }
    report.rows.push_back(compute_row(ds, spec, sessions));
  }

  if (sessions.size() == 2) {
    for (auto m : {measures::reviews_given, measures::quality_total, measures::clarity,
                   measures::relevance, measures::specificity}) {
      if (!ds.has_measure(m)) continue;
      try {
        report.anovas.push_back({std::string(m), mixed_anova_2x2(ds, m)});
      } catch (const Error& e) {
        report.warnings.push_back(fmt::format("mixed ANOVA for '{}' skipped: {}", m, e.what()));
      }
    }
  }
  return report;
}

std::string Report::to_text() const {
  std::string out;
  out += fmt::format("Quantitative results (alpha = {}, * marks p < alpha)\n\n", kAlpha);
  out += fmt::format("{:<66}{:>10}{:>11}  {}\n", "Measure", "Control", "Treatment", "Test");
  for (const auto& r : rows) {
    std::string test = "n/a";
    if (r.test) {
      test = fmt::format("t({}) = {:.3f}, p = {}{}", r.test->df, r.test->t, format_p(r.test->p),
                         r.significant ? " *" : "");
    }
    out += fmt::format("{:<66}{:>10}{:>11}  {}\n", r.label, fmt_num(r.control_mean),
                       fmt_num(r.treatment_mean), test);
  }
  if (!anovas.empty()) {
    out += "\nMixed ANOVA, session (within) x condition (between)\n";
    for (const auto& a : anovas) {
      const auto& res = a.result;
      out += fmt::format("\n{}: n = {} control, {} treatment, {} excluded\n", a.measure,
                         res.n_control, res.n_treatment, res.excluded_subjects);
      out += fmt::format("  cell means  control S1 {:.3f} S2 {:.3f} | treatment S1 {:.3f} S2 {:.3f}\n",
                         res.cell_means[0][0], res.cell_means[0][1], res.cell_means[1][0],
                         res.cell_means[1][1]);
      auto line = [&](std::string_view name, const EffectStats& e) {
        out += fmt::format("  {:<12} F({},{}) = {:.3f}, p = {}, partial eta^2 = {:.3f}{}\n", name,
                           e.df_effect, e.df_error, e.f, format_p(e.p), e.partial_eta_sq,
                           e.p < kAlpha ? " *" : "");
      };
      line("condition", res.condition);
      line("session", res.time);
      line("interaction", res.interaction);
    }
  }
  if (!warnings.empty()) {
    out += "\nWarnings\n";
    for (const auto& w : warnings) out += "  " + w + "\n";
  }
  return out;
}

std::string Report::to_csv() const {
  std::string out =
      "kind,label,measure,session,control_mean,treatment_mean,statistic,df1,df2,p,partial_eta_sq,"
      "significant\n";
  for (const auto& r : rows) {
    std::vector<std::string> f = {"ttest", r.label, r.measure, std::to_string(r.session),
                                  fmt::format("{:.6f}", r.control_mean),
                                  fmt::format("{:.6f}", r.treatment_mean)};
    if (r.test) {
      f.insert(f.end(), {fmt::format("{:.6f}", r.test->t), std::to_string(r.test->df), "",
                         fmt::format("{:.6g}", r.test->p), ""});
    } else {
      f.insert(f.end(), {"", "", "", "", ""});
    }
    f.push_back(r.significant ? "1" : "0");
    out += csv::join(f) + "\n";
  }
  for (const auto& a : anovas) {
    const auto& res = a.result;
    auto line = [&](std::string_view name, const EffectStats& e) {
      out += csv::join({"anova", std::string(name), a.measure, "0",
                        fmt::format("{:.6f}", res.condition_means[0]),
                        fmt::format("{:.6f}", res.condition_means[1]), fmt::format("{:.6f}", e.f),
                        std::to_string(e.df_effect), std::to_string(e.df_error),
                        fmt::format("{:.6g}", e.p), fmt::format("{:.6f}", e.partial_eta_sq),
                        e.p < kAlpha ? "1" : "0"}) +
             "\n";
    };
    line("condition", res.condition);
    line("session", res.time);
    line("interaction", res.interaction);
  }
  return out;
}

}  // namespace peerfb
