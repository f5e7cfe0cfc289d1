#pragma once

#include <array>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <tuple>
#include <string>
#include <vector>

#include "peerfb/core.hpp"

namespace peerfb::stats {

// Regularized incomplete beta I_x(a, b), continued fraction (modified Lentz).
double incomplete_beta(double a, double b, double x);

// Two-tailed p for Student's t with df degrees of freedom.
double t_two_tailed_p(double t, double df);

// Upper-tail p for F(df1, df2).
double f_upper_p(double f, double df1, double df2);

double mean(std::span<const double> xs);
double sample_sd(std::span<const double> xs);  // n - 1 denominator; 0 when n < 2

struct TTestResult {
  double t = 0.0;
  int df = 0;
  double p = 1.0;
  double mean_x = 0.0;
  double mean_y = 0.0;
  int n_x = 0;
  int n_y = 0;
};

// Pooled-variance Student's t, t = (mean_x - mean_y) / se.
// Errors: fewer than 2 values per sample, "degenerate samples" when the pooled
// variance is zero.
TTestResult ttest_ind(std::span<const double> x, std::span<const double> y);

}  // namespace peerfb::stats

namespace peerfb {

// Measure names used throughout the pipeline.
namespace measures {
inline constexpr std::string_view reviews_given = "reviews_given";
inline constexpr std::string_view quality_total = "quality_total";
inline constexpr std::string_view clarity = "clarity";
inline constexpr std::string_view relevance = "relevance";
inline constexpr std::string_view specificity = "specificity";
}  // namespace measures

struct Observation {
  std::string subject;
  Condition condition = Condition::control;
  int session = 1;
  std::string measure;
  double value = 0.0;

  bool operator==(const Observation&) const = default;
};

class ExperimentDataset {
 public:
  // Errors: session outside {1, 2}, duplicate (subject, session, measure),
  // a subject appearing under two conditions.
  void add(Observation obs);

  const std::vector<Observation>& rows() const noexcept { return rows_; }
  std::set<std::string> measures() const;
  std::set<int> sessions() const;
  std::set<int> sessions_of(std::string_view measure) const;
  bool has_measure(std::string_view measure) const;
  std::optional<Condition> condition_of(const std::string& subject) const;
  std::optional<double> value(const std::string& subject, int session,
                              std::string_view measure) const;
  // Subjects in first-seen order.
  const std::vector<std::string>& subjects() const noexcept { return subject_order_; }

  bool operator==(const ExperimentDataset& other) const { return rows_ == other.rows_; }

 private:
  std::vector<Observation> rows_;
  std::map<std::string, Condition> condition_;
  std::vector<std::string> subject_order_;
  std::map<std::tuple<std::string, int, std::string>, double> index_;
};

// Header: subject,condition,session,measure,value. Errors carry the line.
ExperimentDataset ingest_observations(std::istream& in);
ExperimentDataset ingest_observations(const std::filesystem::path& file);
// Values are written with enough digits to read back exactly.
void export_observations(const ExperimentDataset& ds, std::ostream& out);

struct CellStats {
  int n = 0;
  double mean = 0.0;
  double sd = 0.0;
};

// Keyed by (condition, session). Error on an unknown measure.
std::map<std::pair<Condition, int>, CellStats> descriptives(const ExperimentDataset& ds,
                                                            std::string_view measure);

struct EffectStats {
  double ss = 0.0;
  double ss_error = 0.0;
  int df_effect = 1;
  int df_error = 0;
  double f = 0.0;
  double p = 1.0;
  double partial_eta_sq = 0.0;
};

struct AnovaResult {
  EffectStats time;
  EffectStats condition;
  EffectStats interaction;
  // [condition][session - 1], condition 0 = control, 1 = treatment
  std::array<std::array<double, 2>, 2> cell_means{};
  std::array<double, 2> condition_means{};
  std::array<double, 2> session_means{};
  int n_control = 0;
  int n_treatment = 0;
  int excluded_subjects = 0;  // listwise: missing one of the sessions
  double ss_total = 0.0;
};

// 2 (condition, between) x 2 (session, within) split-plot ANOVA. Sums of
// squares are the weighted (sequential) decomposition, which conserves the
// total. Errors: fewer than 2 complete subjects in a condition, zero error
// variance.
AnovaResult mixed_anova_2x2(const ExperimentDataset& ds, std::string_view measure);

inline constexpr double kAlpha = 0.05;

struct ReportRow {
  std::string label;
  std::string measure;
  int session = 0;  // 0 = across sessions
  double control_mean = 0.0;
  double treatment_mean = 0.0;
  std::optional<stats::TTestResult> test;  // empty when the test was not computable
  bool significant = false;
};

struct ReportAnova {
  std::string measure;
  AnovaResult result;
};

struct Report {
  std::vector<ReportRow> rows;
  std::vector<ReportAnova> anovas;
  std::vector<std::string> warnings;

  std::string to_text() const;
  std::string to_csv() const;
};

Report build_report(const ExperimentDataset& ds);

}  // namespace peerfb
