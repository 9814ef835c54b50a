#ifndef GEOMREID_STATS_HPP
#define GEOMREID_STATS_HPP

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace geomreid {

struct StatTestResult {
  double statistic = 0.0;
  double df1 = 0.0;                 // t: df; ANOVA: condition df
  std::optional<double> df2;        // ANOVA: error df
  double p_value = 1.0;
  std::optional<double> adjusted_p;
  bool zero_variance = false;       // flagged degenerate path
};

/// Two-sided paired t-test; sample sd (n-1 denominator), df = n-1.
/// All-equal differences are flagged: p = 1 if the difference is 0, else 0.
StatTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

/// One-way repeated-measures ANOVA, subjects = columns (folds), conditions =
/// rows (methods). F = MS_condition / MS_error, SS_error = SS_within - SS_subjects.
StatTestResult rm_anova(const Eigen::MatrixXd& values);

/// adjusted_i = min(1, p_i * m).
std::vector<double> bonferroni_adjust(std::span<const double> p_values);

/// Table-1 style marker on an (adjusted) p-value: "*" if p < 0.05 else "ns".
const char* significance_marker(double p);

// Special functions (own implementations; verified against quadrature oracles).
double regularized_incomplete_beta(double a, double b, double x);
double student_t_two_sided_p(double t, double df);
double f_distribution_upper_p(double f, double df1, double df2);

}  // namespace geomreid

#endif  // GEOMREID_STATS_HPP
