#include "geomreid/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geomreid/common.hpp"

namespace geomreid {

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 400;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) raise(Errc::invalid_arg, "beta parameters must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_bt =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

double f_distribution_upper_p(double f, double df1, double df2) {
  if (f <= 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  return regularized_incomplete_beta(0.5 * df2, 0.5 * df1, df2 / (df2 + df1 * f));
}

StatTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) raise(Errc::dimension_mismatch, "paired samples must have equal length");
  const std::size_t n = a.size();
  if (n < 2) raise(Errc::invalid_arg, "paired t-test needs at least 2 pairs");

  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double mean = pairwise_mean(d);

  double ss = 0.0;
  bool all_equal = true;
  for (std::size_t i = 0; i < n; ++i) {
    ss += (d[i] - mean) * (d[i] - mean);
    if (d[i] != d[0]) all_equal = false;
  }

  StatTestResult res;
  res.df1 = static_cast<double>(n - 1);
  if (all_equal || ss == 0.0) {
    res.zero_variance = true;
    if (mean == 0.0) {
      res.statistic = 0.0;
      res.p_value = 1.0;
    } else {
      res.statistic = std::copysign(std::numeric_limits<double>::infinity(), mean);
      res.p_value = 0.0;
    }
    return res;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  res.statistic = mean / (sd / std::sqrt(static_cast<double>(n)));
  res.p_value = student_t_two_sided_p(res.statistic, res.df1);
  return res;
}

StatTestResult rm_anova(const Eigen::MatrixXd& values) {
  const Eigen::Index m = values.rows();  // methods (conditions)
  const Eigen::Index n = values.cols();  // folds (subjects)
  if (m < 2 || n < 2) raise(Errc::invalid_arg, "need at least 2 methods and 2 folds");
  if (!values.allFinite()) raise(Errc::incomplete_table, "table has non-finite cells");

  const double grand = values.mean();
  const Eigen::VectorXd cond_mean = values.rowwise().mean();
  const Eigen::VectorXd subj_mean = values.colwise().mean().transpose();

  const double ss_cond = static_cast<double>(n) * (cond_mean.array() - grand).square().sum();
  const double ss_subj = static_cast<double>(m) * (subj_mean.array() - grand).square().sum();
  const double ss_total = (values.array() - grand).square().sum();
  const double ss_within = ss_total - ss_cond;
  const double ss_error = ss_within - ss_subj;

  StatTestResult res;
  res.df1 = static_cast<double>(m - 1);
  res.df2 = static_cast<double>((m - 1) * (n - 1));
  if (ss_cond <= 1e-30) {
    res.statistic = 0.0;
    res.p_value = 1.0;
    res.zero_variance = ss_total <= 1e-30;
    return res;
  }
  if (ss_error <= 1e-30) {
    res.statistic = std::numeric_limits<double>::infinity();
    res.p_value = 0.0;
    res.zero_variance = true;
    return res;
  }
  const double ms_cond = ss_cond / res.df1;
  const double ms_error = ss_error / *res.df2;
  res.statistic = ms_cond / ms_error;
  res.p_value = f_distribution_upper_p(res.statistic, res.df1, *res.df2);
  return res;
}

std::vector<double> bonferroni_adjust(std::span<const double> p_values) {
  const double m = static_cast<double>(p_values.size());
  std::vector<double> out;
  out.reserve(p_values.size());
  for (double p : p_values) {
    if (p < 0.0 || p > 1.0) raise(Errc::invalid_arg, "p-value outside [0,1]");
    out.push_back(std::min(1.0, p * m));
  }
  return out;
}

const char* significance_marker(double p) { return p < 0.05 ? "*" : "ns"; }

}  // namespace geomreid
