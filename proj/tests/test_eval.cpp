#include <doctest.h>

#include <Eigen/LU>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <set>

#include "geomreid/common.hpp"
#include "geomreid/metrics.hpp"
#include "geomreid/stats.hpp"

using namespace geomreid;

namespace {

// ---- independent oracles ----------------------------------------------------

double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fb,
               double fm, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return simpson(f, a, m, fa, fm, flm, tol / 2.0, depth - 1) +
         simpson(f, m, b, fm, fb, frm, tol / 2.0, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-12) {
  const double m = 0.5 * (a + b);
  return simpson(f, a, b, f(a), f(b), f(m), tol, 40);
}

double t_pdf(double x, double df) {
  const double c = std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0) -
                   0.5 * std::log(df * 3.14159265358979323846);
  return std::exp(c - (df + 1.0) / 2.0 * std::log1p(x * x / df));
}

double t_two_sided_p_oracle(double t, double df) {
  const double at = std::abs(t);
  return 1.0 - 2.0 * integrate([&](double x) { return t_pdf(x, df); }, 0.0, at);
}

double f_pdf(double x, double d1, double d2) {
  if (x <= 0.0) return 0.0;
  const double lb = std::lgamma(d1 / 2.0) + std::lgamma(d2 / 2.0) - std::lgamma((d1 + d2) / 2.0);
  const double ln = 0.5 * (d1 * std::log(d1 * x) + d2 * std::log(d2) -
                           (d1 + d2) * std::log(d1 * x + d2)) -
                    std::log(x) - lb;
  return std::exp(ln);
}

double f_upper_p_oracle(double f, double d1, double d2) {
  if (f <= 0.0) return 1.0;
  return 1.0 - integrate([&](double x) { return f_pdf(x, d1, d2); }, 0.0, f);
}

struct OracleMetrics {
  double map, cmc3, micro, macro;
};

// brute-force enumeration: insertion-sorted ranking, direct loops everywhere
OracleMetrics brute_force_eval(const Eigen::MatrixXd& probes, const std::vector<std::string>& pl,
                               const Eigen::MatrixXd& gallery, const std::vector<std::string>& gl) {
  const int np = static_cast<int>(probes.rows());
  const int ng = static_cast<int>(gallery.rows());
  double map = 0, cmc = 0, micro = 0;
  std::map<std::string, std::pair<int, int>> per_id;
  for (int p = 0; p < np; ++p) {
    std::vector<std::pair<double, int>> order;
    for (int g = 0; g < ng; ++g) {
      double d = 0;
      for (int k = 0; k < probes.cols(); ++k)
        d += (probes(p, k) - gallery(g, k)) * (probes(p, k) - gallery(g, k));
      order.emplace_back(d, g);
    }
    // insertion sort, stable on (distance, index)
    for (std::size_t i = 1; i < order.size(); ++i) {
      auto key = order[i];
      std::size_t j = i;
      while (j > 0 && (order[j - 1].first > key.first ||
                       (order[j - 1].first == key.first && order[j - 1].second > key.second))) {
        order[j] = order[j - 1];
        --j;
      }
      order[j] = key;
    }
    int hits = 0, first = 0;
    double ap = 0;
    for (int r = 0; r < ng; ++r) {
      if (gl[static_cast<std::size_t>(order[static_cast<std::size_t>(r)].second)] == pl[static_cast<std::size_t>(p)]) {
        ++hits;
        ap += static_cast<double>(hits) / (r + 1);
        if (first == 0) first = r + 1;
      }
    }
    ap /= hits;
    map += ap;
    cmc += first >= 1 && first <= 3 ? 1 : 0;
    micro += first == 1 ? 1 : 0;
    auto& pi = per_id[pl[static_cast<std::size_t>(p)]];
    pi.first += first == 1 ? 1 : 0;
    pi.second += 1;
  }
  double macro = 0;
  for (auto& [id, c] : per_id) macro += static_cast<double>(c.first) / c.second;
  return {map / np, cmc / np, micro / np, macro / static_cast<double>(per_id.size())};
}

double rm_anova_F_oracle(const Eigen::MatrixXd& v) {
  const int m = static_cast<int>(v.rows()), n = static_cast<int>(v.cols());
  double grand = 0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) grand += v(i, j);
  grand /= m * n;
  double ss_total = 0, ss_cond = 0, ss_subj = 0;
  for (int i = 0; i < m; ++i) {
    double rm_ = 0;
    for (int j = 0; j < n; ++j) rm_ += v(i, j);
    rm_ /= n;
    ss_cond += n * (rm_ - grand) * (rm_ - grand);
  }
  for (int j = 0; j < n; ++j) {
    double cm = 0;
    for (int i = 0; i < m; ++i) cm += v(i, j);
    cm /= m;
    ss_subj += m * (cm - grand) * (cm - grand);
  }
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) ss_total += (v(i, j) - grand) * (v(i, j) - grand);
  const double ss_err = ss_total - ss_cond - ss_subj;
  return (ss_cond / (m - 1)) / (ss_err / ((m - 1) * (n - 1)));
}

Eigen::MatrixXd random_rotation(int d, std::uint64_t seed) {
  CounterRng rng(seed);
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  if (q.determinant() < 0) q.col(0) = -q.col(0);
  return q;
}

Eigen::MatrixXd unit_rows(int n, int d, CounterRng& rng) {
  Eigen::MatrixXd e(n, d);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) e(i, k) = rng.normal();
    e.row(i) /= e.row(i).norm();
  }
  return e;
}

}  // namespace

TEST_SUITE("evalkit") {

TEST_CASE("make_folds: 8 surgeries into 4 disjoint test pairs") {
  DatasetManifest m;
  for (int s = 0; s < 8; ++s)
    m.entries.push_back({"q" + std::to_string(s), "p", "S0" + std::to_string(s), ".", 30.0});
  const auto folds = make_folds(m, 4);
  REQUIRE(folds.size() == 4);
  std::set<std::string> seen;
  for (const FoldSpec& f : folds) {
    CHECK(f.test_surgeries.size() == 2);
    CHECK(f.train_surgeries.size() == 6);
    for (const std::string& s : f.test_surgeries) {
      CHECK(!seen.count(s));
      seen.insert(s);
      CHECK(!f.train_surgeries.count(s));
    }
  }
  CHECK(seen.size() == 8);
}

TEST_CASE("make_folds: 10 surgeries, round-robin test sizes {3,3,2,2}") {
  DatasetManifest m;
  for (int s = 0; s < 10; ++s) {
    char sid[8];
    std::snprintf(sid, sizeof sid, "S%02d", s);
    m.entries.push_back({"q" + std::to_string(s), "p", sid, ".", 30.0});
  }
  const auto folds = make_folds(m, 4);
  CHECK(folds[0].test_surgeries.size() == 3);
  CHECK(folds[1].test_surgeries.size() == 3);
  CHECK(folds[2].test_surgeries.size() == 2);
  CHECK(folds[3].test_surgeries.size() == 2);
  // deterministic: surgery S00 deals to fold 0, S01 to fold 1, ...
  CHECK(folds[0].test_surgeries.count("S00"));
  CHECK(folds[0].test_surgeries.count("S04"));
  CHECK(folds[3].test_surgeries.count("S03"));
}

TEST_CASE("make_folds: too few surgeries") {
  DatasetManifest m;
  for (int s = 0; s < 3; ++s)
    m.entries.push_back({"q" + std::to_string(s), "p", "S" + std::to_string(s), ".", 30.0});
  try {
    make_folds(m, 4);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::too_few_surgeries);
  }
}

TEST_CASE("average_precision: worked examples") {
  CHECK(average_precision({"A", "B", "A"}, "A") == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
  CHECK(average_precision({"A", "B", "C"}, "A") == 1.0);
  CHECK(average_precision({"B", "A"}, "A") == doctest::Approx(0.5));
  try {
    average_precision({"B", "C"}, "A");
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::no_positive);
  }
}

TEST_CASE("evaluate_probe_gallery: duplicate-embedding clusters are perfect") {
  CounterRng rng(5);
  const int ids = 4;
  Eigen::MatrixXd base = unit_rows(ids, 8, rng);
  Eigen::MatrixXd gallery = base;
  Eigen::MatrixXd probes = base;
  std::vector<std::string> labels;
  for (int i = 0; i < ids; ++i) labels.push_back("P" + std::to_string(i));
  const MetricsReport r = evaluate_probe_gallery(probes, labels, gallery, labels);
  CHECK(r.map == 1.0);
  CHECK(r.cmc3 == 1.0);
  CHECK(r.acc_micro == 1.0);
  CHECK(r.acc_macro == 1.0);
}

TEST_CASE("evaluate_probe_gallery: micro/macro hand count") {
  // probes A, A, B; rank-1 correct for one A and for B
  Eigen::MatrixXd gallery(2, 2);
  gallery << 1, 0, 0, 1;  // A at (1,0), B at (0,1)
  std::vector<std::string> gl = {"A", "B"};
  Eigen::MatrixXd probes(3, 2);
  probes << 1, 0,   // A, matches A
            0, 1,   // A, but looks like B -> rank-1 wrong
            0, 1;   // B, matches B
  std::vector<std::string> pl = {"A", "A", "B"};
  const MetricsReport r = evaluate_probe_gallery(probes, pl, gallery, gl);
  CHECK(r.acc_micro == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(r.acc_macro == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(r.per_probe_ranks == std::vector<int>{1, 2, 1});
}

TEST_CASE("evaluate_probe_gallery: CMC@3 counts first correct within rank 3") {
  Eigen::MatrixXd gallery(4, 2);
  gallery << 1, 0, 0.9, 0.1, 0.8, 0.2, 0, 1;
  std::vector<std::string> gl = {"X", "X", "X", "A"};
  Eigen::MatrixXd probes(2, 2);
  probes << 1, 0,  // probe A: its match is ranked behind the three X's -> rank 4
            0, 1;  // probe A: exact match at rank 1
  std::vector<std::string> pl = {"A", "A"};
  const MetricsReport r = evaluate_probe_gallery(probes, pl, gallery, gl);
  CHECK(r.per_probe_ranks == std::vector<int>{4, 1});
  CHECK(r.cmc3 == doctest::Approx(0.5));
  CHECK(r.cmc3 >= r.acc_micro);
}

TEST_CASE("evaluate_probe_gallery: unknown probe identity rejected") {
  Eigen::MatrixXd g(1, 2), p(1, 2);
  g << 1, 0;
  p << 1, 0;
  try {
    evaluate_probe_gallery(p, {"Z"}, g, {"A"});
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::unknown_probe_identity);
  }
}

TEST_CASE("evaluate_probe_gallery: matches the brute-force oracle on random instances") {
  CounterRng rng(9);
  for (int trial = 0; trial < 60; ++trial) {
    const int ng = 2 + static_cast<int>(rng.uniform_int(7));
    const int np = 1 + static_cast<int>(rng.uniform_int(6));
    const int d = 3;
    Eigen::MatrixXd gallery = unit_rows(ng, d, rng);
    std::vector<std::string> gl, pl;
    for (int g = 0; g < ng; ++g) gl.push_back("P" + std::to_string(rng.uniform_int(3)));
    Eigen::MatrixXd probes = unit_rows(np, d, rng);
    for (int p = 0; p < np; ++p) pl.push_back(gl[static_cast<std::size_t>(rng.uniform_int(ng))]);
    const MetricsReport r = evaluate_probe_gallery(probes, pl, gallery, gl);
    const OracleMetrics o = brute_force_eval(probes, pl, gallery, gl);
    CHECK(std::abs(r.map - o.map) <= 1e-12);
    CHECK(std::abs(r.cmc3 - o.cmc3) <= 1e-12);
    CHECK(std::abs(r.acc_micro - o.micro) <= 1e-12);
    CHECK(std::abs(r.acc_macro - o.macro) <= 1e-12);
  }
}

TEST_CASE("evaluate_probe_gallery: invariant to a common rotation") {
  CounterRng rng(11);
  const int d = 8;
  Eigen::MatrixXd gallery = unit_rows(10, d, rng);
  Eigen::MatrixXd probes = unit_rows(7, d, rng);
  std::vector<std::string> gl, pl;
  for (int g = 0; g < 10; ++g) gl.push_back("P" + std::to_string(g % 4));
  for (int p = 0; p < 7; ++p) pl.push_back("P" + std::to_string(p % 4));
  const MetricsReport a = evaluate_probe_gallery(probes, pl, gallery, gl);
  const Eigen::MatrixXd q = random_rotation(d, 13);
  const MetricsReport b = evaluate_probe_gallery((probes * q).eval(), pl, (gallery * q).eval(), gl);
  CHECK(std::abs(a.map - b.map) <= 1e-9);
  CHECK(std::abs(a.cmc3 - b.cmc3) <= 1e-9);
  CHECK(std::abs(a.acc_micro - b.acc_micro) <= 1e-9);
  CHECK(std::abs(a.acc_macro - b.acc_macro) <= 1e-9);
}

TEST_CASE("evaluate_probe_gallery: stable under gallery permutation when distances are distinct") {
  CounterRng rng(15);
  Eigen::MatrixXd gallery = unit_rows(6, 4, rng);
  std::vector<std::string> gl = {"A", "B", "C", "A", "B", "C"};
  Eigen::MatrixXd probes = unit_rows(4, 4, rng);
  std::vector<std::string> pl = {"A", "B", "C", "A"};
  const MetricsReport a = evaluate_probe_gallery(probes, pl, gallery, gl);
  // reverse the gallery order
  Eigen::MatrixXd rg = gallery.colwise().reverse().eval();
  std::vector<std::string> rgl(gl.rbegin(), gl.rend());
  const MetricsReport b = evaluate_probe_gallery(probes, pl, rg, rgl);
  CHECK(a.map == doctest::Approx(b.map).epsilon(1e-12));
  CHECK(a.acc_micro == b.acc_micro);
}

TEST_CASE("paired_t_test: differences [1,2,3,4]") {
  const std::vector<double> a = {2, 4, 6, 8}, b = {1, 2, 3, 4};
  const StatTestResult r = paired_t_test(a, b);
  CHECK(r.statistic == doctest::Approx(3.87298).epsilon(1e-5));
  CHECK(r.df1 == 3.0);
  CHECK(!r.zero_variance);
  CHECK(std::abs(r.p_value - t_two_sided_p_oracle(r.statistic, 3.0)) < 1e-6);
}

TEST_CASE("paired_t_test: identical samples flag the zero-variance path") {
  const std::vector<double> a = {1, 2, 3}, b = {1, 2, 3};
  const StatTestResult r = paired_t_test(a, b);
  CHECK(r.zero_variance);
  CHECK(r.statistic == 0.0);
  CHECK(r.p_value == 1.0);

  const std::vector<double> c = {2, 3, 4};
  const StatTestResult s = paired_t_test(c, a);
  CHECK(s.zero_variance);
  CHECK(std::isinf(s.statistic));
  CHECK(s.p_value == 0.0);
}

TEST_CASE("paired_t_test: p-values match the quadrature oracle") {
  CounterRng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + static_cast<int>(rng.uniform_int(8));
    std::vector<double> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      a[static_cast<std::size_t>(i)] = rng.normal();
      b[static_cast<std::size_t>(i)] = rng.normal();
    }
    const StatTestResult r = paired_t_test(a, b);
    if (r.zero_variance) continue;
    CHECK(std::abs(r.p_value - t_two_sided_p_oracle(r.statistic, r.df1)) < 1e-6);
  }
}

TEST_CASE("rm_anova: all-equal table gives F = 0, p = 1") {
  const StatTestResult r = rm_anova(Eigen::MatrixXd::Constant(3, 4, 0.7));
  CHECK(r.statistic == 0.0);
  CHECK(r.p_value == 1.0);
}

TEST_CASE("rm_anova: two methods reduce to the paired t-test, F = t^2") {
  CounterRng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 4 + static_cast<int>(rng.uniform_int(4));
    Eigen::MatrixXd v(2, n);
    for (int j = 0; j < n; ++j) {
      v(0, j) = rng.normal();
      v(1, j) = rng.normal() + 0.3;
    }
    std::vector<double> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      a[static_cast<std::size_t>(j)] = v(0, j);
      b[static_cast<std::size_t>(j)] = v(1, j);
    }
    const StatTestResult f = rm_anova(v);
    const StatTestResult t = paired_t_test(a, b);
    CHECK(std::abs(f.statistic - t.statistic * t.statistic) < 1e-9);
    CHECK(std::abs(f.p_value - t.p_value) < 1e-9);
  }
}

TEST_CASE("rm_anova: random tables match the brute-force SS oracle and quadrature p") {
  CounterRng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::MatrixXd v(3, 4);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) v(i, j) = rng.normal() + 0.2 * i;
    const StatTestResult r = rm_anova(v);
    CHECK(std::abs(r.statistic - rm_anova_F_oracle(v)) < 1e-8);
    REQUIRE(r.df2);
    CHECK(std::abs(r.p_value - f_upper_p_oracle(r.statistic, r.df1, *r.df2)) < 1e-6);
  }
}

TEST_CASE("rm_anova: incomplete table rejected") {
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(2, 3);
  v(1, 2) = std::numeric_limits<double>::quiet_NaN();
  try {
    rm_anova(v);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::incomplete_table);
  }
}

TEST_CASE("bonferroni_adjust: arithmetic with cap") {
  CHECK(bonferroni_adjust(std::vector<double>{0.01}) == std::vector<double>{0.01});
  const auto adj = bonferroni_adjust(std::vector<double>{0.01, 0.02, 0.5});
  CHECK(adj[0] == doctest::Approx(0.03).epsilon(1e-15));
  CHECK(adj[1] == doctest::Approx(0.06).epsilon(1e-15));
  CHECK(adj[2] == 1.0);
  const auto capped = bonferroni_adjust(std::vector<double>{0.5, 0.5, 0.5, 0.5});
  for (double p : capped) CHECK(p == 1.0);
}

TEST_CASE("bonferroni never lowers a p-value") {
  CounterRng rng(51);
  std::vector<double> ps;
  for (int i = 0; i < 12; ++i) ps.push_back(rng.uniform());
  const auto adj = bonferroni_adjust(ps);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    CHECK(adj[i] >= ps[i]);
    CHECK(adj[i] <= 1.0);
  }
}

TEST_CASE("significance markers mirror the table convention") {
  CHECK(std::string(significance_marker(0.049)) == "*");
  CHECK(std::string(significance_marker(0.05)) == "ns");
  CHECK(std::string(significance_marker(0.9)) == "ns");
}

TEST_CASE("incomplete beta sanity against symmetry identities") {
  // I_x(a,b) + I_{1-x}(b,a) = 1
  CounterRng rng(61);
  for (int i = 0; i < 20; ++i) {
    const double a = 0.5 + rng.uniform() * 5.0;
    const double b = 0.5 + rng.uniform() * 5.0;
    const double x = rng.uniform();
    const double lhs = regularized_incomplete_beta(a, b, x) + regularized_incomplete_beta(b, a, 1.0 - x);
    CHECK(lhs == doctest::Approx(1.0).epsilon(1e-10));
  }
}

}  // TEST_SUITE
