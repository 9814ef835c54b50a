#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "geomreid/experiment.hpp"
#include "geomreid/synth.hpp"

namespace geomreid {

namespace {

using json = nlohmann::json;

constexpr double kTol = 1e-12;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{}) raise(Errc::parse_error, "bad CSV number '" + s + "'");
  return v;
}

struct Checker {
  std::vector<std::string> problems;

  void expect_num(const std::string& where, double stored, double recomputed) {
    const bool ok = (std::isfinite(stored) && std::isfinite(recomputed))
                        ? std::abs(stored - recomputed) <= kTol
                        : stored == recomputed;
    if (!ok)
      problems.push_back(where + ": stored " + std::to_string(stored) + " != recomputed " +
                         std::to_string(recomputed));
  }
  void expect_str(const std::string& where, const std::string& stored, const std::string& recomputed) {
    if (stored != recomputed)
      problems.push_back(where + ": stored '" + stored + "' != recomputed '" + recomputed + "'");
  }
};

// (mode, arm, fold, metric) -> value
using MetricsTable = std::map<std::string, std::map<std::string, std::map<int, std::map<std::string, double>>>>;

MetricsTable read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::missing_file, "cannot open '" + path.string() + "'");
  MetricsTable table;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5) raise(Errc::parse_error, "bad metrics.csv row '" + line + "'");
    table[f[0]][f[1]][static_cast<int>(to_double(f[2]))][f[3]] = to_double(f[4]);
  }
  return table;
}

void check_arm_block(Checker& ck, const std::string& where, const json& arm_json,
                     const std::map<int, std::map<std::string, double>>& folds_csv) {
  for (const std::string& metric : kMetricNames) {
    std::vector<double> vals;
    for (const auto& fold_json : arm_json.at("folds")) {
      const int fold = fold_json.at("fold").get<int>();
      const double stored = fold_json.at(metric).get<double>();
      const auto it = folds_csv.find(fold);
      if (it == folds_csv.end() || !it->second.count(metric)) {
        ck.problems.push_back(where + ": fold " + std::to_string(fold) + " metric " + metric +
                              " missing from metrics.csv");
        continue;
      }
      ck.expect_num(where + ".folds[" + std::to_string(fold) + "]." + metric, stored,
                    it->second.at(metric));
      vals.push_back(it->second.at(metric));
    }
    const double mean = pairwise_mean(vals);
    const double sd = sample_sd(vals);
    ck.expect_num(where + ".mean." + metric, arm_json.at("mean").at(metric).get<double>(), mean);
    ck.expect_num(where + ".sd." + metric, arm_json.at("sd").at(metric).get<double>(), sd);
    ck.expect_str(where + ".display." + metric, arm_json.at("display").at(metric).get<std::string>(),
                  format_percent_pm(mean, sd));
  }
}

}  // namespace

std::vector<std::string> verify_report(const std::filesystem::path& out_dir) {
  Checker ck;
  json summary;
  {
    std::ifstream in(out_dir / "summary.json", std::ios::binary);
    if (!in) raise(Errc::missing_file, "cannot open summary.json");
    in >> summary;
  }
  const MetricsTable csv = read_metrics_csv(out_dir / "metrics.csv");

  for (const auto& [mode, mode_json] : summary.at("modes").items()) {
    if (!csv.count(mode)) {
      ck.problems.push_back("mode '" + mode + "' missing from metrics.csv");
      continue;
    }
    const auto& arms_csv = csv.at(mode);
    std::vector<std::string> arm_names;
    for (const auto& [arm, arm_json] : mode_json.at("arms").items()) {
      if (!arms_csv.count(arm)) {
        ck.problems.push_back("arm '" + arm + "' missing from metrics.csv for mode " + mode);
        continue;
      }
      check_arm_block(ck, mode + "." + arm, arm_json, arms_csv.at(arm));
      arm_names.push_back(arm);
    }

    if (arm_names.size() >= 2) {
      // ANOVA per metric from the CSV fold table.
      for (const std::string& metric : kMetricNames) {
        const int n_folds = static_cast<int>(arms_csv.at(arm_names.front()).size());
        Eigen::MatrixXd table(static_cast<Eigen::Index>(arm_names.size()), n_folds);
        for (std::size_t a = 0; a < arm_names.size(); ++a)
          for (int f = 0; f < n_folds; ++f)
            table(static_cast<Eigen::Index>(a), f) = arms_csv.at(arm_names[a]).at(f).at(metric);
        const StatTestResult anova = rm_anova(table);
        const auto& aj = mode_json.at("anova").at(metric);
        if (!aj.at("statistic").is_null())
          ck.expect_num(mode + ".anova." + metric + ".F", aj.at("statistic").get<double>(),
                        anova.statistic);
        ck.expect_num(mode + ".anova." + metric + ".p", aj.at("p").get<double>(), anova.p_value);
      }

      // Pairwise tests + bonferroni per metric family.
      for (const std::string& metric : kMetricNames) {
        std::vector<json> stored;
        for (const auto& pw : mode_json.at("pairwise"))
          if (pw.at("metric").get<std::string>() == metric) stored.push_back(pw);
        std::vector<double> ps;
        std::vector<StatTestResult> tests;
        for (const auto& pw : stored) {
          const std::string a = pw.at("arm_a").get<std::string>();
          const std::string b = pw.at("arm_b").get<std::string>();
          const int n_folds = static_cast<int>(arms_csv.at(a).size());
          std::vector<double> va, vb;
          for (int f = 0; f < n_folds; ++f) {
            va.push_back(arms_csv.at(a).at(f).at(metric));
            vb.push_back(arms_csv.at(b).at(f).at(metric));
          }
          tests.push_back(paired_t_test(va, vb));
          ps.push_back(tests.back().p_value);
        }
        const std::vector<double> adj = bonferroni_adjust(ps);
        for (std::size_t i = 0; i < stored.size(); ++i) {
          const std::string where = mode + ".pairwise." + metric + "[" + std::to_string(i) + "]";
          if (!stored[i].at("statistic").is_null())
            ck.expect_num(where + ".t", stored[i].at("statistic").get<double>(), tests[i].statistic);
          ck.expect_num(where + ".p", stored[i].at("p").get<double>(), tests[i].p_value);
          ck.expect_num(where + ".p_adjusted", stored[i].at("p_adjusted").get<double>(), adj[i]);
          ck.expect_str(where + ".marker", stored[i].at("marker").get<std::string>(),
                        significance_marker(adj[i]));
        }
      }
    }
  }

  for (const auto& tr : summary.at("transfer")) {
    const std::string mode = "transfer_" + tr.at("train_mode").get<std::string>() + "_to_" +
                             tr.at("test_mode").get<std::string>();
    if (!csv.count(mode)) {
      ck.problems.push_back("transfer block '" + mode + "' missing from metrics.csv");
      continue;
    }
    for (const auto& [arm, arm_json] : tr.at("arms").items()) {
      if (!csv.at(mode).count(arm)) {
        ck.problems.push_back("arm '" + arm + "' missing from metrics.csv for " + mode);
        continue;
      }
      check_arm_block(ck, mode + "." + arm, arm_json, csv.at(mode).at(arm));
    }
  }

  if (summary.contains("saliency")) {
    std::ifstream in(out_dir / "saliency_audit.csv", std::ios::binary);
    if (!in) {
      ck.problems.push_back("saliency_audit.csv missing");
      return ck.problems;
    }
    std::string line;
    std::getline(in, line);  // header
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split_csv_line(line);
      std::vector<double> vals;
      for (std::size_t i = 1; i < f.size(); ++i) vals.push_back(to_double(f[i]));
      rows.push_back(std::move(vals));
    }
    const auto& sj = summary.at("saliency");
    if (static_cast<int>(rows.size()) != sj.at("n_sequences").get<int>())
      ck.problems.push_back("saliency.n_sequences != saliency_audit.csv row count");
    auto col_mean = [&](std::size_t c) {
      std::vector<double> v;
      for (const auto& r : rows) v.push_back(r.at(c));
      return pairwise_mean(v);
    };
    ck.expect_num("saliency.entropy_mean", sj.at("entropy_mean").get<double>(), col_mean(0));
    ck.expect_num("saliency.feet_head_saliency_share",
                  sj.at("feet_head_saliency_share").get<double>(), col_mean(1));
    ck.expect_num("saliency.feet_head_area_share", sj.at("feet_head_area_share").get<double>(),
                  col_mean(2));
    for (int p = 0; p < kNumBones; ++p) {
      const auto& pair = sj.at("part_shares").at(bone_name(p));
      ck.expect_num(std::string("saliency.part_shares.") + bone_name(p) + "[0]",
                    pair.at(0).get<double>(), col_mean(3 + static_cast<std::size_t>(p)));
      ck.expect_num(std::string("saliency.part_shares.") + bone_name(p) + "[1]",
                    pair.at(1).get<double>(),
                    col_mean(3 + static_cast<std::size_t>(kNumBones + p)));
    }

    // region_shares.csv must equal the per-part averages.
    std::ifstream rs(out_dir / "region_shares.csv", std::ios::binary);
    if (!rs) {
      ck.problems.push_back("region_shares.csv missing");
      return ck.problems;
    }
    std::getline(rs, line);  // header
    while (std::getline(rs, line)) {
      if (line.empty()) continue;
      const auto f = split_csv_line(line);
      if (f.size() != 3) {
        ck.problems.push_back("bad region_shares.csv row '" + line + "'");
        continue;
      }
      int part = -1;
      for (int p = 0; p < kNumBones; ++p)
        if (f[0] == bone_name(p)) part = p;
      if (part < 0) {
        ck.problems.push_back("unknown part '" + f[0] + "' in region_shares.csv");
        continue;
      }
      ck.expect_num("region_shares." + f[0] + ".saliency", to_double(f[1]),
                    col_mean(3 + static_cast<std::size_t>(part)));
      ck.expect_num("region_shares." + f[0] + ".area", to_double(f[2]),
                    col_mean(3 + static_cast<std::size_t>(kNumBones + part)));
    }
  }
  return ck.problems;
}

}  // namespace geomreid
