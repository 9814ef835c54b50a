#ifndef GEOMREID_EXPERIMENT_HPP
#define GEOMREID_EXPERIMENT_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geomreid/descriptor.hpp"
#include "geomreid/metrics.hpp"
#include "geomreid/stats.hpp"
#include "geomreid/synth.hpp"
#include "geomreid/train.hpp"

namespace geomreid {

struct SyntheticSpec {
  int n_identities = 8;
  int n_surgeries = 6;
  int seqs_per_surgery = 2;
  int n_frames = 40;
  double fps = 30.0;
  double noise_sd_m = 0.005;
  std::vector<GenTag> modes = {GenTag::confounded, GenTag::standardized};
};

struct TransferSpec {
  GenTag train_mode = GenTag::confounded;
  GenTag test_mode = GenTag::standardized;
};

struct ExperimentConfig {
  std::optional<SyntheticSpec> synthetic;
  std::optional<std::filesystem::path> manifest_path;
  std::vector<DescriptorKind> arms = {DescriptorKind::geometric, DescriptorKind::appearance};
  int res_h = 64;
  int res_w = 64;
  TrainConfig train;
  int k_folds = 4;
  std::uint64_t seed = 1;
  std::vector<TransferSpec> transfer;
  int saliency_sequences = 24;
  std::filesystem::path out_dir = "out";
  int jobs = 1;
};

ExperimentConfig load_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config_file(const std::filesystem::path& path);

/// Per-(mode, arm) cross-validated metrics, one report per fold.
struct ArmResults {
  std::vector<MetricsReport> folds;
  std::map<std::string, double> mean;  // metric -> mean over folds
  std::map<std::string, double> sd;    // sample sd over folds
};

struct ModeResults {
  std::map<std::string, ArmResults> arms;  // arm name -> results
  std::map<std::string, StatTestResult> anova;  // metric -> rm-ANOVA over arms
  struct Pairwise {
    std::string metric, arm_a, arm_b;
    StatTestResult test;
    std::string marker;
  };
  std::vector<Pairwise> pairwise;
};

struct TransferResults {
  std::string train_mode, test_mode;
  std::map<std::string, ArmResults> arms;
};

struct SaliencyAudit {
  std::string mode, arm;
  int n_sequences = 0;
  double feet_head_saliency_share = 0.0;
  double feet_head_area_share = 0.0;
  double entropy_mean = 0.0;
  std::map<int, double> part_saliency_share;  // averaged over audited sequences
  std::map<int, double> part_area_share;
};

struct ExperimentResult {
  std::map<std::string, ModeResults> modes;  // mode tag -> results
  std::vector<TransferResults> transfer;
  std::optional<SaliencyAudit> saliency;
  std::string summary_json;  // exact bytes written to summary.json
};

/// End-to-end experiment: generate/ingest, render, extract, train per fold and
/// arm, evaluate probe-gallery, run statistics and the saliency audit, write
/// summary.json / metrics.csv / region_shares.csv / overlays / checkpoints.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Recompute every derivable number in summary.json from the emitted CSVs.
/// Returns a list of inconsistencies (empty = report verifies).
std::vector<std::string> verify_report(const std::filesystem::path& out_dir);

// Shared helpers (also used by the CLI subcommands).
struct SequenceDescriptors {
  std::vector<std::string> sequence_ids;
  std::vector<std::string> identity_ids;
  std::vector<std::string> surgery_ids;
  Eigen::MatrixXd values;  // one row per sequence
};
SequenceDescriptors extract_descriptors(const std::vector<PersonSequence>& seqs, DescriptorKind arm,
                                        int res_h, int res_w, int jobs);

/// Gallery = first sequence (by sequence_id) per (identity, surgery); probes =
/// the rest. Returns row indices into the descriptor set.
std::pair<std::vector<int>, std::vector<int>> gallery_probe_split(const SequenceDescriptors& d);

inline const std::vector<std::string> kMetricNames = {"map", "cmc3", "acc_micro", "acc_macro"};
double metric_value(const MetricsReport& r, const std::string& name);

// Table-1 style "%.2f ± %.2f" of percent values; shared with verify-report.
std::string format_percent_pm(double mean, double sd);
double sample_sd(std::span<const double> v);

}  // namespace geomreid

#endif  // GEOMREID_EXPERIMENT_HPP
