#ifndef GEOMREID_METRICS_HPP
#define GEOMREID_METRICS_HPP

#include <Eigen/Core>

#include <map>
#include <set>
#include <string>
#include <vector>

#include "geomreid/types.hpp"

namespace geomreid {

struct FoldSpec {
  int fold_index = 0;
  std::set<std::string> train_surgeries;
  std::set<std::string> test_surgeries;
};

/// Surgeries sorted lexicographically, dealt round-robin into k test sets.
std::vector<FoldSpec> make_folds(const DatasetManifest& manifest, int k);

struct MetricsReport {
  double map = 0.0;
  double cmc3 = 0.0;
  double acc_micro = 0.0;
  double acc_macro = 0.0;
  std::vector<int> per_probe_ranks;             // rank of the first correct match, 1-based
  std::map<std::string, double> per_identity_acc;
};

/// AP = mean over positive positions r of (positives at ranks <= r) / r.
double average_precision(const std::vector<std::string>& ranked_labels, const std::string& probe_identity);

/// Squared-Euclidean probe-gallery ranking; ascending distance, ties broken by
/// gallery index. acc_macro averages rank-1 accuracy over probe identities.
MetricsReport evaluate_probe_gallery(const Eigen::MatrixXd& probe_embeddings,
                                     const std::vector<std::string>& probe_labels,
                                     const Eigen::MatrixXd& gallery_embeddings,
                                     const std::vector<std::string>& gallery_labels);

}  // namespace geomreid

#endif  // GEOMREID_METRICS_HPP
