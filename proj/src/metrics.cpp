#include "geomreid/metrics.hpp"

#include <algorithm>

#include "geomreid/common.hpp"

namespace geomreid {

std::vector<FoldSpec> make_folds(const DatasetManifest& manifest, int k) {
  if (k < 1) raise(Errc::invalid_arg, "k must be positive");
  std::set<std::string> surgeries;
  for (const ManifestEntry& e : manifest.entries) surgeries.insert(e.surgery_id);
  if (static_cast<int>(surgeries.size()) < k)
    raise(Errc::too_few_surgeries, "have " + std::to_string(surgeries.size()) + " surgeries, need " +
                                       std::to_string(k));
  std::vector<FoldSpec> folds(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) folds[static_cast<std::size_t>(f)].fold_index = f;
  int i = 0;
  for (const std::string& s : surgeries) {  // std::set iterates sorted
    for (int f = 0; f < k; ++f) {
      if (f == i % k) folds[static_cast<std::size_t>(f)].test_surgeries.insert(s);
      else folds[static_cast<std::size_t>(f)].train_surgeries.insert(s);
    }
    ++i;
  }
  return folds;
}

double average_precision(const std::vector<std::string>& ranked_labels,
                         const std::string& probe_identity) {
  if (ranked_labels.empty()) raise(Errc::invalid_arg, "empty ranking");
  std::vector<double> precisions;
  int hits = 0;
  for (std::size_t r = 0; r < ranked_labels.size(); ++r) {
    if (ranked_labels[r] == probe_identity) {
      ++hits;
      precisions.push_back(static_cast<double>(hits) / static_cast<double>(r + 1));
    }
  }
  if (hits == 0) raise(Errc::no_positive, "no gallery entry matches '" + probe_identity + "'");
  return pairwise_mean(precisions);
}

MetricsReport evaluate_probe_gallery(const Eigen::MatrixXd& probe_embeddings,
                                     const std::vector<std::string>& probe_labels,
                                     const Eigen::MatrixXd& gallery_embeddings,
                                     const std::vector<std::string>& gallery_labels) {
  const Eigen::Index np = probe_embeddings.rows();
  const Eigen::Index ng = gallery_embeddings.rows();
  if (np != static_cast<Eigen::Index>(probe_labels.size()) ||
      ng != static_cast<Eigen::Index>(gallery_labels.size()))
    raise(Errc::dimension_mismatch, "embedding rows and labels disagree");
  if (np == 0 || ng == 0) raise(Errc::invalid_arg, "empty probe or gallery set");
  if (probe_embeddings.cols() != gallery_embeddings.cols())
    raise(Errc::dimension_mismatch, "probe and gallery embedding dims disagree");

  const std::set<std::string> gallery_ids(gallery_labels.begin(), gallery_labels.end());
  for (const std::string& id : probe_labels)
    if (!gallery_ids.count(id))
      raise(Errc::unknown_probe_identity, "probe identity '" + id + "' absent from gallery");

  MetricsReport rep;
  rep.per_probe_ranks.resize(static_cast<std::size_t>(np));
  std::vector<double> aps(static_cast<std::size_t>(np));
  std::map<std::string, std::pair<int, int>> id_hits;  // identity -> (rank-1 hits, probes)

  for (Eigen::Index p = 0; p < np; ++p) {
    std::vector<std::pair<double, int>> order;
    order.reserve(static_cast<std::size_t>(ng));
    for (Eigen::Index g = 0; g < ng; ++g) {
      const double d = (probe_embeddings.row(p) - gallery_embeddings.row(g)).squaredNorm();
      order.emplace_back(d, static_cast<int>(g));
    }
    std::sort(order.begin(), order.end());  // (distance, gallery index): stable tie-break

    std::vector<std::string> ranked;
    ranked.reserve(order.size());
    int first_correct = 0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      const std::string& gl = gallery_labels[static_cast<std::size_t>(order[r].second)];
      ranked.push_back(gl);
      if (first_correct == 0 && gl == probe_labels[static_cast<std::size_t>(p)])
        first_correct = static_cast<int>(r + 1);
    }
    rep.per_probe_ranks[static_cast<std::size_t>(p)] = first_correct;
    aps[static_cast<std::size_t>(p)] = average_precision(ranked, probe_labels[static_cast<std::size_t>(p)]);
    auto& h = id_hits[probe_labels[static_cast<std::size_t>(p)]];
    h.first += first_correct == 1 ? 1 : 0;
    h.second += 1;
  }

  rep.map = pairwise_mean(aps);
  std::vector<double> cmc_hits, top1_hits;
  for (int r : rep.per_probe_ranks) {
    cmc_hits.push_back(r >= 1 && r <= 3 ? 1.0 : 0.0);
    top1_hits.push_back(r == 1 ? 1.0 : 0.0);
  }
  rep.cmc3 = pairwise_mean(cmc_hits);
  rep.acc_micro = pairwise_mean(top1_hits);

  std::vector<double> per_id;
  for (const auto& [id, h] : id_hits) {
    const double acc = static_cast<double>(h.first) / static_cast<double>(h.second);
    rep.per_identity_acc[id] = acc;
    per_id.push_back(acc);
  }
  rep.acc_macro = pairwise_mean(per_id);
  return rep;
}

}  // namespace geomreid
