#ifndef GEOMREID_TRAIN_HPP
#define GEOMREID_TRAIN_HPP

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "geomreid/descriptor.hpp"
#include "geomreid/model.hpp"

namespace geomreid {

struct TrainConfig {
  double margin = 0.3;
  double learning_rate = 1e-3;
  int epochs = 60;
  int batch_p = 8;  // identities per batch
  int batch_k = 4;  // sequences per identity
  std::uint64_t seed = 0;
  std::vector<int> hidden = {64, 64};
  int embed_dim = 32;
};

void validate(const TrainConfig& cfg);

/// Hinge triplet loss on (already computed) distances: max(0, d_ap - d_an + margin).
double triplet_loss(double d_ap, double d_an, double margin);

struct Triplet {
  int anchor, pos, neg;
};

/// Batch-hard mining: per anchor, the farthest same-label and the nearest
/// different-label sample; ties broken by lowest index.
std::vector<Triplet> batch_hard_mine(const Eigen::MatrixXd& dist, const std::vector<int>& labels);

/// Pairwise squared Euclidean distances between rows.
Eigen::MatrixXd pairwise_sq_distances(const Eigen::MatrixXd& rows);

struct Batch {
  Eigen::MatrixXd inputs;   // B x d
  std::vector<int> labels;  // length B
};

/// Mean over anchors of the batch-hard triplet loss on squared embedding distances.
double batch_loss(const EmbeddingModel& model, const Batch& batch, double margin);

/// Same loss plus its gradient w.r.t. every weight and bias.
ModelGrads batch_loss_grads(const EmbeddingModel& model, const Batch& batch, double margin,
                            double* loss_out = nullptr);

struct TrainResult {
  EmbeddingModel model;
  std::vector<double> loss_curve;  // per-epoch mean loss
};

/// P*K batch sampling with a deterministic seeded sampler, SGD on the triplet
/// loss; bit-reproducible for a fixed config.
TrainResult train_embedding(const Eigen::MatrixXd& descriptors, const std::vector<std::string>& labels,
                            const TrainConfig& cfg);

/// Max relative error between analytic gradients and central finite
/// differences over n_params randomly selected parameters.
double gradient_check(const EmbeddingModel& model, const Batch& batch, double margin,
                      int n_params = 200, double step = 1e-4, std::uint64_t seed = 0);

// Checkpoint: JSON with shapes, row-major weights, train config and seed.
void save_checkpoint(const std::filesystem::path& path, const EmbeddingModel& model,
                     const TrainConfig& cfg, DescriptorKind kind);
struct Checkpoint {
  EmbeddingModel model;
  TrainConfig config;
  DescriptorKind kind = DescriptorKind::geometric;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace geomreid

#endif  // GEOMREID_TRAIN_HPP
