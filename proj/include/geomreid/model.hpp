#ifndef GEOMREID_MODEL_HPP
#define GEOMREID_MODEL_HPP

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "geomreid/common.hpp"

namespace geomreid {

/// Layered affine map with ReLU between layers; the final output is
/// L2-normalized onto the unit sphere.
struct EmbeddingModel {
  std::vector<Eigen::MatrixXd> weights;  // layer l maps in -> out, rows = out
  std::vector<Eigen::VectorXd> biases;

  Eigen::Index input_dim() const { return weights.empty() ? 0 : weights.front().cols(); }
  Eigen::Index output_dim() const { return weights.empty() ? 0 : weights.back().rows(); }
  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }
};

/// Deterministic scaled-uniform (Glorot) init from the seed.
EmbeddingModel make_model(Eigen::Index in_dim, const std::vector<int>& hidden, Eigen::Index out_dim,
                          std::uint64_t seed);

/// Single forward pass; output has unit L2 norm.
Eigen::VectorXd model_forward(const EmbeddingModel& model, const Eigen::VectorXd& input);

// Batched forward with cached intermediates for reverse-mode passes.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;  // activations[0] = input batch (B x d)
  std::vector<Eigen::MatrixXd> pre_acts;     // z_l (B x out_l)
  Eigen::MatrixXd embeddings;                // unit rows (B x D)
  Eigen::VectorXd norms;                     // pre-normalization row norms
};
ForwardCache model_forward_batch(const EmbeddingModel& model, const Eigen::MatrixXd& batch);

struct ModelGrads {
  std::vector<Eigen::MatrixXd> d_weights;
  std::vector<Eigen::VectorXd> d_biases;
};

/// Reverse-mode through normalization and all layers. d_embeddings is dL/dE
/// (B x D). When d_input is non-null it receives dL/d(batch).
ModelGrads model_backward(const EmbeddingModel& model, const ForwardCache& cache,
                          const Eigen::MatrixXd& d_embeddings, Eigen::MatrixXd* d_input = nullptr);

}  // namespace geomreid

#endif  // GEOMREID_MODEL_HPP
