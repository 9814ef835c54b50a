#include "geomreid/model.hpp"

#include <cmath>

namespace geomreid {

EmbeddingModel make_model(Eigen::Index in_dim, const std::vector<int>& hidden, Eigen::Index out_dim,
                          std::uint64_t seed) {
  if (in_dim < 1 || out_dim < 1) raise(Errc::invalid_arg, "model dimensions must be positive");
  std::vector<Eigen::Index> dims;
  dims.push_back(in_dim);
  for (int h : hidden) {
    if (h < 1) raise(Errc::invalid_arg, "hidden width must be positive");
    dims.push_back(h);
  }
  dims.push_back(out_dim);

  CounterRng rng(mix(seed, 0x494E4954u));
  EmbeddingModel m;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const Eigen::Index in = dims[l], out = dims[l + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    Eigen::MatrixXd w(out, in);
    for (Eigen::Index i = 0; i < out; ++i)
      for (Eigen::Index j = 0; j < in; ++j) w(i, j) = rng.uniform(-a, a);
    m.weights.push_back(std::move(w));
    m.biases.push_back(Eigen::VectorXd::Zero(out));
  }
  return m;
}

Eigen::VectorXd model_forward(const EmbeddingModel& model, const Eigen::VectorXd& input) {
  if (model.weights.empty()) raise(Errc::invalid_arg, "model has no layers");
  if (input.size() != model.input_dim())
    raise(Errc::dimension_mismatch, "input has " + std::to_string(input.size()) + " dims, model expects " +
                                        std::to_string(model.input_dim()));
  Eigen::VectorXd a = input;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    Eigen::VectorXd z = model.weights[l] * a + model.biases[l];
    a = l + 1 < model.weights.size() ? z.cwiseMax(0.0).eval() : z;
  }
  const double n = a.norm();
  if (n < 1e-12) raise(Errc::normalization_degenerate, "pre-normalization output is (near) zero");
  return a / n;
}

ForwardCache model_forward_batch(const EmbeddingModel& model, const Eigen::MatrixXd& batch) {
  if (model.weights.empty()) raise(Errc::invalid_arg, "model has no layers");
  if (batch.cols() != model.input_dim())
    raise(Errc::dimension_mismatch, "batch has " + std::to_string(batch.cols()) + " dims, model expects " +
                                        std::to_string(model.input_dim()));
  ForwardCache cache;
  cache.activations.push_back(batch);
  Eigen::MatrixXd a = batch;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    Eigen::MatrixXd z = (a * model.weights[l].transpose()).rowwise() + model.biases[l].transpose();
    cache.pre_acts.push_back(z);
    a = l + 1 < model.weights.size() ? z.cwiseMax(0.0).eval() : z;
    if (l + 1 < model.weights.size()) cache.activations.push_back(a);
  }
  cache.norms = a.rowwise().norm();
  for (Eigen::Index i = 0; i < cache.norms.size(); ++i)
    if (cache.norms(i) < 1e-12)
      raise(Errc::normalization_degenerate, "pre-normalization output is (near) zero for row " +
                                                std::to_string(i));
  cache.embeddings = a.array().colwise() / cache.norms.array();
  return cache;
}

ModelGrads model_backward(const EmbeddingModel& model, const ForwardCache& cache,
                          const Eigen::MatrixXd& d_embeddings, Eigen::MatrixXd* d_input) {
  const std::size_t layers = model.weights.size();
  ModelGrads g;
  g.d_weights.resize(layers);
  g.d_biases.resize(layers);

  // Through e = y / ||y||: dy = (de - e (e . de)) / ||y||.
  Eigen::MatrixXd delta(d_embeddings.rows(), d_embeddings.cols());
  for (Eigen::Index i = 0; i < d_embeddings.rows(); ++i) {
    const Eigen::RowVectorXd e = cache.embeddings.row(i);
    const Eigen::RowVectorXd de = d_embeddings.row(i);
    delta.row(i) = (de - e * (e.dot(de))) / cache.norms(i);
  }

  for (std::size_t l = layers; l-- > 0;) {
    if (l + 1 < layers) delta = (delta.array() * (cache.pre_acts[l].array() > 0.0).cast<double>()).matrix();
    g.d_weights[l] = delta.transpose() * cache.activations[l];
    g.d_biases[l] = delta.colwise().sum().transpose();
    if (l > 0 || d_input) {
      Eigen::MatrixXd prev = delta * model.weights[l];
      if (l == 0 && d_input) *d_input = std::move(prev);
      else delta = std::move(prev);
    }
  }
  return g;
}

}  // namespace geomreid
