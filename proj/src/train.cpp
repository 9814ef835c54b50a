#include "geomreid/train.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace geomreid {

void validate(const TrainConfig& cfg) {
  if (!(cfg.margin > 0.0)) raise(Errc::invalid_arg, "margin must be positive");
  if (cfg.batch_p < 2) raise(Errc::invalid_arg, "batch_P must be at least 2");
  if (cfg.batch_k < 2) raise(Errc::invalid_arg, "batch_K must be at least 2");
  if (cfg.epochs < 1) raise(Errc::invalid_arg, "epochs must be at least 1");
  if (cfg.learning_rate < 0.0) raise(Errc::invalid_arg, "learning_rate must be non-negative");
  if (cfg.embed_dim < 1) raise(Errc::invalid_arg, "embed_dim must be positive");
}

double triplet_loss(double d_ap, double d_an, double margin) {
  return std::max(0.0, d_ap - d_an + margin);
}

std::vector<Triplet> batch_hard_mine(const Eigen::MatrixXd& dist, const std::vector<int>& labels) {
  const int n = static_cast<int>(dist.rows());
  if (dist.cols() != n || static_cast<int>(labels.size()) != n)
    raise(Errc::dimension_mismatch, "distance matrix and labels disagree");

  std::map<int, int> counts;
  for (int l : labels) ++counts[l];
  for (const auto& [label, c] : counts)
    if (c < 2) raise(Errc::singleton_label, "label " + std::to_string(label) + " appears only once");
  if (counts.size() < 2) raise(Errc::invalid_arg, "need at least two distinct labels");

  std::vector<Triplet> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    int pos = -1, neg = -1;
    double worst_pos = -1.0, best_neg = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      if (labels[j] == labels[i]) {
        if (dist(i, j) > worst_pos) {  // strict: ties keep the lowest index
          worst_pos = dist(i, j);
          pos = j;
        }
      } else if (dist(i, j) < best_neg) {
        best_neg = dist(i, j);
        neg = j;
      }
    }
    out.push_back({i, pos, neg});
  }
  return out;
}

Eigen::MatrixXd pairwise_sq_distances(const Eigen::MatrixXd& rows) {
  const Eigen::VectorXd sq = rows.rowwise().squaredNorm();
  Eigen::MatrixXd d = sq.replicate(1, rows.rows()) + sq.transpose().replicate(rows.rows(), 1) -
                      2.0 * rows * rows.transpose();
  d.diagonal().setZero();
  return d.cwiseMax(0.0);
}

namespace {

double loss_from_cache(const ForwardCache& cache, const Batch& batch, double margin,
                       Eigen::MatrixXd* d_embeddings) {
  const Eigen::MatrixXd dist = pairwise_sq_distances(cache.embeddings);
  const std::vector<Triplet> triplets = batch_hard_mine(dist, batch.labels);
  const double inv_n = 1.0 / static_cast<double>(triplets.size());

  double loss = 0.0;
  if (d_embeddings) d_embeddings->setZero(cache.embeddings.rows(), cache.embeddings.cols());
  for (const Triplet& t : triplets) {
    const double l = triplet_loss(dist(t.anchor, t.pos), dist(t.anchor, t.neg), margin);
    loss += l * inv_n;
    if (d_embeddings && l > 0.0) {
      // d/de of ||e_a - e_p||^2 - ||e_a - e_n||^2
      const Eigen::RowVectorXd ea = cache.embeddings.row(t.anchor);
      const Eigen::RowVectorXd ep = cache.embeddings.row(t.pos);
      const Eigen::RowVectorXd en = cache.embeddings.row(t.neg);
      d_embeddings->row(t.anchor) += inv_n * 2.0 * (en - ep);
      d_embeddings->row(t.pos) += inv_n * 2.0 * (ep - ea);
      d_embeddings->row(t.neg) += inv_n * 2.0 * (ea - en);
    }
  }
  return loss;
}

}  // namespace

double batch_loss(const EmbeddingModel& model, const Batch& batch, double margin) {
  const ForwardCache cache = model_forward_batch(model, batch.inputs);
  return loss_from_cache(cache, batch, margin, nullptr);
}

ModelGrads batch_loss_grads(const EmbeddingModel& model, const Batch& batch, double margin,
                            double* loss_out) {
  const ForwardCache cache = model_forward_batch(model, batch.inputs);
  Eigen::MatrixXd d_emb;
  const double loss = loss_from_cache(cache, batch, margin, &d_emb);
  if (loss_out) *loss_out = loss;
  return model_backward(model, cache, d_emb);
}

TrainResult train_embedding(const Eigen::MatrixXd& descriptors, const std::vector<std::string>& labels,
                            const TrainConfig& cfg) {
  validate(cfg);
  if (descriptors.rows() != static_cast<Eigen::Index>(labels.size()))
    raise(Errc::dimension_mismatch, "descriptor rows and labels disagree");

  // Group rows per identity; only identities with >= K sequences are sampled.
  std::map<std::string, std::vector<int>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(static_cast<int>(i));
  std::vector<std::string> eligible;
  for (const auto& [id, rows] : groups)
    if (static_cast<int>(rows.size()) >= cfg.batch_k) eligible.push_back(id);
  if (static_cast<int>(eligible.size()) < cfg.batch_p)
    raise(Errc::insufficient_data, "need " + std::to_string(cfg.batch_p) + " identities with at least " +
                                       std::to_string(cfg.batch_k) + " sequences, have " +
                                       std::to_string(eligible.size()));

  std::map<std::string, int> label_code;
  for (const auto& [id, rows] : groups) label_code.emplace(id, static_cast<int>(label_code.size()));

  TrainResult result;
  result.model = make_model(descriptors.cols(), cfg.hidden, cfg.embed_dim, cfg.seed);
  result.loss_curve.reserve(static_cast<std::size_t>(cfg.epochs));

  const int batch_size = cfg.batch_p * cfg.batch_k;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    CounterRng rng(mix(cfg.seed, 0x455053u, static_cast<std::uint64_t>(epoch)));
    std::vector<std::string> order = eligible;
    rng.shuffle(order);
    const int steps = static_cast<int>(order.size()) / cfg.batch_p;

    std::vector<double> step_losses;
    step_losses.reserve(static_cast<std::size_t>(steps));
    for (int step = 0; step < steps; ++step) {
      Batch batch;
      batch.inputs.resize(batch_size, descriptors.cols());
      batch.labels.resize(static_cast<std::size_t>(batch_size));
      int row = 0;
      for (int p = 0; p < cfg.batch_p; ++p) {
        const std::string& id = order[static_cast<std::size_t>(step * cfg.batch_p + p)];
        std::vector<int> seq_rows = groups[id];
        rng.shuffle(seq_rows);
        for (int k = 0; k < cfg.batch_k; ++k, ++row) {
          batch.inputs.row(row) = descriptors.row(seq_rows[static_cast<std::size_t>(k)]);
          batch.labels[static_cast<std::size_t>(row)] = label_code[id];
        }
      }
      double loss = 0.0;
      const ModelGrads grads = batch_loss_grads(result.model, batch, cfg.margin, &loss);
      for (std::size_t l = 0; l < result.model.weights.size(); ++l) {
        result.model.weights[l] -= cfg.learning_rate * grads.d_weights[l];
        result.model.biases[l] -= cfg.learning_rate * grads.d_biases[l];
      }
      step_losses.push_back(loss);
    }
    result.loss_curve.push_back(pairwise_mean(step_losses));
  }
  return result;
}

namespace {

double* param_ptr(EmbeddingModel& m, Eigen::Index flat) {
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    if (flat < m.weights[l].size()) return m.weights[l].data() + flat;
    flat -= m.weights[l].size();
    if (flat < m.biases[l].size()) return m.biases[l].data() + flat;
    flat -= m.biases[l].size();
  }
  raise(Errc::invalid_arg, "parameter index out of range");
}

double param_grad(const ModelGrads& g, Eigen::Index flat) {
  for (std::size_t l = 0; l < g.d_weights.size(); ++l) {
    if (flat < g.d_weights[l].size()) return g.d_weights[l].data()[flat];
    flat -= g.d_weights[l].size();
    if (flat < g.d_biases[l].size()) return g.d_biases[l].data()[flat];
    flat -= g.d_biases[l].size();
  }
  raise(Errc::invalid_arg, "parameter index out of range");
}

}  // namespace

double gradient_check(const EmbeddingModel& model, const Batch& batch, double margin, int n_params,
                      double step, std::uint64_t seed) {
  const Eigen::Index total = model.parameter_count();
  std::vector<Eigen::Index> indices(static_cast<std::size_t>(total));
  std::iota(indices.begin(), indices.end(), Eigen::Index{0});
  if (total > n_params) {
    CounterRng rng(mix(seed, 0x475243u));
    rng.shuffle(indices);
    indices.resize(static_cast<std::size_t>(n_params));
  }

  const ModelGrads grads = batch_loss_grads(model, batch, margin);
  EmbeddingModel probe = model;

  double max_rel = 0.0;
  for (const Eigen::Index idx : indices) {
    double* p = param_ptr(probe, idx);
    const double saved = *p;
    *p = saved + step;
    const double f_plus = batch_loss(probe, batch, margin);
    *p = saved - step;
    const double f_minus = batch_loss(probe, batch, margin);
    *p = saved;
    const double numeric = (f_plus - f_minus) / (2.0 * step);
    const double analytic = param_grad(grads, idx);
    const double rel = std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

void save_checkpoint(const std::filesystem::path& path, const EmbeddingModel& model,
                     const TrainConfig& cfg, DescriptorKind kind) {
  nlohmann::ordered_json doc;
  doc["v"] = 1;
  doc["kind"] = descriptor_kind_name(kind);
  doc["seed"] = cfg.seed;
  doc["config"] = {{"margin", cfg.margin},       {"learning_rate", cfg.learning_rate},
                   {"epochs", cfg.epochs},       {"batch_p", cfg.batch_p},
                   {"batch_k", cfg.batch_k},     {"hidden", cfg.hidden},
                   {"embed_dim", cfg.embed_dim}};
  doc["layers"] = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    const Eigen::MatrixXd& w = model.weights[l];
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) flat.push_back(w(i, j));
    std::vector<double> bias(model.biases[l].data(), model.biases[l].data() + model.biases[l].size());
    doc["layers"].push_back({{"rows", w.rows()}, {"cols", w.cols()}, {"weights", flat}, {"bias", bias}});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(Errc::io_error, "cannot write '" + path.string() + "'");
  out << doc.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::missing_file, "cannot open '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
    Checkpoint ck;
    ck.kind = parse_descriptor_kind(doc.at("kind").get<std::string>());
    ck.config.seed = doc.at("seed").get<std::uint64_t>();
    const auto& c = doc.at("config");
    ck.config.margin = c.at("margin").get<double>();
    ck.config.learning_rate = c.at("learning_rate").get<double>();
    ck.config.epochs = c.at("epochs").get<int>();
    ck.config.batch_p = c.at("batch_p").get<int>();
    ck.config.batch_k = c.at("batch_k").get<int>();
    ck.config.hidden = c.at("hidden").get<std::vector<int>>();
    ck.config.embed_dim = c.at("embed_dim").get<int>();
    for (const auto& layer : doc.at("layers")) {
      const Eigen::Index rows = layer.at("rows").get<Eigen::Index>();
      const Eigen::Index cols = layer.at("cols").get<Eigen::Index>();
      const auto flat = layer.at("weights").get<std::vector<double>>();
      const auto bias = layer.at("bias").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(flat.size()) != rows * cols ||
          static_cast<Eigen::Index>(bias.size()) != rows)
        raise(Errc::parse_error, "checkpoint layer shape mismatch");
      Eigen::MatrixXd w(rows, cols);
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = flat[static_cast<std::size_t>(i * cols + j)];
      ck.model.weights.push_back(std::move(w));
      ck.model.biases.push_back(
          Eigen::Map<const Eigen::VectorXd>(bias.data(), static_cast<Eigen::Index>(bias.size())));
    }
    if (ck.model.weights.empty()) raise(Errc::parse_error, "checkpoint has no layers");
    return ck;
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::parse_error, std::string("bad checkpoint: ") + e.what());
  }
}

}  // namespace geomreid
