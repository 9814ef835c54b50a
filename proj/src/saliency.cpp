#include "geomreid/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace geomreid {

namespace {

class SoftAppearanceExtractor final : public DifferentiableExtractor {
 public:
  explicit SoftAppearanceExtractor(const AppearanceConfig& cfg) : cfg_(cfg) {
    if (cfg_.binning != HistogramBinning::soft)
      raise(Errc::non_differentiable_path, "hard-binned appearance descriptor has no gradient path");
  }

  DescriptorKind kind() const override { return DescriptorKind::appearance; }
  Eigen::Index dim() const override { return kAppearanceDim; }

  Eigen::VectorXd extract(std::span<const ProjectedImages> seq) const override {
    return appearance_descriptor(seq, cfg_).values;
  }

  std::vector<PixelGradients> backprop(std::span<const ProjectedImages> seq,
                                       const Eigen::VectorXd& d_descriptor) const override {
    if (d_descriptor.size() != kAppearanceDim)
      raise(Errc::dimension_mismatch, "descriptor gradient has wrong length");

    // Frames contributing to each band (matches the forward averaging).
    Eigen::Vector3d frames_with_band = Eigen::Vector3d::Zero();
    for (const ProjectedImages& img : seq) {
      const auto bands = appearance_bands(img);
      for (int bi = 0; bi < 3; ++bi) {
        double n = 0.0;
        for (Eigen::Index r = bands[bi].lo; r <= bands[bi].hi; ++r)
          for (Eigen::Index c = 0; c < img.cols(); ++c)
            if (img.valid(r, c)) n += 1.0;
        if (n > 0.0) frames_with_band(bi) += 1.0;
      }
    }

    std::vector<PixelGradients> grads;
    grads.reserve(seq.size());
    for (const ProjectedImages& img : seq) {
      PixelGradients g;
      g.depth = Eigen::MatrixXd::Zero(img.rows(), img.cols());
      g.r = Eigen::MatrixXd::Zero(img.rows(), img.cols());
      g.g = Eigen::MatrixXd::Zero(img.rows(), img.cols());
      g.b = Eigen::MatrixXd::Zero(img.rows(), img.cols());

      const auto bands = appearance_bands(img);
      for (int bi = 0; bi < 3; ++bi) {
        if (frames_with_band(bi) == 0.0) continue;
        double n = 0.0;
        for (Eigen::Index r = bands[bi].lo; r <= bands[bi].hi; ++r)
          for (Eigen::Index c = 0; c < img.cols(); ++c)
            if (img.valid(r, c)) n += 1.0;
        if (n == 0.0) continue;
        const double scale = 1.0 / (frames_with_band(bi) * n);
        const Eigen::VectorXd up = d_descriptor.segment(bi * kHueBins, kHueBins);
        for (Eigen::Index r = bands[bi].lo; r <= bands[bi].hi; ++r)
          for (Eigen::Index c = 0; c < img.cols(); ++c) {
            if (!img.valid(r, c)) continue;
            const Eigen::Matrix<double, kHueBins, 3> dw = soft_hue_weights_grad(
                img.color[0](r, c), img.color[1](r, c), img.color[2](r, c), cfg_.tau);
            const Eigen::RowVector3d drgb = scale * (up.transpose() * dw);
            g.r(r, c) += drgb(0);
            g.g(r, c) += drgb(1);
            g.b(r, c) += drgb(2);
          }
      }
      grads.push_back(std::move(g));
    }
    return grads;
  }

 private:
  AppearanceConfig cfg_;
};

class GeometricExtractor final : public DifferentiableExtractor {
 public:
  explicit GeometricExtractor(double fps) : fps_(fps) {}

  DescriptorKind kind() const override { return DescriptorKind::geometric; }
  Eigen::Index dim() const override { return kGeometricDim; }

  Eigen::VectorXd extract(std::span<const ProjectedImages> seq) const override {
    return geometric_descriptor(seq, fps_).values;
  }

  std::vector<PixelGradients> backprop(std::span<const ProjectedImages> seq,
                                       const Eigen::VectorXd& d_descriptor) const override {
    if (d_descriptor.size() != kGeometricDim)
      raise(Errc::dimension_mismatch, "descriptor gradient has wrong length");

    // Pooled per-band pixel counts across all frames (matches the forward mean).
    Eigen::Matrix<double, kDepthBands, 1> band_cnt = Eigen::Matrix<double, kDepthBands, 1>::Zero();
    auto for_each_banded_pixel = [&](const ProjectedImages& img, auto&& fn) {
      Eigen::Index rmin = img.rows(), rmax = -1;
      for (Eigen::Index r = 0; r < img.rows(); ++r)
        for (Eigen::Index c = 0; c < img.cols(); ++c)
          if (img.valid(r, c)) {
            rmin = std::min(rmin, r);
            rmax = std::max(rmax, r);
          }
      if (rmax < rmin) return;
      const Eigen::Index span = rmax - rmin + 1;
      for (Eigen::Index r = 0; r < img.rows(); ++r)
        for (Eigen::Index c = 0; c < img.cols(); ++c) {
          if (!img.valid(r, c)) continue;
          const Eigen::Index band =
              std::min<Eigen::Index>(kDepthBands - 1, (r - rmin) * kDepthBands / span);
          fn(r, c, band);
        }
    };
    for (const ProjectedImages& img : seq)
      for_each_banded_pixel(img, [&](Eigen::Index, Eigen::Index, Eigen::Index band) { band_cnt(band) += 1.0; });

    std::vector<PixelGradients> grads;
    grads.reserve(seq.size());
    for (const ProjectedImages& img : seq) {
      PixelGradients g;
      g.depth = Eigen::MatrixXd::Zero(img.rows(), img.cols());
      g.r = Eigen::MatrixXd::Zero(img.rows(), img.cols());
      g.g = Eigen::MatrixXd::Zero(img.rows(), img.cols());
      g.b = Eigen::MatrixXd::Zero(img.rows(), img.cols());
      for_each_banded_pixel(img, [&](Eigen::Index r, Eigen::Index c, Eigen::Index band) {
        if (band_cnt(band) > 0.0) g.depth(r, c) += d_descriptor(8 + band) / band_cnt(band);
      });
      grads.push_back(std::move(g));
    }
    return grads;
  }

 private:
  double fps_;
};

}  // namespace

std::unique_ptr<DifferentiableExtractor> make_appearance_extractor(const AppearanceConfig& cfg) {
  return std::make_unique<SoftAppearanceExtractor>(cfg);
}

std::unique_ptr<DifferentiableExtractor> make_geometric_extractor(double fps) {
  return std::make_unique<GeometricExtractor>(fps);
}

Eigen::MatrixXd make_centroid_head(const Eigen::MatrixXd& embeddings,
                                   const std::vector<std::string>& labels,
                                   std::vector<std::string>* id_order) {
  if (embeddings.rows() != static_cast<Eigen::Index>(labels.size()))
    raise(Errc::dimension_mismatch, "embedding rows and labels disagree");
  std::map<std::string, std::pair<Eigen::VectorXd, int>> sums;
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    auto it = sums.find(labels[static_cast<std::size_t>(i)]);
    if (it == sums.end())
      sums.emplace(labels[static_cast<std::size_t>(i)],
                   std::make_pair(Eigen::VectorXd(embeddings.row(i).transpose()), 1));
    else {
      it->second.first += embeddings.row(i).transpose();
      it->second.second += 1;
    }
  }
  Eigen::MatrixXd head(static_cast<Eigen::Index>(sums.size()), embeddings.cols());
  if (id_order) id_order->clear();
  Eigen::Index row = 0;
  for (const auto& [id, sum] : sums) {
    Eigen::VectorXd mean = sum.first / static_cast<double>(sum.second);
    const double n = mean.norm();
    head.row(row++) = (n > 1e-12 ? (mean / n).eval() : mean).transpose();
    if (id_order) id_order->push_back(id);
  }
  return head;
}

Eigen::MatrixXd train_linear_probe(const Eigen::MatrixXd& features,
                                   const std::vector<std::string>& labels,
                                   std::vector<std::string>* id_order, int iters, double lr) {
  if (features.rows() != static_cast<Eigen::Index>(labels.size()))
    raise(Errc::dimension_mismatch, "feature rows and labels disagree");
  if (features.rows() < 2) raise(Errc::insufficient_data, "probe needs at least 2 samples");

  std::map<std::string, int> code;
  for (const std::string& l : labels) code.emplace(l, 0);
  int next = 0;
  for (auto& [id, c] : code) c = next++;
  if (id_order) {
    id_order->clear();
    for (const auto& [id, c] : code) id_order->push_back(id);
  }
  std::vector<int> y;
  y.reserve(labels.size());
  for (const std::string& l : labels) y.push_back(code.at(l));

  const Eigen::Index n = features.rows();
  const int classes = next;
  Eigen::MatrixXd head = Eigen::MatrixXd::Zero(classes, features.cols());
  for (int it = 0; it < iters; ++it) {
    const Eigen::MatrixXd logits = features * head.transpose();
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(classes, features.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd l = logits.row(i).transpose();
      l.array() -= l.maxCoeff();
      Eigen::VectorXd p = l.array().exp();
      p /= p.sum();
      p(y[static_cast<std::size_t>(i)]) -= 1.0;
      grad += p * features.row(i);
    }
    head -= (lr / static_cast<double>(n)) * grad;
  }
  return head;
}

EmbeddingModel make_normalizer_model(Eigen::Index dim) {
  EmbeddingModel m;
  m.weights.push_back(Eigen::MatrixXd::Identity(dim, dim));
  m.biases.push_back(Eigen::VectorXd::Zero(dim));
  return m;
}

std::vector<Eigen::MatrixXd> input_gradient_frames(const DifferentiableExtractor& extractor,
                                                   const EmbeddingModel& model,
                                                   std::span<const ProjectedImages> seq,
                                                   const SaliencyObjective& objective) {
  if (seq.empty()) raise(Errc::invalid_arg, "empty sequence");
  const Eigen::VectorXd desc = extractor.extract(seq);
  if (desc.size() != model.input_dim())
    raise(Errc::dimension_mismatch, "descriptor does not match model input");

  const ForwardCache cache = model_forward_batch(model, desc.transpose());

  Eigen::RowVectorXd d_embedding(cache.embeddings.cols());
  if (const auto* m = std::get_if<MatchObjective>(&objective)) {
    if (m->reference.size() != cache.embeddings.cols())
      raise(Errc::dimension_mismatch, "reference embedding has wrong length");
    d_embedding = m->reference.transpose();
  } else {
    const auto& l = std::get<LogitObjective>(objective);
    if (l.head.cols() != cache.embeddings.cols() || l.target < 0 || l.target >= l.head.rows())
      raise(Errc::dimension_mismatch, "probe head/target does not match embedding");
    d_embedding = l.head.row(l.target);
  }

  Eigen::MatrixXd d_desc;
  model_backward(model, cache, d_embedding, &d_desc);
  const std::vector<PixelGradients> pg = extractor.backprop(seq, d_desc.row(0).transpose());

  std::vector<Eigen::MatrixXd> maps;
  maps.reserve(pg.size());
  for (const PixelGradients& g : pg)
    maps.push_back(g.depth.cwiseAbs() + g.r.cwiseAbs() + g.g.cwiseAbs() + g.b.cwiseAbs());
  return maps;
}

SaliencyMap input_gradient_saliency(const DifferentiableExtractor& extractor, const EmbeddingModel& model,
                                    std::span<const ProjectedImages> seq,
                                    const SaliencyObjective& objective) {
  const std::vector<Eigen::MatrixXd> frames = input_gradient_frames(extractor, model, seq, objective);
  SaliencyMap map;
  map.weights = Eigen::MatrixXd::Zero(frames[0].rows(), frames[0].cols());
  for (const Eigen::MatrixXd& f : frames) map.weights += f;
  const double total = map.weights.sum();
  if (total <= 0.0) {
    map.all_zero = true;
    map.weights.setZero();
  } else {
    map.weights /= total;
  }
  return map;
}

RegionShares region_attribution(const SaliencyMap& map, const Eigen::MatrixXi& parts) {
  if (map.weights.rows() != parts.rows() || map.weights.cols() != parts.cols())
    raise(Errc::shape_mismatch, "saliency map and part image shapes disagree");
  RegionShares out;
  double total_w = 0.0, total_n = 0.0;
  for (Eigen::Index r = 0; r < parts.rows(); ++r)
    for (Eigen::Index c = 0; c < parts.cols(); ++c) {
      const int p = parts(r, c);
      if (p < 0) continue;
      out.saliency_share[p] += map.weights(r, c);
      out.area_share[p] += 1.0;
      total_w += map.weights(r, c);
      total_n += 1.0;
    }
  for (auto& [p, w] : out.saliency_share)
    w = total_w > 0.0 ? w / total_w : 0.0;
  for (auto& [p, a] : out.area_share)
    a = total_n > 0.0 ? a / total_n : 0.0;
  return out;
}

RegionShares region_attribution(std::span<const Eigen::MatrixXd> frame_maps,
                                std::span<const ProjectedImages> seq) {
  if (frame_maps.size() != seq.size()) raise(Errc::shape_mismatch, "one map per frame required");
  RegionShares out;
  double total_w = 0.0, total_n = 0.0;
  for (std::size_t f = 0; f < seq.size(); ++f) {
    const Eigen::MatrixXd& m = frame_maps[f];
    const Eigen::MatrixXi& parts = seq[f].parts;
    if (m.rows() != parts.rows() || m.cols() != parts.cols())
      raise(Errc::shape_mismatch, "saliency map and part image shapes disagree");
    for (Eigen::Index r = 0; r < parts.rows(); ++r)
      for (Eigen::Index c = 0; c < parts.cols(); ++c) {
        const int p = parts(r, c);
        if (p < 0) continue;
        out.saliency_share[p] += m(r, c);
        out.area_share[p] += 1.0;
        total_w += m(r, c);
        total_n += 1.0;
      }
  }
  for (auto& [p, w] : out.saliency_share)
    w = total_w > 0.0 ? w / total_w : 0.0;
  for (auto& [p, a] : out.area_share)
    a = total_n > 0.0 ? a / total_n : 0.0;
  return out;
}

double map_entropy(const SaliencyMap& map) {
  double h = 0.0;
  int n = 0;
  for (Eigen::Index r = 0; r < map.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < map.weights.cols(); ++c) {
      const double w = map.weights(r, c);
      if (w > 0.0) {
        h -= w * std::log(w);
        ++n;
      }
    }
  if (n <= 1) return 0.0;
  return h / std::log(static_cast<double>(n));
}

void write_overlay_ppm(const ProjectedImages& img, const Eigen::MatrixXd& frame_map, double peak_weight,
                       const std::filesystem::path& path) {
  if (frame_map.rows() != img.rows() || frame_map.cols() != img.cols())
    raise(Errc::shape_mismatch, "saliency map and image shapes disagree");
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(Errc::io_error, "cannot write '" + path.string() + "'");
  out << "P6\n" << img.cols() << " " << img.rows() << "\n255\n";
  const double scale = peak_weight > 0.0 ? 1.0 / peak_weight : 0.0;
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index c = 0; c < img.cols(); ++c) {
      const double v = std::clamp(frame_map(r, c) * scale, 0.0, 1.0);
      const double heat[3] = {std::min(1.0, 3.0 * v), std::clamp(3.0 * v - 1.0, 0.0, 1.0),
                              std::clamp(3.0 * v - 2.0, 0.0, 1.0)};
      for (int ch = 0; ch < 3; ++ch) {
        const double base = img.valid(r, c) ? img.color[ch](r, c) : 0.0;
        const long byte = std::lround((0.5 * base + 0.5 * heat[ch]) * 255.0);
        out.put(static_cast<char>(std::clamp(byte, 0L, 255L)));
      }
    }
}

}  // namespace geomreid
