#ifndef GEOMREID_SALIENCY_HPP
#define GEOMREID_SALIENCY_HPP

#include <Eigen/Core>

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "geomreid/descriptor.hpp"
#include "geomreid/model.hpp"
#include "geomreid/projection.hpp"

namespace geomreid {

/// Per-pixel nonnegative attribution weights aligned with a ProjectedImages
/// grid; weights sum to 1 over valid pixels unless the gradient vanished.
struct SaliencyMap {
  Eigen::MatrixXd weights;
  bool all_zero = false;
};

/// dObjective/d(pixel value) for one frame, per channel.
struct PixelGradients {
  Eigen::MatrixXd depth, r, g, b;
};

/// A descriptor extractor with a reverse-mode path to per-pixel inputs.
class DifferentiableExtractor {
 public:
  virtual ~DifferentiableExtractor() = default;
  virtual DescriptorKind kind() const = 0;
  virtual Eigen::Index dim() const = 0;
  virtual Eigen::VectorXd extract(std::span<const ProjectedImages> seq) const = 0;
  virtual std::vector<PixelGradients> backprop(std::span<const ProjectedImages> seq,
                                               const Eigen::VectorXd& d_descriptor) const = 0;
};

/// Appearance path with soft hue binning (temperature tau); the hard-binned
/// configuration is rejected with NonDifferentiablePath.
std::unique_ptr<DifferentiableExtractor> make_appearance_extractor(const AppearanceConfig& cfg);

/// Geometric path. Only the depth-profile band means depend on pixel values;
/// the order-statistic features have zero almost-everywhere derivative, so the
/// map is exactly color-invariant.
std::unique_ptr<DifferentiableExtractor> make_geometric_extractor(double fps);

struct MatchObjective {
  Eigen::VectorXd reference;  // score = embedding . reference
};
struct LogitObjective {
  Eigen::MatrixXd head;  // identity-logit linear probe; score = (head * embedding)(target)
  int target = 0;
};
using SaliencyObjective = std::variant<MatchObjective, LogitObjective>;

/// Nearest-centroid linear probe head: per-identity mean embedding, rows
/// L2-normalized. id_order receives the row ordering (sorted identities).
Eigen::MatrixXd make_centroid_head(const Eigen::MatrixXd& embeddings,
                                   const std::vector<std::string>& labels,
                                   std::vector<std::string>* id_order = nullptr);

/// Supervised identity classification head: multinomial logistic regression
/// on the given features (full-batch gradient descent, deterministic). One row
/// per identity, aligned with id_order (sorted identities).
Eigen::MatrixXd train_linear_probe(const Eigen::MatrixXd& features,
                                   const std::vector<std::string>& labels,
                                   std::vector<std::string>* id_order = nullptr, int iters = 500,
                                   double lr = 2.0);

/// Pass-through pipeline model: a single identity layer, so the forward pass
/// is just the L2 normalization. Lets the probe head sit directly on the
/// descriptor, which is how the supervised saliency audit is wired.
EmbeddingModel make_normalizer_model(Eigen::Index dim);

/// |dObjective/dpixel| summed over channels and frames, normalized to sum 1.
SaliencyMap input_gradient_saliency(const DifferentiableExtractor& extractor, const EmbeddingModel& model,
                                    std::span<const ProjectedImages> seq,
                                    const SaliencyObjective& objective);

/// Per-frame unnormalized |gradient| maps (their sum is the aggregate map
/// before normalization).
std::vector<Eigen::MatrixXd> input_gradient_frames(const DifferentiableExtractor& extractor,
                                                   const EmbeddingModel& model,
                                                   std::span<const ProjectedImages> seq,
                                                   const SaliencyObjective& objective);

struct RegionShares {
  std::map<int, double> saliency_share;  // sums to 1 over labeled pixels
  std::map<int, double> area_share;
};

RegionShares region_attribution(const SaliencyMap& map, const Eigen::MatrixXi& parts);

/// Sequence-level attribution from per-frame maps and their part images.
RegionShares region_attribution(std::span<const Eigen::MatrixXd> frame_maps,
                                std::span<const ProjectedImages> seq);

/// Normalized Shannon entropy of the map in [0, 1]; 1 = uniform.
double map_entropy(const SaliencyMap& map);

/// Saliency rendered as heat, alpha-blended at 0.5 onto the color image.
void write_overlay_ppm(const ProjectedImages& img, const Eigen::MatrixXd& frame_map, double peak_weight,
                       const std::filesystem::path& path);

}  // namespace geomreid

#endif  // GEOMREID_SALIENCY_HPP
