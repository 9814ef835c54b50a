#ifndef GEOMREID_DESCRIPTOR_HPP
#define GEOMREID_DESCRIPTOR_HPP

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "geomreid/projection.hpp"

namespace geomreid {

enum class DescriptorKind { geometric, appearance };

inline constexpr int kGeometricDim = 16;
inline constexpr int kAppearanceDim = 48;
inline constexpr int kHueBins = 16;  // bin 0 is the zero-saturation bin
inline constexpr int kDepthBands = 8;

const char* descriptor_kind_name(DescriptorKind k);
DescriptorKind parse_descriptor_kind(const std::string& s);

struct Descriptor {
  DescriptorKind kind = DescriptorKind::geometric;
  Eigen::VectorXd values;
};

enum class HistogramBinning { hard, soft };

struct AppearanceConfig {
  HistogramBinning binning = HistogramBinning::hard;
  double tau = 0.05;                 // soft-binning temperature (hue units / saturation scale)
  double gray_sat_threshold = 0.05;  // hard binning: saturation below this lands in bin 0
};

/// 16-dim geometric sequence descriptor, metric units preserved:
///   0 height p99 (m)      1 height p50 (m)
///   2 shoulder-width proxy: x-extent p95 in the 75-85% height band (m)
///   3 hip-width proxy: x-extent p95 in the 45-55% height band (m)
///   4 mean silhouette area (m^2)   5 max silhouette area (m^2)
///   6 gait frequency (Hz) from the silhouette-width autocorrelation peak,
///     searched over lags [fps/1.5, fps/0.5]; 0 when the signal is flat
///   7 stride-amplitude proxy: max - min of the width signal (m)
///   8..15 depth-profile means over 8 vertical silhouette bands (m)
Descriptor geometric_descriptor(std::span<const ProjectedImages> seq, double fps);

/// 48-dim appearance descriptor: 16-bin hue histograms over the head band
/// (top 15% of silhouette rows), torso band (middle 50%) and feet band
/// (bottom 15%), per-frame L1-normalized and averaged over frames.
Descriptor appearance_descriptor(std::span<const ProjectedImages> seq, const AppearanceConfig& cfg = {});

// --- shared internals, reused by the saliency backprop path -----------------

struct BandRows {
  Eigen::Index lo = 0, hi = -1;  // inclusive; empty if hi < lo
  bool contains(Eigen::Index r) const { return r >= lo && r <= hi; }
};

/// Head/torso/feet row bands of one frame's valid silhouette.
std::array<BandRows, 3> appearance_bands(const ProjectedImages& img);

int hard_hue_bin(double r, double g, double b, double gray_sat_threshold);

/// Differentiable soft bin weights (sum to 1): bin 0 carries exp(-sat/tau),
/// the hue bins share the rest via a circular Gaussian kernel of width tau.
Eigen::VectorXd soft_hue_weights(double r, double g, double b, double tau);

/// d(soft weights)/d(r,g,b); kHueBins x 3. Almost-everywhere derivative:
/// channel-order switches and the gray singularity are measure-zero.
Eigen::Matrix<double, kHueBins, 3> soft_hue_weights_grad(double r, double g, double b, double tau);

// Descriptor cache: CSV rows (sequence_id, kind, v0, v1, ...).
void save_descriptor_cache(const std::filesystem::path& path,
                           std::span<const std::pair<std::string, Descriptor>> entries);
std::vector<std::pair<std::string, Descriptor>> load_descriptor_cache(const std::filesystem::path& path);

}  // namespace geomreid

#endif  // GEOMREID_DESCRIPTOR_HPP
