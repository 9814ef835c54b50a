#ifndef GEOMREID_PROJECTION_HPP
#define GEOMREID_PROJECTION_HPP

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "geomreid/normalize.hpp"
#include "geomreid/types.hpp"

namespace geomreid {

// Fixed metric imaging volume: pixel size is metric, never per-person rescaled,
// so silhouette height in pixels tracks true stature.
inline constexpr double kVolumeXMin = -1.0;
inline constexpr double kVolumeXMax = 1.0;
inline constexpr double kVolumeYMin = 0.0;   // floor after normalization
inline constexpr double kVolumeYMax = 2.0;   // top of image
inline constexpr double kNearDepth = -1.0;
inline constexpr double kFarDepth = 1.0;

/// Co-registered depth / color / part-label images from one orthographic
/// projection. A pixel is valid iff point_index >= 0; depth, color and parts
/// share that mask by construction (single point-to-pixel assignment).
struct ProjectedImages {
  Eigen::MatrixXd depth;                  // meters (z of the closest point)
  std::array<Eigen::MatrixXd, 3> color;   // rgb in [0,1]
  Eigen::MatrixXi parts;                  // -1 = empty
  Eigen::MatrixXi point_index;            // contributing point, -1 = empty
  double near_depth_m = kNearDepth;
  double far_depth_m = kFarDepth;
  bool has_color = false;                 // source frame carried real colors

  Eigen::Index rows() const { return depth.rows(); }
  Eigen::Index cols() const { return depth.cols(); }
  bool valid(Eigen::Index r, Eigen::Index c) const { return point_index(r, c) >= 0; }
};

// Metric coordinates of pixel centers.
inline double pixel_center_x(Eigen::Index col, Eigen::Index w) {
  return kVolumeXMin + (static_cast<double>(col) + 0.5) * (kVolumeXMax - kVolumeXMin) / static_cast<double>(w);
}
inline double pixel_center_y(Eigen::Index row, Eigen::Index h) {
  return kVolumeYMax - (static_cast<double>(row) + 0.5) * (kVolumeYMax - kVolumeYMin) / static_cast<double>(h);
}
inline double pixel_width_m(Eigen::Index w) { return (kVolumeXMax - kVolumeXMin) / static_cast<double>(w); }
inline double pixel_height_m(Eigen::Index h) { return (kVolumeYMax - kVolumeYMin) / static_cast<double>(h); }

/// Orthographic front view along -z of a normalized frame. Row r spans
/// y in [2.0, 0.0) top-down, column c spans x in [-1.0, 1.0); each pixel keeps
/// the minimum-z point (ties: lowest point index). Colors default to mid-gray
/// (0.5, 0.5, 0.5) when the frame has none; parts to -1.
ProjectedImages project_person(const PersonFrame& frame, Eigen::Index h, Eigen::Index w);

/// normalize_frame + project_person per frame, order preserved. EmptyProjection
/// errors are annotated with the frame index.
std::vector<ProjectedImages> render_sequence(const PersonSequence& seq, Eigen::Index h, Eigen::Index w);

// Debug image dumps.
void write_depth_pgm(const ProjectedImages& img, const std::filesystem::path& path);   // 16-bit, mm above near plane, invalid = 0
void write_color_ppm(const ProjectedImages& img, const std::filesystem::path& path);   // 8-bit
void write_parts_pgm(const ProjectedImages& img, const std::filesystem::path& path);   // part code + 1, empty = 0

}  // namespace geomreid

#endif  // GEOMREID_PROJECTION_HPP
