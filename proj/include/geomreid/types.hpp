#ifndef GEOMREID_TYPES_HPP
#define GEOMREID_TYPES_HPP

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "geomreid/common.hpp"

namespace geomreid {

// Row per point: (x, y, z) in meters, y vertical and up-positive.
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;
// Row per point: (r, g, b) in [0, 1], aligned with PointMatrix rows.
using ColorMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;
// Small-integer body-part code per point.
using LabelVector = Eigen::VectorXi;

/// One timestamped 3D point cloud of one person.
struct PersonFrame {
  PointMatrix points;
  std::optional<ColorMatrix> colors;
  std::optional<LabelVector> part_labels;
  double timestamp_s = 0.0;
};

/// Ordered frames plus identity and session labels; the unit of re-identification.
struct PersonSequence {
  std::vector<PersonFrame> frames;
  std::string identity_id;
  std::string surgery_id;
  std::string sequence_id;
  double fps = 0.0;
};

struct ManifestEntry {
  std::string sequence_id;
  std::string identity_id;
  std::string surgery_id;
  std::string file_path;  // directory of per-frame PLY files named frame_%06d.ply
  double fps = 0.0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::string mode_tag;  // e.g. "confounded" / "standardized" / "real"
};

// Invariant checks; throw Errc::invalid_frame / invalid_sequence.
void validate(const PersonFrame& frame);
void validate(const PersonSequence& seq);

}  // namespace geomreid

#endif  // GEOMREID_TYPES_HPP
