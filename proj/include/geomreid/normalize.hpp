#ifndef GEOMREID_NORMALIZE_HPP
#define GEOMREID_NORMALIZE_HPP

#include "geomreid/types.hpp"

namespace geomreid {

struct NormalizeInfo {
  bool degenerate = false;  // horizontal spread was ~0; frame returned unrotated
};

/// Canonicalize a frame rigidly (metric scale is never rescaled):
///  - horizontal centroid (x, z) translated to the origin,
///  - y shifted so the 1st percentile of y is 0 (floor-anchored),
///  - rotated about the vertical axis so the first principal component of the
///    horizontal spread aligns with +x. Sign tie-break: the rotation with a
///    non-negative sum of x over the first half of the points is chosen.
PersonFrame normalize_frame(const PersonFrame& frame, NormalizeInfo* info = nullptr);

}  // namespace geomreid

#endif  // GEOMREID_NORMALIZE_HPP
