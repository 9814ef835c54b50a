#include "geomreid/normalize.hpp"

#include <cmath>

namespace geomreid {

PersonFrame normalize_frame(const PersonFrame& frame, NormalizeInfo* info) {
  validate(frame);
  const Eigen::Index n = frame.points.rows();
  if (n < 3) raise(Errc::invalid_frame, "normalize_frame needs at least 3 points");
  if (info) *info = NormalizeInfo{};

  PersonFrame out = frame;
  PointMatrix& pts = out.points;

  pts.col(0).array() -= pts.col(0).mean();
  pts.col(2).array() -= pts.col(2).mean();
  pts.col(1).array() -= percentile(pts.col(1), 1.0);

  // Principal horizontal axis from the 2x2 covariance of (x, z).
  const double sxx = pts.col(0).squaredNorm();
  const double szz = pts.col(2).squaredNorm();
  const double sxz = pts.col(0).dot(pts.col(2));
  if (sxx + szz < 1e-12 * static_cast<double>(n)) {
    if (info) info->degenerate = true;
    return out;  // coincident in the horizontal plane: leave unrotated
  }
  const double theta = 0.5 * std::atan2(2.0 * sxz, sxx - szz);
  const double c = std::cos(theta), s = std::sin(theta);

  // Rotation about y mapping the principal direction (cos t, sin t) to +x.
  auto apply = [&](double rc, double rs) {
    const Eigen::VectorXd x = pts.col(0) * rc + pts.col(2) * rs;
    const Eigen::VectorXd z = -pts.col(0) * rs + pts.col(2) * rc;
    pts.col(0) = x;
    pts.col(2) = z;
  };
  apply(c, s);

  // Sign tie-break: keep the orientation with non-negative x-sum over the
  // first half of the points; determinism across platforms.
  const Eigen::Index half = n / 2;
  if (pts.col(0).head(half).sum() < 0.0) apply(-1.0, 0.0);

  return out;
}

}  // namespace geomreid
