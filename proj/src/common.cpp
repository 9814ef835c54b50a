#include "geomreid/common.hpp"

#include <algorithm>
#include <cmath>

namespace geomreid {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::malformed_header: return "MalformedHeader";
    case Errc::unsupported_property: return "UnsupportedProperty";
    case Errc::truncated_body: return "TruncatedBody";
    case Errc::parse_error: return "ParseError";
    case Errc::duplicate_sequence_id: return "DuplicateSequenceId";
    case Errc::missing_file: return "MissingFile";
    case Errc::io_error: return "IoError";
    case Errc::invalid_frame: return "InvalidFrame";
    case Errc::invalid_sequence: return "InvalidSequence";
    case Errc::invalid_arg: return "InvalidArg";
    case Errc::empty_projection: return "EmptyProjection";
    case Errc::too_few_frames: return "TooFewFrames";
    case Errc::no_color_data: return "NoColorData";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::normalization_degenerate: return "NormalizationDegenerate";
    case Errc::singleton_label: return "SingletonLabel";
    case Errc::insufficient_data: return "InsufficientData";
    case Errc::too_few_surgeries: return "TooFewSurgeries";
    case Errc::no_positive: return "NoPositive";
    case Errc::unknown_probe_identity: return "UnknownProbeIdentity";
    case Errc::incomplete_table: return "IncompleteTable";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::non_differentiable_path: return "NonDifferentiablePath";
  }
  return "UnknownError";
}

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) raise(Errc::invalid_arg, "percentile of empty range");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p / 100.0;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

Eigen::Vector3d hsv_to_rgb(double h, double s, double v) {
  h -= std::floor(h);  // wrap hue
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1)      { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else             { r = c; b = x; }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

HueSat rgb_to_hue_sat(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double c = mx - mn;
  HueSat out;
  out.sat = mx > 0.0 ? c / mx : 0.0;
  if (c <= 0.0) {
    out.hue = 0.0;
    return out;
  }
  double hp;
  if (mx == r)      hp = std::fmod((g - b) / c, 6.0);
  else if (mx == g) hp = (b - r) / c + 2.0;
  else              hp = (r - g) / c + 4.0;
  if (hp < 0) hp += 6.0;
  out.hue = hp / 6.0;
  if (out.hue >= 1.0) out.hue -= 1.0;
  return out;
}

}  // namespace geomreid
