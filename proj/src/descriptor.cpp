#include "geomreid/descriptor.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "geomreid/common.hpp"

namespace geomreid {

namespace {

struct Silhouette {
  Eigen::Index rmin = 0, rmax = -1;
  int count = 0;
};

Silhouette silhouette_rows(const ProjectedImages& img) {
  Silhouette s;
  s.rmin = img.rows();
  s.rmax = -1;
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index c = 0; c < img.cols(); ++c)
      if (img.valid(r, c)) {
        s.rmin = std::min(s.rmin, r);
        s.rmax = std::max(s.rmax, r);
        ++s.count;
      }
  return s;
}

// Normalized autocorrelation peak over the lag window; 0 for flat signals.
double gait_frequency(const std::vector<double>& width, double fps) {
  const int n = static_cast<int>(width.size());
  const double mean = pairwise_mean(width);
  double var = 0.0;
  for (double w : width) var += (w - mean) * (w - mean);
  if (var < 1e-18) return 0.0;
  const int lag_min = std::max(1, static_cast<int>(std::ceil(fps / 1.5)));
  const int lag_max = std::min(n - 2, static_cast<int>(std::floor(fps / 0.5)));
  if (lag_min > lag_max) return 0.0;
  int best = -1;
  double best_r = -2.0;
  for (int lag = lag_min; lag <= lag_max; ++lag) {
    double acc = 0.0;
    for (int t = 0; t + lag < n; ++t) acc += (width[t] - mean) * (width[t + lag] - mean);
    const double r = acc / var;
    if (r > best_r) {
      best_r = r;
      best = lag;
    }
  }
  if (best < 0 || best_r <= 0.0) return 0.0;
  return fps / static_cast<double>(best);
}

}  // namespace

const char* descriptor_kind_name(DescriptorKind k) {
  return k == DescriptorKind::geometric ? "geometric" : "appearance";
}

DescriptorKind parse_descriptor_kind(const std::string& s) {
  if (s == "geometric") return DescriptorKind::geometric;
  if (s == "appearance") return DescriptorKind::appearance;
  raise(Errc::invalid_arg, "unknown descriptor kind '" + s + "'");
}

Descriptor geometric_descriptor(std::span<const ProjectedImages> seq, double fps) {
  if (seq.size() < 2) raise(Errc::too_few_frames, "geometric descriptor needs at least 2 frames");
  const Eigen::Index h = seq[0].rows(), w = seq[0].cols();
  const double px_w = pixel_width_m(w);
  const double px_area = px_w * pixel_height_m(h);

  std::vector<double> ys;  // pooled valid-pixel center heights
  std::vector<double> widths, areas;
  Eigen::Matrix<double, kDepthBands, 1> band_sum = Eigen::Matrix<double, kDepthBands, 1>::Zero();
  Eigen::Matrix<double, kDepthBands, 1> band_cnt = Eigen::Matrix<double, kDepthBands, 1>::Zero();

  for (const ProjectedImages& img : seq) {
    const Silhouette s = silhouette_rows(img);
    if (s.count == 0) continue;
    const Eigen::Index span = s.rmax - s.rmin + 1;
    double xmin = 1e9, xmax = -1e9;
    for (Eigen::Index r = 0; r < h; ++r)
      for (Eigen::Index c = 0; c < w; ++c) {
        if (!img.valid(r, c)) continue;
        ys.push_back(pixel_center_y(r, h));
        const double x = pixel_center_x(c, w);
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        const Eigen::Index band = std::min<Eigen::Index>(kDepthBands - 1, (r - s.rmin) * kDepthBands / span);
        band_sum(band) += img.depth(r, c);
        band_cnt(band) += 1.0;
      }
    widths.push_back(xmax - xmin + px_w);
    areas.push_back(static_cast<double>(s.count) * px_area);
  }
  if (ys.empty()) raise(Errc::empty_projection, "no valid pixels in sequence");

  Descriptor d;
  d.kind = DescriptorKind::geometric;
  d.values = Eigen::VectorXd::Zero(kGeometricDim);
  const double h99 = percentile(ys, 99.0);
  d.values(0) = h99;
  d.values(1) = percentile(ys, 50.0);

  // Width proxies: per-frame x-extent of pixels inside a relative height band.
  auto band_width_p95 = [&](double lo_frac, double hi_frac) {
    std::vector<double> per_frame;
    for (const ProjectedImages& img : seq) {
      double xmin = 1e9, xmax = -1e9;
      for (Eigen::Index r = 0; r < h; ++r) {
        const double y = pixel_center_y(r, h);
        if (y < lo_frac * h99 || y > hi_frac * h99) continue;
        for (Eigen::Index c = 0; c < w; ++c)
          if (img.valid(r, c)) {
            const double x = pixel_center_x(c, w);
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
          }
      }
      if (xmax >= xmin) per_frame.push_back(xmax - xmin + px_w);
    }
    return per_frame.empty() ? 0.0 : percentile(per_frame, 95.0);
  };
  d.values(2) = band_width_p95(0.75, 0.85);
  d.values(3) = band_width_p95(0.45, 0.55);

  d.values(4) = pairwise_mean(areas);
  d.values(5) = areas.empty() ? 0.0 : *std::max_element(areas.begin(), areas.end());
  d.values(6) = gait_frequency(widths, fps);
  d.values(7) = widths.empty() ? 0.0 : *std::max_element(widths.begin(), widths.end()) -
                                           *std::min_element(widths.begin(), widths.end());
  for (int b = 0; b < kDepthBands; ++b)
    d.values(8 + b) = band_cnt(b) > 0 ? band_sum(b) / band_cnt(b) : 0.0;
  return d;
}

std::array<BandRows, 3> appearance_bands(const ProjectedImages& img) {
  const Silhouette s = silhouette_rows(img);
  std::array<BandRows, 3> bands{};
  if (s.count == 0) return bands;  // all empty
  const double span = static_cast<double>(s.rmax - s.rmin + 1);
  auto rows_in = [&](double lo_frac, double hi_frac) {
    BandRows b;
    b.lo = s.rmin + static_cast<Eigen::Index>(std::floor(lo_frac * span));
    b.hi = s.rmin + static_cast<Eigen::Index>(std::ceil(hi_frac * span)) - 1;
    b.lo = std::clamp<Eigen::Index>(b.lo, s.rmin, s.rmax);
    b.hi = std::clamp<Eigen::Index>(b.hi, s.rmin, s.rmax);
    return b;
  };
  bands[0] = rows_in(0.00, 0.15);  // head
  bands[1] = rows_in(0.25, 0.75);  // torso
  bands[2] = rows_in(0.85, 1.00);  // feet
  return bands;
}

int hard_hue_bin(double r, double g, double b, double gray_sat_threshold) {
  const HueSat hs = rgb_to_hue_sat(r, g, b);
  if (hs.sat < gray_sat_threshold) return 0;
  return 1 + std::min(kHueBins - 2, static_cast<int>(std::floor(hs.hue * (kHueBins - 1))));
}

namespace {

double circ_dist(double a, double b) {
  double d = std::abs(a - b);
  return std::min(d, 1.0 - d);
}

}  // namespace

Eigen::VectorXd soft_hue_weights(double r, double g, double b, double tau) {
  const HueSat hs = rgb_to_hue_sat(r, g, b);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(kHueBins);
  const double w_gray = std::exp(-hs.sat / tau);
  w(0) = w_gray;
  double total = 0.0;
  Eigen::VectorXd e(kHueBins - 1);
  for (int j = 0; j < kHueBins - 1; ++j) {
    const double c = (j + 0.5) / (kHueBins - 1);
    const double d = circ_dist(hs.hue, c);
    e(j) = std::exp(-0.5 * (d / tau) * (d / tau));
    total += e(j);
  }
  for (int j = 0; j < kHueBins - 1; ++j) w(1 + j) = (1.0 - w_gray) * e(j) / total;
  return w;
}

Eigen::Matrix<double, kHueBins, 3> soft_hue_weights_grad(double r, double g, double b, double tau) {
  Eigen::Matrix<double, kHueBins, 3> grad = Eigen::Matrix<double, kHueBins, 3>::Zero();

  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double chroma = mx - mn;

  // d(max)/d(channel) and d(min)/d(channel) as indicator rows (first occurrence).
  Eigen::RowVector3d dmx = Eigen::RowVector3d::Zero(), dmn = Eigen::RowVector3d::Zero();
  const double ch[3] = {r, g, b};
  int imx = 0, imn = 0;
  for (int i = 1; i < 3; ++i) {
    if (ch[i] > ch[imx]) imx = i;
    if (ch[i] < ch[imn]) imn = i;
  }
  dmx(imx) = 1.0;
  dmn(imn) = 1.0;
  const Eigen::RowVector3d dchroma = dmx - dmn;

  double sat = 0.0, hue = 0.0;
  Eigen::RowVector3d dsat = Eigen::RowVector3d::Zero(), dhue = Eigen::RowVector3d::Zero();
  if (mx > 1e-12) {
    sat = chroma / mx;
    dsat = (dchroma * mx - chroma * dmx) / (mx * mx);
  }
  if (chroma > 1e-9) {
    double num;
    Eigen::RowVector3d dnum;
    double offset;
    if (imx == 0) { num = g - b; dnum << 0, 1, -1; offset = num < 0 ? 6.0 : 0.0; }
    else if (imx == 1) { num = b - r; dnum << -1, 0, 1; offset = 2.0; }
    else { num = r - g; dnum << 1, -1, 0; offset = 4.0; }
    hue = (num / chroma + offset) / 6.0;
    if (hue >= 1.0) hue -= 1.0;
    dhue = (dnum * chroma - num * dchroma) / (chroma * chroma) / 6.0;
  }
  // else: gray singularity; hue gradient contributes nothing (weight prefactor is 0)

  const double w_gray = std::exp(-sat / tau);
  const Eigen::RowVector3d dw_gray = -w_gray / tau * dsat;
  grad.row(0) = dw_gray;

  double total = 0.0;
  Eigen::VectorXd e(kHueBins - 1), de_dh(kHueBins - 1);
  double dtotal_dh = 0.0;
  for (int j = 0; j < kHueBins - 1; ++j) {
    const double c = (j + 0.5) / (kHueBins - 1);
    double d = hue - c;
    d -= std::round(d);  // signed circular difference in [-0.5, 0.5]
    e(j) = std::exp(-0.5 * (d / tau) * (d / tau));
    de_dh(j) = e(j) * (-d / (tau * tau));
    total += e(j);
    dtotal_dh += de_dh(j);
  }
  for (int j = 0; j < kHueBins - 1; ++j) {
    const double q = e(j) / total;
    const double dq_dh = (de_dh(j) * total - e(j) * dtotal_dh) / (total * total);
    // w_j = (1 - w_gray) * q
    grad.row(1 + j) = -dw_gray * q + (1.0 - w_gray) * dq_dh * dhue;
  }
  return grad;
}

Descriptor appearance_descriptor(std::span<const ProjectedImages> seq, const AppearanceConfig& cfg) {
  bool any_color = false;
  for (const ProjectedImages& img : seq)
    if (img.has_color) any_color = true;
  if (seq.empty() || !any_color) raise(Errc::no_color_data, "appearance descriptor needs colored frames");

  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(3, kHueBins);
  Eigen::Vector3d frames_with_band = Eigen::Vector3d::Zero();

  for (const ProjectedImages& img : seq) {
    const auto bands = appearance_bands(img);
    for (int bi = 0; bi < 3; ++bi) {
      const BandRows& band = bands[bi];
      Eigen::VectorXd hist = Eigen::VectorXd::Zero(kHueBins);
      double n = 0.0;
      for (Eigen::Index r = band.lo; r <= band.hi; ++r)
        for (Eigen::Index c = 0; c < img.cols(); ++c) {
          if (!img.valid(r, c)) continue;
          if (cfg.binning == HistogramBinning::hard) {
            hist(hard_hue_bin(img.color[0](r, c), img.color[1](r, c), img.color[2](r, c),
                              cfg.gray_sat_threshold)) += 1.0;
          } else {
            hist += soft_hue_weights(img.color[0](r, c), img.color[1](r, c), img.color[2](r, c), cfg.tau);
          }
          n += 1.0;
        }
      if (n > 0.0) {
        acc.row(bi) += hist.transpose() / n;  // per-frame L1 normalization
        frames_with_band(bi) += 1.0;
      }
    }
  }

  Descriptor d;
  d.kind = DescriptorKind::appearance;
  d.values = Eigen::VectorXd::Zero(kAppearanceDim);
  for (int bi = 0; bi < 3; ++bi) {
    if (frames_with_band(bi) > 0.0) {
      Eigen::VectorXd h = acc.row(bi).transpose() / frames_with_band(bi);
      const double s = h.sum();
      if (s > 0.0) h /= s;
      d.values.segment(bi * kHueBins, kHueBins) = h;
    }
  }
  return d;
}

void save_descriptor_cache(const std::filesystem::path& path,
                           std::span<const std::pair<std::string, Descriptor>> entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(Errc::io_error, "cannot write '" + path.string() + "'");
  char buf[40];
  for (const auto& [sid, d] : entries) {
    out << sid << ',' << descriptor_kind_name(d.kind);
    for (Eigen::Index i = 0; i < d.values.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", d.values(i));
      out << ',' << buf;
    }
    out << '\n';
  }
}

std::vector<std::pair<std::string, Descriptor>> load_descriptor_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::missing_file, "cannot open '" + path.string() + "'");
  std::vector<std::pair<std::string, Descriptor>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string sid, kind, tok;
    if (!std::getline(ss, sid, ',') || !std::getline(ss, kind, ','))
      raise(Errc::parse_error, "bad descriptor cache row");
    Descriptor d;
    d.kind = parse_descriptor_kind(kind);
    std::vector<double> vals;
    while (std::getline(ss, tok, ',')) {
      double v = 0.0;
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (res.ec != std::errc{}) raise(Errc::parse_error, "bad descriptor value '" + tok + "'");
      vals.push_back(v);
    }
    const int want = d.kind == DescriptorKind::geometric ? kGeometricDim : kAppearanceDim;
    if (static_cast<int>(vals.size()) != want)
      raise(Errc::parse_error, "descriptor row for '" + sid + "' has wrong length");
    d.values = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    out.emplace_back(sid, std::move(d));
  }
  return out;
}

}  // namespace geomreid
